"""Offline design of the projection box, disturbance budgets and surface rate.

Pipeline (step numbers follow the design procedure; steps 7-8 do not exist):

1. attainable virtual-control extremes and the operating soft-saturation box
2. check the ideal allocator does not saturate over that box
3. effectiveness threshold gamma
4. finite sample of the admissible effectiveness set
5. projection box around the ideal allocator
6. disturbance budgets rho
9. transient constants (k, xi) of A11
10. expert envelopes (inputs)
11. sign check on W1
12. W2
13. surface rate lambda_bar
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .numerics import NumericsError, box_lp_max, right_pseudo_inverse, transition_decay_constants
from .plant import ActuatorBank, LinearPlant, validate_assumptions
from .projection import DEFAULT_ZETA_FRAC, ProjectionBounds


class DesignError(ValueError):
    """A design step rejected its inputs."""

    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step
        self.message = message


LAMBDA_DELTA = 1e-6


def ideal_theta(B) -> np.ndarray:
    """``theta_I*`` (r x m), the ideal parameters at full effectiveness."""
    return right_pseudo_inverse(B).T


def virtual_bounds(plant_or_B, u_max) -> np.ndarray:
    """Per-channel extremes ``M_i = max v_i`` subject to ``|B^+ v| <= u_max``."""
    B = plant_or_B.B if isinstance(plant_or_B, LinearPlant) else np.atleast_2d(plant_or_B)
    u_max = np.asarray(u_max, dtype=float)
    Bp = right_pseudo_inverse(B)
    r = B.shape[0]
    M = np.empty(r)
    for i in range(r):
        c = np.zeros(r)
        c[i] = 1.0
        try:
            M[i] = box_lp_max(c, Bp, -u_max, u_max)
        except NumericsError as exc:
            raise DesignError(1, f"degenerate attainable set: {exc}") from exc
    if np.any(M <= 0):
        raise DesignError(1, f"degenerate attainable set: M = {M}")
    return M


def operating_bounds(B, u_max, M_attain, scale: float = 0.9) -> np.ndarray:
    """Soft-saturation box inside the attainable set.

    Uses the largest cube whose every corner is reachable by the
    pseudo-inverse (``sum_i |B^+_ji| M <= u_max_j``), scaled by ``scale`` to
    leave slack for the projection box, and capped by the per-channel extremes.
    """
    Bp = right_pseudo_inverse(B)
    u_max = np.asarray(u_max, dtype=float)
    cube = float(np.min(u_max / np.abs(Bp).sum(axis=1)))
    return scale * np.minimum(cube, np.asarray(M_attain, dtype=float))


def omega_theta_contains(theta_v, M, u_max, tol: float = 1e-12) -> bool:
    """True when ``theta_v^T v`` stays within ``u_max`` at every corner of ``[-M, M]``."""
    theta_v = np.asarray(theta_v, dtype=float)
    M = np.asarray(M, dtype=float)
    u_max = np.asarray(u_max, dtype=float)
    worst = np.zeros(theta_v.shape[1])
    for signs in itertools.product((-1.0, 1.0), repeat=M.size):
        worst = np.maximum(worst, np.abs(theta_v.T @ (np.array(signs) * M)))
    return bool(np.all(worst <= u_max + tol))


def gamma_threshold(B, M, epsilon: float):
    """Lower effectiveness threshold; returns ``(gamma, gamma_B, gamma_M)``."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    M = np.asarray(M, dtype=float)
    gamma_M = M ** 2 / np.max(M) ** 2 - epsilon
    if np.any(gamma_M <= 0):
        raise DesignError(3, f"epsilon={epsilon} too large: gamma_M = {gamma_M}")
    gamma_B = np.linalg.norm(B, axis=1) * np.linalg.norm(right_pseudo_inverse(B), 2)
    gamma = float(np.max(1.0 - np.sqrt(gamma_M / gamma_B)))
    return gamma, gamma_B, gamma_M


def sample_lambda_set(gamma: float, m: int, grid_density: int, seed: int = 0,
                      delta: float = LAMBDA_DELTA) -> list[np.ndarray]:
    """Vertices of ``(gamma, 1]^m`` plus ``grid_density`` random interior diagonals."""
    if not 0 <= gamma < 1:
        raise DesignError(4, f"gamma must lie in [0, 1), got {gamma}")
    low = min(gamma + delta, 1.0)
    samples = [np.array(v) for v in itertools.product((low, 1.0), repeat=m)]
    rng = np.random.default_rng(seed)
    samples.extend(rng.uniform(low, 1.0, size=(grid_density, m)))
    return samples


def necessary_condition_rows(B, Lam_diag, theta_v) -> np.ndarray:
    """Squared row norms ``||row_i(B Lambda theta^T - I)||^2``."""
    B = np.asarray(B, dtype=float)
    D = (B * Lam_diag) @ np.asarray(theta_v).T - np.eye(B.shape[0])
    return np.sum(D ** 2, axis=1)


def boundary_distance(B, M, epsilon: float, lambda_samples, theta_I_star):
    """Exact distance from ``theta_I*`` to the boundary of the sampled constraint set.

    For fixed ``(Lambda, i)`` the constraint reads ``||theta b - e_i|| <= sqrt(c_i)``
    with ``b = Lambda B_i^T``; it depends on ``theta`` only through ``theta b``,
    so the nearest boundary point is ``(sqrt(c_i) - ||theta_I* b - e_i||)/||b||``
    away in Frobenius norm. Returns ``(R, (sample_index, row))``.
    """
    B = np.asarray(B, dtype=float)
    M = np.asarray(M, dtype=float)
    c = M ** 2 / np.max(M) ** 2 - epsilon
    r = B.shape[0]
    eye = np.eye(r)
    best, arg = np.inf, None
    for idx, lam in enumerate(lambda_samples):
        BL = B * lam
        for i in range(r):
            b = BL[i]
            a = theta_I_star @ b - eye[i]
            d = (np.sqrt(c[i]) - np.linalg.norm(a)) / np.linalg.norm(b)
            if d < best:
                best, arg = float(d), (idx, i)
    return best, arg


def projection_boundary_opt(B, M, epsilon: float, lambda_samples, theta_I_star,
                            zeta_frac: float = DEFAULT_ZETA_FRAC, u_max=None,
                            R_min: float = 1e-6):
    """Projection box: the cube inscribed in the R-ball around ``theta_I*``.

    Columns whose cube would let ``theta^T v`` saturate an actuator over
    ``[-M, M]`` are shrunk until they do not.
    """
    theta_I_star = np.asarray(theta_I_star, dtype=float)
    R, _ = boundary_distance(B, M, epsilon, lambda_samples, theta_I_star)
    if R < R_min:
        raise DesignError(5, f"no usable neighbourhood of theta_I*: R = {R:.3g}")
    r, m = theta_I_star.shape
    half = np.full(m, R / np.sqrt(r * m))
    if u_max is not None:
        M = np.asarray(M, dtype=float)
        slack = np.asarray(u_max, dtype=float) - np.abs(theta_I_star).T @ M
        if np.any(slack <= 0):
            raise DesignError(5, "theta_I* saturates an actuator over the soft-saturation box")
        half = np.minimum(half, slack / M.sum())
    h = np.broadcast_to(half, (r, m))
    bounds = ProjectionBounds.from_box(theta_I_star - h, theta_I_star + h, zeta_frac)
    return R, bounds


def rho_budget(B, lambda_samples, bounds: ProjectionBounds, M, L_bar):
    """Worst row norm of ``B Lambda theta^T - I`` over the box and the samples.

    Each squared row norm splits into independent per-row-of-theta terms, each
    the square of an affine function of that row, so the maximum over the box
    is attained at the end points of each affine range.
    """
    B = np.asarray(B, dtype=float)
    M = np.asarray(M, dtype=float)
    L_bar = np.broadcast_to(np.asarray(L_bar, dtype=float), M.shape)
    r = B.shape[0]
    eye = np.eye(r)
    lo, hi = bounds.theta_min, bounds.theta_max
    rho_bar_sq = np.zeros(r)
    for lam in lambda_samples:
        BL = B * lam
        for i in range(r):
            b = BL[i]
            lin_hi = np.maximum(lo * b, hi * b).sum(axis=1) - eye[i]
            lin_lo = np.minimum(lo * b, hi * b).sum(axis=1) - eye[i]
            val = np.sum(np.maximum(lin_hi ** 2, lin_lo ** 2))
            rho_bar_sq[i] = max(rho_bar_sq[i], val)
    rho_bar = np.sqrt(rho_bar_sq)
    rho = rho_bar * np.max(M) + L_bar
    return rho_bar, rho, bool(np.all(rho < M))


@dataclass
class Envelopes:
    """Expert bounds on initial state, reference and disturbance."""

    x1_bar: float
    x2_bar: float
    r_bar_i: np.ndarray
    rdot_bar_i: np.ndarray
    L_bar_i: np.ndarray
    r_bar: float | None = None

    def __post_init__(self):
        self.r_bar_i = np.asarray(self.r_bar_i, dtype=float)
        self.rdot_bar_i = np.asarray(self.rdot_bar_i, dtype=float)
        self.L_bar_i = np.asarray(self.L_bar_i, dtype=float)
        if self.r_bar is None:
            self.r_bar = float(np.linalg.norm(self.r_bar_i))


def smc_feasibility(plant: LinearPlant, M, rho, x1_bar, x2_bar, r_bar, r_bar_i,
                    rdot_bar_i, k: float, xi: float, lambda_cap: float = 50.0,
                    margin: float = 0.9):
    """Evaluate ``W1 + lambda_bar W2 <= 0`` per channel.

    Returns ``(W1, W2, lambda_bar, feasible)``; ``lambda_bar`` is
    ``margin * min(-W1/W2)`` capped at ``lambda_cap`` (nan when infeasible).
    """
    M = np.asarray(M, dtype=float)
    rho = np.asarray(rho, dtype=float)
    r_bar_i = np.asarray(r_bar_i, dtype=float)
    rdot_bar_i = np.asarray(rdot_bar_i, dtype=float)
    K2 = k / xi * np.linalg.norm(plant.A12, 2)
    coupling = np.abs(plant.A2[:, : plant.n - plant.r]).sum(axis=1)
    W1 = (coupling * (k * x1_bar + (1 + K2) * x2_bar + K2 * r_bar + r_bar_i)
          + rdot_bar_i - M + rho)
    W2 = x2_bar + (2 / np.pi) * r_bar_i
    feasible = bool(np.all(W1 < 0))
    if not feasible:
        return W1, W2, float("nan"), False
    with np.errstate(divide="ignore"):
        ratios = np.where(W2 > 0, -W1 / W2, np.inf)
    lam = min(lambda_cap, margin * float(np.min(ratios)))
    return W1, W2, lam, True


@dataclass
class DesignOptions:
    epsilon: float = 1e-3
    zeta_frac: float = DEFAULT_ZETA_FRAC
    lambda_density: int = 200
    seed: int = 0
    M: np.ndarray | None = None          # explicit operating box; None -> operating_bounds
    M_scale: float = 0.9
    lambda_cap: float = 50.0
    R_min: float = 1e-6


@dataclass
class DesignReport:
    M_attainable: np.ndarray = None
    M: np.ndarray = None
    gamma: float = float("nan")
    gamma_B: np.ndarray = None
    gamma_M: np.ndarray = None
    epsilon: float = float("nan")
    theta_I_star: np.ndarray = None
    lambda_sample_count: int = 0
    R: float = float("nan")
    bounds: ProjectionBounds | None = None
    rho_bar: np.ndarray = None
    rho: np.ndarray = None
    rho_ok: bool = False
    k: float = float("nan")
    xi: float = float("nan")
    K2: float = float("nan")
    W1: np.ndarray = None
    W2: np.ndarray = None
    lambda_bar: float = float("nan")
    feasible: bool = False
    failed_step: int | None = None
    message: str = ""
    decisions: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def conv(x):
            if isinstance(x, np.ndarray):
                return x.tolist()
            if isinstance(x, (np.floating, np.integer)):
                return x.item()
            return x

        out = {}
        for key in ("feasible", "failed_step", "message", "M_attainable", "M", "epsilon",
                    "gamma", "gamma_B", "gamma_M", "lambda_sample_count", "theta_I_star"):
            out[key] = conv(getattr(self, key))
        # The same matrix in the u-from-v layout (m x r), B^T (B B^T)^-1.
        out["pseudo_inverse"] = None if self.theta_I_star is None else self.theta_I_star.T.tolist()
        out["R"] = conv(self.R)
        if self.bounds is not None:
            out["theta_min"] = self.bounds.theta_min.tolist()
            out["theta_max"] = self.bounds.theta_max.tolist()
            out["zeta"] = self.bounds.zeta.tolist()
        for key in ("rho_bar", "rho", "rho_ok", "k", "xi", "K2", "W1", "W2", "lambda_bar"):
            out[key] = conv(getattr(self, key))
        out["decisions"] = list(self.decisions)
        return out

    def summary(self) -> str:
        fmt = lambda a: "n/a" if a is None else np.array2string(np.asarray(a), precision=4)
        lines = [
            f"feasible: {self.feasible}"
            + ("" if self.feasible else f" (failed at step {self.failed_step}: {self.message})"),
            f"M attainable: {fmt(self.M_attainable)}   M operating: {fmt(self.M)}",
            f"gamma: {self.gamma:.4f}  (Lambda samples: {self.lambda_sample_count})",
            f"R: {self.R:.5g}",
            f"rho_bar: {fmt(self.rho_bar)}  rho: {fmt(self.rho)}",
            f"k: {self.k:.4g}  xi: {self.xi:.4g}  K2: {self.K2:.4g}",
            f"W1: {fmt(self.W1)}  W2: {fmt(self.W2)}  lambda_bar: {self.lambda_bar:.4g}",
        ]
        return "\n".join(lines)


def run_pipeline(plant: LinearPlant, actuators: ActuatorBank | np.ndarray,
                 envelopes: Envelopes, options: DesignOptions | None = None) -> DesignReport:
    """Run the whole design; infeasibility is reported, not raised.

    Rejections inside a step (``DesignError``) are caught and recorded with the
    step index, so the caller always gets a report.
    """
    opt = options or DesignOptions()
    u_max = actuators.u_max if isinstance(actuators, ActuatorBank) else np.asarray(actuators, float)
    rep = DesignReport(epsilon=opt.epsilon)
    log = rep.decisions

    assumptions = validate_assumptions(plant)
    if not assumptions.ok:
        rep.failed_step, rep.message = 0, "plant assumptions violated: " + assumptions.summary()
        return rep
    if isinstance(actuators, ActuatorBank) and np.any(actuators.u_max < actuators.upper) | np.any(
            actuators.u_max < -actuators.lower):
        log.append("asymmetric actuator limits symmetrised to the inner magnitude "
                   f"{np.round(u_max, 6).tolist()} rad for set computations")

    try:
        # Step 1
        rep.M_attainable = virtual_bounds(plant.B, u_max)
        if opt.M is None:
            rep.M = operating_bounds(plant.B, u_max, rep.M_attainable, opt.M_scale)
            log.append(f"operating box: {opt.M_scale} x largest pseudo-inverse-reachable cube")
        else:
            rep.M = np.asarray(opt.M, dtype=float)
            log.append("operating box supplied by configuration")
            if np.any(rep.M > rep.M_attainable + 1e-12) or np.any(rep.M <= 0):
                raise DesignError(1, f"operating box {rep.M} not within attainable {rep.M_attainable}")

        # Step 2
        rep.theta_I_star = ideal_theta(plant.B)
        if not omega_theta_contains(rep.theta_I_star, rep.M, u_max):
            raise DesignError(2, "ideal allocator saturates an actuator at a corner of [-M, M]")

        # Steps 3-4
        rep.gamma, rep.gamma_B, rep.gamma_M = gamma_threshold(plant.B, rep.M, opt.epsilon)
        samples = sample_lambda_set(rep.gamma, plant.m, opt.lambda_density, opt.seed)
        rep.lambda_sample_count = len(samples)
        log.append(f"effectiveness set sampled with {len(samples)} diagonals "
                   f"({2 ** plant.m} vertices + {opt.lambda_density} interior, seed {opt.seed})")

        # Step 5
        rep.R, rep.bounds = projection_boundary_opt(
            plant.B, rep.M, opt.epsilon, samples, rep.theta_I_star, opt.zeta_frac, u_max,
            opt.R_min)
        if not rep.bounds.strictly_inside_inner(rep.theta_I_star):
            raise DesignError(5, "theta_I* is not strictly inside the inner projection box")

        # Step 6
        rep.rho_bar, rep.rho, rep.rho_ok = rho_budget(
            plant.B, samples, rep.bounds, rep.M, envelopes.L_bar_i)
        if not rep.rho_ok:
            log.append("rho >= M on some channel; the step-11 check will reject it")

        # Step 9
        rep.k, rep.xi = transition_decay_constants(plant.A11)
        rep.K2 = rep.k / rep.xi * float(np.linalg.norm(plant.A12, 2))
        log.append("k, xi certified on a dense time grid (xi = 0.99 decay rate, k inflated 5%)")

        # Steps 10-13
        rep.W1, rep.W2, rep.lambda_bar, ok = smc_feasibility(
            plant, rep.M, rep.rho, envelopes.x1_bar, envelopes.x2_bar, envelopes.r_bar,
            envelopes.r_bar_i, envelopes.rdot_bar_i, rep.k, rep.xi, opt.lambda_cap)
        if not ok:
            bad = int(np.argmax(rep.W1))
            raise DesignError(11, f"W1 >= 0 on channel {bad} (W1 = {rep.W1[bad]:.4g})")
    except DesignError as exc:
        rep.failed_step, rep.message = exc.step, exc.message
        return rep

    rep.feasible = True
    return rep
