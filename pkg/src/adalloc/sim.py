"""Fixed-step closed-loop simulation of SMC + control allocation + actuators.

Per step ``t_k``:

1. measure ``x + noise``
2. sliding-mode command, then soft saturation to ``[-M, M]``
3. allocate (adaptive ``theta_v^T v`` or pseudo-inverse ``B^+ v``)
4. hard clamp to ``+-u_max``, counting violations
5. RK4 over ``[t_k, t_k + dt]`` for the plant and actuators with ``u_cmd``
   held and the effectiveness frozen at its ``t_k`` value
6. Euler update of the allocator filter, reference model and ``theta_v``
   from start-of-step values, followed by a safety clip into the box

Row ``k`` of the trace holds the signals at ``t_k`` before the update.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .allocator import AllocatorConfig, adaptive_law
from .numerics import right_pseudo_inverse
from .plant import ActuatorBank, DisturbanceSpec, FaultSchedule, LinearPlant, NoiseSpec
from .smc import ReferenceSignal, SmcConfig, control_law, sliding_surface

DIVERGENCE_THRESHOLD = 50.0
ALLOCATORS = ("adaptive", "pseudo_inverse")


@dataclass
class Scenario:
    plant: LinearPlant
    actuators: ActuatorBank
    allocator: str
    alloc_config: AllocatorConfig
    smc: SmcConfig
    reference: ReferenceSignal
    fault: FaultSchedule
    disturbance: DisturbanceSpec
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    duration: float = 15.0
    dt: float = 1e-3
    x0: np.ndarray | None = None
    theta0: np.ndarray | None = None      # None -> ideal allocator
    freeze_theta: bool = False
    metric_window: tuple | None = None    # None -> last 20% of the run
    name: str = "scenario"

    def __post_init__(self):
        if self.allocator not in ALLOCATORS:
            raise ValueError(f"allocator must be one of {ALLOCATORS}, got {self.allocator!r}")
        if self.dt <= 0 or self.duration < self.dt:
            raise ValueError("need dt > 0 and duration >= dt")
        p = self.plant
        self.x0 = np.zeros(p.n) if self.x0 is None else np.asarray(self.x0, dtype=float)
        if self.x0.shape != (p.n,):
            raise ValueError(f"x0 must have length {p.n}")
        if self.actuators.lower.shape != (p.m,):
            raise ValueError(f"actuator limits must have length {p.m}")
        if self.smc.A2.shape != (p.r, p.n):
            raise ValueError("SMC A2 block does not match the plant")
        if not np.allclose(self.alloc_config.B, p.B):
            raise ValueError("allocator B does not match the plant")
        if self.disturbance.amplitude.shape != (p.r,):
            raise ValueError(f"disturbance must have {p.r} channels")
        if self.theta0 is not None:
            self.theta0 = np.asarray(self.theta0, dtype=float)
            if not self.alloc_config.bounds.contains(self.theta0):
                raise ValueError("theta0 lies outside the projection box")

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))

    def window(self) -> tuple:
        return self.metric_window or (0.8 * self.duration, self.duration)


def trace_header(n: int, r: int, m: int) -> list[str]:
    cols = ["t"] + [f"x{i}" for i in range(n)]
    for name in ("y", "y_m", "e", "v", "s"):
        cols += [f"{name}{i}" for i in range(r)]
    cols += [f"u_cmd{j}" for j in range(m)] + [f"u_act{j}" for j in range(m)]
    # vec(theta_v) in column-major order: theta_ij -> index i + j*r
    cols += [f"theta{i}_{j}" for j in range(m) for i in range(r)]
    cols += ["soft_sat_count", "hard_clamp_count"]
    return cols


@dataclass
class Trace:
    header: list
    data: np.ndarray
    alloc_error: np.ndarray         # ||B Lambda u_cmd + d - v|| per row
    alloc_error_nodist: np.ndarray  # ||B Lambda u_cmd - v|| per row
    n: int
    r: int
    m: int

    def col(self, name: str) -> np.ndarray:
        return self.data[:, self.header.index(name)]

    def block(self, prefix: str, count: int) -> np.ndarray:
        start = self.header.index(f"{prefix}0")
        return self.data[:, start:start + count]

    @property
    def t(self):
        return self.data[:, 0]

    @property
    def x(self):
        return self.data[:, 1:1 + self.n]

    @property
    def e(self):
        return self.block("e", self.r)

    def theta(self, k: int) -> np.ndarray:
        start = self.header.index("theta0_0")
        return self.data[k, start:start + self.r * self.m].reshape(self.r, self.m, order="F")

    def thetas(self) -> np.ndarray:
        start = self.header.index("theta0_0")
        flat = self.data[:, start:start + self.r * self.m]
        return flat.reshape(-1, self.m, self.r).transpose(0, 2, 1)

    def to_csv(self, path, config: dict | None = None) -> str:
        """Write the trace; returns the config hash embedded in the first line."""
        cfg_text = json.dumps(config or {}, sort_keys=True, default=_json_default)
        digest = hashlib.sha256(cfg_text.encode()).hexdigest()
        with open(path, "w") as fh:
            fh.write(f"# config_sha256={digest}\n")
            fh.write(f"# config={cfg_text}\n")
            fh.write(",".join(self.header) + "\n")
            np.savetxt(fh, self.data, delimiter=",", fmt="%.10g")
        return digest


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj)}")


@dataclass
class Metrics:
    window: tuple
    tracking_rms: np.ndarray
    max_state_norm: float
    max_deflection_ratio: float
    alloc_error_rms: float
    alloc_error_rms_nodist: float
    soft_saturations: int
    hard_clamp_violations: int
    theta_clamp_events: int
    diverged: bool
    diverged_at: float | None
    final_e_norm: float
    steps: int

    def to_dict(self) -> dict:
        return {k: _json_default(v) if isinstance(v, (np.ndarray, np.generic)) else v
                for k, v in self.__dict__.items()}


def window_rms(t, values, window) -> float:
    """RMS of a scalar series (or of row norms of a 2-D series) over ``[t0, t1]``."""
    mask = (t >= window[0] - 1e-12) & (t <= window[1] + 1e-12)
    if not np.any(mask):
        return float("nan")
    vals = np.asarray(values)[mask]
    sq = vals ** 2 if vals.ndim == 1 else np.sum(vals ** 2, axis=1)
    return float(np.sqrt(np.mean(sq)))


def tracking_rms(trace: Trace, reference: ReferenceSignal, window) -> np.ndarray:
    mask = (trace.t >= window[0] - 1e-12) & (trace.t <= window[1] + 1e-12)
    n, r = trace.n, trace.r
    if not np.any(mask):
        return np.full(r, np.nan)
    x2 = trace.x[mask][:, n - r:]
    ref = np.array([reference(t) for t in trace.t[mask]])
    return np.sqrt(np.mean((x2 - ref) ** 2, axis=0))


def run_scenario(sc: Scenario) -> tuple[Trace, Metrics]:
    p = sc.plant
    n, m, r = p.n, p.m, p.r
    A, B = p.A, p.B
    cfg = sc.alloc_config
    A_m, ell = cfg.A_m, cfg.ell
    bounds = cfg.bounds
    adaptive = sc.allocator == "adaptive"
    Bp = right_pseudo_inverse(B)
    u_max = sc.actuators.u_max
    tau = sc.actuators.tau
    dt = sc.dt
    N = sc.steps
    smc = sc.smc
    ref = sc.reference
    dist = sc.disturbance

    noise = sc.noise.samples(N + 1, n)
    theta0 = Bp.T.copy() if sc.theta0 is None else sc.theta0.copy()
    theta = theta0 if adaptive else Bp.T.copy()
    y = np.zeros(r)
    y_m = np.zeros(r)
    x = sc.x0.copy()
    u_act = np.zeros(m)

    # One surface per run, anchored at the first measurement.
    x2_0 = (x + noise[0])[n - r:]
    smc_run = SmcConfig(smc.lambda_bar, smc.rho, smc.A2, smc.M, smc.phi, smc.t0, x2_0)

    header = trace_header(n, r, m)
    data = np.full((N + 1, len(header)), np.nan)
    aerr = np.full(N + 1, np.nan)
    aerr_nd = np.full(N + 1, np.nan)
    soft_total = 0
    hard_total = 0
    theta_clamps = 0
    diverged_at = None
    rows = 0

    def rhs(t, z, u_cmd, lam):
        xs = z[:n]
        dx = A @ xs
        if tau > 0:
            ua = z[n:]
            dx[n - r:] += B @ (lam * ua) + dist(t)
            return np.concatenate([dx, (u_cmd - ua) / tau])
        dx[n - r:] += B @ (lam * u_cmd) + dist(t)
        return dx

    for k in range(N + 1):
        t = k * dt
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_THRESHOLD:
            diverged_at = t
        x_meas = x + noise[k]
        r_t = ref.value(t)
        rdot_t = ref.derivative(t)
        v_raw = control_law(x_meas, r_t, rdot_t, t, smc_run)
        v = np.clip(v_raw, -smc.M, smc.M)
        soft_total += int(np.count_nonzero(v != v_raw))
        u_cmd = theta.T @ v if adaptive else Bp @ v
        over = np.abs(u_cmd) > u_max * (1 + 1e-12)
        hard_total += int(np.count_nonzero(over))
        u_cmd = np.clip(u_cmd, -u_max, u_max)
        if tau == 0:
            u_act = u_cmd
        s = sliding_surface(x_meas[n - r:], x2_0, r_t, t, smc.t0, smc.lambda_bar)

        lam = sc.fault.diag(t, m)
        d_t = dist(t)
        # Allocation error is judged on the allocator's own output, u_cmd.
        commanded = B @ (lam * u_cmd)
        aerr[k] = np.linalg.norm(commanded + d_t - v)
        aerr_nd[k] = np.linalg.norm(commanded - v)

        e = y - y_m
        row = data[k]
        row[0] = t
        row[1:1 + n] = x
        o = 1 + n
        for vec in (y, y_m, e, v, s):
            row[o:o + r] = vec
            o += r
        row[o:o + m] = u_cmd
        row[o + m:o + 2 * m] = u_act
        o += 2 * m
        row[o:o + r * m] = theta.reshape(-1, order="F")
        row[o + r * m] = soft_total
        row[o + r * m + 1] = hard_total
        rows = k + 1
        if diverged_at is not None or k == N:
            break

        # Net moment as a rate sensor would see it: x_dot - A x_meas.
        xdot_true = A @ x
        xdot_true[n - r:] += B @ (lam * u_act) + d_t
        net = (xdot_true - A @ x_meas)[n - r:]

        if tau > 0:
            z = np.concatenate([x, u_act])
        else:
            z = x
        k1 = rhs(t, z, u_cmd, lam)
        k2 = rhs(t + 0.5 * dt, z + 0.5 * dt * k1, u_cmd, lam)
        k3 = rhs(t + 0.5 * dt, z + 0.5 * dt * k2, u_cmd, lam)
        k4 = rhs(t + dt, z + dt * k3, u_cmd, lam)
        z = z + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if tau > 0:
            # Physical clamp; a no-op for a first-order lag driven inside +-u_max.
            x, u_act = z[:n], np.clip(z[n:], -u_max, u_max)
        else:
            x = z

        dy = A_m @ y + net - v
        dy_m = A_m @ y_m + ell * (y - y_m)
        if adaptive and not sc.freeze_theta:
            theta_new = theta + dt * adaptive_law(theta, v, e, cfg)
            clipped = bounds.clip(theta_new)
            theta_clamps += int(np.count_nonzero(clipped != theta_new))
            theta = clipped
        y = y + dt * dy
        y_m = y_m + dt * dy_m

    data = data[:rows]
    trace = Trace(header, data, aerr[:rows], aerr_nd[:rows], n, r, m)
    win = sc.window()
    u_act_block = trace.block("u_act", m)
    metrics = Metrics(
        window=tuple(win),
        tracking_rms=tracking_rms(trace, ref, win),
        max_state_norm=float(np.max(np.linalg.norm(trace.x, axis=1))),
        max_deflection_ratio=float(np.max(np.abs(u_act_block) / u_max)),
        alloc_error_rms=window_rms(trace.t, trace.alloc_error, win),
        alloc_error_rms_nodist=window_rms(trace.t, trace.alloc_error_nodist, win),
        soft_saturations=soft_total,
        hard_clamp_violations=hard_total,
        theta_clamp_events=theta_clamps,
        diverged=diverged_at is not None,
        diverged_at=diverged_at,
        final_e_norm=float(np.linalg.norm(trace.e[-1])),
        steps=rows - 1,
    )
    return trace, metrics


# ---------------------------------------------------------------------------
# references

def _cosine_step(t, start, T):
    """0 -> 1 over ``[start, start + T]``; returns (value, slope)."""
    if t <= start:
        return 0.0, 0.0
    if t >= start + T:
        return 1.0, 0.0
    ph = np.pi * (t - start) / T
    return 0.5 * (1 - np.cos(ph)), 0.5 * np.pi / T * np.sin(ph)


def make_reference(kind: str, amplitudes, frequency: float = 1.0, edges=(1.0, 4.0, 7.0),
                   ramp: float = 1.0, envelopes=None) -> ReferenceSignal:
    """Analytic reference per moment channel.

    ``sinusoid``: ``a sin(w t)``. ``smooth_doublet``: 0 -> +a at ``edges[0]``,
    +a -> -a at ``edges[1]``, -a -> 0 at ``edges[2]``, each a cosine ramp of
    length ``ramp`` (C1). With ``envelopes`` the certified bounds are checked
    against ``r_bar_i``/``rdot_bar_i``/``r_bar``.
    """
    a = np.asarray(amplitudes, dtype=float)
    if kind == "sinusoid":
        w = float(frequency)
        ref = ReferenceSignal(lambda t: a * np.sin(w * t), lambda t: a * w * np.cos(w * t),
                              np.abs(a), np.abs(a) * abs(w), kind)
    elif kind == "smooth_doublet":
        e0, e1, e2 = (float(e) for e in edges)
        if ramp <= 0 or not (e0 + ramp <= e1 and e1 + ramp <= e2):
            raise ValueError("doublet edges must be increasing and at least one ramp apart")
        levels = ((e0, 1.0), (e1, -2.0), (e2, 1.0))

        def value(t):
            return a * sum(dl * _cosine_step(t, ts, ramp)[0] for ts, dl in levels)

        def derivative(t):
            return a * sum(dl * _cosine_step(t, ts, ramp)[1] for ts, dl in levels)

        ref = ReferenceSignal(value, derivative, np.abs(a), np.abs(a) * np.pi / ramp, kind)
    else:
        raise ValueError(f"unknown reference kind {kind!r}")
    if envelopes is not None:
        check_reference_envelope(ref, envelopes)
    return ref


def check_reference_envelope(ref: ReferenceSignal, envelopes, tol: float = 1e-12) -> None:
    for name, got, cap in (("r_bar_i", ref.r_bar_i, envelopes.r_bar_i),
                           ("rdot_bar_i", ref.rdot_bar_i, envelopes.rdot_bar_i)):
        bad = np.nonzero(got > np.asarray(cap) + tol)[0]
        if bad.size:
            i = int(bad[0])
            raise ValueError(f"reference violates envelope {name}[{i}]: {got[i]:.4g} > {cap[i]:.4g}")
    if ref.r_bar > envelopes.r_bar + tol:
        raise ValueError(f"reference violates envelope r_bar: {ref.r_bar:.4g} > {envelopes.r_bar:.4g}")


# ---------------------------------------------------------------------------
# comparison

_SHARED = ("duration", "dt", "fault", "disturbance", "noise", "reference", "plant", "x0")


def compare(a: Scenario, b: Scenario) -> dict:
    """Run two scenarios that differ only in allocator settings; ratios are b / a."""
    for attr in _SHARED:
        va, vb = getattr(a, attr), getattr(b, attr)
        if va is vb:
            continue
        if attr in ("duration", "dt"):
            same = va == vb
        elif attr == "x0":
            same = np.array_equal(va, vb)
        elif attr == "plant":
            same = np.array_equal(va.A, vb.A) and np.array_equal(va.B_u, vb.B_u)
        elif attr == "reference":
            same = (va.kind == vb.kind and np.array_equal(va.r_bar_i, vb.r_bar_i)
                    and np.array_equal(va.rdot_bar_i, vb.rdot_bar_i))
        else:
            same = repr(va) == repr(vb)
        if not same:
            raise ValueError(f"scenarios differ in {attr}; only allocator settings may differ")
    _, ma = run_scenario(a)
    _, mb = run_scenario(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(ma.tracking_rms > 0, mb.tracking_rms / ma.tracking_rms,
                         np.where(mb.tracking_rms > 0, np.inf, 1.0))
        e_ratio = (mb.alloc_error_rms / ma.alloc_error_rms if ma.alloc_error_rms > 0
                   else (1.0 if mb.alloc_error_rms == 0 else np.inf))
    return {
        "a": {"name": a.name, "allocator": a.allocator, "metrics": ma.to_dict()},
        "b": {"name": b.name, "allocator": b.allocator, "metrics": mb.to_dict()},
        "tracking_rms_ratio": ratio.tolist(),
        "tracking_rms_ratio_max": float(np.max(ratio)),
        "alloc_error_rms_ratio": float(e_ratio),
        "any_divergence": ma.diverged or mb.diverged,
    }
