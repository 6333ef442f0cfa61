"""Model-reference adaptive control allocation.

The allocator maps a virtual command ``v`` (r) to actuator commands
``u = theta_v^T v`` (m) and adapts ``theta_v`` from the mismatch between a
filter driven by the measured net moment and a closed-loop reference model.
It never sees the effectiveness matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .numerics import SpectralConstants, right_pseudo_inverse, solve_lyapunov, spectral_constants
from .projection import ProjectionBounds, proj_matrix, theta_tilde_MAX, theta_tilde_max

DEFAULT_GAMMA_THETA = 100.0


@dataclass
class AllocatorConfig:
    A_m: np.ndarray
    ell: float
    gamma_theta: float
    bounds: ProjectionBounds
    B: np.ndarray

    def __post_init__(self):
        self.A_m = np.atleast_2d(np.asarray(self.A_m, dtype=float))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if self.ell < 0:
            raise ValueError("ell must be >= 0")
        if self.gamma_theta <= 0:
            raise ValueError("gamma_theta must be > 0")
        r = self.A_m.shape[0]
        if self.B.shape[0] != r or self.bounds.shape != (r, self.B.shape[1]):
            raise ValueError("A_m, B and bounds dimensions are inconsistent")
        # Fails loudly when A_m - ell*I is not Hurwitz.
        _ = self.P

    @property
    def r(self) -> int:
        return self.A_m.shape[0]

    @property
    def A_m_bar(self) -> np.ndarray:
        return self.A_m - self.ell * np.eye(self.r)

    @cached_property
    def P(self) -> np.ndarray:
        return solve_lyapunov(self.A_m_bar, np.eye(self.r))

    @cached_property
    def PB(self) -> np.ndarray:
        return self.P @ self.B


@dataclass
class AllocatorState:
    theta_v: np.ndarray
    y: np.ndarray
    y_m: np.ndarray
    clamp_events: int = 0

    @classmethod
    def initial(cls, theta0, r: int, y0=None, y_m0=None) -> "AllocatorState":
        y0 = np.zeros(r) if y0 is None else np.asarray(y0, dtype=float)
        y_m0 = np.zeros(r) if y_m0 is None else np.asarray(y_m0, dtype=float)
        return cls(np.array(theta0, dtype=float), y0.copy(), y_m0.copy())

    @property
    def e(self) -> np.ndarray:
        return self.y - self.y_m


def allocate(theta_v, v) -> np.ndarray:
    return np.asarray(theta_v).T @ np.asarray(v, dtype=float)


def pseudo_inverse_allocate(B, v) -> np.ndarray:
    return right_pseudo_inverse(B) @ np.asarray(v, dtype=float)


def filter_derivative(y, net, v, A_m) -> np.ndarray:
    return A_m @ y + net - v


def reference_model_derivative(y_m, y, A_m, ell: float) -> np.ndarray:
    # L = -ell I, so -L (y - y_m) = ell (y - y_m).
    return A_m @ y_m + ell * (y - y_m)


def adaptive_law(theta_v, v, e, config: AllocatorConfig) -> np.ndarray:
    Y = -np.outer(v, e @ config.PB)
    return config.gamma_theta * proj_matrix(theta_v, Y, config.bounds)


def lyapunov_value(e, theta_tilde, P, gamma_theta: float, Lambda) -> float:
    e = np.asarray(e, dtype=float)
    tt = np.asarray(theta_tilde, dtype=float)
    lam = np.diag(Lambda) if np.ndim(Lambda) == 2 else np.asarray(Lambda, dtype=float)
    # tr(tt^T tt Lambda) / gamma = sum_j lam_j * ||column_j(tt)||^2 / gamma
    return float(e @ P @ e + np.sum((tt ** 2).sum(axis=0) * lam) / gamma_theta)


@dataclass
class ConvergenceBounds:
    """Ultimate bounds on the allocation error and parameter error.

    The ``e_radius_*`` fields are radii (square roots of the squared-radius
    expressions), so they compare directly against ``||e||``.
    """

    theta_tilde_max: float
    theta_tilde_MAX: float
    omega1: float
    omega2: float
    e_radius_E1: float
    e_radius_E1hat: float
    e_radius_E2: float
    e_radius_E2hat: float
    open_loop: SpectralConstants = field(repr=False, default=None)
    closed_loop: SpectralConstants = field(repr=False, default=None)


def convergence_bounds(config: AllocatorConfig, L_bar: float, M, theta_star_boxes=None,
                       *, theta_tilde_max_override: float | None = None) -> ConvergenceBounds:
    """Evaluate the convergence-set radii.

    ``M`` may be a per-channel vector; the scalar command bound used in the
    hat-variants is its Euclidean norm. ``theta_star_boxes`` is the
    ``(star_min, star_max)`` range of the ideal parameters; when omitted the
    projection box itself is used.
    """
    bounds = config.bounds
    tmax = theta_tilde_max(bounds) if theta_tilde_max_override is None else theta_tilde_max_override
    if theta_star_boxes is None:
        theta_star_boxes = (bounds.theta_min, bounds.theta_max)
    tMAX = theta_tilde_MAX(bounds, *theta_star_boxes)
    M_scalar = float(np.linalg.norm(np.atleast_1d(M)))
    L = float(L_bar)
    g = config.gamma_theta
    r = config.r
    B_norm = float(np.linalg.norm(config.B, 2))
    ell = config.ell

    sc = spectral_constants(config.A_m)
    s, sig, m = sc.s_min, sc.sigma, sc.m_const
    omega1 = sig / (2 * m ** 2)
    omega2 = (s / g) * tmax ** 2 + 2 * m ** 4 * L ** 2 / sig ** 2
    E1 = (s * tmax ** 2 / g + 2 * m ** 4 * L ** 2 / sig ** 2) * 4 * s * m ** 2 / sig
    E1hat = (s * tMAX ** 2 / g
             + (4 * m ** 4 * L ** 2 + 4 * r * tMAX ** 2 * m ** 4 * B_norm ** 2 * M_scalar ** 2)
             / sig ** 2) * 4 * s * m ** 2 / sig

    sb = spectral_constants(config.A_m_bar)
    s_b = sb.s_min + ell
    sig_b = sb.sigma + 2 * ell
    m_b = sb.m_const
    E2 = (s_b * tmax ** 2 / g + 2 * m_b ** 4 * L ** 2 / sig_b ** 2) * 4 * s_b * m_b ** 2 / sig_b
    E2hat = (s_b * tMAX ** 2 / g + 4 * m_b ** 4 * L ** 2 / sig_b ** 2
             + 4 * r * tMAX ** 2 * m_b ** 4 * B_norm ** 2 * M_scalar ** 2 / sig_b ** 2
             ) * 4 * s_b * m_b ** 2 / sig_b

    return ConvergenceBounds(
        theta_tilde_max=tmax,
        theta_tilde_MAX=tMAX,
        omega1=omega1,
        omega2=omega2,
        e_radius_E1=float(np.sqrt(E1)),
        e_radius_E1hat=float(np.sqrt(E1hat)),
        e_radius_E2=float(np.sqrt(E2)),
        e_radius_E2hat=float(np.sqrt(E2hat)),
        open_loop=sc,
        closed_loop=sb,
    )
