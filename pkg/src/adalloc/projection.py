"""Element-wise, possibly non-symmetric projection operator.

Each adaptive parameter ``theta_ij`` lives in its own box ``[lo, hi]`` with a
tolerance band ``zeta``. The barrier

    f(theta) = (theta - lo - zeta)(theta - hi + zeta) / ((hi - lo - zeta) zeta)

is zero on the inner box edges and one on the outer edges. All functions
broadcast, so they accept scalars or whole r x m arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ProjectionError(ValueError):
    pass


DEFAULT_ZETA_FRAC = 0.05


@dataclass(frozen=True)
class ProjectionBounds:
    theta_min: np.ndarray
    theta_max: np.ndarray
    zeta: np.ndarray

    def __post_init__(self):
        lo = np.atleast_2d(np.asarray(self.theta_min, dtype=float))
        hi = np.atleast_2d(np.asarray(self.theta_max, dtype=float))
        zeta = np.broadcast_to(np.asarray(self.zeta, dtype=float), lo.shape).copy()
        if lo.shape != hi.shape:
            raise ProjectionError("theta_min and theta_max shapes differ")
        if np.any(lo >= hi):
            raise ProjectionError("theta_min must be strictly below theta_max")
        if np.any(zeta <= 0) or np.any(zeta >= 0.5 * (hi - lo)):
            raise ProjectionError("zeta must satisfy 0 < zeta < (theta_max - theta_min)/2")
        object.__setattr__(self, "theta_min", lo)
        object.__setattr__(self, "theta_max", hi)
        object.__setattr__(self, "zeta", zeta)

    @classmethod
    def from_box(cls, theta_min, theta_max, zeta_frac: float = DEFAULT_ZETA_FRAC):
        lo = np.asarray(theta_min, dtype=float)
        hi = np.asarray(theta_max, dtype=float)
        return cls(lo, hi, zeta_frac * (hi - lo))

    @property
    def shape(self):
        return self.theta_min.shape

    @property
    def inner_min(self):
        return self.theta_min + self.zeta

    @property
    def inner_max(self):
        return self.theta_max - self.zeta

    def contains(self, theta, tol: float = 0.0) -> bool:
        theta = np.asarray(theta)
        return bool(np.all(theta >= self.theta_min - tol) and np.all(theta <= self.theta_max + tol))

    def strictly_inside_inner(self, theta) -> bool:
        theta = np.asarray(theta)
        return bool(np.all(theta > self.inner_min) and np.all(theta < self.inner_max))

    def clip(self, theta):
        return np.minimum(np.maximum(theta, self.theta_min), self.theta_max)

    def f(self, theta):
        return convex_f(theta, self.theta_min, self.theta_max, self.zeta)


def _denominator(lo, hi, zeta):
    den = (hi - lo - zeta) * zeta
    if np.any(np.asarray(den) <= 0):
        raise ProjectionError("degenerate projection bounds (non-positive denominator)")
    return den


def convex_f(theta, lo, hi, zeta):
    den = _denominator(lo, hi, zeta)
    return (theta - lo - zeta) * (theta - hi + zeta) / den


def convex_f_grad(theta, lo, hi, zeta):
    den = _denominator(lo, hi, zeta)
    return (2.0 * theta - lo - hi) / den


def proj_element(theta, Y, lo, hi, zeta):
    """``Y (1 - f)`` where the barrier is active and ``Y`` points outward, else ``Y``."""
    f = convex_f(theta, lo, hi, zeta)
    grad = convex_f_grad(theta, lo, hi, zeta)
    active = (f > 0) & (Y * grad > 0)
    return np.where(active, Y * (1.0 - f), Y)


def proj_matrix(theta_v, Y, bounds: ProjectionBounds):
    theta_v = np.asarray(theta_v, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if theta_v.shape != bounds.shape or Y.shape != bounds.shape:
        raise ProjectionError(
            f"shape mismatch: theta {theta_v.shape}, Y {Y.shape}, bounds {bounds.shape}"
        )
    return proj_element(theta_v, Y, bounds.theta_min, bounds.theta_max, bounds.zeta)


def theta_tilde_max(bounds: ProjectionBounds) -> float:
    """Frobenius bound on the parameter error when the ideal value is in the inner box."""
    w = bounds.theta_max - bounds.theta_min - bounds.zeta
    return float(np.sqrt(np.sum(w ** 2)))


def theta_tilde_MAX(bounds: ProjectionBounds, star_min, star_max) -> float:
    """Frobenius bound when the ideal value may sit anywhere in ``[star_min, star_max]``."""
    a = np.abs(np.asarray(star_max) - bounds.theta_min)
    b = np.abs(np.asarray(star_min) - bounds.theta_max)
    return float(np.sqrt(np.sum(np.maximum(a, b) ** 2)))
