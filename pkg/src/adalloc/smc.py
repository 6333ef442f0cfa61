"""Sliding-mode outer loop on the moment-controlled states.

The surface starts at zero for any initial state: the measured ``x2`` at the
start of the run is folded into an exponentially decaying term, and the
reference is blended in through an arctangent ramp.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

DEFAULT_PHI = 0.05


@dataclass
class SmcConfig:
    lambda_bar: float
    rho: np.ndarray
    A2: np.ndarray
    M: np.ndarray
    phi: float = DEFAULT_PHI
    t0: float = 0.0
    x2_0: np.ndarray | None = None

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.M = np.asarray(self.M, dtype=float)
        self.A2 = np.atleast_2d(np.asarray(self.A2, dtype=float))
        r = self.A2.shape[0]
        if self.lambda_bar <= 0:
            raise ValueError("lambda_bar must be > 0")
        if self.phi < 0:
            raise ValueError("phi must be >= 0")
        if self.rho.shape != (r,) or self.M.shape != (r,):
            raise ValueError("rho and M must have one entry per moment channel")
        if np.any(self.rho >= self.M):
            raise ValueError(f"rho must be below M on every channel: rho={self.rho}, M={self.M}")
        self.x2_0 = np.zeros(r) if self.x2_0 is None else np.asarray(self.x2_0, dtype=float)

    @property
    def r(self) -> int:
        return self.A2.shape[0]


@dataclass
class ReferenceSignal:
    """Reference ``r(t)`` with its analytic derivative and certified bounds."""

    value: Callable[[float], np.ndarray]
    derivative: Callable[[float], np.ndarray]
    r_bar_i: np.ndarray
    rdot_bar_i: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        self.r_bar_i = np.asarray(self.r_bar_i, dtype=float)
        self.rdot_bar_i = np.asarray(self.rdot_bar_i, dtype=float)

    @property
    def r_bar(self) -> float:
        return float(np.linalg.norm(self.r_bar_i))

    def __call__(self, t: float) -> np.ndarray:
        return self.value(t)


def sign_v(a) -> np.ndarray:
    return np.diag(np.sign(np.asarray(a, dtype=float)))


def abs_v(a) -> np.ndarray:
    return np.abs(np.asarray(a, dtype=float))


def sat_phi(s, phi: float) -> np.ndarray:
    """Boundary-layer replacement for the sign function; exact sign when ``phi == 0``."""
    s = np.asarray(s, dtype=float)
    if phi == 0:
        return np.sign(s)
    return np.clip(s / phi, -1.0, 1.0)


def sliding_surface(x2, x2_0, r_t, t: float, t0: float, lambda_bar: float) -> np.ndarray:
    tau = t - t0
    return (np.asarray(x2, dtype=float) - np.asarray(x2_0) * np.exp(-lambda_bar * tau)
            - (2 / np.pi) * np.asarray(r_t) * np.arctan(lambda_bar * tau))


def control_law(x, r_t, rdot_t, t: float, config: SmcConfig) -> np.ndarray:
    """Virtual command that holds the state on the sliding surface."""
    x = np.asarray(x, dtype=float)
    lam = config.lambda_bar
    tau = t - config.t0
    x2 = x[x.size - config.r:]
    s = sliding_surface(x2, config.x2_0, r_t, t, config.t0, lam)
    return (-config.A2 @ x
            - lam * config.x2_0 * np.exp(-lam * tau)
            + (2 / np.pi) * np.asarray(rdot_t) * np.arctan(lam * tau)
            + (2 / np.pi) * np.asarray(r_t) * lam / (1 + (lam * tau) ** 2)
            - sat_phi(s, config.phi) * config.rho)


class SoftSaturation:
    """Clamp ``v`` to ``[-M, M]`` and count engagements per channel."""

    def __init__(self, M):
        self.M = np.asarray(M, dtype=float)
        self.counts = np.zeros(self.M.size, dtype=int)

    def __call__(self, v) -> np.ndarray:
        out, hit = soft_saturate(v, self.M)
        self.counts += hit
        return out

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def soft_saturate(v, M):
    """Return the clamped command and a 0/1 engagement flag per channel."""
    v = np.asarray(v, dtype=float)
    M = np.asarray(M, dtype=float)
    out = np.clip(v, -M, M)
    return out, (out != v).astype(int)


def lemma4_state_bound(k: float, K2: float, x1_bar: float, x2_bar: float, r_bar: float) -> float:
    """Bound on ``||x1(t)||`` once ``x2`` is held on the surface."""
    return k * x1_bar + K2 * x2_bar + K2 * r_bar
