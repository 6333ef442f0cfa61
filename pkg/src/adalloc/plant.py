"""Over-actuated LTI plant with actuator lag, effectiveness faults and disturbance."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import NumericsError

DECOMP_TOL = 1e-9


class PlantError(ValueError):
    pass


def decompose_input_matrix(B_u, r: int, tol: float = DECOMP_TOL):
    """Split ``B_u`` into ``B_v @ B`` with ``B_v = [0; I_r]``.

    Only inputs already in that form are accepted; finding a state transformation
    that brings a general ``B_u`` into it is not supported.
    """
    B_u = np.atleast_2d(np.asarray(B_u, dtype=float))
    n, m = B_u.shape
    if not 0 < r < m or r > n:
        raise PlantError(f"need 0 < r < m and r <= n; got n={n}, m={m}, r={r}")
    top = B_u[: n - r]
    if top.size and np.max(np.abs(top)) > tol:
        raise PlantError(
            "upper (n-r) rows of B_u are not zero (max |entry| = "
            f"{np.max(np.abs(top)):.3g}); B_v = [0; I_r] form required (state "
            "transformations into that form are not supported)"
        )
    B = B_u[n - r:].copy()
    if np.linalg.matrix_rank(B) < r:
        raise PlantError("bottom r rows of B_u are rank deficient")
    B_v = np.vstack([np.zeros((n - r, r)), np.eye(r)])
    return B_v, B


@dataclass(frozen=True)
class LinearPlant:
    A: np.ndarray
    B_u: np.ndarray
    B_v: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        if not np.allclose(self.B_u, self.B_v @ self.B, atol=1e-10, rtol=0):
            raise PlantError("B_u != B_v @ B")
        if self.A.shape != (self.n, self.n):
            raise PlantError(f"A must be {self.n}x{self.n}")

    @classmethod
    def from_matrices(cls, A, B_u, r: int) -> "LinearPlant":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B_u = np.atleast_2d(np.asarray(B_u, dtype=float))
        B_v, B = decompose_input_matrix(B_u, r)
        # B_u is overwritten by the exact product so the identity holds bit-for-bit
        # even when the top block carried sub-tolerance noise.
        return cls(A=A, B_u=B_v @ B, B_v=B_v, B=B)

    @property
    def n(self) -> int:
        return self.B_u.shape[0]

    @property
    def m(self) -> int:
        return self.B_u.shape[1]

    @property
    def r(self) -> int:
        return self.B.shape[0]

    @property
    def A11(self):
        k = self.n - self.r
        return self.A[:k, :k]

    @property
    def A12(self):
        k = self.n - self.r
        return self.A[:k, k:]

    @property
    def A2(self):
        """Bottom r rows of A, i.e. ``[A21 A22]``."""
        return self.A[self.n - self.r:]


@dataclass
class AssumptionReport:
    a11_eigenvalues: np.ndarray
    a11_hurwitz: bool
    bv_form_ok: bool
    rank_ok: bool

    @property
    def ok(self) -> bool:
        return self.a11_hurwitz and self.bv_form_ok and self.rank_ok

    def summary(self) -> str:
        eig = ", ".join(f"{z.real:.4g}" + (f"{z.imag:+.4g}j" if z.imag else "")
                        for z in self.a11_eigenvalues)
        return (f"A11 eigenvalues [{eig}] hurwitz={self.a11_hurwitz}; "
                f"B_v=[0;I] form={self.bv_form_ok}; rank(B_u)=r {self.rank_ok}")


def validate_assumptions(plant: LinearPlant) -> AssumptionReport:
    n, r = plant.n, plant.r
    eig = np.linalg.eigvals(plant.A11) if n > r else np.array([])
    hurwitz = bool(np.all(eig.real < 0))
    expected_bv = np.vstack([np.zeros((n - r, r)), np.eye(r)])
    bv_ok = plant.B_v.shape == expected_bv.shape and bool(np.allclose(plant.B_v, expected_bv))
    rank_ok = int(np.linalg.matrix_rank(plant.B_u)) == r < plant.m
    return AssumptionReport(eig, hurwitz, bv_ok, rank_ok)


@dataclass
class ActuatorBank:
    """Position-limited first-order actuators.

    ``u_max`` is the symmetric magnitude used by every allocation/set computation;
    ``lower``/``upper`` are the physical travel limits used by the hard clamp.
    ``tau == 0`` means ideal actuators (the deflection equals the clamped command).
    """

    lower: np.ndarray
    upper: np.ndarray
    tau: float

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if np.any(self.lower >= self.upper):
            raise PlantError("actuator lower limits must be below upper limits")
        if np.any(self.lower > 0) or np.any(self.upper < 0):
            raise PlantError("actuator range must contain zero")
        if self.tau < 0:
            raise PlantError("tau must be >= 0")

    @property
    def u_max(self) -> np.ndarray:
        return np.minimum(-self.lower, self.upper)

    def clamp(self, u):
        return np.minimum(np.maximum(u, self.lower), self.upper)


@dataclass
class FaultSchedule:
    """Piecewise-constant, right-continuous effectiveness schedule.

    Before the first switch time the actuators are fully effective.
    """

    entries: list = field(default_factory=list)  # [(switch_time, diag vector)]

    def __post_init__(self):
        cleaned = []
        last = -np.inf
        for t, lam in self.entries:
            lam = np.asarray(lam, dtype=float).ravel()
            if t <= last:
                raise PlantError("fault switch times must be strictly increasing")
            if np.any(lam <= 0) or np.any(lam > 1):
                raise PlantError("effectiveness entries must lie in (0, 1]")
            cleaned.append((float(t), lam))
            last = t
        self.entries = cleaned

    @classmethod
    def step(cls, m: int, t_fault: float, level: float) -> "FaultSchedule":
        return cls([(0.0, np.ones(m)), (t_fault, np.full(m, level))])

    @classmethod
    def nominal(cls, m: int) -> "FaultSchedule":
        return cls([(0.0, np.ones(m))])

    def diag(self, t: float, m: int | None = None) -> np.ndarray:
        current = None
        for ts, lam in self.entries:
            if t >= ts:
                current = lam
            else:
                break
        if current is None:
            if m is None:
                m = self.entries[0][1].size if self.entries else 0
            return np.ones(m)
        return current

    def __call__(self, t: float) -> np.ndarray:
        return np.diag(self.diag(t))


@dataclass
class DisturbanceSpec:
    """Sinusoidal moment-channel disturbance ``a_i sin(w_i t)``."""

    amplitude: np.ndarray
    frequency: np.ndarray

    def __post_init__(self):
        self.amplitude = np.atleast_1d(np.asarray(self.amplitude, dtype=float))
        self.frequency = np.atleast_1d(np.asarray(self.frequency, dtype=float))
        if self.frequency.size == 1 and self.amplitude.size > 1:
            self.frequency = np.full(self.amplitude.size, self.frequency[0])
        if self.amplitude.shape != self.frequency.shape:
            raise PlantError("disturbance amplitude and frequency must match")

    @classmethod
    def zero(cls, r: int) -> "DisturbanceSpec":
        return cls(np.zeros(r), np.zeros(r))

    @property
    def L_bar(self) -> np.ndarray:
        return np.abs(self.amplitude)

    @property
    def L_total(self) -> float:
        return float(np.linalg.norm(self.L_bar))

    def __call__(self, t: float) -> np.ndarray:
        return self.amplitude * np.sin(self.frequency * t)


@dataclass
class NoiseSpec:
    sigma_x: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma_x < 0:
            raise PlantError("sigma_x must be >= 0")

    def samples(self, count: int, n: int) -> np.ndarray:
        """Deterministic ``(count, n)`` block of measurement noise."""
        if self.sigma_x == 0:
            return np.zeros((count, n))
        rng = np.random.default_rng(self.seed)
        return self.sigma_x * rng.standard_normal((count, n))


def plant_derivative(plant: LinearPlant, x, u_act, t: float,
                     fault: FaultSchedule, dist: DisturbanceSpec) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u_act = np.asarray(u_act, dtype=float)
    if x.shape != (plant.n,) or u_act.shape != (plant.m,):
        raise NumericsError(
            f"dimension mismatch: x {x.shape} (want ({plant.n},)), "
            f"u {u_act.shape} (want ({plant.m},))"
        )
    moment = plant.B @ (fault.diag(t, plant.m) * u_act) + dist(t)
    return plant.A @ x + plant.B_v @ moment


def actuator_derivative(u_act, u_cmd, tau: float) -> np.ndarray:
    if tau <= 0:
        raise PlantError("tau must be positive for the lag model")
    return (np.asarray(u_cmd, dtype=float) - np.asarray(u_act, dtype=float)) / tau


def net_moment(x_dot, x, plant: LinearPlant) -> np.ndarray:
    """Moment-channel part of ``x_dot - A x``, i.e. ``B Lambda u + d``."""
    resid = np.asarray(x_dot, dtype=float) - plant.A @ np.asarray(x, dtype=float)
    return resid[plant.n - plant.r:]
