"""Dense linear-algebra kernels shared by the allocator, design and SMC code.

Everything here works on small matrices (r <= 5), so the implementations
favour exactness and simplicity over asymptotic speed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg


class NumericsError(ValueError):
    """Raised when an input violates a kernel precondition."""


HURWITZ_TOL = 1e-12
RANK_TOL = 1e-10
LP_FEAS_TOL = 1e-9


def _as_matrix(a, name: str) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(a, dtype=float))
    if arr.ndim != 2:
        raise NumericsError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"{name} has non-finite entries")
    return arr


def _check_hurwitz(A: np.ndarray, name: str, tol: float = HURWITZ_TOL) -> np.ndarray:
    if A.shape[0] != A.shape[1]:
        raise NumericsError(f"{name} must be square, got {A.shape}")
    eig = np.linalg.eigvals(A)
    worst = float(np.max(eig.real))
    if worst >= -tol:
        raise NumericsError(
            f"{name} is not Hurwitz: max real part of eigenvalues is {worst:.6g}"
        )
    return eig


def solve_lyapunov(A_stable, Q, *, hurwitz_tol: float = HURWITZ_TOL) -> np.ndarray:
    """Solve ``A^T P + P A = -Q`` through the Kronecker-vectorized system.

    With column-major vec, ``vec(A^T P) = (I kron A^T) vec(P)`` and
    ``vec(P A) = (A^T kron I) vec(P)``.
    """
    A = _as_matrix(A_stable, "A_stable")
    Q = _as_matrix(Q, "Q")
    _check_hurwitz(A, "A_stable", hurwitz_tol)
    n = A.shape[0]
    if Q.shape != (n, n):
        raise NumericsError(f"Q must be {n}x{n}, got {Q.shape}")
    if not np.allclose(Q, Q.T, atol=1e-12 * (1 + np.abs(Q).max())):
        raise NumericsError("Q must be symmetric")
    if np.linalg.eigvalsh(0.5 * (Q + Q.T)).min() <= 0:
        raise NumericsError("Q must be positive definite")

    eye = np.eye(n)
    K = np.kron(eye, A.T) + np.kron(A.T, eye)
    try:
        p = np.linalg.solve(K, -Q.reshape(-1, order="F"))
    except np.linalg.LinAlgError as exc:
        raise NumericsError(f"vectorized Lyapunov system is singular: {exc}") from exc
    P = p.reshape(n, n, order="F")
    P = 0.5 * (P + P.T)
    if np.linalg.eigvalsh(P).min() <= 0:
        raise NumericsError("Lyapunov solution is not positive definite")
    return P


def lyapunov_residual(A, P, Q) -> float:
    A = np.asarray(A, dtype=float)
    return float(np.linalg.norm(A.T @ P + P @ A + Q, "fro"))


def right_pseudo_inverse(B, *, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Return ``B^T (B B^T)^-1`` for a full-row-rank ``B`` (r x m)."""
    B = _as_matrix(B, "B")
    sv = np.linalg.svd(B, compute_uv=False)
    if sv.size == 0 or sv[0] == 0 or sv.size < B.shape[0] or sv[-1] <= rank_tol * sv[0]:
        raise NumericsError(f"B ({B.shape}) is not full row rank; singular values {sv}")
    return B.T @ np.linalg.inv(B @ B.T)


def box_lp_max(c, G, lo, hi, *, tol: float = LP_FEAS_TOL) -> float:
    """Maximize ``c.v`` over the polytope ``lo <= G v <= hi`` by vertex enumeration.

    Every vertex of an r-dimensional polytope is the intersection of r active
    constraints, so all r-subsets of the 2m half-spaces are tried.
    """
    c = np.atleast_1d(np.asarray(c, dtype=float)).ravel()
    G = _as_matrix(G, "G")
    r = c.size
    if G.shape[1] != r:
        G = G.reshape(-1, r)
    lo = np.atleast_1d(np.asarray(lo, dtype=float)).ravel()
    hi = np.atleast_1d(np.asarray(hi, dtype=float)).ravel()
    if lo.size != G.shape[0] or hi.size != G.shape[0]:
        raise NumericsError("lo/hi must have one entry per row of G")
    if np.any(lo > hi + tol):
        raise NumericsError("empty polytope: some lo > hi")
    if np.linalg.matrix_rank(G) < r:
        raise NumericsError("polytope is unbounded: G does not have full column rank")

    # Half-spaces a.v <= b.
    A_half = np.vstack([G, -G])
    b_half = np.concatenate([hi, -lo])
    best = -np.inf
    for rows in itertools.combinations(range(A_half.shape[0]), r):
        sub = A_half[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-14:
            continue
        v = np.linalg.solve(sub, b_half[list(rows)])
        if np.all(A_half @ v <= b_half + tol * (1 + np.abs(b_half))):
            best = max(best, float(c @ v))
    if not np.isfinite(best):
        raise NumericsError("empty polytope: no feasible vertex")
    return best


@dataclass(frozen=True)
class SpectralConstants:
    sigma: float
    s_min: float
    a_norm: float
    m_const: float
    r_dim: int


def spectral_constants(A_m) -> SpectralConstants:
    """Decay rate, symmetric-part bound, norm and the transient constant of ``A_m``."""
    A = _as_matrix(A_m, "A_m")
    eig = _check_hurwitz(A, "A_m")
    sigma = -float(np.max(eig.real))
    s_min = -float(np.min(np.linalg.eigvalsh(0.5 * (A + A.T))))
    a_norm = float(np.linalg.norm(A, 2))
    r = A.shape[0]
    m_const = 1.5 * (1.0 + 4.0 * a_norm / sigma) ** (r - 1)
    return SpectralConstants(sigma, s_min, a_norm, m_const, r)


def transition_decay_constants(A11, *, xi_factor: float = 0.99,
                               inflation: float = 1.05) -> tuple[float, float]:
    """Certify ``||exp(A11 t)|| <= k exp(-xi t)`` on a dense grid.

    ``xi`` is a fixed fraction of the decay rate; ``k`` is the grid maximum of
    ``||exp(A11 t)|| exp(xi t)`` over ``[0, 20/xi]`` (step ``xi/100``), inflated.
    """
    A = _as_matrix(A11, "A11")
    eig = _check_hurwitz(A, "A11")
    xi = xi_factor * (-float(np.max(eig.real)))
    step = xi / 100
    count = int(np.floor((20.0 / xi) / step + 0.5)) + 1
    # exp(A (a + j h)) = exp(A a) exp(A j h): a few hundred anchors times a
    # fixed block of short-horizon exponentials covers the grid exactly.
    block = 1000
    offsets = step * np.arange(block)
    local = scipy.linalg.expm(offsets[:, None, None] * A)
    anchors_t = step * block * np.arange(-(-count // block))
    anchors = scipy.linalg.expm(anchors_t[:, None, None] * A)
    phi = np.einsum("aij,bjk->abik", anchors, local).reshape(-1, *A.shape)[:count]
    ts = (anchors_t[:, None] + offsets[None, :]).reshape(-1)[:count]
    norms = np.linalg.norm(phi, ord=2, axis=(1, 2))
    k = max(1.0, float(np.max(norms * np.exp(xi * ts))))
    return inflation * k, xi


def rk4_step(f, t: float, z: np.ndarray, dt: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of ``z' = f(t, z)``."""
    k1 = f(t, z)
    k2 = f(t + 0.5 * dt, z + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, z + 0.5 * dt * k2)
    k4 = f(t + dt, z + dt * k3)
    return z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
