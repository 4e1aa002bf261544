"""Dense linear-algebra kernels used by the simulator, the dwell analysis and
the encoder.

Everything here works on small dense ``numpy`` arrays (a handful of states).
The routines are written out explicitly rather than delegated to
``scipy.linalg`` so their tolerances are the documented ones; the test suite
cross-checks them against scipy.
"""

from __future__ import annotations

import math
import warnings
from typing import Callable

import numpy as np


class ConvergenceWarning(UserWarning):
    """An iterative kernel hit its iteration cap before reaching tolerance."""


class NotStabilizableError(ValueError):
    """The Riccati sign iteration did not converge."""


def _as_matrix(M, name: str = "M") -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


# Pade(13) coefficients and the theta_13 threshold from Higham (2005).
_PADE13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
)
_THETA13 = 5.371920351148152


def expm(M) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a [13/13] Pade approximant."""
    A = _as_matrix(M)
    n, m = A.shape
    if n != m:
        raise ValueError(f"expm needs a square matrix, got {A.shape}")
    norm1 = np.abs(A).sum(axis=0).max() if n else 0.0
    s = 0
    if norm1 > _THETA13:
        s = int(math.ceil(math.log2(norm1 / _THETA13)))
    A = A / (2.0 ** s)

    b = _PADE13
    ident = np.eye(n)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
             + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
    E = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        E = E @ E
    return E


def zoh_discretize(A, B, Ts: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold pair ``(Ad, Bd)`` for ``x' = A x + B u``.

    Uses the exponential of the augmented block ``[[A, B], [0, 0]] * Ts``.
    """
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    m = A.shape[0]
    if A.shape != (m, m):
        raise ValueError(f"A must be square, got {A.shape}")
    if B.shape[0] != m:
        raise ValueError(f"B has {B.shape[0]} rows, A has {m}")
    if not Ts > 0:
        raise ValueError("Ts must be positive")
    n = B.shape[1]
    aug = np.zeros((m + n, m + n))
    aug[:m, :m] = A
    aug[:m, m:] = B
    E = expm(aug * Ts)
    return E[:m, :m], E[:m, m:]


def _lyapunov(F: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Solve ``F^T X + X F = R`` through the Kronecker form (small m only)."""
    m = F.shape[0]
    ident = np.eye(m)
    K = np.kron(ident, F.T) + np.kron(F.T, ident)
    X = np.linalg.solve(K, R.reshape(-1, order="F")).reshape((m, m), order="F")
    return 0.5 * (X + X.T)


def care_residual(A, B, k: float, P) -> np.ndarray:
    """``A^T P + P A - 2 P B B^T P + k I``."""
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    P = np.asarray(P, float)
    return A.T @ P + P @ A - 2.0 * P @ B @ B.T @ P + k * np.eye(A.shape[0])


def solve_care(A, B, k: float, *, tol: float = 1e-13, max_iter: int = 200) -> np.ndarray:
    """Positive definite solution of ``A^T P + P A - 2 P B B^T P + k I = 0``.

    Matrix sign iteration on the Hamiltonian ``[[A, -2BB^T], [-kI, -A^T]]``
    (determinant-scaled Newton iteration), least-squares extraction of the
    stable invariant subspace, then one Kleinman-Newton refinement step.
    """
    if not k > 0:
        raise ValueError("k must be positive")
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    m = A.shape[0]
    if A.shape != (m, m) or B.shape[0] != m:
        raise ValueError("dimension mismatch between A and B")
    G = 2.0 * B @ B.T
    Q = k * np.eye(m)
    Z = np.block([[A, -G], [-Q, -A.T]])
    n2 = 2 * m
    converged = False
    for _ in range(max_iter):
        try:
            Zinv = np.linalg.inv(Z)
        except np.linalg.LinAlgError as exc:
            raise NotStabilizableError("Hamiltonian has eigenvalues on the imaginary axis") from exc
        sign, logdet = np.linalg.slogdet(Z)
        c = math.exp(logdet / n2) if sign != 0 else 1.0
        Znew = 0.5 * (Z / c + c * Zinv)
        delta = np.linalg.norm(Znew - Z, 1)
        Z = Znew
        if delta <= tol * max(1.0, np.linalg.norm(Z, 1)):
            converged = True
            break
    if not converged:
        raise NotStabilizableError(f"sign iteration did not converge in {max_iter} iterations")

    W11, W12 = Z[:m, :m], Z[:m, m:]
    W21, W22 = Z[m:, :m], Z[m:, m:]
    lhs = np.vstack([W12, W22 + np.eye(m)])
    rhs = -np.vstack([W11 + np.eye(m), W21])
    P, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    P = 0.5 * (P + P.T)

    # Newton (Kleinman) refinement on the Riccati residual.
    F = A - G @ P
    P = P + _lyapunov(F, -care_residual(A, B, k, P))

    closed = A - G @ P if np.any(G) else A
    if np.max(np.linalg.eigvals(closed).real) >= 0:
        raise NotStabilizableError("closed loop A - 2BB^T P is not Hurwitz")
    return P


def max_singular_value(M, *, rtol: float = 1e-10, max_iter: int = 100_000) -> float:
    """Largest singular value of ``M`` by power iteration on ``M^T M``.

    Emits :class:`ConvergenceWarning` and returns the last estimate when the
    iteration cap is reached.
    """
    M = _as_matrix(M)
    G = M.T @ M
    n = G.shape[0]
    if not np.any(G):
        return 0.0
    v = np.random.default_rng(12345).uniform(0.5, 1.5, size=n)
    v /= np.linalg.norm(v)
    lam = float(v @ G @ v)
    for _ in range(max_iter):
        w = G @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        lam_new = float(v @ G @ v)
        if abs(lam_new - lam) <= rtol * abs(lam_new):
            return math.sqrt(max(lam_new, 0.0))
        lam = lam_new
    warnings.warn("max_singular_value: iteration cap reached", ConvergenceWarning, stacklevel=2)
    return math.sqrt(max(lam, 0.0))


def sym_eig_extremes(P, *, sym_tol: float = 1e-10, off_tol: float = 1e-11,
                     max_sweeps: int = 100) -> tuple[float, float]:
    """``(lambda_min, lambda_max)`` of a symmetric matrix via cyclic Jacobi sweeps."""
    S = _as_matrix(P, "P").copy()
    n = S.shape[0]
    if S.shape != (n, n):
        raise ValueError("sym_eig_extremes needs a square matrix")
    if np.max(np.abs(S - S.T), initial=0.0) > sym_tol * max(1.0, np.abs(S).max()):
        raise ValueError("matrix is not symmetric within tolerance")
    S = 0.5 * (S + S.T)
    scale = max(1.0, np.linalg.norm(S))

    mask = ~np.eye(n, dtype=bool)

    def off(X):
        return float(np.sqrt(np.sum(X[mask] ** 2)))

    for _ in range(max_sweeps):
        if off(S) <= off_tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = S[p, q]
                if apq == 0.0:
                    continue
                theta = (S[q, q] - S[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta  # theta^2 would overflow
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q] = s
                J[q, p] = -s
                S = J.T @ S @ J
    else:
        warnings.warn("sym_eig_extremes: sweep cap reached", ConvergenceWarning, stacklevel=2)
    d = np.diag(S)
    return float(d.min()), float(d.max())


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], x, t: float, dt: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step of ``x' = f(t, x)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    k1 = np.asarray(f(t, x), float)
    k2 = np.asarray(f(t + 0.5 * dt, x + 0.5 * dt * k1), float)
    k3 = np.asarray(f(t + 0.5 * dt, x + 0.5 * dt * k2), float)
    k4 = np.asarray(f(t + dt, x + dt * k3), float)
    for k in (k1, k2, k3, k4):
        if not np.all(np.isfinite(k)):
            raise FloatingPointError("non-finite derivative in rk4_step")
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def spectral_radius(M, *, squarings: int = 40) -> float:
    """Spectral radius from Gelfand's formula ``||M^(2^j)||^(2^-j)``.

    Repeated normalized squaring; no eigensolver involved.
    """
    X = _as_matrix(M)
    if not np.any(X):
        return 0.0
    log_c = 0.0
    for j in range(squarings):
        nrm = np.linalg.norm(X)
        if nrm == 0.0:
            return 0.0
        X = X / nrm
        log_c += math.log(nrm) / (2.0 ** j)
        X = X @ X
    return math.exp(log_c)
