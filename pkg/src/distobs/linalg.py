"""Dense linear algebra kernel.

Spectral helpers and guarded solves, plus the two matrix equations the
observer design relies on:

* the Lyapunov equation ``P M + M^T P = -2 mu I`` solved by Kronecker
  vectorization;
* the filter-form algebraic Riccati equation
  ``A P + P A^T + Q - P R^{-1} P = 0``, integrated towards steady state and
  then polished by Newton-Kleinman steps.
"""

import warnings

import numpy as np
import scipy.linalg
from scipy.integrate import Radau

from .exceptions import (ConvergenceError, DimensionError, PreconditionError,
                         SingularityError)

__all__ = ['eigenvalues', 'spectral_bounds', 'is_hurwitz', 'kron',
           'solve_linear', 'solve_lyapunov', 'solve_care', 'care_residual',
           'lyapunov_residual']

MAX_DIM = 200
PIVOT_FLOOR = 1e-12
EIG_TOL = 1e-8


def _square(M, name='M'):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise PreconditionError(f"{name} has non-finite entries")
    return M


def eigenvalues(M):
    """Return all eigenvalues of a real square matrix as a complex array.

    LAPACK ``geev`` performs the Hessenberg reduction followed by shifted QR
    iteration; non-convergence is reported as :class:`ConvergenceError`.
    """
    M = _square(M)
    if M.shape[0] > MAX_DIM:
        raise DimensionError(f"dimension {M.shape[0]} exceeds {MAX_DIM}")
    if M.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    try:
        return np.linalg.eigvals(M).astype(complex)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"QR iteration did not converge: {exc}") from exc


def spectral_bounds(M):
    """Return ``(max real part, min real part)`` over the spectrum of M."""
    ev = eigenvalues(M)
    return float(ev.real.max()), float(ev.real.min())


def is_hurwitz(M, margin=0.0):
    """True iff every eigenvalue of M has real part below ``-margin``."""
    if margin < 0:
        raise PreconditionError("margin must be non-negative")
    return spectral_bounds(M)[0] < -margin


def kron(A, B):
    return np.kron(np.atleast_2d(np.asarray(A, float)),
                   np.atleast_2d(np.asarray(B, float)))


def solve_linear(A, b):
    """Solve ``A x = b`` by LU with partial pivoting.

    Raises
    ------
    SingularityError
        When a pivot falls below ``1e-12 * max(1, max|A|)``; the message names
        the offending pivot index.
    """
    A = _square(A, 'A')
    b = np.asarray(b, dtype=float)
    if b.shape[0] != A.shape[0]:
        raise DimensionError(f"rhs length {b.shape[0]} != {A.shape[0]}")
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    floor = PIVOT_FLOOR * max(1.0, float(np.abs(A).max(initial=0.0)))
    pivots = np.abs(np.diag(lu))
    small = np.flatnonzero(pivots <= floor)
    if small.size:
        k = int(small[0])
        raise SingularityError(
            f"matrix is singular to working precision: pivot {k} has "
            f"magnitude {pivots[k]:.3e}")
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


def _sylvester_kron(A, W):
    """Solve ``A X + X A^T = W`` by vectorization."""
    n = A.shape[0]
    eye = np.eye(n)
    K = np.kron(eye, A) + np.kron(A, eye)
    x = solve_linear(K, W.reshape(-1, order='F'))
    return x.reshape((n, n), order='F')


def lyapunov_residual(P, M, mu):
    n = M.shape[0]
    return float(np.linalg.norm(P @ M + M.T @ P + 2.0 * mu * np.eye(n)))


def solve_lyapunov(M, mu):
    """Solve ``P M + M^T P = -2 mu I`` for the symmetric positive definite P.

    Uses ``(I kron M^T + M^T kron I) vec(P) = -2 mu vec(I)`` followed by
    symmetrization. M must be Hurwitz and ``mu > 0``.
    """
    M = _square(M)
    if not mu > 0:
        raise PreconditionError(f"mu must be positive, got {mu}")
    if not is_hurwitz(M):
        raise PreconditionError("M is not Hurwitz; the Lyapunov equation has "
                                "no positive definite solution")
    n = M.shape[0]
    P = _sylvester_kron(M.T, -2.0 * mu * np.eye(n))
    return 0.5 * (P + P.T)


def care_residual(A, Q, R, P):
    return float(np.linalg.norm(A @ P + P @ A.T + Q - P @ np.linalg.solve(R, P)))


def _check_spd(X, name):
    if not np.allclose(X, X.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(X).max())):
        raise PreconditionError(f"{name} is not symmetric")
    if np.linalg.eigvalsh(0.5 * (X + X.T)).min() <= 0:
        raise PreconditionError(f"{name} is not positive definite")


def solve_care(A, Q, R, tol=1e-11, seed_tol=1e-6, max_steps=20_000,
               max_newton=30):
    """Stabilizing solution of ``A P + P A^T + Q - P R^{-1} P = 0``.

    The differential Riccati equation ``dP/dt = A P + P A^T + Q - P R^{-1} P``
    is integrated from ``P(0) = Q`` with adaptive-step Radau IIA (L-stable, so
    steps grow freely near the steady state) until
    ``||dP/dt|| <= seed_tol * max(1, ||Q||)``. That near-stationary point is a
    stabilizing seed, so Newton-Kleinman steps then drive ``||dP/dt||`` below
    ``tol * max(1, ||Q||)``.

    Parameters
    ----------
    A : (n, n) array_like
    Q, R : (n, n) array_like
        Symmetric positive definite weights.
    tol : float
        Final threshold on the residual, relative to ``max(1, ||Q||)``.
    seed_tol : float
        Threshold at which time integration hands over to Newton steps.
    max_steps, max_newton : int
        Integration step and Newton iteration budgets.

    Returns
    -------
    P : (n, n) ndarray
        Symmetric positive definite, with ``A - P R^{-1}`` Hurwitz.
    """
    A = _square(A, 'A')
    Q = _square(Q, 'Q')
    R = _square(R, 'R')
    n = A.shape[0]
    if Q.shape != (n, n) or R.shape != (n, n):
        raise DimensionError("A, Q and R must share one dimension")
    _check_spd(Q, 'Q')
    _check_spd(R, 'R')
    Rinv = np.linalg.inv(R)
    Rinv = 0.5 * (Rinv + Rinv.T)
    scale = max(1.0, float(np.linalg.norm(Q)))
    eye = np.eye(n)

    def rhs(P):
        D = A @ P + P @ A.T + Q - P @ Rinv @ P
        return 0.5 * (D + D.T)

    def fun(_t, y):
        return rhs(y.reshape(n, n)).ravel()

    def jac(_t, y):
        # d/dP of (A P + P A^T - P R^-1 P) is X -> B X + X B^T, B = A - P R^-1
        B = A - y.reshape(n, n) @ Rinv
        return np.kron(B, eye) + np.kron(eye, B)

    P = Q.copy()
    if np.linalg.norm(rhs(P)) > seed_tol * scale:
        solver = Radau(fun, 0.0, Q.ravel(), t_bound=np.inf, rtol=1e-6,
                       atol=1e-9 * scale, jac=jac)
        for _ in range(max_steps):
            solver.step()
            if solver.status == 'failed':
                raise ConvergenceError("Riccati integration failed")
            P = solver.y.reshape(n, n)
            if not np.all(np.isfinite(P)):
                raise ConvergenceError("Riccati integration diverged")
            if np.linalg.norm(rhs(P)) <= seed_tol * scale:
                break
        else:
            raise ConvergenceError(
                f"differential Riccati equation not stationary after "
                f"{max_steps} steps (||dP/dt|| = {np.linalg.norm(rhs(P)):.3e})")
    P = 0.5 * (P + P.T)

    res = float(np.linalg.norm(rhs(P)))
    for _ in range(max_newton):
        if res <= tol * scale:
            break
        Acl = A - P @ Rinv
        Pn = _sylvester_kron(Acl, -(Q + P @ Rinv @ P))
        Pn = 0.5 * (Pn + Pn.T)
        res_n = float(np.linalg.norm(rhs(Pn)))
        if not res_n < res:
            break
        P, res = Pn, res_n

    if np.linalg.eigvalsh(P).min() <= 0 or not is_hurwitz(A - P @ Rinv):
        raise ConvergenceError("Riccati iteration reached a non-stabilizing "
                               "stationary point")
    if res > 1e-8 * scale:
        raise ConvergenceError(f"Riccati residual {res:.3e} exceeds 1e-8")
    return P
