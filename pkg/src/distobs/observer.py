"""Distributed observer on the leader's canonical-form coordinates.

Follower i runs

    eta_i' = A0 eta_i + a(C eta_i) + c F s_i,
    s_i    = sum_j a_ij (eta_j - eta_i) + b_i (eta0 - eta_i),

so the stacked error ``e = eta_hat - 1 (x) eta0`` obeys
``e' = M e + (a(C eta_hat) - a(C eta0))`` with
``M = I (x) A0 - c (L + B) (x) F``.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, DomainError, PreconditionError
from .geometry import fd_derivative, rel_step
from .graph import coupling_bound, pinned_matrix
from .linalg import eigenvalues, is_hurwitz, kron, solve_care, solve_lyapunov

__all__ = ['ObserverGain', 'ObserverNetwork', 'ConvergenceCertificate',
           'design_gain', 'assemble_M', 'lemma2_check', 'observer_rhs',
           'baseline_rhs', 'estimates_in_original_coords',
           'convergence_certificate', 'lipschitz_matrix']

GRID_POINTS = 101


@dataclass(frozen=True)
class ObserverGain:
    F: np.ndarray
    c: float
    Q: np.ndarray
    R: np.ndarray
    P1: np.ndarray
    c_bound: float


def design_gain(model, graph, Q=None, R=None, c_multiplier=None, c=None):
    """Riccati-based observer gain.

    ``P1`` solves ``A0 P + P A0^T + Q - P R^{-1} P = 0`` and ``F = P1 R^{-1}``.
    The coupling gain is either given directly or as a multiple of
    ``1 / (2 min Re lambda(L + B))``.

    Parameters
    ----------
    model : LeaderModel
    graph : DirectedGraph
    Q, R : (s, s) array_like, optional
        Default to the identity.
    c_multiplier : float, optional
        Must be >= 1. Ignored when ``c`` is given.
    c : float, optional
        Explicit coupling gain, which must not be below the bound.
    """
    s = model.s
    Q = np.eye(s) if Q is None else np.asarray(Q, dtype=float)
    R = np.eye(s) if R is None else np.asarray(R, dtype=float)
    if Q.shape != (s, s) or R.shape != (s, s):
        raise DimensionError(f"Q and R must be {s}x{s}")
    bound = coupling_bound(graph)
    if c is None:
        mult = 1.0 if c_multiplier is None else float(c_multiplier)
        if mult < 1.0:
            raise PreconditionError(f"c multiplier must be >= 1, got {mult}")
        c = mult * bound
    else:
        c = float(c)
        if c < bound:
            raise PreconditionError(f"coupling gain {c} is below the bound "
                                    f"{bound:.6g}")
    P1 = solve_care(model.A0, Q, R)
    F = P1 @ np.linalg.inv(R)
    M = assemble_M(model.A0, F, c, pinned_matrix(graph))
    if not is_hurwitz(M):
        raise PreconditionError("assembled error matrix is not Hurwitz")
    return ObserverGain(F=F, c=c, Q=Q, R=R, P1=P1, c_bound=bound)


def assemble_M(A0, F, c, pinned):
    """``I_N (x) A0 - c (L + B) (x) F``."""
    A0 = np.atleast_2d(np.asarray(A0, float))
    F = np.atleast_2d(np.asarray(F, float))
    pinned = np.atleast_2d(np.asarray(pinned, float))
    if A0.shape != F.shape or A0.shape[0] != A0.shape[1]:
        raise DimensionError("A0 and F must be square of equal size")
    if pinned.shape[0] != pinned.shape[1]:
        raise DimensionError("pinned matrix must be square")
    N = pinned.shape[0]
    return kron(np.eye(N), A0) - c * kron(pinned, F)


def lemma2_check(A0, F, c, pinned):
    """True iff ``A0 - c lambda F`` is Hurwitz for every eigenvalue lambda."""
    A0 = np.atleast_2d(np.asarray(A0, float))
    F = np.atleast_2d(np.asarray(F, float))
    for lam in eigenvalues(pinned):
        ev = np.linalg.eigvals(A0 - c * lam * F)
        if not ev.real.max() < 0:
            return False
    return True


@dataclass
class ObserverNetwork:
    """Observer states and the data coupling them.

    ``estimates`` is an ``(N, s)`` array, one row per follower.
    """

    model: object
    graph: object
    gain: ObserverGain
    estimates: np.ndarray

    def __post_init__(self):
        self.estimates = np.array(self.estimates, dtype=float)
        if self.estimates.shape != (self.graph.n, self.model.s):
            raise DimensionError(f"estimates must have shape "
                                 f"{(self.graph.n, self.model.s)}")
        self.pinned = pinned_matrix(self.graph)


def observer_rhs(net, eta0, estimates=None):
    """Time derivative of every local estimate, shape ``(N, s)``."""
    H = net.estimates if estimates is None else estimates
    m = net.model
    sig = -(net.pinned @ H) + net.graph.pins[:, None] * np.asarray(eta0, float)
    return H @ m.A0.T + m.a(H @ m.C.T) + net.gain.c * (sig @ net.gain.F.T)


def baseline_rhs(estimates, w, model, c, graph):
    """Consensus observer in the original coordinates.

    ``w_i' = p(w_i) + c [sum_j a_ij (w_j - w_i) + b_i (w - w_i)]``
    """
    W = np.asarray(estimates, dtype=float)
    sig = -(pinned_matrix(graph) @ W) + graph.pins[:, None] * np.asarray(w)
    return model.p(W) + c * sig


def estimates_in_original_coords(net, estimates=None):
    """``phi_inv`` applied to every local estimate."""
    H = net.estimates if estimates is None else estimates
    W = net.model.phi_inv(H)
    bad = ~np.all(np.isfinite(W), axis=-1)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise DomainError(f"estimate of follower {i + 1} is outside the "
                          "inverse map's domain")
    return W


@dataclass(frozen=True)
class ConvergenceCertificate:
    """Rate certificate for ``V(t) = e^T P2 e``.

    ``decay_rate_bound`` is the exponent of the bound on V, so the error
    norm itself decays at half that rate. The ``corrected`` variants use
    ``kappa <= 2 alpha sbar(P2)``, the constant the spectral-norm argument
    actually delivers.
    """

    mu: float
    lipschitz: np.ndarray
    alpha: float
    P2_max: float
    kappa_bound: float
    decay_rate_bound: float
    P2: np.ndarray = None

    @property
    def sufficient(self):
        """Whether ``kappa < 4 mu`` holds."""
        return self.kappa_bound < 4.0 * self.mu

    @property
    def kappa_bound_corrected(self):
        return 2.0 * self.kappa_bound

    @property
    def decay_rate_bound_corrected(self):
        return -2.0 * self.mu / self.P2_max + self.alpha

    @property
    def sufficient_corrected(self):
        return self.kappa_bound_corrected < 4.0 * self.mu


def lipschitz_matrix(model, output_box, points=GRID_POINTS):
    """``L[j, i] = sup |d a_j / d y_i|`` over a grid of the output box."""
    lo, hi = (np.broadcast_to(np.asarray(v, float), (model.r,))
              for v in output_box)
    if np.any(~np.isfinite(lo)) or np.any(~np.isfinite(hi)) or np.any(hi < lo):
        raise PreconditionError("output box must be bounded and ordered")
    axes = [np.linspace(lo[k], hi[k], points) for k in range(model.r)]
    Y = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, model.r)
    J = fd_derivative(model.a, Y, rel_step(1), (model.s,))   # (G, s, r)
    return np.abs(J).max(axis=0)


def convergence_certificate(model, gain, graph, mu=1.0, output_box=(-2.0, 2.0)):
    """Exponential-rate certificate for the observer error.

    Returns
    -------
    ConvergenceCertificate
        ``alpha = sqrt(max eig(C^T L^T L C))``, ``kappa_bound = alpha *
        max eig(P2)`` with ``P2 M + M^T P2 = -2 mu I``, and the rate
        ``-2 mu / max eig(P2) + alpha / 2``.
    """
    M = assemble_M(model.A0, gain.F, gain.c, pinned_matrix(graph))
    if not is_hurwitz(M):
        raise PreconditionError("error matrix M is not Hurwitz")
    L = lipschitz_matrix(model, output_box)
    LC = L @ model.C
    alpha = float(np.sqrt(max(np.linalg.eigvalsh(LC.T @ LC).max(), 0.0)))
    P2 = solve_lyapunov(M, mu)
    p2 = float(np.linalg.eigvalsh(P2).max())
    return ConvergenceCertificate(mu=float(mu), lipschitz=L, alpha=alpha,
                                  P2_max=p2, kappa_bound=alpha * p2,
                                  decay_rate_bound=-2.0 * mu / p2 + alpha / 2.0,
                                  P2=P2)
