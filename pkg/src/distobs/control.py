"""Feedback-linearizing tracking laws for input-affine followers.

For output k with relative degree r_k the tracking coordinates are

    xi_{k,j} = L_f^{j-1} h_k(x) - L_p^{j-1} q_k(w),   j = 1..r_k,

and the law ``u = D(x)^{-1} (-beta + v)`` with ``beta_k = L_f^{r_k} h_k(x) -
L_p^{r_k} q_k(w)`` and ``v_k = K_k xi_k`` places the poles of every chain.
Passing an estimate in place of ``w`` gives the certainty-equivalence
variant.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import DimensionError, PreconditionError, SingularityError
from .geometry import lie_derivative_field

__all__ = ['pole_placement_companion', 'FeedbackGain', 'default_poles',
           'TrackingState', 'tracking_coords', 'siso_decentralized',
           'mimo_decentralized', 'control_batch', 'closed_loop_xi_matrix',
           'leader_output_derivs']

SCALAR_FLOOR = 1e-9
COND_CEIL = 1e8


def pole_placement_companion(poles, r):
    """Gain ``K`` placing the eigenvalues of the chain ``A + B K``.

    ``A`` has ones on the superdiagonal and ``B = e_r``. With
    ``prod (s - p_i) = s^r + c_{r-1} s^{r-1} + ... + c_0`` the gain is
    ``K = -[c_0, ..., c_{r-1}]``.
    """
    poles = np.asarray(poles, dtype=complex).ravel()
    if poles.size != r:
        raise PreconditionError(f"need {r} poles, got {poles.size}")
    if np.any(poles.real >= 0):
        raise PreconditionError("all requested poles must have negative "
                                "real part")
    coeffs = np.poly(poles)
    if np.abs(coeffs.imag).max() > 1e-9 * max(1.0, np.abs(coeffs).max()):
        raise PreconditionError("complex poles must come in conjugate pairs")
    return -coeffs.real[1:][::-1].copy()


def default_poles(r):
    """``{-2, -6}`` for two-chains, padded with -6 for longer chains."""
    return [-2.0] + [-6.0] * (int(r) - 1)


@dataclass(frozen=True)
class FeedbackGain:
    per_output: tuple
    poles: tuple

    @classmethod
    def from_poles(cls, poles_per_output):
        Ks, ps = [], []
        for poles in poles_per_output:
            poles = tuple(complex(p) if np.iscomplexobj(p) and np.imag(p)
                          else float(np.real(p)) for p in poles)
            Ks.append(pole_placement_companion(poles, len(poles)))
            ps.append(poles)
        return cls(per_output=tuple(Ks), poles=tuple(ps))

    @classmethod
    def default(cls, degrees):
        return cls.from_poles([default_poles(r) for r in degrees])

    @property
    def degrees(self):
        return tuple(len(K) for K in self.per_output)


def closed_loop_xi_matrix(K, degrees=None):
    """Block-diagonal ``A + B K`` over all output chains."""
    degrees = K.degrees if degrees is None else tuple(degrees)
    if tuple(degrees) != K.degrees:
        raise DimensionError(f"gain degrees {K.degrees} != {degrees}")
    blocks = []
    for Kk in K.per_output:
        r = len(Kk)
        blk = np.eye(r, k=1)
        blk[-1, :] += Kk
        blocks.append(blk)
    return scipy.linalg.block_diag(*blocks)


@dataclass(frozen=True)
class TrackingState:
    xi: np.ndarray
    theta: np.ndarray


def leader_output_derivs(model, w, order):
    """``L_p^j q_k(w)`` for ``j <= order``, shape ``(..., r, order + 1)``.

    Falls back to nested finite differences when the model provides no
    closed form of sufficient order.
    """
    if model.output_derivs is not None:
        try:
            return model.output_derivs(w, order)
        except PreconditionError:
            pass
    w = np.asarray(w, float)
    pf = model.p_field()
    out = [[lie_derivative_field(q, pf, j)(w) for j in range(order + 1)]
           for q in model.output_fields()]
    return np.stack([np.stack(row, axis=-1) for row in out], axis=-2)


def _check_dims(fm, model):
    if fm.m != model.r:
        raise DimensionError(f"follower has {fm.m} outputs, leader {model.r}")


def tracking_coords(fm, x, w, model):
    """Stacked tracking errors and internal coordinates at one state."""
    _check_dims(fm, model)
    x = np.asarray(x, float)
    rmax = max(fm.rel_degrees)
    L, _ = fm.lie_maps(x)
    Y = leader_output_derivs(model, w, rmax - 1)
    xi = np.concatenate([L[..., k, :r] - Y[..., k, :r]
                         for k, r in enumerate(fm.rel_degrees)], axis=-1)
    theta = (fm.internal_coords(x) if fm.internal_coords is not None
             else np.zeros(x.shape[:-1] + (0,)))
    return TrackingState(xi=xi, theta=theta)


def control_batch(fm, X, W, model, K, Y=None):
    """Tracking law on batches: ``X`` (..., n), ``W`` (..., s) -> (..., m).

    ``Y`` may carry precomputed leader output derivatives of order at least
    ``max(rel_degrees)``, in which case ``W`` is not used.
    """
    _check_dims(fm, model)
    if K.degrees != tuple(fm.rel_degrees):
        raise DimensionError(f"gain degrees {K.degrees} do not match "
                             f"relative degrees {fm.rel_degrees}")
    rmax = max(fm.rel_degrees)
    L, D = fm.lie_maps(X)
    if Y is None:
        Y = leader_output_derivs(model, W, rmax)
    E = L[..., :rmax + 1] - Y[..., :rmax + 1]
    if fm.m == 1:
        r = fm.rel_degrees[0]
        d = D[..., 0, 0]
        if not np.abs(d).min() > SCALAR_FLOOR:
            raise SingularityError("relative degree lost at state: decoupling "
                                   "scalar below 1e-9")
        return ((E[..., 0, :r] @ K.per_output[0] - E[..., 0, r]) / d)[..., None]
    rhs = np.stack([E[..., k, :r] @ K.per_output[k] - E[..., k, r]
                    for k, r in enumerate(fm.rel_degrees)], axis=-1)
    cond = np.linalg.cond(D)
    if np.any(~(cond < COND_CEIL)):
        idx = np.unravel_index(int(np.argmax(np.where(np.isfinite(cond), cond,
                                                      np.inf))), cond.shape)
        raise SingularityError(f"decoupling matrix singular at state "
                               f"{np.asarray(X)[idx].tolist()}")
    return np.linalg.solve(D, rhs[..., None])[..., 0]


def mimo_decentralized(fm, x, w, model, K):
    """``u = D(x)^{-1} (-beta + K xi)`` at one state, shape ``(m,)``."""
    return control_batch(fm, np.asarray(x, float), np.asarray(w, float),
                         model, K)


def siso_decentralized(fm, x, w, model, K):
    """Scalar tracking law for single-output followers."""
    if fm.m != 1:
        raise DimensionError("siso_decentralized needs a single-output follower")
    return float(mimo_decentralized(fm, x, w, model, K)[0])
