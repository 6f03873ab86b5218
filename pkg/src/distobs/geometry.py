"""Numeric differential geometry for smooth vector fields.

Fields are evaluated on batches: a callable receives an array of shape
``(..., n)`` and returns ``(..., n)`` (vector fields) or ``(...)`` (scalar
fields). Batching lets every finite-difference stencil be evaluated in a
single call, which keeps nested constructions such as ``ad_f^3 g`` cheap.

Derived fields (gradients, Lie derivatives, brackets) are themselves fields
and record a ``depth``: the number of finite-difference layers stacked
inside them. Nested constructions share one relative step

    h = eps ** (1 / (4 + D)) * max(1, ||x||_inf)

with D the deepest layer requested, which balances the O(h^4) truncation of
the five-point stencil against roundoff amplified by ``1/h`` per layer.
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .exceptions import (DimensionError, DomainError, PreconditionError,
                         UnsupportedError)

__all__ = ['VectorField', 'ScalarField', 'jacobian_fd', 'gradient',
           'lie_derivative', 'lie_derivative_field', 'lie_bracket',
           'bracket_field', 'ad_power', 'check_ocf_conditions',
           'ConditionReport', 'verify_diffeomorphism', 'DiffeoReport',
           'rel_step', 'numeric_rank', 'fd_derivative']

EPS = np.finfo(float).eps
RANK_RTOL = 1e-7
MAX_LIE_ORDER = 4
MAX_AD_POWER = 3

# five-point central first-derivative stencil
_NODES = np.array([-2.0, -1.0, 1.0, 2.0])
_WEIGHTS = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0


def rel_step(depth):
    """Shared relative step for a construction with ``depth`` FD layers."""
    return EPS ** (1.0 / (4 + max(int(depth), 1)))


class VectorField:
    """Batched map ``(..., dim) -> (..., dim)``."""

    def __init__(self, dim, fn, depth=0, name=None):
        self.dim = int(dim)
        self.fn = fn
        self.depth = int(depth)
        self.name = name or getattr(fn, '__name__', 'field')

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise DimensionError(f"{self.name}: expected trailing dim "
                                 f"{self.dim}, got shape {x.shape}")
        y = np.asarray(self.fn(x), dtype=float)
        y = np.broadcast_to(y, x.shape)
        if not np.all(np.isfinite(y)):
            raise DomainError(f"{self.name}: non-finite value")
        return y

    def __repr__(self):
        return f"VectorField({self.name!r}, dim={self.dim}, depth={self.depth})"


class ScalarField(VectorField):
    """Batched map ``(..., dim) -> (...)``."""

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise DimensionError(f"{self.name}: expected trailing dim "
                                 f"{self.dim}, got shape {x.shape}")
        y = np.asarray(self.fn(x), dtype=float)
        y = np.broadcast_to(y, x.shape[:-1])
        if not np.all(np.isfinite(y)):
            raise DomainError(f"{self.name}: non-finite value")
        return y

    def __repr__(self):
        return f"ScalarField({self.name!r}, dim={self.dim}, depth={self.depth})"


def _as_vector(f, dim=None):
    if isinstance(f, VectorField) and not isinstance(f, ScalarField):
        return f
    if dim is None:
        raise PreconditionError("dim is required to wrap a plain callable")
    return VectorField(dim, f)


def _as_scalar(h, dim=None):
    if isinstance(h, ScalarField):
        return h
    if dim is None:
        raise PreconditionError("dim is required to wrap a plain callable")
    return ScalarField(dim, h)


def fd_derivative(fn, x, rel, out_shape):
    """Five-point derivative of ``fn`` at batch ``x``.

    Returns an array of shape ``x.shape[:-1] + out_shape + (n,)``.
    """
    n = x.shape[-1]
    scale = np.maximum(1.0, np.abs(x).max(axis=-1, keepdims=True))
    h = rel * scale                                     # (..., 1)
    offs = _NODES[:, None, None] * np.eye(n)[None]      # (4, n, n)
    pts = x[..., None, None, :] + h[..., None, None, :] * offs
    vals = fn(pts)                                      # (..., 4, n, *out)
    vals = np.moveaxis(vals, (x.ndim - 1, x.ndim), (-2, -1))
    d = np.einsum('...kn,k->...n', vals, _WEIGHTS)      # (..., *out, n)
    return d / h.reshape(h.shape[:-1] + (1,) * (len(out_shape) + 1))


def jacobian_fd(f, x, h=None):
    """Central-difference Jacobian ``df/dx^T``.

    Parameters
    ----------
    f : VectorField or callable
    x : (n,) array_like
    h : float, optional
        Step; defaults to ``eps**(1/3) * max(1, ||x||)``.

    Returns
    -------
    (m, n) ndarray
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if h is None:
        h = EPS ** (1.0 / 3.0) * max(1.0, float(np.linalg.norm(x)))
    if not h > 0:
        raise PreconditionError("step h must be positive")
    pts = np.concatenate([x + h * np.eye(n), x - h * np.eye(n)])
    vals = np.asarray(f(pts), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise DomainError("non-finite field value during differencing")
    vals = vals.reshape(2 * n, -1)
    return ((vals[:n] - vals[n:]) / (2.0 * h)).T


def gradient(hs, rel=None, dim=None):
    """Gradient field of a scalar field, as a batched map to ``(..., dim)``."""
    hs = _as_scalar(hs, dim)
    depth = hs.depth + 1
    rel = rel_step(depth) if rel is None else rel
    return VectorField(hs.dim, lambda x: fd_derivative(hs, x, rel, ()),
                       depth=depth, name=f"d({hs.name})")


def _jac_field(f, x, rel):
    return fd_derivative(f, x, rel, (f.dim,))


def lie_derivative_field(h, f, order=1, rel=None):
    """Scalar field ``x -> L_f^order h(x)``."""
    f = _as_vector(f, getattr(h, 'dim', None))
    h = _as_scalar(h, f.dim)
    if order < 0:
        raise PreconditionError("order must be non-negative")
    if order > MAX_LIE_ORDER:
        raise UnsupportedError(f"Lie derivative order {order} exceeds "
                               f"{MAX_LIE_ORDER}")
    if h.dim != f.dim:
        raise DimensionError("field dimensions differ")
    rel = rel_step(h.depth + order) if rel is None else rel
    out = h
    for _ in range(order):
        prev = out

        def fn(x, prev=prev):
            return np.einsum('...i,...i->...', fd_derivative(prev, x, rel, ()), f(x))

        out = ScalarField(h.dim, fn, depth=max(prev.depth + 1, f.depth),
                          name=f"L_f({prev.name})")
    return out


def lie_derivative(h, f, x, order=1):
    """``L_f^order h`` evaluated at ``x`` (one point or a batch)."""
    return lie_derivative_field(h, f, order)(x)


def bracket_field(f, g, rel=None):
    """Vector field ``[f, g] = (dg/dx) f - (df/dx) g``."""
    if f.dim != g.dim:
        raise DimensionError(f"dimension mismatch {f.dim} vs {g.dim}")
    depth = max(f.depth, g.depth) + 1
    rel = rel_step(depth) if rel is None else rel

    def fn(x):
        Jf = _jac_field(f, x, rel)
        Jg = _jac_field(g, x, rel)
        return (np.einsum('...ij,...j->...i', Jg, f(x))
                - np.einsum('...ij,...j->...i', Jf, g(x)))

    return VectorField(f.dim, fn, depth=depth, name=f"[{f.name},{g.name}]")


def lie_bracket(f, g, x):
    """Numeric Lie bracket ``[f, g]`` at ``x``."""
    if getattr(f, 'dim', None) != getattr(g, 'dim', None):
        raise DimensionError("lie_bracket needs two fields of equal dim")
    return bracket_field(f, g)(x)


def ad_power(f, g, k, rel=None):
    """``ad_f^k g`` as a vector field (``k <= 3``)."""
    if k < 0:
        raise PreconditionError("k must be non-negative")
    if k > MAX_AD_POWER:
        raise UnsupportedError(f"ad power {k} exceeds {MAX_AD_POWER}")
    if f.dim != g.dim:
        raise DimensionError(f"dimension mismatch {f.dim} vs {g.dim}")
    rel = rel_step(max(f.depth, g.depth) + k) if rel is None else rel
    out = g
    for _ in range(k):
        out = bracket_field(f, out, rel)
    return out


def numeric_rank(M, rtol=RANK_RTOL):
    s = np.linalg.svd(np.atleast_2d(M), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


@dataclass
class ConditionReport:
    """Point-wise outcome of the three OCF existence conditions.

    Attributes
    ----------
    observability_rank : list of int
        Rank of the stacked codistribution at each sample.
    intersection_dims : list of list of int
        Rank of each reduced codistribution, per sample and output.
    intersection_expected : list of int
        Expected rank per output.
    normalization_defect : ndarray
        Worst deviation of the pairing equations, per sample.
    commutator_norm : ndarray
        Worst commutator norm, per sample.
    """

    n: int
    degrees: tuple
    observability_rank: list = field(default_factory=list)
    intersection_dims: list = field(default_factory=list)
    intersection_expected: list = field(default_factory=list)
    normalization_defect: np.ndarray = None
    commutator_norm: np.ndarray = None
    normalization_tol: float = 0.0
    commutator_tol: float = 0.0
    failures: list = field(default_factory=list)

    @property
    def observability_ok(self):
        return all(k == self.n for k in self.observability_rank)

    @property
    def intersection_ok(self):
        return all(list(d) == list(self.intersection_expected)
                   for d in self.intersection_dims)

    @property
    def normalization_ok(self):
        return bool(np.all(self.normalization_defect <= self.normalization_tol))

    @property
    def commutator_ok(self):
        return bool(np.all(self.commutator_norm <= self.commutator_tol))

    @property
    def passed(self):
        return (self.observability_ok and self.intersection_ok
                and self.normalization_ok and self.commutator_ok)

    @property
    def worst_sample(self):
        score = np.maximum(self.normalization_defect / self.normalization_tol,
                           self.commutator_norm / max(self.commutator_tol, 1e-300))
        return int(np.argmax(score))

    def summary(self):
        lines = [
            f"observability_rank={'pass' if self.observability_ok else 'FAIL'}"
            f" (min {min(self.observability_rank)} of {self.n})",
            f"intersection_dimension={'pass' if self.intersection_ok else 'FAIL'}"
            f" (expected {list(self.intersection_expected)})",
            f"normalization={'pass' if self.normalization_ok else 'FAIL'}"
            f" (max scaled defect {self.normalization_defect.max():.3e}, "
            f"tol {self.normalization_tol:.1e})",
            f"commutators={'pass' if self.commutator_ok else 'FAIL'}"
            f" (max scaled norm {self.commutator_norm.max():.3e}, "
            f"tol {self.commutator_tol:.1e})",
            f"worst_sample={self.worst_sample}",
            f"overall={'pass' if self.passed else 'FAIL'}",
        ]
        return '\n'.join(lines)


def _expected_intersection(degrees):
    # degrees sorted descending; i is one-based in the dimension formula
    ks = list(degrees)
    return [i * ks[i - 1] + sum(ks[i:]) - 1 for i in range(1, len(ks) + 1)]


def check_ocf_conditions(p, outputs, degrees, taus, samples, tol=1e-5):
    """Evaluate the OCF existence conditions at sample points.

    Parameters
    ----------
    p : VectorField
        Autonomous dynamics.
    outputs : sequence of ScalarField
        Output components ``q_j``.
    degrees : sequence of int
        Observable relative degrees, one per output.
    taus : sequence of VectorField
        Candidate fields, one per output.
    samples : (S, n) array_like
    tol : float
        Base tolerance; each quantity computed through d nested difference
        layers is compared against ``tol * 10**(d - 1)``.

    Returns
    -------
    ConditionReport

    Notes
    -----
    The intersection-dimension condition is checked via the explicit count
    ``i k_i + k_{i+1} + ... + k_r - 1`` after sorting the degrees in
    decreasing order. The reduced codistribution for output i is spanned by
    ``d L^l q_j`` for ``l < min(k_i, k_j)`` with ``d L^{k_i - 1} q_i``
    removed.
    """
    degrees = tuple(int(k) for k in degrees)
    n = p.dim
    if sum(degrees) != n:
        raise PreconditionError(f"degree sum {sum(degrees)} != state dim {n}")
    if len(outputs) != len(degrees) or len(taus) != len(degrees):
        raise DimensionError("need one output and one tau per degree")
    if any(k < 1 for k in degrees):
        raise PreconditionError("degrees must be positive")
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    if X.shape[0] == 0:
        raise PreconditionError("samples must be nonempty")

    order = sorted(range(len(degrees)), key=lambda j: -degrees[j])
    ks = [degrees[j] for j in order]
    qs = [_as_scalar(outputs[j], n) for j in order]
    ts = [_as_vector(taus[j], n) for j in order]
    r = len(ks)
    kmax = max(ks)
    base = max([q.depth for q in qs] + [t.depth for t in ts] + [p.depth])
    rel = rel_step(base + kmax)

    # dL^l q_j for l < k_j, each (S, n)
    dL = []
    for q, k in zip(qs, ks):
        row = []
        for l in range(k):
            Lq = lie_derivative_field(q, p, l, rel)
            row.append(gradient(Lq, rel)(X))
        dL.append(row)
    obs = [numeric_rank(np.stack([dL[j][l][s] for j in range(r)
                                  for l in range(ks[j])]))
           for s in range(X.shape[0])]

    expected = _expected_intersection(ks)
    inter = []
    for s in range(X.shape[0]):
        dims = []
        for i in range(r):
            rows = [dL[j][l][s] for j in range(r)
                    for l in range(min(ks[i], ks[j]))
                    if not (j == i and l == ks[i] - 1)]
            dims.append(numeric_rank(np.stack(rows)) if rows else 0)
        inter.append(dims)

    # pairing equations; defects grouped by difference depth
    norm_def = np.zeros(X.shape[0])
    norm_tol = np.inf
    failures = []
    for i in range(r):
        for j in range(r):
            lmax = ks[i] if i <= j else ks[j]
            tj = ts[j](X)
            for l in range(1, lmax + 1):
                target = 1.0 if (i == j and l == ks[i]) else 0.0
                val = np.einsum('si,si->s', dL[i][l - 1], tj)
                depth = l + base
                scaled = np.abs(val - target) / 10.0 ** (depth - 1)
                norm_def = np.maximum(norm_def, scaled)
                if np.any(scaled > tol):
                    failures.append(f"<dL^{l - 1} q_{order[i] + 1}, "
                                    f"tau_{order[j] + 1}> != {target:g}")
    norm_tol = tol

    ad = [[ad_power(p, ts[i], l, rel) for l in range(ks[i])] for i in range(r)]
    comm = np.zeros(X.shape[0])
    idx = [(i, l) for i in range(r) for l in range(ks[i])]
    for (i, l), (j, k) in combinations(idx, 2):
        a, b = ad[i][l], ad[j][k]
        br = bracket_field(a, b, rel)
        val = np.linalg.norm(br(X), axis=-1) / 10.0 ** (br.depth - 1)
        comm = np.maximum(comm, val)
        if np.any(val > tol):
            failures.append(f"[ad^{l} tau_{order[i] + 1}, "
                            f"ad^{k} tau_{order[j] + 1}] != 0")

    return ConditionReport(n=n, degrees=tuple(ks), observability_rank=obs,
                           intersection_dims=inter,
                           intersection_expected=expected,
                           normalization_defect=norm_def,
                           commutator_norm=comm, normalization_tol=norm_tol,
                           commutator_tol=tol, failures=failures)


@dataclass
class DiffeoReport:
    roundtrip: np.ndarray
    pushforward: np.ndarray
    tol: float

    @property
    def max_roundtrip(self):
        return float(self.roundtrip.max())

    @property
    def max_pushforward(self):
        return float(self.pushforward.max())

    @property
    def passed(self):
        return self.max_roundtrip <= self.tol and self.max_pushforward <= self.tol


def verify_diffeomorphism(model, samples, tol=1e-6):
    """Check ``phi_inv(phi(w)) = w`` and ``(dphi/dw) p(w) = A0 phi + a(C phi)``.

    The Jacobian of ``phi`` is taken with the five-point stencil at every
    sample; all samples are processed in one batched evaluation.
    """
    if model.phi is None or model.phi_inv is None:
        raise PreconditionError(f"model {model.name!r} carries no "
                                "diffeomorphism")
    W = np.atleast_2d(np.asarray(samples, dtype=float))
    lo, hi = model.domain_box
    outside = np.any((W < lo) | (W > hi), axis=-1)
    if np.any(outside):
        k = int(np.flatnonzero(outside)[0])
        raise DomainError(f"sample {k} lies outside the declared domain box")
    eta = model.phi(W)
    rt = np.linalg.norm(model.phi_inv(eta) - W, axis=-1)
    J = fd_derivative(model.phi, W, rel_step(1), (model.s,))
    lhs = np.einsum('sij,sj->si', J, model.p(W))
    rhs = eta @ model.A0.T + model.a(eta @ model.C.T)
    pf = np.linalg.norm(lhs - rhs, axis=-1)
    return DiffeoReport(roundtrip=rt, pushforward=pf, tol=tol)
