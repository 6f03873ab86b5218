"""Concrete leader and follower systems.

Every map is batched over leading axes: states have shape ``(..., dim)``.
Leaders carry their observable-canonical-form data (``A0``, ``C``, the output
injection ``a``) together with a closed-form diffeomorphism ``phi`` and its
inverse. Followers carry closed-form Lie-derivative maps for feedback
linearization.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import DimensionError, PreconditionError
from .geometry import ScalarField, VectorField

__all__ = ['build_A0_C', 'LeaderModel', 'FollowerModel', 'vdp_leader',
           'esslm_leader', 'example1_leader', 'linear_leader', 'poly_follower',
           'zero_dyn_follower', 'esslm_follower', 'make_leader',
           'make_follower', 'LEADERS', 'FOLLOWERS', 'ESSLM_DEFAULTS']


def build_A0_C(degrees):
    """Block-diagonal nilpotent chain ``A0`` and output selector ``C``.

    Each ``k x k`` block has ones on the subdiagonal; ``C`` picks the last
    coordinate of each block.
    """
    degrees = tuple(int(k) for k in degrees)
    if not degrees:
        raise PreconditionError("degree tuple must be nonempty")
    if any(k < 1 for k in degrees):
        raise PreconditionError(f"degrees must be >= 1, got {degrees}")
    s = sum(degrees)
    A0 = np.zeros((s, s))
    C = np.zeros((len(degrees), s))
    start = 0
    for j, k in enumerate(degrees):
        for i in range(1, k):
            A0[start + i, start + i - 1] = 1.0
        C[j, start + k - 1] = 1.0
        start += k
    return A0, C


@dataclass(frozen=True, eq=False)
class LeaderModel:
    """Autonomous leader ``w' = p(w)``, ``y0 = q(w)`` with OCF data.

    Attributes
    ----------
    output_derivs : callable, optional
        ``(w, order) -> (..., r, order + 1)`` array of ``L_p^j q_k(w)``.
    taus : tuple of callables
        Fields that solve the pairing equations, one per output.
    """

    name: str
    degrees: tuple
    p: Callable
    q: Callable
    a: Callable
    phi: Optional[Callable]
    phi_inv: Optional[Callable]
    domain_box: tuple
    output_derivs: Optional[Callable] = None
    taus: tuple = ()
    params: dict = field(default_factory=dict)
    A0: np.ndarray = None
    C: np.ndarray = None

    def __post_init__(self):
        A0, C = build_A0_C(self.degrees)
        object.__setattr__(self, 'A0', A0)
        object.__setattr__(self, 'C', C)

    @property
    def s(self):
        return self.A0.shape[0]

    @property
    def r(self):
        return self.C.shape[0]

    def p_field(self):
        return VectorField(self.s, self.p, name=f"{self.name}.p")

    def output_fields(self):
        return [ScalarField(self.s, lambda w, k=k: self.q(w)[..., k],
                            name=f"{self.name}.q{k + 1}")
                for k in range(self.r)]

    def tau_fields(self):
        return [VectorField(self.s, t, name=f"{self.name}.tau{k + 1}")
                for k, t in enumerate(self.taus)]

    def ocf_rhs(self, eta):
        """``A0 eta + a(C eta)``."""
        eta = np.asarray(eta, dtype=float)
        return eta @ self.A0.T + self.a(eta @ self.C.T)


@dataclass(frozen=True, eq=False)
class FollowerModel:
    """Input-affine follower ``x' = f(x) + g(x) u``, ``y = h(x)``.

    Attributes
    ----------
    lie_maps : callable
        ``x -> (L, D)`` with ``L[..., k, j] = L_f^j h_k(x)`` for
        ``j <= max(rel_degrees)`` and ``D[..., k, l] = L_{g_l} L_f^{r_k - 1}
        h_k(x)``, the decoupling matrix.
    internal_coords : callable, optional
        ``x -> theta`` completing the normal-form coordinates.
    """

    name: str
    n: int
    m: int
    f: Callable
    g: Callable
    h: Callable
    rel_degrees: tuple
    lie_maps: Callable
    internal_coords: Optional[Callable] = None
    internal_dynamics: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if sum(self.rel_degrees) > self.n:
            raise PreconditionError("relative degree sum exceeds state dim")
        if len(self.rel_degrees) != self.m:
            raise DimensionError("one relative degree per output required")

    @property
    def internal_dim(self):
        return self.n - sum(self.rel_degrees)

    def rhs(self, x, u):
        """``f(x) + g(x) u`` for batched ``x`` and ``u`` of shape (..., m)."""
        return self.f(x) + (self.g(x) @ u[..., None])[..., 0]

    def f_field(self):
        return VectorField(self.n, self.f, name=f"{self.name}.f")

    def g_fields(self):
        return [VectorField(self.n, lambda x, l=l: self.g(x)[..., :, l],
                            name=f"{self.name}.g{l + 1}")
                for l in range(self.m)]

    def output_fields(self):
        return [ScalarField(self.n, lambda x, k=k: self.h(x)[..., k],
                            name=f"{self.name}.h{k + 1}")
                for k in range(self.m)]


def _stack(*cols):
    """Stack components along a new last axis, broadcasting constants."""
    shape = max((np.shape(col) for col in cols), key=len)
    out = np.empty(shape + (len(cols),))
    try:
        for k, col in enumerate(cols):
            out[..., k] = col
    except ValueError:
        return np.stack(np.broadcast_arrays(*cols), axis=-1)
    return out


# --- leaders ---------------------------------------------------------------

def vdp_leader():
    """Van der Pol oscillator ``w1' = w2, w2' = -w1 + (1 - w1^2) w2``."""

    def p(w):
        w1, w2 = w[..., 0], w[..., 1]
        return _stack(w2, -w1 + (1.0 - w1 ** 2) * w2)

    def q(w):
        return w[..., :1]

    def a(y):
        y = y[..., 0]
        return _stack(-y, y - y ** 3 / 3.0)

    def phi(w):
        w1, w2 = w[..., 0], w[..., 1]
        return _stack(-w1 + w1 ** 3 / 3.0 + w2, w1)

    def phi_inv(eta):
        e1, e2 = eta[..., 0], eta[..., 1]
        return _stack(e2, e1 + e2 - e2 ** 3 / 3.0)

    def output_derivs(w, order):
        w = np.asarray(w, dtype=float)
        w1, w2 = w[..., 0], w[..., 1]
        if order > 4:
            raise PreconditionError("closed-form derivatives stop at order 4")
        ys = [w1, w2]
        if order >= 2:
            damp = 1.0 - w1 ** 2
            ys.append(-w1 + damp * w2)
        if order >= 3:
            ys.append(-w2 - 2.0 * w1 * w2 ** 2 + damp * ys[2])
        if order >= 4:
            ys.append(-ys[2] - 2.0 * w2 ** 3 - 6.0 * w1 * w2 * ys[2]
                      + damp * ys[3])
        return _stack(*ys[:order + 1])[..., None, :]

    def tau(w):
        return np.broadcast_to(np.array([0.0, 1.0]), w.shape)

    box = (np.full(2, -3.0), np.full(2, 3.0))
    return LeaderModel('vdp', (2,), p, q, a, phi, phi_inv, box,
                       output_derivs=output_derivs, taus=(tau,))


ESSLM_DEFAULTS = dict(K=10.0, varpi=1.5, m=1.0, d=0.1, J1=5.0, J2=2.0,
                      F1=0.5, F2=0.55, gAcc=10.0)


def _esslm_coeffs(K, varpi, m, d, J1, J2, F1, F2, gAcc):
    alpha = K / (J1 * varpi ** 2)
    beta = K / (J1 * varpi)
    f1 = F1 / J1
    gamma = K / (J2 * varpi)
    kappa = K / J2
    b = m * gAcc * d / J2
    f2 = F2 / J2
    return alpha, beta, f1, gamma, kappa, b, f2


def esslm_leader(K=10.0, varpi=1.5, m=1.0, d=0.1, J1=5.0, J2=2.0, F1=0.5,
                 F2=0.55, gAcc=10.0):
    """Elastic-shaft single-link manipulator with output ``w2``.

    The system is linear apart from ``-b cos(w2)``, so the diffeomorphism is
    linear: ``eta = T w`` with rows built from the output chain and the
    coefficients of the characteristic polynomial of the linear part.
    """
    pars = dict(K=K, varpi=varpi, m=m, d=d, J1=J1, J2=J2, F1=F1, F2=F2,
                gAcc=gAcc)
    for key, val in pars.items():
        if not val > 0:
            raise PreconditionError(f"ESSLM parameter {key} must be positive")
    al, be, f1, ga, ka, b, f2 = _esslm_coeffs(**pars)
    Alin = np.array([[0, 0, 1, 0],
                     [0, 0, 0, 1],
                     [-al, be, -f1, 0],
                     [ga, -ka, 0, -f2]], dtype=float)
    g_dir = np.array([0, 0, 0, 1.0])    # direction of the -b cos(w2) term
    # det(sI - Alin) = s^4 + c3 s^3 + c2 s^2 + c1 s + c0
    c3 = f1 + f2
    c2 = al + ka + f1 * f2
    c1 = al * f2 + ka * f1
    c0 = al * ka - be * ga
    Crow = np.array([0, 1.0, 0, 0])
    T4 = Crow
    T3 = T4 @ Alin + c3 * Crow
    T2 = T3 @ Alin + c2 * Crow
    T1 = T2 @ Alin + c1 * Crow
    T = np.vstack([T1, T2, T3, T4])
    Tinv = np.linalg.inv(T)
    coef = np.array([c0, c1, c2, c3])
    inj = T @ g_dir

    def p(w):
        w1, w2, w3, w4 = (w[..., k] for k in range(4))
        return _stack(w3, w4, -al * w1 + be * w2 - f1 * w3,
                      ga * w1 - ka * w2 - b * np.cos(w2) - f2 * w4)

    def q(w):
        return w[..., 1:2]

    def a(y):
        y = y[..., 0:1]
        return -coef * y + inj * (-b * np.cos(y))

    def phi(w):
        return np.asarray(w, float) @ T.T

    def phi_inv(eta):
        return np.asarray(eta, float) @ Tinv.T

    def output_derivs(w, order):
        w = np.asarray(w, dtype=float)
        w1, w2, w3, w4 = (w[..., k] for k in range(4))
        p3 = -al * w1 + be * w2 - f1 * w3
        y1 = w4
        y2 = ga * w1 - ka * w2 - b * np.cos(w2) - f2 * w4
        y3 = ga * w3 - ka * w4 + b * np.sin(w2) * w4 - f2 * y2
        y4 = (ga * p3 - ka * y2 + b * (np.cos(w2) * w4 ** 2 + np.sin(w2) * y2)
              - f2 * y3)
        ys = [w2, y1, y2, y3, y4]
        if order > 4:
            raise PreconditionError("closed-form derivatives stop at order 4")
        return _stack(*ys[:order + 1])[..., None, :]

    tau_vec = np.array([0, 0, J2 * varpi / K, 0])

    def tau(w):
        return np.broadcast_to(tau_vec, w.shape)

    box = (np.full(4, -10.0), np.full(4, 10.0))
    model = LeaderModel('esslm', (4,), p, q, a, phi, phi_inv, box,
                        output_derivs=output_derivs, taus=(tau,), params=pars)
    object.__setattr__(model, 'T', T)
    object.__setattr__(model, 'charpoly', coef)
    return model


def example1_leader():
    """Four-state, two-output example with degrees {2, 2}; no closed-form phi."""

    def p(w):
        w1, w2, w3, w4 = (w[..., k] for k in range(4))
        return _stack(-w1 * w2 ** 2 + w3, -w1 - w2 * w4,
                      -w3 * w4 ** 2 + w2, -w3)

    def q(w):
        return _stack(w[..., 1], w[..., 3])

    def tau1(w):
        return np.broadcast_to(np.array([-1.0, 0, 0, 0]), w.shape)

    def tau2(w):
        return np.broadcast_to(np.array([0, 0, -1.0, 0]), w.shape)

    def output_derivs(w, order):
        w = np.asarray(w, dtype=float)
        w1, w2, w3, w4 = (w[..., k] for k in range(4))
        if order > 1:
            raise PreconditionError("closed-form derivatives stop at order 1")
        rows = [_stack(w2, -w1 - w2 * w4), _stack(w4, -w3)]
        return np.stack(rows, axis=-2)[..., :order + 1]

    def a(y):
        raise PreconditionError("example1 carries no OCF injection")

    box = (np.full(4, -2.0), np.full(4, 2.0))
    return LeaderModel('example1', (2, 2), p, q, a, None, None, box,
                       output_derivs=output_derivs, taus=(tau1, tau2))


def linear_leader(degrees=(2,)):
    """Pure chain ``w' = A0 w``, ``y = C w``: already in canonical form."""
    A0, C = build_A0_C(degrees)
    s = A0.shape[0]
    kmax = max(degrees)

    def p(w):
        return np.asarray(w, float) @ A0.T

    def q(w):
        return np.asarray(w, float) @ C.T

    def a(y):
        y = np.asarray(y, float)
        return np.zeros(y.shape[:-1] + (s,))

    def ident(w):
        return np.asarray(w, float).copy()

    def output_derivs(w, order):
        w = np.asarray(w, float)
        cols = []
        Ak = np.eye(s)
        for _ in range(order + 1):
            cols.append(w @ (C @ Ak).T)
            Ak = A0 @ Ak
        return np.stack(cols, axis=-1)

    taus = []
    start = 0
    for k in degrees:
        e = np.zeros(s)
        e[start] = 1.0
        taus.append(lambda w, e=e: np.broadcast_to(e, w.shape))
        start += k
    box = (np.full(s, -10.0), np.full(s, 10.0))
    return LeaderModel('linear', tuple(degrees), p, q, a, ident, ident, box,
                       output_derivs=output_derivs, taus=tuple(taus),
                       params={'degrees': list(degrees), 'kmax': kmax})


# --- followers -------------------------------------------------------------

def poly_follower(a_i=2.0):
    """``x1' = x1 + x2``, ``x2' = x1 x2^a + u``, ``y = x1``."""
    a_i = float(a_i)
    ai = int(a_i) if a_i.is_integer() else a_i

    def pw(x2):
        return x2 ** ai

    def f(x):
        x1, x2 = x[..., 0], x[..., 1]
        return _stack(x1 + x2, x1 * pw(x2))

    def g(x):
        out = np.zeros(x.shape[:-1] + (2, 1))
        out[..., 1, 0] = 1.0
        return out

    def h(x):
        return x[..., :1]

    def lie_maps(x):
        x1, x2 = x[..., 0], x[..., 1]
        L = _stack(x1, x1 + x2, x1 + x2 + x1 * pw(x2))[..., None, :]
        D = np.ones(x.shape[:-1] + (1, 1))
        return L, D

    return FollowerModel('poly', 2, 1, f, g, h, (2,), lie_maps,
                         params={'a_i': a_i})


def zero_dyn_follower():
    """Three-state follower with one-dimensional internal dynamics.

    ``x1' = -x1 + e^{2 x2} u``, ``x2' = 2 x1 x2 + sin x2 + u / 2``,
    ``x3' = 2 x2``, ``y = x3``. The internal coordinate
    ``theta = 1 + x1 - e^{2 x2}`` is annihilated by the input field, and its
    dynamics on ``L_f h = 0`` reduce to ``theta' = -theta``.
    """

    def f(x):
        x1, x2 = x[..., 0], x[..., 1]
        return _stack(-x1, 2.0 * x1 * x2 + np.sin(x2), 2.0 * x2)

    def g(x):
        x2 = x[..., 1]
        return _stack(np.exp(2.0 * x2), 0.5 + 0 * x2, 0 * x2)[..., None]

    def h(x):
        return x[..., 2:3]

    def lie_maps(x):
        x1, x2, x3 = (x[..., k] for k in range(3))
        L = _stack(x3, 2.0 * x2, 4.0 * x1 * x2 + 2.0 * np.sin(x2))[..., None, :]
        D = np.ones(x.shape[:-1] + (1, 1))
        return L, D

    def internal_coords(x):
        return (1.0 + x[..., 0] - np.exp(2.0 * x[..., 1]))[..., None]

    def internal_dynamics(theta, zeta2):
        """``theta'`` in normal coordinates, ``zeta2 = L_f h = 2 x2``."""
        ez = np.exp(zeta2)
        return ((1.0 - theta - ez) * (1.0 + 2.0 * zeta2 * ez)
                - 2.0 * np.sin(zeta2 / 2.0) * ez)

    return FollowerModel('zero_dyn', 3, 1, f, g, h, (2,), lie_maps,
                         internal_coords=internal_coords,
                         internal_dynamics=internal_dynamics)


def esslm_follower(c31=4.0 / 3.0, c32=-8.0 / 9.0, c33=-0.1, c41=10.0 / 3.0,
                   c42=-5.0, cos_coef=11.0 / 40.0, c44=-0.275, b_in=0.2):
    """Input-affine ESSLM plant with coefficients as tabulated for followers.

    ``x3' = c31 x1 + c32 x2 + c33 x3 + b_in u`` and
    ``x4' = c41 x1 + c42 x2 - cos_coef cos x2 + c44 x4``, output ``x2``.
    The input reaches the output after four differentiations, so the relative
    degree is 4 and there are no internal dynamics.
    """
    pars = dict(c31=c31, c32=c32, c33=c33, c41=c41, c42=c42,
                cos_coef=cos_coef, c44=c44, b_in=b_in)
    if not b_in != 0 or not c41 != 0:
        raise PreconditionError("input and coupling coefficients must be nonzero")

    def f3(x):
        return c31 * x[..., 0] + c32 * x[..., 1] + c33 * x[..., 2]

    def f(x):
        x1, x2, x3, x4 = (x[..., k] for k in range(4))
        return _stack(x3, x4, f3(x),
                      c41 * x1 + c42 * x2 - cos_coef * np.cos(x2) + c44 * x4)

    gvec = np.array([0, 0, b_in, 0.0])

    def g(x):
        out = np.zeros(x.shape[:-1] + (4, 1))
        out[..., :, 0] = gvec
        return out

    def h(x):
        return x[..., 1:2]

    def lie_maps(x):
        x1, x2, x3, x4 = (x[..., k] for k in range(4))
        L1 = x4
        L2 = c41 * x1 + c42 * x2 - cos_coef * np.cos(x2) + c44 * x4
        k2 = c42 + cos_coef * np.sin(x2)            # d L2 / d x2
        L3 = c41 * x3 + k2 * x4 + c44 * L2
        L4 = (c41 * f3(x) + cos_coef * np.cos(x2) * x4 ** 2 + k2 * L2
              + c44 * L3)
        L = _stack(x2, L1, L2, L3, L4)[..., None, :]
        D = np.full(x.shape[:-1] + (1, 1), c41 * b_in)
        return L, D

    return FollowerModel('esslm_follower', 4, 1, f, g, h, (4,), lie_maps,
                         params=pars)


LEADERS = {'vdp': vdp_leader, 'esslm': esslm_leader,
           'example1': example1_leader, 'linear': linear_leader}
FOLLOWERS = {'poly': poly_follower, 'zero_dyn': zero_dyn_follower,
             'esslm_follower': esslm_follower}


def make_leader(name, params=None):
    try:
        ctor = LEADERS[name]
    except KeyError:
        raise PreconditionError(f"unknown leader model {name!r}; choose from "
                                f"{sorted(LEADERS)}") from None
    try:
        return ctor(**(params or {}))
    except TypeError as exc:
        raise PreconditionError(f"bad parameters for leader {name!r}: "
                                f"{exc}") from None


def make_follower(name, params=None):
    try:
        ctor = FOLLOWERS[name]
    except KeyError:
        raise PreconditionError(f"unknown follower model {name!r}; choose "
                                f"from {sorted(FOLLOWERS)}") from None
    try:
        return ctor(**(params or {}))
    except TypeError as exc:
        raise PreconditionError(f"bad parameters for follower {name!r}: "
                                f"{exc}") from None

