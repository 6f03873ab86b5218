"""Fixed-step simulation of leader, observer network and followers.

The coupled state is ``[w, eta_hat (N x s), x_1, ..., x_N]`` integrated by
classical RK4 on one time grid. Derived series (estimates in the original
coordinates, controls, tracking errors) are recomputed from the recorded
states after integration, with the same batched functions used inside the
right-hand side.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .control import FeedbackGain, control_batch, leader_output_derivs
from .exceptions import DivergenceError, PreconditionError
from .graph import pinned_matrix
from .models import make_follower, make_leader
from .observer import design_gain
from .scenario import draw_uniform

__all__ = ['rk4_step', 'simulate', 'build_system', 'Trajectory',
           'fit_decay_rate', 'DecayFit', 'tracking_metrics', 'write_csv',
           'csv_header', 'DIVERGENCE_LIMIT']

DIVERGENCE_LIMIT = 1e9


def rk4_step(derivative, state, dt):
    """One classical fourth-order Runge-Kutta step."""
    if not dt > 0:
        raise PreconditionError("dt must be positive")
    k1 = derivative(state)
    k2 = derivative(state + 0.5 * dt * k1)
    k3 = derivative(state + 0.5 * dt * k2)
    k4 = derivative(state + dt * k3)
    out = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise DivergenceError("non-finite state after RK4 step")
    return out


@dataclass
class _Group:
    """Followers sharing one model instance and one feedback gain."""

    model: object
    gain: FeedbackGain
    index: list
    offset: int = 0

    @property
    def size(self):
        return len(self.index) * self.model.n


@dataclass
class System:
    scenario: object
    leader: object
    graph: object
    gain: object
    groups: list
    followers: list
    y0: np.ndarray
    N: int

    @property
    def s(self):
        return self.leader.s

    @property
    def has_followers(self):
        return bool(self.groups)


def build_system(sc):
    """Instantiate models, design the observer gain and draw initial states."""
    leader = make_leader(sc.leader, sc.leader_params)
    s = leader.s
    if len(sc.leader_initial) != s:
        raise PreconditionError(f"leader.initial_state: expected {s} entries")
    if sc.mode != 'baseline-observer' and leader.phi is None:
        raise PreconditionError(f"leader {sc.leader!r} has no canonical-form "
                                "map; only check-geometry supports it")
    graph = sc.graph()
    N = graph.n
    gain = design_gain(leader, graph, Q=sc.Q_scale * np.eye(s),
                       R=sc.R_scale * np.eye(s), c_multiplier=sc.c_multiplier,
                       c=sc.c)
    rng = np.random.default_rng(sc.seed)
    if sc.observer_initial is not None:
        H0 = np.array(sc.observer_initial, dtype=float)
        if H0.shape != (N, s):
            raise PreconditionError(f"observer.initial: expected {N} rows of "
                                    f"{s} entries")
    else:
        H0 = draw_uniform(rng, sc.init_radius, (N, s))

    followers, groups, keyed = [], [], {}
    use_followers = sc.mode in ('distributed-control', 'oracle-control')
    x0 = []
    if use_followers:
        for i, spec in enumerate(sc.followers):
            fm = make_follower(spec.model, spec.params)
            if fm.m != leader.r:
                raise PreconditionError(f"followers[{i}]: {fm.m} outputs but "
                                        f"the leader has {leader.r}")
            if spec.poles is not None:
                K = FeedbackGain.from_poles(spec.poles)
                if K.degrees != tuple(fm.rel_degrees):
                    raise PreconditionError(
                        f"followers[{i}].poles: chain lengths {K.degrees} do "
                        f"not match relative degrees {fm.rel_degrees}")
            else:
                K = FeedbackGain.default(fm.rel_degrees)
            key = (spec.model, json.dumps(spec.params, sort_keys=True),
                   K.poles)
            if key not in keyed:
                keyed[key] = _Group(fm, K, [])
                groups.append(keyed[key])
            keyed[key].index.append(i)
            followers.append(keyed[key])
            if spec.initial_state is not None:
                if len(spec.initial_state) != fm.n:
                    raise PreconditionError(f"followers[{i}].initial_state: "
                                            f"expected {fm.n} entries")
                x0.append(np.array(spec.initial_state, float))
            else:
                x0.append(draw_uniform(rng, sc.follower_radius, (fm.n,)))
    parts = [np.array(sc.leader_initial, float), H0.ravel()]
    off = s + N * s
    for g in groups:
        g.offset = off
        parts.append(np.concatenate([x0[i] for i in g.index]))
        off += g.size
    return System(sc, leader, graph, gain, groups, followers,
                  np.concatenate(parts), N)


def _make_rhs(sys):
    sc = sys.scenario
    m = sys.leader
    s, N = m.s, sys.N
    A0T, CT, FT = m.A0.T, m.C.T, sys.gain.F.T
    Pm = pinned_matrix(sys.graph)
    b = sys.graph.pins[:, None]
    c = sys.gain.c
    baseline = sc.mode == 'baseline-observer'
    oracle = sc.mode == 'oracle-control'
    groups = sys.groups
    end = s + N * s
    rmax = max((max(g.model.rel_degrees) for g in groups), default=0)
    plan = [(g, slice(g.offset, g.offset + g.size), np.array(g.index),
             (len(g.index), g.model.n)) for g in groups]

    def rhs(y):
        w = y[:s]
        H = y[s:end].reshape(N, s)
        out = np.empty_like(y)
        out[:s] = m.p(w)
        if baseline:
            dH = m.p(H) + c * (b * w - Pm @ H)
        else:
            dH = H @ A0T + m.a(H @ CT) + c * ((b * m.phi(w) - Pm @ H) @ FT)
        out[s:end] = dH.ravel()
        if groups:
            # leader output derivatives, once per evaluation for all nodes
            if oracle:
                Y = leader_output_derivs(m, w, rmax)
            else:
                What = H if baseline else m.phi_inv(H)
                Y = leader_output_derivs(m, What, rmax)
            for g, sl, idx, shape in plan:
                X = y[sl].reshape(shape)
                Yg = Y if oracle else Y[idx]
                u = control_batch(g.model, X, None, m, g.gain, Y=Yg)
                out[sl] = g.model.rhs(X, u).ravel()
        return out

    return rhs


@dataclass
class Trajectory:
    """Recorded run; all series share the time grid ``t``.

    ``e`` is the observer error in the observer's own coordinates
    (canonical form, or original coordinates for the baseline observer).
    ``eps[:, i, k]`` is ``y_i - y0`` per output.
    """

    t: np.ndarray
    w: np.ndarray
    etahat: np.ndarray
    what: np.ndarray
    e: np.ndarray
    y0: np.ndarray = None
    x: list = field(default_factory=list)
    y: np.ndarray = None
    u: np.ndarray = None
    eps: np.ndarray = None
    theta: list = field(default_factory=list)
    mode: str = 'observer-only'
    diverged: bool = False
    coords: str = 'canonical'

    @property
    def e_norm(self):
        return np.linalg.norm(self.e, axis=-1)

    @property
    def e_total(self):
        return np.linalg.norm(self.e.reshape(len(self.t), -1), axis=-1)

    @property
    def N(self):
        return self.etahat.shape[1]


def _assemble(sys, t, Y, diverged=False):
    sc = sys.scenario
    m = sys.leader
    s, N = m.s, sys.N
    w = Y[:, :s]
    H = Y[:, s:s + N * s].reshape(len(t), N, s)
    baseline = sc.mode == 'baseline-observer'
    if baseline:
        what = H
        etahat = m.phi(H) if m.phi is not None else H
        e = H - w[:, None, :]
    else:
        etahat = H
        what = m.phi_inv(H)
        e = H - m.phi(w)[:, None, :]
    traj = Trajectory(t=t, w=w, etahat=etahat, what=what, e=e, y0=m.q(w),
                      mode=sc.mode, diverged=diverged,
                      coords='original' if baseline else 'canonical')
    if sys.groups:
        mo = m.r
        xs = [None] * N
        us = np.zeros((len(t), N, mo))
        ys = np.zeros((len(t), N, mo))
        thetas = [None] * N
        for g in sys.groups:
            k, n = len(g.index), g.model.n
            X = Y[:, g.offset:g.offset + k * n].reshape(len(t), k, n)
            ref = (np.broadcast_to(w[:, None, :], (len(t), k, s))
                   if sc.mode == 'oracle-control' else what[:, g.index])
            with np.errstate(all='ignore'):
                try:
                    U = control_batch(g.model, X, ref, m, g.gain)
                except ArithmeticError:
                    U = np.full((len(t), k, mo), np.nan)
            Yk = g.model.h(X)
            for j, i in enumerate(g.index):
                xs[i] = X[:, j]
                us[:, i] = U[:, j]
                ys[:, i] = Yk[:, j]
                thetas[i] = (g.model.internal_coords(X[:, j])
                             if g.model.internal_coords is not None
                             else np.zeros((len(t), 0)))
        traj.x = xs
        traj.u = us
        traj.eps = ys - traj.y0[:, None, :]
        traj.theta = thetas
        traj.y = ys
    return traj


def simulate(sc, system=None):
    """Integrate a scenario with fixed-step RK4.

    Raises
    ------
    DivergenceError
        When any state component leaves ``[-1e9, 1e9]``; the recorded prefix
        is attached as ``exc.trajectory``.
    """
    sys = build_system(sc) if system is None else system
    rhs = _make_rhs(sys)
    dt, steps, every = sc.dt, sc.steps, sc.record_every
    nrec = steps // every + 1
    Y = np.empty((nrec, sys.y0.size))
    t = np.arange(nrec) * (dt * every)
    y = sys.y0.copy()
    Y[0] = y
    rec = 1
    for k in range(1, steps + 1):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.abs(y).max() <= DIVERGENCE_LIMIT:
            traj = _assemble(sys, t[:rec], Y[:rec], diverged=True)
            raise DivergenceError(
                f"state norm exceeded {DIVERGENCE_LIMIT:g} at t = {k * dt:.6g}",
                trajectory=traj)
        if k % every == 0:
            Y[rec] = y
            rec += 1
    return _assemble(sys, t[:rec], Y[:rec])


@dataclass(frozen=True)
class DecayFit:
    rate: float
    residual: float
    samples: int

    def __iter__(self):
        return iter((self.rate, self.residual))


def fit_decay_rate(t, series, t_start=0.0, floor=None):
    """Least-squares slope of ``log(series)`` over ``t >= t_start``.

    Parameters
    ----------
    t, series : (T,) array_like
    t_start : float
    floor : float, optional
        Numerical floor; the fit stops at the first sample at or below it so
        that the roundoff and discretization plateau stays out. Defaults to
        ``1e-8`` times the series maximum.

    Returns
    -------
    DecayFit
        ``rate`` in 1/s and the RMS ``residual`` of the log fit; ``samples``
        counts the points used.
    """
    t = np.asarray(t, float)
    v = np.asarray(series, float)
    if t.shape != v.shape:
        raise PreconditionError("t and series must have equal shape")
    if floor is None:
        floor = 1e-8 * float(np.max(v, initial=0.0))
    sel = t >= t_start
    below = np.flatnonzero(sel & (v <= floor))
    if below.size:
        sel[below[0]:] = False
    if sel.sum() < 2:
        raise PreconditionError("fewer than two samples above the floor")
    tt, lv = t[sel], np.log(v[sel])
    A = np.stack([tt, np.ones_like(tt)], axis=1)
    coef, *_ = np.linalg.lstsq(A, lv, rcond=None)
    res = lv - A @ coef
    return DecayFit(rate=float(coef[0]),
                    residual=float(np.sqrt(np.mean(res ** 2))),
                    samples=int(sel.sum()))


def tracking_metrics(traj):
    """Per-follower tracking summary.

    Returns
    -------
    dict
        ``sup_tail`` (max ``|eps|`` over the last quarter), ``final``
        (``|eps(T)|``), ``theta_max`` (max internal-state norm), plus the
        divergence flag.
    """
    if traj.eps is None:
        raise PreconditionError("trajectory has no follower data")
    T = traj.t[-1]
    tail = traj.t >= 0.75 * T
    err = np.abs(traj.eps).max(axis=-1)
    return {
        'sup_tail': err[tail].max(axis=0),
        'final': err[-1],
        'theta_max': np.array([np.linalg.norm(th, axis=-1).max()
                               if th.shape[-1] else 0.0
                               for th in traj.theta]),
        'diverged': traj.diverged,
    }


def csv_header(traj):
    s = traj.w.shape[1]
    N = traj.N
    cols = ['t'] + [f"w[{k + 1}]" for k in range(s)]
    cols += [f"etahat[{i + 1}][{k + 1}]" for i in range(N) for k in range(s)]
    cols += [f"what[{i + 1}][{k + 1}]" for i in range(N) for k in range(s)]
    if traj.x:
        for i, x in enumerate(traj.x):
            cols += [f"x[{i + 1}][{k + 1}]" for k in range(x.shape[1])]
        m = traj.u.shape[2]
        cols += ([f"u[{i + 1}]" for i in range(N)] if m == 1 else
                 [f"u[{i + 1}][{k + 1}]" for i in range(N) for k in range(m)])
    cols += [f"e_norm[{i + 1}]" for i in range(N)]
    if traj.x:
        cols += ([f"eps[{i + 1}]" for i in range(N)] if m == 1 else
                 [f"eps[{i + 1}][{k + 1}]" for i in range(N) for k in range(m)])
    return cols


def write_csv(traj, path):
    """Write every recorded series with 17 significant digits."""
    T = len(traj.t)
    blocks = [traj.t[:, None], traj.w, traj.etahat.reshape(T, -1),
              traj.what.reshape(T, -1)]
    if traj.x:
        blocks += list(traj.x)
        blocks.append(traj.u.reshape(T, -1))
    blocks.append(traj.e_norm)
    if traj.x:
        blocks.append(traj.eps.reshape(T, -1))
    data = np.hstack(blocks)
    np.savetxt(path, data, fmt='%.17g', delimiter=',',
               header=','.join(csv_header(traj)), comments='')
    return path
