"""Experiment descriptions and their JSON form.

A scenario document looks like::

    {
      "leader":   {"model": "vdp", "params": {}, "initial_state": [2, 0]},
      "graph":    {"nodes": 5, "arcs": ["1 -> 2", ...], "pins": [1]},
      "followers": [{"model": "poly", "params": {"a_i": 2},
                     "initial_state": [0.1, 0.2], "poles": [-2, -6]}, ...],
      "observer": {"init_radius": 2.0},
      "gains":    {"Q_scale": 1, "R_scale": 1, "c": 10, "mu": 1,
                   "output_box": [-2, 2]},
      "integration": {"dt": 0.001, "T": 20, "seed": 1, "record_every": 1},
      "mode": "distributed-control"
    }

Node labels in ``arcs`` and ``pins`` are one-based.
"""

import json
import math
from dataclasses import dataclass, field

from .exceptions import PreconditionError
from .graph import parse_arcs

__all__ = ['Scenario', 'FollowerSpec', 'MODES', 'load_scenario',
           'parse_scenario', 'ScenarioError', 'ring_arcs', 'draw_uniform']

MODES = ('observer-only', 'distributed-control', 'oracle-control',
         'baseline-observer')


class ScenarioError(PreconditionError):
    """Invalid scenario document; the message names the offending field."""


def _num(value, where, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{where}: expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ScenarioError(f"{where}: must be finite")
    if positive and not value > 0:
        raise ScenarioError(f"{where}: must be positive, got {value}")
    return value


def _vec(value, where, length=None):
    if not isinstance(value, (list, tuple)):
        raise ScenarioError(f"{where}: expected a list of numbers")
    out = tuple(_num(v, f"{where}[{k}]") for k, v in enumerate(value))
    if length is not None and len(out) != length:
        raise ScenarioError(f"{where}: expected {length} entries, got "
                            f"{len(out)}")
    return out


def _obj(doc, key, where, required=True):
    if key not in doc:
        if required:
            raise ScenarioError(f"{where}: missing field '{key}'")
        return {}
    val = doc[key]
    if not isinstance(val, dict):
        raise ScenarioError(f"{where}.{key}: expected an object")
    return val


def _check_keys(doc, allowed, where):
    extra = sorted(set(doc) - set(allowed))
    if extra:
        raise ScenarioError(f"{where}: unknown field(s) {extra}")


@dataclass(frozen=True)
class FollowerSpec:
    model: str
    params: dict = field(default_factory=dict)
    initial_state: tuple = None
    poles: tuple = None

    def to_dict(self):
        d = {'model': self.model, 'params': dict(self.params)}
        if self.initial_state is not None:
            d['initial_state'] = list(self.initial_state)
        if self.poles is not None:
            d['poles'] = [list(p) for p in self.poles]
        return d


@dataclass(frozen=True)
class Scenario:
    """Full, validated experiment description."""

    leader: str
    leader_params: dict
    leader_initial: tuple
    nodes: int
    arcs: tuple
    pins: tuple
    followers: tuple = ()
    observer_initial: tuple = None
    init_radius: float = 1.0
    follower_radius: float = 1.0
    Q_scale: float = 1.0
    R_scale: float = 1.0
    c: float = None
    c_multiplier: float = None
    mu: float = 1.0
    output_box: tuple = (-2.0, 2.0)
    dt: float = 1e-3
    T: float = 20.0
    seed: int = 0
    record_every: int = 1
    mode: str = 'observer-only'

    def __post_init__(self):
        if not self.dt > 0:
            raise ScenarioError("integration.dt: must be positive")
        if self.T < self.dt:
            raise ScenarioError("integration.T: must be at least dt")
        if self.mode not in MODES:
            raise ScenarioError(f"mode: expected one of {list(MODES)}, got "
                                f"{self.mode!r}")
        if self.followers and len(self.followers) != self.nodes:
            raise ScenarioError(f"followers: expected {self.nodes} entries "
                                f"(one per graph node), got "
                                f"{len(self.followers)}")
        if self.mode in ('distributed-control', 'oracle-control') \
                and not self.followers:
            raise ScenarioError(f"followers: mode {self.mode!r} needs one "
                                "follower per node")
        if self.c is not None and self.c_multiplier is not None:
            raise ScenarioError("gains: give either 'c' or 'c_multiplier'")
        if self.record_every < 1:
            raise ScenarioError("integration.record_every: must be >= 1")

    @property
    def steps(self):
        return int(round(self.T / self.dt))

    def graph(self):
        return parse_arcs(self.nodes, self.arcs, self.pins)

    def to_dict(self):
        obs = {'init_radius': self.init_radius}
        if self.observer_initial is not None:
            obs['initial'] = [list(r) for r in self.observer_initial]
        gains = {'Q_scale': self.Q_scale, 'R_scale': self.R_scale,
                 'mu': self.mu, 'output_box': list(self.output_box)}
        if self.c is not None:
            gains['c'] = self.c
        if self.c_multiplier is not None:
            gains['c_multiplier'] = self.c_multiplier
        return {
            'leader': {'model': self.leader, 'params': dict(self.leader_params),
                       'initial_state': list(self.leader_initial)},
            'graph': {'nodes': self.nodes, 'arcs': list(self.arcs),
                      'pins': list(self.pins)},
            'followers': [f.to_dict() for f in self.followers],
            'follower_radius': self.follower_radius,
            'observer': obs,
            'gains': gains,
            'integration': {'dt': self.dt, 'T': self.T, 'seed': self.seed,
                            'record_every': self.record_every},
            'mode': self.mode,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc):
        return parse_scenario(doc)

    def replace(self, **changes):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(changes)
        return Scenario(**d)


def parse_scenario(doc):
    """Validate a decoded scenario document and build a :class:`Scenario`."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario: top level must be an object")
    _check_keys(doc, {'leader', 'graph', 'followers', 'observer', 'gains',
                      'integration', 'mode', 'follower_radius', 'name',
                      'description'}, 'scenario')
    ld = _obj(doc, 'leader', 'scenario')
    _check_keys(ld, {'model', 'params', 'initial_state'}, 'leader')
    if not isinstance(ld.get('model'), str):
        raise ScenarioError("leader.model: expected a model name string")
    lparams = ld.get('params', {}) or {}
    if not isinstance(lparams, dict):
        raise ScenarioError("leader.params: expected an object")
    if 'initial_state' not in ld:
        raise ScenarioError("leader: missing field 'initial_state'")
    w0 = _vec(ld['initial_state'], 'leader.initial_state')

    gd = _obj(doc, 'graph', 'scenario')
    _check_keys(gd, {'nodes', 'arcs', 'pins'}, 'graph')
    nodes = gd.get('nodes')
    if isinstance(nodes, bool) or not isinstance(nodes, int) or nodes < 1:
        raise ScenarioError("graph.nodes: expected a positive integer")
    arcs = gd.get('arcs', [])
    if not isinstance(arcs, list) or not all(isinstance(a, str) for a in arcs):
        raise ScenarioError("graph.arcs: expected a list of 'j -> i' strings")
    pins = gd.get('pins', [])
    if not isinstance(pins, list) or not all(
            isinstance(p, int) and not isinstance(p, bool) for p in pins):
        raise ScenarioError("graph.pins: expected a list of node numbers")
    try:
        parse_arcs(nodes, arcs, pins)
    except PreconditionError as exc:
        raise ScenarioError(f"graph.{exc}") from None

    fl = doc.get('followers', [])
    if not isinstance(fl, list):
        raise ScenarioError("followers: expected a list")
    followers = []
    for k, fd in enumerate(fl):
        where = f"followers[{k}]"
        if not isinstance(fd, dict):
            raise ScenarioError(f"{where}: expected an object")
        _check_keys(fd, {'model', 'params', 'initial_state', 'poles'}, where)
        if not isinstance(fd.get('model'), str):
            raise ScenarioError(f"{where}.model: expected a model name string")
        params = fd.get('params', {}) or {}
        if not isinstance(params, dict):
            raise ScenarioError(f"{where}.params: expected an object")
        x0 = fd.get('initial_state')
        x0 = None if x0 is None else _vec(x0, f"{where}.initial_state")
        poles = fd.get('poles')
        if poles is not None:
            if poles and not isinstance(poles[0], list):
                poles = [poles]
            poles = tuple(_vec(p, f"{where}.poles[{j}]")
                          for j, p in enumerate(poles))
        followers.append(FollowerSpec(fd['model'], dict(params), x0, poles))

    od = _obj(doc, 'observer', 'scenario', required=False)
    _check_keys(od, {'initial', 'init_radius'}, 'observer')
    obs_init = None
    if 'initial' in od:
        rows = od['initial']
        if not isinstance(rows, list) or len(rows) != nodes:
            raise ScenarioError(f"observer.initial: expected {nodes} rows")
        obs_init = tuple(_vec(r, f"observer.initial[{i}]")
                         for i, r in enumerate(rows))
    radius = _num(od.get('init_radius', 1.0), 'observer.init_radius')

    gn = _obj(doc, 'gains', 'scenario', required=False)
    _check_keys(gn, {'Q_scale', 'R_scale', 'c', 'c_multiplier', 'mu',
                     'output_box'}, 'gains')
    c = gn.get('c')
    c = None if c is None else _num(c, 'gains.c', positive=True)
    cm = gn.get('c_multiplier')
    cm = None if cm is None else _num(cm, 'gains.c_multiplier', positive=True)
    box = _vec(gn.get('output_box', [-2.0, 2.0]), 'gains.output_box', 2)

    it = _obj(doc, 'integration', 'scenario', required=False)
    _check_keys(it, {'dt', 'T', 'seed', 'record_every'}, 'integration')
    seed = it.get('seed', 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ScenarioError("integration.seed: expected a non-negative integer")
    rec = it.get('record_every', 1)
    if isinstance(rec, bool) or not isinstance(rec, int):
        raise ScenarioError("integration.record_every: expected an integer")
    mode = doc.get('mode', 'observer-only')
    if not isinstance(mode, str):
        raise ScenarioError("mode: expected a string")

    return Scenario(
        leader=ld['model'], leader_params=dict(lparams), leader_initial=w0,
        nodes=nodes, arcs=tuple(arcs), pins=tuple(pins),
        followers=tuple(followers), observer_initial=obs_init,
        init_radius=radius,
        follower_radius=_num(doc.get('follower_radius', 1.0),
                             'follower_radius'),
        Q_scale=_num(gn.get('Q_scale', 1.0), 'gains.Q_scale', positive=True),
        R_scale=_num(gn.get('R_scale', 1.0), 'gains.R_scale', positive=True),
        c=c, c_multiplier=cm,
        mu=_num(gn.get('mu', 1.0), 'gains.mu', positive=True),
        output_box=box,
        dt=_num(it.get('dt', 1e-3), 'integration.dt', positive=True),
        T=_num(it.get('T', 20.0), 'integration.T', positive=True),
        seed=seed, record_every=rec, mode=mode)


def load_scenario(path):
    """Read and validate a scenario JSON file.

    Raises
    ------
    ScenarioError
        With line and column for malformed JSON, or the field path for
        semantic problems.
    """
    with open(path, encoding='utf-8') as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno}, column {exc.colno}: "
                            f"{exc.msg}") from None
    return parse_scenario(doc)


def ring_arcs(n):
    """One-based arc strings of the directed ring 1 -> 2 -> ... -> n -> 1."""
    return tuple(f"{k} -> {k % n + 1}" for k in range(1, n + 1)) if n > 1 else ()


def draw_uniform(rng, radius, shape):
    return radius * rng.uniform(-1.0, 1.0, size=shape)

