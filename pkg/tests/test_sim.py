import numpy as np
import pytest

from distobs.cli import bundled_scenarios
from distobs.control import closed_loop_xi_matrix, tracking_coords
from distobs.exceptions import DivergenceError, PreconditionError
from distobs.models import make_leader
from distobs.scenario import load_scenario
from distobs.sim import (build_system, csv_header, fit_decay_rate, rk4_step,
                         simulate, tracking_metrics, write_csv)


def scenario(name, **changes):
    return load_scenario(bundled_scenarios()[name]).replace(**changes)


def exact_init(sc):
    eta0 = make_leader(sc.leader).phi(np.array(sc.leader_initial))
    return tuple(tuple(eta0) for _ in range(sc.nodes))


def test_rk4_order():
    f = lambda y: np.array([y[1], -y[0] - 0.3 * y[1]])

    def err(dt):
        y = np.array([1.0, 0.0])
        for _ in range(int(round(2.0 / dt))):
            y = rk4_step(f, y, dt)
        fine = np.array([1.0, 0.0])
        for _ in range(int(round(2.0 / 1e-4))):
            fine = rk4_step(f, fine, 1e-4)
        return np.abs(y - fine).max()

    order = np.log2(err(0.1) / err(0.05))
    assert order >= 3.5


def test_rk4_guards():
    with pytest.raises(PreconditionError):
        rk4_step(lambda y: y, np.ones(1), 0.0)
    with pytest.raises(DivergenceError):
        rk4_step(lambda y: np.full_like(y, np.inf), np.ones(1), 0.1)


def test_fit_decay_rate_exact_exponential():
    t = np.linspace(0, 10, 1001)
    fit = fit_decay_rate(t, 3.0 * np.exp(-2.0 * t))
    assert fit.rate == pytest.approx(-2.0, abs=1e-12)
    assert fit.residual < 1e-12
    rate, res = fit_decay_rate(t, np.exp(-t) + 1e-30, t_start=2.0)
    assert rate == pytest.approx(-1.0, abs=1e-9)


def test_fit_decay_rate_stops_at_floor():
    t = np.linspace(0, 10, 101)
    v = np.maximum(np.exp(-5.0 * t), 1e-16)
    fit = fit_decay_rate(t, v)
    assert fit.rate == pytest.approx(-5.0, abs=1e-9)
    assert fit.samples < len(t)
    with pytest.raises(PreconditionError):
        fit_decay_rate(t, np.zeros_like(t))
    with pytest.raises(PreconditionError):
        fit_decay_rate(t, t[:-1])


def test_consensus_manifold_is_invariant():
    sc = scenario('vdp-observer', T=5.0)
    tr = simulate(sc.replace(observer_initial=exact_init(sc)))
    assert np.abs(tr.e).max() <= 1e-7


def test_distributed_equals_oracle_with_exact_estimates():
    sc = scenario('vdp-mixed-followers', T=4.0)
    sc = sc.replace(observer_initial=exact_init(sc))
    dist = simulate(sc)
    orc = simulate(sc.replace(mode='oracle-control'))
    assert np.abs(dist.y - orc.y).max() <= 1e-7
    assert np.abs(dist.u - orc.u).max() <= 1e-6


def test_closed_loop_tracking_errors_follow_placed_dynamics():
    sc = scenario('vdp-mixed-followers', T=3.0, record_every=1,
                  mode='oracle-control')
    sys = build_system(sc)
    tr = simulate(sc, sys)
    for i in (0, 1):
        g = sys.followers[i]
        xi = tracking_coords(g.model, tr.x[i], tr.w, sys.leader).xi
        dt = tr.t[1] - tr.t[0]
        dxi = (xi[2:] - xi[:-2]) / (2 * dt)
        fit, *_ = np.linalg.lstsq(xi[1:-1], dxi, rcond=None)
        assert np.abs(fit.T - closed_loop_xi_matrix(g.gain)).max() <= 1e-3


def test_observer_trajectory_layout():
    tr = simulate(scenario('vdp-observer', T=1.0))
    assert tr.t.shape == (101,)
    assert tr.w.shape == (101, 2)
    assert tr.etahat.shape == tr.what.shape == tr.e.shape == (101, 5, 2)
    assert tr.coords == 'canonical'
    assert np.allclose(tr.e, tr.etahat - make_leader('vdp').phi(tr.w)[:, None])
    with pytest.raises(PreconditionError):
        tracking_metrics(tr)


def test_baseline_mode_uses_original_coordinates():
    tr = simulate(scenario('vdp-baseline', T=1.0))
    assert tr.coords == 'original'
    assert np.allclose(tr.e, tr.what - tr.w[:, None])


def test_tracking_metrics_and_csv(tmp_path):
    sc = scenario('vdp-mixed-followers', T=0.5)
    tr = simulate(sc)
    met = tracking_metrics(tr)
    assert met['final'].shape == (5,)
    assert met['theta_max'][0] == 0.0 and met['theta_max'][1] > 0.0
    path = write_csv(tr, tmp_path / 'tr.csv')
    lines = path.read_text().splitlines()
    header = lines[0].split(',')
    assert header == csv_header(tr)
    assert len(lines) == len(tr.t) + 1
    assert len(lines[1].split(',')) == len(header)
    assert 'u[3]' in header and 'eps[5]' in header and 'x[2][3]' in header


def test_divergence_carries_partial_trajectory():
    sc = scenario('vdp-observer', dt=0.5, T=200.0, c=40.0, record_every=1)
    with pytest.raises(DivergenceError) as info:
        simulate(sc)
    tr = info.value.trajectory
    assert tr.diverged and 1 <= len(tr.t) < sc.steps + 1


def test_follower_count_mismatch():
    sc = scenario('vdp-mixed-followers')
    with pytest.raises(PreconditionError):
        build_system(sc.replace(leader_initial=(1.0, 2.0, 3.0)))
