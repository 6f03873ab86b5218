import numpy as np
import pytest
from hypothesis import given, strategies as st

from distobs.exceptions import DimensionError, DomainError, PreconditionError
from distobs.graph import DirectedGraph, coupling_bound, pinned_matrix, ring
from distobs.linalg import is_hurwitz
from distobs.models import make_leader
from distobs.observer import (ObserverNetwork, assemble_M, baseline_rhs,
                              convergence_certificate, design_gain,
                              estimates_in_original_coords, lemma2_check,
                              lipschitz_matrix, observer_rhs)

seeds = st.integers(0, 2 ** 32 - 1)


@pytest.fixture(scope='module')
def vdp():
    return make_leader('vdp')


def test_design_gain_defaults(vdp):
    g = ring(5)
    gain = design_gain(vdp, g)
    assert gain.c == pytest.approx(coupling_bound(g))
    assert np.allclose(gain.F, gain.P1 @ np.linalg.inv(gain.R))
    assert is_hurwitz(assemble_M(vdp.A0, gain.F, gain.c, pinned_matrix(g)))
    assert design_gain(vdp, g, c_multiplier=2.0).c == pytest.approx(2 * gain.c)


def test_design_gain_rejections(vdp):
    g = ring(5)
    with pytest.raises(PreconditionError, match="below the bound"):
        design_gain(vdp, g, c=1.0)
    with pytest.raises(PreconditionError, match="multiplier"):
        design_gain(vdp, g, c_multiplier=0.5)
    with pytest.raises(DimensionError):
        design_gain(vdp, g, Q=np.eye(3))
    with pytest.raises(PreconditionError, match="Assumption 2"):
        design_gain(vdp, DirectedGraph(np.zeros((2, 2)), [1.0, 0.0]))


def test_esslm_gain():
    m = make_leader('esslm')
    gain = design_gain(m, ring(5), Q=25 * np.eye(4), c=5.0)
    assert np.allclose(gain.F, gain.F.T)
    assert np.linalg.eigvalsh(gain.F).min() > 0


def test_assemble_M_blocks(vdp):
    F = np.array([[1.0, 2.0], [3.0, 4.0]])
    LB = pinned_matrix(ring(3))
    M = assemble_M(vdp.A0, F, 0.5, LB)
    assert M.shape == (6, 6)
    assert np.allclose(M[0:2, 0:2], vdp.A0 - 0.5 * LB[0, 0] * F)
    assert np.allclose(M[2:4, 0:2], -0.5 * LB[1, 0] * F)
    with pytest.raises(DimensionError):
        assemble_M(vdp.A0, np.eye(3), 1.0, LB)


@given(seeds, st.floats(0.01, 5.0))
def test_lemma2_matches_full_spectrum(seed, c):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    A = (rng.random((n, n)) < 0.4).astype(float)
    np.fill_diagonal(A, 0.0)
    b = np.ones(n)
    LB = pinned_matrix(DirectedGraph(A, b))
    A0 = np.diag(np.ones(2), -1)
    F = rng.uniform(-2, 2, (3, 3))
    assert lemma2_check(A0, F, c, LB) == is_hurwitz(assemble_M(A0, F, c, LB))


def test_consensus_is_invariant(vdp):
    g = ring(5)
    gain = design_gain(vdp, g, c=10.0)
    eta0 = vdp.phi(np.array([2.0, 0.0]))
    net = ObserverNetwork(vdp, g, gain, np.tile(eta0, (5, 1)))
    d = observer_rhs(net, eta0)
    assert np.allclose(d, np.tile(vdp.ocf_rhs(eta0), (5, 1)), atol=1e-15)
    w = np.array([0.5, -1.0])
    db = baseline_rhs(np.tile(w, (5, 1)), w, vdp, 10.0, g)
    assert np.allclose(db, np.tile(vdp.p(w), (5, 1)))


def test_pinning_pulls_toward_leader(vdp):
    g = DirectedGraph(np.zeros((1, 1)), [1.0])
    gain = design_gain(vdp, g, c=10.0)
    net = ObserverNetwork(vdp, g, gain, np.zeros((1, 2)))
    eta0 = np.array([1.0, 0.0])
    d = observer_rhs(net, eta0)
    assert np.allclose(d[0], 10.0 * gain.F @ eta0)


def test_network_shape_and_inverse(vdp):
    g = ring(2)
    gain = design_gain(vdp, g, c=10.0)
    with pytest.raises(DimensionError):
        ObserverNetwork(vdp, g, gain, np.zeros((3, 2)))
    W = np.array([[1.0, 0.5], [-0.3, 0.2]])
    net = ObserverNetwork(vdp, g, gain, vdp.phi(W))
    assert np.allclose(estimates_in_original_coords(net), W)
    ess = make_leader('esslm')
    bad = ObserverNetwork(ess, g, design_gain(ess, g, c=5.0), np.zeros((2, 4)))
    with pytest.raises(DomainError), np.errstate(invalid='ignore'):
        estimates_in_original_coords(bad, np.full((2, 4), np.inf))


def test_lipschitz_matrix_vdp(vdp):
    # a(y) = (-y, y - y^3 / 3): sup |a1'| = 1, sup |a2'| = |1 - y^2| = 3 on [-2, 2]
    L = lipschitz_matrix(vdp, (-2.0, 2.0))
    assert np.allclose(L, [[1.0], [3.0]], atol=1e-8)
    with pytest.raises(PreconditionError):
        lipschitz_matrix(vdp, (2.0, -2.0))


def test_certificate_vdp(vdp):
    g = ring(5)
    certs = [convergence_certificate(vdp, design_gain(vdp, g, c=c), g, 1.0)
             for c in (10.0, 20.0, 40.0)]
    for cert in certs:
        assert cert.alpha == pytest.approx(np.sqrt(10.0), abs=1e-7)
        assert cert.kappa_bound == pytest.approx(cert.alpha * cert.P2_max)
        assert cert.decay_rate_bound == pytest.approx(
            -2.0 / cert.P2_max + cert.alpha / 2.0)
        assert cert.kappa_bound_corrected == pytest.approx(2 * cert.kappa_bound)
        assert cert.decay_rate_bound_corrected == pytest.approx(
            -2.0 / cert.P2_max + cert.alpha)
        assert cert.sufficient
        assert np.linalg.eigvalsh(cert.P2).max() == pytest.approx(cert.P2_max)
    kappas = [c.kappa_bound for c in certs]
    assert kappas[0] > kappas[1] > kappas[2]
    assert [round(c.decay_rate_bound, 2) for c in certs] == [-0.82, -2.62, -6.02]


def test_certificate_linear_leader():
    m = make_leader('linear')
    g = ring(5)
    cert = convergence_certificate(m, design_gain(m, g, c=10.0), g, mu=1.0)
    assert cert.alpha == 0.0
    assert cert.decay_rate_bound == pytest.approx(-2.0 / cert.P2_max)
    assert cert.sufficient and cert.sufficient_corrected
