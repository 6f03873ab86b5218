import json

import pytest

from distobs.cli import bundled_scenarios
from distobs.scenario import ScenarioError, load_scenario, parse_scenario, ring_arcs


def base_doc():
    return {'leader': {'model': 'vdp', 'initial_state': [2.0, 0.0]},
            'graph': {'nodes': 3, 'arcs': list(ring_arcs(3)), 'pins': [1]},
            'gains': {'c': 10}, 'integration': {'dt': 0.01, 'T': 1.0}}


@pytest.mark.parametrize('name', sorted(bundled_scenarios()))
def test_bundled_scenarios_roundtrip(name):
    sc = load_scenario(bundled_scenarios()[name])
    assert parse_scenario(json.loads(sc.to_json())) == sc
    assert sc.seed == 1 and sc.dt == 1e-3 and sc.T == 20


def test_defaults():
    sc = parse_scenario(base_doc())
    assert sc.mode == 'observer-only' and sc.steps == 100
    assert sc.graph().n == 3 and sc.mu == 1.0


@pytest.mark.parametrize('patch,msg', [
    ({'extra': 1}, "unknown"),
    ({'leader': {'model': 'vdp'}}, "initial_state"),
    ({'graph': {'nodes': 0}}, "graph.nodes"),
    ({'graph': {'nodes': 3, 'arcs': ['1 -> 9'], 'pins': [1]}}, "graph."),
    ({'gains': {'c': 10, 'c_multiplier': 2}}, "either"),
    ({'gains': {'c': -1}}, "gains.c"),
    ({'integration': {'dt': 0.0}}, "integration.dt"),
    ({'integration': {'seed': -1}}, "integration.seed"),
    ({'mode': 'teleport'}, "mode"),
    ({'mode': 'distributed-control'}, "followers"),
    ({'followers': [{'model': 'poly'}]}, "expected 3 entries"),
])
def test_validation_messages(patch, msg):
    doc = base_doc()
    doc.update(patch)
    with pytest.raises(ScenarioError, match=msg):
        parse_scenario(doc)


def test_malformed_json_reports_position(tmp_path):
    p = tmp_path / 'bad.json'
    p.write_text('{"leader": ,}')
    with pytest.raises(ScenarioError, match="line 1, column"):
        load_scenario(p)


def test_replace_revalidates():
    sc = parse_scenario(base_doc())
    with pytest.raises(ScenarioError):
        sc.replace(record_every=0)
