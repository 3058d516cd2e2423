from dataclasses import replace

import pytest
from hypothesis import given, settings

from dcag_model import DcagError, EdgeKind, GatewayKind, NodeKind, StateIndex
from inference_engine import run
from scenario_lang import (
    ParseError, Scenario, ScenarioValidationError, SimConfig, load_scenario, parse_scenario, render_dot,
    render_scenario, save_scenario, scenarios_equivalent, write_sweep_csv, write_trajectory_csv,
)
from strategies import temporal_graphs

SMALL = """
# two servers behind one attack scenario
root Z level 1
node S1 intensity 1 extended
node S2 intensity 1
gateway G csum(S1, S2)
edge Z -> S1 kind gated prob 0.7 intensity 0.8
edge S1 -> S1 kind self prob 0 intensity 0.2
edge G -> S2 kind gated prob 0.5 intensity 0.5 channel tcp
edge S2 -> S2 kind self prob 0.9 intensity 0.5
init S2 0.25
simulate iterations 3 system(S1, S2)
"""


def parse_error(source: str) -> ParseError:
    with pytest.raises(ParseError) as info:
        parse_scenario(source)
    return info.value


def test_parse_small_scenario():
    scenario = parse_scenario(SMALL)
    graph = scenario.graph
    assert graph.root_ids == ['Z']
    assert graph.node('S1').kind is NodeKind.EXTENDED_EXPLOIT
    assert graph.node('S2').kind is NodeKind.EXPLOIT

    gateway = graph.gateway('G')
    assert gateway.kind is GatewayKind.CONDITIONAL_SUM
    assert gateway.prob(StateIndex.AT_RISK, 'S1', StateIndex.AT_RISK) == 1.0

    channel_edge = [e for e in graph.edges if e.src == 'G'][0]
    assert channel_edge.kind is EdgeKind.GATED_CROSS_SLICE
    assert channel_edge.channel == 'tcp'

    assert graph.system_nodes == ('S1', 'S2')
    assert scenario.config.iterations == 3
    assert scenario.config.initial_state == {'S2': 0.25}
    assert scenario.config.inner_tolerance == 1e-12


def test_defaults_without_simulate():
    scenario = parse_scenario("node A intensity 1\nedge A -> A kind self prob 0.5 intensity 1\n")
    assert scenario.config == SimConfig()
    assert scenario.graph.system_nodes == ()


def test_config_defaults_fill_missing_simulate():
    defaults = SimConfig(iterations=7, inner_max_iters=50)
    bare = parse_scenario("node A intensity 1\nedge A -> A kind self prob 0.5 intensity 1\n", defaults)
    assert bare.config.iterations == 7
    assert bare.config.inner_max_iters == 50

    explicit = parse_scenario("node A intensity 1\nedge A -> A kind self prob 0.5 intensity 1\n"
                              "simulate iterations 2\n", defaults)
    assert explicit.config.iterations == 2
    assert explicit.config.inner_max_iters == 50


@pytest.mark.parametrize('source,line,column,fragment', [
    ("root B1 level 1\nfrobnicate X\n", 2, 1, 'unknown keyword'),
    ("node A intensity 1\nedge Q -> A kind same prob 0.5 intensity 1\n", 2, 6, 'unresolved identifier Q'),
    ("root A level 1\nnode A intensity 1\n", 2, 6, 'duplicate identifier A'),
    ("root R level 1\nnode A intensity 1\nedge R -> A kind gated prob 1.5 intensity 1\n", 3, 29, 'probability out of range'),
    ("root R level -2\n", 1, 14, 'negative level'),
    ("root R level 1\nnode A intensity 1\nedge R -> A kind gated prob 0.5 intensity -1\n", 3, 43, 'negative intensity'),
    ("root R level 1 $\n", 1, 16, 'unexpected character'),
    ("root R level\n", 1, 8, 'unexpected end of input'),
    ("root R level", 1, 8, 'unexpected end of input'),
    ("node A intensity 1\nedge A -> A kind self prob 0.9 intensity 1\nsimulate iterations 0\n", 3, 21,
     'expected integer >= 1'),
])
def test_parse_errors_carry_position(source, line, column, fragment):
    error = parse_error(source)
    assert (error.line, error.column) == (line, column)
    assert fragment in error.message


def test_duplicate_simulate():
    error = parse_error("node A intensity 1\nedge A -> A kind self prob 0.5 intensity 1\n"
                       "simulate iterations 1\nsimulate iterations 2\n")
    assert error.line == 4
    assert 'duplicate simulate' in error.message


def test_intensity_mismatch_points_at_node():
    error = parse_error("root R level 1\n"
                        "node A intensity 1\n"
                        "edge R -> A kind gated prob 0.5 intensity 0.75\n"
                        "edge A -> A kind self prob 0.9 intensity 0.125\n")
    assert error.line == 2
    assert 'intensity sum mismatch' in error.message


def test_all_validation_problems_reported():
    error = parse_error("node A intensity 1\n"
                        "node B intensity 1\n"
                        "edge A -> A kind self prob 0.9 intensity 0.5\n"
                        "edge B -> B kind self prob 0.9 intensity 0.5\n")
    assert isinstance(error, ScenarioValidationError)
    positions = {(e.line, e.column) for e in error.errors if 'intensity sum mismatch' in e.message}
    assert positions == {(1, 6), (2, 6)}
    assert (error.line, error.column) in positions


def test_single_parse_error_lists_itself():
    error = parse_error("root R level 1\nfrobnicate X\n")
    assert error.errors == [error]


def test_edge_into_root_rejected():
    error = parse_error("root R level 1\nnode A intensity 1\nedge A -> R kind same prob 0.5 intensity 1\n")
    assert 'must be a value node' in error.message


def test_self_kind_requires_loop():
    error = parse_error("node A intensity 1\nnode B intensity 1\nedge A -> B kind self prob 0.5 intensity 1\n")
    assert error.line == 3


def test_render_round_trip_small():
    scenario = parse_scenario(SMALL)
    rendered = render_scenario(scenario)
    assert scenarios_equivalent(parse_scenario(rendered), scenario)
    assert render_scenario(parse_scenario(rendered)) == rendered


def test_render_rejects_what_the_language_cannot_express():
    scenario = parse_scenario(SMALL)
    with pytest.raises(DcagError, match='iterations'):
        render_scenario(replace(scenario, config=replace(scenario.config, iterations=0)))

    gateway = scenario.graph.gateway('G')
    probs = dict(gateway.probs)
    probs[(int(StateIndex.AT_RISK), 'S1', int(StateIndex.AT_RISK))] = 0.9
    skewed = replace(scenario.graph, gateways=(replace(gateway, probs=probs),))
    with pytest.raises(DcagError, match='non-uniform'):
        render_scenario(replace(scenario, graph=skewed))


def test_render_order():
    lines = render_scenario(parse_scenario(SMALL)).splitlines()
    keywords = [line.split()[0] for line in lines]
    assert keywords == ['root', 'node', 'node', 'gateway', 'edge', 'edge', 'edge', 'edge', 'init', 'simulate']
    assert lines[-1] == 'simulate iterations 3 system(S1, S2) tolerance 1e-12 inner_max 10000'


@pytest.mark.parametrize('name', ['ctcs3_default.dcag', 'ctcs3_cbi.dcag'])
def test_bundled_files_round_trip(bundled_path, name):
    scenario = load_scenario(bundled_path(name))
    assert scenarios_equivalent(parse_scenario(render_scenario(scenario)), scenario)


@settings(max_examples=200, deadline=None)
@given(graph=temporal_graphs())
def test_generated_scenarios_round_trip(graph):
    scenario = Scenario(graph, SimConfig(iterations=2))
    assert scenarios_equivalent(parse_scenario(render_scenario(scenario)), scenario)


def test_scenarios_equivalent_detects_difference():
    a = parse_scenario(SMALL)
    b = parse_scenario(SMALL.replace('prob 0.7', 'prob 0.6'))
    assert not scenarios_equivalent(a, b)


def test_save_and_load(tmp_path):
    scenario = parse_scenario(SMALL)
    path = tmp_path / 'small.dcag'
    save_scenario(str(path), scenario)
    assert scenarios_equivalent(load_scenario(str(path)), scenario)


def test_render_dot():
    assert render_dot(parse_scenario("").graph) == 'digraph dcag { }'

    dot = render_dot(parse_scenario(SMALL).graph)
    assert dot.startswith('digraph dcag {')
    assert '"Z" [shape=box' in dot
    assert '"S1" [shape=ellipse];' in dot
    assert '"G" [shape=diamond' in dot
    assert '"Z" -> "S1" [style=dashed' in dot
    assert '"S1" -> "S1" [style=dotted' in dot
    assert dot.rstrip().endswith('}')


def test_trajectory_csv():
    traj = run(parse_scenario(SMALL))
    lines = write_trajectory_csv(traj).splitlines()
    assert lines[0] == 't,S1,S2,system_risk'
    assert len(lines) == 1 + 4
    assert lines[1] == '0,0.000000000,0.250000000,0.125000000'


def test_sweep_csv():
    text = write_sweep_csv([(1.0, 0.5), (2.0, 0.25)])
    assert text == 'level,system_risk\n1,0.500000000\n2,0.250000000\n'


def test_sim_config_validation():
    with pytest.raises(ValueError):
        SimConfig(iterations=-1)
    with pytest.raises(ValueError):
        SimConfig(inner_tolerance=0.0)
    with pytest.raises(ValueError):
        SimConfig(initial_state={'A': 2.0})
    assert SimConfig.from_config({'iterations': 10}).iterations == 10
    assert SimConfig.from_config(None) == SimConfig()
