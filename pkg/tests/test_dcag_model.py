import pytest
from hypothesis import given
from hypothesis import strategies as st

from dcag_model import (
    Dcag, Edge, EdgeKind, Gateway, GatewayKind, InferenceError, RootNode, StateIndex,
    StructuralError, ValueNode, complement, illustrative_risk_score, validate, weighted_attack_factor,
)


def codes(report):
    return [violation.code for violation in report]


def test_valid_two_node_graph(two_node_graph):
    assert validate(two_node_graph) == []


def test_probability_out_of_range():
    graph = Dcag(
        roots=(RootNode('R', 1.0),),
        nodes=(ValueNode('A', 1.0),),
        edges=(Edge('R', 'A', EdgeKind.GATED_CROSS_SLICE, 1.5, 1.0),),
    )
    report = validate(graph)
    assert codes(report) == ['probability_out_of_range']
    assert report[0].subject == 'edge R->A'


def test_intensity_sum_mismatch():
    graph = Dcag(
        roots=(RootNode('R', 1.0),),
        nodes=(ValueNode('A', 1.0),),
        edges=(
            Edge('R', 'A', EdgeKind.GATED_CROSS_SLICE, 0.1, 0.75),
            Edge('A', 'A', EdgeKind.SELF_LOOP, 0.9, 0.125),
        ),
    )
    report = validate(graph)
    assert codes(report) == ['intensity_sum_mismatch']
    assert 'intensity sum mismatch' in report[0].message


def test_structural_violations():
    graph = Dcag(
        roots=(RootNode('R', -1.0), RootNode('A', 1.0)),
        nodes=(ValueNode('A', 1.0), ValueNode('B', 1.0)),
        gateways=(Gateway('G', GatewayKind.CONDITIONAL_SUM, ('A', 'Q')),),
        edges=(
            Edge('R', 'A', EdgeKind.SAME_SLICE, 0.5, 1.0),
            Edge('Z', 'G', EdgeKind.SAME_SLICE, 0.5, 1.0),
            Edge('A', 'R', EdgeKind.SELF_LOOP, 0.5, 1.0),
        ),
        system_nodes=('R',),
    )
    found = set(codes(validate(graph)))
    assert {'negative_level', 'duplicate_id', 'unresolved_id', 'missing_gateway_prob',
            'bad_target', 'bad_self_loop', 'no_incoming', 'bad_system_node'} <= found


def test_gateway_cycle_detected():
    graph = Dcag(
        nodes=(ValueNode('A', 1.0),),
        gateways=(
            Gateway('G1', GatewayKind.PLAIN_SUM, ('G2',)),
            Gateway('G2', GatewayKind.PLAIN_SUM, ('G1',)),
        ),
        edges=(Edge('G1', 'A', EdgeKind.GATED_CROSS_SLICE, 0.5, 1.0),),
    )
    assert 'gateway_cycle' in codes(validate(graph))


def test_validate_is_idempotent(two_node_graph):
    broken = Dcag(roots=(RootNode('1bad', 1.0),), nodes=two_node_graph.nodes, edges=two_node_graph.edges)
    assert validate(broken) == validate(broken)


@pytest.mark.parametrize('intensity,r_n,prob,expected', [
    (0.75, 1.0, 0.001, 0.00075),
    (0.0, 1.0, 0.5, 0.0),
    (1.0, 1.0, 1.0, 1.0),
    (0.8, 1.0, 0.7, 0.56),
])
def test_weighted_attack_factor(intensity, r_n, prob, expected):
    graph = Dcag(
        roots=(RootNode('R', 1.0),),
        nodes=(ValueNode('A', r_n),),
        edges=(Edge('R', 'A', EdgeKind.GATED_CROSS_SLICE, prob, intensity),),
    )
    assert weighted_attack_factor(graph, graph.edges[0]) == pytest.approx(expected, abs=1e-18)


def test_weighted_attack_factor_unknown_target(two_node_graph):
    with pytest.raises(StructuralError):
        weighted_attack_factor(two_node_graph, Edge('A', 'Q', EdgeKind.SAME_SLICE, 0.5, 1.0))


@pytest.mark.parametrize('x,expected', [(0.0, 1.0), (1.0, 0.0), (1.2, 0.0), (0.25, 0.75)])
def test_complement(x, expected):
    assert complement(x) == expected


@given(st.floats(min_value=0.0, max_value=1.0))
def test_complement_involution(x):
    assert complement(complement(x)) == pytest.approx(x, abs=1e-15)


def test_illustrative_risk_score():
    assert illustrative_risk_score(2, 0.8, 0.7, 1.0) == 1.12
    assert illustrative_risk_score(3, 0.8, 0.7, 2.0) == 3.36


def test_uniform_gateway_fills_all_entries():
    gateway = Gateway.uniform('G0', GatewayKind.CONDITIONAL_SUM, ['X13', 'X15'], 0.01)
    assert len(gateway.probs) == 8
    assert gateway.prob(StateIndex.BENIGN, 'X15', StateIndex.AT_RISK) == 0.01
    assert gateway.uniform_prob == 0.01
    assert Gateway.uniform('G1', GatewayKind.PLAIN_SUM, ['A']).probs == {}


def test_gateway_missing_entry():
    gateway = Gateway('G', GatewayKind.CONDITIONAL_SUM, ('A',), {(1, 'A', 1): 0.5})
    with pytest.raises(InferenceError):
        gateway.prob(2, 'A', 1)


def test_lookups_and_root_override(two_node_graph):
    assert two_node_graph.kind_of('R0') == 'root'
    assert two_node_graph.kind_of('A') == 'node'
    assert two_node_graph.kind_of('nope') is None
    assert [e.src for e in two_node_graph.incoming('B')] == ['A', 'B']
    with pytest.raises(StructuralError):
        two_node_graph.root('A')

    raised = two_node_graph.with_root_level('R0', 7.0)
    assert raised.root('R0').level == 7.0
    assert two_node_graph.root('R0').level == 1.0


def test_canonical_ignores_declaration_order(two_node_graph):
    reordered = Dcag(
        roots=two_node_graph.roots,
        nodes=tuple(reversed(two_node_graph.nodes)),
        edges=tuple(reversed(two_node_graph.edges)),
        system_nodes=two_node_graph.system_nodes,
    )
    assert reordered.canonical() == two_node_graph.canonical()
