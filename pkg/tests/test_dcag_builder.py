import pytest
from hypothesis import given, settings

from dcag_builder import Asset, AttackGraph, AttackType, ConversionPolicy, Link, convert
from dcag_model import ConversionError, EdgeKind, GatewayKind, NodeKind, validate
from logger import load_config
from strategies import ATTACK_TAGS, PROTOCOLS, attack_graphs


@pytest.fixture
def policy():
    return ConversionPolicy(
        default_self_persistence=0.9,
        default_cond_prob={'malware': 0.001, 'network': 0.0001, 'tcp': 0.5},
        default_intensity={'malware': 0.75, 'network': 0.125},
    )


@pytest.fixture
def central_attack_graph():
    # роутер X13 и интерфейс X15 связаны с сервером X11 и рабочей станцией X14
    return AttackGraph(
        assets=(
            Asset('X11', {'malware'}),
            Asset('X13', {'malware', 'network'}),
            Asset('X14', {'malware'}),
            Asset('X15', {'malware', 'network'}),
        ),
        links=(
            Link('X13', 'X11', 'tcp'), Link('X13', 'X14', 'tcp'),
            Link('X15', 'X11', 'tcp'), Link('X15', 'X14', 'tcp'),
            Link('X14', 'X11', 'tcp'), Link('X11', 'X14', 'tcp'),
        ),
        attack_types=(AttackType('malware', 2.0), AttackType('network', 1.0)),
    )


def test_convert_central_subsystem(central_attack_graph, policy):
    graph = convert(central_attack_graph, policy)
    assert validate(graph) == []
    assert graph.root_ids == ['malware', 'network']
    assert graph.node_ids == ['X11', 'X13', 'X14', 'X15']
    assert sum(1 for e in graph.edges if e.kind is EdgeKind.SELF_LOOP) == 4

    assert len(graph.gateways) == 1
    gateway = graph.gateways[0]
    assert gateway.id == 'G0'
    assert gateway.kind is GatewayKind.CONDITIONAL_SUM
    assert gateway.parents == ('X13', 'X15')
    assert gateway.uniform_prob == policy.gateway_prob


def test_gateway_replaces_links(central_attack_graph, policy):
    graph = convert(central_attack_graph, policy)
    sources = {e.src for e in graph.edges if e.kind is EdgeKind.SAME_SLICE}
    assert sources == {'X11', 'X14'}

    into_x11 = [e for e in graph.incoming('X11') if e.src == 'G0']
    assert len(into_x11) == 1
    edge = into_x11[0]
    assert edge.kind is EdgeKind.GATED_CROSS_SLICE
    assert edge.cond_prob == 0.5
    assert edge.intensity == pytest.approx(2.0)
    assert edge.channel is None


def test_intensities_and_kinds(central_attack_graph, policy):
    graph = convert(central_attack_graph, policy)
    # malware 0.75 + X14 1.0 + G0 2.0 + self 1.0
    assert graph.node('X11').total_intensity == pytest.approx(4.75)
    # malware 0.75 + network 0.125 + self 1.0
    assert graph.node('X13').total_intensity == pytest.approx(1.875)
    assert graph.node('X11').kind is NodeKind.EXTENDED_EXPLOIT
    assert graph.node('X13').kind is NodeKind.EXPLOIT

    x14_link = [e for e in graph.incoming('X11') if e.src == 'X14'][0]
    assert x14_link.channel == 'tcp'
    self_loop = [e for e in graph.incoming('X13') if e.kind is EdgeKind.SELF_LOOP][0]
    assert self_loop.cond_prob == 0.9


def test_convert_is_deterministic(central_attack_graph, policy):
    assert convert(central_attack_graph, policy).canonical() == convert(central_attack_graph, policy).canonical()


def test_threshold_suppresses_gateway(central_attack_graph, policy):
    strict = ConversionPolicy(
        default_cond_prob=policy.default_cond_prob,
        default_intensity=policy.default_intensity,
        gateway_threshold=3,
    )
    graph = convert(central_attack_graph, strict)
    assert graph.gateways == ()
    assert len([e for e in graph.edges if e.kind is EdgeKind.SAME_SLICE]) == 6


def test_missing_cond_prob_names_tag(central_attack_graph):
    policy = ConversionPolicy(default_cond_prob={'malware': 0.001, 'network': 0.0001},
                              default_intensity={'malware': 0.75, 'network': 0.125})
    with pytest.raises(ConversionError) as info:
        convert(central_attack_graph, policy)
    assert info.value.tag == 'tcp'


def test_missing_intensity_names_tag(central_attack_graph, policy):
    sparse = ConversionPolicy(default_cond_prob=policy.default_cond_prob,
                              default_intensity={'malware': 0.75})
    with pytest.raises(ConversionError) as info:
        convert(central_attack_graph, sparse)
    assert info.value.tag == 'network'


def test_invalid_attack_graph(policy):
    ag = AttackGraph(
        assets=(Asset('A', {'phishing'}),),
        links=(Link('A', 'B', 'tcp'),),
        attack_types=(AttackType('malware', 1.0),),
    )
    problems = ag.validate()
    assert any('unknown asset B' in p for p in problems)
    assert any('undeclared attack type phishing' in p for p in problems)
    with pytest.raises(ConversionError):
        convert(ag, policy)


def test_gateway_name_avoids_asset_ids(policy):
    ag = AttackGraph(
        assets=(Asset('G0', {'malware'}), Asset('A', {'malware'}), Asset('B', {'malware'})),
        links=(Link('A', 'G0', 'tcp'), Link('B', 'G0', 'tcp')),
        attack_types=(AttackType('malware', 1.0),),
    )
    graph = convert(ag, policy)
    assert graph.gateway_ids == ['G1']


def test_policy_from_config():
    section = load_config()['conversion']
    policy = ConversionPolicy.from_config(section)
    assert policy.default_cond_prob['tcp'] == 0.5
    assert policy.default_intensity['malware'] == 0.75
    assert policy.gateway_threshold == 2
    with pytest.raises(ValueError):
        ConversionPolicy(default_cond_prob={'tcp': 1.5})


def test_convert_defaults_to_config_policy(central_attack_graph, policy):
    assert convert(central_attack_graph).canonical() == convert(central_attack_graph, policy).canonical()


def test_empty_attack_graph(policy):
    dcag = convert(AttackGraph(), policy)
    assert (dcag.roots, dcag.nodes, dcag.gateways, dcag.edges) == ((), (), (), ())
    assert validate(dcag) == []


@settings(max_examples=200, deadline=None)
@given(ag=attack_graphs())
def test_generated_attack_graphs_convert_cleanly(ag):
    policy = ConversionPolicy(
        default_cond_prob={**{tag: 0.01 for tag in ATTACK_TAGS}, **{p: 0.5 for p in PROTOCOLS}},
        default_intensity={tag: 0.5 for tag in ATTACK_TAGS},
    )
    dcag = convert(ag, policy)
    assert validate(dcag) == []

    self_loops = [e for e in dcag.edges if e.kind is EdgeKind.SELF_LOOP]
    assert len(self_loops) == len(ag.assets)
    assert sorted(dcag.root_ids) == sorted(attack.tag for attack in ag.attack_types)
    assert not set(dcag.root_ids) & {asset.id for asset in ag.assets}
