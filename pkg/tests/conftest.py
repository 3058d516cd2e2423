import os

import pytest

from ctcs_case import CtcsOptions, build_ctcs
from dcag_model import Dcag, Edge, EdgeKind, RootNode, ValueNode

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SCENARIO_DIR = os.path.join(REPO_ROOT, 'scenarios')


@pytest.fixture(scope='session')
def ctcs_scenario():
    return build_ctcs(CtcsOptions())


@pytest.fixture(scope='session')
def ctcs_cbi_scenario():
    return build_ctcs(CtcsOptions(cbi_functional_safety=True))


@pytest.fixture
def two_node_graph():
    # R0 -> A -> B, по самопетле у каждого
    return Dcag(
        roots=(RootNode('R0', 1.0),),
        nodes=(ValueNode('A', 1.0), ValueNode('B', 1.0)),
        edges=(
            Edge('R0', 'A', EdgeKind.GATED_CROSS_SLICE, 0.5, 0.75),
            Edge('A', 'A', EdgeKind.SELF_LOOP, 0.9, 0.25),
            Edge('A', 'B', EdgeKind.SAME_SLICE, 0.5, 0.5),
            Edge('B', 'B', EdgeKind.SELF_LOOP, 0.9, 0.5),
        ),
        system_nodes=('A', 'B'),
    )


@pytest.fixture
def oscillating_graph():
    # A <-> B без затухания: Якоби не сходится из (1, 0)
    return Dcag(
        nodes=(ValueNode('A', 1.0), ValueNode('B', 1.0)),
        edges=(
            Edge('A', 'B', EdgeKind.SAME_SLICE, 1.0, 1.0),
            Edge('B', 'A', EdgeKind.SAME_SLICE, 1.0, 1.0),
        ),
    )


@pytest.fixture
def cli_config(tmp_path):
    """config.yaml без файлового лога"""
    path = tmp_path / 'config.yaml'
    path.write_text("logging:\n  level: INFO\n  console_level: WARNING\n  file: null\n", encoding='utf-8')
    return str(path)


@pytest.fixture
def bundled_path():
    def _path(name: str) -> str:
        return os.path.join(SCENARIO_DIR, name)
    return _path
