"""
DCAG Model - типы динамического причинного графа атак (DCAG) и структурная валидация

Граф неизменяем после создания: всё состояние симуляции живёт снаружи
(см. inference_engine.SliceState).
"""

import math
import re
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from fractions import Fraction
from functools import cached_property
from typing import Dict, List, Optional, Tuple

import networkx as nx

from logger import get_logger

logger = get_logger()

NODE_ID_PATTERN = re.compile(r'^[A-Za-z][A-Za-z0-9_]*$')
INTENSITY_TOLERANCE = 1e-9


# ============ ОШИБКИ ============

class DcagError(Exception):
    """Базовая ошибка DCAG"""


class StructuralError(DcagError):
    """Неизвестный идентификатор или некорректная форма графа"""


class InferenceError(DcagError):
    """Ошибка вычисления (шлюзы, статический вывод, симуляция)"""


class ConvergenceError(InferenceError):
    """Внутренний решатель среза не сошёлся"""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ConversionError(DcagError):
    """Ошибка преобразования attack graph -> DCAG"""

    def __init__(self, tag: str, message: str):
        super().__init__(message)
        self.tag = tag


class OracleError(DcagError):
    """Эталонный вычислитель вышел за свои границы"""


# ============ ПЕРЕЧИСЛЕНИЯ ============

class StateIndex(IntEnum):
    """Состояние узла: 1 - атака произошла, 2 - безопасное"""
    AT_RISK = 1
    BENIGN = 2


class NodeKind(Enum):
    EXPLOIT = "exploit"
    EXTENDED_EXPLOIT = "extended"


class GatewayKind(Enum):
    CONDITIONAL_SUM = "csum"
    PLAIN_SUM = "sum"


class EdgeKind(Enum):
    SAME_SLICE = "same"
    GATED_CROSS_SLICE = "gated"
    SELF_LOOP = "self"


# ============ ТИПЫ ============

@dataclass(frozen=True)
class RootNode:
    """Корневой узел - сценарий атаки с уровнем риска (может быть > 1)"""
    id: str
    level: float


@dataclass(frozen=True)
class ValueNode:
    """Узел эксплойта X_n с суммарной причинной интенсивностью r_n"""
    id: str
    total_intensity: float
    kind: NodeKind = NodeKind.EXPLOIT


@dataclass(frozen=True)
class Gateway:
    """
    Логический шлюз

    probs: (состояние шлюза, родитель, состояние родителя) -> A_{g,k;p,j}.
    PlainSum probs игнорирует.
    """
    id: str
    kind: GatewayKind
    parents: Tuple[str, ...]
    probs: Dict[Tuple[int, str, int], float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, 'parents', tuple(self.parents))

    @classmethod
    def uniform(cls, gateway_id: str, kind: GatewayKind, parents, prob: float = 1.0) -> 'Gateway':
        """
        Шлюз с одной вероятностью для всех элементов A

        Args:
            gateway_id: Идентификатор шлюза
            kind: Тип шлюза
            parents: Упорядоченные родители
            prob: Вероятность распространения риска

        Returns:
            Gateway
        """
        parents = tuple(parents)
        probs: Dict[Tuple[int, str, int], float] = {}
        if kind is GatewayKind.CONDITIONAL_SUM:
            for parent in parents:
                for state in StateIndex:
                    for parent_state in StateIndex:
                        probs[(int(state), parent, int(parent_state))] = prob
        return cls(gateway_id, kind, parents, probs)

    def prob(self, state: int, parent: str, parent_state: int) -> float:
        key = (int(state), parent, int(parent_state))
        if key not in self.probs:
            raise InferenceError(
                f"шлюз {self.id}: нет элемента A({int(state)};{parent},{int(parent_state)})"
            )
        return self.probs[key]

    @property
    def uniform_prob(self) -> Optional[float]:
        """Единая вероятность, если все элементы A равны (иначе None)"""
        values = set(self.probs.values())
        if not values:
            return None
        return values.pop() if len(values) == 1 else None


@dataclass(frozen=True)
class Edge:
    """
    Причинная связь src -> dst

    cond_prob - a_{n,1;src,1}, intensity - r_{n;src}.
    channel различает параллельные связи (например, X5 -> X7 по двум протоколам).
    """
    src: str
    dst: str
    kind: EdgeKind
    cond_prob: float
    intensity: float
    channel: Optional[str] = None


@dataclass(frozen=True)
class Violation:
    """Нарушение инварианта графа"""
    code: str
    subject: str
    message: str

    def __str__(self) -> str:
        return self.message


ValidationReport = List[Violation]


@dataclass(frozen=True)
class Dcag:
    """Динамический причинный граф атак"""
    roots: Tuple[RootNode, ...] = ()
    nodes: Tuple[ValueNode, ...] = ()
    gateways: Tuple[Gateway, ...] = ()
    edges: Tuple[Edge, ...] = ()
    system_nodes: Tuple[str, ...] = ()

    def __post_init__(self):
        for name in ('roots', 'nodes', 'gateways', 'edges', 'system_nodes'):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @cached_property
    def _index(self) -> Dict[str, Tuple[str, object]]:
        index: Dict[str, Tuple[str, object]] = {}
        for root in self.roots:
            index[root.id] = ('root', root)
        for node in self.nodes:
            index[node.id] = ('node', node)
        for gateway in self.gateways:
            index[gateway.id] = ('gateway', gateway)
        return index

    @cached_property
    def _incoming(self) -> Dict[str, Tuple[Edge, ...]]:
        incoming: Dict[str, List[Edge]] = {node.id: [] for node in self.nodes}
        for edge in self.edges:
            incoming.setdefault(edge.dst, []).append(edge)
        return {node_id: tuple(edges) for node_id, edges in incoming.items()}

    @property
    def root_ids(self) -> List[str]:
        return [root.id for root in self.roots]

    @property
    def node_ids(self) -> List[str]:
        return [node.id for node in self.nodes]

    @property
    def gateway_ids(self) -> List[str]:
        return [gateway.id for gateway in self.gateways]

    def kind_of(self, node_id: str) -> Optional[str]:
        """'root' / 'node' / 'gateway' или None для неизвестного id"""
        entry = self._index.get(node_id)
        return entry[0] if entry else None

    def _lookup(self, node_id: str, kind: str):
        entry = self._index.get(node_id)
        if entry is None or entry[0] != kind:
            raise StructuralError(f"неизвестный {kind}: {node_id}")
        return entry[1]

    def root(self, node_id: str) -> RootNode:
        return self._lookup(node_id, 'root')

    def node(self, node_id: str) -> ValueNode:
        return self._lookup(node_id, 'node')

    def gateway(self, node_id: str) -> Gateway:
        return self._lookup(node_id, 'gateway')

    def incoming(self, node_id: str) -> Tuple[Edge, ...]:
        """Входящие связи узла в порядке объявления"""
        return self._incoming.get(node_id, ())

    def with_root_level(self, root_id: str, level: float) -> 'Dcag':
        """Копия графа с переопределённым уровнем корня"""
        self.root(root_id)
        roots = tuple(RootNode(r.id, level) if r.id == root_id else r for r in self.roots)
        return replace(self, roots=roots)

    def canonical(self) -> Tuple:
        """Порядко-независимое представление для структурного сравнения"""
        gateways = tuple(sorted(
            (g.id, g.kind.value, g.parents, tuple(sorted(g.probs.items())))
            for g in self.gateways
        ))
        edges = tuple(sorted(
            (e.src, e.dst, e.kind.value, e.channel or '', e.cond_prob, e.intensity)
            for e in self.edges
        ))
        return (
            tuple(sorted((r.id, r.level) for r in self.roots)),
            tuple(sorted((n.id, n.kind.value, n.total_intensity) for n in self.nodes)),
            gateways,
            edges,
            tuple(self.system_nodes),
        )


# ============ ОПЕРАЦИИ ============

def clamp_risk(x: float) -> float:
    """Обрезать значение риска в [0, 1]"""
    return min(max(x, 0.0), 1.0)


def complement(x: float) -> float:
    """X_{n,2} = 1 - X_{n,1}, обрезанное в [0, 1]"""
    return clamp_risk(1.0 - x)


def _is_probability(x: float) -> bool:
    return math.isfinite(x) and 0.0 <= x <= 1.0


def validate(graph: Dcag) -> ValidationReport:
    """
    Проверить все структурные инварианты графа

    Args:
        graph: Граф DCAG

    Returns:
        Список нарушений (пустой = граф корректен)
    """
    report: ValidationReport = []

    def add(code: str, subject: str, message: str):
        report.append(Violation(code, subject, message))

    # Идентификаторы
    seen = set()
    declared = [r.id for r in graph.roots] + [n.id for n in graph.nodes] + [g.id for g in graph.gateways]
    for node_id in declared:
        if not NODE_ID_PATTERN.match(node_id or ''):
            add('invalid_id', str(node_id), f"invalid identifier {node_id!r}")
        if node_id in seen:
            add('duplicate_id', node_id, f"duplicate identifier {node_id}")
        seen.add(node_id)

    for root in graph.roots:
        if not (math.isfinite(root.level) and root.level >= 0):
            add('negative_level', root.id, f"root {root.id}: level {root.level} must be >= 0")

    for node in graph.nodes:
        if not (math.isfinite(node.total_intensity) and node.total_intensity > 0):
            add('nonpositive_intensity', node.id,
                f"node {node.id}: total intensity {node.total_intensity} must be > 0")

    # Шлюзы
    gateway_graph = nx.DiGraph()
    for gateway in graph.gateways:
        gateway_graph.add_node(gateway.id)
        if not gateway.parents:
            add('empty_gateway', gateway.id, f"gateway {gateway.id}: no parents")
        for parent in gateway.parents:
            kind = graph.kind_of(parent)
            if kind is None:
                add('unresolved_id', gateway.id, f"gateway {gateway.id}: unresolved parent {parent}")
            elif kind == 'gateway':
                gateway_graph.add_edge(parent, gateway.id)
        for key, prob in gateway.probs.items():
            if not _is_probability(prob):
                add('probability_out_of_range', gateway.id,
                    f"gateway {gateway.id}: probability out of range A{key} = {prob}")
        if gateway.kind is GatewayKind.CONDITIONAL_SUM:
            for parent in gateway.parents:
                for state in (StateIndex.AT_RISK, StateIndex.BENIGN):
                    if (int(state), parent, int(StateIndex.AT_RISK)) not in gateway.probs:
                        add('missing_gateway_prob', gateway.id,
                            f"gateway {gateway.id}: missing A({int(state)};{parent},1)")
    if not nx.is_directed_acyclic_graph(gateway_graph):
        cycle = nx.find_cycle(gateway_graph)
        path = ' -> '.join(src for src, _ in cycle)
        add('gateway_cycle', cycle[0][0], f"gateway cycle: {path}")

    # Связи
    for edge in graph.edges:
        label = f"edge {edge.src}->{edge.dst}"
        if graph.kind_of(edge.src) is None:
            add('unresolved_id', label, f"{label}: unresolved source {edge.src}")
        dst_kind = graph.kind_of(edge.dst)
        if dst_kind is None:
            add('unresolved_id', label, f"{label}: unresolved target {edge.dst}")
        elif dst_kind != 'node':
            add('bad_target', label, f"{label}: target {edge.dst} is a {dst_kind}, not a value node")
        if not _is_probability(edge.cond_prob):
            add('probability_out_of_range', label, f"{label}: probability out of range {edge.cond_prob}")
        if not (math.isfinite(edge.intensity) and edge.intensity >= 0):
            add('negative_intensity', label, f"{label}: intensity {edge.intensity} must be >= 0")
        if edge.kind is EdgeKind.SELF_LOOP and edge.src != edge.dst:
            add('bad_self_loop', label, f"{label}: self loop requires src == dst")
        if edge.kind is not EdgeKind.SELF_LOOP and edge.src == edge.dst:
            add('bad_self_loop', label, f"{label}: {edge.kind.value} edge cannot be a self reference")

    # Суммарная интенсивность
    for node in graph.nodes:
        incoming = graph.incoming(node.id)
        if not incoming:
            add('no_incoming', node.id, f"node {node.id}: no incoming edges")
            continue
        total = math.fsum(edge.intensity for edge in incoming)
        if abs(total - node.total_intensity) > INTENSITY_TOLERANCE:
            add('intensity_sum_mismatch', node.id,
                f"node {node.id}: intensity sum mismatch {total:g} != {node.total_intensity:g}")

    node_set = set(graph.node_ids)
    for node_id in graph.system_nodes:
        if node_id not in node_set:
            add('bad_system_node', node_id, f"system node {node_id} is not a value node")

    return report


def _decimal(value: float) -> Fraction:
    # десятичное значение в записи числа, без хвоста двоичного округления
    return Fraction(repr(float(value)))


def weighted_attack_factor(graph: Dcag, edge: Edge) -> float:
    """
    Взвешенное событие атаки F = (r_{n;i} / r_n) * a

    Считается в десятичной арифметике: 0.8 * 0.7 даёт ровно 0.56.

    Args:
        graph: Граф
        edge: Связь (dst должен быть узлом графа)

    Returns:
        Эффективный коэффициент передачи риска по связи
    """
    node = graph.node(edge.dst)
    if node.total_intensity <= 0:
        raise StructuralError(f"node {node.id}: total intensity must be > 0")
    return float(_decimal(edge.intensity) / _decimal(node.total_intensity) * _decimal(edge.cond_prob))


def illustrative_risk_score(servers: int = 2, trigger: float = 0.8,
                            spread: float = 0.7, level: float = 1.0) -> float:
    """
    Оценка риска сети из нескольких серверов, уязвимых к одному сценарию атаки

    Каждый сервер - узел с r_n = 1: связь от корня несёт интенсивность trigger
    и вероятность spread, остаток интенсивности уходит на самопетлю.

    Returns:
        level * sum(F) по связям от корня
    """
    if not 0.0 <= trigger <= 1.0:
        raise StructuralError(f"trigger {trigger} must be in [0, 1]")
    root = RootNode('Z0', level)
    nodes = tuple(ValueNode(f"S{i + 1}", 1.0) for i in range(servers))
    attack_edges = tuple(
        Edge(root.id, node.id, EdgeKind.GATED_CROSS_SLICE, spread, trigger) for node in nodes
    )
    self_edges = tuple(
        Edge(node.id, node.id, EdgeKind.SELF_LOOP, 0.0, 1.0 - trigger) for node in nodes
    )
    graph = Dcag(roots=(root,), nodes=nodes, edges=attack_edges + self_edges)
    problems = validate(graph)
    if problems:
        raise StructuralError('; '.join(str(p) for p in problems))
    total = sum(_decimal(weighted_attack_factor(graph, edge)) for edge in attack_edges)
    return float(_decimal(level) * total)
