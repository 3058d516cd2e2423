"""
Inference Engine - распространение риска по срезам времени

- eval_gateway: логические шлюзы (PlainSum / ConditionalSum)
- static_marginal: статический вывод по ацикличному срезу
- step / run: временная симуляция, внутри среза - итерации Якоби до неподвижной точки
- sweep: перебор уровней риска одного корня
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import pandas as pd

from dcag_model import (
    ConvergenceError, Dcag, EdgeKind, Gateway, GatewayKind, InferenceError,
    StateIndex, StructuralError, clamp_risk, complement,
)
from logger import get_logger
from scenario_lang import Scenario, SimConfig, trajectory_frame

logger = get_logger()

# Доля лимита внутренних итераций, после которой пишем предупреждение
NEAR_CAP_RATIO = 0.9


@dataclass(frozen=True)
class SliceState:
    """Значения риска всех узлов в срезе t"""
    t: int
    values: Dict[str, float] = field(default_factory=dict)

    def __getitem__(self, node_id: str) -> float:
        return self.values[node_id]


@dataclass(frozen=True)
class Trajectory:
    states: Tuple[SliceState, ...] = ()
    system_risk: Tuple[float, ...] = ()

    @property
    def final_state(self) -> SliceState:
        return self.states[-1]

    @property
    def final_system_risk(self) -> float:
        return self.system_risk[-1]

    def to_frame(self) -> pd.DataFrame:
        return trajectory_frame(self)


@dataclass(frozen=True)
class InfluenceTerm:
    """Вклад одной входящей связи: weight = (r/r_n) * a"""
    kind: EdgeKind
    weight: float
    source: str
    channel: Optional[str] = None


# ============ ШЛЮЗЫ ============

def eval_gateway(g: Gateway, values: Mapping[str, float], state: StateIndex = StateIndex.AT_RISK) -> float:
    """
    Вычислить значение шлюза

    Args:
        g: Шлюз
        values: Значения родителей (корни - уровень, узлы и шлюзы - риск)
        state: AT_RISK - выражение состояния 1, BENIGN - состояния 2

    Returns:
        Значение в [0, 1]
    """
    missing = [p for p in g.parents if p not in values]
    if missing:
        raise InferenceError(f"gateway {g.id}: missing parent value {', '.join(missing)}")

    if g.kind is GatewayKind.PLAIN_SUM:
        total = clamp_risk(math.fsum(values[p] for p in g.parents))
        return total if state is StateIndex.AT_RISK else complement(total)

    if state is StateIndex.BENIGN:
        product = 1.0
        for parent in g.parents:
            product *= g.prob(StateIndex.BENIGN, parent, StateIndex.BENIGN) * complement(values[parent])
        return clamp_risk(product)

    total = 0.0
    passed = 1.0  # произведение A(g,2;p_j,1)(1 - x_pj) по предыдущим родителям
    for parent in g.parents:
        x = values[parent]
        total += passed * g.prob(StateIndex.AT_RISK, parent, StateIndex.AT_RISK) * x
        passed *= g.prob(StateIndex.BENIGN, parent, StateIndex.AT_RISK) * (1.0 - x)
    return clamp_risk(total)


def gateway_order(graph: Dcag) -> List[str]:
    """Шлюзы в топологическом порядке (родитель-шлюз раньше потомка)"""
    order = nx.DiGraph()
    order.add_nodes_from(graph.gateway_ids)
    for gateway in graph.gateways:
        for parent in gateway.parents:
            if graph.kind_of(parent) == 'gateway':
                order.add_edge(parent, gateway.id)
    try:
        return list(nx.lexicographical_topological_sort(order))
    except nx.NetworkXUnfeasible:
        raise InferenceError("gateway references are cyclic")


# ============ СТАТИЧЕСКИЙ ВЫВОД ============

def static_marginal(graph: Dcag, assignment: Optional[Mapping[str, float]] = None) -> Dict[str, float]:
    """
    Маргинальные вероятности узлов ацикличного среза

    Все связи кроме самопетель считаются обычными родительскими связями.

    Args:
        graph: Граф
        assignment: Вероятности корней (по умолчанию clamp(level))

    Returns:
        {id узла: P(X_n = 1)}
    """
    assignment = dict(assignment or {})
    for root_id, p in assignment.items():
        if graph.kind_of(root_id) != 'root':
            raise InferenceError(f"unknown root {root_id}")
        if not 0.0 <= p <= 1.0:
            raise InferenceError(f"root {root_id}: probability {p} outside [0, 1]")

    dag = nx.DiGraph()
    dag.add_nodes_from(graph.node_ids + graph.gateway_ids)
    for edge in graph.edges:
        if edge.kind is not EdgeKind.SELF_LOOP and graph.kind_of(edge.src) != 'root':
            dag.add_edge(edge.src, edge.dst)
    for gateway in graph.gateways:
        for parent in gateway.parents:
            if graph.kind_of(parent) != 'root':
                dag.add_edge(parent, gateway.id)
    if not nx.is_directed_acyclic_graph(dag):
        raise InferenceError("static inference requires acyclic slice")

    values: Dict[str, float] = {
        root.id: assignment.get(root.id, clamp_risk(root.level)) for root in graph.roots
    }
    for item in nx.lexicographical_topological_sort(dag):
        if graph.kind_of(item) == 'gateway':
            values[item] = eval_gateway(graph.gateway(item), values)
            continue
        node = graph.node(item)
        values[item] = clamp_risk(math.fsum(
            edge.intensity / node.total_intensity * edge.cond_prob * values[edge.src]
            for edge in graph.incoming(item) if edge.kind is not EdgeKind.SELF_LOOP
        ))
    return {node_id: values[node_id] for node_id in graph.node_ids}


# ============ ВРЕМЕННАЯ СИМУЛЯЦИЯ ============

class InferenceEngine:
    """
    Скомпилированный граф для пошаговой симуляции

    Связи собираются в матрицы один раз; вектор источников v = [x | уровни корней | шлюзы].
    """

    def __init__(self, graph: Dcag):
        """
        Args:
            graph: Граф (не меняется)
        """
        self.graph = graph
        self.node_ids = graph.node_ids
        self.root_ids = graph.root_ids
        self.gateway_ids = gateway_order(graph)

        sources = self.node_ids + self.root_ids + self.gateway_ids
        self._position = {source: i for i, source in enumerate(sources)}
        n, total = len(self.node_ids), len(sources)

        self.same = np.zeros((n, total))
        self.gated = np.zeros((n, total))
        self.self_weight = np.zeros(n)
        for row, node_id in enumerate(self.node_ids):
            r_n = graph.node(node_id).total_intensity
            for edge in graph.incoming(node_id):
                weight = edge.intensity / r_n * edge.cond_prob
                if edge.kind is EdgeKind.SELF_LOOP:
                    self.self_weight[row] += weight
                elif edge.kind is EdgeKind.SAME_SLICE:
                    self.same[row, self._position[edge.src]] += weight
                else:
                    self.gated[row, self._position[edge.src]] += weight

        self.levels = np.array([graph.root(root_id).level for root_id in self.root_ids], dtype=float)
        self._gateways = [graph.gateway(gateway_id) for gateway_id in self.gateway_ids]

    def _sources(self, x: np.ndarray) -> np.ndarray:
        """Вектор источников для текущего приближения x"""
        values = dict(zip(self.node_ids, x.tolist()))
        values.update(zip(self.root_ids, self.levels.tolist()))
        for gateway in self._gateways:
            values[gateway.id] = eval_gateway(gateway, values)
        return np.concatenate([x, self.levels, np.array([values[g] for g in self.gateway_ids], dtype=float)])

    def initial_state(self, cfg: SimConfig) -> SliceState:
        for node_id in cfg.initial_state:
            if self.graph.kind_of(node_id) != 'node':
                raise StructuralError(f"initial state for unknown node {node_id}")
        return SliceState(0, {node_id: float(cfg.initial_state.get(node_id, 0.0)) for node_id in self.node_ids})

    def step(self, prev: SliceState, cfg: SimConfig) -> SliceState:
        """
        Следующий срез: неподвижная точка Якоби, старт с x^{t-1}

        Raises:
            ConvergenceError: лимит cfg.inner_max_iters исчерпан
        """
        missing = [node_id for node_id in self.node_ids if node_id not in prev.values]
        if missing:
            raise InferenceError(f"previous slice misses nodes: {', '.join(missing)}")

        x_prev = np.array([prev.values[node_id] for node_id in self.node_ids], dtype=float)
        persistent = self.self_weight * x_prev
        gate = 1.0 - x_prev

        x = x_prev.copy()
        residual = math.inf
        for iteration in range(1, cfg.inner_max_iters + 1):
            v = self._sources(x)
            x_next = np.clip(persistent + self.same @ v + gate * (self.gated @ v), 0.0, 1.0)
            residual = float(np.max(np.abs(x_next - x))) if x.size else 0.0
            x = x_next
            if residual < cfg.inner_tolerance:
                if iteration > NEAR_CAP_RATIO * cfg.inner_max_iters:
                    logger.warning(f"⚠️ Срез {prev.t + 1}: сходимость за {iteration} итераций "
                                   f"(лимит {cfg.inner_max_iters})")
                return SliceState(prev.t + 1, dict(zip(self.node_ids, x.tolist())))

        raise ConvergenceError(
            f"slice {prev.t + 1}: inner solver did not converge after {cfg.inner_max_iters} "
            f"iterations (residual {residual:.3e})",
            residual, cfg.inner_max_iters,
        )

    def run(self, cfg: SimConfig, system_nodes: Sequence[str] = ()) -> Trajectory:
        """
        Полная траектория: срез 0 = начальное состояние, затем cfg.iterations шагов
        """
        targets = list(system_nodes) or self.node_ids
        state = self.initial_state(cfg)
        states = [state]
        for _ in range(cfg.iterations):
            state = self.step(state, cfg)
            states.append(state)
        risks = tuple(system_risk(s, targets) if targets else 0.0 for s in states)
        logger.debug(f"Симуляция: {cfg.iterations} срезов, итоговый риск {risks[-1]:.9f}")
        return Trajectory(tuple(states), risks)


def step(graph: Dcag, prev: SliceState, cfg: SimConfig) -> SliceState:
    """Один шаг симуляции (см. InferenceEngine.step)"""
    return InferenceEngine(graph).step(prev, cfg)


def run(scenario: Scenario) -> Trajectory:
    """
    Симуляция сценария

    Args:
        scenario: Граф + SimConfig

    Returns:
        Trajectory на cfg.iterations + 1 срезов
    """
    graph = scenario.graph
    return InferenceEngine(graph).run(scenario.config, graph.system_nodes)


def system_risk(state: SliceState, system_nodes: Sequence[str]) -> float:
    """Системный риск - среднее арифметическое по системным узлам"""
    if not system_nodes:
        raise InferenceError("system risk requires at least one system node")
    missing = [node_id for node_id in system_nodes if node_id not in state.values]
    if missing:
        raise InferenceError(f"system nodes missing from slice: {', '.join(missing)}")
    return math.fsum(state.values[node_id] for node_id in system_nodes) / len(system_nodes)


def sweep(scenario: Scenario, root: str, levels: Sequence[float],
          iterations: Optional[int] = None, workers: int = 1) -> List[Tuple[float, float]]:
    """
    Перебор уровней риска корня

    Args:
        scenario: Базовый сценарий
        root: Корень, уровень которого меняется
        levels: Уровни (порядок строк сохраняется)
        iterations: Количество срезов (None = из сценария)
        workers: Потоки для независимых прогонов

    Returns:
        [(level, итоговый системный риск)]
    """
    if scenario.graph.kind_of(root) != 'root':
        raise InferenceError(f"unknown root {root}")
    cfg = scenario.config if iterations is None else replace(scenario.config, iterations=iterations)

    def final_risk(level: float) -> Tuple[float, float]:
        graph = scenario.graph.with_root_level(root, float(level))
        return float(level), InferenceEngine(graph).run(cfg, graph.system_nodes).final_system_risk

    logger.info(f"🔄 Перебор {root}: {len(levels)} уровней, {cfg.iterations} срезов")
    if workers > 1 and len(levels) > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(final_risk, levels))
    return [final_risk(level) for level in levels]


# ============ РАЗЛОЖЕНИЕ ПО ВКЛАДАМ ============

def influence_terms(graph: Dcag, node_id: str) -> List[InfluenceTerm]:
    """Входящие связи узла в форме (тип, (r/r_n) * a, источник)"""
    node = graph.node(node_id)
    return [
        InfluenceTerm(edge.kind, edge.intensity / node.total_intensity * edge.cond_prob, edge.src, edge.channel)
        for edge in graph.incoming(node_id)
    ]


def extended_components(graph: Dcag, prev: SliceState, cur: SliceState, node_id: str) -> List[Tuple[InfluenceTerm, float]]:
    """
    Вклад каждой входящей связи в x_n^t (расширенные узлы X', X'', ...)

    Сумма вкладов равна x_n^t, если обрезка в [0, 1] не сработала.

    Args:
        graph: Граф
        prev: Срез t-1
        cur: Срез t
        node_id: Узел

    Returns:
        [(InfluenceTerm, вклад)]
    """
    values: Dict[str, float] = dict(cur.values)
    values.update({root.id: root.level for root in graph.roots})
    for gateway_id in gateway_order(graph):
        values[gateway_id] = eval_gateway(graph.gateway(gateway_id), values)

    x_prev = prev.values[node_id]
    components = []
    for term in influence_terms(graph, node_id):
        if term.kind is EdgeKind.SELF_LOOP:
            contribution = term.weight * x_prev
        elif term.kind is EdgeKind.SAME_SLICE:
            contribution = term.weight * values[term.source]
        else:
            contribution = term.weight * (1.0 - x_prev) * values[term.source]
        components.append((term, contribution))
    return components
