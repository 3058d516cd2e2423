"""
Reference Oracle - медленные эталонные вычислители для тестов

enumerate_marginal - полный перебор совместных исходов бинарных узлов
naive_step - уравнения CTCS-3, записанные слагаемое за слагаемым

С inference_engine общего кода нет.
"""

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional

import networkx as nx
import numpy as np

from ctcs_case import CtcsOptions
from dcag_model import Dcag, EdgeKind, OracleError
from inference_engine import SliceState
from logger import get_logger

logger = get_logger()

MAX_ENUMERATION_VARIABLES = 20
CTCS_NODES = ('X4', 'X5', 'X6', 'X7', 'X8', 'X9', 'X11', 'X12', 'X13', 'X14', 'X15', 'X16', 'X17', 'X18')


@dataclass(frozen=True)
class EnumerationResult:
    marginals: Dict[str, float]
    outcome_count: int
    total_probability: float


def enumerate_marginal(graph: Dcag, roots: Optional[Mapping[str, float]] = None) -> EnumerationResult:
    """
    Маргинальные вероятности перебором всех 2^V совместных исходов

    P(X_n = 1 | состояния родителей) = сумма (r/r_n) * a по родителям в состоянии 1.
    Самопетли не участвуют.

    Args:
        graph: Ацикличный граф без шлюзов
        roots: Вероятности корней (по умолчанию min(max(level, 0), 1))

    Returns:
        EnumerationResult
    """
    if graph.gateways:
        raise OracleError("enumeration does not support gateways")
    roots = dict(roots or {})
    variables: List[str] = [r.id for r in graph.roots] + [n.id for n in graph.nodes]
    if len(variables) > MAX_ENUMERATION_VARIABLES:
        raise OracleError(f"{len(variables)} binary variables exceed the enumeration bound "
                          f"of {MAX_ENUMERATION_VARIABLES}")

    parents = nx.DiGraph()
    parents.add_nodes_from(variables)
    for edge in graph.edges:
        if edge.kind is not EdgeKind.SELF_LOOP:
            parents.add_edge(edge.src, edge.dst)
    if not nx.is_directed_acyclic_graph(parents):
        raise OracleError("enumeration requires an acyclic graph")

    column = {name: i for i, name in enumerate(variables)}
    count = 2 ** len(variables)
    # строка = исход, столбец = переменная, 1 = атака произошла
    outcomes = (np.arange(count)[:, None] >> np.arange(len(variables))[None, :]) & 1
    joint = np.ones(count)

    for root in graph.roots:
        p = roots.get(root.id, min(max(root.level, 0.0), 1.0))
        bit = outcomes[:, column[root.id]]
        joint *= np.where(bit == 1, p, 1.0 - p)

    for node in graph.nodes:
        conditional = np.zeros(count)
        for edge in graph.edges:
            if edge.dst != node.id or edge.kind is EdgeKind.SELF_LOOP:
                continue
            conditional += (edge.intensity / node.total_intensity) * edge.cond_prob * outcomes[:, column[edge.src]]
        bit = outcomes[:, column[node.id]]
        joint *= np.where(bit == 1, conditional, 1.0 - conditional)

    marginals = {
        node.id: float(np.sum(joint * outcomes[:, column[node.id]])) for node in graph.nodes
    }
    return EnumerationResult(marginals, count, float(np.sum(joint)))


def _csum2(a: float, x1: float, x2: float) -> float:
    """Шлюз с двумя родителями: A x1 + A (1 - x1) A x2"""
    return min(max(a * x1 + a * (1.0 - x1) * a * x2, 0.0), 1.0)


def _equations(p: Dict[str, float], x: Dict[str, float], o: CtcsOptions) -> Dict[str, float]:
    """
    Одна итерация системы уравнений: p - срез t-1, x - текущее приближение среза t

    Дополнение берётся из t-1 во всех слагаемых; слагаемое B3 в X6 записано с множителем B3.
    """
    B1, B2, B3, B4 = (o.root_levels[k] for k in ('B1', 'B2', 'B3', 'B4'))
    a_self = o.self_persistence
    a_cm, a_cn = o.central_malware_prob, o.central_network_prob
    a_tm, a_tw = o.trackside_malware_prob, o.trackside_wireless_prob
    a_c, a_t, a_sig = o.central_propagation_prob, o.trackside_propagation_prob, o.signal_security_prob
    a_cbi = o.cbi_safe_prob if o.cbi_functional_safety else a_t

    G0 = _csum2(o.g0_prob, x['X13'], x['X15'])
    G1 = min(sum(x[n] for n in o.g4_inputs[0]), 1.0)
    G2 = min(sum(x[n] for n in o.g4_inputs[1]), 1.0)
    G4 = _csum2(o.g4_prob, G1, G2)

    new = {}
    new['X13'] = (0.75 * (1 - p['X13']) * a_cm * B1
                  + 0.125 * (1 - p['X13']) * a_cn * B2
                  + 0.125 * p['X13'] * a_self)
    new['X15'] = (0.75 * (1 - p['X15']) * a_cm * B1
                  + 0.125 * (1 - p['X15']) * a_cn * B2
                  + 0.125 * p['X15'] * a_self)
    new['X11'] = ((0.5 / 3) * x['X14'] * a_c
                  + 0.5 * (1 - p['X11']) * a_cm * B1
                  + (0.5 / 3) * (1 - p['X11']) * a_c * G0
                  + (0.5 / 3) * p['X11'] * a_self)
    new['X14'] = (0.15 * x['X12'] * a_c
                  + 0.15 * x['X11'] * a_c
                  + 0.4 * (1 - p['X14']) * a_cm * B1
                  + 0.15 * (1 - p['X14']) * a_c * G0
                  + 0.15 * p['X14'] * a_self)
    new['X12'] = (0.125 * x['X14'] * a_c
                  + 0.75 * (1 - p['X12']) * a_cm * B1
                  + 0.125 * p['X12'] * a_self)
    # связь по каналу сигнальной безопасности идёт от X5
    new['X7'] = (0.15 * x['X5'] * a_sig
                 + 0.15 * x['X5'] * a_t
                 + 0.15 * x['X17'] * a_t
                 + 0.4 * (1 - p['X7']) * a_tm * B3
                 + 0.15 * p['X7'] * a_self)
    new['X5'] = ((1 / 6) * x['X6'] * a_cbi
                 + (1 / 6) * x['X7'] * a_sig
                 + (1 / 6) * x['X7'] * a_t
                 + (1 / 6) * (1 - p['X5']) * a_tm * B3
                 + (1 / 6) * (1 - p['X5']) * a_t * x['X11']
                 + (1 / 6) * p['X5'] * a_self)
    new['X16'] = (0.75 * (1 - p['X16']) * a_tm * B3
                  + 0.125 * (1 - p['X16']) * a_t * G4
                  + 0.125 * p['X16'] * a_self)
    new['X6'] = ((0.5 / 3) * x['X8'] * a_cbi
                 + (0.5 / 3) * x['X5'] * a_cbi
                 + 0.5 * (1 - p['X6']) * a_tm * B3
                 + (0.5 / 3) * p['X6'] * a_self)
    new['X18'] = (0.125 * x['X9'] * a_t
                  + 0.125 * x['X4'] * a_t
                  + 0.5 * (1 - p['X18']) * a_tm * B3
                  + 0.125 * (1 - p['X18']) * a_tw * B4
                  + 0.125 * p['X18'] * a_self)
    new['X17'] = ((0.5 / 3) * x['X7'] * a_t
                  + 0.5 * (1 - p['X17']) * a_tm * B3
                  + (0.5 / 3) * (1 - p['X17']) * a_t * x['X11']
                  + (0.5 / 3) * p['X17'] * a_self)
    new['X4'] = (0.125 * x['X18'] * a_t
                 + 0.75 * (1 - p['X4']) * a_tm * B3
                 + 0.125 * p['X4'] * a_self)
    new['X8'] = (0.125 * x['X6'] * a_cbi
                 + 0.75 * (1 - p['X8']) * a_tm * B3
                 + 0.125 * p['X8'] * a_self)
    new['X9'] = ((0.5 / 3) * x['X18'] * a_t
                 + 0.5 * (1 - p['X9']) * a_tm * B3
                 + (0.5 / 3) * (1 - p['X9']) * a_tw * B4
                 + (0.5 / 3) * p['X9'] * a_self)
    return {n: min(max(v, 0.0), 1.0) for n, v in new.items()}


def naive_step(prev: SliceState, params: Optional[CtcsOptions] = None,
               tolerance: float = 1e-14, max_iters: int = 10000) -> SliceState:
    """
    Срез t по уравнениям CTCS-3, собственный цикл Якоби от x^{t-1}

    Args:
        prev: Срез t-1 (X4..X18 без X10)
        params: Параметры кейса
        tolerance: Порог max |x_new - x|
        max_iters: Лимит итераций

    Returns:
        SliceState среза t
    """
    params = params or CtcsOptions()
    missing = [n for n in CTCS_NODES if n not in prev.values]
    if missing:
        raise OracleError(f"previous slice misses {', '.join(missing)}")
    p = {n: prev.values[n] for n in CTCS_NODES}
    x = dict(p)
    for _ in range(max_iters):
        new = _equations(p, x, params)
        change = max(abs(new[n] - x[n]) for n in CTCS_NODES)
        x = new
        if change < tolerance:
            return SliceState(prev.t + 1, x)
    raise OracleError(f"naive step did not converge in {max_iters} iterations")


def naive_run(params: Optional[CtcsOptions] = None, iterations: int = 120) -> List[SliceState]:
    """Срезы 0..iterations от нулевого состояния"""
    state = SliceState(0, {n: 0.0 for n in CTCS_NODES})
    states = [state]
    for _ in range(iterations):
        state = naive_step(state, params)
        states.append(state)
    logger.debug(f"Эталонная траектория: {iterations} срезов")
    return states
