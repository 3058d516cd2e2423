"""
CTCS-3 Case - DCAG системы управления поездом CTCS-3 и эксперименты над ним

Центральная подсистема (CTC): X11-X15, корни B1 (malware) и B2 (сеть)
Трассовая подсистема: X4-X9, X16-X18, корни B3 (malware) и B4 (беспроводная атака)
X10 - системный риск, среднее по девяти операционным узлам
"""

import os
from dataclasses import dataclass, field, replace
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

from dcag_model import Dcag, Edge, EdgeKind, Gateway, GatewayKind, NodeKind, RootNode, ValueNode
from inference_engine import Trajectory, run, sweep
from logger import get_logger
from scenario_lang import Scenario, SimConfig, save_scenario

logger = get_logger()

CENTRAL_NODES = ('X11', 'X12', 'X13', 'X14', 'X15')
TRACKSIDE_NODES = ('X4', 'X5', 'X6', 'X7', 'X8', 'X9', 'X16', 'X17', 'X18')
SYSTEM_NODES = ('X9', 'X18', 'X4', 'X8', 'X6', 'X5', 'X17', 'X7', 'X16')

# Доля интенсивности связи от malware-корня (остальное делится поровну)
MALWARE_SHARE = {
    'X4': 0.75, 'X8': 0.75, 'X12': 0.75, 'X13': 0.75, 'X15': 0.75, 'X16': 0.75,
    'X6': 0.5, 'X9': 0.5, 'X11': 0.5, 'X17': 0.5, 'X18': 0.5,
    'X7': 0.4, 'X14': 0.4,
}

ATTACK_ROOTS = {
    'wireless': 'B4',
    'network': 'B2',
    'malware_ot': 'B3',
    'malware_it': 'B1',
}

# Опубликованные результаты (уровни 1..10, 120 итераций)
REFERENCE_LEVELS = {
    'wireless': (0.460142162, 0.461951800, 0.463755618, 0.465553633, 0.467345863,
                 0.469132323, 0.470913031, 0.472688004, 0.474457258, 0.476220810),
    'network': (0.460142162, 0.460142166, 0.460142169, 0.460142172, 0.460142175,
                0.460142178, 0.460142181, 0.460142184, 0.460142188, 0.460142191),
    'malware_ot': (0.459674828, 0.460142162, 0.460609183, 0.461075890, 0.461542283,
                   0.462008363, 0.462474130, 0.462939584, 0.463404725, 0.463869553),
    'malware_it': (0.355651354, 0.460142162, 0.497819812, 0.513630125, 0.521062210,
                   0.524865202, 0.526940161, 0.528129346, 0.528837300, 0.529271444),
}
REFERENCE_CENTRAL_ORDER = ('X12', 'X14', 'X11', 'X15', 'X13')
REFERENCE_TRACKSIDE_ORDER = ('X17', 'X16', 'X5', 'X7', 'X6', 'X8', 'X18', 'X9')

CBI_WITH_BOUND = 0.6
CBI_WITHOUT_BOUND = 0.95
LEVELS_TOLERANCE = 1e-2
NETWORK_MAX_STEP = 1e-7


@dataclass(frozen=True)
class CtcsOptions:
    """Параметры кейса CTCS-3"""
    cbi_functional_safety: bool = False
    root_levels: Dict[str, float] = field(default_factory=lambda: {'B1': 2.0, 'B2': 1.0, 'B3': 2.0, 'B4': 1.0})
    g4_inputs: Tuple[Tuple[str, ...], Tuple[str, ...]] = (('X11', 'X14'), ('X12', 'X13', 'X15'))
    self_persistence: float = 0.9
    central_malware_prob: float = 0.001
    central_network_prob: float = 0.0001
    trackside_malware_prob: float = 0.00001
    trackside_wireless_prob: float = 0.0001
    central_propagation_prob: float = 0.5
    trackside_propagation_prob: float = 0.5
    signal_security_prob: float = 0.001
    cbi_safe_prob: float = 0.001
    g0_prob: float = 0.01
    g4_prob: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, 'g4_inputs', tuple(tuple(group) for group in self.g4_inputs))
        if set(self.root_levels) != {'B1', 'B2', 'B3', 'B4'}:
            raise ValueError(f"root_levels must define B1..B4, got {sorted(self.root_levels)}")
        if any(level < 0 for level in self.root_levels.values()):
            raise ValueError("root levels must be >= 0")
        if len(self.g4_inputs) != 2 or not all(self.g4_inputs):
            raise ValueError("g4_inputs must hold two non-empty parent lists")

    @classmethod
    def from_config(cls, section: Optional[Dict]) -> 'CtcsOptions':
        """
        Создать из секции 'ctcs' config.yaml

        Args:
            section: Словарь секции (может быть None)
        """
        section = dict(section or {})
        defaults = cls()
        kwargs = {}
        for name in cls.__dataclass_fields__:
            if name in section:
                kwargs[name] = section[name]
        if 'root_levels' in kwargs:
            kwargs['root_levels'] = {**defaults.root_levels,
                                     **{k: float(v) for k, v in kwargs['root_levels'].items()}}
        if 'cbi_functional_safety' in kwargs:
            kwargs['cbi_functional_safety'] = bool(kwargs['cbi_functional_safety'])
        for name, value in list(kwargs.items()):
            if isinstance(getattr(defaults, name), float):
                kwargs[name] = float(value)
        return cls(**kwargs)


class _Input(NamedTuple):
    src: str
    kind: EdgeKind
    prob: float
    malware: bool = False
    channel: Optional[str] = None


def _node_inputs(opts: CtcsOptions) -> Dict[str, List[_Input]]:
    """Входящие связи каждого узла в порядке слагаемых его уравнения (без самопетли)"""
    same, gated = EdgeKind.SAME_SLICE, EdgeKind.GATED_CROSS_SLICE
    central = opts.central_propagation_prob
    track = opts.trackside_propagation_prob
    cbi = opts.cbi_safe_prob if opts.cbi_functional_safety else track
    signal = opts.signal_security_prob
    b1 = _Input('B1', gated, opts.central_malware_prob, malware=True)
    b2 = _Input('B2', gated, opts.central_network_prob)
    b3 = _Input('B3', gated, opts.trackside_malware_prob, malware=True)
    b4 = _Input('B4', gated, opts.trackside_wireless_prob)

    return {
        'X13': [b1, b2],
        'X15': [b1, b2],
        'X11': [_Input('X14', same, central), b1, _Input('G0', gated, central)],
        'X14': [_Input('X12', same, central), _Input('X11', same, central), b1, _Input('G0', gated, central)],
        'X12': [_Input('X14', same, central), b1],
        'X7': [_Input('X5', same, signal, channel='signal'), _Input('X5', same, track, channel='tcp'),
               _Input('X17', same, track), b3],
        'X5': [_Input('X6', same, cbi), _Input('X7', same, signal, channel='signal'),
               _Input('X7', same, track, channel='tcp'), b3._replace(malware=False),
               _Input('X11', gated, track)],
        'X16': [b3, _Input('G4', gated, track)],
        'X6': [_Input('X8', same, cbi), _Input('X5', same, cbi), b3],
        'X18': [_Input('X9', same, track), _Input('X4', same, track), b3, b4],
        'X17': [_Input('X7', same, track), b3, _Input('X11', gated, track)],
        'X4': [_Input('X18', same, track), b3],
        'X8': [_Input('X6', same, cbi), b3],
        'X9': [_Input('X18', same, track), b3, b4],
    }


def build_ctcs(opts: Optional[CtcsOptions] = None) -> Scenario:
    """
    Построить сценарий CTCS-3

    Args:
        opts: Параметры кейса (None = значения по умолчанию)

    Returns:
        Scenario на 120 итераций с системными узлами X10
    """
    opts = opts or CtcsOptions()
    roots = tuple(RootNode(root_id, float(opts.root_levels[root_id])) for root_id in ('B1', 'B2', 'B3', 'B4'))
    gateways = (
        Gateway.uniform('G0', GatewayKind.CONDITIONAL_SUM, ('X13', 'X15'), opts.g0_prob),
        Gateway.uniform('G1', GatewayKind.PLAIN_SUM, opts.g4_inputs[0]),
        Gateway.uniform('G2', GatewayKind.PLAIN_SUM, opts.g4_inputs[1]),
        Gateway.uniform('G4', GatewayKind.CONDITIONAL_SUM, ('G1', 'G2'), opts.g4_prob),
    )

    nodes: List[ValueNode] = []
    edges: List[Edge] = []
    for node_id, inputs in _node_inputs(opts).items():
        share = MALWARE_SHARE.get(node_id)
        malware_count = sum(1 for item in inputs if item.malware) if share is not None else 0
        # остаток делится поровну между прочими связями и самопетлёй
        others = len(inputs) - malware_count + 1
        rest = (1.0 - share * malware_count) / others if malware_count else 1.0 / others
        for item in inputs:
            intensity = share if (malware_count and item.malware) else rest
            edges.append(Edge(item.src, node_id, item.kind, item.prob, intensity, item.channel))
        edges.append(Edge(node_id, node_id, EdgeKind.SELF_LOOP, opts.self_persistence, rest))
        extended = any(item.kind is EdgeKind.SAME_SLICE for item in inputs)
        nodes.append(ValueNode(node_id, 1.0, NodeKind.EXTENDED_EXPLOIT if extended else NodeKind.EXPLOIT))

    graph = Dcag(roots=roots, nodes=tuple(nodes), gateways=gateways, edges=tuple(edges), system_nodes=SYSTEM_NODES)
    logger.debug(f"CTCS-3 построен (CBI functional safety: {opts.cbi_functional_safety})")
    return Scenario(graph, SimConfig(iterations=120))


# ============ ЭКСПЕРИМЕНТЫ ============

def _with_iterations(scenario: Scenario, iterations: int) -> Scenario:
    return replace(scenario, config=replace(scenario.config, iterations=iterations))


def experiment_cbi(iterations: int = 120, opts: Optional[CtcsOptions] = None) -> Tuple[Trajectory, Trajectory]:
    """
    Сравнение с учётом функциональной безопасности CBI и без

    Returns:
        (без CBI, с CBI)
    """
    opts = opts or CtcsOptions()
    without = run(_with_iterations(build_ctcs(replace(opts, cbi_functional_safety=False)), iterations))
    with_cbi = run(_with_iterations(build_ctcs(replace(opts, cbi_functional_safety=True)), iterations))
    logger.info(f"🛡️ CBI: без {without.final_system_risk:.9f}, с {with_cbi.final_system_risk:.9f}")
    return without, with_cbi


def experiment_component_ranking(iterations: int = 10,
                                 opts: Optional[CtcsOptions] = None) -> List[Tuple[str, float]]:
    """Узлы X по убыванию риска после iterations срезов"""
    trajectory = run(_with_iterations(build_ctcs(opts), iterations))
    final = trajectory.final_state.values
    return sorted(final.items(), key=lambda item: (-item[1], int(item[0][1:])))


def experiment_attack_levels(attack: str, levels: Sequence[float] = tuple(range(1, 11)),
                             iterations: int = 120, opts: Optional[CtcsOptions] = None,
                             workers: int = 1) -> List[Tuple[float, float]]:
    """
    Перебор уровня одного типа атаки

    Args:
        attack: wireless / network / malware_ot / malware_it
        levels: Уровни риска
        iterations: Срезов на прогон
        opts: Параметры кейса
        workers: Потоки

    Returns:
        [(level, итоговый системный риск)]
    """
    if attack not in ATTACK_ROOTS:
        raise ValueError(f"unknown attack {attack!r}, expected one of {', '.join(ATTACK_ROOTS)}")
    return sweep(build_ctcs(opts), ATTACK_ROOTS[attack], list(levels), iterations, workers)


@dataclass(frozen=True)
class ImpactReport:
    """Сдвиги системного риска при росте уровня каждой атаки"""
    sweeps: Dict[str, List[Tuple[float, float]]]
    shifts: Dict[str, List[float]]
    malware_dominates: bool
    malware_ot_exceeds_it: bool


def experiment_attack_impact(levels: Sequence[float] = tuple(range(1, 11)), iterations: int = 120,
                             opts: Optional[CtcsOptions] = None, workers: int = 1) -> ImpactReport:
    """
    Все четыре перебора и сравнение malware с сетевыми атаками

    Сдвиг = риск на уровне L минус риск на первом уровне того же перебора.
    """
    levels = list(levels)
    sweeps = {attack: experiment_attack_levels(attack, levels, iterations, opts, workers) for attack in ATTACK_ROOTS}
    shifts = {attack: [risk - rows[0][1] for _, risk in rows] for attack, rows in sweeps.items()}

    dominates = True
    for i, level in enumerate(levels):
        if level < 2:
            continue
        networked = max(shifts['wireless'][i], shifts['network'][i])
        if min(shifts['malware_ot'][i], shifts['malware_it'][i]) <= networked:
            dominates = False
    ot_exceeds_it = bool(levels) and shifts['malware_ot'][-1] > shifts['malware_it'][-1]
    return ImpactReport(sweeps, shifts, dominates, ot_exceeds_it)


# ============ ВЕРДИКТЫ ============

@dataclass(frozen=True)
class CbiVerdict:
    without_final: float
    with_final: float
    with_bounded: bool
    without_saturated: bool
    dominated: bool

    @property
    def passed(self) -> bool:
        return self.with_bounded and self.dominated


def cbi_verdict(without: Trajectory, with_cbi: Trajectory) -> CbiVerdict:
    """Проверка: с CBI риск ограничен и не выше, чем без CBI, на каждом срезе"""
    dominated = all(w <= wo for w, wo in zip(with_cbi.system_risk, without.system_risk))
    return CbiVerdict(
        without_final=without.final_system_risk,
        with_final=with_cbi.final_system_risk,
        with_bounded=with_cbi.final_system_risk <= CBI_WITH_BOUND,
        without_saturated=without.final_system_risk >= CBI_WITHOUT_BOUND,
        dominated=dominated,
    )


@dataclass(frozen=True)
class RankingVerdict:
    separated: bool
    central_order: Tuple[str, ...]
    trackside_order: Tuple[str, ...]
    central_matches: bool
    trackside_matches: bool


def ranking_verdict(ranking: Sequence[Tuple[str, float]]) -> RankingVerdict:
    """Центральные узлы выше трассовых + совпадение порядков со справочными"""
    risk = dict(ranking)
    separated = min(risk[n] for n in CENTRAL_NODES) > max(risk[n] for n in TRACKSIDE_NODES)
    order = [node_id for node_id, _ in ranking]
    central = tuple(n for n in order if n in REFERENCE_CENTRAL_ORDER)
    trackside = tuple(n for n in order if n in REFERENCE_TRACKSIDE_ORDER)
    return RankingVerdict(separated, central, trackside,
                          central == REFERENCE_CENTRAL_ORDER, trackside == REFERENCE_TRACKSIDE_ORDER)


@dataclass(frozen=True)
class LevelsVerdict:
    monotone: bool
    strictly_increasing: bool
    max_step: float
    max_deviation: Optional[float]

    @property
    def within_tolerance(self) -> bool:
        return self.max_deviation is not None and self.max_deviation <= LEVELS_TOLERANCE


def levels_verdict(rows: Sequence[Tuple[float, float]], attack: Optional[str] = None) -> LevelsVerdict:
    """
    Монотонность перебора и отклонение от справочного столбца

    Отклонение считается, только если уровни равны 1..10.
    """
    risks = [risk for _, risk in rows]
    steps = [b - a for a, b in zip(risks, risks[1:])]
    deviation = None
    reference = REFERENCE_LEVELS.get(attack or '')
    if reference and [level for level, _ in rows] == [float(i) for i in range(1, 11)]:
        deviation = max(abs(risk - ref) for risk, ref in zip(risks, reference))
    return LevelsVerdict(
        monotone=all(step >= 0 for step in steps),
        strictly_increasing=all(step > 0 for step in steps),
        max_step=max(steps, default=0.0),
        max_deviation=deviation,
    )


def reference_value(attack: str, level: float) -> Optional[float]:
    """Опубликованное значение для целого уровня 1..10 (иначе None)"""
    column = REFERENCE_LEVELS.get(attack)
    if column is None or not float(level).is_integer() or not 1 <= level <= len(column):
        return None
    return column[int(level) - 1]


def write_bundled_scenarios(directory: str, opts: Optional[CtcsOptions] = None) -> List[str]:
    """
    Записать ctcs3_default.dcag и ctcs3_cbi.dcag

    Returns:
        Пути записанных файлов
    """
    opts = opts or CtcsOptions()
    os.makedirs(directory, exist_ok=True)
    paths = []
    for name, flag in (('ctcs3_default.dcag', False), ('ctcs3_cbi.dcag', True)):
        path = os.path.join(directory, name)
        save_scenario(path, build_ctcs(replace(opts, cbi_functional_safety=flag)))
        paths.append(path)
    logger.info(f"💾 Сценарии CTCS-3 записаны в {directory}")
    return paths
