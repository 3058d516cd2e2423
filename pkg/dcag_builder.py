"""
DCAG Builder - преобразование attack graph в DCAG за пять шагов

1. Уязвимости заменяются типами атак (корневые узлы)
2. Attack graph -> байесовская структура (узел на актив, связи)
3. Временная корреляция (самопетля на каждый узел)
4. Условные вероятности на каждой связи
5. Логические шлюзы для общих источников
"""

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Tuple

from dcag_model import (
    NODE_ID_PATTERN, ConversionError, Dcag, Edge, EdgeKind, Gateway, GatewayKind,
    NodeKind, RootNode, ValueNode, validate,
)
from logger import get_logger, load_config

logger = get_logger()


@dataclass(frozen=True)
class Asset:
    id: str
    exposures: FrozenSet[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, 'exposures', frozenset(self.exposures))


@dataclass(frozen=True)
class Link:
    """Коммуникация src -> dst по протоколу"""
    src: str
    dst: str
    protocol: str


@dataclass(frozen=True)
class AttackType:
    tag: str
    level: float


@dataclass(frozen=True)
class AttackGraph:
    """Исходный attack graph: активы, связи между ними, типы атак"""
    assets: Tuple[Asset, ...] = ()
    links: Tuple[Link, ...] = ()
    attack_types: Tuple[AttackType, ...] = ()

    def __post_init__(self):
        for name in ('assets', 'links', 'attack_types'):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def validate(self) -> List[str]:
        """Список проблем (пустой = граф корректен)"""
        problems: List[str] = []
        asset_ids = [asset.id for asset in self.assets]
        tags = [attack.tag for attack in self.attack_types]

        for name in asset_ids + tags:
            if not NODE_ID_PATTERN.match(name or ''):
                problems.append(f"invalid identifier {name!r}")
        if len(set(asset_ids)) != len(asset_ids):
            problems.append("duplicate asset ids")
        if len(set(tags)) != len(tags):
            problems.append("duplicate attack types")
        for clash in sorted(set(asset_ids) & set(tags)):
            problems.append(f"attack type {clash} clashes with an asset id")

        known = set(asset_ids)
        for link in self.links:
            for end in (link.src, link.dst):
                if end not in known:
                    problems.append(f"link {link.src}->{link.dst}: unknown asset {end}")
            if link.src == link.dst:
                problems.append(f"link {link.src}->{link.dst}: self link")
        declared = set(tags)
        for asset in self.assets:
            for tag in sorted(asset.exposures - declared):
                problems.append(f"asset {asset.id}: undeclared attack type {tag}")
        for attack in self.attack_types:
            if attack.level < 0:
                problems.append(f"attack type {attack.tag}: negative level")
        return problems


@dataclass(frozen=True)
class ConversionPolicy:
    """Числовые параметры преобразования"""
    default_self_persistence: float = 0.9
    default_cond_prob: Dict[str, float] = field(default_factory=dict)
    default_intensity: Dict[str, float] = field(default_factory=dict)
    gateway_threshold: int = 2
    gateway_prob: float = 0.01
    self_intensity: float = 1.0
    link_intensity: float = 1.0

    def __post_init__(self):
        probs = [self.default_self_persistence, self.gateway_prob, *self.default_cond_prob.values()]
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError("conversion policy probabilities must be in [0, 1]")
        if self.gateway_threshold < 2:
            raise ValueError("gateway_threshold must be >= 2")

    @classmethod
    def from_config(cls, section: Optional[Dict]) -> 'ConversionPolicy':
        """
        Создать из секции 'conversion' config.yaml

        Args:
            section: Словарь секции
        """
        section = section or {}
        return cls(
            default_self_persistence=float(section.get('default_self_persistence', 0.9)),
            default_cond_prob={k: float(v) for k, v in (section.get('default_cond_prob') or {}).items()},
            default_intensity={k: float(v) for k, v in (section.get('default_intensity') or {}).items()},
            gateway_threshold=int(section.get('gateway_threshold', 2)),
            gateway_prob=float(section.get('gateway_prob', 0.01)),
            self_intensity=float(section.get('self_intensity', 1.0)),
            link_intensity=float(section.get('link_intensity', 1.0)),
        )


@dataclass
class _DraftEdge:
    src: str
    dst: str
    kind: EdgeKind
    tag: Optional[str]
    intensity: float
    cond_prob: float = 0.0


class DcagConverter:
    """Преобразователь attack graph -> DCAG"""

    def __init__(self, policy: ConversionPolicy):
        """
        Args:
            policy: Параметры преобразования
        """
        self.policy = policy

    def convert(self, ag: AttackGraph) -> Dcag:
        """
        Применить пять шагов преобразования

        Args:
            ag: Исходный attack graph

        Returns:
            Корректный DCAG
        """
        problems = ag.validate()
        if problems:
            raise ConversionError('', f"invalid attack graph: {'; '.join(problems)}")

        roots = self._attack_roots(ag)
        drafts = self._bayesian_edges(ag)
        drafts += self._temporal_edges(ag)
        self._assign_conditionals(drafts)
        gateways, drafts = self._insert_gateways(ag, drafts)

        edges = tuple(
            Edge(d.src, d.dst, d.kind, d.cond_prob, d.intensity, d.tag if d.kind is EdgeKind.SAME_SLICE else None)
            for d in drafts
        )
        nodes = []
        for asset in ag.assets:
            incoming = [e for e in edges if e.dst == asset.id]
            kind = (NodeKind.EXTENDED_EXPLOIT
                    if any(e.kind is EdgeKind.SAME_SLICE for e in incoming) else NodeKind.EXPLOIT)
            nodes.append(ValueNode(asset.id, math.fsum(e.intensity for e in incoming), kind))

        graph = Dcag(roots=roots, nodes=tuple(nodes), gateways=gateways, edges=edges)
        violations = validate(graph)
        if violations:
            raise ConversionError('', '; '.join(str(v) for v in violations))
        logger.info(f"✅ DCAG построен: {len(roots)} корней, {len(nodes)} узлов, "
                    f"{len(gateways)} шлюзов, {len(edges)} связей")
        return graph

    # Шаг 1
    def _attack_roots(self, ag: AttackGraph) -> Tuple[RootNode, ...]:
        return tuple(RootNode(attack.tag, float(attack.level)) for attack in ag.attack_types)

    # Шаг 2
    def _bayesian_edges(self, ag: AttackGraph) -> List[_DraftEdge]:
        drafts: List[_DraftEdge] = []
        for asset in ag.assets:
            for attack in ag.attack_types:
                if attack.tag not in asset.exposures:
                    continue
                if attack.tag not in self.policy.default_intensity:
                    raise ConversionError(attack.tag, f"no default intensity for attack type {attack.tag}")
                drafts.append(_DraftEdge(attack.tag, asset.id, EdgeKind.GATED_CROSS_SLICE, attack.tag,
                                         self.policy.default_intensity[attack.tag]))
        for link in ag.links:
            intensity = self.policy.default_intensity.get(link.protocol, self.policy.link_intensity)
            drafts.append(_DraftEdge(link.src, link.dst, EdgeKind.SAME_SLICE, link.protocol, intensity))
        return drafts

    # Шаг 3
    def _temporal_edges(self, ag: AttackGraph) -> List[_DraftEdge]:
        return [
            _DraftEdge(asset.id, asset.id, EdgeKind.SELF_LOOP, None, self.policy.self_intensity,
                       self.policy.default_self_persistence)
            for asset in ag.assets
        ]

    # Шаг 4
    def _assign_conditionals(self, drafts: List[_DraftEdge]):
        for draft in drafts:
            if draft.kind is EdgeKind.SELF_LOOP:
                continue
            if draft.tag not in self.policy.default_cond_prob:
                raise ConversionError(draft.tag, f"no conditional probability for tag {draft.tag}")
            draft.cond_prob = self.policy.default_cond_prob[draft.tag]

    # Шаг 5
    def _insert_gateways(self, ag: AttackGraph,
                         drafts: List[_DraftEdge]) -> Tuple[Tuple[Gateway, ...], List[_DraftEdge]]:
        targets: Dict[str, set] = {asset.id: set() for asset in ag.assets}
        for draft in drafts:
            if draft.kind is EdgeKind.SAME_SLICE:
                targets[draft.src].add(draft.dst)

        # источники с одинаковым множеством целей, в порядке объявления
        groups: 'OrderedDict[FrozenSet[str], List[str]]' = OrderedDict()
        for asset in ag.assets:
            if targets[asset.id]:
                groups.setdefault(frozenset(targets[asset.id]), []).append(asset.id)

        taken = {asset.id for asset in ag.assets} | {attack.tag for attack in ag.attack_types}
        gateways: List[Gateway] = []
        counter = 0
        for target_set, sources in groups.items():
            if len(sources) < self.policy.gateway_threshold:
                continue
            while f"G{counter}" in taken:
                counter += 1
            gateway_id = f"G{counter}"
            taken.add(gateway_id)
            gateways.append(Gateway.uniform(gateway_id, GatewayKind.CONDITIONAL_SUM, sources,
                                            self.policy.gateway_prob))

            source_set = set(sources)
            kept: List[_DraftEdge] = []
            replaced: Dict[str, List[_DraftEdge]] = {}
            for draft in drafts:
                if draft.kind is EdgeKind.SAME_SLICE and draft.src in source_set:
                    replaced.setdefault(draft.dst, []).append(draft)
                else:
                    kept.append(draft)
            for target in sorted(target_set):
                links = replaced[target]
                protocols = {d.tag for d in links}
                kept.append(_DraftEdge(
                    gateway_id, target, EdgeKind.GATED_CROSS_SLICE,
                    protocols.pop() if len(protocols) == 1 else None,
                    math.fsum(d.intensity for d in links),
                    max(d.cond_prob for d in links),
                ))
            drafts = kept
            logger.debug(f"Шлюз {gateway_id}: {sources} -> {sorted(target_set)}")
        return tuple(gateways), drafts


def convert(ag: AttackGraph, policy: Optional[ConversionPolicy] = None) -> Dcag:
    """
    Преобразовать attack graph в DCAG (см. DcagConverter)

    Args:
        ag: Исходный attack graph
        policy: Параметры (None = секция conversion из config.yaml)
    """
    if policy is None:
        policy = ConversionPolicy.from_config(load_config().get('conversion'))
    return DcagConverter(policy).convert(ag)
