"""
Scenario Lang - текстовый язык сценариев DCAG (.dcag), экспорт в DOT и CSV

Грамматика:
    root     ID level NUM
    node     ID intensity NUM [extended]
    gateway  ID (csum|sum) ( ID, ... ) [prob NUM]
    edge     ID -> ID kind (same|gated|self) prob NUM intensity NUM [channel ID]
    init     ID NUM
    simulate iterations INT [system ( ID, ... )] [tolerance NUM] [inner_max INT]
'#' - комментарий до конца строки.
"""

import math
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

from dcag_model import (
    Dcag, DcagError, Edge, EdgeKind, Gateway, GatewayKind, NodeKind, RootNode,
    ValueNode, Violation, validate,
)
from logger import get_logger

logger = get_logger()

SIGNIFICANT_DIGITS = 12
CSV_FLOAT_FORMAT = '%.9f'

TOKEN_SPEC = [
    ('NUMBER', r'[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?'),
    ('ARROW', r'->'),
    ('ID', r'[A-Za-z][A-Za-z0-9_]*'),
    ('LPAREN', r'\('),
    ('RPAREN', r'\)'),
    ('COMMA', r','),
    ('COMMENT', r'#[^\n]*'),
    ('NEWLINE', r'\n'),
    ('SKIP', r'[ \t\r\f\v]+'),
    ('MISMATCH', r'.'),
]
TOKEN_REGEX = re.compile('|'.join(f'(?P<{name}>{pattern})' for name, pattern in TOKEN_SPEC))
INT_REGEX = re.compile(r'[-+]?\d+')
STATEMENTS = ('root', 'node', 'gateway', 'edge', 'simulate', 'init')


class ParseError(DcagError):
    """Ошибка разбора сценария с позицией"""

    def __init__(self, line: int, column: int, message: str, snippet: str = ''):
        self.line = max(1, line)
        self.column = max(1, column)
        self.message = message
        self.snippet = snippet
        super().__init__(f"{self.line}:{self.column}: {message}" + (f" near {snippet!r}" if snippet else ''))

    @property
    def errors(self) -> List['ParseError']:
        return [self]


class ScenarioValidationError(ParseError):
    """Граф сценария не прошёл validate: все нарушения, каждое со своей позицией"""

    def __init__(self, errors: Sequence[ParseError]):
        first = errors[0]
        super().__init__(first.line, first.column, first.message, first.snippet)
        self._errors = list(errors)

    @property
    def errors(self) -> List[ParseError]:
        return list(self._errors)


@dataclass(frozen=True)
class SimConfig:
    """Параметры симуляции"""
    iterations: int = 120
    inner_tolerance: float = 1e-12
    inner_max_iters: int = 10000
    initial_state: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        if not self.inner_tolerance > 0:
            raise ValueError(f"inner_tolerance must be > 0, got {self.inner_tolerance}")
        if self.inner_max_iters < 1:
            raise ValueError(f"inner_max_iters must be >= 1, got {self.inner_max_iters}")
        for node_id, value in self.initial_state.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"initial state of {node_id} must be in [0, 1], got {value}")

    @classmethod
    def from_config(cls, section: Optional[Dict]) -> 'SimConfig':
        """
        Создать из секции 'simulation' config.yaml

        Args:
            section: Словарь секции (может быть None)
        """
        section = section or {}
        return cls(
            iterations=int(section.get('iterations', 120)),
            inner_tolerance=float(section.get('inner_tolerance', 1e-12)),
            inner_max_iters=int(section.get('inner_max_iters', 10000)),
        )


@dataclass(frozen=True)
class Scenario:
    """Граф + конфигурация симуляции"""
    graph: Dcag
    config: SimConfig = field(default_factory=SimConfig)


@dataclass(frozen=True)
class Token:
    kind: str
    value: str
    line: int
    column: int


def tokenize(source: str) -> List[Token]:
    """
    Разбить текст на токены

    Raises:
        ParseError: при недопустимом символе
    """
    tokens: List[Token] = []
    line, line_start = 1, 0
    for match in TOKEN_REGEX.finditer(source):
        kind = match.lastgroup
        value = match.group()
        column = match.start() - line_start + 1
        if kind == 'NEWLINE':
            line += 1
            line_start = match.end()
        elif kind in ('SKIP', 'COMMENT'):
            continue
        elif kind == 'MISMATCH':
            raise ParseError(line, column, f"unexpected character {value!r}", value)
        else:
            tokens.append(Token(kind, value, line, column))
    return tokens


class ScenarioParser:
    """Рекурсивный спуск по токенам сценария"""

    def __init__(self, source: str, defaults: Optional[SimConfig] = None):
        self.defaults = defaults or SimConfig()
        self.tokens = tokenize(source)
        self.pos = 0

        self.roots: List[RootNode] = []
        self.nodes: List[ValueNode] = []
        self.gateways: List[Gateway] = []
        self.edges: List[Edge] = []
        self.initial_state: Dict[str, float] = {}
        self.sim: Optional[Dict] = None

        # id -> токен объявления, ссылки для разрешения
        self.declared: Dict[str, Token] = {}
        self.references: List[Tuple[Token, str]] = []
        self.edge_tokens: List[Token] = []

    # ---------- токены ----------

    def _peek(self) -> Optional[Token]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _error_at_end(self, message: str) -> ParseError:
        if not self.tokens:
            return ParseError(1, 1, message)
        last = self.tokens[-1]
        return ParseError(last.line, last.column, message, last.value)

    def _next(self, expected: str) -> Token:
        token = self._peek()
        if token is None:
            raise self._error_at_end(f"unexpected end of input, expected {expected}")
        self.pos += 1
        return token

    def _expect(self, kind: str, value: Optional[str] = None) -> Token:
        expected = repr(value) if value else kind
        token = self._next(expected)
        if token.kind != kind or (value is not None and token.value != value):
            raise ParseError(token.line, token.column, f"expected {expected}", token.value)
        return token

    def _accept(self, kind: str, value: Optional[str] = None) -> Optional[Token]:
        token = self._peek()
        if token and token.kind == kind and (value is None or token.value == value):
            self.pos += 1
            return token
        return None

    def _number(self) -> Tuple[float, Token]:
        token = self._expect('NUMBER')
        return float(token.value), token

    def _probability(self) -> float:
        value, token = self._number()
        if not 0.0 <= value <= 1.0:
            raise ParseError(token.line, token.column, f"probability out of range: {token.value}", token.value)
        return value

    def _nonnegative(self, what: str) -> float:
        value, token = self._number()
        if value < 0:
            raise ParseError(token.line, token.column, f"negative {what}: {token.value}", token.value)
        return value

    def _integer(self, minimum: int) -> int:
        token = self._expect('NUMBER')
        if not INT_REGEX.fullmatch(token.value) or int(token.value) < minimum:
            raise ParseError(token.line, token.column, f"expected integer >= {minimum}", token.value)
        return int(token.value)

    def _declare(self) -> Token:
        token = self._expect('ID')
        if token.value in self.declared:
            first = self.declared[token.value]
            raise ParseError(token.line, token.column,
                             f"duplicate identifier {token.value} (first declared at {first.line}:{first.column})",
                             token.value)
        self.declared[token.value] = token
        return token

    def _reference(self, role: str) -> str:
        token = self._expect('ID')
        self.references.append((token, role))
        return token.value

    def _id_list(self, role: str) -> List[str]:
        self._expect('LPAREN')
        ids = [self._reference(role)]
        while self._accept('COMMA'):
            ids.append(self._reference(role))
        self._expect('RPAREN')
        return ids

    # ---------- операторы ----------

    def parse(self) -> Scenario:
        while self._peek() is not None:
            token = self._next('statement')
            if token.kind != 'ID' or token.value not in STATEMENTS:
                raise ParseError(token.line, token.column, f"unknown keyword {token.value!r}", token.value)
            getattr(self, f'_parse_{token.value}')(token)
        self._resolve()

        sim = self.sim or {}
        graph = Dcag(
            roots=self.roots,
            nodes=self.nodes,
            gateways=self.gateways,
            edges=self.edges,
            system_nodes=sim.get('system', ()),
        )
        self._check(graph)
        try:
            config = SimConfig(
                iterations=sim.get('iterations', self.defaults.iterations),
                inner_tolerance=sim.get('tolerance', self.defaults.inner_tolerance),
                inner_max_iters=sim.get('inner_max', self.defaults.inner_max_iters),
                initial_state=self.initial_state,
            )
        except ValueError as e:
            token = sim.get('token') or (self.tokens[0] if self.tokens else Token('', '', 1, 1))
            raise ParseError(token.line, token.column, str(e))
        return Scenario(graph, config)

    def _parse_root(self, _keyword: Token):
        node_id = self._declare().value
        self._expect('ID', 'level')
        self.roots.append(RootNode(node_id, self._nonnegative('level')))

    def _parse_node(self, _keyword: Token):
        node_id = self._declare().value
        self._expect('ID', 'intensity')
        value, token = self._number()
        if value <= 0:
            raise ParseError(token.line, token.column, f"node intensity must be > 0: {token.value}", token.value)
        kind = NodeKind.EXTENDED_EXPLOIT if self._accept('ID', 'extended') else NodeKind.EXPLOIT
        self.nodes.append(ValueNode(node_id, value, kind))

    def _parse_gateway(self, _keyword: Token):
        gateway_id = self._declare().value
        kind_token = self._expect('ID')
        try:
            kind = GatewayKind(kind_token.value)
        except ValueError:
            raise ParseError(kind_token.line, kind_token.column,
                             f"unknown gateway kind {kind_token.value!r}", kind_token.value)
        parents = self._id_list('gateway parent')
        prob = self._probability() if self._accept('ID', 'prob') else 1.0
        self.gateways.append(Gateway.uniform(gateway_id, kind, parents, prob))

    def _parse_edge(self, keyword: Token):
        src = self._reference('edge source')
        self._expect('ARROW')
        dst = self._reference('edge target')
        self._expect('ID', 'kind')
        kind_token = self._expect('ID')
        try:
            kind = EdgeKind(kind_token.value)
        except ValueError:
            raise ParseError(kind_token.line, kind_token.column,
                             f"unknown edge kind {kind_token.value!r}", kind_token.value)
        if (kind is EdgeKind.SELF_LOOP) != (src == dst):
            raise ParseError(kind_token.line, kind_token.column,
                             "self edges require src == dst and only self edges may loop", kind_token.value)
        self._expect('ID', 'prob')
        prob = self._probability()
        self._expect('ID', 'intensity')
        intensity = self._nonnegative('intensity')
        channel = self._expect('ID').value if self._accept('ID', 'channel') else None
        self.edges.append(Edge(src, dst, kind, prob, intensity, channel))
        self.edge_tokens.append(keyword)

    def _parse_init(self, _keyword: Token):
        node_id = self._reference('initial state')
        value, token = self._number()
        if not 0.0 <= value <= 1.0:
            raise ParseError(token.line, token.column, f"initial risk out of range: {token.value}", token.value)
        if node_id in self.initial_state:
            raise ParseError(token.line, token.column, f"duplicate initial state for {node_id}", node_id)
        self.initial_state[node_id] = value

    def _parse_simulate(self, keyword: Token):
        if self.sim is not None:
            raise ParseError(keyword.line, keyword.column, "duplicate simulate statement", keyword.value)
        self._expect('ID', 'iterations')
        sim: Dict = {'token': keyword, 'iterations': self._integer(1)}
        if self._accept('ID', 'system'):
            sim['system'] = tuple(self._id_list('system node'))
        if self._accept('ID', 'tolerance'):
            value, token = self._number()
            if value <= 0:
                raise ParseError(token.line, token.column, f"tolerance must be > 0: {token.value}", token.value)
            sim['tolerance'] = value
        if self._accept('ID', 'inner_max'):
            sim['inner_max'] = self._integer(1)
        self.sim = sim

    # ---------- разрешение и проверка ----------

    def _resolve(self):
        node_ids = {node.id for node in self.nodes}
        for token, role in self.references:
            if token.value not in self.declared:
                raise ParseError(token.line, token.column, f"unresolved identifier {token.value}", token.value)
            if role in ('edge target', 'system node', 'initial state') and token.value not in node_ids:
                raise ParseError(token.line, token.column,
                                 f"{role} {token.value} must be a value node", token.value)

    def _check(self, graph: Dcag):
        problems = validate(graph)
        if problems:
            raise ScenarioValidationError([self._locate(violation) for violation in problems])

    def _locate(self, violation: Violation) -> ParseError:
        token = self.declared.get(violation.subject)
        if token is None and violation.subject.startswith('edge '):
            for edge, edge_token in zip(self.edges, self.edge_tokens):
                if violation.subject == f"edge {edge.src}->{edge.dst}":
                    token = edge_token
                    break
        if token is None:
            token = self.tokens[0] if self.tokens else Token('', '', 1, 1)
        return ParseError(token.line, token.column, violation.message, token.value)


# ============ ПУБЛИЧНЫЕ ОПЕРАЦИИ ============

def parse_scenario(source: str, defaults: Optional[SimConfig] = None) -> Scenario:
    """
    Разобрать текст сценария

    Args:
        source: Текст на языке сценариев
        defaults: Параметры симуляции, не заданные в simulate (None = SimConfig())

    Returns:
        Scenario с корректным графом

    Raises:
        ParseError: с позицией ошибки
    """
    scenario = ScenarioParser(source, defaults).parse()
    logger.debug(f"Сценарий разобран: {len(scenario.graph.roots)} корней, "
                 f"{len(scenario.graph.nodes)} узлов, {len(scenario.graph.edges)} связей")
    return scenario


def load_scenario(path: str, defaults: Optional[SimConfig] = None) -> Scenario:
    """Прочитать сценарий из файла .dcag"""
    with open(path, 'r', encoding='utf-8') as f:
        return parse_scenario(f.read(), defaults)


def save_scenario(path: str, scenario: Scenario):
    """Записать сценарий в каноническом виде"""
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(render_scenario(scenario))


def _edge_sort_key(edge: Edge) -> Tuple:
    return (edge.src, edge.dst, edge.kind.value, edge.channel or '', edge.cond_prob, edge.intensity)


def format_number(value: float) -> str:
    """Число с не более чем 12 значащими цифрами"""
    return format(value, f'.{SIGNIFICANT_DIGITS}g')


def render_scenario(scenario: Scenario) -> str:
    """
    Канонический текст сценария

    Объявления отсортированы по (тип, id); parse(render(s)) структурно равен s.

    В языке нет записи для csum-шлюза с разными вероятностями A и для
    simulate iterations 0, такие сценарии задаются только из кода.

    Raises:
        DcagError: csum-шлюз с неравномерной таблицей A или iterations = 0
    """
    graph, config = scenario.graph, scenario.config
    if config.iterations < 1:
        raise DcagError(f"iterations must be >= 1 to render, got {config.iterations}")
    lines: List[str] = []

    for root in sorted(graph.roots, key=lambda r: r.id):
        lines.append(f"root {root.id} level {format_number(root.level)}")

    for node in sorted(graph.nodes, key=lambda n: n.id):
        suffix = ' extended' if node.kind is NodeKind.EXTENDED_EXPLOIT else ''
        lines.append(f"node {node.id} intensity {format_number(node.total_intensity)}{suffix}")

    for gateway in sorted(graph.gateways, key=lambda g: g.id):
        parents = ', '.join(gateway.parents)
        line = f"gateway {gateway.id} {gateway.kind.value}({parents})"
        if gateway.kind is GatewayKind.CONDITIONAL_SUM:
            prob = gateway.uniform_prob
            if prob is None:
                raise DcagError(f"gateway {gateway.id}: non-uniform probabilities cannot be rendered")
            line += f" prob {format_number(prob)}"
        lines.append(line)

    for edge in sorted(graph.edges, key=_edge_sort_key):
        line = (f"edge {edge.src} -> {edge.dst} kind {edge.kind.value} "
                f"prob {format_number(edge.cond_prob)} intensity {format_number(edge.intensity)}")
        if edge.channel:
            line += f" channel {edge.channel}"
        lines.append(line)

    for node_id in sorted(config.initial_state):
        lines.append(f"init {node_id} {format_number(config.initial_state[node_id])}")

    simulate = f"simulate iterations {config.iterations}"
    if graph.system_nodes:
        simulate += f" system({', '.join(graph.system_nodes)})"
    simulate += f" tolerance {format_number(config.inner_tolerance)} inner_max {config.inner_max_iters}"
    lines.append(simulate)
    return '\n'.join(lines) + '\n'


def _close(a, b) -> bool:
    if isinstance(a, float) or isinstance(b, float):
        return math.isclose(a, b, rel_tol=1e-11, abs_tol=1e-300)
    if isinstance(a, tuple) and isinstance(b, tuple):
        return len(a) == len(b) and all(_close(x, y) for x, y in zip(a, b))
    return a == b


def scenarios_equivalent(a: Scenario, b: Scenario) -> bool:
    """Структурное равенство сценариев (порядок объявлений не важен)"""
    left = (a.graph.canonical(), a.config.iterations, a.config.inner_tolerance,
            a.config.inner_max_iters, tuple(sorted(a.config.initial_state.items())))
    right = (b.graph.canonical(), b.config.iterations, b.config.inner_tolerance,
             b.config.inner_max_iters, tuple(sorted(b.config.initial_state.items())))
    return _close(left, right)


# ============ DOT ============

DOT_EDGE_STYLES = {
    EdgeKind.SAME_SLICE: 'solid',
    EdgeKind.GATED_CROSS_SLICE: 'dashed',
    EdgeKind.SELF_LOOP: 'dotted',
}


def render_dot(graph: Dcag) -> str:
    """
    Graphviz DOT: корни - box, узлы - ellipse, шлюзы - diamond

    Стиль связи: same - solid, gated - dashed, self - dotted.
    """
    if not (graph.roots or graph.nodes or graph.gateways):
        return 'digraph dcag { }'

    lines = ['digraph dcag {']
    for root in sorted(graph.roots, key=lambda r: r.id):
        lines.append(f'  "{root.id}" [shape=box, label="{root.id}\\nlevel={format_number(root.level)}"];')
    for node in sorted(graph.nodes, key=lambda n: n.id):
        lines.append(f'  "{node.id}" [shape=ellipse];')
    for gateway in sorted(graph.gateways, key=lambda g: g.id):
        lines.append(f'  "{gateway.id}" [shape=diamond, label="{gateway.id}\\n{gateway.kind.value}"];')
    for gateway in sorted(graph.gateways, key=lambda g: g.id):
        for parent in gateway.parents:
            lines.append(f'  "{parent}" -> "{gateway.id}" [color=gray, arrowhead=odot];')

    for edge in sorted(graph.edges, key=_edge_sort_key):
        label = f"a={format_number(edge.cond_prob)} r={format_number(edge.intensity)}"
        if edge.channel:
            label += f" {edge.channel}"
        lines.append(f'  "{edge.src}" -> "{edge.dst}" [style={DOT_EDGE_STYLES[edge.kind]}, label="{label}"];')
    lines.append('}')
    return '\n'.join(lines) + '\n'


# ============ CSV ============

def trajectory_frame(traj) -> pd.DataFrame:
    """Траектория в широком формате: t, узлы по возрастанию id, system_risk"""
    node_ids = sorted(traj.states[0].values) if traj.states else []
    rows = []
    for state, risk in zip(traj.states, traj.system_risk):
        row = {'t': int(state.t)}
        row.update({node_id: float(state.values[node_id]) for node_id in node_ids})
        row['system_risk'] = float(risk)
        rows.append(row)
    return pd.DataFrame(rows, columns=['t', *node_ids, 'system_risk'])


def write_trajectory_csv(traj) -> str:
    """
    CSV траектории, значения с 9 знаками после запятой

    Args:
        traj: Trajectory (states + system_risk)

    Returns:
        Текст CSV
    """
    return trajectory_frame(traj).to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator='\n')


def write_sweep_csv(rows: Sequence[Tuple[float, float]]) -> str:
    """CSV перебора уровней: level,system_risk"""
    frame = pd.DataFrame({
        'level': [format_number(level) for level, _ in rows],
        'system_risk': [float(risk) for _, risk in rows],
    }, columns=['level', 'system_risk'])
    return frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator='\n')
