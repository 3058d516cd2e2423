"""
DCAG CLI - командная строка: проверка, симуляция, перебор уровней, эксперименты CTCS-3

Коды выхода: 0 - успех, 1 - ошибка разбора/валидации, 2 - ошибка вычисления, 3 - ошибка использования
"""

import argparse
import os
import sys
from dataclasses import replace
from enum import IntEnum
from typing import Dict, List, Optional, Sequence

import pandas as pd

from ctcs_case import (
    ATTACK_ROOTS, NETWORK_MAX_STEP, CtcsOptions, cbi_verdict, experiment_attack_impact,
    experiment_attack_levels, experiment_cbi, experiment_component_ranking, levels_verdict,
    ranking_verdict, reference_value, write_bundled_scenarios,
)
from dcag_model import ConvergenceError, DcagError, InferenceError, StructuralError
from inference_engine import run, sweep
from logger import DEFAULT_CONFIG_PATH, get_logger, load_config, setup_logging
from scenario_lang import (
    ParseError, Scenario, SimConfig, load_scenario, render_dot, write_sweep_csv, write_trajectory_csv,
)

logger = get_logger()

EXPERIMENTS = ('cbi', 'ranking', 'levels', 'impact')


class ExitStatus(IntEnum):
    OK = 0
    INVALID = 1
    RUNTIME = 2
    USAGE = 3


class UsageError(DcagError):
    """Некорректное использование: нет файла, неизвестный корень"""


class CliArgumentParser(argparse.ArgumentParser):
    """argparse с кодом выхода USAGE вместо 2"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(ExitStatus.USAGE, f"{self.prog}: error: {message}\n")


def parse_levels(text: str) -> List[float]:
    """'A..B' -> [A, A+1, ..., B]; одиночное число -> [A]"""
    try:
        if '..' in text:
            start, end = (int(part) for part in text.split('..', 1))
        else:
            start = end = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must look like A..B, got {text!r}")
    if start > end or start < 0:
        raise argparse.ArgumentTypeError(f"invalid level range {text!r}")
    return [float(level) for level in range(start, end + 1)]


def non_negative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {value}")
    return value


def write_text(path: str, text: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        f.write(text)


def summary(**fields) -> str:
    """Строка key=value для скриптов приёмки"""
    def fmt(value) -> str:
        if isinstance(value, bool):
            return str(value).lower()
        if isinstance(value, float):
            return f"{value:.9f}"
        if value is None:
            return 'na'
        return str(value)
    return ' '.join(f"{key}={fmt(value)}" for key, value in fields.items())


class DcagCli:
    """Команды CLI; каждый метод возвращает ExitStatus"""

    def __init__(self, config_path: Optional[str] = None):
        """
        Args:
            config_path: Путь к config.yaml
        """
        self.config = load_config(config_path)
        self.simulation = self.config.get('simulation') or {}
        self.experiments = self.config.get('experiments') or {}
        self.ctcs_options = CtcsOptions.from_config(self.config.get('ctcs'))
        self.sim_defaults = SimConfig.from_config(self.simulation)
        self.workers = int(self.simulation.get('sweep_workers', 1))

    def _load(self, path: str) -> Scenario:
        if not os.path.isfile(path):
            raise UsageError(f"no such file: {path}")
        return load_scenario(path, self.sim_defaults)

    def _with_iterations(self, scenario: Scenario, iterations: Optional[int]) -> Scenario:
        if iterations is None:
            return scenario
        return replace(scenario, config=replace(scenario.config, iterations=iterations))

    def cmd_validate(self, args) -> ExitStatus:
        self._load(args.path)
        logger.info(f"✅ {args.path}: сценарий корректен")
        return ExitStatus.OK

    def cmd_run(self, args) -> ExitStatus:
        scenario = self._with_iterations(self._load(args.path), args.iterations)
        trajectory = run(scenario)
        write_text(args.out, write_trajectory_csv(trajectory))
        if args.dot:
            write_text(args.dot, render_dot(scenario.graph))
        print(f"{trajectory.final_system_risk:.9f}")
        return ExitStatus.OK

    def cmd_sweep(self, args) -> ExitStatus:
        scenario = self._load(args.path)
        if scenario.graph.kind_of(args.root) != 'root':
            raise UsageError(f"unknown root {args.root}")
        rows = sweep(scenario, args.root, args.levels, args.iterations, self.workers)
        write_text(args.out, write_sweep_csv(rows))
        risks = [risk for _, risk in rows]
        print(summary(root=args.root, levels=len(rows), min=min(risks), max=max(risks)))
        return ExitStatus.OK

    def cmd_ctcs(self, args) -> ExitStatus:
        opts = replace(self.ctcs_options, cbi_functional_safety=args.cbi or self.ctcs_options.cbi_functional_safety)
        handler = {
            'cbi': self._experiment_cbi,
            'ranking': self._experiment_ranking,
            'levels': self._experiment_levels,
            'impact': self._experiment_impact,
        }[args.experiment]
        os.makedirs(args.out, exist_ok=True)
        print(handler(args, opts))
        return ExitStatus.OK

    def _iterations(self, args, key: str, default: int) -> int:
        return args.iterations if args.iterations is not None else int(self.experiments.get(key, default))

    def _levels(self, args) -> List[float]:
        if args.levels is not None:
            return args.levels
        return [float(level) for level in self.experiments.get('levels', range(1, 11))]

    def _experiment_cbi(self, args, opts: CtcsOptions) -> str:
        without, with_cbi = experiment_cbi(self._iterations(args, 'cbi_iterations', 120), opts)
        write_text(os.path.join(args.out, 'cbi_without.csv'), write_trajectory_csv(without))
        write_text(os.path.join(args.out, 'cbi_with.csv'), write_trajectory_csv(with_cbi))
        verdict = cbi_verdict(without, with_cbi)
        return summary(experiment='cbi', without=verdict.without_final, with_cbi=verdict.with_final,
                       with_bounded=verdict.with_bounded, without_saturated=verdict.without_saturated,
                       dominated=verdict.dominated)

    def _experiment_ranking(self, args, opts: CtcsOptions) -> str:
        ranking = experiment_component_ranking(self._iterations(args, 'ranking_iterations', 10), opts)
        frame = pd.DataFrame(ranking, columns=['node', 'risk'])
        write_text(os.path.join(args.out, 'ranking.csv'),
                   frame.to_csv(index=False, float_format='%.12e', lineterminator='\n'))
        verdict = ranking_verdict(ranking)
        return summary(experiment='ranking', separated=verdict.separated,
                       central='>'.join(verdict.central_order), trackside='>'.join(verdict.trackside_order),
                       central_matches=verdict.central_matches, trackside_matches=verdict.trackside_matches)

    def _experiment_levels(self, args, opts: CtcsOptions) -> str:
        levels = self._levels(args)
        rows = experiment_attack_levels(args.attack, levels, self._iterations(args, 'levels_iterations', 120),
                                        opts, self.workers)
        references = [reference_value(args.attack, level) for level, _ in rows]
        frame = pd.DataFrame({
            'level': [f"{level:g}" for level, _ in rows],
            'system_risk': [risk for _, risk in rows],
            'reference_value': references,
            'deviation': [None if ref is None else abs(risk - ref) for (_, risk), ref in zip(rows, references)],
        }, columns=['level', 'system_risk', 'reference_value', 'deviation'])
        write_text(os.path.join(args.out, f"levels_{args.attack}.csv"),
                   frame.to_csv(index=False, float_format='%.9f', lineterminator='\n'))
        verdict = levels_verdict(rows, args.attack)
        fields: Dict = dict(experiment='levels', attack=args.attack, root=ATTACK_ROOTS[args.attack],
                            monotone=verdict.monotone, strictly_increasing=verdict.strictly_increasing,
                            max_step=verdict.max_step, max_deviation=verdict.max_deviation)
        if args.attack == 'network':
            fields['step_below_bound'] = verdict.max_step < NETWORK_MAX_STEP
        return summary(**fields)

    def _experiment_impact(self, args, opts: CtcsOptions) -> str:
        levels = self._levels(args)
        report = experiment_attack_impact(levels, self._iterations(args, 'levels_iterations', 120), opts, self.workers)
        columns = {'level': [f"{level:g}" for level in levels]}
        for attack, rows in report.sweeps.items():
            columns[attack] = [risk for _, risk in rows]
        frame = pd.DataFrame(columns, columns=['level', *ATTACK_ROOTS])
        write_text(os.path.join(args.out, 'impact.csv'),
                   frame.to_csv(index=False, float_format='%.9f', lineterminator='\n'))
        return summary(experiment='impact', malware_dominates=report.malware_dominates,
                       malware_ot_exceeds_it=report.malware_ot_exceeds_it)

    def cmd_export_ctcs(self, args) -> ExitStatus:
        paths = write_bundled_scenarios(args.out, self.ctcs_options)
        print(summary(files=len(paths), out=args.out))
        return ExitStatus.OK


def build_parser() -> argparse.ArgumentParser:
    parser = CliArgumentParser(prog='dcag', description='Dynamic Causal Attack Graph risk propagation')
    parser.add_argument('--config', default=DEFAULT_CONFIG_PATH, help='path to config.yaml')
    commands = parser.add_subparsers(dest='command', required=True, parser_class=CliArgumentParser)

    validate_cmd = commands.add_parser('validate', help='parse and validate a scenario')
    validate_cmd.add_argument('path')

    run_cmd = commands.add_parser('run', help='simulate a scenario')
    run_cmd.add_argument('path')
    run_cmd.add_argument('--iterations', type=non_negative_int)
    run_cmd.add_argument('--out', required=True, help='trajectory CSV')
    run_cmd.add_argument('--dot', help='Graphviz DOT export')

    sweep_cmd = commands.add_parser('sweep', help='sweep one root level')
    sweep_cmd.add_argument('path')
    sweep_cmd.add_argument('--root', required=True)
    sweep_cmd.add_argument('--levels', type=parse_levels, required=True, help='A..B')
    sweep_cmd.add_argument('--iterations', type=non_negative_int)
    sweep_cmd.add_argument('--out', required=True)

    ctcs_cmd = commands.add_parser('ctcs', help='run a CTCS-3 experiment')
    ctcs_cmd.add_argument('--experiment', required=True, choices=EXPERIMENTS)
    ctcs_cmd.add_argument('--iterations', type=non_negative_int)
    ctcs_cmd.add_argument('--attack', choices=tuple(ATTACK_ROOTS), default='wireless')
    ctcs_cmd.add_argument('--levels', type=parse_levels)
    ctcs_cmd.add_argument('--cbi', action='store_true', help='CBI functional safety')
    ctcs_cmd.add_argument('--out', required=True, help='output directory')

    export_cmd = commands.add_parser('export-ctcs', help='write bundled CTCS-3 scenarios')
    export_cmd.add_argument('--out', required=True)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config != DEFAULT_CONFIG_PATH and not os.path.isfile(args.config):
        print(f"dcag: error: no such config file: {args.config}", file=sys.stderr)
        return ExitStatus.USAGE
    setup_logging(args.config, force=True)

    cli = DcagCli(args.config)
    handler = {
        'validate': cli.cmd_validate,
        'run': cli.cmd_run,
        'sweep': cli.cmd_sweep,
        'ctcs': cli.cmd_ctcs,
        'export-ctcs': cli.cmd_export_ctcs,
    }[args.command]

    try:
        return int(handler(args))
    except UsageError as e:
        print(f"dcag: error: {e}", file=sys.stderr)
        return ExitStatus.USAGE
    except ParseError as e:
        for error in e.errors:
            print(f"{getattr(args, 'path', '')}:{error}", file=sys.stderr)
        return ExitStatus.INVALID
    except StructuralError as e:
        print(f"dcag: invalid: {e}", file=sys.stderr)
        return ExitStatus.INVALID
    except ConvergenceError as e:
        print(f"dcag: convergence failure: residual={e.residual:.3e} iterations={e.iterations}", file=sys.stderr)
        return ExitStatus.RUNTIME
    except (InferenceError, DcagError, ValueError, OSError) as e:
        logger.error(f"❌ Ошибка выполнения {args.command}: {e}")
        print(f"dcag: error: {e}", file=sys.stderr)
        return ExitStatus.RUNTIME


if __name__ == "__main__":
    sys.exit(main())
