"""
命令行入口

    confcurve [全局参数] <命令> [命令参数]

配置优先级：命令预设 < --config JSON 文件 < 命令行参数。
退出码：0 成功，2 配置错误，3 数值失败，4 数据校验失败。
"""

import argparse
import json
import logging
import sys
from typing import Any, Dict, List, Optional

from . import __version__
from .core.config import ConfigManager, RunConfig
from .core.error_handler import ConfigError, handle_exception, setup_global_error_handler
from .core.runner import EXIT_CONFIG, CommandRunner
from .reproduce import BundleRunner


LOG_LEVELS = ['DEBUG', 'INFO', 'WARNING', 'ERROR']


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _json_object(text: str) -> Dict[str, float]:
    try:
        value = json.loads(text)
    except json.JSONDecodeError as e:
        raise argparse.ArgumentTypeError(f"invalid JSON: {e}")
    if not isinstance(value, dict):
        raise argparse.ArgumentTypeError("expected a JSON object such as '{\"mu\": 0, \"sigma\": 1}'")
    return value


def _global_options(default: Any = None) -> argparse.ArgumentParser:
    """全局参数；可写在命令名前后（子命令层用 SUPPRESS，避免覆盖命令名前给出的值）"""
    parser = argparse.ArgumentParser(add_help=False, argument_default=default)
    parser.add_argument('--config', help='JSON 配置文件（键与 RunConfig 字段同名）')
    parser.add_argument('--output', help='输出 CSV 路径（reproduce 为结果包目录）')
    parser.add_argument('--seed', type=int, help=ConfigManager.get_help('seed'))
    parser.add_argument('--threads', type=int, help='并行线程上限（默认物理核数）')
    parser.add_argument('--log-level', choices=LOG_LEVELS, help='日志级别，默认 INFO')
    parser.add_argument('--log-file', help='另写一份日志到该文件')
    parser.add_argument('--fixture-dir', help='夹具目录（覆盖 CONFCURVE_FIXTURE_DIR）')
    return parser


def _command_options() -> argparse.ArgumentParser:
    """各命令的数据、模型与方法参数"""
    parser = argparse.ArgumentParser(add_help=False)
    data = parser.add_argument_group('数据')
    data.add_argument('--input', help='输入 CSV')
    data.add_argument('--fixture', help='内置夹具名（lidocaine, animals, lidocaine-studies, demography）')
    data.add_argument('--manifest', help='融合清单 JSON（fuse）')
    data.add_argument('--log-log', dest='log_log', action='store_const', const=True, default=None,
                      help='对 x,y 取对数后再分析')
    data.add_argument('--subset', help=ConfigManager.get_help('subset'))

    model = parser.add_argument_group('模型与方法')
    model.add_argument('--model', help='模型名（normal, exponential, poisson-rate, binormal, ...）')
    model.add_argument('--focus', help='焦点参数名')
    model.add_argument('--method', help='构造方法（见各命令说明）')
    model.add_argument('--multistart', type=int, help='似然最大化的起点数')
    model.add_argument('--exact', action='store_const', const=True, default=None,
                       help='optimal-cd 使用精确卷积而非 Monte Carlo')
    model.add_argument('--a', dest='tuning', type=float, help=ConfigManager.get_help('tuning'))
    model.add_argument('--downweight', type=float, help=ConfigManager.get_help('downweight'))
    model.add_argument('--integral-mode', choices=ConfigManager.INTEGRAL_MODES,
                       help=ConfigManager.get_help('integral_mode'))
    model.add_argument('--quantile-levels', type=_float_list, help='分位数水平 p，逗号分隔')

    grid = parser.add_argument_group('网格', ConfigManager.get_help('grid'))
    grid.add_argument('--grid-lower', type=float)
    grid.add_argument('--grid-upper', type=float)
    grid.add_argument('--grid-points', type=int)
    grid.add_argument('--grid-spacing', choices=['linear', 'log'])

    sim = parser.add_argument_group('报告与模拟')
    sim.add_argument('--levels', type=_float_list, help=ConfigManager.get_help('levels'))
    sim.add_argument('--mc-samples', type=int, help=ConfigManager.get_help('mc_samples'))
    sim.add_argument('--mc-tolerance', type=float, help='条件 Monte Carlo 标准误目标')
    sim.add_argument('--bootstrap-samples', type=int, help=ConfigManager.get_help('bootstrap_samples'))
    sim.add_argument('--reps', type=int, help='覆盖率模拟的重复次数')
    sim.add_argument('--sample-size', type=int, help='覆盖率模拟的样本量 n')
    sim.add_argument('--true-params', type=_json_object, help='真参数 JSON，如 \'{"mu": 0, "sigma": 1}\'')
    return parser


def build_parser() -> argparse.ArgumentParser:
    """构造参数解析器"""
    global_options = _global_options()
    sub_global_options = _global_options(argparse.SUPPRESS)
    command_options = _command_options()
    parser = argparse.ArgumentParser(
        prog='confcurve', parents=[global_options],
        description='置信分布与置信曲线：输出可直接作图的 CSV 与 JSON 旁车文件')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    subparsers = parser.add_subparsers(dest='command', metavar='<command>', required=True)

    presets = ConfigManager.list_presets()
    for command in ConfigManager.COMMANDS:
        subparsers.add_parser(command, parents=[sub_global_options, command_options],
                              help=presets.get(command), description=presets.get(command))

    reproduce = subparsers.add_parser('reproduce', parents=[sub_global_options, command_options],
                                      help=presets['reproduce'], description=presets['reproduce'])
    reproduce.add_argument('bundle', choices=ConfigManager.BUNDLES)
    return parser


def flag_values(args: argparse.Namespace) -> Dict[str, Any]:
    """命令行参数转换为配置覆盖项（未给出的为 None，合并时忽略）"""
    values = {
        'input': args.input, 'fixture': args.fixture, 'manifest': args.manifest,
        'output': args.output, 'seed': args.seed, 'threads': args.threads,
        'model': args.model, 'focus': args.focus, 'method': args.method,
        'levels': args.levels, 'mc_samples': args.mc_samples, 'mc_tolerance': args.mc_tolerance,
        'bootstrap_samples': args.bootstrap_samples, 'reps': args.reps,
        'sample_size': args.sample_size, 'true_params': args.true_params,
        'tuning': args.tuning, 'downweight': args.downweight, 'log_log': args.log_log,
        'exact': args.exact, 'quantile_levels': args.quantile_levels,
        'integral_mode': args.integral_mode, 'multistart': args.multistart,
        'subset': args.subset, 'bundle': getattr(args, 'bundle', None),
    }
    grid = {'lower': args.grid_lower, 'upper': args.grid_upper,
            'points': args.grid_points, 'spacing': args.grid_spacing}
    if any(v is not None for v in grid.values()):
        values['grid'] = grid
    return values


def load_config(args: argparse.Namespace) -> RunConfig:
    """
    合并预设、配置文件与命令行参数

    Raises:
        ConfigError: 配置文件无法读取或含未知字段
    """
    manager = ConfigManager()
    file_values = manager.load_json(args.config) if args.config else {}
    file_values.pop('command', None)
    return manager.build_config(args.command, file_values, flag_values(args))


def main(argv: Optional[List[str]] = None) -> int:
    """命令行入口；返回退出码"""
    args = build_parser().parse_args(argv)
    setup_global_error_handler(getattr(logging, args.log_level or 'INFO'), args.log_file)

    try:
        config = load_config(args)
    except ConfigError as e:
        handle_exception(e, 'configuration')
        return EXIT_CONFIG

    if config.command == 'reproduce':
        return BundleRunner(config, args.fixture_dir).run()
    return CommandRunner(config, args.fixture_dir).run()


if __name__ == '__main__':
    sys.exit(main())
