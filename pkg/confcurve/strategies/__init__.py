"""
命令策略模块

使用策略模式处理各个 CLI 命令的执行逻辑。
"""

from .command_strategy import CommandStrategy, CommandContext, CommandResult
from .likelihood_strategies import (
    PivotCDStrategy, WilksCCStrategy, BartlettCCStrategy, CoverageSimStrategy
)
from .meta_strategies import OptimalCDStrategy, FuseStrategy, TauCDStrategy
from .quantile_strategy import QuantileCCStrategy
from .robust_strategy import RobustCCStrategy

__all__ = [
    'CommandStrategy',
    'CommandContext',
    'CommandResult',
    'PivotCDStrategy',
    'WilksCCStrategy',
    'BartlettCCStrategy',
    'CoverageSimStrategy',
    'OptimalCDStrategy',
    'FuseStrategy',
    'TauCDStrategy',
    'QuantileCCStrategy',
    'RobustCCStrategy',
]
