"""
运行协调器

协调配置校验、命令策略、CSV 写出与旁车导出，并把异常映射为退出码。
"""

from datetime import datetime
from typing import Dict, List, Optional

import numpy as np

from .config import ConfigManager, RunConfig
from .csv_io import write_frame
from .error_handler import ConfCurveError, error_context, handle_exception, log_error, log_info, \
    log_warning
from .path_manager import PathManager
from .performance_optimizer import set_max_workers
from .sidecar_exporter import SidecarExporter
from ..strategies import (
    CommandStrategy, CommandContext, PivotCDStrategy, WilksCCStrategy, BartlettCCStrategy,
    CoverageSimStrategy, OptimalCDStrategy, FuseStrategy, TauCDStrategy, QuantileCCStrategy,
    RobustCCStrategy
)


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_DATA = 4


class CommandRunner:
    """运行协调器"""

    def __init__(self, config: RunConfig, fixture_dir: Optional[str] = None,
                 base_output_dir: str = '.'):
        self.config = config
        self.config_manager = ConfigManager()
        self.path_manager = PathManager(base_output_dir, fixture_dir)
        self.exporter = SidecarExporter(config)

        # 初始化命令策略
        self.command_strategies = self._init_command_strategies()

    @staticmethod
    def _init_command_strategies() -> Dict[str, CommandStrategy]:
        """初始化命令策略"""
        strategies = [
            PivotCDStrategy(), WilksCCStrategy(), BartlettCCStrategy(), OptimalCDStrategy(),
            FuseStrategy(), TauCDStrategy(), QuantileCCStrategy(), RobustCCStrategy(),
            CoverageSimStrategy(),
        ]
        return {strategy.name: strategy for strategy in strategies}

    def get_supported_commands(self) -> List[str]:
        """获取支持的命令列表"""
        return list(self.command_strategies.keys())

    def run(self) -> int:
        """
        执行一次命令

        Returns:
            退出码：0 成功，2 配置错误，3 数值失败，4 数据校验失败
        """
        validation = self.config_manager.validate_config(self.config)
        for warning in validation.warnings:
            log_warning(warning)
        if not validation.valid:
            for error in validation.errors:
                log_error(f"config: {error}")
            return EXIT_CONFIG

        strategy = self.command_strategies[self.config.command]
        processor = set_max_workers(self.config.threads)
        context = CommandContext(self.path_manager, processor)

        try:
            with error_context(self.config.command, seed=self.config.seed):
                started = datetime.now()
                result = strategy.execute(self.config, context)
                csv_path = write_frame(self.path_manager.create_output_path(self.config.output),
                                       result.frame)
                summary = dict(result.summary)
                summary['notes'] = result.notes
                summary['elapsed_seconds'] = (datetime.now() - started).total_seconds()
                sidecar = self.exporter.export_run(csv_path, summary,
                                                   processor.get_performance_metrics())
        except ConfCurveError as e:
            return handle_exception(e, self.config.command)
        except (FloatingPointError, OverflowError, ZeroDivisionError, np.linalg.LinAlgError) as e:
            handle_exception(e, self.config.command)
            return EXIT_NUMERICAL

        log_info(f"{self.config.command}: wrote {csv_path} and {sidecar.name}")
        return EXIT_OK
