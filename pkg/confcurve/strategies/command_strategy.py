"""
命令策略基类

定义了所有 CLI 命令策略的接口，以及读数据、建网格、汇总曲线的公共方法。
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..core.config import RunConfig
from ..core.csv_io import read_frame
from ..core.error_handler import ConfigError, TailRangeError, log_warning
from ..core.path_manager import PathManager
from ..core.performance_optimizer import BatchProcessor
from ..inference.cd_core import (
    CDGrid, ConfidenceCurve, cc_from_cd, default_focus_grid, equi_tailed_interval,
    level_set_region
)
from ..inference.likelihood_engine import FocusMap, ParametricModel
from ..inference.models import MODEL_COLUMNS, build_model, dataset_from_frame


@dataclass
class CommandContext:
    """命令运行时的共享资源"""
    paths: PathManager
    processor: BatchProcessor


@dataclass
class CommandResult:
    """
    命令结果

    Attributes:
        frame: 写入输出 CSV 的表格
        summary: 写入旁车文件的摘要（点估计、区间、标准误等）
        notes: 标记
    """
    frame: pd.DataFrame
    summary: Dict[str, Any] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)


class CommandStrategy(ABC):
    """命令策略基类"""

    name: str = ''

    @abstractmethod
    def execute(self, config: RunConfig, context: CommandContext) -> CommandResult:
        """
        执行命令

        Args:
            config: 运行配置
            context: 路径与批处理器

        Returns:
            命令结果
        """
        pass

    @abstractmethod
    def uses_seed(self) -> bool:
        """结果是否依赖随机种子"""
        pass

    def get_command_info(self) -> Dict[str, Any]:
        """获取命令信息"""
        return {'name': self.name, 'uses_seed': self.uses_seed()}

    # 公共方法

    @staticmethod
    def load_frame(config: RunConfig, context: CommandContext,
                   required_columns: Sequence[str] = ()) -> pd.DataFrame:
        """从 --input 或 --fixture 读取数据表（--input 优先）"""
        if config.input:
            return read_frame(config.input, required_columns)
        if config.fixture:
            return read_frame(context.paths.fixture_path(config.fixture), required_columns)
        raise ConfigError(f"{config.command} needs --input or --fixture")

    def load_model_data(self, config: RunConfig,
                        context: CommandContext) -> Tuple[ParametricModel, Any]:
        """按模型名读取数据并构造模型"""
        if not config.model:
            raise ConfigError(f"{config.command} needs --model")
        if config.model not in MODEL_COLUMNS:
            raise ConfigError(f"unknown model '{config.model}'")
        frame = self.load_frame(config, context, MODEL_COLUMNS[config.model])
        data = dataset_from_frame(config.model, frame, log_log=config.log_log)
        return build_model(config.model, data), data

    @staticmethod
    def focus_for(model: ParametricModel, config: RunConfig) -> FocusMap:
        label = config.focus or model.param_names[0]
        return model.focus_map(label)

    @staticmethod
    def build_grid(config: RunConfig, center: float, scale: float,
                   focus: Optional[FocusMap] = None) -> np.ndarray:
        """显式网格优先，否则取试验正态近似的默认网格并截断到参数空间内"""
        grid = config.grid.build()
        if grid is not None:
            return grid
        lower = upper = None
        bound = None if focus is None else focus.bound
        if bound is not None and bound.kind != 'real':
            if bound.kind == 'interval':
                margin = 1e-3 * (bound.upper - bound.lower)
                lower, upper = bound.lower + margin, bound.upper - margin
            else:
                lower = bound.lower if bound.closed_lower else bound.lower + 1e-3 * scale
        return default_focus_grid(center, scale, config.grid.points, lower, upper)

    @staticmethod
    def summarize_cd(cd: CDGrid, levels: Sequence[float]) -> Dict[str, Any]:
        """CD 的点估计（中位数）与等尾区间"""
        cc = cc_from_cd(cd)
        intervals = []
        for level in levels:
            try:
                intervals.append(equi_tailed_interval(cd, level).as_dict())
            except TailRangeError as e:
                log_warning(f"no {level:g} interval on this grid: {e}")
                intervals.append({'level': level, 'segments': [], 'notes': [str(e)]})
        return {'point_estimate': cc.point_estimate, 'intervals': intervals,
                'atom_at_lower_bound': cd.atom_at_lower_bound,
                'curve_notes': list(cc.notes)}

    @staticmethod
    def summarize_cc(cc: ConfidenceCurve, levels: Sequence[float]) -> Dict[str, Any]:
        """置信曲线的点估计与水平集区域"""
        regions = [level_set_region(cc, level).as_dict() for level in levels]
        return {'point_estimate': cc.point_estimate, 'intervals': regions,
                'curve_notes': list(cc.notes)}
