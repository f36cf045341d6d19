"""
confcurve - 核心模块

运行所需的基础设施组件。

模块结构:
- config: 配置管理
- error_handler: 异常层次与日志
- path_manager: 输出路径与数据夹具
- csv_io: CSV 编解码
- performance_optimizer: 并行批处理与性能监控
- sidecar_exporter: 旁车 JSON 导出
- runner: 运行协调器（由 cli 直接导入）
"""

from .config import RunConfig, GridSpec, ConfigManager, ValidationResult
from .path_manager import PathManager
from .csv_io import read_frame, write_frame
from .performance_optimizer import BatchProcessor, get_batch_processor, set_max_workers
from .sidecar_exporter import SidecarExporter
from .error_handler import (
    ErrorHandler, ErrorContext, ConfCurveError, ConfigError, MethodNotApplicableError,
    NumericalError, OptimizationError, QuadratureError, SingularMatrixError,
    DataValidationError, NoUniqueCDError, TailRangeError, FixtureMissingError,
    get_error_handler, setup_global_error_handler,
    log_info, log_warning, log_error, log_debug,
    handle_exception, error_context
)

__all__ = [
    'RunConfig',
    'GridSpec',
    'ConfigManager',
    'ValidationResult',
    'PathManager',
    'read_frame',
    'write_frame',
    'BatchProcessor',
    'get_batch_processor',
    'set_max_workers',
    'SidecarExporter',
    'ErrorHandler',
    'ErrorContext',
    'ConfCurveError',
    'ConfigError',
    'MethodNotApplicableError',
    'NumericalError',
    'OptimizationError',
    'QuadratureError',
    'SingularMatrixError',
    'DataValidationError',
    'NoUniqueCDError',
    'TailRangeError',
    'FixtureMissingError',
    'get_error_handler',
    'setup_global_error_handler',
    'log_info',
    'log_warning',
    'log_error',
    'log_debug',
    'handle_exception',
    'error_context'
]
