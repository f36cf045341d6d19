"""
错误处理和日志模块

提供统一的错误处理、日志记录和异常管理功能。
异常类携带 CLI 退出码：0 成功，2 配置错误，3 数值失败，4 数据校验失败。
"""

import logging
import traceback
from datetime import datetime
from typing import Optional, Dict, Any, Sequence
from pathlib import Path


LOGGER_NAME = 'confcurve'


class ConfCurveError(Exception):
    """所有 confcurve 异常的基类"""
    exit_code = 1


class ConfigError(ConfCurveError):
    """配置错误"""
    exit_code = 2


class MethodNotApplicableError(ConfigError):
    """所选方法不适用于该模型"""
    pass


class NumericalError(ConfCurveError):
    """数值计算失败"""
    exit_code = 3


class OptimizationError(NumericalError):
    """优化未收敛，携带最佳迭代点"""

    def __init__(self, message: str, best_theta: Optional[Sequence[float]] = None,
                 best_value: Optional[float] = None):
        super().__init__(message)
        self.best_theta = None if best_theta is None else [float(v) for v in best_theta]
        self.best_value = best_value

    def __str__(self):
        base = super().__str__()
        if self.best_theta is None:
            return base
        return f"{base} (best iterate {self.best_theta}, objective {self.best_value})"


class QuadratureError(NumericalError):
    """数值积分未达到精度"""

    def __init__(self, message: str, estimate: float, error_bound: float):
        super().__init__(f"{message}: estimate {estimate:.6g}, error bound {error_bound:.3g}")
        self.estimate = estimate
        self.error_bound = error_bound


class SingularMatrixError(NumericalError):
    """矩阵奇异"""
    pass


class DataValidationError(ConfCurveError):
    """数据或领域对象校验失败"""
    exit_code = 4


class NoUniqueCDError(DataValidationError):
    """多峰置信曲线无法转换为唯一的置信分布"""
    pass


class TailRangeError(DataValidationError):
    """请求的尾部概率超出网格可达范围"""

    def __init__(self, message: str, achievable: Sequence[float]):
        lo, hi = float(achievable[0]), float(achievable[1])
        super().__init__(f"{message}; achievable range is [{lo:.6g}, {hi:.6g}]")
        self.achievable = (lo, hi)


class FixtureMissingError(DataValidationError):
    """缺少数据快照"""

    def __init__(self, message: str, instructions: str = ""):
        super().__init__(f"{message}\n{instructions}" if instructions else message)
        self.instructions = instructions


class ErrorHandler:
    """错误处理器"""

    def __init__(self, log_level: int = logging.INFO, log_file: Optional[str] = None):
        self.logger = self._setup_logger(log_level, log_file)
        self.error_count = 0
        self.warning_count = 0

    def _setup_logger(self, log_level: int, log_file: Optional[str]) -> logging.Logger:
        """设置日志记录器"""
        logger = logging.getLogger(LOGGER_NAME)
        logger.setLevel(log_level)

        formatter = logging.Formatter(
            '[%(asctime)s] [%(name)s] %(levelname)s: %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )

        # 避免重复添加控制台处理器
        if not any(getattr(h, '_confcurve_console', False) for h in logger.handlers):
            console_handler = logging.StreamHandler()
            console_handler._confcurve_console = True
            console_handler.setFormatter(formatter)
            logger.addHandler(console_handler)
        for handler in logger.handlers:
            handler.setLevel(log_level)

        # 文件处理器（如果指定了日志文件）
        if log_file:
            try:
                log_path = Path(log_file)
                log_path.parent.mkdir(parents=True, exist_ok=True)

                file_handler = logging.FileHandler(log_file, encoding='utf-8')
                file_handler.setLevel(log_level)
                file_handler.setFormatter(formatter)
                logger.addHandler(file_handler)
            except OSError as e:
                logger.warning(f"cannot create log file {log_file}: {e}")

        return logger

    def log_info(self, message: str, **kwargs):
        """记录信息日志"""
        self.logger.info(message, **kwargs)

    def log_warning(self, message: str, **kwargs):
        """记录警告日志"""
        self.warning_count += 1
        self.logger.warning(message, **kwargs)

    def log_error(self, message: str, exception: Optional[Exception] = None, **kwargs):
        """记录错误日志"""
        self.error_count += 1

        if exception:
            self.logger.error(f"{message}: {str(exception)}", **kwargs)
            self.logger.debug(traceback.format_exc())
        else:
            self.logger.error(message, **kwargs)

    def log_debug(self, message: str, **kwargs):
        """记录调试日志"""
        self.logger.debug(message, **kwargs)

    def handle_exception(self, exception: Exception, context: str = "",
                        reraise: bool = False) -> int:
        """
        处理异常

        Args:
            exception: 异常对象
            context: 异常上下文描述
            reraise: 是否重新抛出异常

        Returns:
            对应的退出码
        """
        error_msg = f"failure in {context}" if context else "failure"
        self.log_error(error_msg, exception)

        if reraise:
            raise exception

        return getattr(exception, 'exit_code', 1)

    def create_error_context(self, operation: str, suppress: bool = False,
                             **kwargs) -> 'ErrorContext':
        """创建错误上下文管理器"""
        return ErrorContext(self, operation, suppress=suppress, **kwargs)

    def get_stats(self) -> Dict[str, int]:
        """获取错误统计"""
        return {
            'error_count': self.error_count,
            'warning_count': self.warning_count
        }


class ErrorContext:
    """错误上下文管理器

    默认重新抛出异常；``suppress=True`` 时记录后吞掉异常。
    """

    def __init__(self, error_handler: ErrorHandler, operation: str,
                 suppress: bool = False, **kwargs):
        self.error_handler = error_handler
        self.operation = operation
        self.suppress = suppress
        self.context_data: Dict[str, Any] = kwargs
        self.start_time = None
        self.duration = 0.0

    def __enter__(self):
        self.start_time = datetime.now()
        self.error_handler.log_debug(f"start: {self.operation}")
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.duration = (datetime.now() - self.start_time).total_seconds()

        if exc_type is None:
            self.error_handler.log_debug(
                f"done: {self.operation} ({self.duration:.3f}s)"
            )
            return False

        if self.suppress:
            self.error_handler.handle_exception(
                exc_val, f"{self.operation} ({self.duration:.3f}s)"
            )
            return True
        self.error_handler.log_debug(
            f"aborted: {self.operation} ({self.duration:.3f}s): {exc_val}"
        )
        return False


# 全局错误处理器实例
_global_error_handler = None


def get_error_handler() -> ErrorHandler:
    """获取全局错误处理器"""
    global _global_error_handler
    if _global_error_handler is None:
        _global_error_handler = ErrorHandler()
    return _global_error_handler


def setup_global_error_handler(log_level: int = logging.INFO,
                              log_file: Optional[str] = None) -> ErrorHandler:
    """设置全局错误处理器"""
    global _global_error_handler
    _global_error_handler = ErrorHandler(log_level, log_file)
    return _global_error_handler


# 便捷函数
def log_info(message: str, **kwargs):
    """记录信息日志"""
    get_error_handler().log_info(message, **kwargs)


def log_warning(message: str, **kwargs):
    """记录警告日志"""
    get_error_handler().log_warning(message, **kwargs)


def log_error(message: str, exception: Optional[Exception] = None, **kwargs):
    """记录错误日志"""
    get_error_handler().log_error(message, exception, **kwargs)


def log_debug(message: str, **kwargs):
    """记录调试日志"""
    get_error_handler().log_debug(message, **kwargs)


def handle_exception(exception: Exception, context: str = "", reraise: bool = False) -> int:
    """处理异常"""
    return get_error_handler().handle_exception(exception, context, reraise)


def error_context(operation: str, suppress: bool = False, **kwargs) -> ErrorContext:
    """创建错误上下文管理器"""
    return get_error_handler().create_error_context(operation, suppress=suppress, **kwargs)
