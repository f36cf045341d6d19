"""
CSV 读写模块

统一的 pandas 表格读写：浮点数以 17 位有效数字写出，
读取时使用 round-trip 解析，保证逐位一致的往返。
"""

from pathlib import Path
from typing import Iterable, Union

import pandas as pd

from .error_handler import DataValidationError, ConfigError


FLOAT_FORMAT = '%.17g'


def write_frame(path: Union[str, Path], frame: pd.DataFrame) -> Path:
    """写出 CSV（无索引，LF 换行）"""
    path = Path(path)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    return path


def read_frame(path: Union[str, Path], required_columns: Iterable[str] = ()) -> pd.DataFrame:
    """
    读取 CSV 并检查必需列

    Raises:
        ConfigError: 文件不存在
        DataValidationError: 缺列或无法解析
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"input file not found: {path}")
    try:
        frame = pd.read_csv(path, float_precision='round_trip', skipinitialspace=True)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataValidationError(f"cannot parse {path}: {e}") from e

    frame.columns = [str(c).strip() for c in frame.columns]
    missing = [c for c in required_columns if c not in frame.columns]
    if missing:
        raise DataValidationError(
            f"{path.name}: missing column(s) {', '.join(missing)} (found {', '.join(frame.columns)})")
    return frame
