"""
旁车文件导出模块

每个输出 CSV 旁写一个同名 JSON：命令、种子、配置、点估计、区间、
Monte Carlo 标准误、日志统计与性能信息。复现结果包另写 checks.json。
"""

import json
import math
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from .config import RunConfig
from .error_handler import ConfigError, get_error_handler
from .path_manager import PathManager
from .performance_optimizer import MemoryManager


def _to_json(value: Any) -> Any:
    """numpy 类型与非有限浮点数转换为 JSON 可表示的值"""
    if isinstance(value, dict):
        return {str(k): _to_json(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_json(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_to_json(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, Path):
        return str(value)
    return value


class SidecarExporter:
    """旁车文件导出器"""

    def __init__(self, config: Optional[RunConfig] = None):
        self.config = config
        self.memory_manager = MemoryManager()

    def collect_run_data(self, result: Dict[str, Any],
                         performance: Optional[Dict[str, Any]] = None,
                         timestamp: Optional[datetime] = None) -> Dict[str, Any]:
        """
        收集运行数据

        Args:
            result: 命令结果摘要（点估计、区间、标准误、标记等）
            performance: 性能计时
            timestamp: 时间戳
        """
        timestamp = timestamp or datetime.now()
        data: Dict[str, Any] = {'timestamp': timestamp.isoformat(timespec='seconds')}

        if self.config is not None:
            data.update({
                'command': self.config.command,
                'seed': self.config.seed,
                'tolerances': {
                    'mc_tolerance': self.config.mc_tolerance,
                    'mc_samples': self.config.mc_samples,
                    'bootstrap_samples': self.config.bootstrap_samples,
                },
                'config': self.config.to_dict(),
            })

        data.update(result)
        data['log'] = get_error_handler().get_stats()
        if performance:
            data['performance'] = performance
        data['memory'] = self.memory_manager.get_process_memory()
        return data

    @staticmethod
    def write_json(path: Union[str, Path], payload: Dict[str, Any]) -> Path:
        """写 JSON（indent 2，UTF-8，键排序）"""
        path = Path(path)
        try:
            with open(path, 'w', encoding='utf-8') as f:
                json.dump(_to_json(payload), f, indent=2, ensure_ascii=False, sort_keys=True)
                f.write('\n')
        except OSError as e:
            raise ConfigError(f"cannot write {path}: {e}") from e
        return path

    def export_run(self, csv_path: Union[str, Path], result: Dict[str, Any],
                   performance: Optional[Dict[str, Any]] = None) -> Path:
        """为输出 CSV 写旁车文件，返回其路径"""
        payload = self.collect_run_data(result, performance)
        payload['output'] = str(csv_path)
        return self.write_json(PathManager.sidecar_path(csv_path), payload)

    def export_checks(self, output_dir: Union[str, Path], bundle: str,
                      checks: List[Dict[str, Any]], files: List[str]) -> Path:
        """
        写复现结果包的 checks.json

        Args:
            checks: 每项 {name, expected, observed, tolerance, passed}
            files: 结果包中的 CSV 文件名
        """
        payload = {
            'bundle': bundle,
            'seed': None if self.config is None else self.config.seed,
            'files': files,
            'checks': checks,
            'passed': sum(1 for c in checks if c.get('passed')),
            'failed': sum(1 for c in checks if not c.get('passed')),
        }
        return self.write_json(Path(output_dir) / 'checks.json', payload)
