"""
性能优化模块

提供批量并行处理、性能监控和内存报告功能。
"""

import time
import threading
from typing import Dict, List, Any, Optional, Callable, Sequence
from concurrent.futures import ThreadPoolExecutor, as_completed
import psutil

from .error_handler import log_error, log_debug


def default_worker_count() -> int:
    """默认工作线程数：物理核心数（至少为1）"""
    count = psutil.cpu_count(logical=False) or psutil.cpu_count() or 1
    return max(1, int(count))


class PerformanceMonitor:
    """性能监控器"""

    def __init__(self):
        self.metrics = {}
        self.start_times = {}
        self.lock = threading.Lock()

    def start_timer(self, operation: str):
        """开始计时"""
        with self.lock:
            self.start_times[operation] = time.perf_counter()

    def end_timer(self, operation: str) -> float:
        """结束计时并返回耗时"""
        with self.lock:
            if operation not in self.start_times:
                return 0.0

            duration = time.perf_counter() - self.start_times.pop(operation)
            metrics = self.metrics.setdefault(operation, {
                'count': 0,
                'total_time': 0.0,
                'min_time': float('inf'),
                'max_time': 0.0,
                'avg_time': 0.0
            })
            metrics['count'] += 1
            metrics['total_time'] += duration
            metrics['min_time'] = min(metrics['min_time'], duration)
            metrics['max_time'] = max(metrics['max_time'], duration)
            metrics['avg_time'] = metrics['total_time'] / metrics['count']
            return duration

    def get_metrics(self) -> Dict[str, Any]:
        """获取性能指标"""
        with self.lock:
            return {name: dict(values) for name, values in self.metrics.items()}


class BatchProcessor:
    """批量处理器

    结果按输入顺序返回；任务内的随机性必须来自按任务索引派生的子流，
    这样结果与线程调度无关。
    """

    def __init__(self, max_workers: Optional[int] = None):
        self.max_workers = max_workers or default_worker_count()
        self.monitor = PerformanceMonitor()

    def process_batch(self, items: Sequence[Any], processor_func: Callable,
                      **kwargs) -> List[Any]:
        """
        批量处理项目

        Args:
            items: 要处理的项目列表
            processor_func: 处理函数
            **kwargs: 传递给处理函数的额外参数

        Returns:
            处理结果列表（与 items 同序）
        """
        if not items:
            return []

        self.monitor.start_timer('batch_processing')

        try:
            # 单线程处理小批量
            if len(items) <= 2 or self.max_workers <= 1:
                return [processor_func(item, **kwargs) for item in items]

            results: List[Any] = [None] * len(items)
            failures = []

            with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
                future_to_index = {
                    executor.submit(processor_func, item, **kwargs): i
                    for i, item in enumerate(items)
                }

                for future in as_completed(future_to_index):
                    index = future_to_index[future]
                    try:
                        results[index] = future.result()
                    except Exception as e:
                        log_error(f"batch item {index} failed", e)
                        failures.append((index, e))

            if failures:
                # 按索引最小的失败重新抛出，保证确定性
                raise min(failures, key=lambda f: f[0])[1]
            return results

        finally:
            duration = self.monitor.end_timer('batch_processing')
            log_debug(f"batch of {len(items)} items on {self.max_workers} workers: {duration:.3f}s")

    def get_performance_metrics(self) -> Dict[str, Any]:
        """获取性能指标"""
        return self.monitor.get_metrics()


class MemoryManager:
    """内存管理器"""

    def get_process_memory(self) -> Dict[str, Any]:
        """获取当前进程内存信息"""
        process = psutil.Process()
        memory_info = process.memory_info()

        return {
            'rss': memory_info.rss,
            'vms': memory_info.vms,
            'percent': round(process.memory_percent(), 3)
        }


# 全局批量处理器
_global_processor = None


def get_batch_processor() -> BatchProcessor:
    """获取全局批量处理器"""
    global _global_processor
    if _global_processor is None:
        _global_processor = BatchProcessor()
    return _global_processor


def set_max_workers(workers: Optional[int]) -> BatchProcessor:
    """设置最大工作线程数（--threads）"""
    global _global_processor
    _global_processor = BatchProcessor(max_workers=workers)
    return _global_processor
