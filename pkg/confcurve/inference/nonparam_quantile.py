"""
分位数的次序统计量置信曲线

μ_p = F⁻¹(p) 的区间 [Y₍ₐ₎, Y₍ᵦ₎] 的精确覆盖概率只依赖 (a, b, n, p)，
与 F 无关。围绕经验分位数秩逐侧扩张得到嵌套区间序列，
置信曲线就是这些精确水平构成的阶梯函数。
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..core.error_handler import DataValidationError, log_warning
from ..core.performance_optimizer import get_batch_processor, BatchProcessor
from .cd_core import ConfidenceCurve, ConfidenceRegion
from .prob_kernels import RandomStream, binomial_pmf, std_normal_quantile


QUANTILE_STREAM = 6
DEFAULT_QUANTILE_LEVELS = (0.1, 0.3, 0.5, 0.7, 0.9)


@dataclass(frozen=True, eq=False)
class OrderedSample:
    """排序后的样本"""
    values: np.ndarray
    ties_present: bool = False

    @classmethod
    def from_values(cls, values: Sequence[float]) -> 'OrderedSample':
        data = np.sort(np.asarray(values, dtype=float).ravel())
        if data.size < 1:
            raise DataValidationError("sample is empty")
        if not np.all(np.isfinite(data)):
            raise DataValidationError("sample must be finite")
        ties = bool(np.any(np.diff(data) == 0))
        if ties:
            log_warning("sample has ties; quantile coverage statements hold conservatively")
        data.setflags(write=False)
        return cls(data, ties)

    @property
    def n(self) -> int:
        return self.values.size

    def order_statistic(self, i: int) -> float:
        """Y₍ᵢ₎，i 从 1 开始"""
        return float(self.values[i - 1])


def _check_p(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise DataValidationError(f"quantile level p must lie in (0, 1), got {p}")
    return float(p)


def interval_coverage(a: int, b: int, n: int, p: float) -> float:
    """
    P{Y₍ₐ₎ ≤ μ_p ≤ Y₍ᵦ₎} = P{a ≤ Bin(n, p) ≤ b − 1} = Σ_{j=a}^{b−1} b(j; n, p)

    Raises:
        DataValidationError: 不满足 1 ≤ a ≤ b ≤ n
    """
    p = _check_p(p)
    if not (1 <= a <= b <= n):
        raise DataValidationError(f"need 1 <= a <= b <= n, got a={a}, b={b}, n={n}")
    if a == b:
        return 0.0
    return float(np.sum(binomial_pmf(np.arange(a, b), n, p)))


@dataclass(frozen=True)
class RankInterval:
    """秩区间 [a, b] 及其精确覆盖"""
    a: int
    b: int
    coverage: float


def nested_quantile_intervals(n: int, p: float) -> List[RankInterval]:
    """
    嵌套秩区间序列

    起点为包含经验秩 (n+1)p 的相邻秩对，每步向覆盖增益较大的一侧扩一个秩，
    直到 [1, n]。覆盖严格递增。
    """
    p = _check_p(p)
    if n < 2:
        raise DataValidationError(f"quantile curves need n >= 2, got {n}")
    a = int(np.clip(np.floor((n + 1) * p), 1, n - 1))
    b = a + 1
    intervals = [RankInterval(a, b, interval_coverage(a, b, n, p))]
    while a > 1 or b < n:
        left = interval_coverage(a - 1, b, n, p) if a > 1 else -1.0
        right = interval_coverage(a, b + 1, n, p) if b < n else -1.0
        if left >= right:
            a -= 1
        else:
            b += 1
        intervals.append(RankInterval(a, b, max(left, right)))
    return intervals


def max_achievable_level(n: int, p: float) -> float:
    """[Y₍₁₎, Y₍ₙ₎] 的覆盖 1 − pⁿ − (1 − p)ⁿ"""
    return interval_coverage(1, n, n, p)


def quantile_cc(sample: OrderedSample, p: float,
                levels: Optional[Sequence[float]] = None) -> ConfidenceCurve:
    """
    μ_p 的阶梯置信曲线

    节点为样本的不同取值（外加点估计），cc 取包含该点的嵌套区间中最小的精确水平；
    点估计为秩 (n+1)p 处插值的样本分位数。levels 中超过最大可达水平的值
    被截断并记录。
    """
    p = _check_p(p)
    n = sample.n
    intervals = nested_quantile_intervals(n, p)

    rank_level = np.empty(n)
    first = intervals[0]
    rank_level[first.a - 1:first.b] = first.coverage
    for prev, cur in zip(intervals, intervals[1:]):
        rank_level[cur.a - 1:prev.a - 1] = cur.coverage
        rank_level[prev.b:cur.b] = cur.coverage

    focus, index = np.unique(sample.values, return_inverse=True)
    cc = np.full(focus.size, np.inf)
    np.minimum.at(cc, index, rank_level)

    point = float(np.quantile(sample.values, p, method='weibull'))
    if not np.any(focus == point):
        pos = int(np.searchsorted(focus, point))
        focus = np.insert(focus, pos, point)
        cc = np.insert(cc, pos, first.coverage)

    notes = []
    if sample.ties_present:
        notes.append("ties present; levels are conservative")
    top = intervals[-1].coverage
    for level in levels or ():
        if level > top:
            notes.append(f"level {level:g} above max achievable {top:.6g}; truncated")
    return ConfidenceCurve(focus, cc, point, focus_label=f"q{p:g}", notes=tuple(notes))


def quantile_region(sample: OrderedSample, p: float, level: float) -> ConfidenceRegion:
    """
    最小的覆盖 ≥ level 的嵌套区间 [Y₍ₐ₎, Y₍ᵦ₎]

    level 超过最大可达水平时退回 [Y₍₁₎, Y₍ₙ₎] 并标记。
    """
    if not 0.0 < level < 1.0:
        raise DataValidationError(f"level must lie in (0, 1), got {level}")
    intervals = nested_quantile_intervals(sample.n, p)
    chosen = next((iv for iv in intervals if iv.coverage >= level), None)
    notes: Tuple[str, ...] = ()
    if chosen is None:
        chosen = intervals[-1]
        notes = (f"level {level:g} above max achievable {chosen.coverage:.6g}; truncated",)
        log_warning(notes[0])
    segment = (sample.order_statistic(chosen.a), sample.order_statistic(chosen.b))
    return ConfidenceRegion(level, (segment,), notes=notes + (f"exact level {chosen.coverage:.6g}",))


def quantile_panel(sample: OrderedSample, quantile_levels: Sequence[float] = DEFAULT_QUANTILE_LEVELS,
                   processor: Optional[BatchProcessor] = None) -> pd.DataFrame:
    """多个 p 的置信曲线，长表 p,focus,cc"""
    processor = processor or get_batch_processor()
    curves = processor.process_batch(list(quantile_levels), lambda p: quantile_cc(sample, p))
    frames = [pd.DataFrame({'p': p, 'focus': c.focus_values, 'cc': c.cc_values})
              for p, c in zip(quantile_levels, curves)]
    return pd.concat(frames, ignore_index=True)


@dataclass
class QuantileCoverageReport:
    """次序统计量区间的模拟覆盖率"""
    p: float
    sample_size: int
    reps: int
    coverage: Dict[float, float] = field(default_factory=dict)
    exact_levels: Dict[float, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {'p': self.p, 'sample_size': self.sample_size, 'reps': self.reps,
                'coverage': {f"{k:g}": v for k, v in self.coverage.items()},
                'exact_levels': {f"{k:g}": v for k, v in self.exact_levels.items()}}


def simulate_quantile_coverage(p: float, n: int, reps: int, seed: int = 0,
                               levels: Sequence[float] = (0.5, 0.8, 0.9, 0.95)) -> QuantileCoverageReport:
    """
    从标准正态抽 reps 个大小为 n 的样本，统计各水平区域覆盖真分位数的频率

    区间只依赖 (n, p)，因此整批向量化。
    """
    p = _check_p(p)
    truth = std_normal_quantile(p)
    draws = np.sort(RandomStream(seed, (QUANTILE_STREAM,)).normal(size=(reps, n)), axis=1)
    intervals = nested_quantile_intervals(n, p)
    report = QuantileCoverageReport(p, n, reps)
    for level in levels:
        chosen = next((iv for iv in intervals if iv.coverage >= level), intervals[-1])
        inside = (draws[:, chosen.a - 1] <= truth) & (truth <= draws[:, chosen.b - 1])
        report.coverage[level] = float(np.mean(inside))
        report.exact_levels[level] = chosen.coverage
    return report
