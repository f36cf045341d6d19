"""
置信分布核心模块

置信分布 (CD) 与置信曲线 (cc) 的网格表示、二者之间的转换
cc = |1 − 2C|、区间/区域提取，以及基于枢轴量和一阶正态近似的构造。

所有类型构造后不可变，所有操作为纯函数。
"""

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional, Sequence, Tuple, Union, Any

import numpy as np
import pandas as pd
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from ..core.config import ValidationResult
from ..core.csv_io import write_frame, read_frame
from ..core.error_handler import (
    DataValidationError, NoUniqueCDError, TailRangeError, log_warning
)
from .prob_kernels import std_normal_cdf, std_normal_quantile, student_t_cdf


# 覆盖 0.0001/0.9999 的试验正态范围
DEFAULT_GRID_POINTS = 201
DEFAULT_GRID_TAIL = 1e-4

MONOTONE_TOLERANCE = 1e-10


def _frozen_array(values: Sequence[float], name: str) -> np.ndarray:
    array = np.array(values, dtype=float).ravel()
    if array.size == 0:
        raise DataValidationError(f"{name} must not be empty")
    if not np.all(np.isfinite(array)):
        raise DataValidationError(f"{name} must be finite")
    array.setflags(write=False)
    return array


def _check_grid(focus: np.ndarray) -> None:
    if focus.size > 1 and np.any(np.diff(focus) <= 0):
        raise DataValidationError("focus grid must be strictly increasing")


def _check_level(level: float) -> float:
    if not 0.0 < level < 1.0:
        raise DataValidationError(f"level must lie in (0, 1), got {level}")
    return float(level)


@dataclass(frozen=True, eq=False)
class CDGrid:
    """
    网格上的置信分布 C(ψ)

    Attributes:
        focus_values: 严格递增的焦点参数网格
        cd_values: 各网格点的 C(ψ)，单调不减
        atom_at_lower_bound: 下边界处的点质量（如 τ = 0），存在时等于 cd_values[0]
        focus_label: 焦点参数名
        notes: 构造过程中的标记（如边界中位数、无信息 CD）
    """
    focus_values: np.ndarray
    cd_values: np.ndarray
    atom_at_lower_bound: Optional[float] = None
    focus_label: str = 'psi'
    notes: Tuple[str, ...] = ()

    def __post_init__(self):
        focus = _frozen_array(self.focus_values, 'focus_values')
        cd = np.array(self.cd_values, dtype=float).ravel()
        if cd.shape != focus.shape:
            raise DataValidationError("focus_values and cd_values differ in length")
        if not np.all(np.isfinite(cd)):
            raise DataValidationError("cd_values must be finite")
        _check_grid(focus)
        if np.any(cd < -MONOTONE_TOLERANCE) or np.any(cd > 1.0 + MONOTONE_TOLERANCE):
            raise DataValidationError("cd_values must lie in [0, 1]")
        if cd.size > 1 and np.any(np.diff(cd) < -MONOTONE_TOLERANCE):
            raise DataValidationError("cd_values must be nondecreasing along the focus grid")
        # 吸收舍入误差
        cd = np.maximum.accumulate(np.clip(cd, 0.0, 1.0))

        atom = self.atom_at_lower_bound
        if atom is not None:
            atom = float(atom)
            if not 0.0 <= atom <= 1.0:
                raise DataValidationError("atom_at_lower_bound must lie in [0, 1]")
            if abs(cd[0] - atom) > 1e-12:
                raise DataValidationError("cd_values[0] must equal the boundary atom mass")
            cd[0] = atom
            cd = np.maximum.accumulate(cd)
        cd.setflags(write=False)

        object.__setattr__(self, 'focus_values', focus)
        object.__setattr__(self, 'cd_values', cd)
        object.__setattr__(self, 'atom_at_lower_bound', atom)
        object.__setattr__(self, 'notes', tuple(self.notes))

    def __len__(self) -> int:
        return self.focus_values.size

    @property
    def lower_bound(self) -> float:
        return float(self.focus_values[0])

    @property
    def upper_bound(self) -> float:
        return float(self.focus_values[-1])

    @cached_property
    def _interpolator(self) -> Optional[PchipInterpolator]:
        if len(self) < 2:
            return None
        return PchipInterpolator(self.focus_values, self.cd_values, extrapolate=False)

    def evaluate(self, psi: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """
        保形 (PCHIP) 插值求 C(ψ)

        网格外取端点值；有边界原子时边界以下取 0。
        """
        psi_arr = np.asarray(psi, dtype=float)
        if self._interpolator is None:
            values = np.full(psi_arr.shape, self.cd_values[0])
        else:
            clipped = np.clip(psi_arr, self.focus_values[0], self.focus_values[-1])
            values = np.clip(self._interpolator(clipped), 0.0, 1.0)
        if self.atom_at_lower_bound is not None:
            values = np.where(psi_arr < self.focus_values[0], 0.0, values)
        return float(values) if values.ndim == 0 else values

    def quantile(self, p: float) -> float:
        """
        C⁻¹(p) = inf{ψ : C(ψ) ≥ p}，在括住 p 的网格单元内对单调插值求根

        Raises:
            TailRangeError: p 超出网格上可达范围
        """
        if not 0.0 <= p <= 1.0:
            raise DataValidationError(f"probability must lie in [0, 1], got {p}")
        cd = self.cd_values
        if self.atom_at_lower_bound is not None and p <= self.atom_at_lower_bound:
            return self.lower_bound
        if p < cd[0] or p > cd[-1]:
            raise TailRangeError(f"C^-1({p:.6g}) is outside the grid support of {self.focus_label}",
                                 (cd[0], cd[-1]))
        i = int(np.searchsorted(cd, p, side='left'))
        if i == 0 or cd[i] == p:
            return float(self.focus_values[i])
        lo, hi = self.focus_values[i - 1], self.focus_values[i]
        return float(brentq(lambda x: self._interpolator(x) - p, lo, hi, xtol=1e-14, rtol=1e-14))

    def to_frame(self) -> pd.DataFrame:
        """CSV 表示：focus,cd,cc；边界原子编码为重复焦点值的首行"""
        focus = list(self.focus_values)
        cd = list(self.cd_values)
        if self.atom_at_lower_bound is not None:
            focus.insert(0, focus[0])
            cd.insert(0, 0.0)
        cd_arr = np.asarray(cd)
        return pd.DataFrame({'focus': focus, 'cd': cd_arr, 'cc': np.abs(1.0 - 2.0 * cd_arr)})


@dataclass(frozen=True, eq=False)
class ConfidenceCurve:
    """
    网格上的置信曲线 cc(ψ)

    Attributes:
        focus_values: 严格递增网格
        cc_values: 各网格点的 cc 值，位于 [0, 1]
        point_estimate: 点估计（cc 的最小点）
        focus_label: 焦点参数名
        notes: 标记
    """
    focus_values: np.ndarray
    cc_values: np.ndarray
    point_estimate: float
    focus_label: str = 'psi'
    notes: Tuple[str, ...] = ()

    def __post_init__(self):
        focus = _frozen_array(self.focus_values, 'focus_values')
        cc = np.array(self.cc_values, dtype=float).ravel()
        if cc.shape != focus.shape:
            raise DataValidationError("focus_values and cc_values differ in length")
        _check_grid(focus)
        if not np.all(np.isfinite(cc)) or np.any(cc < -MONOTONE_TOLERANCE) \
                or np.any(cc > 1.0 + MONOTONE_TOLERANCE):
            raise DataValidationError("cc_values must lie in [0, 1]")
        cc = np.clip(cc, 0.0, 1.0)
        cc.setflags(write=False)
        if not np.isfinite(self.point_estimate):
            raise DataValidationError("point_estimate must be finite")

        object.__setattr__(self, 'focus_values', focus)
        object.__setattr__(self, 'cc_values', cc)
        object.__setattr__(self, 'point_estimate', float(self.point_estimate))
        object.__setattr__(self, 'notes', tuple(self.notes))

    def __len__(self) -> int:
        return self.focus_values.size

    def evaluate(self, psi: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """线性插值求 cc(ψ)，网格外取 1"""
        psi_arr = np.asarray(psi, dtype=float)
        values = np.interp(psi_arr, self.focus_values, self.cc_values, left=1.0, right=1.0)
        return float(values) if values.ndim == 0 else values

    def is_unimodal(self, tolerance: float = MONOTONE_TOLERANCE) -> bool:
        """最小点左侧不增、右侧不减"""
        m = int(np.argmin(self.cc_values))
        left = np.diff(self.cc_values[:m + 1])
        right = np.diff(self.cc_values[m:])
        return bool(np.all(left <= tolerance) and np.all(right >= -tolerance))

    def validate(self) -> ValidationResult:
        """软性检查：最小值应落在点估计所在的网格单元"""
        result = ValidationResult(valid=True)
        focus = self.focus_values
        hi = int(np.clip(np.searchsorted(focus, self.point_estimate), 0, len(focus) - 1))
        lo = max(hi - 1, 0)
        bracket_min = min(self.cc_values[lo], self.cc_values[hi])
        if bracket_min > self.cc_values.min() + 1e-9:
            result.add_warning(
                f"cc minimum is not attained next to the point estimate {self.point_estimate:.6g}")
        if not self.is_unimodal():
            result.add_warning("confidence curve is not unimodal")
        return result

    def to_frame(self) -> pd.DataFrame:
        """CSV 表示：focus,cd,cc；单峰时由 cc 还原 cd，否则 cd 为空"""
        if self.is_unimodal():
            cd = cd_from_cc(self).cd_values
        else:
            cd = np.full(len(self), np.nan)
        return pd.DataFrame({'focus': self.focus_values, 'cd': cd, 'cc': self.cc_values})


@dataclass(frozen=True)
class ConfidenceRegion:
    """置信区域：有序、互不相交的闭区间之并"""
    level: float
    segments: Tuple[Tuple[float, float], ...]
    notes: Tuple[str, ...] = ()

    def __post_init__(self):
        segments = tuple((float(lo), float(hi)) for lo, hi in self.segments)
        for lo, hi in segments:
            if lo > hi:
                raise DataValidationError(f"segment [{lo}, {hi}] is reversed")
        for (_, prev_hi), (lo, _) in zip(segments, segments[1:]):
            if lo <= prev_hi:
                raise DataValidationError("region segments must be disjoint and ordered")
        object.__setattr__(self, 'segments', segments)
        object.__setattr__(self, 'notes', tuple(self.notes))

    @property
    def is_empty(self) -> bool:
        return not self.segments

    @property
    def lower(self) -> float:
        return self.segments[0][0]

    @property
    def upper(self) -> float:
        return self.segments[-1][1]

    def contains(self, psi: float) -> bool:
        return any(lo <= psi <= hi for lo, hi in self.segments)

    def as_dict(self) -> dict:
        return {'level': self.level, 'segments': [list(s) for s in self.segments],
                'notes': list(self.notes)}


def cc_from_cd(cd: CDGrid) -> ConfidenceCurve:
    """
    cc(ψ) = |1 − 2C(ψ)|

    点估计取 C 穿过 0.5 的位置（相邻节点线性插值）；网格上 C 达不到 0.5 时
    取较近的边界并标记。下边界原子 ≥ 0.5 时中位数就是边界本身。
    """
    focus, values = cd.focus_values, cd.cd_values
    cc = np.abs(1.0 - 2.0 * values)
    notes = list(cd.notes)

    i = int(np.searchsorted(values, 0.5, side='left'))
    if i >= len(values):
        point = focus[-1]
        notes.append("median beyond upper grid bound; point estimate at upper boundary")
    elif i == 0:
        point = focus[0]
        if values[0] > 0.5 and cd.atom_at_lower_bound is None:
            notes.append("median below lower grid bound; point estimate at lower boundary")
    elif values[i] == 0.5:
        point = focus[i]
    else:
        c0, c1 = values[i - 1], values[i]
        point = focus[i - 1] + (0.5 - c0) / (c1 - c0) * (focus[i] - focus[i - 1])

    return ConfidenceCurve(focus, cc, point, focus_label=cd.focus_label, notes=tuple(notes))


def cd_from_cc(cc: ConfidenceCurve, tolerance: float = MONOTONE_TOLERANCE) -> CDGrid:
    """
    由单峰置信曲线还原置信分布：ψ̂ 左侧 C = (1 − cc)/2，右侧 C = (1 + cc)/2

    Raises:
        NoUniqueCDError: 曲线非单峰
    """
    if not cc.is_unimodal(tolerance):
        raise NoUniqueCDError("no unique CD exists: the confidence curve is not unimodal")

    focus, values = cc.focus_values, cc.cc_values
    left = focus < cc.point_estimate
    at_point = focus == cc.point_estimate
    if at_point[-1] and len(focus) > 1:
        left = left | at_point

    cd = np.where(left, (1.0 - values) / 2.0, (1.0 + values) / 2.0)
    cd = np.maximum.accumulate(cd)
    return CDGrid(focus, cd, focus_label=cc.focus_label, notes=cc.notes)


def equi_tailed_interval(cd: CDGrid, level: float,
                         one_sided_at_atom: bool = True) -> ConfidenceRegion:
    """
    等尾区间 [C⁻¹((1−level)/2), C⁻¹((1+level)/2)]

    下边界原子超过下尾质量 (1−level)/2 时左端点就是边界本身，右端点默认取
    C⁻¹(level)，即单侧区间 [边界, C⁻¹(level)]；``one_sided_at_atom=False`` 时
    右端点保持 C⁻¹((1+level)/2)，区间随水平严格嵌套。

    Raises:
        TailRangeError: 尾部概率超出网格可达范围
    """
    level = _check_level(level)
    lower_tail = (1.0 - level) / 2.0
    upper_tail = (1.0 + level) / 2.0
    atom = cd.atom_at_lower_bound

    if atom is not None and atom > lower_tail:
        upper = cd.quantile(level if one_sided_at_atom else upper_tail)
        note = f"boundary atom {atom:.4g} exceeds lower tail {lower_tail:.4g}"
        return ConfidenceRegion(level, ((cd.lower_bound, upper),), notes=(note,))

    return ConfidenceRegion(level, ((cd.quantile(lower_tail), cd.quantile(upper_tail)),))


def level_set_region(cc: ConfidenceCurve, level: float) -> ConfidenceRegion:
    """
    {ψ : cc(ψ) ≤ level}，可能由多段组成

    段端点在相邻网格点之间对 cc 线性插值求穿越点；网格上为空时返回空区域并标记。
    """
    level = _check_level(level)
    focus, values = cc.focus_values, cc.cc_values
    inside = values <= level
    if not np.any(inside):
        return ConfidenceRegion(level, (), notes=(f"no grid point has cc <= {level:.4g}",))

    def crossing(i_out: int, i_in: int) -> float:
        v_out, v_in = values[i_out], values[i_in]
        t = (v_out - level) / (v_out - v_in)
        return float(focus[i_out] + t * (focus[i_in] - focus[i_out]))

    segments = []
    padded = np.concatenate(([False], inside, [False]))
    starts = np.flatnonzero(~padded[:-1] & padded[1:])
    ends = np.flatnonzero(padded[:-1] & ~padded[1:]) - 1
    for start, end in zip(starts, ends):
        lo = focus[start] if start == 0 else crossing(start - 1, start)
        hi = focus[end] if end == len(focus) - 1 else crossing(end + 1, end)
        segments.append((lo, hi))

    notes = []
    if inside[0] or inside[-1]:
        notes.append("region touches the grid boundary")
    return ConfidenceRegion(level, tuple(segments), notes=tuple(notes))


def cd_from_pivot(pivot: Callable[[float, Any], float], pivot_cdf: Callable[[float], float],
                  data: Any, grid: Sequence[float], focus_label: str = 'psi') -> CDGrid:
    """
    枢轴量构造 C(ψ) = K(piv(ψ, y_obs))

    Raises:
        DataValidationError: 枢轴量在网格上非单调递增
    """
    grid = np.asarray(grid, dtype=float)
    values = np.array([pivot(psi, data) for psi in grid], dtype=float)
    if np.any(np.isnan(values)):
        raise DataValidationError("pivot is undefined on part of the grid")
    if values.size > 1 and (np.any(np.diff(values) < 0) or values[-1] == values[0]):
        raise DataValidationError("pivot is not monotone increasing in the focus parameter")
    cd = np.array([pivot_cdf(v) for v in values], dtype=float)
    return CDGrid(grid, cd, focus_label=focus_label)


def student_pivot_cd(sample: Sequence[float], grid: Sequence[float],
                     focus_label: str = 'mu') -> CDGrid:
    """经典 t 枢轴量 C(μ) = F_{n−1}(√n(μ − ȳ)/s)"""
    sample = np.asarray(sample, dtype=float)
    n = sample.size
    if n < 2:
        raise DataValidationError("the Student pivot needs at least two observations")
    ybar = float(sample.mean())
    s = float(sample.std(ddof=1))
    if s <= 0:
        raise DataValidationError("the Student pivot needs a positive sample standard deviation")

    def pivot(mu, _data):
        return np.sqrt(n) * (mu - ybar) / s

    return cd_from_pivot(pivot, lambda t: student_t_cdf(t, n - 1), sample, grid, focus_label)


def normal_approx_cd(psi_hat: float, tau_hat: float, n: int, grid: Sequence[float],
                     focus_label: str = 'psi') -> CDGrid:
    """一阶正态近似 C_n(ψ) = Φ(√n(ψ − ψ̂)/τ̂)"""
    if not tau_hat > 0:
        raise DataValidationError(f"tau_hat must be positive, got {tau_hat}")
    if n < 1:
        raise DataValidationError(f"sample size must be >= 1, got {n}")
    grid = np.asarray(grid, dtype=float)
    return CDGrid(grid, std_normal_cdf(np.sqrt(n) * (grid - psi_hat) / tau_hat),
                  focus_label=focus_label)


def default_focus_grid(center: float, scale: float, points: int = DEFAULT_GRID_POINTS,
                       lower_bound: Optional[float] = None,
                       upper_bound: Optional[float] = None) -> np.ndarray:
    """
    默认网格：试验正态近似 N(center, scale²) 的 0.0001/0.9999 等尾范围，等距 points 个点

    给定参数空间边界时截断到边界内。
    """
    if not scale > 0:
        raise DataValidationError("grid scale must be positive")
    z = std_normal_quantile(1.0 - DEFAULT_GRID_TAIL)
    lo, hi = center - z * scale, center + z * scale
    if lower_bound is not None:
        lo = max(lo, lower_bound)
    if upper_bound is not None:
        hi = min(hi, upper_bound)
    return np.linspace(lo, hi, points)


def write_curve_csv(path: Union[str, Path], curve: Union[CDGrid, ConfidenceCurve]) -> Path:
    """写出 focus,cd,cc 格式的 CSV"""
    return write_frame(path, curve.to_frame())


def read_cd_csv(path: Union[str, Path], focus_label: str = 'psi') -> CDGrid:
    """
    读取 focus,cd,cc 格式的 CSV；首两行焦点值相同表示边界原子

    Raises:
        DataValidationError: 缺少 cd 列值或网格非法
    """
    frame = read_frame(path, required_columns=('focus', 'cd'))
    focus = frame['focus'].to_numpy(dtype=float)
    cd = frame['cd'].to_numpy(dtype=float)
    if np.any(np.isnan(cd)):
        raise DataValidationError(f"{Path(path).name}: cd column has missing values (no unique CD)")
    atom = None
    if focus.size > 1 and focus[0] == focus[1]:
        atom = float(cd[1])
        focus, cd = focus[1:], cd[1:]
    return CDGrid(focus, cd, atom_at_lower_bound=atom, focus_label=focus_label)


def clip_cd_values(values: np.ndarray, bound: float = 1e-12, context: str = '') -> np.ndarray:
    """将 CD 值截断到 [bound, 1 − bound]，内部点被截断时记录警告"""
    values = np.asarray(values, dtype=float)
    clipped = np.clip(values, bound, 1.0 - bound)
    if values.size > 2:
        interior = values[1:-1]
        if np.any((interior < bound) | (interior > 1.0 - bound)):
            log_warning(f"{context or 'CD'}: interior values clipped to [{bound:g}, {1 - bound:g}]")
    return clipped
