"""
随机效应离散度模块

正态随机效应模型 β̂ⱼ ~ N(β₀, sⱼ² + τ²) 中 τ 的置信分布，
基于异质性枢轴量 Q(τ) ~ χ²_{k−1}，在 τ = 0 处保留点质量。
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats
from scipy.optimize import brentq

from ..core.csv_io import read_frame
from ..core.error_handler import DataValidationError, log_warning
from .cd_core import CDGrid
from .likelihood_engine import CoverageReport, DEFAULT_COVERAGE_LEVELS, uniformity_report
from .prob_kernels import RandomStream, chi2_cdf


DEMOGRAPHY_COLUMNS = ('country', 'sex', 'year', 'life_expectancy')
TAU_STREAM = 3


@dataclass(frozen=True, eq=False)
class EffectEstimates:
    """各组的效应估计与标准误"""
    estimates: np.ndarray
    std_errors: np.ndarray
    labels: Tuple[str, ...] = ()

    def __post_init__(self):
        estimates = np.array(self.estimates, dtype=float).ravel()
        std_errors = np.array(self.std_errors, dtype=float).ravel()
        if estimates.shape != std_errors.shape:
            raise DataValidationError("estimates and std_errors differ in length")
        if not (np.all(np.isfinite(estimates)) and np.all(np.isfinite(std_errors))):
            raise DataValidationError("effect estimates must be finite")
        if np.any(std_errors < 0):
            raise DataValidationError("standard errors must be nonnegative")
        estimates.setflags(write=False)
        std_errors.setflags(write=False)
        object.__setattr__(self, 'estimates', estimates)
        object.__setattr__(self, 'std_errors', std_errors)
        object.__setattr__(self, 'labels', tuple(self.labels))

    @property
    def k(self) -> int:
        return self.estimates.size

    def as_frame(self) -> pd.DataFrame:
        labels = self.labels or tuple(str(i + 1) for i in range(self.k))
        return pd.DataFrame({'group': labels, 'estimate': self.estimates,
                             'std_error': self.std_errors})


def _check_effects(effects: EffectEstimates):
    if effects.k < 2:
        raise DataValidationError(f"the tau CD needs k >= 2 estimates, got {effects.k}")
    if np.any(effects.std_errors <= 0):
        raise DataValidationError("the tau CD needs strictly positive standard errors")


def heterogeneity_q(effects: EffectEstimates, tau: float) -> float:
    """Q(τ) = Σ (β̂ⱼ − β̄(τ))²/(sⱼ² + τ²)，β̄(τ) 为 (sⱼ² + τ²)⁻¹ 加权均值"""
    weights = 1.0 / (effects.std_errors ** 2 + tau * tau)
    beta_bar = np.sum(weights * effects.estimates) / np.sum(weights)
    return float(np.sum(weights * (effects.estimates - beta_bar) ** 2))


def tau_cd_value(effects: EffectEstimates, tau: float) -> float:
    """C(τ) = 1 − Γ_{k−1}(Q(τ))"""
    return 1.0 - chi2_cdf(heterogeneity_q(effects, tau), effects.k - 1)


def tau_cd(effects: EffectEstimates, grid: Sequence[float]) -> CDGrid:
    """
    τ 的置信分布；网格不从 0 开始时自动补上 0，点质量为 C(0)

    Raises:
        DataValidationError: k < 2、标准误非正或网格含负值
    """
    _check_effects(effects)
    grid = np.unique(np.asarray(grid, dtype=float))
    if grid[0] < 0:
        raise DataValidationError("tau grid must be nonnegative")
    if grid[0] > 0:
        grid = np.concatenate(([0.0], grid))
    values = np.array([tau_cd_value(effects, tau) for tau in grid])
    return CDGrid(grid, values, atom_at_lower_bound=float(values[0]), focus_label='tau')


def default_tau_grid(effects: EffectEstimates, points: int = 201,
                     upper_level: float = 0.999) -> np.ndarray:
    """[0, τ_max] 等距网格，τ_max 取 C(τ_max) = upper_level"""
    _check_effects(effects)
    if tau_cd_value(effects, 0.0) >= upper_level:
        return np.linspace(0.0, float(np.max(effects.std_errors)), points)
    upper = max(float(np.std(effects.estimates)), float(np.max(effects.std_errors)), 1e-8)
    while tau_cd_value(effects, upper) < upper_level:
        upper *= 2.0
        if upper > 1e12:
            raise DataValidationError("cannot bracket the upper tau grid bound")
    tau_max = brentq(lambda t: tau_cd_value(effects, t) - upper_level, 0.0, upper, xtol=1e-12)
    return np.linspace(0.0, tau_max, points)


def regression_slopes(frame: pd.DataFrame, group_column: str = 'group',
                      x_column: str = 'x', y_column: str = 'y') -> EffectEstimates:
    """
    每组最小二乘斜率及其标准误（残差方差除数 n − 2）

    Raises:
        DataValidationError: 某组少于 3 个点或 x 全相同
    """
    for column in (group_column, x_column, y_column):
        if column not in frame.columns:
            raise DataValidationError(f"series table needs column '{column}'")

    labels, slopes, errors = [], [], []
    for label, group in frame.groupby(group_column, sort=False):
        x = group[x_column].to_numpy(dtype=float)
        y = group[y_column].to_numpy(dtype=float)
        if x.size < 3:
            raise DataValidationError(f"group {label}: need at least 3 points, got {x.size}")
        if np.ptp(x) == 0:
            raise DataValidationError(f"group {label}: degenerate x design (all x equal)")
        fit = stats.linregress(x, y)
        labels.append(str(label))
        slopes.append(fit.slope)
        errors.append(0.0 if not np.isfinite(fit.stderr) else fit.stderr)
    return EffectEstimates(slopes, errors, tuple(labels))


def effects_from_frame(frame: pd.DataFrame) -> EffectEstimates:
    """按列名识别输入：estimate,std_error 为汇总效应，group,x,y 为原始序列"""
    if {'estimate', 'std_error'} <= set(frame.columns):
        labels = tuple(str(v) for v in frame['group']) if 'group' in frame.columns else ()
        return EffectEstimates(frame['estimate'].to_numpy(dtype=float),
                               frame['std_error'].to_numpy(dtype=float), labels)
    if {'group', 'x', 'y'} <= set(frame.columns):
        return regression_slopes(frame)
    raise DataValidationError("effects table needs columns estimate,std_error or group,x,y")


def load_demography(path: Union[str, Path]) -> pd.DataFrame:
    """读取人口学快照（country,sex,year,life_expectancy）"""
    frame = read_frame(path, required_columns=DEMOGRAPHY_COLUMNS)
    frame['sex'] = frame['sex'].str.strip().str.lower()
    unknown = set(frame['sex']) - {'female', 'male'}
    if unknown:
        raise DataValidationError(f"demography sex must be female/male, found {sorted(unknown)}")
    return frame


def demography_effects(frame: pd.DataFrame, sex: str) -> EffectEstimates:
    """某一性别各国预期寿命对年份的回归斜率"""
    subset = frame[frame['sex'] == sex]
    if subset.empty:
        raise DataValidationError(f"no demography rows for sex '{sex}'")
    series = subset.rename(columns={'country': 'group', 'year': 'x', 'life_expectancy': 'y'})
    return regression_slopes(series)


def simulate_tau_coverage(std_errors: Sequence[float], tau0: float, reps: int,
                          beta0: float = 0.0, seed: int = 0,
                          levels: Sequence[float] = DEFAULT_COVERAGE_LEVELS) -> CoverageReport:
    """
    模拟 β̂ⱼ ~ N(β₀, sⱼ² + τ₀²)，检验 C(τ₀) 的均匀性

    τ₀ = 0 时 C(0) 有点质量，KS 检验不再适用，此时只报告覆盖率。
    """
    std_errors = np.asarray(std_errors, dtype=float)
    if tau0 < 0:
        raise DataValidationError("tau0 must be nonnegative")
    root = RandomStream(seed, (TAU_STREAM,))
    sd = np.sqrt(std_errors ** 2 + tau0 ** 2)
    values = np.empty(reps)
    for r in range(reps):
        draws = root.spawn(r).normal(beta0, sd)
        values[r] = tau_cd_value(EffectEstimates(draws, std_errors), tau0)
    if tau0 == 0:
        log_warning("tau0 = 0 puts the simulated CD values on the boundary atom")
    cc = np.abs(1.0 - 2.0 * values)
    return uniformity_report('tau-pivot', cc, std_errors.size, levels, cd_values=values)
