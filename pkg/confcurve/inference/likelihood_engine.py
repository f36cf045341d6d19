"""
似然引擎模块

通用参数模型机制：极大似然、剖面对数似然、偏差函数
dev(ψ) = 2{ℓ_prof(ψ̂) − ℓ_prof(ψ)}、Wilks 置信曲线 Γ₁(dev)、
参数自助法 Bartlett 修正，以及 cc(ψ₀, Y) 均匀性的覆盖率模拟器。

剖面通过嵌套优化完成：外层遍历焦点网格，内层在约化参数化上
无约束优化，并以相邻网格点的解热启动，避免剖面抖动破坏偏差单调性。
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from ..core.error_handler import (
    DataValidationError, MethodNotApplicableError, SingularMatrixError,
    log_warning, log_debug
)
from ..core.performance_optimizer import get_batch_processor, BatchProcessor
from .cd_core import CDGrid, ConfidenceCurve
from .optimizer import (
    ParamBound, OptimizationResult, maximize, maximize_constrained,
    numerical_gradient, numerical_hessian
)
from .prob_kernels import RandomStream, chi2_1_cdf, std_normal_cdf


# 子流键的命名空间
BARTLETT_STREAM = 1
COVERAGE_STREAM = 2

DEFAULT_COVERAGE_LEVELS = (0.5, 0.8, 0.9, 0.95)
COVERAGE_METHODS = ('normal-approx', 'wilks', 'wilks-bartlett', 'pivot')


@dataclass(frozen=True)
class FocusMap:
    """
    焦点参数 ψ = ψ(θ)

    三种剖面方式按优先级：coordinate（固定某一坐标）、
    reduce（(ψ, free) → θ 的约化参数化）、否则退回等式约束 SLSQP。
    """
    map: Callable[[np.ndarray], float]
    label: str
    coordinate: Optional[int] = None
    reduce: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    free_bounds: Tuple[ParamBound, ...] = ()
    free_from_theta: Optional[Callable[[np.ndarray], np.ndarray]] = None
    bound: Optional[ParamBound] = None

    def __call__(self, theta: np.ndarray) -> float:
        return float(self.map(np.asarray(theta, dtype=float)))

    def check_attainable(self, psi: float):
        if self.bound is not None and not self.bound.contains(psi):
            raise DataValidationError(f"focus value {self.label}={psi} is not attainable")


class ParametricModel(ABC):
    """
    参数模型基类

    子类提供对数似然与参数空间；模拟器、闭式极大似然估计、
    单观测对数密度、幂积分 ∫f^{1+a} 和精确枢轴量均为可选能力。
    """

    name: str = ''
    param_names: Tuple[str, ...] = ()
    bounds: Tuple[ParamBound, ...] = ()

    @property
    def dim(self) -> int:
        return len(self.param_names)

    @abstractmethod
    def log_likelihood(self, theta: np.ndarray, data: Any) -> float:
        """对数似然 ℓ_n(θ)"""
        pass

    @abstractmethod
    def moment_seed(self, data: Any) -> np.ndarray:
        """矩估计起点"""
        pass

    def sample_size(self, data: Any) -> int:
        return len(data)

    def closed_form_mle(self, data: Any) -> Optional[np.ndarray]:
        return None

    def closed_form_profile(self, label: str, psi: float, data: Any) -> Optional[np.ndarray]:
        """焦点 label 固定为 ψ 时的闭式剖面解（无则返回 None）"""
        return None

    def simulate(self, theta: np.ndarray, n: int, stream: RandomStream) -> Any:
        raise MethodNotApplicableError(f"model '{self.name}' has no simulator")

    @property
    def has_simulator(self) -> bool:
        return type(self).simulate is not ParametricModel.simulate

    def log_density(self, theta: np.ndarray, data: Any) -> np.ndarray:
        """逐观测对数密度 log f(y_i, θ)"""
        raise MethodNotApplicableError(f"model '{self.name}' has no per-observation density")

    def power_integral(self, theta: np.ndarray, a: float) -> float:
        """闭式 ∫ f_θ^{1+a} dy"""
        raise MethodNotApplicableError(f"model '{self.name}' has no closed-form power integral")

    def pivot_cd_value(self, data: Any, label: str, psi: float) -> float:
        """精确枢轴量 CD 在 ψ 处的值"""
        raise MethodNotApplicableError(f"model '{self.name}' has no exact pivot for '{label}'")

    def pivot_cd(self, data: Any, label: str, grid: Sequence[float]) -> CDGrid:
        grid = np.asarray(grid, dtype=float)
        values = [self.pivot_cd_value(data, label, psi) for psi in grid]
        return CDGrid(grid, values, focus_label=label)

    def coordinate_focus(self, label: str) -> FocusMap:
        if label not in self.param_names:
            raise MethodNotApplicableError(
                f"model '{self.name}' has no focus '{label}' (parameters: {', '.join(self.param_names)})")
        i = self.param_names.index(label)
        return FocusMap(map=lambda theta: theta[i], label=label, coordinate=i, bound=self.bounds[i])

    def focus_map(self, label: str) -> FocusMap:
        """按名称获取焦点；默认支持各参数坐标"""
        return self.coordinate_focus(label)

    def in_bounds(self, theta: np.ndarray) -> bool:
        return all(b.contains(v) for b, v in zip(self.bounds, theta))


@dataclass(frozen=True, eq=False)
class DevianceCurve:
    """网格上的偏差函数"""
    focus_values: np.ndarray
    deviance_values: np.ndarray
    mle_focus: float
    max_loglik: float
    mle_theta: np.ndarray
    focus_label: str = 'psi'
    notes: Tuple[str, ...] = ()

    def __post_init__(self):
        if np.any(np.asarray(self.deviance_values) < 0):
            raise DataValidationError("deviance must be nonnegative")


def maximize_likelihood(model: ParametricModel, data: Any, starts: int = 5) -> OptimizationResult:
    """
    极大似然估计

    有闭式解时以其为起点并只用一个起点抛光；否则从矩估计出发多起点搜索。

    Raises:
        OptimizationError: 多起点预算用尽仍不收敛
    """
    closed = model.closed_form_mle(data)
    objective = lambda theta: model.log_likelihood(theta, data)
    if closed is not None and model.in_bounds(closed):
        value = objective(closed)
        if np.isfinite(value):
            return OptimizationResult(np.asarray(closed, dtype=float), float(value), 0.0, 0)
    return maximize(objective, model.bounds, model.moment_seed(data), starts=starts)


def profile_loglik(model: ParametricModel, data: Any, focus: FocusMap, psi: float,
                   start: Optional[np.ndarray] = None, starts: int = 1,
                   use_closed_form: bool = True) -> Tuple[float, np.ndarray]:
    """
    剖面对数似然 ℓ_prof(ψ) = max{ℓ(θ) : ψ(θ) = ψ}

    Returns:
        (剖面值, 约束最优点 θ)
    """
    focus.check_attainable(psi)
    objective = lambda theta: model.log_likelihood(theta, data)
    start = model.moment_seed(data) if start is None else np.asarray(start, dtype=float)

    if use_closed_form:
        theta = model.closed_form_profile(focus.label, psi, data)
        if theta is not None:
            return float(objective(theta)), np.asarray(theta, dtype=float)

    if focus.coordinate is not None:
        result = maximize(objective, model.bounds, start, starts=starts,
                          fixed={focus.coordinate: psi})
        return result.value, result.theta

    if focus.reduce is not None:
        free_seed = focus.free_from_theta(start) if focus.free_from_theta else np.zeros(
            len(focus.free_bounds))
        reduced = lambda free: objective(focus.reduce(psi, free))
        result = maximize(reduced, focus.free_bounds, free_seed, starts=starts)
        return result.value, np.asarray(focus.reduce(psi, result.theta), dtype=float)

    result = maximize_constrained(objective, model.bounds, lambda theta: focus(theta) - psi, start)
    return result.value, result.theta


def _merge_grid(grid: Sequence[float], psi_hat: float) -> np.ndarray:
    grid = np.unique(np.asarray(grid, dtype=float))
    if not np.any(np.isclose(grid, psi_hat, rtol=0.0, atol=1e-12)):
        grid = np.sort(np.append(grid, psi_hat))
    return grid


def deviance_curve(model: ParametricModel, data: Any, focus: FocusMap, grid: Sequence[float],
                   processor: Optional[BatchProcessor] = None,
                   mle: Optional[OptimizationResult] = None) -> DevianceCurve:
    """
    偏差曲线 dev(ψ) = 2{ℓ_prof(ψ̂) − ℓ_prof(ψ)}

    ψ̂ 插入网格；从 ψ̂ 向左、向右两条热启动扫描并行执行。
    若某剖面值超过 ℓ(θ̂)，更新最大值并记录警告。
    """
    processor = processor or get_batch_processor()
    mle = mle or maximize_likelihood(model, data)
    psi_hat = focus(mle.theta)
    grid = _merge_grid(grid, psi_hat)
    notes: List[str] = []

    infeasible = [psi for psi in grid if focus.bound is not None and not focus.bound.contains(psi)]
    if infeasible:
        raise DataValidationError(
            f"grid contains unattainable {focus.label} values, e.g. {infeasible[0]}")

    hat_index = int(np.argmin(np.abs(grid - psi_hat)))
    left = list(range(hat_index - 1, -1, -1))
    right = list(range(hat_index + 1, len(grid)))

    def sweep(indices: List[int]) -> List[Tuple[int, float]]:
        start = mle.theta
        out = []
        for i in indices:
            value, start = profile_loglik(model, data, focus, grid[i], start=start)
            out.append((i, value))
        return out

    profile = np.empty(len(grid))
    profile[hat_index] = mle.value
    for part in processor.process_batch([left, right], sweep):
        for i, value in part:
            profile[i] = value

    max_loglik = mle.value
    mle_focus = psi_hat
    if np.max(profile) > max_loglik + 1e-9:
        best = int(np.argmax(profile))
        log_warning(f"profile at {focus.label}={grid[best]:.6g} exceeds the likelihood maximum by "
                    f"{profile[best] - max_loglik:.3g}; maximum updated")
        notes.append("likelihood maximum updated from the profile")
        max_loglik = float(profile[best])
        mle_focus = float(grid[best])

    deviance = 2.0 * (max_loglik - profile)
    if np.min(deviance) < -1e-6:
        log_debug(f"clipping deviance {np.min(deviance):.3g} to zero")
    deviance = np.maximum(deviance, 0.0)
    return DevianceCurve(grid, deviance, mle_focus, max_loglik, mle.theta, focus.label, tuple(notes))


def wilks_cc(dev: DevianceCurve, factor: float = 1.0) -> ConfidenceCurve:
    """Wilks 置信曲线 cc = Γ₁(dev/factor)；factor 为 Bartlett 因子 1 + ε̂"""
    if not factor > 0:
        raise DataValidationError(f"Bartlett factor must be positive, got {factor}")
    cc = chi2_1_cdf(np.asarray(dev.deviance_values) / factor)
    notes = dev.notes + ((f"Bartlett factor {factor:.6g}",) if factor != 1.0 else ())
    return ConfidenceCurve(dev.focus_values, cc, dev.mle_focus, focus_label=dev.focus_label,
                           notes=notes)


def deviance_at(model: ParametricModel, data: Any, focus: FocusMap, psi: float) -> float:
    """单点偏差，用于自助法与覆盖率模拟"""
    mle = maximize_likelihood(model, data)
    value, _ = profile_loglik(model, data, focus, psi, start=mle.theta)
    return max(0.0, 2.0 * (mle.value - value))


def bartlett_factor(model: ParametricModel, theta_hat: Sequence[float], focus: FocusMap,
                    n: int, replications: int = 2000, seed: int = 0,
                    processor: Optional[BatchProcessor] = None,
                    root: Optional[RandomStream] = None) -> float:
    """
    Bartlett 因子 1 + ε̂：在 θ̂ 处参数自助 B 次，取 dev(ψ(θ̂)) 的均值（E χ²₁ = 1）

    root 给定时第 b 次自助取 root.spawn(b)，否则取主种子下的 Bartlett 子流。

    Raises:
        MethodNotApplicableError: 模型没有模拟器
    """
    if not model.has_simulator:
        raise MethodNotApplicableError(f"model '{model.name}' has no simulator for Bartletting")
    if replications < 1:
        raise DataValidationError("replication count must be >= 1")
    if replications < 1000 and root is None:
        log_warning(f"Bartlett factor from only {replications} bootstrap replications")

    processor = processor or get_batch_processor()
    theta_hat = np.asarray(theta_hat, dtype=float)
    psi0 = focus(theta_hat)
    root = root or RandomStream(seed, (BARTLETT_STREAM,))

    def replicate(b: int) -> float:
        data = model.simulate(theta_hat, n, root.spawn(b))
        return deviance_at(model, data, focus, psi0)

    deviances = np.asarray(processor.process_batch(list(range(replications)), replicate))
    factor = float(np.mean(deviances))
    std_error = float(np.std(deviances, ddof=1) / math.sqrt(replications)) if replications > 1 else 0.0
    log_debug(f"Bartlett factor {factor:.5f} (MC std error {std_error:.5f}, B={replications})")
    if factor <= 0:
        raise DataValidationError("bootstrap deviances are all zero; Bartlett factor undefined")
    return factor


def normal_approx_summary(model: ParametricModel, data: Any, focus: FocusMap,
                          mle: Optional[OptimizationResult] = None) -> Tuple[float, float]:
    """
    一阶正态近似所需的 (ψ̂, se(ψ̂))：观测信息矩阵（数值 Hessian）加 delta 方法

    Raises:
        SingularMatrixError: 观测信息矩阵奇异
    """
    mle = mle or maximize_likelihood(model, data)
    theta = mle.theta
    hessian = numerical_hessian(lambda t: model.log_likelihood(t, data), theta)
    try:
        covariance = np.linalg.inv(-hessian)
    except np.linalg.LinAlgError as e:
        raise SingularMatrixError("observed information matrix is singular") from e
    c = numerical_gradient(focus, theta)
    variance = float(c @ covariance @ c)
    if not variance > 0 or not np.isfinite(variance):
        raise SingularMatrixError("observed information gives a nonpositive focus variance")
    return focus(theta), math.sqrt(variance)


@dataclass
class CoverageReport:
    """覆盖率模拟报告"""
    method: str
    reps: int
    sample_size: int
    cc_values: np.ndarray
    ks_statistic: float
    ks_pvalue: float
    coverage: Dict[float, float] = field(default_factory=dict)
    bartlett_factor: Optional[float] = None
    ks_target: str = 'cc'

    @property
    def mean_abs_coverage_error(self) -> float:
        return float(np.mean([abs(cov - level) for level, cov in self.coverage.items()]))

    def as_dict(self) -> Dict[str, Any]:
        return {
            'method': self.method,
            'reps': self.reps,
            'sample_size': self.sample_size,
            'ks_statistic': self.ks_statistic,
            'ks_pvalue': self.ks_pvalue,
            'coverage': {f"{level:g}": cov for level, cov in self.coverage.items()},
            'mean_abs_coverage_error': self.mean_abs_coverage_error,
            'bartlett_factor': self.bartlett_factor,
            'ks_target': self.ks_target,
        }


def uniformity_report(method: str, cc_values: Sequence[float], sample_size: int,
                      levels: Sequence[float] = DEFAULT_COVERAGE_LEVELS,
                      bartlett: Optional[float] = None,
                      cd_values: Optional[Sequence[float]] = None) -> CoverageReport:
    """
    cc(ψ₀, Y) 样本的 KS 均匀性检验与各水平经验覆盖率

    给出 cd_values 时 KS 检验针对 C(ψ₀, Y) 本身。
    """
    cc_values = np.asarray(cc_values, dtype=float)
    target = cc_values if cd_values is None else np.asarray(cd_values, dtype=float)
    ks = stats.kstest(target, 'uniform')
    coverage = {float(level): float(np.mean(cc_values <= level)) for level in levels}
    return CoverageReport(method, cc_values.size, sample_size, cc_values,
                          float(ks.statistic), float(ks.pvalue), coverage, bartlett,
                          'cc' if cd_values is None else 'cd')


def coverage_simulate(model: ParametricModel, theta0: Sequence[float], focus: FocusMap,
                      method: str, reps: int, n: int, seed: int = 0,
                      levels: Sequence[float] = DEFAULT_COVERAGE_LEVELS,
                      bartlett_replications: int = 2000,
                      processor: Optional[BatchProcessor] = None) -> CoverageReport:
    """
    在 θ₀ 处模拟 reps 个数据集，记录 cc(ψ₀, Y) 并检验其均匀性

    wilks-bartlett 方法与实际使用一致：每个数据集在自己的 θ̂ 处做
    bartlett_replications 次嵌套参数自助，报告中记录这些因子的均值。

    Raises:
        MethodNotApplicableError: 方法不适用于该模型（无模拟器、无精确枢轴量）
    """
    if method not in COVERAGE_METHODS:
        raise MethodNotApplicableError(f"unknown coverage method '{method}'")
    if not model.has_simulator:
        raise MethodNotApplicableError(f"model '{model.name}' has no simulator")
    processor = processor or get_batch_processor()
    theta0 = np.asarray(theta0, dtype=float)
    psi0 = focus(theta0)

    if method == 'wilks-bartlett':
        if bartlett_replications < 1:
            raise DataValidationError("replication count must be >= 1")
        if bartlett_replications < 1000:
            log_warning(f"Bartlett factors from only {bartlett_replications} nested replications")
    if method == 'pivot':
        # 提前暴露不适用的枢轴量
        first = model.simulate(theta0, n, RandomStream(seed, (COVERAGE_STREAM, 0)))
        model.pivot_cd_value(first, focus.label, psi0)

    root = RandomStream(seed, (COVERAGE_STREAM,))

    def replicate(r: int) -> Tuple[float, float]:
        stream = root.spawn(r)
        data = model.simulate(theta0, n, stream)
        if method == 'pivot':
            return abs(1.0 - 2.0 * model.pivot_cd_value(data, focus.label, psi0)), math.nan
        if method == 'normal-approx':
            psi_hat, se = normal_approx_summary(model, data, focus)
            return abs(1.0 - 2.0 * std_normal_cdf((psi0 - psi_hat) / se)), math.nan
        dev = deviance_at(model, data, focus, psi0)
        if method == 'wilks':
            return chi2_1_cdf(dev), math.nan
        theta_hat = maximize_likelihood(model, data).theta
        # 嵌套自助在本工作线程内串行执行
        factor = bartlett_factor(model, theta_hat, focus, n, bartlett_replications,
                                 processor=BatchProcessor(max_workers=1), root=stream.spawn(0))
        return chi2_1_cdf(dev / factor), factor

    results = processor.process_batch(list(range(reps)), replicate)
    cc_values = [cc for cc, _ in results]
    factor = float(np.mean([f for _, f in results])) if method == 'wilks-bartlett' else None
    return uniformity_report(method, cc_values, n, levels, factor)
