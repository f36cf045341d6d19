"""
稳健幂散度模块

BHHJ 最小幂散度估计：最小化
    H_n(θ) = ∫ f_θ^{1+a} dy − (1 + 1/a)·n⁻¹ Σ f(y_i, θ)^a，
剖面偏差 D_n(ψ) = 2n{H_n,prof(ψ) − H_n,min}，夹心估计的 k̂，
以及稳健置信曲线 cc(ψ) = Γ₁(D_n(ψ)/k̂)。
"""

import math
import warnings
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from ..core.error_handler import (
    DataValidationError, MethodNotApplicableError, NumericalError, OptimizationError,
    QuadratureError, SingularMatrixError, log_warning, log_info, log_debug
)
from ..core.performance_optimizer import BatchProcessor
from .cd_core import ConfidenceCurve
from .likelihood_engine import (
    CoverageReport, DEFAULT_COVERAGE_LEVELS, DevianceCurve, FocusMap, ParametricModel,
    deviance_curve, maximize_likelihood, profile_loglik, uniformity_report, wilks_cc
)
from .optimizer import OptimizationResult, numerical_gradient, numerical_hessian
from .prob_kernels import RandomStream, chi2_1_cdf


INTEGRAL_MODES = ('closed-form', 'quadrature')
ROBUST_STREAM = 7

RESIDUAL_WARN = 1e-5
RESIDUAL_FAIL = 1e-3
QUADRATURE_RTOL = 1e-10
_EPS = np.finfo(float).eps

# 模型的密度众数位置（降权以众数处的密度为基准）
_MODES = {
    'normal': lambda theta: np.array([theta[0]]),
    'binormal': lambda theta: np.array([[theta[0], theta[1]]]),
}


@dataclass(frozen=True)
class DivergenceConfig:
    """
    Attributes:
        a: 调谐参数，a > 0
        integral_mode: closed-form 使用模型的闭式 ∫f^{1+a}，quadrature 使用自适应积分
        box: 积分区域，每维 (下限, 上限)；缺省为整个实轴
    """
    a: float
    integral_mode: str = 'closed-form'
    box: Optional[Tuple[Tuple[float, float], ...]] = None

    def __post_init__(self):
        if not (self.a > 0 and math.isfinite(self.a)):
            raise DataValidationError(f"tuning parameter a must be positive, got {self.a}")
        if self.integral_mode not in INTEGRAL_MODES:
            raise DataValidationError(f"unknown integral mode '{self.integral_mode}'")


def data_dim(data: Any) -> int:
    arr = np.asarray(data, dtype=float)
    return 1 if arr.ndim == 1 else arr.shape[1]


def _quadrature(func: Callable[..., float], dim: int,
                box: Optional[Tuple[Tuple[float, float], ...]]) -> float:
    box = box or tuple((-np.inf, np.inf) for _ in range(dim))
    if len(box) != dim:
        raise DataValidationError(f"integration box has {len(box)} dimension(s), data has {dim}")
    with warnings.catch_warnings():
        warnings.simplefilter('error', integrate.IntegrationWarning)
        try:
            if dim == 1:
                value, bound = integrate.quad(func, *box[0], epsabs=0.0, epsrel=QUADRATURE_RTOL,
                                              limit=200)
            elif dim == 2:
                (x_lo, x_hi), (y_lo, y_hi) = box
                value, bound = integrate.dblquad(lambda y, x: func(x, y), x_lo, x_hi, y_lo, y_hi,
                                                 epsabs=0.0, epsrel=QUADRATURE_RTOL)
            else:
                raise MethodNotApplicableError(f"quadrature supports 1 or 2 dimensions, got {dim}")
        except integrate.IntegrationWarning as e:
            raise QuadratureError(f"quadrature did not converge: {e}", math.nan, math.inf) from e
    if bound > 1e-6 * max(1.0, abs(value)):
        raise QuadratureError("quadrature error bound too large", value, bound)
    return float(value)


def power_integral(model: ParametricModel, theta: np.ndarray, config: DivergenceConfig,
                   dim: int) -> float:
    """∫ f_θ^{1+a} dy，按配置走闭式或数值积分"""
    if config.integral_mode == 'closed-form':
        return model.power_integral(theta, config.a)
    exponent = 1.0 + config.a
    if dim == 1:
        integrand = lambda y: math.exp(exponent * float(model.log_density(theta, np.array([y]))[0]))
    else:
        integrand = lambda x, y: math.exp(
            exponent * float(model.log_density(theta, np.array([[x, y]]))[0]))
    return _quadrature(integrand, dim, config.box)


def _per_observation_criterion(model: ParametricModel, data: Any, config: DivergenceConfig,
                               theta: np.ndarray) -> np.ndarray:
    """h_i(θ) = ∫f^{1+a} − (1 + 1/a) f(y_i, θ)^a，H_n 为其均值"""
    a = config.a
    integral = power_integral(model, theta, config, data_dim(data))
    density_power = np.exp(a * np.asarray(model.log_density(theta, data), dtype=float))
    return integral - (1.0 + 1.0 / a) * density_power


def bhhj_criterion(model: ParametricModel, data: Any, config: DivergenceConfig,
                   theta: Sequence[float]) -> float:
    """
    经验散度 H_n(θ)

    Raises:
        QuadratureError: 数值积分不收敛
    """
    theta = np.asarray(theta, dtype=float)
    if not model.in_bounds(theta):
        return math.inf
    return float(np.mean(_per_observation_criterion(model, data, config, theta)))


class CriterionModel(ParametricModel):
    """把 −n·H_n 包装成“对数似然”，复用剖面与偏差机制"""

    def __init__(self, base: ParametricModel, config: DivergenceConfig):
        self.base = base
        self.config = config
        self.name = f"{base.name}-bhhj"
        self.param_names = base.param_names
        self.bounds = base.bounds

    def log_likelihood(self, theta, data):
        value = bhhj_criterion(self.base, data, self.config, theta)
        return -self.sample_size(data) * value

    def moment_seed(self, data):
        closed = self.base.closed_form_mle(data)
        return closed if closed is not None else self.base.moment_seed(data)

    def sample_size(self, data):
        return self.base.sample_size(data)

    def focus_map(self, label: str) -> FocusMap:
        return self.base.focus_map(label)


@dataclass(frozen=True, eq=False)
class RobustFit:
    """BHHJ 估计结果"""
    theta: np.ndarray
    criterion: float
    residual_norm: float
    optimization: OptimizationResult


def estimating_residual(model: ParametricModel, data: Any, config: DivergenceConfig,
                        theta: np.ndarray) -> np.ndarray:
    """
    估计方程残差 n⁻¹Σ f^a u − ∫ f^{1+a} u

    等于 −∇H_n/(1 + a)，用数值梯度计算。
    """
    grad = numerical_gradient(lambda t: bhhj_criterion(model, data, config, t), theta)
    return -grad / (1.0 + config.a)


def bhhj_estimate(model: ParametricModel, data: Any, config: DivergenceConfig,
                  starts: int = 5) -> RobustFit:
    """
    最小化 H_n 得到 θ̂_a，起点为极大似然估计

    Raises:
        OptimizationError: 不收敛，或估计方程残差超过 1e-3
    """
    if np.asarray(data).size == 0:
        raise DataValidationError("BHHJ estimation needs data")
    criterion_model = CriterionModel(model, config)
    result = maximize_likelihood(criterion_model, data, starts=starts)
    n = criterion_model.sample_size(data)
    residual = float(np.linalg.norm(estimating_residual(model, data, config, result.theta)))

    if residual > RESIDUAL_FAIL:
        raise OptimizationError(f"BHHJ estimating equation residual {residual:.3g} too large",
                                result.theta, -result.value / n)
    if residual > RESIDUAL_WARN:
        log_warning(f"BHHJ estimating equation residual {residual:.3g} exceeds {RESIDUAL_WARN:g}")
    log_debug(f"BHHJ a={config.a:g}: theta={np.round(result.theta, 6).tolist()}")
    return RobustFit(result.theta, -result.value / n, residual, result)


def robust_profile_deviance(model: ParametricModel, data: Any, config: DivergenceConfig,
                            focus: FocusMap, grid: Sequence[float],
                            processor: Optional[BatchProcessor] = None,
                            fit: Optional[RobustFit] = None) -> DevianceCurve:
    """D_n(ψ) = 2n{H_n,prof(ψ) − H_n,min}"""
    fit = fit or bhhj_estimate(model, data, config)
    criterion_model = CriterionModel(model, config)
    return deviance_curve(criterion_model, data, focus, grid, processor=processor,
                          mle=fit.optimization)


def _per_observation_gradients(func: Callable[[np.ndarray], np.ndarray],
                               theta: np.ndarray) -> np.ndarray:
    """逐观测梯度 (n, p)，中心差分"""
    theta = np.asarray(theta, dtype=float)
    columns = []
    for j in range(theta.size):
        h = _EPS ** (1.0 / 3.0) * max(abs(theta[j]), 1.0)
        up, down = theta.copy(), theta.copy()
        up[j] += h
        down[j] -= h
        columns.append((func(up) - func(down)) / (2.0 * h))
    return np.column_stack(columns)


def _gradient_covariance(grads: np.ndarray) -> np.ndarray:
    """逐观测梯度的经验协方差，乘 n/(n − p) 做自由度修正"""
    n, p = grads.shape
    if n <= p:
        raise DataValidationError(
            f"sandwich estimate needs more observations than parameters (n={n}, p={p})")
    return np.cov(grads, rowvar=False, bias=True).reshape(p, p) * n / (n - p)


def _sandwich_ratio(J: np.ndarray, K: np.ndarray, c: np.ndarray) -> float:
    if not np.all(np.isfinite(J)) or np.linalg.cond(J) > 1e12:
        raise SingularMatrixError(
            "criterion Hessian is singular; try a larger tuning parameter or check the model")
    try:
        J_inv = np.linalg.inv(J)
    except np.linalg.LinAlgError as e:
        raise SingularMatrixError(
            "criterion Hessian is singular; try a larger tuning parameter or check the model") from e
    Jc = J_inv @ c
    denominator = float(c @ Jc)
    numerator = float(Jc @ K @ Jc)
    if not denominator > 0 or not numerator > 0:
        raise NumericalError(f"k factor is not positive ({numerator:.3g}/{denominator:.3g})")
    return numerator / denominator


def k_factor(model: ParametricModel, data: Any, config: DivergenceConfig,
             theta_hat: Sequence[float], focus: FocusMap) -> float:
    """
    夹心估计 k̂ = (c'J⁻¹KJ⁻¹c)/(c'J⁻¹c)

    J 为 H_n 在 θ̂_a 的 Hessian，K 为逐观测准则梯度的经验协方差（除以 n − p），
    c 为焦点梯度。

    Raises:
        SingularMatrixError: J 奇异
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    J = numerical_hessian(lambda t: bhhj_criterion(model, data, config, t), theta_hat)
    grads = _per_observation_gradients(
        lambda t: _per_observation_criterion(model, data, config, t), theta_hat)
    K = _gradient_covariance(grads)
    c = numerical_gradient(focus, theta_hat)
    return _sandwich_ratio(J, K, c)


def likelihood_k_factor(model: ParametricModel, data: Any, theta_hat: Sequence[float],
                        focus: FocusMap) -> float:
    """a → 0 的似然极限：J 为平均负对数似然的 Hessian，K 为得分协方差"""
    theta_hat = np.asarray(theta_hat, dtype=float)
    n = model.sample_size(data)
    J = numerical_hessian(lambda t: -model.log_likelihood(t, data) / n, theta_hat)
    grads = _per_observation_gradients(
        lambda t: -np.asarray(model.log_density(t, data), dtype=float), theta_hat)
    K = _gradient_covariance(grads)
    c = numerical_gradient(focus, theta_hat)
    return _sandwich_ratio(J, K, c)


@dataclass(frozen=True, eq=False)
class RobustCurve:
    """稳健置信曲线及其组成部分"""
    cc: ConfidenceCurve
    deviance: DevianceCurve
    theta_hat: np.ndarray
    k: float
    a: Optional[float]

    def as_dict(self) -> dict:
        return {'a': self.a, 'k': self.k, 'theta_hat': self.theta_hat.tolist(),
                'point_estimate': self.cc.point_estimate}


def robust_analysis(model: ParametricModel, data: Any, config: DivergenceConfig,
                    focus_label: str, grid: Sequence[float],
                    processor: Optional[BatchProcessor] = None) -> RobustCurve:
    """估计、剖面偏差、k̂ 与置信曲线一并计算；k̂ 只在 θ̂_a 处计算一次"""
    focus = model.focus_map(focus_label)
    fit = bhhj_estimate(model, data, config)
    dev = robust_profile_deviance(model, data, config, focus, grid, processor, fit)
    k = k_factor(model, data, config, fit.theta, focus)
    log_info(f"robust {focus_label}: estimate {dev.mle_focus:.6g}, a={config.a:g}, k={k:.4g}")
    return RobustCurve(wilks_cc(dev, factor=k), dev, fit.theta, k, config.a)


def robust_cc(model: ParametricModel, data: Any, config: DivergenceConfig, focus_label: str,
              grid: Sequence[float], processor: Optional[BatchProcessor] = None) -> ConfidenceCurve:
    """cc(ψ) = Γ₁(D_n(ψ)/k̂)"""
    return robust_analysis(model, data, config, focus_label, grid, processor).cc


def likelihood_sandwich_analysis(model: ParametricModel, data: Any, focus_label: str,
                                 grid: Sequence[float],
                                 processor: Optional[BatchProcessor] = None) -> RobustCurve:
    """似然极限曲线 Γ₁(dev/k̂)，k̂ 用得分的夹心估计"""
    focus = model.focus_map(focus_label)
    mle = maximize_likelihood(model, data)
    dev = deviance_curve(model, data, focus, grid, processor=processor, mle=mle)
    k = likelihood_k_factor(model, data, mle.theta, focus)
    return RobustCurve(wilks_cc(dev, factor=k), dev, mle.theta, k, None)


def tuning_from_downweight(target_fraction: float, dim: int) -> float:
    """
    a = −2·ln(1 − fraction)/dim

    平均平方马氏距离为 dim 的点相对中心的权重 exp(−a·dim/2) 恰为 1 − fraction。
    """
    if not 0.0 < target_fraction < 1.0:
        raise DataValidationError(f"downweight fraction must lie in (0, 1), got {target_fraction}")
    if int(dim) != dim or dim < 1:
        raise DataValidationError(f"dimension must be a positive integer, got {dim}")
    return -2.0 * math.log1p(-target_fraction) / dim


def downweight_factors(model: ParametricModel, data: Any, theta: Sequence[float],
                       a: float) -> np.ndarray:
    """逐观测相对权重 (f(y_i)/f(众数))^a"""
    if model.name not in _MODES:
        raise MethodNotApplicableError(f"model '{model.name}' has no density mode for weights")
    theta = np.asarray(theta, dtype=float)
    log_mode = float(np.asarray(model.log_density(theta, _MODES[model.name](theta))).ravel()[0])
    return np.exp(a * (np.asarray(model.log_density(theta, data), dtype=float) - log_mode))


def simulate_robust_coverage(model: ParametricModel, theta0: Sequence[float],
                             config: DivergenceConfig, focus_label: str, n: int, reps: int,
                             seed: int = 0,
                             levels: Sequence[float] = DEFAULT_COVERAGE_LEVELS) -> CoverageReport:
    """
    正确模型下模拟 cc(ψ₀, Y) = Γ₁(D_n(ψ₀)/k̂)，检验其均匀性
    """
    theta0 = np.asarray(theta0, dtype=float)
    focus = model.focus_map(focus_label)
    psi0 = focus(theta0)
    criterion_model = CriterionModel(model, config)
    root = RandomStream(seed, (ROBUST_STREAM,))

    cc = np.empty(reps)
    for r in range(reps):
        data = model.simulate(theta0, n, root.spawn(r))
        fit = bhhj_estimate(model, data, config)
        profile, _ = profile_loglik(criterion_model, data, focus, psi0, start=fit.theta)
        deviance = max(0.0, 2.0 * (fit.optimization.value - profile))
        k = k_factor(model, data, config, fit.theta, focus)
        cc[r] = chi2_1_cdf(deviance / k)
    return uniformity_report('robust', cc, n, levels)
