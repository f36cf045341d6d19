"""
内置参数模型

normal、exponential、poisson-rate、binormal、paired-poisson、
normal-random-effects 六个模型，附带模拟器、闭式极大似然估计和
可用的精确枢轴量；模型注册表按名称构造模型并从 CSV 表格读入数据。
"""

import math
from typing import Any, Callable, Dict, Optional

import numpy as np
import pandas as pd
from scipy import special

from ..core.error_handler import ConfigError, DataValidationError, MethodNotApplicableError
from .likelihood_engine import ParametricModel, FocusMap
from .optimizer import ParamBound
from .meta_random_effects import EffectEstimates, heterogeneity_q
from .prob_kernels import RandomStream, chi2_cdf, student_t_cdf

_LOG_2PI = math.log(2.0 * math.pi)


def _as_sample(data: Any, minimum: int = 1) -> np.ndarray:
    y = np.asarray(data, dtype=float).ravel()
    if y.size < minimum:
        raise DataValidationError(f"need at least {minimum} observations, got {y.size}")
    if not np.all(np.isfinite(y)):
        raise DataValidationError("observations must be finite")
    return y


class NormalModel(ParametricModel):
    """正态模型 N(μ, σ²)"""

    name = 'normal'
    param_names = ('mu', 'sigma')
    bounds = (ParamBound.real(), ParamBound.positive())

    def log_likelihood(self, theta, data):
        mu, sigma = theta
        if sigma <= 0:
            return -math.inf
        return float(np.sum(self.log_density(theta, data)))

    def log_density(self, theta, data):
        mu, sigma = theta
        y = np.asarray(data, dtype=float)
        return -0.5 * _LOG_2PI - math.log(sigma) - 0.5 * ((y - mu) / sigma) ** 2

    def moment_seed(self, data):
        y = _as_sample(data, 2)
        return np.array([y.mean(), max(y.std(), 1e-3)])

    def closed_form_mle(self, data):
        y = _as_sample(data, 2)
        sigma = y.std()
        return np.array([y.mean(), sigma]) if sigma > 0 else None

    def closed_form_profile(self, label, psi, data):
        if label != 'mu':
            return None
        y = _as_sample(data, 2)
        sigma = math.sqrt(np.mean((y - psi) ** 2))
        return np.array([psi, sigma]) if sigma > 0 else None

    def simulate(self, theta, n, stream: RandomStream):
        return stream.normal(theta[0], theta[1], size=n)

    def power_integral(self, theta, a):
        sigma = theta[1]
        return (2.0 * math.pi) ** (-a / 2.0) * sigma ** (-a) * (1.0 + a) ** -0.5

    def pivot_cd_value(self, data, label, psi):
        y = _as_sample(data, 2)
        n = y.size
        s = y.std(ddof=1)
        if s <= 0:
            raise DataValidationError("sample standard deviation is zero")
        if label == 'mu':
            return student_t_cdf(math.sqrt(n) * (psi - y.mean()) / s, n - 1)
        if label == 'sigma':
            if psi <= 0:
                return 0.0
            return 1.0 - chi2_cdf((n - 1) * s * s / (psi * psi), n - 1)
        return super().pivot_cd_value(data, label, psi)


class ExponentialModel(ParametricModel):
    """指数模型，速率 λ"""

    name = 'exponential'
    param_names = ('rate',)
    bounds = (ParamBound.positive(),)

    def log_likelihood(self, theta, data):
        rate = theta[0]
        if rate <= 0:
            return -math.inf
        y = np.asarray(data, dtype=float)
        return float(y.size * math.log(rate) - rate * y.sum())

    def log_density(self, theta, data):
        rate = theta[0]
        return math.log(rate) - rate * np.asarray(data, dtype=float)

    def moment_seed(self, data):
        y = _as_sample(data)
        if np.any(y < 0):
            raise DataValidationError("exponential observations must be nonnegative")
        return np.array([1.0 / max(y.mean(), 1e-12)])

    def closed_form_mle(self, data):
        return self.moment_seed(data)

    def simulate(self, theta, n, stream: RandomStream):
        return stream.exponential(1.0 / theta[0], size=n)

    def pivot_cd_value(self, data, label, psi):
        # 2λΣy ~ χ²_{2n}
        y = _as_sample(data)
        if label == 'rate':
            return chi2_cdf(2.0 * max(psi, 0.0) * y.sum(), 2 * y.size)
        if label == 'mean':
            return 1.0 - chi2_cdf(2.0 * y.sum() / psi, 2 * y.size) if psi > 0 else 0.0
        return super().pivot_cd_value(data, label, psi)

    def focus_map(self, label):
        if label == 'mean':
            return FocusMap(map=lambda theta: 1.0 / theta[0], label='mean',
                            reduce=lambda psi, free: np.array([1.0 / psi]),
                            bound=ParamBound.positive())
        return super().focus_map(label)


class PoissonRateModel(ParametricModel):
    """泊松均值模型"""

    name = 'poisson-rate'
    param_names = ('rate',)
    bounds = (ParamBound.positive(),)

    def log_likelihood(self, theta, data):
        rate = theta[0]
        if rate <= 0:
            return -math.inf
        y = np.asarray(data, dtype=float)
        return float(np.sum(special.xlogy(y, rate) - rate - special.gammaln(y + 1.0)))

    def log_density(self, theta, data):
        y = np.asarray(data, dtype=float)
        return special.xlogy(y, theta[0]) - theta[0] - special.gammaln(y + 1.0)

    def moment_seed(self, data):
        y = _as_sample(data)
        if np.any(y < 0) or np.any(y != np.floor(y)):
            raise DataValidationError("poisson observations must be nonnegative integers")
        if y.sum() == 0:
            raise DataValidationError("all counts are zero; the rate MLE is on the boundary")
        return np.array([y.mean()])

    def closed_form_mle(self, data):
        return self.moment_seed(data)

    def simulate(self, theta, n, stream: RandomStream):
        return stream.poisson(theta[0], size=n)


class BinormalModel(ParametricModel):
    """二元正态模型 (μ₁, μ₂, σ₁, σ₂, ρ)"""

    name = 'binormal'
    param_names = ('mean1', 'mean2', 'sd1', 'sd2', 'rho')
    bounds = (ParamBound.real(), ParamBound.real(), ParamBound.positive(),
              ParamBound.positive(), ParamBound.interval(-1.0, 1.0))

    @staticmethod
    def _pairs(data) -> np.ndarray:
        xy = np.asarray(data, dtype=float)
        if xy.ndim != 2 or xy.shape[1] != 2:
            raise DataValidationError("binormal data must be an (n, 2) array")
        if xy.shape[0] < 3:
            raise DataValidationError("binormal model needs at least 3 pairs")
        return xy

    def log_density(self, theta, data):
        m1, m2, s1, s2, rho = theta
        xy = np.asarray(data, dtype=float)
        u = (xy[:, 0] - m1) / s1
        v = (xy[:, 1] - m2) / s2
        one_minus = 1.0 - rho * rho
        quad = (u * u - 2.0 * rho * u * v + v * v) / one_minus
        return -_LOG_2PI - math.log(s1) - math.log(s2) - 0.5 * math.log(one_minus) - 0.5 * quad

    def log_likelihood(self, theta, data):
        m1, m2, s1, s2, rho = theta
        if s1 <= 0 or s2 <= 0 or not -1.0 < rho < 1.0:
            return -math.inf
        return float(np.sum(self.log_density(theta, data)))

    def moment_seed(self, data):
        xy = self._pairs(data)
        mean = xy.mean(axis=0)
        sd = xy.std(axis=0)
        if np.any(sd <= 0):
            raise DataValidationError("binormal data has a constant coordinate")
        rho = float(np.mean((xy[:, 0] - mean[0]) * (xy[:, 1] - mean[1])) / (sd[0] * sd[1]))
        return np.array([mean[0], mean[1], sd[0], sd[1], min(max(rho, -0.999), 0.999)])

    def closed_form_mle(self, data):
        return self.moment_seed(data)

    def simulate(self, theta, n, stream: RandomStream):
        m1, m2, s1, s2, rho = theta
        cov = [[s1 * s1, rho * s1 * s2], [rho * s1 * s2, s2 * s2]]
        return stream.multivariate_normal([m1, m2], cov, size=n)

    def power_integral(self, theta, a):
        # d = 2: (2π)^{−a} |Σ|^{−a/2} (1+a)^{−1}
        s1, s2, rho = theta[2], theta[3], theta[4]
        det = (s1 * s2) ** 2 * (1.0 - rho * rho)
        return (2.0 * math.pi) ** (-a) * det ** (-a / 2.0) / (1.0 + a)

    def closed_form_profile(self, label, psi, data):
        # ρ 固定时均值取样本均值；σ₁、σ₂ 的剖面解有闭式
        if label != 'rho':
            return None
        xy = self._pairs(data)
        mean = xy.mean(axis=0)
        centered = xy - mean
        sxx = np.mean(centered[:, 0] ** 2)
        syy = np.mean(centered[:, 1] ** 2)
        sxy = np.mean(centered[:, 0] * centered[:, 1])
        r = sxy / math.sqrt(sxx * syy)
        # 标准化后 σ̃₁² = σ̃₂² = (1 − ρr)/(1 − ρ²)
        scale = (1.0 - psi * r) / (1.0 - psi * psi)
        if scale <= 0:
            return None
        factor = math.sqrt(scale)
        return np.array([mean[0], mean[1], math.sqrt(sxx) * factor, math.sqrt(syy) * factor, psi])


class PairedPoissonModel(ParametricModel):
    """
    配对泊松模型：y₀ⱼ ~ Pois(e₀ⱼλⱼ)，y₁ⱼ ~ Pois(e₁ⱼλⱼγ)

    参数 (γ, λ₁..λ_k)；给定 γ 时 λ̂ⱼ(γ) = zⱼ/(e₀ⱼ + e₁ⱼγ)。
    数据为 (k, 4) 数组，列 m1,m0,y1,y0；曝露量取 eⱼ = mⱼ。
    """

    name = 'paired-poisson'

    def __init__(self, design: np.ndarray):
        design = np.asarray(design, dtype=float)
        if design.ndim != 2 or design.shape[0] < 1:
            raise DataValidationError("paired-poisson model needs at least one study")
        self.k = design.shape[0]
        self.design = self._table_for(design, self.k)
        self.param_names = ('gamma',) + tuple(f'lambda{j + 1}' for j in range(self.k))
        self.bounds = (ParamBound.positive(),) * (self.k + 1)

    @staticmethod
    def _table_for(data, k: int) -> np.ndarray:
        table = np.asarray(data, dtype=float)
        if table.shape != (k, 4):
            raise DataValidationError(f"expected a ({k}, 4) table of m1,m0,y1,y0")
        return table

    def _table(self, data) -> np.ndarray:
        return self._table_for(data, self.k)

    def sample_size(self, data):
        return self.k

    def log_likelihood(self, theta, data):
        table = self._table(data)
        gamma, lam = theta[0], np.asarray(theta[1:])
        if gamma <= 0 or np.any(lam <= 0):
            return -math.inf
        m1, m0, y1, y0 = table.T
        mean0 = m0 * lam
        mean1 = m1 * lam * gamma
        return float(np.sum(special.xlogy(y0, mean0) - mean0 + special.xlogy(y1, mean1) - mean1
                            - special.gammaln(y0 + 1.0) - special.gammaln(y1 + 1.0)))

    def _lambda_hat(self, table, gamma):
        m1, m0, y1, y0 = table.T
        return np.maximum((y0 + y1) / (m0 + m1 * gamma), 1e-12)

    def moment_seed(self, data):
        table = self._table(data)
        m1, m0, y1, y0 = table.T
        gamma = max(y1.sum() / max(m1.sum(), 1.0), 1e-6) / max(y0.sum() / max(m0.sum(), 1.0), 1e-6)
        return np.concatenate(([gamma], self._lambda_hat(table, gamma)))

    def closed_form_profile(self, label, psi, data):
        if label != 'gamma':
            return None
        return np.concatenate(([psi], self._lambda_hat(self._table(data), psi)))

    def simulate(self, theta, n, stream: RandomStream):
        m1, m0 = self.design[:, 0], self.design[:, 1]
        lam = np.asarray(theta[1:])
        y0 = stream.poisson(m0 * lam)
        y1 = stream.poisson(m1 * lam * theta[0])
        return np.column_stack([m1, m0, y1, y0])


class NormalRandomEffectsModel(ParametricModel):
    """
    正态随机效应模型：β̂ⱼ ~ N(β₀, sⱼ² + τ²)，sⱼ 已知

    数据为 (k, 2) 数组，列 estimate,std_error；τ 的下界 0 是闭的。
    """

    name = 'normal-random-effects'
    param_names = ('beta0', 'tau')
    bounds = (ParamBound.real(), ParamBound.nonnegative())

    def __init__(self, design: Optional[np.ndarray] = None):
        self.design = None if design is None else self._effects(design)

    @staticmethod
    def _effects(data):
        table = np.asarray(data, dtype=float)
        if table.ndim != 2 or table.shape[1] != 2 or table.shape[0] < 2:
            raise DataValidationError("random-effects data must be a (k >= 2, 2) table")
        if np.any(table[:, 1] <= 0):
            raise DataValidationError("standard errors must be positive")
        return table

    def log_likelihood(self, theta, data):
        beta0, tau = theta
        if tau < 0:
            return -math.inf
        table = np.asarray(data, dtype=float)
        var = table[:, 1] ** 2 + tau * tau
        return float(-0.5 * np.sum(_LOG_2PI + np.log(var) + (table[:, 0] - beta0) ** 2 / var))

    def moment_seed(self, data):
        table = self._effects(data)
        tau = math.sqrt(max(np.var(table[:, 0], ddof=1) - np.mean(table[:, 1] ** 2), 1e-4))
        return np.array([table[:, 0].mean(), tau])

    def closed_form_profile(self, label, psi, data):
        if label != 'tau':
            return None
        table = self._effects(data)
        weights = 1.0 / (table[:, 1] ** 2 + psi * psi)
        return np.array([np.sum(weights * table[:, 0]) / np.sum(weights), psi])

    def simulate(self, theta, n, stream: RandomStream):
        if self.design is None:
            raise MethodNotApplicableError("random-effects simulation needs the standard errors as design")
        table = self.design
        sd = np.sqrt(table[:, 1] ** 2 + theta[1] ** 2)
        return np.column_stack([stream.normal(theta[0], sd), table[:, 1]])

    def pivot_cd_value(self, data, label, psi):
        if label != 'tau':
            return super().pivot_cd_value(data, label, psi)
        table = self._effects(data)
        effects = EffectEstimates(table[:, 0], table[:, 1])
        return 1.0 - chi2_cdf(heterogeneity_q(effects, psi), effects.k - 1)


# 模型注册表：名称 -> (构造函数(数据), 数据列)
MODEL_COLUMNS = {
    'normal': ('y',),
    'exponential': ('y',),
    'poisson-rate': ('y',),
    'binormal': ('x', 'y'),
    'paired-poisson': ('m1', 'm0', 'y1', 'y0'),
    'normal-random-effects': ('estimate', 'std_error'),
}

_FACTORIES: Dict[str, Callable[[Optional[np.ndarray]], ParametricModel]] = {
    'normal': lambda data: NormalModel(),
    'exponential': lambda data: ExponentialModel(),
    'poisson-rate': lambda data: PoissonRateModel(),
    'binormal': lambda data: BinormalModel(),
    'paired-poisson': PairedPoissonModel,
    'normal-random-effects': NormalRandomEffectsModel,
}

# 需要固定设计（曝露量或标准误）才能模拟的模型
_DESIGN_MODELS = ('paired-poisson', 'normal-random-effects')


def list_models():
    return sorted(_FACTORIES)


def build_model(name: str, data: Optional[np.ndarray] = None) -> ParametricModel:
    """
    按名称构造模型；paired-poisson 与 normal-random-effects 以数据作为模拟设计

    Raises:
        ConfigError: 未知模型名或缺少所需数据
    """
    if name not in _FACTORIES:
        raise ConfigError(f"unknown model '{name}' (known: {', '.join(list_models())})")
    if name in _DESIGN_MODELS and data is None:
        raise ConfigError(f"model '{name}' needs a dataset to define its design")
    return _FACTORIES[name](data)


def dataset_from_frame(name: str, frame: pd.DataFrame, log_log: bool = False) -> np.ndarray:
    """
    从 CSV 表格中取出模型所需的数据列

    Args:
        log_log: binormal 数据取 (log x, log y)
    """
    columns = MODEL_COLUMNS.get(name)
    if columns is None:
        raise ConfigError(f"unknown model '{name}'")
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise DataValidationError(f"model '{name}' needs column(s) {', '.join(missing)}")
    values = frame[list(columns)].to_numpy(dtype=float)
    if log_log:
        if np.any(values <= 0):
            raise DataValidationError("log-log transform needs positive values")
        values = np.log(values)
    if not np.all(np.isfinite(values)):
        raise DataValidationError(f"dataset for '{name}' has missing or non-finite values")
    return values[:, 0] if len(columns) == 1 else values


def model_with_theta(name: str, params: Dict[str, float],
                     design: Optional[np.ndarray] = None) -> tuple:
    """由参数字典构造 (模型, θ)，用于覆盖率模拟"""
    model = build_model(name, design)
    missing = [p for p in model.param_names if p not in params]
    if missing:
        raise ConfigError(f"true_params for '{name}' missing: {', '.join(missing)}")
    theta = np.array([float(params[p]) for p in model.param_names])
    if not model.in_bounds(theta):
        raise ConfigError(f"true_params for '{name}' are outside the parameter space")
    return model, theta
