"""
概率核模块

其它模块使用的精确分布函数、分位数、概率质量函数以及可复现的随机流。
所有求值函数均为纯函数，可在线程间共享；随机流仅限单线程使用，
并行任务通过 ``RandomStream.spawn(key)`` 获取按索引派生的独立子流。
"""

from typing import Union

import numpy as np
from scipy import special

from ..core.error_handler import DataValidationError


ArrayLike = Union[float, int, np.ndarray]


def _as_float(value: np.ndarray) -> ArrayLike:
    """零维数组返回 Python float"""
    return float(value) if np.ndim(value) == 0 else value


def _check_probability(p: np.ndarray, name: str = 'p') -> None:
    if np.any(np.isnan(p)) or np.any((p < 0.0) | (p > 1.0)):
        raise DataValidationError(f"{name} must lie in [0, 1]")


def std_normal_cdf(x: ArrayLike) -> ArrayLike:
    """标准正态分布函数 Φ(x)，拒绝非有限输入"""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DataValidationError("std_normal_cdf requires finite input")
    return _as_float(special.ndtr(x))


def std_normal_quantile(p: ArrayLike) -> ArrayLike:
    """
    标准正态分位数 Φ⁻¹(p)

    p 为 0 或 1 时返回 ∓inf（无穷分位数），p 超出 [0, 1] 时报错。
    """
    p = np.asarray(p, dtype=float)
    _check_probability(p)
    return _as_float(special.ndtri(p))


def chi2_1_cdf(x: ArrayLike) -> ArrayLike:
    """χ²₁ 分布函数 Γ₁(x) = 2Φ(√x) − 1，用 erf(√(x/2)) 计算以保留小 x 的精度"""
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)) or np.any(x < 0.0):
        raise DataValidationError("chi2_1_cdf requires x >= 0")
    return _as_float(special.erf(np.sqrt(x / 2.0)))


def chi2_1_quantile(p: ArrayLike) -> ArrayLike:
    """Γ₁⁻¹(p) = 2·erfinv(p)²；p = 1 时为 inf"""
    p = np.asarray(p, dtype=float)
    _check_probability(p)
    return _as_float(2.0 * special.erfinv(p) ** 2)


def chi2_cdf(x: ArrayLike, df: float) -> ArrayLike:
    """χ²_df 分布函数（正则化下不完全伽马函数）"""
    if df <= 0:
        raise DataValidationError("chi2_cdf requires df > 0")
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)) or np.any(x < 0.0):
        raise DataValidationError("chi2_cdf requires x >= 0")
    return _as_float(special.gammainc(df / 2.0, x / 2.0))


def _check_dof(nu: int) -> int:
    if int(nu) != nu or nu < 1:
        raise DataValidationError(f"degrees of freedom must be a positive integer, got {nu}")
    return int(nu)


def student_t_cdf(x: ArrayLike, nu: int) -> ArrayLike:
    """
    t 分布函数 F_ν(x)，走不完全贝塔函数路线：

        F_ν(x) = 1 − ½·I_{ν/(ν+x²)}(ν/2, ½)   (x ≥ 0)，负半轴由对称性得到。
    """
    nu = _check_dof(nu)
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)):
        raise DataValidationError("student_t_cdf requires non-NaN input")
    with np.errstate(divide='ignore', invalid='ignore'):
        tail = 0.5 * special.betainc(nu / 2.0, 0.5, nu / (nu + x * x))
    tail = np.where(np.isinf(x), 0.0, tail)
    return _as_float(np.where(x >= 0.0, 1.0 - tail, tail))


def student_t_quantile(p: ArrayLike, nu: int) -> ArrayLike:
    """t 分布分位数"""
    nu = _check_dof(nu)
    p = np.asarray(p, dtype=float)
    _check_probability(p)
    return _as_float(special.stdtrit(nu, p))


def _check_binomial(y: np.ndarray, n: int, p: np.ndarray) -> None:
    if int(n) != n or n < 0:
        raise DataValidationError(f"binomial size must be a nonnegative integer, got {n}")
    if np.any(y != np.floor(y)) or np.any((y < 0) | (y > n)):
        raise DataValidationError(f"binomial outcome must be an integer in [0, {n}]")
    _check_probability(p)


def binomial_pmf(y: ArrayLike, n: int, p: ArrayLike) -> ArrayLike:
    """二项概率 b(y; n, p)，在对数空间用 log-gamma 计算"""
    y = np.asarray(y, dtype=float)
    p = np.asarray(p, dtype=float)
    _check_binomial(y, n, p)
    log_choose = special.gammaln(n + 1.0) - special.gammaln(y + 1.0) - special.gammaln(n - y + 1.0)
    log_pmf = log_choose + special.xlogy(y, p) + special.xlog1py(n - y, -p)
    return _as_float(np.exp(log_pmf))


def binomial_cdf(y: ArrayLike, n: int, p: ArrayLike) -> ArrayLike:
    """
    二项分布函数 B(y; n, p) = Σ_{j≤y} b(j; n, p)

    支持 y 为标量、p 为数组（按 p 广播）。y = n 时精确返回 1。
    """
    y_arr = np.asarray(y, dtype=float)
    p_arr = np.asarray(p, dtype=float)
    _check_binomial(y_arr, n, p_arr)
    if y_arr.ndim != 0:
        return np.array([binomial_cdf(float(v), n, p_arr) for v in y_arr.ravel()]).reshape(
            y_arr.shape + p_arr.shape)
    y_int = int(y_arr)
    if y_int >= n:
        return _as_float(np.ones_like(p_arr))
    j = np.arange(y_int + 1, dtype=float)
    pmf = binomial_pmf(j, n, p_arr[..., None]) if p_arr.ndim else binomial_pmf(j, n, p_arr)
    total = np.sum(pmf, axis=-1)
    return _as_float(np.clip(total, 0.0, 1.0))


class RandomStream:
    """
    可复现的随机流

    基于 numpy ``SeedSequence``：同一主种子与同一键得到同一子流，
    与调度顺序无关。
    """

    def __init__(self, seed: int = 0, key: tuple = ()):
        if int(seed) != seed or seed < 0 or seed >= 2 ** 64:
            raise DataValidationError(f"seed must be an integer in [0, 2^64), got {seed}")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        self.generator = np.random.Generator(np.random.PCG64(sequence))

    def spawn(self, key: int) -> 'RandomStream':
        """派生按键确定的独立子流"""
        return RandomStream(self.seed, self.key + (int(key),))

    def poisson(self, mean: ArrayLike, size=None) -> np.ndarray:
        """泊松抽样"""
        mean_arr = np.asarray(mean, dtype=float)
        if np.any(~np.isfinite(mean_arr)) or np.any(mean_arr < 0):
            raise DataValidationError("poisson mean must be finite and >= 0")
        return self.generator.poisson(mean_arr, size=size)

    def binomial(self, n: ArrayLike, p: ArrayLike, size=None) -> np.ndarray:
        """二项抽样"""
        n_arr = np.asarray(n)
        p_arr = np.asarray(p, dtype=float)
        if np.any(n_arr < 0) or np.any(n_arr != np.floor(n_arr)):
            raise DataValidationError("binomial size must be a nonnegative integer")
        _check_probability(p_arr)
        return self.generator.binomial(n_arr.astype(np.int64), p_arr, size=size)

    def uniform(self, size=None) -> ArrayLike:
        """[0, 1) 均匀抽样"""
        return self.generator.random(size=size)

    def normal(self, loc: ArrayLike = 0.0, scale: ArrayLike = 1.0, size=None) -> np.ndarray:
        """正态抽样"""
        if np.any(np.asarray(scale) < 0):
            raise DataValidationError("normal scale must be >= 0")
        return self.generator.normal(loc, scale, size=size)

    def exponential(self, scale: ArrayLike = 1.0, size=None) -> np.ndarray:
        """指数抽样（scale 为均值）"""
        if np.any(np.asarray(scale) <= 0):
            raise DataValidationError("exponential scale must be > 0")
        return self.generator.exponential(scale, size=size)

    def multivariate_normal(self, mean, cov, size=None) -> np.ndarray:
        """多元正态抽样"""
        return self.generator.multivariate_normal(mean, cov, size=size)


# 便捷采样函数
def poisson_sampler(stream: RandomStream, mean: float, size=None):
    """泊松采样器"""
    return stream.poisson(mean, size=size)


def binomial_sampler(stream: RandomStream, n: int, p: float, size=None):
    """二项采样器"""
    return stream.binomial(n, p, size=size)


def uniform_sampler(stream: RandomStream, size=None):
    """均匀采样器"""
    return stream.uniform(size=size)
