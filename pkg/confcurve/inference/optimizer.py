"""
优化模块

带边界的多起点极大化：先用 Nelder-Mead 单纯形法，再用 BFGS 抛光。
有界坐标通过光滑双射映射到无约束空间（正数取 log，区间取 tanh），
闭下界（如 τ ≥ 0）在边界上单独求一次最优并比较，保证边界最优诚实可达。
"""

import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from ..core.error_handler import OptimizationError, DataValidationError, log_debug
from .prob_kernels import RandomStream


# 内层优化容差：目标 1e-9，参数 1e-8
XATOL = 1e-8
FATOL = 1e-9
GTOL = 1e-7
# 内点最优的梯度范数上限（自然坐标，数值微分）
GRAD_TOL = 1e-6
NEWTON_STEPS = 8

_PENALTY = 1e300
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class ParamBound:
    """
    参数坐标的取值范围

    kind: real (−∞, ∞)、positive (0, ∞)、nonnegative [0, ∞)、interval (lower, upper)
    """
    kind: str = 'real'
    lower: float = -math.inf
    upper: float = math.inf

    @classmethod
    def real(cls) -> 'ParamBound':
        return cls('real')

    @classmethod
    def positive(cls) -> 'ParamBound':
        return cls('positive', 0.0)

    @classmethod
    def nonnegative(cls) -> 'ParamBound':
        return cls('nonnegative', 0.0)

    @classmethod
    def interval(cls, lower: float, upper: float) -> 'ParamBound':
        return cls('interval', lower, upper)

    @property
    def closed_lower(self) -> bool:
        return self.kind == 'nonnegative'

    def contains(self, value: float) -> bool:
        if self.kind == 'real':
            return math.isfinite(value)
        if self.kind == 'positive':
            return value > 0
        if self.kind == 'nonnegative':
            return value >= 0
        return self.lower < value < self.upper

    def to_free(self, value: float) -> float:
        """约束坐标 → 无约束坐标"""
        if self.kind == 'real':
            return float(value)
        if self.kind in ('positive', 'nonnegative'):
            return math.log(max(value, 1e-12))
        width = self.upper - self.lower
        t = 2.0 * (value - self.lower) / width - 1.0
        return math.atanh(min(max(t, -1.0 + 1e-12), 1.0 - 1e-12))

    def from_free(self, u: float) -> float:
        """无约束坐标 → 约束坐标"""
        if self.kind == 'real':
            return float(u)
        if self.kind in ('positive', 'nonnegative'):
            return math.exp(min(u, 700.0))
        return self.lower + (self.upper - self.lower) * (math.tanh(u) + 1.0) / 2.0

    def clip_to_interior(self, value: float) -> float:
        if self.kind in ('positive', 'nonnegative'):
            return max(value, 1e-8)
        if self.kind == 'interval':
            margin = 1e-8 * (self.upper - self.lower)
            return min(max(value, self.lower + margin), self.upper - margin)
        return value


@dataclass(frozen=True)
class OptimizationResult:
    """极大化结果"""
    theta: np.ndarray
    value: float
    grad_norm: float
    starts: int = 1
    at_boundary: Tuple[int, ...] = ()


def numerical_gradient(func: Callable[[np.ndarray], float], x: Sequence[float],
                       steps: Optional[np.ndarray] = None) -> np.ndarray:
    """中心差分梯度，步长 eps^{1/3}·max(|x|, 1)"""
    x = np.asarray(x, dtype=float)
    if steps is None:
        steps = _EPS ** (1.0 / 3.0) * np.maximum(np.abs(x), 1.0)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = steps[i]
        grad[i] = (func(x + e) - func(x - e)) / (2.0 * steps[i])
    return grad


def numerical_hessian(func: Callable[[np.ndarray], float], x: Sequence[float]) -> np.ndarray:
    """中心差分 Hessian，步长 eps^{1/4}·max(|x|, 1)，结果对称化"""
    x = np.asarray(x, dtype=float)
    h = _EPS ** 0.25 * np.maximum(np.abs(x), 1.0)
    d = x.size
    hess = np.empty((d, d))
    f0 = func(x)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h[i]
        hess[i, i] = (func(x + ei) - 2.0 * f0 + func(x - ei)) / h[i] ** 2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h[j]
            value = (func(x + ei + ej) - func(x + ei - ej)
                     - func(x - ei + ej) + func(x - ei - ej)) / (4.0 * h[i] * h[j])
            hess[i, j] = hess[j, i] = value
    return hess


class _FreeProblem:
    """固定部分坐标后、在无约束空间上的负目标函数"""

    def __init__(self, objective: Callable[[np.ndarray], float], bounds: Sequence[ParamBound],
                 template: np.ndarray, fixed: Dict[int, float]):
        self.objective = objective
        self.bounds = list(bounds)
        self.template = np.array(template, dtype=float)
        for i, value in fixed.items():
            self.template[i] = value
        self.free_index = [i for i in range(len(self.bounds)) if i not in fixed]

    def theta(self, u: np.ndarray) -> np.ndarray:
        theta = self.template.copy()
        for k, i in enumerate(self.free_index):
            theta[i] = self.bounds[i].from_free(u[k])
        return theta

    def free(self, theta: np.ndarray) -> np.ndarray:
        return np.array([self.bounds[i].to_free(theta[i]) for i in self.free_index])

    def __call__(self, u: np.ndarray) -> float:
        try:
            value = self.objective(self.theta(u))
        except (ValueError, FloatingPointError, OverflowError, ZeroDivisionError):
            return _PENALTY
        if value is None or not np.isfinite(value):
            return _PENALTY
        return -float(value)


def _local_search(problem: _FreeProblem, u0: np.ndarray) -> Tuple[np.ndarray, float]:
    """Nelder-Mead 后接 BFGS 抛光，取两者中更好的点"""
    dim = u0.size
    with np.errstate(all='ignore'):
        simplex = minimize(problem, u0, method='Nelder-Mead',
                           options={'xatol': XATOL, 'fatol': FATOL,
                                    'maxiter': 2000 * dim, 'maxfev': 4000 * dim,
                                    'adaptive': dim > 2})
        best_u, best_f = simplex.x, simplex.fun
        polish = minimize(problem, best_u, method='BFGS', options={'gtol': GTOL})
    if np.isfinite(polish.fun) and polish.fun <= best_f:
        best_u, best_f = polish.x, polish.fun
    return best_u, best_f


def _finite_objective(objective: Callable[[np.ndarray], float]) -> Callable[[np.ndarray], float]:
    def safe(theta):
        try:
            value = objective(theta)
        except (ValueError, FloatingPointError, OverflowError, ZeroDivisionError):
            return -math.inf
        return -math.inf if value is None or not np.isfinite(value) else float(value)
    return safe


def _inner_steps(x: np.ndarray, bounds: Sequence[ParamBound]) -> np.ndarray:
    """差分步长，截断到不越过坐标边界"""
    steps = _EPS ** (1.0 / 3.0) * np.maximum(np.abs(x), 1.0)
    for k, b in enumerate(bounds):
        room = min(x[k] - b.lower, b.upper - x[k])
        if math.isfinite(room):
            steps[k] = min(steps[k], 0.5 * room)
    return steps


def _newton_polish(objective: Callable[[np.ndarray], float], theta: np.ndarray,
                   free_now: Sequence[int],
                   bounds: Sequence[ParamBound]) -> Tuple[np.ndarray, float, float]:
    """
    自然坐标上的阻尼 Newton 迭代，把内点梯度压到 GRAD_TOL 以下

    Returns:
        (θ, 目标值, 梯度范数)；梯度无法计算时范数为 inf
    """
    theta = np.array(theta, dtype=float)
    free_now = list(free_now)
    free_bounds = [bounds[i] for i in free_now]
    safe = _finite_objective(objective)

    def restricted(x):
        full = theta.copy()
        full[free_now] = x
        return safe(full)

    def gradient(x):
        grad = numerical_gradient(restricted, x, _inner_steps(x, free_bounds))
        return grad, float(np.linalg.norm(grad)) if np.all(np.isfinite(grad)) else math.inf

    x = theta[free_now].copy()
    value = restricted(x)
    with np.errstate(all='ignore'):
        for _ in range(NEWTON_STEPS):
            grad, grad_norm = gradient(x)
            if grad_norm <= GRAD_TOL or not math.isfinite(grad_norm):
                break
            try:
                step = -np.linalg.solve(numerical_hessian(restricted, x), grad)
            except np.linalg.LinAlgError:
                break
            # 只接受上升方向
            if not np.all(np.isfinite(step)) or grad @ step <= 0:
                break
            for shrink in 0.5 ** np.arange(7):
                candidate = x + shrink * step
                if not all(b.contains(c) for b, c in zip(free_bounds, candidate)):
                    continue
                candidate_value = restricted(candidate)
                if candidate_value >= value:
                    x, value = candidate, candidate_value
                    break
            else:
                break
        else:
            _, grad_norm = gradient(x)
    theta[free_now] = x
    return theta, value, grad_norm


def maximize(objective: Callable[[np.ndarray], float], bounds: Sequence[ParamBound],
             seed_theta: Sequence[float], starts: int = 5,
             fixed: Optional[Dict[int, float]] = None,
             check_boundary: bool = True, spread: float = 0.5) -> OptimizationResult:
    """
    多起点带边界极大化

    Args:
        objective: θ → 目标值（对数似然等），非有限值视为不可行
        bounds: 各坐标的取值范围
        seed_theta: 起点（矩估计或相邻网格点的解）
        starts: 起点数，首个为 seed_theta，其余在无约束空间按 spread 扰动
        fixed: 固定坐标 {索引: 值}
        check_boundary: 对闭下界坐标额外在边界上求最优并比较

    Raises:
        OptimizationError: 所有起点都得不到有限目标值
    """
    fixed = dict(fixed or {})
    seed_theta = np.array(seed_theta, dtype=float)
    if seed_theta.size != len(bounds):
        raise DataValidationError("seed dimension does not match the parameter bounds")
    for i, value in fixed.items():
        if not (bounds[i].contains(value)):
            raise DataValidationError(f"fixed value {value} is outside the bounds of coordinate {i}")
    seed_theta = np.array([b.clip_to_interior(v) if i not in fixed else v
                           for i, (b, v) in enumerate(zip(bounds, seed_theta))])

    problem = _FreeProblem(objective, bounds, seed_theta, fixed)

    if not problem.free_index:
        value = -problem(np.empty(0))
        if value == -_PENALTY:
            raise OptimizationError("objective is not finite at the fixed point",
                                    problem.template, None)
        return OptimizationResult(problem.template, value, 0.0, 0, tuple(fixed))

    u0 = problem.free(seed_theta)
    # 多起点固定在同一子流上，保证可复现
    stream = RandomStream(0, (len(u0), starts))
    candidates = [u0] + [u0 + spread * stream.normal(size=u0.size) for _ in range(starts - 1)]

    best_u, best_f = None, _PENALTY
    for u_start in candidates:
        if problem(u_start) >= _PENALTY:
            continue
        u, f = _local_search(problem, u_start)
        if f < best_f:
            best_u, best_f = u, f

    if best_u is None:
        raise OptimizationError("no start produced a finite objective", seed_theta, None)

    theta = problem.theta(best_u)
    value = -best_f
    at_boundary = tuple(fixed)

    if check_boundary:
        for i in problem.free_index:
            if not bounds[i].closed_lower:
                continue
            try:
                edge = maximize(objective, bounds, theta, starts=1,
                                fixed={**fixed, i: bounds[i].lower}, check_boundary=False)
            except OptimizationError:
                continue
            # 内点解从内侧逼近边界时目标值只差舍入误差
            if edge.value >= value - FATOL * max(1.0, abs(value)):
                log_debug(f"optimum at the boundary of coordinate {i}")
                theta, value = edge.theta, edge.value
                at_boundary = edge.at_boundary

    free_now = [i for i in range(len(bounds)) if i not in at_boundary]
    grad_norm = 0.0
    if free_now:
        theta, value, grad_norm = _newton_polish(objective, theta, free_now, bounds)

    if not grad_norm <= GRAD_TOL:
        raise OptimizationError(f"optimizer did not converge: gradient norm {grad_norm:.3g} "
                                f"exceeds {GRAD_TOL:g} after {len(candidates)} starts",
                                theta, value)
    return OptimizationResult(theta, value, grad_norm, len(candidates), at_boundary)


def maximize_constrained(objective: Callable[[np.ndarray], float], bounds: Sequence[ParamBound],
                         constraint: Callable[[np.ndarray], float],
                         seed_theta: Sequence[float]) -> OptimizationResult:
    """
    等式约束 constraint(θ) = 0 下的极大化（SLSQP）

    用于没有坐标或约化参数化的一般焦点函数。
    """
    box = []
    for b in bounds:
        if b.kind == 'real':
            box.append((None, None))
        elif b.kind == 'nonnegative':
            box.append((0.0, None))
        elif b.kind == 'positive':
            box.append((1e-10, None))
        else:
            margin = 1e-10 * (b.upper - b.lower)
            box.append((b.lower + margin, b.upper - margin))

    def negative(theta):
        value = objective(theta)
        return _PENALTY if not np.isfinite(value) else -value

    seed = np.array([b.clip_to_interior(v) for b, v in zip(bounds, seed_theta)])
    with np.errstate(all='ignore'):
        result = minimize(negative, seed, method='SLSQP', bounds=box,
                          constraints=[{'type': 'eq', 'fun': constraint}],
                          options={'ftol': FATOL, 'maxiter': 500})
    if not np.isfinite(result.fun) or result.fun >= _PENALTY or abs(constraint(result.x)) > 1e-6:
        raise OptimizationError("constrained profile did not converge: " + str(result.message),
                                result.x, -result.fun)
    return OptimizationResult(np.asarray(result.x), -float(result.fun), math.nan, 1)
