"""
CD 融合模块

两条路线：
  - 加权正态得分合并 C̄(ψ) = Φ(Σ wⱼ Φ⁻¹(Cⱼ(ψ)))，要求 Σ wⱼ² = 1；
  - II-CC-FF：每个来源的 CD 经正态转换成置信对数似然
    ℓ_c,j(ψ) = −½{Φ⁻¹(Cⱼ(ψ))}²，求和后对焦点 φ(ψ₁..ψ_k) 剖面，
    得到偏差、Wilks 置信曲线与还原的 CD。
"""

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import PchipInterpolator

from ..core.error_handler import ConfigError, DataValidationError, log_warning, log_info
from ..core.path_manager import PathManager
from ..core.csv_io import read_frame
from ..core.performance_optimizer import BatchProcessor
from .cd_core import CDGrid, cd_from_cc, clip_cd_values, read_cd_csv
from .expofam_conditional import studies_from_frame, study_optimal_cd
from .likelihood_engine import FocusMap, ParametricModel, deviance_curve, wilks_cc
from .optimizer import ParamBound
from .prob_kernels import chi2_1_quantile, std_normal_cdf, std_normal_quantile


CLIP_BOUND = 1e-12
FUSION_FOCI = ('common', 'difference', 'ratio')
FUSION_METHODS = ('iiccff', 'normal-combine')
ROUTE_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class StudySummary:
    """单个来源的 CD 与可选权重"""
    cd: CDGrid
    source_id: str
    weight: Optional[float] = None

    def __post_init__(self):
        if self.weight is not None and not (self.weight >= 0 and math.isfinite(self.weight)):
            raise DataValidationError(f"source {self.source_id}: weight must be finite and >= 0")


def normalized_weights(summaries: Sequence[StudySummary]) -> np.ndarray:
    """权重归一化到 Σ w² = 1；全部缺省时取 1/√k"""
    k = len(summaries)
    given = [s.weight for s in summaries]
    if all(w is None for w in given):
        return np.full(k, 1.0 / math.sqrt(k))
    if any(w is None for w in given):
        raise DataValidationError("either all sources carry a weight or none does")
    weights = np.asarray(given, dtype=float)
    norm = math.sqrt(float(np.sum(weights ** 2)))
    if norm == 0:
        raise DataValidationError("weights are all zero")
    return weights / norm


def normal_combine(summaries: Sequence[StudySummary], grid: Sequence[float],
                   focus_label: Optional[str] = None) -> CDGrid:
    """
    加权正态得分合并

    Raises:
        DataValidationError: 没有来源或权重非法
    """
    if not summaries:
        raise DataValidationError("normal_combine needs at least one source")
    grid = np.asarray(grid, dtype=float)
    weights = normalized_weights(summaries)
    score = np.zeros(grid.size)
    for summary, weight in zip(summaries, weights):
        values = clip_cd_values(summary.cd.evaluate(grid), CLIP_BOUND, context=summary.source_id)
        score += weight * std_normal_quantile(values)
    label = focus_label or summaries[0].cd.focus_label
    return CDGrid(grid, std_normal_cdf(score), focus_label=label)


@dataclass(frozen=True, eq=False)
class ConfidenceLogLik:
    """
    网格上的置信对数似然

    在正态得分 s(ψ) = Φ⁻¹(C(ψ)) 上做单调插值，网格外按端点斜率线性外推，
    ℓ_c = −½s² 因而处处有限且光滑。
    """
    focus_values: np.ndarray
    values: np.ndarray
    scores: np.ndarray
    focus_label: str = 'psi'
    source_id: str = ''

    @cached_property
    def _score_interpolator(self) -> PchipInterpolator:
        return PchipInterpolator(self.focus_values, self.scores, extrapolate=False)

    def _end_slopes(self) -> Tuple[float, float]:
        x, s = self.focus_values, self.scores
        left = (s[1] - s[0]) / (x[1] - x[0])
        right = (s[-1] - s[-2]) / (x[-1] - x[-2])
        return float(left), float(right)

    def score(self, psi: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        psi_arr = np.atleast_1d(np.asarray(psi, dtype=float))
        x, s = self.focus_values, self.scores
        out = np.asarray(self._score_interpolator(psi_arr), dtype=float)
        left, right = self._end_slopes()
        below, above = psi_arr < x[0], psi_arr > x[-1]
        out[below] = s[0] + left * (psi_arr[below] - x[0])
        out[above] = s[-1] + right * (psi_arr[above] - x[-1])
        return float(out[0]) if np.ndim(psi) == 0 else out

    def evaluate(self, psi: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        return -0.5 * np.square(self.score(psi))


def confidence_loglik(cd: CDGrid, source_id: str = '') -> ConfidenceLogLik:
    """
    正态转换 ℓ_c(ψ) = −½{Φ⁻¹(C(ψ))}²，与 −½Γ₁⁻¹(cc(ψ)) 两条路线交叉核对

    Raises:
        DataValidationError: 网格点少于 2 个
    """
    if len(cd) < 2:
        raise DataValidationError("confidence log-likelihood needs at least two grid points")
    values = clip_cd_values(cd.cd_values, CLIP_BOUND, context=source_id or 'CD')
    scores = std_normal_quantile(values)
    loglik = -0.5 * scores ** 2

    via_cc = -0.5 * chi2_1_quantile(np.abs(1.0 - 2.0 * values))
    gap = np.abs(loglik - via_cc) / np.maximum(1.0, np.abs(loglik))
    if np.max(gap) > ROUTE_TOLERANCE:
        log_warning(f"{source_id or 'CD'}: normal and chi-square conversions differ by "
                    f"{np.max(gap):.3g}")

    return ConfidenceLogLik(cd.focus_values, loglik, scores, cd.focus_label, source_id)


class CommonFocusModel(ParametricModel):
    """所有来源共享同一参数 ψ：ℓ_c(ψ) = Σ ℓ_c,j(ψ)"""

    name = 'fusion-common'
    param_names = ('psi',)
    bounds = (ParamBound.real(),)

    def __init__(self, sources: Sequence[ConfidenceLogLik]):
        self.sources = list(sources)

    def log_likelihood(self, theta, data=None) -> float:
        return float(sum(src.evaluate(float(theta[0])) for src in self.sources))

    def moment_seed(self, data=None) -> np.ndarray:
        medians = [src.focus_values[int(np.argmax(src.values))] for src in self.sources]
        return np.array([float(np.mean(medians))])

    def sample_size(self, data=None) -> int:
        return len(self.sources)


class JointFocusModel(ParametricModel):
    """各来源各自的参数 (ψ₁..ψ_k)：ℓ_c(ψ) = Σ ℓ_c,j(ψⱼ)"""

    name = 'fusion-joint'

    def __init__(self, sources: Sequence[ConfidenceLogLik], positive: bool = False):
        self.sources = list(sources)
        self.param_names = tuple(f"psi{j + 1}" for j in range(len(self.sources)))
        bound = ParamBound.positive() if positive else ParamBound.real()
        self.bounds = tuple(bound for _ in self.sources)

    def log_likelihood(self, theta, data=None) -> float:
        return float(sum(src.evaluate(float(t)) for src, t in zip(self.sources, theta)))

    def moment_seed(self, data=None) -> np.ndarray:
        return np.array([src.focus_values[int(np.argmax(src.values))] for src in self.sources])

    def sample_size(self, data=None) -> int:
        return len(self.sources)

    def focus_map(self, label: str) -> FocusMap:
        if label == 'difference':
            return FocusMap(map=lambda t: t[0] - t[1], label=label,
                            reduce=lambda phi, free: np.array([phi + free[0], free[0]]),
                            free_bounds=(self.bounds[1],),
                            free_from_theta=lambda t: np.array([t[1]]))
        if label == 'ratio':
            return FocusMap(map=lambda t: t[0] / t[1], label=label,
                            reduce=lambda phi, free: np.array([phi * free[0], free[0]]),
                            free_bounds=(ParamBound.positive(),),
                            free_from_theta=lambda t: np.array([t[1]]),
                            bound=ParamBound.positive())
        return self.coordinate_focus(label)


def _feasible_grid(grid: np.ndarray, focus: FocusMap) -> Tuple[np.ndarray, List[str]]:
    if focus.bound is None:
        return grid, []
    keep = np.array([focus.bound.contains(v) for v in grid])
    notes = []
    if not np.all(keep):
        notes.append(f"{int(np.sum(~keep))} infeasible {focus.label} value(s) excluded from the grid")
        log_warning(notes[-1])
    return grid[keep], notes


def iiccff_fuse(sources: Sequence[ConfidenceLogLik], focus: str, grid: Sequence[float],
                processor: Optional[BatchProcessor] = None) -> CDGrid:
    """
    II-CC-FF 融合：对 Σ ℓ_c,j 剖面，cc = Γ₁(偏差)，再还原 CD

    focus 取 common（共同参数）、difference（ψ₁ − ψ₂）或 ratio（ψ₁/ψ₂）。

    Raises:
        ConfigError: 未知焦点或来源个数不符
        NoUniqueCDError: 融合后的置信曲线非单峰
    """
    if not sources:
        raise DataValidationError("fusion needs at least one source")
    if focus not in FUSION_FOCI:
        raise ConfigError(f"unknown fusion focus '{focus}' (supported: {', '.join(FUSION_FOCI)})")
    grid = np.asarray(grid, dtype=float)

    if focus == 'common':
        model = CommonFocusModel(sources)
        focus_map = model.focus_map('psi')
    else:
        if len(sources) != 2:
            raise ConfigError(f"focus '{focus}' needs exactly two sources, got {len(sources)}")
        positive = focus == 'ratio'
        if positive and any(src.focus_values[0] <= 0 for src in sources):
            raise DataValidationError("ratio focus needs sources on a positive scale")
        model = JointFocusModel(sources, positive=positive)
        focus_map = model.focus_map(focus)

    grid, notes = _feasible_grid(grid, focus_map)
    if grid.size < 2:
        raise DataValidationError("no feasible focus values left on the grid")

    dev = deviance_curve(model, None, focus_map, grid, processor=processor)
    cc = wilks_cc(dev)
    cd = cd_from_cc(cc)
    label = sources[0].focus_label if focus == 'common' else focus
    log_info(f"fused {len(sources)} source(s) on focus '{focus}', estimate {cc.point_estimate:.6g}")
    return CDGrid(cd.focus_values, cd.cd_values, focus_label=label,
                  notes=tuple(notes) + dev.notes)


@dataclass
class FusionManifest:
    """多来源融合的清单"""
    summaries: List[StudySummary]
    focus: str = 'common'
    method: str = 'iiccff'
    notes: List[str] = field(default_factory=list)


def _paired_count_source(entry: Dict[str, Any], grid: np.ndarray,
                         paths: PathManager, cache: Dict[str, Any]) -> CDGrid:
    fixture = entry.get('fixture', 'lidocaine')
    if fixture not in cache:
        cache[fixture] = studies_from_frame(read_frame(paths.fixture_path(fixture)))
    studies = cache[fixture]
    row = entry.get('row')
    if not isinstance(row, int) or not 1 <= row <= len(studies):
        raise ConfigError(f"paired_counts row must be an integer in [1, {len(studies)}], got {row}")
    return study_optimal_cd(studies[row - 1], grid)


def load_fusion_manifest(path: Union[str, Path], grid: Sequence[float],
                         paths: Optional[PathManager] = None) -> FusionManifest:
    """
    读取融合清单 JSON

    {"focus": "common", "method": "iiccff",
     "sources": [{"id": "a", "cd_csv": "a.csv", "weight": 1.0},
                 {"id": "b", "paired_counts": {"fixture": "lidocaine", "row": 2}}]}

    cd_csv 相对清单所在目录解析；paired_counts 在 grid 上计算单研究最优 CD。

    Raises:
        ConfigError: 清单缺失、格式错误或字段非法
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"fusion manifest not found: {path}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid fusion manifest {path}: {e}") from e

    sources = raw.get('sources')
    if not isinstance(sources, list) or not sources:
        raise ConfigError("fusion manifest needs a non-empty 'sources' list")
    focus = raw.get('focus', 'common')
    method = raw.get('method', 'iiccff')
    if focus not in FUSION_FOCI:
        raise ConfigError(f"unknown fusion focus '{focus}'")
    if method not in FUSION_METHODS:
        raise ConfigError(f"unknown fusion method '{method}'")

    paths = paths or PathManager()
    grid = np.asarray(grid, dtype=float)
    cache: Dict[str, Any] = {}
    summaries = []
    for i, entry in enumerate(sources, start=1):
        if not isinstance(entry, dict):
            raise ConfigError(f"source {i} must be an object")
        source_id = str(entry.get('id', i))
        if 'cd_csv' in entry:
            csv_path = Path(entry['cd_csv'])
            if not csv_path.is_absolute():
                csv_path = path.parent / csv_path
            cd = read_cd_csv(csv_path, focus_label=entry.get('focus_label', 'psi'))
        elif 'paired_counts' in entry:
            cd = _paired_count_source(entry['paired_counts'], grid, paths, cache)
        else:
            raise ConfigError(f"source {source_id} needs 'cd_csv' or 'paired_counts'")
        weight = entry.get('weight')
        summaries.append(StudySummary(cd, source_id, None if weight is None else float(weight)))

    return FusionManifest(summaries, focus, method)


def fuse_manifest(manifest: FusionManifest, grid: Sequence[float],
                  processor: Optional[BatchProcessor] = None) -> CDGrid:
    """按清单指定的方法融合"""
    if manifest.method == 'normal-combine':
        if manifest.focus != 'common':
            raise ConfigError("normal-combine only supports the common focus")
        return normal_combine(manifest.summaries, grid)
    sources = [confidence_loglik(s.cd, s.source_id) for s in manifest.summaries]
    return iiccff_fuse(sources, manifest.focus, grid, processor)
