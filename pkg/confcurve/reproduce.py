"""
复现结果包

fig2、fig3、fig4、table1-study-cds：每条曲线写一个 focus,cd,cc CSV，
外加 checks.json 记录各项数值核对（期望值、观测值、容差、是否通过）。
"""

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

import numpy as np

from .core.config import ConfigManager, GridSpec, RunConfig
from .core.csv_io import read_frame
from .core.error_handler import ConfCurveError, error_context, handle_exception, log_error, \
    log_info, log_warning
from .core.path_manager import PathManager
from .core.performance_optimizer import BatchProcessor, set_max_workers
from .core.runner import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK
from .core.sidecar_exporter import SidecarExporter
from .inference.cd_core import (
    CDGrid, ConfidenceCurve, cc_from_cd, equi_tailed_interval, level_set_region, write_curve_csv
)
from .inference.expofam_conditional import (
    PairedCountStudy, combined_optimal_cd, default_gamma_grid, exact_conditional_value,
    studies_from_frame, study_optimal_cd
)
from .inference.fusion import fuse_manifest, load_fusion_manifest
from .inference.meta_random_effects import (
    default_tau_grid, demography_effects, load_demography, tau_cd
)
from .inference.models import MODEL_COLUMNS, build_model, dataset_from_frame
from .inference.prob_kernels import binomial_cdf
from .inference.robust_divergence import (
    DivergenceConfig, likelihood_sandwich_analysis, robust_analysis
)


ROBUST_TUNING = 0.105
FEMALE_SLOPES = (0.140, 0.162, 0.144)
BRACKET_TOLERANCE = 1e-12


@dataclass
class Check:
    """
    一项数值核对

    expected 为数值时按 |observed − expected| ≤ tolerance 判定，
    为 (下限, 上限) 时按区间判定。
    """
    name: str
    observed: Optional[float]
    expected: Union[float, tuple]
    tolerance: Optional[float] = None

    @property
    def passed(self) -> bool:
        if self.observed is None or not np.isfinite(self.observed):
            return False
        if isinstance(self.expected, tuple):
            lower, upper = self.expected
            return lower <= self.observed <= upper
        return abs(self.observed - self.expected) <= self.tolerance

    def as_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'observed': self.observed,
                'expected': list(self.expected) if isinstance(self.expected, tuple) else self.expected,
                'tolerance': self.tolerance, 'passed': self.passed}


def _slug(label: str) -> str:
    return re.sub(r'[^A-Za-z0-9_.-]+', '-', label).strip('-') or 'x'


def half_correction_violation(study: PairedCountStudy, cd: CDGrid) -> float:
    """C_j 落在 [1 − B(y1; z, q), 1 − B(y1 − 1; z, q)] 之外的最大距离"""
    if study.z == 0:
        return float(np.max(np.abs(cd.cd_values - 0.5)))
    q = study.q(cd.focus_values)
    lower = 1.0 - binomial_cdf(study.y1, study.z, q)
    upper = np.ones_like(q) if study.y1 == 0 else 1.0 - binomial_cdf(study.y1 - 1, study.z, q)
    gap = np.maximum(lower - cd.cd_values, cd.cd_values - upper)
    return float(max(0.0, np.max(gap)))


def sup_cc_gap(first: ConfidenceCurve, second: ConfidenceCurve) -> float:
    """两条曲线在公共网格范围上的最大差"""
    lower = max(first.focus_values[0], second.focus_values[0])
    upper = min(first.focus_values[-1], second.focus_values[-1])
    psi = first.focus_values[(first.focus_values >= lower) & (first.focus_values <= upper)]
    if psi.size == 0:
        return float('nan')
    return float(np.max(np.abs(first.evaluate(psi) - second.evaluate(psi))))


class BundleRunner:
    """复现结果包的运行器"""

    def __init__(self, config: RunConfig, fixture_dir: Optional[str] = None,
                 base_output_dir: str = '.'):
        self.config = config
        self.config_manager = ConfigManager()
        self.paths = PathManager(base_output_dir, fixture_dir)
        self.exporter = SidecarExporter(config)
        self.processor: Optional[BatchProcessor] = None
        self.files: List[str] = []
        self.bundles: Dict[str, Callable[[Path], List[Check]]] = {
            'fig2': self._fig2,
            'fig3': self._fig3,
            'fig4': self._fig4,
            'table1-study-cds': self._table1,
        }

    def run(self) -> int:
        """执行结果包；返回退出码（核对未通过只记警告，不改变退出码）"""
        validation = self.config_manager.validate_config(self.config)
        for warning in validation.warnings:
            log_warning(warning)
        if not validation.valid:
            for error in validation.errors:
                log_error(f"config: {error}")
            return EXIT_CONFIG

        try:
            self.reproduce(self.config.bundle)
        except ConfCurveError as e:
            return handle_exception(e, f"reproduce {self.config.bundle}")
        except (FloatingPointError, OverflowError, ZeroDivisionError, np.linalg.LinAlgError) as e:
            handle_exception(e, f"reproduce {self.config.bundle}")
            return EXIT_NUMERICAL
        return EXIT_OK

    def reproduce(self, bundle: str) -> Path:
        """生成结果包并返回 checks.json 路径"""
        self.processor = set_max_workers(self.config.threads)
        self.files = []
        out_dir = self.paths.create_output_dir(self.config.output)
        with error_context(f"reproduce {bundle}", seed=self.config.seed):
            checks = self.bundles[bundle](out_dir)

        for check in checks:
            if not check.passed:
                log_warning(f"{bundle}: check '{check.name}' failed "
                            f"(observed {check.observed}, expected {check.expected})")
        path = self.exporter.export_checks(out_dir, bundle, [c.as_dict() for c in checks],
                                           self.files)
        passed = sum(c.passed for c in checks)
        log_info(f"{bundle}: {len(self.files)} curves, {passed}/{len(checks)} checks passed")
        return path

    def _write(self, out_dir: Path, name: str, curve) -> None:
        path = write_curve_csv(out_dir / f"{name}.csv", curve)
        self.files.append(path.name)

    def _lidocaine(self) -> List[PairedCountStudy]:
        return studies_from_frame(read_frame(self.paths.fixture_path('lidocaine')))

    def _gamma_grid(self) -> np.ndarray:
        grid = self.config.grid.build()
        return default_gamma_grid(self.config.grid.points) if grid is None else grid

    def _study_curves(self, out_dir: Path, studies: List[PairedCountStudy],
                      grid: np.ndarray) -> List[Check]:
        checks = []
        for study in studies:
            cd = study_optimal_cd(study, grid)
            self._write(out_dir, f"study-{_slug(study.label)}", cd)
            checks.append(Check(f"study {study.label} half-correction bracket",
                                half_correction_violation(study, cd), 0.0, BRACKET_TOLERANCE))
        return checks

    def _table1(self, out_dir: Path) -> List[Check]:
        return self._study_curves(out_dir, self._lidocaine(), self._gamma_grid())

    def _fig2(self, out_dir: Path) -> List[Check]:
        studies = self._lidocaine()
        grid = self._gamma_grid()
        checks = self._study_curves(out_dir, studies, grid)

        result = combined_optimal_cd(studies, grid, self.config.mc_samples, self.config.seed,
                                     self.config.mc_tolerance, self.processor)
        combined = result.cd
        self._write(out_dir, 'combined', combined)
        cc = cc_from_cd(combined)
        at_one = float(combined.evaluate(1.0))
        interval = equi_tailed_interval(combined, 0.95)
        checks += [
            Check('combined point estimate', cc.point_estimate, 1.732, 0.03),
            Check('combined C(1)', at_one, 0.021, 0.005),
            Check('combined 0.95 lower endpoint', interval.lower, 1.023, 0.05),
            Check('combined 0.95 upper endpoint', interval.upper, 3.027, 0.05),
            Check('monte carlo against exact convolution at gamma = 1', at_one,
                  exact_conditional_value(studies, 1.0), max(3.0 * result.max_std_error, 1e-3)),
        ]

        # II-CC-FF 融合只参与核对，不单独成图
        manifest = load_fusion_manifest(self.paths.fixture_path('lidocaine-studies'), grid,
                                        self.paths)
        fused = fuse_manifest(manifest, grid, self.processor)
        checks.append(Check('fused against combined, sup cc gap',
                            sup_cc_gap(cc, cc_from_cd(fused)), 0.0, 0.05))
        return checks

    def _fig3(self, out_dir: Path) -> List[Check]:
        frame = load_demography(self.paths.fixture_path('demography'))
        checks = []
        for sex, atom_range in (('female', (0.01, 0.04)), ('male', (0.55, 0.66))):
            effects = demography_effects(frame, sex)
            cd = tau_cd(effects, default_tau_grid(effects, self.config.grid.points))
            self._write(out_dir, f"tau-{sex}", cd)
            checks.append(Check(f"{sex} atom at tau = 0", cd.atom_at_lower_bound, atom_range))
            if sex == 'female':
                for observed, expected in zip(sorted(effects.estimates), sorted(FEMALE_SLOPES)):
                    checks.append(Check('female slope', float(observed), expected, 0.002))
        return checks

    def _fig4(self, out_dir: Path) -> List[Check]:
        frame = read_frame(self.paths.fixture_path('animals'), MODEL_COLUMNS['binormal'])
        data = dataset_from_frame('binormal', frame, log_log=True)
        model = build_model('binormal', data)
        grid = self.config.grid.build()
        if grid is None:
            grid = GridSpec(**ConfigManager.PRESETS['robust-cc']['grid']).build()

        mle = likelihood_sandwich_analysis(model, data, 'rho', grid, self.processor)
        robust = robust_analysis(model, data, DivergenceConfig(ROBUST_TUNING, self.config.integral_mode),
                                 'rho', grid, self.processor)
        self._write(out_dir, 'mle-sandwich', mle.cc)
        self._write(out_dir, f"bhhj-a{ROBUST_TUNING:g}", robust.cc)

        region = level_set_region(robust.cc, 0.90)
        return [
            Check('maximum likelihood rho', mle.deviance.mle_focus, 0.779, 0.005),
            Check('bhhj rho at a = 0.105', robust.deviance.mle_focus, 0.819, 0.01),
            Check('bhhj 0.90 lower endpoint', None if region.is_empty else region.lower, 0.441, 0.02),
            Check('bhhj 0.90 upper endpoint', None if region.is_empty else region.upper, 0.955, 0.02),
        ]
