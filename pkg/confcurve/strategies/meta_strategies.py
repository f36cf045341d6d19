"""
多研究命令：optimal-cd、fuse、tau-cd
"""

from pathlib import Path

import numpy as np

from ..core.config import RunConfig
from ..core.error_handler import ConfigError, log_info
from ..inference.cd_core import cc_from_cd
from ..inference.expofam_conditional import (
    combined_optimal_cd, combined_optimal_cd_exact, default_gamma_grid, studies_from_frame
)
from ..inference.fusion import fuse_manifest, load_fusion_manifest
from ..inference.likelihood_engine import deviance_curve, maximize_likelihood, wilks_cc
from ..inference.meta_random_effects import (
    default_tau_grid, demography_effects, effects_from_frame, load_demography, tau_cd
)
from ..inference.models import NormalRandomEffectsModel
from .command_strategy import CommandContext, CommandResult, CommandStrategy


class OptimalCDStrategy(CommandStrategy):
    """optimal-cd：配对泊松的条件最优合并 CD"""

    name = 'optimal-cd'

    def uses_seed(self) -> bool:
        return True

    def execute(self, config: RunConfig, context: CommandContext) -> CommandResult:
        studies = studies_from_frame(self.load_frame(config, context))
        grid = config.grid.build()
        if grid is None:
            grid = default_gamma_grid(config.grid.points)

        summary = {'studies': len(studies), 'total_events': sum(s.z for s in studies)}
        if config.exact:
            cd = combined_optimal_cd_exact(studies, grid)
            summary['construction'] = 'exact convolution'
        else:
            result = combined_optimal_cd(studies, grid, config.mc_samples, config.seed,
                                         config.mc_tolerance, context.processor)
            cd = result.cd
            summary.update({'construction': 'monte carlo',
                            'mc_samples': result.mc_samples,
                            'mc_max_std_error': result.max_std_error,
                            'mc_std_errors': result.std_errors,
                            'raw_cd': result.raw_values})

        summary.update(self.summarize_cd(cd, config.levels))
        if cd.lower_bound <= 1.0 <= cd.upper_bound:
            summary['cd_at_one'] = cd.evaluate(1.0)
        log_info(f"optimal CD median {summary['point_estimate']:.4f}")
        return CommandResult(cd.to_frame(), summary, list(cd.notes))


class FuseStrategy(CommandStrategy):
    """fuse：按清单融合多个来源的 CD"""

    name = 'fuse'

    def uses_seed(self) -> bool:
        return False

    def execute(self, config: RunConfig, context: CommandContext) -> CommandResult:
        if config.manifest:
            manifest_path = Path(config.manifest)
        elif config.fixture:
            manifest_path = context.paths.fixture_path(config.fixture)
        else:
            raise ConfigError("fuse needs --manifest or --fixture")

        grid = config.grid.build()
        if grid is None:
            grid = default_gamma_grid(config.grid.points)
        manifest = load_fusion_manifest(manifest_path, grid, context.paths)
        if config.method:
            manifest.method = config.method
        if config.focus:
            manifest.focus = config.focus

        cd = fuse_manifest(manifest, grid, context.processor)
        summary = self.summarize_cd(cd, config.levels)
        summary.update({'method': manifest.method, 'focus': manifest.focus,
                        'sources': [s.source_id for s in manifest.summaries]})
        return CommandResult(cd.to_frame(), summary, list(cd.notes))


class TauCDStrategy(CommandStrategy):
    """tau-cd：随机效应离散度 τ 的枢轴量 CD 或 Wilks 曲线"""

    name = 'tau-cd'

    def uses_seed(self) -> bool:
        return False

    def _effects(self, config: RunConfig, context: CommandContext):
        if not config.input and config.fixture == 'demography':
            frame = load_demography(context.paths.fixture_path('demography'))
            return demography_effects(frame, config.subset or 'female')
        return effects_from_frame(self.load_frame(config, context))

    def execute(self, config: RunConfig, context: CommandContext) -> CommandResult:
        effects = self._effects(config, context)
        grid = config.grid.build()
        if grid is None:
            grid = default_tau_grid(effects, config.grid.points)
        summary = {'k': effects.k, 'estimates': effects.estimates,
                   'std_errors': effects.std_errors, 'labels': list(effects.labels)}

        if config.method == 'wilks':
            table = np.column_stack([effects.estimates, effects.std_errors])
            model = NormalRandomEffectsModel(table)
            focus = model.focus_map('tau')
            mle = maximize_likelihood(model, table, starts=config.multistart)
            dev = deviance_curve(model, table, focus, grid, context.processor, mle)
            cc = wilks_cc(dev)
            summary.update(self.summarize_cc(cc, config.levels))
            return CommandResult(cc.to_frame(), summary, list(cc.notes))

        cd = tau_cd(effects, grid)
        summary.update(self.summarize_cd(cd, config.levels))
        summary['cc_point_estimate'] = cc_from_cd(cd).point_estimate
        return CommandResult(cd.to_frame(), summary, list(cd.notes))
