"""
似然族命令：pivot-cd、wilks-cc、bartlett-cc、coverage-sim
"""

import math

import numpy as np
import pandas as pd

from ..core.config import RunConfig
from ..core.error_handler import ConfigError, MethodNotApplicableError, log_info
from ..inference.cd_core import normal_approx_cd
from ..inference.likelihood_engine import (
    bartlett_factor, coverage_simulate, deviance_curve, maximize_likelihood,
    normal_approx_summary, wilks_cc
)
from ..inference.models import model_with_theta, MODEL_COLUMNS
from .command_strategy import CommandContext, CommandResult, CommandStrategy


class PivotCDStrategy(CommandStrategy):
    """pivot-cd：精确枢轴量 CD 或一阶正态近似"""

    name = 'pivot-cd'

    def uses_seed(self) -> bool:
        return False

    def execute(self, config: RunConfig, context: CommandContext) -> CommandResult:
        model, data = self.load_model_data(config, context)
        focus = self.focus_for(model, config)
        mle = maximize_likelihood(model, data, starts=config.multistart)
        psi_hat, se = normal_approx_summary(model, data, focus, mle)
        grid = self.build_grid(config, psi_hat, se, focus)

        if config.method == 'normal-approx':
            n = model.sample_size(data)
            cd = normal_approx_cd(psi_hat, se * math.sqrt(n), n, grid, focus.label)
        else:
            cd = model.pivot_cd(data, focus.label, grid)

        summary = self.summarize_cd(cd, config.levels)
        summary.update({'method': config.method or 'pivot', 'mle': psi_hat, 'std_error': se})
        return CommandResult(cd.to_frame(), summary, list(cd.notes))


class WilksCCStrategy(CommandStrategy):
    """wilks-cc：剖面偏差的 Γ₁ 映射"""

    name = 'wilks-cc'

    def uses_seed(self) -> bool:
        return False

    def bartlett(self, model, data, focus, mle, config, context) -> float:
        return 1.0

    def execute(self, config: RunConfig, context: CommandContext) -> CommandResult:
        model, data = self.load_model_data(config, context)
        focus = self.focus_for(model, config)
        mle = maximize_likelihood(model, data, starts=config.multistart)
        psi_hat, se = normal_approx_summary(model, data, focus, mle)
        grid = self.build_grid(config, psi_hat, se, focus)

        dev = deviance_curve(model, data, focus, grid, processor=context.processor, mle=mle)
        factor = self.bartlett(model, data, focus, mle, config, context)
        cc = wilks_cc(dev, factor)

        summary = self.summarize_cc(cc, config.levels)
        summary.update({'mle': dev.mle_focus, 'max_loglik': dev.max_loglik,
                        'bartlett_factor': factor})
        return CommandResult(cc.to_frame(), summary, list(cc.notes))


class BartlettCCStrategy(WilksCCStrategy):
    """bartlett-cc：Bartlett 因子在 θ̂ 处由参数自助法估计"""

    name = 'bartlett-cc'

    def uses_seed(self) -> bool:
        return True

    def bartlett(self, model, data, focus, mle, config, context) -> float:
        factor = bartlett_factor(model, mle.theta, focus, model.sample_size(data),
                                 config.bootstrap_samples, config.seed, context.processor)
        log_info(f"Bartlett factor {factor:.5f} from {config.bootstrap_samples} replications")
        return factor


class CoverageSimStrategy(CommandStrategy):
    """coverage-sim：cc(ψ₀, Y) 均匀性与各水平覆盖率"""

    name = 'coverage-sim'

    def uses_seed(self) -> bool:
        return True

    def execute(self, config: RunConfig, context: CommandContext) -> CommandResult:
        if config.model not in MODEL_COLUMNS:
            raise ConfigError(f"unknown model '{config.model}'")
        design = None
        if config.input or config.fixture:
            _, design = self.load_model_data(config, context)
        model, theta0 = model_with_theta(config.model, config.true_params, design)
        focus = self.focus_for(model, config)
        if not model.has_simulator:
            raise MethodNotApplicableError(f"model '{model.name}' has no simulator")

        report = coverage_simulate(model, theta0, focus, config.method or 'wilks', config.reps,
                                   config.sample_size, config.seed,
                                   bartlett_replications=config.bootstrap_samples,
                                   processor=context.processor)
        frame = _coverage_frame(report.cc_values)
        summary = {'coverage_report': report.as_dict(), 'true_focus': focus(theta0)}
        return CommandResult(frame, summary)


def _coverage_frame(cc_values) -> pd.DataFrame:
    cc_values = np.asarray(cc_values, dtype=float)
    return pd.DataFrame({'replication': np.arange(1, cc_values.size + 1), 'cc': cc_values})
