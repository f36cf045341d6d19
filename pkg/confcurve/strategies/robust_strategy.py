"""
robust-cc 命令：BHHJ 稳健置信曲线
"""

from ..core.config import RunConfig
from ..core.error_handler import ConfigError, MethodNotApplicableError, log_info
from ..inference.likelihood_engine import maximize_likelihood, normal_approx_summary
from ..inference.robust_divergence import (
    DivergenceConfig, downweight_factors, robust_analysis, tuning_from_downweight, data_dim
)
from .command_strategy import CommandContext, CommandResult, CommandStrategy


class RobustCCStrategy(CommandStrategy):
    """robust-cc：调谐参数 a 直接给出，或由降权比例换算"""

    name = 'robust-cc'

    def uses_seed(self) -> bool:
        return False

    @staticmethod
    def tuning(config: RunConfig, dim: int) -> float:
        if config.tuning is not None:
            return float(config.tuning)
        if config.downweight is not None:
            return tuning_from_downweight(config.downweight, dim)
        raise ConfigError("robust-cc needs --a or --downweight")

    def execute(self, config: RunConfig, context: CommandContext) -> CommandResult:
        model, data = self.load_model_data(config, context)
        a = self.tuning(config, data_dim(data))
        divergence = DivergenceConfig(a, config.integral_mode)
        log_info(f"robust-cc with a = {a:.5f}")

        focus = self.focus_for(model, config)
        grid = config.grid.build()
        if grid is None:
            psi_hat, se = normal_approx_summary(model, data, focus, maximize_likelihood(model, data))
            grid = self.build_grid(config, psi_hat, 2.0 * se, focus)

        curve = robust_analysis(model, data, divergence, focus.label, grid, context.processor)
        summary = self.summarize_cc(curve.cc, config.levels)
        summary.update(curve.as_dict())
        try:
            summary['weights'] = downweight_factors(model, data, curve.theta_hat, a)
        except MethodNotApplicableError:
            pass
        return CommandResult(curve.cc.to_frame(), summary, list(curve.cc.notes))
