"""
quantile-cc 命令：次序统计量分位数置信曲线
"""

from ..core.config import RunConfig
from ..inference.nonparam_quantile import (
    OrderedSample, max_achievable_level, quantile_cc, quantile_panel, quantile_region
)
from .command_strategy import CommandContext, CommandResult, CommandStrategy


class QuantileCCStrategy(CommandStrategy):
    """quantile-cc：输出长表 p,focus,cc"""

    name = 'quantile-cc'

    def uses_seed(self) -> bool:
        return False

    def execute(self, config: RunConfig, context: CommandContext) -> CommandResult:
        frame = self.load_frame(config, context, ('y',))
        sample = OrderedSample.from_values(frame['y'].to_numpy(dtype=float))
        panel = quantile_panel(sample, config.quantile_levels, context.processor)

        per_p = {}
        notes = []
        for p in config.quantile_levels:
            curve = quantile_cc(sample, p, config.levels)
            regions = [quantile_region(sample, p, level).as_dict() for level in config.levels]
            per_p[f"{p:g}"] = {'point_estimate': curve.point_estimate, 'intervals': regions,
                               'max_achievable_level': max_achievable_level(sample.n, p)}
            notes.extend(f"p={p:g}: {note}" for note in curve.notes)

        summary = {'n': sample.n, 'ties_present': sample.ties_present, 'quantiles': per_p}
        return CommandResult(panel, summary, notes)
