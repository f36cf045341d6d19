"""命令策略：各命令的输出表格与摘要"""

import numpy as np
import pandas as pd
import pytest

from confcurve.core.config import ConfigManager
from confcurve.core.error_handler import ConfigError, FixtureMissingError, MethodNotApplicableError
from confcurve.inference.prob_kernels import RandomStream
from confcurve.strategies import (
    BartlettCCStrategy, CommandContext, CoverageSimStrategy, FuseStrategy, OptimalCDStrategy,
    PivotCDStrategy, QuantileCCStrategy, RobustCCStrategy, TauCDStrategy, WilksCCStrategy
)


@pytest.fixture
def context(paths, serial):
    return CommandContext(paths, serial)


@pytest.fixture
def sample_csv(tmp_path):
    path = tmp_path / 'sample.csv'
    pd.DataFrame({'y': RandomStream(41).normal(5.0, 2.0, size=15)}).to_csv(path, index=False)
    return path


@pytest.fixture
def exponential_csv(tmp_path):
    path = tmp_path / 'waiting.csv'
    pd.DataFrame({'y': RandomStream(42).exponential(0.5, size=6)}).to_csv(path, index=False)
    return path


@pytest.fixture
def effects_csv(tmp_path):
    path = tmp_path / 'effects.csv'
    pd.DataFrame({'group': ['a', 'b', 'c', 'd'], 'estimate': [0.10, 0.25, 0.18, 0.02],
                  'std_error': [0.05, 0.06, 0.04, 0.05]}).to_csv(path, index=False)
    return path


def configure(command, **overrides):
    return ConfigManager().build_config(command, {}, overrides)


class TestPivotCD:

    def test_student_pivot(self, context, sample_csv):
        y = pd.read_csv(sample_csv)['y']
        result = PivotCDStrategy().execute(configure('pivot-cd', input=str(sample_csv)), context)
        assert list(result.frame.columns) == ['focus', 'cd', 'cc']
        assert result.summary['point_estimate'] == pytest.approx(y.mean(), abs=0.05)
        assert result.summary['method'] == 'pivot'
        assert len(result.summary['intervals']) == 2

    def test_normal_approximation(self, context, sample_csv):
        config = configure('pivot-cd', input=str(sample_csv), method='normal-approx')
        result = PivotCDStrategy().execute(config, context)
        assert result.summary['method'] == 'normal-approx'
        assert result.summary['std_error'] > 0

    def test_model_without_pivot(self, context, tmp_path):
        path = tmp_path / 'counts.csv'
        pd.DataFrame({'y': [3, 5, 2, 4]}).to_csv(path, index=False)
        config = configure('pivot-cd', input=str(path), model='poisson-rate', focus='rate')
        with pytest.raises(MethodNotApplicableError):
            PivotCDStrategy().execute(config, context)

    def test_needs_data(self, context):
        with pytest.raises(ConfigError):
            PivotCDStrategy().execute(configure('pivot-cd'), context)


class TestWilksAndBartlett:

    def test_wilks_curve(self, context, sample_csv):
        result = WilksCCStrategy().execute(configure('wilks-cc', input=str(sample_csv)), context)
        assert result.summary['bartlett_factor'] == 1.0
        assert result.frame['cc'].min() == 0.0
        assert not WilksCCStrategy().uses_seed()

    def test_bartlett_factor_recorded(self, context, exponential_csv):
        config = configure('bartlett-cc', input=str(exponential_csv), bootstrap_samples=200)
        result = BartlettCCStrategy().execute(config, context)
        assert result.summary['bartlett_factor'] > 0
        assert BartlettCCStrategy().uses_seed()

    def test_explicit_grid(self, context, exponential_csv):
        config = configure('wilks-cc', input=str(exponential_csv), model='exponential',
                           focus='rate', grid={'lower': 0.5, 'upper': 5.0, 'points': 10})
        result = WilksCCStrategy().execute(config, context)
        assert result.frame['focus'].iloc[0] == 0.5
        assert len(result.frame) == 11


class TestCoverageSim:

    def test_replications_table(self, context):
        result = CoverageSimStrategy().execute(configure('coverage-sim', reps=40), context)
        assert list(result.frame.columns) == ['replication', 'cc']
        assert len(result.frame) == 40
        assert result.summary['true_focus'] == 0.0
        assert result.summary['coverage_report']['reps'] == 40

    def test_unknown_model(self, context):
        with pytest.raises(ConfigError):
            CoverageSimStrategy().execute(configure('coverage-sim', model='gamma'), context)


class TestMetaCommands:

    def test_exact_optimal_cd(self, context):
        config = configure('optimal-cd', exact=True,
                           grid={'lower': 0.5, 'upper': 4.0, 'points': 351, 'spacing': 'linear'})
        result = OptimalCDStrategy().execute(config, context)
        assert result.summary['construction'] == 'exact convolution'
        assert result.summary['cd_at_one'] == pytest.approx(0.021, abs=0.005)
        assert result.summary['point_estimate'] == pytest.approx(1.732, abs=0.03)

    def test_monte_carlo_optimal_cd(self, context):
        config = configure('optimal-cd', mc_samples=2000, grid={'points': 11})
        result = OptimalCDStrategy().execute(config, context)
        assert result.summary['mc_samples'] == 2000
        assert len(result.summary['mc_std_errors']) == 11

    def test_fuse_fixture(self, context):
        result = FuseStrategy().execute(configure('fuse', grid={'points': 81}), context)
        assert result.summary['sources'] == [f'study-{j}' for j in range(1, 7)]
        assert result.summary['method'] == 'iiccff'

    def test_fuse_method_override(self, context):
        config = configure('fuse', method='normal-combine', grid={'points': 81})
        result = FuseStrategy().execute(config, context)
        assert result.summary['method'] == 'normal-combine'

    def test_tau_pivot(self, context, effects_csv):
        result = TauCDStrategy().execute(configure('tau-cd', input=str(effects_csv)), context)
        assert result.frame['focus'].iloc[0] == result.frame['focus'].iloc[1] == 0.0
        assert result.frame['cd'].iloc[0] == 0.0
        assert result.summary['atom_at_lower_bound'] > 0
        assert result.summary['labels'] == ['a', 'b', 'c', 'd']

    def test_tau_wilks(self, context, effects_csv):
        config = configure('tau-cd', input=str(effects_csv), method='wilks')
        result = TauCDStrategy().execute(config, context)
        assert result.summary['point_estimate'] >= 0.0
        assert result.frame['focus'].iloc[0] == 0.0

    def test_tau_demography_missing(self, tmp_path, serial, monkeypatch):
        from confcurve.core.path_manager import PathManager
        monkeypatch.delenv('CONFCURVE_FIXTURE_DIR', raising=False)
        context = CommandContext(PathManager(tmp_path, tmp_path), serial)
        with pytest.raises(FixtureMissingError) as info:
            TauCDStrategy().execute(configure('tau-cd', fixture='demography'), context)
        assert 'country,sex,year,life_expectancy' in info.value.instructions


class TestQuantileCC:

    def test_panel(self, context, sample_csv):
        config = configure('quantile-cc', input=str(sample_csv), quantile_levels=[0.25, 0.5])
        result = QuantileCCStrategy().execute(config, context)
        assert list(result.frame.columns) == ['p', 'focus', 'cc']
        assert set(result.summary['quantiles']) == {'0.25', '0.5'}
        assert result.summary['n'] == 15


class TestRobustCC:

    def test_needs_tuning(self, context):
        config = configure('robust-cc')
        config.downweight = None
        with pytest.raises(ConfigError):
            RobustCCStrategy().execute(config, context)

    def test_tuning_from_downweight(self):
        config = configure('robust-cc')
        assert RobustCCStrategy.tuning(config, 2) == pytest.approx(0.10536, abs=1e-5)
        config.tuning = 0.3
        assert RobustCCStrategy.tuning(config, 2) == 0.3

    def test_normal_sample(self, context, sample_csv):
        config = configure('robust-cc', fixture=None, input=str(sample_csv), model='normal',
                           focus='mu', log_log=False, tuning=0.2,
                           grid={'lower': 3.0, 'upper': 7.0, 'points': 21})
        result = RobustCCStrategy().execute(config, context)
        assert result.summary['a'] == 0.2
        assert result.summary['k'] > 0
        assert len(result.summary['weights']) == 15
        assert np.all(np.asarray(result.summary['weights']) <= 1.0 + 1e-12)
