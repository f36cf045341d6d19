"""BHHJ 幂散度估计与稳健置信曲线"""

import math

import numpy as np
import pytest

from confcurve.core.error_handler import DataValidationError, MethodNotApplicableError
from confcurve.inference.cd_core import level_set_region
from confcurve.inference.models import BinormalModel, ExponentialModel, NormalModel
from confcurve.inference.prob_kernels import RandomStream
from confcurve.inference.robust_divergence import (
    DivergenceConfig, bhhj_criterion, bhhj_estimate, downweight_factors, estimating_residual,
    k_factor, likelihood_k_factor, likelihood_sandwich_analysis, power_integral, robust_analysis,
    simulate_robust_coverage, tuning_from_downweight
)


@pytest.fixture
def contaminated():
    clean = RandomStream(31).normal(0.0, 1.0, size=60)
    return np.concatenate([clean, [12.0, 14.0, 15.0]])


class TestTuning:

    def test_ten_percent_in_two_dimensions(self):
        assert tuning_from_downweight(0.10, 2) == pytest.approx(0.10536, abs=1e-5)

    def test_one_dimension(self):
        assert tuning_from_downweight(0.5, 1) == pytest.approx(2.0 * math.log(2.0))

    @pytest.mark.parametrize('fraction,dim', [(0.0, 2), (1.0, 2), (0.1, 0), (0.1, 1.5)])
    def test_invalid(self, fraction, dim):
        with pytest.raises(DataValidationError):
            tuning_from_downweight(fraction, dim)

    def test_config_validation(self):
        with pytest.raises(DataValidationError):
            DivergenceConfig(0.0)
        with pytest.raises(DataValidationError):
            DivergenceConfig(0.1, integral_mode='monte-carlo')


class TestCriterion:

    def test_quadrature_matches_closed_form(self):
        theta = np.array([0.3, 1.4])
        closed = power_integral(NormalModel(), theta, DivergenceConfig(0.2), 1)
        numeric = power_integral(NormalModel(), theta, DivergenceConfig(0.2, 'quadrature'), 1)
        assert numeric == pytest.approx(closed, rel=1e-8)

    def test_box_dimension_mismatch(self):
        config = DivergenceConfig(0.1, 'quadrature', box=((-5.0, 5.0), (-5.0, 5.0)))
        with pytest.raises(DataValidationError):
            power_integral(NormalModel(), np.array([0.0, 1.0]), config, 1)

    def test_out_of_bounds_is_infinite(self):
        assert bhhj_criterion(NormalModel(), np.zeros(3), DivergenceConfig(0.1), [0.0, -1.0]) == math.inf

    def test_no_closed_form(self):
        with pytest.raises(MethodNotApplicableError):
            bhhj_criterion(ExponentialModel(), np.ones(3), DivergenceConfig(0.1), [1.0])


class TestEstimate:

    def test_resists_outliers(self, contaminated):
        fit = bhhj_estimate(NormalModel(), contaminated, DivergenceConfig(0.5))
        assert abs(fit.theta[0]) < 0.3
        assert contaminated.mean() > 0.5
        assert fit.residual_norm < 1e-3

    def test_small_tuning_is_close_to_mle(self):
        y = RandomStream(32).normal(1.0, 2.0, size=200)
        fit = bhhj_estimate(NormalModel(), y, DivergenceConfig(0.01))
        np.testing.assert_allclose(fit.theta, [y.mean(), y.std()], atol=0.05)

    def test_residual_vanishes_at_estimate(self, contaminated):
        config = DivergenceConfig(0.5)
        fit = bhhj_estimate(NormalModel(), contaminated, config)
        residual = estimating_residual(NormalModel(), contaminated, config, fit.theta)
        assert np.linalg.norm(residual) == pytest.approx(fit.residual_norm)

    def test_empty_data(self):
        with pytest.raises(DataValidationError):
            bhhj_estimate(NormalModel(), np.array([]), DivergenceConfig(0.1))


class TestWeights:

    def test_mode_has_unit_weight(self):
        weights = downweight_factors(NormalModel(), np.array([2.0, 2.0 + 10.0]), [2.0, 1.0], 0.5)
        assert weights[0] == pytest.approx(1.0)
        assert weights[1] == pytest.approx(math.exp(-25.0))

    def test_average_point_gets_target_weight(self):
        # 平方马氏距离为 2 的点，权重为 1 − 0.10
        a = tuning_from_downweight(0.10, 2)
        point = np.array([[1.0, 1.0]])
        weights = downweight_factors(BinormalModel(), point, [0.0, 0.0, 1.0, 1.0, 0.0], a)
        assert weights[0] == pytest.approx(0.9)

    def test_model_without_mode(self):
        with pytest.raises(MethodNotApplicableError):
            downweight_factors(ExponentialModel(), np.ones(3), [1.0], 0.1)


class TestKFactor:

    def test_likelihood_limit_for_normal_mean(self):
        # μ 方向上 K 与 J 相同，只剩自由度修正 n/(n − p)
        y = RandomStream(33).normal(0.0, 1.0, size=100)
        model = NormalModel()
        k = likelihood_k_factor(model, y, [y.mean(), y.std()], model.focus_map('mu'))
        assert k == pytest.approx(100 / 98, abs=1e-3)

    def test_needs_more_observations_than_parameters(self):
        model = NormalModel()
        y = np.array([0.3, -1.2])
        with pytest.raises(DataValidationError):
            likelihood_k_factor(model, y, [y.mean(), y.std()], model.focus_map('mu'))

    def test_bhhj_k_is_positive(self, contaminated):
        model = NormalModel()
        config = DivergenceConfig(0.3)
        fit = bhhj_estimate(model, contaminated, config)
        assert k_factor(model, contaminated, config, fit.theta, model.focus_map('mu')) > 0


class TestAnimals:

    @pytest.fixture
    def grid(self):
        return np.linspace(-0.2, 0.995, 240)

    def test_maximum_likelihood_curve(self, animals_loglog, grid, serial):
        result = likelihood_sandwich_analysis(BinormalModel(), animals_loglog, 'rho', grid, serial)
        assert result.deviance.mle_focus == pytest.approx(0.779, abs=0.005)
        assert result.a is None
        assert result.k > 0

    @pytest.mark.slow
    def test_bhhj_curve(self, animals_loglog, grid, serial):
        config = DivergenceConfig(0.105)
        result = robust_analysis(BinormalModel(), animals_loglog, config, 'rho', grid, serial)
        assert result.deviance.mle_focus == pytest.approx(0.819, abs=0.01)
        region = level_set_region(result.cc, 0.90)
        assert region.lower == pytest.approx(0.441, abs=0.02)
        assert region.upper == pytest.approx(0.955, abs=0.02)
        assert result.as_dict()['a'] == 0.105


class TestRobustCoverage:

    @pytest.mark.slow
    def test_roughly_uniform_under_the_model(self):
        report = simulate_robust_coverage(NormalModel(), [0.0, 1.0], DivergenceConfig(0.2), 'mu',
                                          n=50, reps=200, seed=1)
        assert report.coverage[0.9] == pytest.approx(0.9, abs=0.07)
