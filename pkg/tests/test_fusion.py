"""CD 融合：正态得分合并、置信对数似然与 II-CC-FF"""

import json

import numpy as np
import pytest
from scipy import stats

from confcurve.core.error_handler import ConfigError, DataValidationError
from confcurve.inference.cd_core import CDGrid, cc_from_cd, normal_approx_cd, write_curve_csv
from confcurve.inference.expofam_conditional import (
    combined_optimal_cd_exact, studies_from_frame
)
from confcurve.inference.fusion import (
    StudySummary, confidence_loglik, fuse_manifest, iiccff_fuse, load_fusion_manifest,
    normal_combine, normalized_weights
)
from confcurve.inference.prob_kernels import RandomStream, std_normal_cdf
from confcurve.reproduce import sup_cc_gap


def gaussian_cd(mean: float, sd: float, grid=None) -> CDGrid:
    grid = np.linspace(-6.0, 6.0, 241) if grid is None else np.asarray(grid)
    return CDGrid(grid, std_normal_cdf((grid - mean) / sd))


class TestNormalCombine:

    def test_single_source_is_identity(self):
        cd = gaussian_cd(0.5, 1.2)
        combined = normal_combine([StudySummary(cd, 'a')], cd.focus_values)
        np.testing.assert_allclose(combined.cd_values, cd.cd_values, atol=1e-12)

    def test_equal_weights(self):
        grid = np.linspace(-3.0, 3.0, 61)
        summaries = [StudySummary(gaussian_cd(0.0, 1.0), 'a'), StudySummary(gaussian_cd(0.0, 1.0), 'b')]
        combined = normal_combine(summaries, grid)
        np.testing.assert_allclose(combined.cd_values, std_normal_cdf(np.sqrt(2.0) * grid),
                                   atol=1e-10)

    def test_weights_normalized(self):
        summaries = [StudySummary(gaussian_cd(0, 1), 'a', 3.0), StudySummary(gaussian_cd(0, 1), 'b', 4.0)]
        np.testing.assert_allclose(normalized_weights(summaries), [0.6, 0.8])

    def test_mixed_weights_rejected(self):
        summaries = [StudySummary(gaussian_cd(0, 1), 'a', 1.0), StudySummary(gaussian_cd(0, 1), 'b')]
        with pytest.raises(DataValidationError):
            normalized_weights(summaries)

    def test_negative_weight_rejected(self):
        with pytest.raises(DataValidationError):
            StudySummary(gaussian_cd(0, 1), 'a', -1.0)

    def test_no_sources(self):
        with pytest.raises(DataValidationError):
            normal_combine([], [0.0, 1.0])


class TestConfidenceLogLik:

    def test_reference_value(self):
        cd = CDGrid([0.0, 1.0, 2.0], [0.5, 0.975, 0.99])
        loglik = confidence_loglik(cd)
        assert loglik.values[0] == 0.0
        assert loglik.values[1] == pytest.approx(-1.920729, abs=1e-6)

    def test_linear_extrapolation(self):
        loglik = confidence_loglik(gaussian_cd(0.0, 1.0, np.linspace(-2.0, 2.0, 41)))
        assert loglik.score(3.0) == pytest.approx(3.0, abs=1e-6)
        assert loglik.evaluate(-3.0) == pytest.approx(-4.5, abs=1e-5)

    def test_interior_clipping_warns(self, fresh_error_handler):
        cd = CDGrid([0.0, 1.0, 2.0, 3.0], [0.0, 0.0, 0.5, 1.0])
        loglik = confidence_loglik(cd, 'degenerate')
        assert np.all(np.isfinite(loglik.values))
        assert fresh_error_handler.warning_count >= 1

    def test_needs_two_points(self):
        with pytest.raises(DataValidationError):
            confidence_loglik(CDGrid([0.0], [0.5]))


class TestIICCFF:

    def test_two_normal_sources_common_focus(self, serial):
        # 精度加权：ψ̂ = 0.8·1 + 0.2·(−1)，合并方差 0.8
        sources = [confidence_loglik(gaussian_cd(1.0, 1.0), 'a'),
                   confidence_loglik(gaussian_cd(-1.0, 2.0), 'b')]
        grid = np.linspace(-1.0, 2.0, 61)
        fused = iiccff_fuse(sources, 'common', grid, serial)
        expected = std_normal_cdf((fused.focus_values - 0.6) / np.sqrt(0.8))
        np.testing.assert_allclose(fused.cd_values, expected, atol=1e-5)

    def test_difference_focus(self, serial):
        sources = [confidence_loglik(gaussian_cd(1.0, 1.0), 'a'),
                   confidence_loglik(gaussian_cd(0.0, 1.0), 'b')]
        grid = np.linspace(-2.0, 4.0, 31)
        fused = iiccff_fuse(sources, 'difference', grid, serial)
        expected = std_normal_cdf((fused.focus_values - 1.0) / np.sqrt(2.0))
        np.testing.assert_allclose(fused.cd_values, expected, atol=1e-4)
        assert fused.focus_label == 'difference'

    def test_ratio_drops_infeasible_grid(self, serial):
        grid = np.linspace(0.5, 4.0, 36)
        sources = [confidence_loglik(gaussian_cd(2.0, 0.5, grid), 'a'),
                   confidence_loglik(gaussian_cd(1.5, 0.5, grid), 'b')]
        fused = iiccff_fuse(sources, 'ratio', np.linspace(-1.0, 5.0, 61), serial)
        assert fused.focus_values[0] > 0
        assert any('infeasible' in note for note in fused.notes)

    def test_two_source_foci_need_two_sources(self, serial):
        sources = [confidence_loglik(gaussian_cd(0.0, 1.0), str(i)) for i in range(3)]
        with pytest.raises(ConfigError):
            iiccff_fuse(sources, 'difference', [0.0, 1.0], serial)

    def test_unknown_focus(self, serial):
        with pytest.raises(ConfigError):
            iiccff_fuse([confidence_loglik(gaussian_cd(0.0, 1.0))], 'sum', [0.0, 1.0], serial)


class TestConversionProperties:

    def test_normal_cd_gives_quadratic_loglik(self):
        root = RandomStream(77)
        for i in range(1000):
            stream = root.spawn(i)
            psi_hat = float(stream.normal(0.0, 5.0))
            tau = 0.05 + 4.0 * float(stream.uniform())
            n = 1 + int(60 * stream.uniform())
            half_width = 4.0 * tau / np.sqrt(n)
            grid = psi_hat + half_width * np.linspace(-1.0, 1.0, 2 + int(80 * stream.uniform()))
            loglik = confidence_loglik(normal_approx_cd(psi_hat, tau, n, grid), f"case {i}")

            z = np.sqrt(n) * (grid - psi_hat) / tau
            np.testing.assert_allclose(loglik.values, -0.5 * z ** 2, atol=1e-9)
            inside = psi_hat + half_width * (2.0 * stream.uniform(size=5) - 1.0)
            z_inside = np.sqrt(n) * (inside - psi_hat) / tau
            np.testing.assert_allclose(loglik.evaluate(inside), -0.5 * z_inside ** 2, atol=1e-8)

    def test_reflection(self):
        grid = np.linspace(-2.0, 5.0, 141)
        values = stats.t.cdf((grid - 1.2) / 0.7, df=5)
        loglik = confidence_loglik(CDGrid(grid, values))
        mirrored = confidence_loglik(CDGrid(-grid[::-1], 1.0 - values[::-1]))

        np.testing.assert_allclose(mirrored.values[::-1], loglik.values, atol=1e-9)
        points = np.array([-3.0, -1.93, 0.0, 0.41, 1.2, 2.777, 4.99, 6.5])
        np.testing.assert_allclose(mirrored.evaluate(-points), loglik.evaluate(points), atol=1e-9)

    def test_monotone_reparametrization_of_sources(self, serial):
        grid = np.linspace(-1.5, 2.5, 801)
        cds = [gaussian_cd(0.3, 0.3, grid), gaussian_cd(0.5, 0.4, grid)]
        fused = iiccff_fuse([confidence_loglik(cd, f"s{j}") for j, cd in enumerate(cds)],
                            'common', grid, serial)
        # 同一批 CD 值搬到 φ = exp(ψ) 的网格上
        exp_sources = [confidence_loglik(CDGrid(np.exp(grid), cd.cd_values), f"e{j}")
                       for j, cd in enumerate(cds)]
        fused_exp = iiccff_fuse(exp_sources, 'common', np.exp(grid), serial)

        np.testing.assert_allclose(fused_exp.focus_values, np.exp(fused.focus_values))
        np.testing.assert_allclose(cc_from_cd(fused_exp).cc_values, cc_from_cd(fused).cc_values,
                                   atol=1e-3)
        assert cc_from_cd(fused_exp).point_estimate == pytest.approx(
            np.exp(cc_from_cd(fused).point_estimate), rel=1e-3)


class TestManifest:

    def test_lidocaine_manifest(self, paths, serial, lidocaine_frame):
        grid = np.linspace(0.5, 4.0, 141)
        manifest = load_fusion_manifest(paths.fixture_path('lidocaine-studies'), grid, paths)
        assert [s.source_id for s in manifest.summaries] == [f'study-{j}' for j in range(1, 7)]
        fused = fuse_manifest(manifest, grid, serial)
        exact = combined_optimal_cd_exact(studies_from_frame(lidocaine_frame), grid)
        assert sup_cc_gap(cc_from_cd(exact), cc_from_cd(fused)) <= 0.05

    def test_csv_sources_and_normal_combine(self, tmp_path, serial):
        grid = np.linspace(-3.0, 3.0, 61)
        write_curve_csv(tmp_path / 'a.csv', gaussian_cd(0.0, 1.0, grid))
        write_curve_csv(tmp_path / 'b.csv', gaussian_cd(0.0, 1.0, grid))
        manifest_path = tmp_path / 'manifest.json'
        manifest_path.write_text(json.dumps({
            'method': 'normal-combine',
            'sources': [{'id': 'a', 'cd_csv': 'a.csv'}, {'id': 'b', 'cd_csv': 'b.csv'}],
        }), encoding='utf-8')
        manifest = load_fusion_manifest(manifest_path, grid)
        fused = fuse_manifest(manifest, grid, serial)
        np.testing.assert_allclose(fused.cd_values, std_normal_cdf(np.sqrt(2.0) * grid), atol=1e-6)

    @pytest.mark.parametrize('content', [
        {'sources': []},
        {'focus': 'sum', 'sources': [{'id': 'a', 'cd_csv': 'a.csv'}]},
        {'sources': [{'id': 'a'}]},
        {'sources': [{'id': 'a', 'paired_counts': {'row': 9}}]},
    ])
    def test_invalid_manifests(self, tmp_path, paths, content):
        manifest_path = tmp_path / 'manifest.json'
        manifest_path.write_text(json.dumps(content), encoding='utf-8')
        with pytest.raises(ConfigError):
            load_fusion_manifest(manifest_path, [1.0, 2.0], paths)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(ConfigError):
            load_fusion_manifest(tmp_path / 'absent.json', [1.0, 2.0])
