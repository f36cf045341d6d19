"""置信分布与置信曲线的网格表示、互相转换与区间提取"""

import numpy as np
import pytest
from scipy import stats

from confcurve.core.error_handler import DataValidationError, NoUniqueCDError, TailRangeError
from confcurve.inference.cd_core import (
    CDGrid, ConfidenceCurve, cc_from_cd, cd_from_cc, cd_from_pivot, default_focus_grid,
    equi_tailed_interval, level_set_region, normal_approx_cd, read_cd_csv, student_pivot_cd,
    write_curve_csv
)
from confcurve.inference.prob_kernels import RandomStream, std_normal_cdf


def normal_cd(points: int = 801) -> CDGrid:
    grid = np.union1d(np.linspace(-4.0, 4.0, points), [-1.959964, 1.959964])
    return CDGrid(grid, std_normal_cdf(grid))


class TestCDGrid:

    def test_rejects_decreasing_values(self):
        with pytest.raises(DataValidationError):
            CDGrid([0.0, 1.0, 2.0], [0.1, 0.5, 0.4])

    def test_rejects_unsorted_grid(self):
        with pytest.raises(DataValidationError):
            CDGrid([0.0, 2.0, 1.0], [0.1, 0.2, 0.3])

    def test_atom_must_match_first_value(self):
        with pytest.raises(DataValidationError):
            CDGrid([0.0, 1.0], [0.2, 0.9], atom_at_lower_bound=0.3)

    def test_arrays_are_read_only(self):
        cd = CDGrid([0.0, 1.0], [0.2, 0.9])
        with pytest.raises(ValueError):
            cd.cd_values[0] = 0.5

    def test_evaluate_below_atom_is_zero(self):
        cd = CDGrid([0.0, 1.0, 2.0], [0.6, 0.8, 1.0], atom_at_lower_bound=0.6)
        assert cd.evaluate(-0.5) == 0.0
        assert cd.evaluate(0.0) == pytest.approx(0.6)

    def test_quantile_outside_support(self):
        cd = CDGrid(np.linspace(0.0, 1.0, 11), np.linspace(0.2, 0.8, 11))
        with pytest.raises(TailRangeError) as info:
            cd.quantile(0.9)
        assert info.value.achievable == pytest.approx((0.2, 0.8))


class TestCurveConversion:

    def test_median_maps_to_zero(self):
        cc = cc_from_cd(CDGrid([0.0, 1.0, 2.0], [0.2, 0.5, 0.975]))
        assert cc.cc_values[1] == 0.0
        assert cc.cc_values[2] == pytest.approx(0.95)
        assert cc.point_estimate == 1.0

    def test_normal_curve_at_reference_points(self):
        cd = normal_cd()
        cc = cc_from_cd(cd)
        assert cc.evaluate(1.959964) == pytest.approx(0.95, abs=1e-6)
        assert cc.evaluate(-1.959964) == pytest.approx(0.95, abs=1e-6)
        assert cc.point_estimate == pytest.approx(0.0, abs=1e-12)

    def test_median_off_grid_is_flagged(self):
        cc = cc_from_cd(CDGrid([0.0, 1.0, 2.0], [0.1, 0.2, 0.3]))
        assert cc.point_estimate == 2.0
        assert any('upper' in note for note in cc.notes)

    def test_single_point_curve(self):
        cd = cd_from_cc(ConfidenceCurve([3.0], [0.0], 3.0))
        assert cd.cd_values[0] == 0.5

    def test_v_shaped_curve(self):
        cd = cd_from_cc(ConfidenceCurve([1.0, 2.0, 3.0], [0.9, 0.0, 0.9], 2.0))
        np.testing.assert_allclose(cd.cd_values, [0.05, 0.5, 0.95])

    def test_multimodal_curve_has_no_cd(self):
        cc = ConfidenceCurve(np.arange(5.0), [0.9, 0.1, 0.6, 0.2, 0.9], 1.0)
        with pytest.raises(NoUniqueCDError):
            cd_from_cc(cc)

    def test_round_trip_on_student_cd(self):
        sample = np.array([1.2, -0.3, 0.8, 2.1, 0.4, 1.7])
        cd = student_pivot_cd(sample, np.linspace(-2.0, 4.0, 301))
        back = cd_from_cc(cc_from_cd(cd))
        np.testing.assert_allclose(back.cd_values, cd.cd_values, atol=1e-10)


class TestIntervals:

    def test_uniform_cd(self):
        grid = np.linspace(0.0, 1.0, 101)
        region = equi_tailed_interval(CDGrid(grid, grid), 0.90)
        assert region.lower == pytest.approx(0.05, abs=1e-10)
        assert region.upper == pytest.approx(0.95, abs=1e-10)

    def test_small_level_shrinks_to_median(self):
        cd = normal_cd()
        region = equi_tailed_interval(cd, 1e-6)
        assert region.lower == pytest.approx(0.0, abs=1e-5)
        assert region.upper == pytest.approx(0.0, abs=1e-5)

    def test_intervals_are_nested(self):
        cd = normal_cd()
        regions = [equi_tailed_interval(cd, level) for level in (0.5, 0.8, 0.9, 0.95, 0.99)]
        lowers = [r.lower for r in regions]
        uppers = [r.upper for r in regions]
        assert np.all(np.diff(lowers) < 0)
        assert np.all(np.diff(uppers) > 0)

    def test_boundary_atom_gives_one_sided_interval(self):
        atom = 0.603
        grid = np.linspace(0.0, 1.0, 101)
        cd = CDGrid(grid, atom + (1.0 - atom) * grid, atom_at_lower_bound=atom)
        region = equi_tailed_interval(cd, 0.90)
        assert region.lower == 0.0
        assert region.upper == pytest.approx((0.90 - atom) / (1.0 - atom), abs=1e-10)
        assert region.notes

    def test_tail_beyond_grid(self):
        cd = CDGrid(np.linspace(0.0, 1.0, 11), np.linspace(0.2, 0.8, 11))
        with pytest.raises(TailRangeError):
            equi_tailed_interval(cd, 0.90)

    def test_level_set_matches_equi_tailed_for_unimodal(self):
        cd = normal_cd(4001)
        region = level_set_region(cc_from_cd(cd), 0.90)
        interval = equi_tailed_interval(cd, 0.90)
        assert region.lower == pytest.approx(interval.lower, abs=1e-4)
        assert region.upper == pytest.approx(interval.upper, abs=1e-4)

    def test_w_shaped_curve_gives_two_segments(self):
        cc = ConfidenceCurve(np.arange(5.0), [1.0, 0.1, 0.9, 0.2, 1.0], 1.0)
        region = level_set_region(cc, 0.5)
        assert len(region.segments) == 2
        assert region.contains(1.0) and region.contains(3.0)
        assert not region.contains(2.0)

    def test_empty_region_is_flagged(self):
        cc = ConfidenceCurve([0.0, 1.0], [0.95, 0.97], 0.0)
        region = level_set_region(cc, 0.5)
        assert region.is_empty and region.notes


class TestConstructions:

    def test_student_pivot_reference_values(self):
        x = np.sqrt(3.0) / 2.0
        sample = np.array([-x, -x, x, x])
        cd = student_pivot_cd(sample, [-1.0, 0.0, 2.353363 / 2.0, 2.0])
        assert cd.cd_values[1] == pytest.approx(0.5, abs=1e-12)
        assert cd.cd_values[2] == pytest.approx(0.95, abs=1e-6)

    def test_non_monotone_pivot_rejected(self):
        with pytest.raises(DataValidationError):
            cd_from_pivot(lambda psi, _: -psi, std_normal_cdf, None, [0.0, 1.0, 2.0])

    def test_normal_approximation(self):
        grid = np.linspace(-3.0, 5.0, 2001)
        cd = normal_approx_cd(1.0, 2.0, 16, grid)
        assert cd.evaluate(1.0) == pytest.approx(0.5, abs=1e-9)
        assert cd.evaluate(1.0 + 1.644854 * 2.0 / 4.0) == pytest.approx(0.95, abs=1e-6)
        region = equi_tailed_interval(cd, 0.90)
        assert region.lower == pytest.approx(1.0 - 0.822427, abs=1e-5)
        assert region.upper == pytest.approx(1.0 + 0.822427, abs=1e-5)

    @pytest.mark.parametrize('tau', [0.0, -1.0])
    def test_normal_approximation_rejects_bad_scale(self, tau):
        with pytest.raises(DataValidationError):
            normal_approx_cd(0.0, tau, 10, [0.0, 1.0])

    def test_default_grid_truncated_to_bounds(self):
        grid = default_focus_grid(0.5, 1.0, points=11, lower_bound=0.0)
        assert grid[0] == 0.0 and grid.size == 11

    @pytest.mark.parametrize('n', [3, 10])
    def test_student_pivot_is_uniform_at_truth(self, n):
        root = RandomStream(20240, (1,))
        values = []
        for i in range(2000):
            sample = root.spawn(i).normal(2.0, 3.0, size=n)
            values.append(student_pivot_cd(sample, [2.0]).cd_values[0])
        assert stats.kstest(values, 'uniform').pvalue > 0.01


class TestCurveCsv:

    def test_round_trip_with_atom(self, tmp_path):
        grid = np.linspace(0.0, 1.0, 21)
        cd = CDGrid(grid, 0.3 + 0.7 * grid ** 2, atom_at_lower_bound=0.3, focus_label='tau')
        path = write_curve_csv(tmp_path / 'tau.csv', cd)
        lines = path.read_text().splitlines()
        assert lines[0] == 'focus,cd,cc'
        assert lines[1].startswith('0,0,1')
        back = read_cd_csv(path, focus_label='tau')
        np.testing.assert_array_equal(back.focus_values, cd.focus_values)
        np.testing.assert_array_equal(back.cd_values, cd.cd_values)
        assert back.atom_at_lower_bound == cd.atom_at_lower_bound

    def test_multimodal_curve_writes_empty_cd(self, tmp_path):
        cc = ConfidenceCurve(np.arange(5.0), [1.0, 0.1, 0.9, 0.2, 1.0], 1.0)
        path = write_curve_csv(tmp_path / 'cc.csv', cc)
        with pytest.raises(DataValidationError):
            read_cd_csv(path)


def random_cd(stream: RandomStream) -> CDGrid:
    """随机中心、尺度与非均匀网格上的正态近似或 Student-t CD"""
    center = float(stream.normal(0.0, 3.0))
    scale = 0.1 + 3.0 * float(stream.uniform())
    n = 2 + int(40 * stream.uniform())
    spread = 6.0 * scale / np.sqrt(n)
    points = 5 + int(150 * stream.uniform())
    grid = np.unique(center + spread * (2.0 * stream.uniform(size=points) - 1.0))
    if stream.uniform() < 0.5:
        return normal_approx_cd(center, scale, n, grid)
    return student_pivot_cd(stream.normal(center, scale, size=n + 1), grid)


class TestRandomizedConversions:

    def test_cd_survives_round_trip(self):
        root = RandomStream(404)
        for i in range(1000):
            cd = random_cd(root.spawn(i))
            back = cd_from_cc(cc_from_cd(cd))
            np.testing.assert_allclose(back.cd_values, cd.cd_values, atol=1e-10,
                                       err_msg=f"case {i}")

    def test_curve_survives_round_trip(self):
        root = RandomStream(405)
        for i in range(1000):
            cc = cc_from_cd(random_cd(root.spawn(i)))
            again = cc_from_cd(cd_from_cc(cc))
            np.testing.assert_allclose(again.cc_values, cc.cc_values, atol=1e-10,
                                       err_msg=f"case {i}")
            assert again.point_estimate == pytest.approx(cc.point_estimate, abs=1e-10)

    def test_curve_values_in_unit_interval(self):
        root = RandomStream(406)
        for i in range(1000):
            cc = cc_from_cd(random_cd(root.spawn(i)))
            assert np.all((cc.cc_values >= 0.0) & (cc.cc_values <= 1.0))
            assert cc.is_unimodal()
