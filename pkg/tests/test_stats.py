"""Unit tests for stats module."""
import math

import numpy as np
import pytest
from scipy import stats

from src.errors import InvalidArgumentError
from src.stats import bh_fdr_adjust, column_mean_ci95, mean_ci95, welch_t_test


class TestMeanCi95:
    def test_zero_variance(self):
        assert mean_ci95([5, 5, 5, 5]) == (5.0, 0.0)

    def test_five_samples(self):
        mean, half_width = mean_ci95([1, 2, 3, 4, 5])
        assert mean == 3.0
        # t(0.975, 4) = 2.7764, s = 1.5811
        assert half_width == pytest.approx(2.7764 * 1.5811 / math.sqrt(5), abs=1e-3)

    def test_two_samples(self):
        mean, half_width = mean_ci95([0, 2])
        assert mean == 1.0
        assert half_width == pytest.approx(12.7062, abs=1e-4)

    def test_needs_two_samples(self):
        with pytest.raises(InvalidArgumentError):
            mean_ci95([1.0])

    def test_rejects_nan(self):
        with pytest.raises(InvalidArgumentError):
            mean_ci95([1.0, float("nan")])

    @pytest.mark.parametrize("n", [10, 40, 160])
    def test_half_width_scales_with_root_n(self, n):
        samples = np.random.default_rng(n).normal(4.0, 2.0, size=n)
        _, half_width = mean_ci95(samples)
        assert half_width * math.sqrt(n) / stats.t.ppf(0.975, n - 1) == pytest.approx(samples.std(ddof=1))

    def test_columns_match_scalar_version(self):
        matrix = np.array([[1.0, 0.0], [2.0, 2.0], [3.0, 4.0], [4.0, 6.0], [5.0, 8.0]])
        means, half_widths = column_mean_ci95(matrix)
        for j in range(2):
            assert (means[j], half_widths[j]) == pytest.approx(mean_ci95(matrix[:, j]))


class TestWelchTTest:
    def test_identical_samples(self):
        t, p = welch_t_test([1, 2, 3], [1, 2, 3])
        assert t == 0.0
        assert p == pytest.approx(1.0)

    def test_shifted_samples(self):
        t, p = welch_t_test([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
        assert t == pytest.approx(-1.0)
        assert p == pytest.approx(0.3466, abs=1e-4)

    def test_swapping_groups_negates_t(self):
        a, b = [1.0, 2.5, 3.0], [4.0, 4.5, 7.0]
        t1, p1 = welch_t_test(a, b)
        t2, p2 = welch_t_test(b, a)
        assert t1 == pytest.approx(-t2)
        assert p1 == pytest.approx(p2)

    def test_widely_separated(self):
        _, p = welch_t_test([0, 0.1], [100, 100.1])
        assert p < 1e-3

    def test_zero_variance_equal_means(self):
        assert welch_t_test([2, 2], [2, 2, 2]) == (0.0, 1.0)

    def test_zero_variance_different_means(self):
        with pytest.raises(InvalidArgumentError):
            welch_t_test([1, 1], [3, 3])

    def test_needs_two_samples_per_group(self):
        with pytest.raises(InvalidArgumentError):
            welch_t_test([1], [1, 2])


class TestBhFdrAdjust:
    def test_step_up(self):
        assert bh_fdr_adjust([0.01, 0.02, 0.03]) == pytest.approx([0.03, 0.03, 0.03])

    def test_single(self):
        assert bh_fdr_adjust([0.5]) == [0.5]

    def test_no_signal(self):
        assert bh_fdr_adjust([1.0, 1.0]) == [1.0, 1.0]

    def test_keeps_input_order(self):
        q = bh_fdr_adjust([0.04, 0.001, 0.5, 0.02])
        # sorted p: 0.001, 0.02, 0.04, 0.5 -> 0.004, 0.04, 0.0533, 0.5
        assert q == pytest.approx([0.04 * 4 / 3, 0.004, 0.5, 0.04])

    def test_never_below_p(self):
        p = np.linspace(0.001, 0.9, 25)
        assert np.all(np.asarray(bh_fdr_adjust(p)) >= p)

    def test_empty(self):
        assert bh_fdr_adjust([]) == []

    @pytest.mark.parametrize("bad", [[-0.1], [1.5], [float("nan")]])
    def test_rejects_out_of_range(self, bad):
        with pytest.raises(InvalidArgumentError):
            bh_fdr_adjust(bad)
