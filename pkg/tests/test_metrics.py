import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from annealed_langevin.metrics import (HistogramSpec, KlReport, bin_masses, convolution_lsi_surrogate,
                                       default_histogram_spec, empirical_histogram, histogram_kl,
                                       histogram_kl_estimate, marginal_kl, moment_report, theory_bound)
from annealed_langevin.targets import GaussianMixture, random_mixture

SPEC_1D = HistogramSpec.uniform(-4, 4, 200)


def naive_bound(c_lsi, h, tau, kl0, c):
    """Literal double loop over the bound's terms."""
    k = len(h) - 1
    rate = [2 * h[j] / c_lsi(tau[j]) for j in range(k + 1)]

    def S(m):
        return sum(rate[j] for j in range(m, k + 1))

    total = kl0 * math.exp(-S(1))
    for m in range(1, k + 1):
        total += c * math.exp(-S(m)) * abs(tau[m] - tau[m - 1])
    for m in range(1, k + 1):
        total += c * h[m] ** 2 * math.exp(-S(m + 1))
    return total + c * tau[k]


class TestHistogramKl:
    def test_direct_sample_floor(self, mix1d):
        kl = histogram_kl(mix1d.sample(5000, 0), mix1d, SPEC_1D)
        assert 0 < kl <= 0.05

    def test_single_bin(self):
        target = GaussianMixture([1.0], [[0.0]], [[1.0]])
        spec = HistogramSpec.uniform(-1, 1, 4)
        q = bin_masses(target, spec)
        x = np.full((100, 1), 0.1)
        assert histogram_kl(x, target, spec) == pytest.approx(math.log(1 / q[2]), rel=1e-12)

    def test_shifted_gaussian(self):
        x = np.random.default_rng(0).normal(1.0, 1.0, size=(200_000, 1))
        target = GaussianMixture([1.0], [[0.0]], [[1.0]])
        assert histogram_kl(x, target, HistogramSpec.uniform(-5, 7, 240)) == pytest.approx(0.5, abs=0.03)

    def test_bin_masses_sum(self, mix1d):
        assert bin_masses(mix1d, SPEC_1D).sum() == pytest.approx(1.0, abs=1e-6)

    def test_out_of_range_warning(self, mix1d):
        x = np.concatenate([mix1d.sample(900, 1), np.full((100, 1), 10.0)])
        with pytest.warns(RuntimeWarning, match="outside the histogram range"):
            histogram_kl(x, mix1d, SPEC_1D)
        assert histogram_kl_estimate(x, mix1d, SPEC_1D).out_of_range == pytest.approx(0.1)

    def test_edge_clamping(self):
        p, oor = empirical_histogram(np.array([[-9.0], [9.0], [0.1]]), HistogramSpec.uniform(-1, 1, 2))
        np.testing.assert_allclose(p, [1 / 3, 2 / 3])
        assert oor == pytest.approx(2 / 3)

    def test_2d(self, mix2d):
        kl = histogram_kl(mix2d.sample(20_000, 3), mix2d)
        assert 0 < kl < 0.5

    def test_rejects_high_dim(self):
        g = random_mixture(3, seed=0)
        with pytest.raises(ValueError):
            histogram_kl(g.sample(10, 0), g, HistogramSpec.uniform(-1, 1, 10, dim=3))

    def test_concentrates(self, mix1d):
        def med(n):
            return np.median([histogram_kl(mix1d.sample(n, s), mix1d, SPEC_1D) for s in range(10)])
        assert med(10_000) <= med(2_500)

    def test_report_validates(self):
        with pytest.raises(ValueError):
            KlReport(0, 1.0, float("nan"), "histogram")
        with pytest.raises(ValueError):
            KlReport(0, 1.0, -0.1, "histogram")

    def test_default_spec(self, mix1d):
        spec = default_histogram_spec(mix1d)
        assert spec.bins == (200,) and spec.ranges[0] == pytest.approx((-3.2, 3.2))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            HistogramSpec.uniform(1, 0, 10)
        with pytest.raises(ValueError):
            HistogramSpec.uniform(0, 1, 2000, dim=2)


class TestMarginal:
    def test_one_dim_equals_full(self, mix1d):
        x = mix1d.sample(3000, 4)
        assert marginal_kl(x, mix1d, 0, SPEC_1D) == histogram_kl(x, mix1d, SPEC_1D)

    def test_product_normal(self):
        g = GaussianMixture([1.0], [np.zeros(10)], [np.ones(10)])
        x = g.sample(20_000, 5)
        for i in range(10):
            assert marginal_kl(x, g, i) <= 0.05

    def test_shifted_axis(self):
        g = GaussianMixture([1.0], [np.zeros(10)], [np.ones(10)])
        x = g.sample(100_000, 6)
        x[:, 0] += 1.0
        spec = HistogramSpec.uniform(-6, 7, 260)
        assert marginal_kl(x, g, 0, spec) == pytest.approx(0.5, abs=0.05)
        assert marginal_kl(x, g, 1, spec) <= 0.05

    def test_permutation_equivariant(self):
        g = random_mixture(4, seed=2)
        perm = [2, 0, 3, 1]
        gp = GaussianMixture(g.weights, g.means[:, perm], g.variances[:, perm])
        x = g.sample(5000, 1)
        spec = HistogramSpec.uniform(-5, 5, 100)
        for j, i in enumerate(perm):
            assert marginal_kl(x[:, perm], gp, j, spec) == marginal_kl(x, g, i, spec)


class TestTheoryBound:
    def test_matches_naive_sum(self):
        rng = np.random.default_rng(0)
        h = rng.uniform(0, 0.01, 1000)
        tau = np.sort(rng.uniform(0, 1, 1000))[::-1]
        c_lsi = lambda t: 1.0 + np.asarray(t)
        assert theory_bound(c_lsi, h, tau, 2.0, 0.7) == pytest.approx(
            naive_bound(lambda t: 1.0 + t, h, tau, 2.0, 0.7), rel=1e-12)

    def test_constant_schedule_geometric_sum(self):
        h, C, K = 0.01, 2.0, 1000
        hs = np.full(K + 1, h)
        val = theory_bound(lambda t: C, hs, np.zeros(K + 1), 0.0, 1.0)
        q = math.exp(-2 * h / C)
        assert val == pytest.approx(h**2 * (1 - q**K) / (1 - q), rel=1e-12)

    def test_single_step(self):
        h = np.array([0.0, 0.1])
        tau = np.array([0.3, 0.3])
        val = theory_bound(lambda t: 2.0, h, tau, 1.5, 0.5)
        assert val == pytest.approx(1.5 * math.exp(-0.1) + 0.5 * 0.01 + 0.5 * 0.3, rel=1e-14)

    def test_zero_steps(self):
        tau = np.array([1.0, 0.6, 0.5, 0.1])
        val = theory_bound(lambda t: 1.0, np.zeros(4), tau, 0.8, 2.0)
        assert val == pytest.approx(0.8 + 2.0 * 0.9 + 2.0 * 0.1, rel=1e-14)

    def test_rejects_nonpositive_lsi(self):
        with pytest.raises(ValueError):
            theory_bound(lambda t: 0.0 * t, np.ones(3), np.zeros(3), 1.0)

    def test_surrogate(self, mix1d):
        c = convolution_lsi_surrogate(mix1d)
        assert c(1.0) == pytest.approx(2.0) and c(0.0) == pytest.approx(0.18)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 50), st.floats(0.1, 5.0), st.floats(1.0, 3.0), st.integers(0, 10**6))
def test_bound_monotone_in_lsi(k, c0, factor, seed):
    rng = np.random.default_rng(seed)
    h = rng.uniform(0, 0.5, k + 1)
    tau = np.sort(rng.uniform(0, 1, k + 1))[::-1]
    small = theory_bound(lambda t: c0 * (1 + 0 * t), h, tau, 1.0)
    large = theory_bound(lambda t: factor * c0 * (1 + 0 * t), h, tau, 1.0)
    assert large >= small * (1 - 1e-12)


class TestMoments:
    def test_normal(self):
        x = np.random.default_rng(0).normal(size=(10_000, 2))
        m, _ = moment_report(x)
        assert np.all(np.abs(m) < 3 / 100)

    def test_constant(self):
        _, cov = moment_report(np.ones((10, 2)))
        np.testing.assert_array_equal(cov, 0)

    def test_mixture_mean(self, mix1d):
        m, _ = moment_report(mix1d.sample(20_000, 8))
        assert abs(m[0]) < 3 * math.sqrt(mix1d.covariance()[0, 0] / 20_000)
