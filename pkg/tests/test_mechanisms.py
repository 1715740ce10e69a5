import math

import mpmath as mp
import numpy as np
import pytest
from scipy import stats

from dpassort.errors import DegenerateChannelError, ParameterError, TestModeError, UnsupportedOrderError
from dpassort.mechanisms import (
    LaplaceParams,
    RngStream,
    RRParams,
    laplace_raw_moment,
    laplace_sample,
    rr_debias,
    rr_flip_prob,
    rr_perturb,
    tail_upper_bound,
    test_mode,
)


def laplace_moment_oracle(x, b, r):
    # numerical integral of t^r against the Laplace density
    mp.mp.dps = 30
    f = lambda t: t**r * mp.exp(-abs(t - x) / b) / (2 * b)
    return float(mp.quad(f, [-mp.inf, x, mp.inf]))


class TestRandomizedResponse:
    @pytest.mark.parametrize("eps", [0.0, 0.1, 1.0, 2.5, 10.0])
    def test_flip_prob(self, eps):
        assert rr_flip_prob(eps) == pytest.approx(1 / (math.e**eps + 1), rel=1e-14)

    def test_flip_prob_limits(self):
        assert rr_flip_prob(0.0) == 0.5
        assert rr_flip_prob(math.inf) == 0.0
        with pytest.raises(ParameterError):
            rr_flip_prob(-0.1)

    @pytest.mark.parametrize("eps", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("bit", [0, 1])
    def test_frequency(self, eps, bit):
        params = RRParams.from_epsilon(eps)
        out = rr_perturb(np.full(10**6, bit, dtype=np.int8), params, RngStream(seed=3, role=f"t{eps}{bit}"))
        flipped = np.mean(out != bit)
        assert abs(flipped - params.p) <= 0.003

    def test_debias_unbiased(self):
        p = rr_flip_prob(1.0)
        for bit in (0, 1):
            # expectation of the debiased output is the input bit
            expected = (1 - p) * rr_debias(bit, p) + p * rr_debias(1 - bit, p)
            assert expected == pytest.approx(bit, abs=1e-15)

    def test_debias_degenerate(self):
        with pytest.raises(DegenerateChannelError):
            rr_debias(1, 0.5)

    def test_rejects_non_bits(self):
        with pytest.raises(ParameterError):
            rr_perturb(np.array([0, 2]), RRParams.from_epsilon(1.0), RngStream(seed=0))

    def test_identity_requires_test_mode(self):
        with test_mode(False):
            with pytest.raises(TestModeError):
                RRParams.identity()
        with test_mode(True):
            bits = np.array([0, 1, 1, 0])
            assert rr_perturb(bits, RRParams.identity(), RngStream(seed=1)).tolist() == bits.tolist()


class TestLaplace:
    @pytest.mark.parametrize("x,b", [(0.0, 1.0), (3.0, 0.5), (-2.0, 2.0)])
    @pytest.mark.parametrize("r", range(0, 9))
    def test_raw_moment_formula(self, x, b, r):
        assert laplace_raw_moment(x, b, r) == pytest.approx(laplace_moment_oracle(x, b, r), rel=1e-10, abs=1e-10)

    def test_raw_moment_order_limit(self):
        with pytest.raises(UnsupportedOrderError):
            laplace_raw_moment(0.0, 1.0, 9)

    def test_sample_moments(self):
        b = 1.0
        x = laplace_sample(b, RngStream(seed=5, role="lap"), size=10**7)
        for r in (1, 2, 4):
            sample = x**r
            se = np.sqrt(laplace_raw_moment(0, b, 2 * r) - laplace_raw_moment(0, b, r) ** 2) / np.sqrt(x.size)
            assert abs(sample.mean() - laplace_raw_moment(0, b, r)) <= 3 * se
        assert abs(x.var() - 2.0) <= 0.02

    def test_sample_distribution(self):
        x = laplace_sample(0.7, RngStream(seed=6, role="ks"), size=200_000)
        assert stats.kstest(x, stats.laplace(scale=0.7).cdf).pvalue > 1e-3

    def test_zero_scale(self):
        assert laplace_sample(0.0, RngStream(seed=1), size=3).tolist() == [0.0, 0.0, 0.0]
        with test_mode(False):
            with pytest.raises(TestModeError):
                LaplaceParams(0.0)

    def test_deterministic(self):
        a = laplace_sample(1.0, RngStream(seed=9, role="degree"), size=10)
        b = laplace_sample(1.0, RngStream(seed=9, role="degree"), size=10)
        c = laplace_sample(1.0, RngStream(seed=9, role="rr"), size=10)
        assert np.array_equal(a, b) and not np.array_equal(a, c)

    def test_tail_bound_coverage(self):
        b, delta = 2.0, 0.05
        noise = laplace_sample(b, RngStream(seed=7, role="tail"), size=10**6)
        covered = np.mean(tail_upper_bound(noise, b, delta) >= 0)
        se = math.sqrt(delta * (1 - delta) / noise.size)
        assert covered >= 1 - delta - 3 * se
        # the bound is exact: the miss probability equals delta
        assert abs(covered - (1 - delta)) <= 4 * se

    def test_tail_bound_validation(self):
        with pytest.raises(ParameterError):
            tail_upper_bound(1.0, 0.0, 0.1)
        with pytest.raises(ParameterError):
            tail_upper_bound(1.0, 1.0, 0.5)


class TestRngStream:
    def test_addresses_are_independent(self):
        base = RngStream(seed=1)
        draws = {
            (role, user, trial): base.child(role=role, user=user, trial=trial).generator().random()
            for role in ("degree", "rr") for user in (-1, 0, 1) for trial in (0, 1)
        }
        assert len(set(draws.values())) == len(draws)

    def test_reproducible(self):
        a = RngStream(seed=42, trial=3, role="rr").generator().random(5)
        b = RngStream(seed=42, trial=3, role="rr").generator().random(5)
        assert np.array_equal(a, b)
