import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evalbandit.metrics import (Z_975, RunTrace, absolute_regret_increment, aggregate_ci, estimation_error,
                                growth_exponent, oracle_margin, relative_regret_increment, score_selections)
from evalbandit.model import EvaluatorModel, LinkFunction, LinkKind, RewardDistribution, generate_evaluations
from evalbandit.oracle import compute_oracle_weights, estimate_rewards, top_k

IDENTITY = LinkFunction(LinkKind.IDENTITY)
LOGISTIC = LinkFunction(LinkKind.LOGISTIC)


def brute_force_best(scores, K):
    return max(sum(scores[i] for i in c) for c in itertools.combinations(range(len(scores)), K))


class TestRelativeRegret:
    def test_oracle_selection_is_free(self):
        w = np.array([0.5, 0.25])
        phi = np.array([[1.0, 2.0], [3.0, 0.5], [0.2, 0.1]])
        sel = top_k(estimate_rewards(w, phi, IDENTITY), 2)
        assert relative_regret_increment(w, phi, IDENTITY, sel, 2) == 0.0

    def test_two_arm_example(self):
        phi = np.array([[1.0], [3.0]])
        assert relative_regret_increment([1.0], phi, IDENTITY, [0], 1) == pytest.approx(2.0)

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_enumeration(self, seed):
        gen = np.random.default_rng(seed)
        n = int(gen.integers(2, 11))
        K = int(gen.integers(1, n + 1))
        J = int(gen.integers(1, 5))
        w = gen.normal(size=J)
        phi = gen.uniform(0.05, 0.95, size=(n, J))
        sel = np.sort(gen.choice(n, size=K, replace=False))
        est = [float(sum(w[j] * math.log(phi[i, j] / (1 - phi[i, j])) for j in range(J))) for i in range(n)]
        expected = brute_force_best(est, K) - sum(est[i] for i in sel)
        assert relative_regret_increment(w, phi, LOGISTIC, sel, K) == pytest.approx(expected, abs=1e-10)

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            relative_regret_increment([1.0], np.ones((3, 1)), IDENTITY, [0, 1], 1)


class TestAbsoluteRegret:
    def test_examples(self):
        assert absolute_regret_increment([1.0, 2.0], [1], [1], 1) == 0.0
        assert absolute_regret_increment([1.0, 2.0], [0], [1], 1) == 1.0

    def test_can_be_negative(self):
        assert absolute_regret_increment([1.0, 2.0], [1], [0], 1) == -1.0


class TestEstimationError:
    def test_examples(self):
        assert estimation_error([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert estimation_error([3.0, 4.0], [0.0, 0.0]) == 5.0

    def test_random_pair(self, rng):
        a, b = rng.normal(size=6), rng.normal(size=6)
        assert estimation_error(a, b) == pytest.approx(math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b))))


class TestAggregateCi:
    def test_identical_runs(self):
        band = aggregate_ci([np.arange(5.0)] * 4)
        np.testing.assert_array_equal(band.half_width, 0.0)
        np.testing.assert_array_equal(band.mean, np.arange(5.0))

    def test_two_runs(self):
        band = aggregate_ci([np.zeros(3), np.full(3, 2.0)])
        np.testing.assert_allclose(band.mean, 1.0)
        np.testing.assert_allclose(band.half_width, 1.959964, atol=1e-6)

    def test_clt_scaling(self):
        gen = np.random.default_rng(7)
        n = 4000
        band = aggregate_ci(gen.normal(size=(n, 200)))
        np.testing.assert_allclose(band.half_width.mean(), Z_975 / math.sqrt(n), rtol=0.02)
        assert np.abs(band.mean).max() < 5 / math.sqrt(n)

    def test_other_level(self):
        band = aggregate_ci([np.zeros(1), np.full(1, 2.0)], level=0.9)
        assert band.half_width[0] == pytest.approx(1.6448536, rel=1e-6)

    def test_needs_two_runs(self):
        with pytest.raises(ValueError):
            aggregate_ci([np.zeros(3)])


class TestGrowthExponent:
    @pytest.mark.parametrize("power", [0.5, 2 / 3, 1.0])
    def test_power_law(self, power):
        t = np.arange(1, 5001, dtype=float)
        assert growth_exponent(3.0 * t**power) == pytest.approx(power, abs=1e-10)

    def test_zero_prefix_dropped(self):
        y = np.arange(1, 101, dtype=float) ** 0.5
        y[:60] = 0.0
        assert growth_exponent(y) == pytest.approx(0.5, abs=1e-10)

    def test_all_zero(self):
        assert math.isnan(growth_exponent(np.zeros(50)))


def test_oracle_margin():
    assert oracle_margin([1.0, 5.0, 3.0], 1) == 2.0
    assert math.isnan(oracle_margin([1.0, 2.0], 2))


def _environment(seed, sigma, link, T=200, n=8, J=3):
    gen = np.random.default_rng(seed)
    alpha = gen.uniform(0.5, 1.5, size=J)
    sigma = np.full(J, sigma)
    model = EvaluatorModel(alpha, sigma, link)
    dist = RewardDistribution.truncated_gaussian()
    rewards = dist.sample((T, n), gen)
    phi = generate_evaluations(rewards, model, gen, support_bound=dist.support_bound)
    w = compute_oracle_weights(alpha, np.where(sigma > 0, sigma, 1.0)).w
    return gen, rewards, phi, estimate_rewards(w, phi, link)


class TestScoreSelections:
    def test_oracle_has_zero_relative_regret(self):
        _, rewards, _, scores = _environment(0, 1.0, IDENTITY)
        inc = score_selections(rewards, scores, top_k(scores, 3))
        np.testing.assert_array_equal(inc["rel"], 0.0)
        np.testing.assert_array_equal(inc["abs"], 0.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6), st.integers(1, 4))
    def test_rel_nonnegative_and_monotone(self, seed, K):
        gen, rewards, _, scores = _environment(seed, 1.0, IDENTITY, T=50)
        selected = np.sort(np.array([gen.choice(8, K, replace=False) for _ in range(50)]), axis=1)
        inc = score_selections(rewards, scores, selected)
        assert np.all(inc["rel"] >= -1e-12)
        trace = RunTrace("p", 0, inc["rel"], inc["abs"], inc["gap"], np.zeros(50), selected,
                         inc["oracle_selected"])
        assert np.all(np.diff(trace.rel_regret_cum) >= -1e-12)
        assert np.all(inc["gap"] >= -1e-12)

    @pytest.mark.parametrize("link", [IDENTITY, LOGISTIC])
    def test_noiseless_series_coincide(self, link):
        gen, rewards, _, scores = _environment(1, 0.0, link)
        selected = np.sort(np.array([gen.choice(8, 2, replace=False) for _ in range(200)]), axis=1)
        inc = score_selections(rewards, scores, selected)
        np.testing.assert_allclose(inc["rel"], inc["abs"], atol=1e-9)
        np.testing.assert_allclose(inc["abs"], inc["gap"], atol=1e-9)

    def test_matches_scalar_functions(self):
        gen, rewards, phi, scores = _environment(2, 2.0, LOGISTIC, T=40)
        selected = np.sort(np.array([gen.choice(8, 2, replace=False) for _ in range(40)]), axis=1)
        inc = score_selections(rewards, scores, selected)
        for t in range(40):
            oracle_sel = top_k(scores[t], 2)
            assert inc["abs"][t] == pytest.approx(absolute_regret_increment(rewards[t], selected[t], oracle_sel, 2))
            assert inc["margin"][t] == pytest.approx(oracle_margin(scores[t], 2))
            best = scores[t][oracle_sel].sum()
            assert inc["rel"][t] == pytest.approx(best - scores[t][selected[t]].sum())

    def test_padding_ignored(self):
        rewards = np.array([[1.0, 5.0, 0.0], [2.0, 0.0, 0.0]])
        scores = np.array([[1.0, 5.0, 9.0], [2.0, 1.0, 9.0]])
        inc = score_selections(rewards, scores, np.array([[0], [1]]), num_arms=[2, 2])
        np.testing.assert_array_equal(inc["oracle_selected"].ravel(), [1, 0])
        np.testing.assert_allclose(inc["rel"], [4.0, 1.0])
        np.testing.assert_allclose(inc["gap"], [4.0, 2.0])
