import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq, minimize

from evalbandit.estimators import (ConvergenceWarning, DegenerateEstimateError, MleDataset, StreamingMean,
                                   UcbEstimatorState, link_second_moment, mle_glm_1d, shrink_alpha,
                                   solve_glm_mle, solve_kkt_lambda, streaming_mean_update)
from evalbandit.model import LinkFunction, LinkKind, RewardDistribution

LOGISTIC = LinkFunction(LinkKind.LOGISTIC)
IDENTITY = LinkFunction(LinkKind.IDENTITY)


def score(a, r, phi, lam, link):
    return float(np.sum(r * (link(a * r) - phi)) + lam * a)


class TestMle:
    def test_identity_noiseless(self):
        assert mle_glm_1d(MleDataset([1.0, 2.0], [2.0, 4.0]), IDENTITY) == pytest.approx(2.0, abs=1e-14)

    def test_identity_regularized(self):
        assert mle_glm_1d(MleDataset([1.0], [2.0], lam=1.0), IDENTITY) == pytest.approx(1.0, abs=1e-14)
        assert mle_glm_1d(MleDataset([1.0], [2.0], lam=0.0), IDENTITY) == pytest.approx(2.0, abs=1e-14)

    def test_logistic_noiseless_inversion(self):
        data = MleDataset([1.0], [float(LOGISTIC(0.7))])
        assert abs(mle_glm_1d(data, LOGISTIC) - 0.7) < 1e-9

    def test_root_against_brentq(self):
        gen = np.random.default_rng(0)
        for _ in range(50):
            n = int(gen.integers(1, 40))
            r = gen.uniform(0, 3, n)
            phi = np.clip(LOGISTIC(gen.uniform(-1, 2) * r) + gen.normal(0, 0.2, n), 0.01, 0.99)
            lam = float(gen.uniform(0.01, 1.0))
            ref = brentq(score, -200, 200, args=(r, phi, lam, LOGISTIC), xtol=1e-14)
            got = mle_glm_1d(MleDataset(r, phi, lam), LOGISTIC)
            assert got == pytest.approx(ref, abs=1e-8)
            assert abs(score(got, r, phi, lam, LOGISTIC)) < 1e-10 * (1 + r @ r)

    @pytest.mark.parametrize("link", [LOGISTIC, IDENTITY])
    def test_column_solver_matches_scalar(self, link):
        gen = np.random.default_rng(1)
        r = gen.uniform(0, 2, 30)
        phi = link(np.outer(r, [0.3, -0.8, 1.5])) + 0.05 * gen.normal(size=(30, 3))
        if not link.is_identity:
            phi = np.clip(phi, 0.01, 0.99)
        est, ok = solve_glm_mle(r, phi, 0.1, link)
        assert ok.all()
        for j in range(3):
            assert est[j] == pytest.approx(mle_glm_1d(MleDataset(r, phi[:, j], 0.1), link), abs=1e-10)

    def test_warm_start_gives_same_root(self):
        gen = np.random.default_rng(2)
        r = gen.uniform(0, 2, 25)
        phi = np.clip(LOGISTIC(0.9 * r) + 0.1 * gen.normal(size=25), 0.01, 0.99)[:, None]
        cold, _ = solve_glm_mle(r, phi, 0.5, LOGISTIC)
        warm, _ = solve_glm_mle(r, phi, 0.5, LOGISTIC, x0=np.array([37.0]))
        assert warm[0] == pytest.approx(cold[0], abs=1e-10)

    def test_regularizer_bias_first_order(self):
        # noiseless data: a_hat ~ alpha - lam alpha / sum r^2 g'(alpha r)
        gen = np.random.default_rng(3)
        r = gen.uniform(0, 3, 200)
        alpha = 1.3
        phi = LOGISTIC(alpha * r)[:, None]
        lam = 1e-3
        est, _ = solve_glm_mle(r, phi, lam, LOGISTIC)
        predicted = alpha - lam * alpha / float(np.sum(r * r * LOGISTIC.derivative(alpha * r)))
        assert est[0] == pytest.approx(predicted, abs=1e-8)

    def test_empty_with_regularizer(self):
        assert mle_glm_1d(MleDataset([], [], lam=1.0), LOGISTIC) == 0.0

    def test_empty_without_regularizer_warns(self):
        with pytest.warns(ConvergenceWarning):
            mle_glm_1d(MleDataset([], [], lam=0.0), LOGISTIC)

    def test_dataset_validation(self):
        with pytest.raises(ValueError):
            MleDataset([1.0, 2.0], [1.0])
        with pytest.raises(ValueError):
            MleDataset([1.0], [1.0], lam=-1.0)


class TestStreamingMean:
    def test_two_batches(self):
        s = StreamingMean(2)
        streaming_mean_update(s, np.array([[1.0, 2.0], [3.0, 4.0]]))
        np.testing.assert_allclose(s.mean, [2.0, 3.0])
        streaming_mean_update(s, np.array([[5.0, 6.0]]))
        np.testing.assert_allclose(s.mean, [3.0, 4.0])
        assert s.count == 3

    def test_matches_one_shot(self):
        gen = np.random.default_rng(4)
        rows = gen.normal(3.0, 10.0, size=(10**4, 5))
        s = StreamingMean(5)
        for chunk in np.array_split(rows, 937):
            s.update(chunk)
        np.testing.assert_allclose(s.mean, rows.mean(axis=0), atol=1e-12)

    def test_empty(self):
        np.testing.assert_array_equal(StreamingMean(3).mean, np.zeros(3))
        with pytest.raises(ValueError):
            StreamingMean(2).update(np.empty((0, 2)))


class TestUcbState:
    def test_sums_and_beta(self):
        st_ = UcbEstimatorState(2)
        st_.update(np.array([[1.0, 2.0], [3.0, 0.0]]), [1.0, 2.0])
        np.testing.assert_allclose(st_.alpha_hat, [4 / 3, 2 / 3])
        sigma = np.array([1.0, 2.0])
        log_term = math.log(2 / 0.1)
        expected = (2 * math.sqrt(2 * 2 * log_term) / 3 + math.sqrt(1 * 2 * 5.0 * log_term)) / 3.0
        assert st_.beta(2, sigma, 0.1) == pytest.approx(expected, rel=1e-14)

    def test_cold(self):
        st_ = UcbEstimatorState(3)
        assert st_.alpha_hat is None and st_.beta(1, np.ones(3), 0.1) == math.inf

    def test_beta_vanishes(self):
        st_ = UcbEstimatorState(1)
        for _ in range(10**4):
            st_.update(np.array([[1.0]]), [1.0])
        assert st_.beta(1, np.ones(1), 0.1) < 0.03


class TestKkt:
    @pytest.mark.parametrize("a,s,b", [(2.0, 1.0, 0.5), (5.0, 3.0, 1.0), (-4.0, 0.5, 0.1), (1.0, 2.0, 0.9)])
    def test_single_evaluator_closed_form(self, a, s, b):
        lam = solve_kkt_lambda(np.array([a]), np.array([s]), b)
        assert lam == pytest.approx((abs(a) * b - b * b) / (s * s), rel=1e-9)
        shrunk = shrink_alpha(np.array([a]), np.array([s]), b, lam)
        assert abs(shrunk[0] - a) == pytest.approx(b, rel=1e-9)

    def test_root_against_brentq(self):
        gen = np.random.default_rng(5)
        for _ in range(30):
            J = int(gen.integers(2, 10))
            a, s = gen.uniform(-2, 2, J), gen.uniform(0.3, 3, J)
            b = 0.5 * np.linalg.norm(a)
            f = lambda lam: np.sum((a / (lam * s**2 + b**2)) ** 2) - 1 / b**2
            ref = brentq(f, 1e-12, 1e8, xtol=1e-14, rtol=1e-14)
            assert solve_kkt_lambda(a, s, b) == pytest.approx(ref, rel=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 12).flatmap(lambda J: st.tuples(
        st.lists(st.floats(-3, 3), min_size=J, max_size=J),
        st.lists(st.floats(0.2, 4.0), min_size=J, max_size=J),
        st.floats(0.05, 0.95))))
    def test_shrinkage_on_ball_boundary(self, case):
        a, s, frac = np.asarray(case[0]), np.asarray(case[1]), case[2]
        if np.linalg.norm(a) < 1e-3:
            return
        b = frac * np.linalg.norm(a)
        lam = solve_kkt_lambda(a, s, b)
        z = shrink_alpha(a, s, b, lam)
        assert abs(np.linalg.norm(z - a) - b) < 1e-8

    def test_shrinkage_minimizes_weighted_norm(self):
        gen = np.random.default_rng(6)
        for _ in range(10):
            J = 4
            a, s = gen.uniform(0.5, 2, J), gen.uniform(0.5, 2, J)
            b = 0.4 * np.linalg.norm(a)
            z = shrink_alpha(a, s, b, solve_kkt_lambda(a, s, b))
            res = minimize(lambda v: np.sum((v / s) ** 2), a, method="SLSQP", tol=1e-14,
                           constraints=[{"type": "ineq", "fun": lambda v: b**2 - np.sum((v - a) ** 2)}])
            assert np.sum((z / s) ** 2) <= res.fun + 1e-7

    def test_degenerate(self):
        with pytest.raises(DegenerateEstimateError):
            solve_kkt_lambda(np.array([1.0]), np.array([1.0]), 2.0)
        with pytest.raises(ValueError):
            solve_kkt_lambda(np.array([1.0]), np.array([1.0]), 0.0)

    def test_no_shrinkage_at_zero_width(self):
        np.testing.assert_array_equal(shrink_alpha(np.array([1.0, 2.0]), np.ones(2), 0.0, 1.0), [1.0, 2.0])


def test_link_second_moment():
    dist = RewardDistribution.uniform(0.0, 2.0)
    # E[(alpha r)^2] for identity = alpha^2 * 4/3
    assert link_second_moment(1.5, dist, IDENTITY) == pytest.approx(1.5**2 * 4 / 3, rel=1e-9)
    grid = np.linspace(0, 2, 200001)
    ref = np.trapezoid(LOGISTIC(0.8 * grid) ** 2, grid) / 2.0
    assert link_second_moment(0.8, dist, LOGISTIC) == pytest.approx(ref, rel=1e-8)
