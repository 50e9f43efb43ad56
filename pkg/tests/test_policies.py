import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from greedybandit import estimator as est
from greedybandit.contexts import ContextSet
from greedybandit.policies import (PolicyConfig, confidence_radius,
                                   greedy_select, linucb_select, lints_select,
                                   policy_step)


def contexts_of(*rows):
    return ContextSet(np.array(rows, dtype=float))


class TestConfig:
    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            PolicyConfig("egreedy")

    def test_parameter_ranges(self):
        with pytest.raises(ValueError):
            PolicyConfig("linucb", lambda_reg=0.0)
        with pytest.raises(ValueError):
            PolicyConfig("linucb", delta=1.0)
        with pytest.raises(ValueError):
            PolicyConfig("lints", v_scale=0.0)
        with pytest.raises(ValueError):
            PolicyConfig("linucb", sigma_assumed=-0.1)

    def test_delta_resolution(self):
        cfg = PolicyConfig("linucb").with_delta_for_horizon(1000)
        assert cfg.delta == pytest.approx(1e-3)
        fixed = PolicyConfig("linucb", delta=0.05).with_delta_for_horizon(1000)
        assert fixed.delta == 0.05

    def test_name_defaults_to_kind(self):
        assert PolicyConfig("greedy", theta0=np.zeros(2)).name == "greedy"
        assert PolicyConfig("greedy", theta0=np.zeros(2), name="warm").name == "warm"


class TestGreedySelect:
    def test_highest_score_wins(self):
        cs = contexts_of([0.5, 9.0], [0.6, -9.0])
        assert greedy_select([1.0, 0.0], cs) == 1

    def test_all_ties_lowest_index(self):
        cs = contexts_of([0.5, 9.0], [0.6, -9.0], [1.0, 1.0])
        assert greedy_select([0.0, 0.0], cs) == 0

    def test_positive_scaling_invariance(self):
        cs = contexts_of([1.0, 2.0], [2.0, -1.0], [0.0, 3.0])
        theta = np.array([0.3, 0.4])
        base = greedy_select(theta, cs)
        for c in (1e-6, 0.5, 7.0, 1e6):
            assert greedy_select(c * theta, cs) == base


@settings(deadline=None, max_examples=40)
@given(
    k=st.integers(1, 6),
    d=st.integers(1, 4),
    c=st.floats(1e-3, 1e3),
    seed=st.integers(0, 10**6),
)
def test_greedy_scaling_property(k, d, c, seed):
    rng = np.random.default_rng(seed)
    cs = ContextSet(rng.standard_normal((k, d)))
    theta = rng.standard_normal(d)
    assert greedy_select(theta, cs) == greedy_select(c * theta, cs)


class TestPolicyStep:
    def test_greedy_warm_start_branch(self):
        s = est.init(2)
        cfg = PolicyConfig("greedy", theta0=np.array([1.0, 0.0]))
        cs = contexts_of([0.5, 9.0], [0.6, -9.0])
        assert policy_step(s, cfg, cs, t=1) == 1  # scored with theta0
        est.update(s, [1.0, 0.0], 1.0)
        est.update(s, [0.0, 1.0], 1.0)
        # theta_hat = (1, 1) now dominates the warm start.
        assert policy_step(s, cfg, cs, t=3) == 0

    def test_greedy_requires_theta0_while_singular(self):
        s = est.init(2)
        cfg = PolicyConfig("greedy")
        with pytest.raises(ValueError):
            policy_step(s, cfg, contexts_of([1.0, 0.0]), t=1)

    def test_dim_mismatch(self):
        s = est.init(3)
        cfg = PolicyConfig("greedy", theta0=np.zeros(3))
        with pytest.raises(ValueError):
            policy_step(s, cfg, contexts_of([1.0, 0.0]), t=1)

    def test_lints_needs_rng(self):
        s = est.init(2)
        cfg = PolicyConfig("lints")
        with pytest.raises(ValueError):
            policy_step(s, cfg, contexts_of([1.0, 0.0]), t=1)

    def test_greedy_and_linucb_are_pure(self, rng):
        s = est.init(3)
        for _ in range(8):
            est.update(s, rng.standard_normal(3), rng.standard_normal())
        cs = ContextSet(rng.standard_normal((4, 3)))
        g = PolicyConfig("greedy", theta0=np.zeros(3))
        u = PolicyConfig("linucb", delta=0.01)
        assert policy_step(s, g, cs, t=9) == policy_step(s, g, cs, t=9)
        assert policy_step(s, u, cs, t=9) == policy_step(s, u, cs, t=9)

    def test_lints_pure_given_draw(self, rng):
        s = est.init(3)
        for _ in range(8):
            est.update(s, rng.standard_normal(3), rng.standard_normal())
        cs = ContextSet(rng.standard_normal((4, 3)))
        cfg = PolicyConfig("lints", delta=0.01)
        a = policy_step(s, cfg, cs, t=9, rng=np.random.default_rng(3))
        b = policy_step(s, cfg, cs, t=9, rng=np.random.default_rng(3))
        assert a == b


class TestLinUcb:
    def test_beta_zero_is_ridge_greedy(self, rng):
        s = est.init(3)
        for _ in range(12):
            est.update(s, rng.standard_normal(3), rng.standard_normal())
        cfg = PolicyConfig("linucb", delta=0.1)
        cs = ContextSet(rng.standard_normal((5, 3)))
        ridge = np.linalg.solve(s.sigma + np.eye(3), s.b)
        assert linucb_select(s, cfg, cs, beta=0.0) == greedy_select(ridge, cs)

    def test_width_term_changes_choice(self):
        # One arm has a slightly lower mean but is unexplored; a large beta
        # must flip the selection toward it.
        s = est.init(2)
        for _ in range(50):
            est.update(s, [1.0, 0.0], 1.0)
        cfg = PolicyConfig("linucb", delta=0.1)
        cs = contexts_of([1.0, 0.0], [0.9, 1.0])
        assert linucb_select(s, cfg, cs, beta=0.0) == 0
        assert linucb_select(s, cfg, cs, beta=5.0) == 1


class TestLints:
    def test_vanishing_scale_agrees_with_ridge(self, rng):
        s = est.init(3)
        for _ in range(15):
            est.update(s, rng.standard_normal(3), rng.standard_normal())
        cfg = PolicyConfig("lints", v_scale=1e-6, delta=0.1)
        ridge = np.linalg.solve(s.sigma + np.eye(3), s.b)
        agree = 0
        n = 1000
        for _ in range(n):
            cs = ContextSet(rng.standard_normal((4, 3)))
            if lints_select(s, cfg, cs, rng) == greedy_select(ridge, cs):
                agree += 1
        assert agree / n > 0.99


class TestConfidenceRadius:
    def test_no_data_closed_form(self):
        s = est.init(4)
        cfg = PolicyConfig("linucb", lambda_reg=1.0, delta=0.1, sigma_assumed=0.5)
        # Sigma = 0: logdet(lambda I) - d log(lambda) = 0.
        expected = 0.5 * math.sqrt(2 * math.log(10)) + 1.0
        assert confidence_radius(s, cfg, t=1) == pytest.approx(expected)

    def test_sigma_scales_first_term(self):
        s = est.init(3)
        lam = 2.0
        a = PolicyConfig("linucb", lambda_reg=lam, delta=0.05, sigma_assumed=0.5)
        b = PolicyConfig("linucb", lambda_reg=lam, delta=0.05, sigma_assumed=1.0)
        ra = confidence_radius(s, a, t=1) - math.sqrt(lam)
        rb = confidence_radius(s, b, t=1) - math.sqrt(lam)
        assert rb == pytest.approx(2 * ra)

    def test_determinant_trace_bound_after_updates(self, rng):
        # After n bounded updates the radius respects the trace bound
        # beta <= sigma sqrt(d log(1 + n x_max^2 / (d lambda)) + 2 log(1/delta))
        #         + sqrt(lambda).
        d, n, lam, delta, sig = 3, 100, 1.0, 0.01, 0.5
        x_max = 2.0
        s = est.init(d)
        for _ in range(n):
            x = rng.standard_normal(d)
            x *= min(1.0, x_max / np.linalg.norm(x))
            est.update(s, x, 0.0)
        cfg = PolicyConfig("linucb", lambda_reg=lam, delta=delta, sigma_assumed=sig)
        bound = sig * math.sqrt(d * math.log(1 + n * x_max**2 / (d * lam))
                                + 2 * math.log(1 / delta)) + math.sqrt(lam)
        assert confidence_radius(s, cfg, t=n + 1) <= bound + 1e-12

    def test_unresolved_delta_rejected(self):
        with pytest.raises(ValueError):
            confidence_radius(est.init(2), PolicyConfig("linucb"), t=1)
