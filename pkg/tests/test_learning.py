"""Smoothed-margin weight learning: surrogate, gradients, ascent, safety net."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from certvote import (
    DataError,
    LearnerConfig,
    RecordSet,
    WeightVector,
    exact_objective,
    learn,
    margin,
    objective,
    project_simplex,
    sigma_t,
)
from certvote.core import CertOutput
from certvote.learning import (
    margins_batch,
    objective_and_grad,
    sigma_t_prime,
    softmax,
    softmax_grad_chain,
)

from conftest import make_random_record_set

UNIFORM3 = WeightVector.uniform(3)


class TestSigmaT:
    def test_zero_is_half(self):
        for t in (1.0, 10.0, 1e5):
            assert sigma_t(0.0, t) == 0.5

    def test_positive_branch_ignores_temperature(self):
        assert sigma_t(math.log(3), 1e5) == pytest.approx(0.75)

    def test_negative_branch_scales_by_temperature(self):
        t = 37.0
        assert sigma_t(-t * math.log(3), t) == pytest.approx(0.25)

    def test_continuous_at_zero(self):
        t = 1e5
        assert sigma_t(1e-12, t) == pytest.approx(0.5, abs=1e-9)
        assert sigma_t(-1e-12, t) == pytest.approx(0.5, abs=1e-9)

    @settings(max_examples=200, deadline=None)
    @given(
        st.floats(-50, 50), st.floats(-50, 50), st.floats(0.1, 1e6)
    )
    def test_monotone(self, a, b, t):
        lo, hi = min(a, b), max(a, b)
        assert sigma_t(lo, t) <= sigma_t(hi, t)

    @pytest.mark.parametrize("x", [-3.0, -0.5, 0.4, 2.0])
    @pytest.mark.parametrize("t", [1.0, 7.0, 1e3])
    def test_derivative_matches_finite_difference(self, x, t):
        h = 1e-6
        fd = (sigma_t(x + h, t) - sigma_t(x - h, t)) / (2 * h)
        assert sigma_t_prime(x, t) == pytest.approx(fd, rel=1e-6)


class TestMargin:
    def test_two_certified_one_uncertified(self):
        outs = [CertOutput(1, 1), CertOutput(1, 1), CertOutput(0, 0)]
        assert margin(outs, UNIFORM3, y=1, m=2) == pytest.approx(1 / 3)

    def test_maximal(self):
        assert margin([CertOutput(0, 1)], WeightVector((1.0,)), y=0, m=2) == 1.0

    def test_maximally_negative(self):
        assert margin([CertOutput(1, 1)], WeightVector((1.0,)), y=0, m=2) == -1.0

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_bounded_by_one(self, seed):
        rng = np.random.default_rng(seed)
        n, m = int(rng.integers(1, 6)), int(rng.integers(2, 5))
        outs = [CertOutput(int(rng.integers(m)), int(rng.integers(2))) for _ in range(n)]
        w = WeightVector.normalized(rng.random(n) + 1e-3)
        # weights are normalized to within 1e-9, so the bound carries
        # the same slack
        assert abs(margin(outs, w, y=int(rng.integers(m)), m=m)) <= 1.0 + 1e-9

    def test_positive_margin_is_certified_correct_vote(self):
        # the sign of the margin and the voted (label, cert) pair must agree
        rng = np.random.default_rng(23)
        from certvote import weighted_vote

        for _ in range(500):
            n, m = int(rng.integers(1, 6)), int(rng.integers(2, 5))
            outs = [CertOutput(int(rng.integers(m)), int(rng.integers(2))) for _ in range(n)]
            w = WeightVector.normalized(rng.random(n) + 1e-3)
            y = int(rng.integers(m))
            voted = weighted_vote(outs, w, m=m)
            assert (margin(outs, w, y, m=m) > 0) == (voted == CertOutput(y, 1))


class TestObjective:
    def test_all_zero_margins(self):
        # each record splits its certified mass evenly between the true
        # label and one rival, so every margin is exactly zero
        rs = RecordSet.from_arrays([[0, 1], [1, 0]], [[1, 1], [1, 1]], [0, 1], m=2)
        assert objective(rs, WeightVector.uniform(2), t=10.0) == pytest.approx(0.5)

    def test_single_certified_correct_model(self):
        rs = RecordSet.from_arrays([[1]], [[1]], [1], m=2)
        assert objective(rs, WeightVector((1.0,)), t=5.0) == pytest.approx(
            1 / (1 + math.exp(-1)), abs=1e-4
        )

    def test_uniform_weights_on_example1(self, example1):
        for t in (1.0, 1e5):
            assert objective(example1, UNIFORM3, t=t) > 0.5

    def test_empty_rejected(self):
        empty = RecordSet.from_arrays(
            np.zeros((0, 2), dtype=np.int64), np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64), m=2
        )
        with pytest.raises(DataError):
            objective(empty, WeightVector.uniform(2), t=1.0)

    def test_exact_objective_counts_positive_margins(self, example1):
        # 75 of 100 records have a certified-correct majority at uniform
        assert exact_objective(example1, UNIFORM3) == pytest.approx(0.75)


def _kink_distance(rs, w):
    """Smallest margin magnitude / rival-mass gap; tiny values sit on a
    subgradient discontinuity where finite differences are meaningless."""
    margins, _ = margins_batch(rs.labels, rs.certs, rs.true_labels, w, rs.m)
    worst = np.min(np.abs(margins))
    k = len(rs.records)
    for i in range(k):
        mass = np.zeros(rs.m)
        for lab, cer, wl in zip(rs.labels[i], rs.certs[i], w):
            if cer == 1:
                mass[lab] += wl
        mass[rs.true_labels[i]] = -np.inf
        top = np.sort(mass)[::-1]
        if len(top) >= 2 and top[0] > 0 and np.isfinite(top[1]):
            worst = min(worst, top[0] - top[1])
    return worst


class TestGradient:
    @pytest.mark.parametrize("t", [1.0, 50.0, 1e5])
    def test_matches_central_differences(self, t):
        rng = np.random.default_rng(91)
        checked = 0
        attempts = 0
        while checked < 10 and attempts < 200:
            attempts += 1
            seed = int(rng.integers(2**31))
            n, m = int(rng.integers(2, 6)), int(rng.integers(2, 5))
            rs = make_random_record_set(seed, k=25, n_models=n, m=m)
            theta = rng.normal(size=n)
            w = softmax(theta)
            if _kink_distance(rs, w) < 1e-3:
                continue
            _, grad_w = objective_and_grad(rs.labels, rs.certs, rs.true_labels, w, m, t)
            grad_theta = softmax_grad_chain(w, grad_w)
            h = 1e-5
            fd = np.empty(n)
            for l in range(n):
                up, dn = theta.copy(), theta.copy()
                up[l] += h
                dn[l] -= h
                f_up = objective_and_grad(rs.labels, rs.certs, rs.true_labels, softmax(up), m, t)[0]
                f_dn = objective_and_grad(rs.labels, rs.certs, rs.true_labels, softmax(dn), m, t)[0]
                fd[l] = (f_up - f_dn) / (2 * h)
            denom = max(np.linalg.norm(fd), 1e-12)
            assert np.linalg.norm(grad_theta - fd) / denom < 1e-4
            checked += 1
        assert checked == 10


class TestProjectSimplex:
    @settings(max_examples=300, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=8))
    def test_kkt_optimality(self, vals):
        v = np.asarray(vals)
        p = project_simplex(v)
        assert np.all(p >= -1e-12)
        assert np.sum(p) == pytest.approx(1.0, abs=1e-9)
        # Euclidean projection onto the simplex shifts every positive
        # coordinate by one common offset and clips the rest at zero
        active = p > 1e-12
        assert np.any(active)
        tau = v[active] - p[active]
        np.testing.assert_allclose(tau, tau[0], atol=1e-9)
        if np.any(~active):
            assert np.all(v[~active] <= tau[0] + 1e-9)

    def test_already_on_simplex_is_fixed(self):
        v = np.array([0.2, 0.3, 0.5])
        np.testing.assert_allclose(project_simplex(v), v, atol=1e-12)


class TestLearn:
    def test_single_constituent(self):
        rs = make_random_record_set(seed=5, n_models=1)
        w, trace = learn(rs)
        assert w.values == (1.0,)
        assert trace.final_weights.values == (1.0,)

    def test_symmetric_constituents_stay_uniform(self):
        rng = np.random.default_rng(9)
        labels = rng.integers(0, 3, size=(40, 1))
        labels = np.repeat(labels, 3, axis=1)
        certs = np.repeat(rng.integers(0, 2, size=(40, 1)), 3, axis=1)
        rs = RecordSet.from_arrays(labels, certs, rng.integers(0, 3, size=40), m=3)
        w, _ = learn(rs, LearnerConfig(safety_net=False))
        np.testing.assert_allclose(w.as_array(), 1 / 3, atol=1e-9)

    def test_dominant_constituent_wins(self, dominant_set):
        w, trace = learn(dominant_set)
        assert w[0] > 0.9
        assert trace.final_exact == pytest.approx(0.9)

    def test_returned_raw_iterate_is_trace_best(self, dominant_set, example1):
        for rs in (dominant_set, example1):
            _, trace = learn(rs)
            assert trace.raw_objective == pytest.approx(max(trace.objectives))

    def test_objectives_within_unit_interval(self, example1):
        _, trace = learn(example1, LearnerConfig(epochs=50))
        assert all(0.0 <= v <= 1.0 for v in trace.objectives)

    def test_safety_net_reports_replacement(self, dominant_set):
        _, trace = learn(dominant_set)
        assert trace.safety_net_applied
        assert trace.final_exact >= max(trace.one_hot_exact)
        assert trace.final_exact >= trace.raw_exact

    def test_safety_net_untouched_when_raw_wins(self, example1):
        _, trace = learn(example1)
        assert not trace.safety_net_applied
        assert trace.final_weights == trace.raw_weights

    def test_safety_net_off(self, dominant_set):
        w, trace = learn(dominant_set, LearnerConfig(safety_net=False))
        assert not trace.safety_net_applied
        assert w == trace.raw_weights

    def test_projected_parameterization(self, dominant_set):
        w, trace = learn(dominant_set, LearnerConfig(parameterization="projected"))
        assert w[0] > 0.9
        assert sum(w) == pytest.approx(1.0, abs=1e-9)

    def test_exact_objective_not_below_uniform(self, dominant_set, cascade_style_set):
        for rs in (dominant_set, cascade_style_set):
            w, _ = learn(rs)
            assert exact_objective(rs, w) >= exact_objective(rs, WeightVector.uniform(rs.n_models))

    def test_config_validation(self):
        with pytest.raises(DataError):
            LearnerConfig(temperature=0.0)
        with pytest.raises(DataError):
            LearnerConfig(epochs=0)
        with pytest.raises(DataError):
            LearnerConfig(parameterization="adam")
        with pytest.raises(DataError):
            LearnerConfig(learning_rate=-1.0)
