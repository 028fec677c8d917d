import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import small_samples
from transprob import (IllnessDeathConfig, aalen_johansen, build_counting_processes,
                       influence_curves, martingale_residuals, nelson_aalen,
                       simulate_illness_death, true_p12)


def test_three_subject_residuals(three_subject):
    cps = build_counting_processes(three_subject)
    M = martingale_residuals(cps, nelson_aalen(cps))
    assert M.increments[:, 0, 0, 1] == pytest.approx([2 / 3, -1 / 3, -1 / 3], abs=1e-12)
    assert M.increments[:, 0, 0, 1].sum() == pytest.approx(0, abs=1e-15)
    # subject 3 is never in state 2
    assert np.all(M.increments[2, :, 1, :] == 0)


def test_three_subject_influence_single_event(three_subject):
    A = nelson_aalen(build_counting_processes(three_subject))
    g = influence_curves(A, 1, 2, 0.0)
    assert g.times.tolist() == [0.0, 1.0, 2.0]
    assert np.all(g.values[:, 0] == 0)
    # first grid time: dM_i12(1) / Ybar_1(1) with Ybar_1(1) = 1
    assert g.values[:, 1] == pytest.approx([2 / 3, -1 / 3, -1 / 3], abs=1e-12)


def test_influence_at_start_is_exactly_zero():
    sample = simulate_illness_death(IllnessDeathConfig(0.6, 0.5, n=40), 2)
    A = nelson_aalen(build_counting_processes(sample))
    for s in (0.0, 0.7):
        g = influence_curves(A, 1, 2, s)
        assert g.times[0] == s
        assert np.all(g.values[:, 0] == 0.0)


def test_residual_grid_mismatch_rejected(three_subject, second_group):
    cps = build_counting_processes(three_subject)
    other = nelson_aalen(build_counting_processes(second_group))
    with pytest.raises(ValueError):
        martingale_residuals(cps, other)


@settings(max_examples=60, deadline=None)
@given(small_samples(max_subjects=4), st.sampled_from([(1, 2), (1, 3), (2, 4), (1, 1), (2, 2)]),
       st.sampled_from([0.0, 1.0]))
def test_influence_matches_explicit_double_sum(sample, hj, s):
    A = nelson_aalen(build_counting_processes(sample))
    if s >= A.grid.tau:
        return
    h, j = hj
    g = influence_curves(A, h, j, s)
    q = sample.state_space.q
    for k, t in enumerate(g.times):
        exact = oracles.influence(sample.subjects, q, h, j, s, t)
        assert g.values[:, k] == pytest.approx([float(x) for x in exact], abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(small_samples(max_subjects=5))
def test_residuals_match_oracle(sample):
    cps = build_counting_processes(sample)
    M = martingale_residuals(cps, nelson_aalen(cps))
    q = sample.state_space.q
    for i in range(sample.n):
        for k, u in enumerate(M.times):
            exact = oracles.residual(sample.subjects, q, i, u)
            got = M.increments[i, k]
            want = np.array([[float(exact[l][m]) for m in range(1, q + 1)]
                             for l in range(1, q + 1)])
            np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(small_samples(max_subjects=8), st.sampled_from([(1, 2), (1, 3), (2, 3)]))
def test_influence_sums_to_zero(sample, hj):
    A = nelson_aalen(build_counting_processes(sample))
    g = influence_curves(A, *hj)
    assert np.abs(g.values.sum(axis=0)).max() <= 1e-10


def test_influence_variance_matches_monte_carlo():
    """Var of sqrt(n)(P12_hat(0,1) - P12(0,1)) across replications against
    the mean of n^-1 sum_i gamma_i(0,1)^2."""
    n, reps = 200, 500
    truth = true_p12(0.6, 0.5, 0.0, 1.0)
    errs, plug = [], []
    rng = np.random.default_rng(20240601)
    for _ in range(reps):
        A = nelson_aalen(build_counting_processes(
            simulate_illness_death(IllnessDeathConfig(0.6, 0.5, n=n), rng)))
        est = aalen_johansen(A).at(1.0)[0, 1]
        g = influence_curves(A, 1, 2)
        k = np.searchsorted(g.times, 1.0, side="right") - 1
        errs.append(np.sqrt(n) * (est - truth))
        plug.append(np.mean(g.values[:, k] ** 2))
    emp = np.var(errs, ddof=1)
    assert abs(np.mean(plug) - emp) / emp <= 0.15
