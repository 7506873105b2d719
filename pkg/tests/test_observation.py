import math

import numpy as np
import pytest
from scipy import stats

from twopathogen import observation as obs
from twopathogen.errors import InfeasibleInitial, StepFailure
from twopathogen.model import DEFAULT_MU, DEFAULT_NU, ModelParams, swap_state
from twopathogen.observation import (THETA_NAMES, LogPosterior, ObservationWindow, PriorSpec,
                                     ThetaVector, expected_weekly_incidence, gamma_from_mean_cv,
                                     gamma_logpdf, initial_state, log_likelihood, log_posterior,
                                     log_prior, poisson_loglik)

import oracles

FIXED = ModelParams(0.0, 0.0)
GAMMA = DEFAULT_NU + DEFAULT_MU
THETA = ThetaVector(0.3, 0.25, 0.2, 0.3, 0.1, 0.05, 5.0, 10.0, 0.05)
# weekly new infections over 8 weeks from the DOP853 cumulative-incidence oracle
FROZEN_INCIDENCE = [51.28241718563619, 142.43589201167094, 403.0754655434631,
                    1156.5769117380064, 3344.377358671225, 9641.275013041466,
                    27027.5499168342, 69260.90513530828]


def test_theta_roundtrips():
    assert ThetaVector.from_array(THETA.as_array()) == THETA
    assert ThetaVector.from_mapping(THETA.to_dict()) == THETA
    assert THETA.swapped().swapped() == THETA
    assert THETA.swapped().beta1 == THETA.beta2 and THETA.swapped().a == THETA.c
    with pytest.raises(ValueError):
        ThetaVector.from_array([1.0] * 8)
    with pytest.raises(KeyError):
        ThetaVector.from_mapping({"beta1": 1.0})


def test_initial_state():
    th = ThetaVector(0.3, 0.3, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.05)
    x = initial_state(th, 1e6)
    assert x[0] == pytest.approx(999999.8)
    assert x[1] == 0.1 and x[3] == 0.1 and x[[2, 4, 5, 6, 7, 8]].sum() == 0
    swapped = ThetaVector(0.3, 0.3, 0.1, 0.1, 0.1, 0.1, 0.2, 0.7, 0.05)
    np.testing.assert_array_equal(initial_state(swapped.swapped(), 1e6),
                                  swap_state(initial_state(swapped, 1e6)))
    with pytest.raises(InfeasibleInitial):
        initial_state(ThetaVector(0.3, 0.3, 0.1, 0.1, 0.1, 0.1, 6e5, 5e5, 0.05), 1e6)


def test_gamma_from_mean_cv():
    shape, rate = gamma_from_mean_cv(2.0, 0.5)
    assert shape == 4.0 and rate == 2.0
    dist = stats.gamma(shape, scale=1 / rate)
    assert dist.mean() == pytest.approx(2.0) and dist.std() / dist.mean() == pytest.approx(0.5)
    with pytest.raises(ValueError):
        gamma_from_mean_cv(-1.0, 0.5)


def test_default_prior_targets():
    priors = PriorSpec.default(FIXED, r0_2=2.0)
    means = priors.means
    assert means[0] / GAMMA == pytest.approx(1.5)
    assert means[1] / GAMMA == pytest.approx(2.0)
    assert means[6] == pytest.approx(0.1) and means[7] == pytest.approx(0.1)
    assert means[8] == pytest.approx(0.05)
    assert not priors.is_symmetric
    assert PriorSpec.default(FIXED).is_symmetric


def test_default_cross_prior_median_at_regime_threshold():
    priors = PriorSpec.default(FIXED)
    dist = stats.gamma(priors.shapes[2], scale=1 / priors.rates[2])
    assert dist.median() == pytest.approx(0.05 * dist.mean(), rel=1e-9)


def test_prior_dict_roundtrip():
    priors = PriorSpec.default(FIXED, r0_2=3.0)
    assert PriorSpec.from_dict(priors.to_dict()) == priors
    with pytest.raises(ValueError):
        PriorSpec((1.0,) * 9, (0.0,) * 9)


def test_window_validation():
    w = ObservationWindow.weekly([1, 2, 3, 4])
    np.testing.assert_array_equal(w.edges, [0, 7, 14, 21, 28])
    with pytest.raises(ValueError):
        ObservationWindow.weekly([1, 2, 3])
    with pytest.raises(ValueError):
        ObservationWindow.weekly([1, 2, -3, 4])
    with pytest.raises(ValueError):
        ObservationWindow([0, 7, 7, 21, 28], [1, 2, 3, 4])


# --- expected incidence -----------------------------------------------------


def test_expected_incidence_matches_frozen_oracle():
    edges = 7.0 * np.arange(9)
    fixed_tight = np.array(FROZEN_INCIDENCE) * THETA.k_scale
    from twopathogen import _kernels as K
    status, inc = obs._solve(THETA.as_array(), FIXED, edges, 1e-13)
    assert status == K.OK
    np.testing.assert_allclose(THETA.k_scale * inc, fixed_tight, rtol=1e-8)
    # the default tolerance stays within the integrator's global error
    np.testing.assert_allclose(expected_weekly_incidence(THETA, edges, FIXED), fixed_tight,
                               rtol=1e-4)


def test_expected_incidence_matches_live_oracle_on_random_thetas():
    rng = np.random.default_rng(3)
    edges = 7.0 * np.arange(31)
    for _ in range(5):
        th = ThetaVector(*rng.uniform(0.05, 0.5, 6), *rng.uniform(0.1, 20, 2), 1.0)
        x0 = initial_state(th, FIXED.n_pop)
        ref = oracles.reference_weekly_incidence(x0, th.model_params(FIXED).as_array(), edges)
        status, inc = obs._solve(th.as_array(), FIXED, edges, 1e-13)
        np.testing.assert_allclose(inc, ref, rtol=5e-8, atol=1e-6)


def test_expected_incidence_linear_in_k():
    edges = 7.0 * np.arange(11)
    base = expected_weekly_incidence(THETA, edges, FIXED)
    doubled = ThetaVector(*THETA.as_array()[:8], 2 * THETA.k_scale)
    np.testing.assert_allclose(expected_weekly_incidence(doubled, edges, FIXED), 2 * base,
                               rtol=1e-15)
    assert np.all(base >= 0)


def test_expected_incidence_vanishes_without_infectives():
    th = ThetaVector(0.3, 0.3, 0.1, 0.1, 0.1, 0.1, 1e-300, 1e-300, 0.05)
    assert np.all(expected_weekly_incidence(th, 7.0 * np.arange(5), FIXED) < 1e-250)


def test_total_incidence_equals_flow_integral():
    edges = 7.0 * np.arange(31)
    weekly = expected_weekly_incidence(THETA, edges, FIXED, tol=1e-11) / THETA.k_scale
    x0 = initial_state(THETA, FIXED.n_pop)
    _, cum = oracles.reference_solution(x0, THETA.model_params(FIXED).as_array(),
                                        np.array([0.0, 210.0]))
    assert weekly.sum() == pytest.approx(cum[-1], rel=1e-7)


def test_expected_incidence_propagates_step_failure(monkeypatch):
    from twopathogen import _kernels as K
    monkeypatch.setattr(obs, "_solve", lambda *a: (K.TOO_MANY_STEPS, None))
    with pytest.raises(StepFailure):
        expected_weekly_incidence(THETA, 7.0 * np.arange(5), FIXED)


# --- likelihood and prior ------------------------------------------------------


def test_poisson_loglik_cases():
    assert poisson_loglik([3], [3.0]) == pytest.approx(3 * math.log(3) - 3 - math.log(6),
                                                      abs=1e-14)
    assert poisson_loglik([0, 0, 0], [1.0, 2.5, 0.5]) == pytest.approx(-4.0)
    assert poisson_loglik([2], [0.0]) == -math.inf
    assert poisson_loglik([0, 4], [0.0, 4.0]) == pytest.approx(stats.poisson.logpmf(4, 4.0))


def test_poisson_loglik_matches_mpmath():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = rng.integers(1, 11)
        means = rng.gamma(1.0, 10 ** rng.uniform(0, 5), size=n)
        counts = rng.poisson(means)
        assert poisson_loglik(counts, means) == pytest.approx(
            oracles.poisson_loglik_mp(counts, means), abs=1e-10)


def test_poisson_loglik_count_increase_closed_form():
    means = np.array([3.0, 10.0, 0.5])
    z = np.array([2, 8, 1])
    dz = np.array([1, 3, 2])
    diff = poisson_loglik(z + dz, means) - poisson_loglik(z, means)
    expected = np.sum(dz * np.log(means) - (np.array([math.lgamma(v + 1) for v in z + dz])
                                            - np.array([math.lgamma(v + 1) for v in z])))
    assert diff == pytest.approx(expected, abs=1e-12)


def test_log_prior_matches_scipy_and_mpmath():
    priors = PriorSpec.default(FIXED, r0_2=2.5)
    values = priors.means
    expected = sum(stats.gamma.logpdf(v, s, scale=1 / r)
                   for v, s, r in zip(values, priors.shapes, priors.rates))
    assert log_prior(values, priors) == pytest.approx(expected, rel=1e-12)
    for v, s, r in zip(values, priors.shapes, priors.rates):
        assert gamma_logpdf(v, s, r) == pytest.approx(oracles.gamma_logpdf_mp(v, s, r),
                                                       abs=1e-12)


def test_log_prior_support_and_exponential_case():
    priors = PriorSpec((1.0,) * 9, (2.0,) * 9)
    th = np.full(9, 0.25)
    assert log_prior(th, priors) == pytest.approx(9 * (math.log(2.0) - 0.5))
    th[3] = 0.0
    assert log_prior(th, priors) == -math.inf
    assert gamma_logpdf(-1.0, 1.0, 1.0) == -math.inf


@pytest.fixture(scope="module")
def synthetic():
    g = GAMMA
    th = ThetaVector(1.2 * g, 3.0 * g, 3 * g, 3 * g, 0.001, 0.001, 0.1, 0.1, 0.05)
    edges = 7.0 * np.arange(31)
    counts = np.random.default_rng(5).poisson(expected_weekly_incidence(th, edges, FIXED))
    return th, ObservationWindow(edges, counts)


def test_log_posterior_decomposes(synthetic):
    th, window = synthetic
    priors = PriorSpec.default(FIXED, r0_2=3.0)
    lp = log_posterior(th, window, priors, FIXED)
    assert lp == log_likelihood(th, window, FIXED) + log_prior(th, priors)
    target = LogPosterior(window, priors, FIXED)
    assert target(th.as_array()) == pytest.approx(lp, rel=1e-14)


def test_log_posterior_prefers_truth(synthetic):
    th, window = synthetic
    target = LogPosterior(window, PriorSpec.default(FIXED, r0_2=3.0), FIXED)
    off = th.as_array().copy()
    off[0] *= 3
    assert target(th.as_array()) > target(off)


def test_log_posterior_skips_solver_off_support(synthetic):
    _, window = synthetic
    target = LogPosterior(window, PriorSpec.default(FIXED), FIXED)
    bad = np.full(9, 0.1)
    bad[2] = -1.0
    assert target(bad) == -math.inf
    assert target.n_solves == 0


def test_log_posterior_maps_failure_to_minus_inf(synthetic, monkeypatch):
    th, window = synthetic
    from twopathogen import _kernels as K
    target = LogPosterior(window, PriorSpec.default(FIXED), FIXED)
    monkeypatch.setattr(obs, "_solve", lambda *a: (K.STEP_TOO_SMALL, None))
    assert target(th.as_array()) == -math.inf
    assert target.n_failures == 1


def test_likelihood_invariant_under_pathogen_swap(synthetic):
    th, window = synthetic
    assert log_likelihood(th.swapped(), window, FIXED) == pytest.approx(
        log_likelihood(th, window, FIXED), abs=1e-6)


def test_theta_names():
    assert THETA_NAMES[0] == "beta1" and THETA_NAMES[-1] == "k_scale" and len(THETA_NAMES) == 9
