import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from unseen.chain import ChainParams, StateDistribution, negjump_event_rate
from unseen.infer import (BayesBound, DiscretePrior, EstimateReport, MagnitudeSample,
                          asymptotic_se, bayes_bound, consistency_bound, consistency_frequency,
                          estimate_mu, estimate_theta, invert_link, mu_from_event_rate, phi_moments,
                          phi_pmf, phi_table, replicate_estimates, rescale_record,
                          sample_magnitudes, variance, w_function)
from unseen.sim import NegJumpRecord, extract_negjumps, sample_path
from unseen.specfun import eval_L, eval_L_series


def test_phi_at_zero_is_point_mass():
    assert phi_pmf(0.0, 1) == 1.0
    np.testing.assert_array_equal(phi_pmf(0.0, [1, 2, 5]), [1.0, 0.0, 0.0])
    assert estimate_theta([1, 1, 1]).theta_hat == 0.0


@pytest.mark.parametrize("theta", [0.5, 2.0, 10.0, 150.0])
def test_phi_normalizes_with_right_mean(theta):
    p = phi_table(theta)
    assert abs(1 - math.fsum(p)) < 1e-12
    d = np.arange(1, p.size + 1)
    assert math.fsum(d * p) == pytest.approx(eval_L_series(theta).value, rel=1e-10)


def test_phi_rejects_bad_arguments():
    with pytest.raises(ValueError):
        phi_pmf(1.0, 0)
    with pytest.raises(ValueError):
        phi_pmf(-1.0, 1)


def test_phi_large_magnitudes_stay_finite():
    v = phi_pmf(3.0, 5000)
    assert 0.0 <= v < 1e-300 or v == 0.0


@pytest.mark.parametrize("theta", [0.5, 1.0, 2.0, 10.0])
def test_moments(theta):
    p = phi_table(theta)
    d = np.arange(1, p.size + 1, dtype=float)
    L = eval_L(theta).value
    assert phi_moments(theta, 1) == pytest.approx(L, rel=1e-12)
    var = phi_moments(theta, 2) - phi_moments(theta, 1) ** 2
    assert var == pytest.approx(theta + L * (1 - L), rel=1e-10)
    assert variance(theta) == pytest.approx(var, rel=1e-10)
    assert phi_moments(theta, 3) == pytest.approx(math.fsum(d**3 * p), rel=1e-12)
    assert phi_moments(theta, 4) == pytest.approx(math.fsum(d**4 * p), rel=1e-12)


@pytest.mark.parametrize("theta", [0.1, 1.0, 10.0, 100.0])
def test_inversion_round_trip(theta):
    got, _ = invert_link(eval_L(theta).value)
    assert got == pytest.approx(theta, abs=1e-8 * max(1.0, theta))


@given(st.floats(1.0001, 500.0))
@settings(max_examples=40, deadline=None)
def test_inversion_residual(dbar):
    theta, _ = invert_link(dbar)
    assert abs(eval_L(theta).value - dbar) < 1e-10 * dbar


def test_invert_rejects_below_one():
    with pytest.raises(ValueError):
        invert_link(0.9)


def test_estimator_uses_only_the_mean():
    a = estimate_theta([1, 2, 3, 6])
    b = estimate_theta([6, 3, 1, 2])
    c = estimate_theta([3, 3, 3, 3])
    assert a.theta_hat == b.theta_hat == c.theta_hat


def test_sample_validation():
    with pytest.raises(ValueError):
        MagnitudeSample([])
    with pytest.raises(ValueError):
        MagnitudeSample([1, 0])
    rec = NegJumpRecord([1.0, 2.0], [2, 3])
    s = MagnitudeSample.from_record(rec)
    assert s.n == 2 and s.dbar == 2.5


def test_estimate_in_band():
    d = sample_magnitudes(4.0, 10_000, seed=2024)
    r = estimate_theta(d)
    assert abs(r.theta_hat - 4.0) < 3.29 * asymptotic_se(4.0, 10_000)
    assert r.se_asymptotic == pytest.approx(asymptotic_se(r.theta_hat, 10_000))


def test_report_json_and_bound():
    r = estimate_theta(sample_magnitudes(2.0, 500, seed=1))
    doc = json.loads(r.to_json())
    assert set(doc) == {"theta_hat", "n", "dbar", "se_asymptotic", "mu_hat", "iterations"}
    assert 0 <= r.consistency_bound(10**4, 0.5) <= 1
    with pytest.raises(ValueError):
        EstimateReport(0.0, 3, 1.0, None).consistency_bound(10, 0.5)


def test_sampler_matches_law():
    d = sample_magnitudes(1.5, 200_000, seed=8)
    p = phi_table(1.5)
    emp = np.bincount(d, minlength=p.size + 1)[1:] / d.size
    assert 0.5 * np.abs(emp[: p.size] - p).sum() < 0.005
    assert np.array_equal(sample_magnitudes(0.0, 4, seed=1), [1, 1, 1, 1])


def test_consistency_bound_properties():
    b = [consistency_bound(1.0, m, 0.5) for m in (100, 1_000, 10_000, 100_000)]
    assert all(x <= y for x, y in zip(b, b[1:]))
    assert consistency_bound(1.0, 10, 1e6) > 0.999
    assert consistency_bound(1.0, 1, 1e-3) == 0.0
    with pytest.raises(ValueError):
        consistency_bound(1.0, 10, 0.0)


def test_consistency_tail_sum():
    from unseen.infer import _hr_tail
    m = 50
    explicit = 1 / m + math.fsum(1 / k**2 for k in range(m + 1, 2_000_000)) + 1 / 2_000_000
    assert _hr_tail(m) == pytest.approx(explicit, abs=1e-12)


def test_consistency_frequency_exceeds_bound():
    freq, _ = consistency_frequency(1.0, 1_000, 0.5, 100, 20_000, seed=3)
    assert freq >= consistency_bound(1.0, 1_000, 0.5)


def test_asymptotic_se_large_theta():
    theta, n = 1e4, 100
    assert asymptotic_se(theta, n) == pytest.approx(theta * math.sqrt(2 * (math.pi - 2) / n), rel=5e-3)
    with pytest.raises(ValueError):
        asymptotic_se(1.0, 0)


def test_replicate_sd_and_normality():
    est = replicate_estimates(4.0, 2_000, 300, seed=99)
    se = asymptotic_se(4.0, 2_000)
    assert est.std(ddof=1) == pytest.approx(se, rel=0.15)
    assert stats.kstest((est - 4.0) / se, "norm").pvalue > 0.01


def test_estimate_mu_and_rate_conversion():
    rec = NegJumpRecord(np.linspace(0.1, 4.9, 10), np.ones(10, dtype=int))
    assert estimate_mu(rec, 5.0) == 2.0
    with pytest.raises(ValueError):
        estimate_mu(NegJumpRecord([], []), 5.0)
    params = ChainParams.from_theta(2.0, 3.0)
    assert mu_from_event_rate(negjump_event_rate(params), 2.0) == pytest.approx(3.0, rel=1e-13)


def test_rescaling_keeps_theta():
    params = ChainParams.from_theta(1.0, 2.0)
    rec = extract_negjumps(sample_path(params, 0, 500.0, seed=5))
    mu_hat = estimate_mu(rec, 500.0)
    scaled = rescale_record(rec, mu_hat)
    assert np.array_equal(scaled.magnitudes, rec.magnitudes)
    assert estimate_mu(scaled, 500.0 * mu_hat) == pytest.approx(1.0)
    assert estimate_theta(scaled.magnitudes).theta_hat == estimate_theta(rec.magnitudes).theta_hat


def test_event_rate_by_simulation():
    params = ChainParams.from_theta(1.0, 1.0)
    horizon = 20_000.0
    rec = extract_negjumps(sample_path(params, StateDistribution.equilibrium(params), horizon, seed=31))
    # batch means over 20 blocks absorb the serial correlation
    counts = np.histogram(rec.times, bins=20, range=(0, horizon))[0] / (horizon / 20)
    se = counts.std(ddof=1) / math.sqrt(counts.size)
    assert abs(estimate_mu(rec, horizon) - negjump_event_rate(params)) < 3 * se


def test_w_function_and_point_prior():
    eps, m = 0.5, 10_000
    b = bayes_bound(eps, m, DiscretePrior.point(1.0))
    assert b.lower == b.upper == pytest.approx(consistency_bound(1.0, m, eps))
    assert isinstance(b, BayesBound) and not b.vacuous
    assert np.ndim(w_function([1.0, 2.0], eps)) == 1


def test_asymptotic_policy_interval_and_guards():
    b = bayes_bound(1.0, 10**6, prior_mean=100.0, prior_second_moment=11000.0, policy="asymptotic")
    assert b.lower < b.upper
    k = 2 * (math.pi - 2)
    assert b.expected_w == pytest.approx((k * 11000, k * (11000 + 100)))
    with pytest.raises(ValueError):
        bayes_bound(1.0, 10**6, prior_mean=100.0, prior_second_moment=math.inf, policy="asymptotic")
    with pytest.raises(ValueError):
        bayes_bound(1.0, 10**6, prior_mean=100.0, prior_second_moment=5000.0, policy="asymptotic")
    with pytest.raises(ValueError):
        bayes_bound(1.0, 10**6, policy="exact")
    with pytest.raises(ValueError):
        bayes_bound(1.0, 10**6, DiscretePrior.point(1.0), policy="grid")
    assert bayes_bound(0.01, 2, DiscretePrior.point(5.0)).vacuous


def test_asymptotic_policy_gap_shrinks_with_scale():
    # the asymptotic interval ignores the sqrt(theta) term of W, so its
    # relative miss against the exact prior average shrinks like theta^(-1/2)
    gaps = []
    for scale in (1, 10, 100):
        mean, second = 100.0 * scale, 11000.0 * scale**2
        prior = DiscretePrior.two_point(mean, second)
        exact = bayes_bound(1.0, 10**6, prior).expected_w[0]
        lo, hi = bayes_bound(1.0, 10**6, prior, policy="asymptotic").expected_w
        gaps.append(max(lo - exact, exact - hi, 0.0) / exact)
    for a, b in zip(gaps, gaps[1:]):
        assert b < a / 2.5


def test_prior_validation():
    with pytest.raises(ValueError):
        DiscretePrior([1.0, 2.0], [0.5, 0.6])
    with pytest.raises(ValueError):
        DiscretePrior.two_point(10.0, 50.0)
    q = DiscretePrior.two_point(10.0, 104.0)
    assert q.moment(1) == pytest.approx(10.0)
    assert q.moment(2) == pytest.approx(104.0)
