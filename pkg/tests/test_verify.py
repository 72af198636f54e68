import itertools
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from batchens import kernels, verify
from batchens.environments import Bernoulli, Exponential, ScaledBernoulli, Uniform


def test_anticoncentration_small_cases():
    assert verify.binomial_anticoncentration(3, 0.5) == pytest.approx(0.5, rel=1e-14)
    assert verify.binomial_anticoncentration(1, 0.0) == 1.0
    with pytest.raises(ValueError):
        verify.binomial_anticoncentration(0, 0.5)
    with pytest.raises(ValueError):
        verify.binomial_anticoncentration(3, 1.5)


def test_anticoncentration_against_scipy():
    for n in (1, 2, 7, 30, 99, 100, 500):
        for k in range(1, 100):
            mu = k / 100
            kfloor = (k * n) // 100
            ref = stats.binom.cdf(kfloor, n, mu)
            assert math.isclose(verify.binomial_anticoncentration(n, mu), ref, rel_tol=1e-10)


def test_floor_guard_on_inexact_products():
    # 100 * 0.29 == 28.999999999999996 in floating point
    assert verify.binomial_anticoncentration(100, 0.29) == pytest.approx(stats.binom.cdf(29, 100, 0.29), rel=1e-10)


def test_anticoncentration_sweep_grid():
    reports = verify.anticoncentration_sweep(100)
    expected = sum(1 for n in range(1, 101) for k in range(1, 100) if k * n <= 100 * (n - 1))
    assert len(reports) == expected
    assert all(r.passed for r in reports)
    assert min(r.value for r in reports) >= 0.25


@settings(max_examples=300, deadline=None)
@given(st.integers(2, 400), st.floats(0.0, 1.0))
def test_anticoncentration_property(n, frac):
    mu = frac * (1.0 - 1.0 / n)
    assert verify.binomial_anticoncentration(n, mu) >= 0.25 - 1e-12


def _brute_optimism(mu, n, l):
    total = 0.0
    for bits in itertools.product((0, 1), repeat=n):
        sums, counts = [0] * l, [0] * l
        for i, x in enumerate(bits):
            sums[i % l] += x
            counts[i % l] += 1
        est = min(s / (c + 2) for s, c in zip(sums, counts))
        if est <= mu:
            total += mu ** sum(bits) * (1 - mu) ** (n - sum(bits))
    return total


@pytest.mark.parametrize("mu,n,l", [(0.5, 6, 2), (0.3, 8, 3), (0.9, 7, 1), (0.05, 9, 2), (0.5, 2, 3)])
def test_exact_optimism_against_brute_force(mu, n, l):
    exact = verify.optimism_probability_exact(mu, n, l)
    assert math.isclose(exact, _brute_optimism(mu, n, l), rel_tol=1e-12)
    assert math.isclose(exact, verify.optimism_probability_product(mu, n, l), rel_tol=1e-12)


def test_optimism_examples():
    # both batches hold 3 samples and overestimate iff they hold >= 3 ones
    assert verify.optimism_probability_exact(0.5, 6, 2) == pytest.approx(63 / 64, rel=1e-14)
    assert verify.optimism_probability_exact(0.5, 6, 2) >= verify.optimism_bound(2) == 0.4375
    assert verify.optimism_probability_exact(1.0, 9, 2) == 1.0
    assert verify.optimism_probability_exact(0.0, 9, 2) == 1.0
    with pytest.raises(ValueError):
        verify.optimism_probability_exact(0.5, 21, 2)


def test_numpy_enumeration_matches_kernel():
    for mu, n, l in [(0.3, 12, 3), (0.7, 17, 2)]:
        assert math.isclose(verify._optimism_exact_numpy(mu, n, l),
                            kernels.optimism_exact_kernel(mu, n, l), rel_tol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 1.0), st.integers(0, 10), st.integers(1, 4))
def test_optimism_bound_property(mu, n, l):
    assert verify.optimism_probability_product(mu, n, l) >= verify.optimism_bound(l) - 1e-12


def test_optimism_mc_agrees_with_exact():
    est = verify.optimism_probability_mc(0.3, 12, 3, 50_000, seed=3)
    exact = verify.optimism_probability_exact(0.3, 12, 3)
    assert abs(est.value - exact) < 4 * max(est.stderr, 1e-4)
    with pytest.raises(ValueError):
        verify.optimism_probability_mc(0.3, 12, 3, 100)


def test_mc_fallbacks_draw_identically():
    a = kernels.optimism_mc_kernel(0.45, 37, 5, 12_345, np.random.default_rng(8))
    b = verify._optimism_mc_numpy(0.45, 37, 5, 12_345, np.random.default_rng(8))
    assert a == b
    c = kernels.concentration_mc_kernel(0.6, 0.24, 25, 4, 25, 0.5, 10_000, np.random.default_rng(9))
    d = verify._concentration_numpy(0.6, 0.24, 25, 4, 25, 0.5, 10_000, np.random.default_rng(9))
    assert c == d


def test_concentration_bound_formula():
    b = verify.concentration_bound(10, 2, 0.25, 100, 0.1)
    m = 6.0
    assert math.isclose(b, 2 / m * math.log(3000) + math.sqrt(0.25 / m * math.log(1000)))


@pytest.mark.parametrize("mu", [0.0, 1.0])
def test_concentration_zero_variance_arms(mu):
    est = verify.concentration_check(mu, 0.0, 60, 3, 0.1, 10_000, seed=1)
    assert est.hits == 0


def test_concentration_rate_below_delta():
    est = verify.concentration_check(0.5, None, 100, 5, 0.1, 10_000, seed=4)
    assert est.value <= 0.1
    with pytest.raises(ValueError):
        verify.concentration_check(0.5, None, 10, 2, 1.2, 10_000)


def test_berry_esseen_warmup():
    gauss = 2 * math.sqrt(2 / math.pi)
    assert verify.berry_esseen_warmup(1.0, gauss) == 11
    assert verify.berry_esseen_warmup(1.0, 0.5) == 1
    assert verify.berry_esseen_warmup(2.0, 1e-9) == 1
    with pytest.raises(ValueError):
        verify.berry_esseen_warmup(0.0, 1.0)


def test_below_mean_probability_matches_exact_bernoulli():
    rng = np.random.default_rng(12)
    for n in (1, 5, 20):
        est = verify.below_mean_probability(Bernoulli(0.1), n, 40_000, rng)
        exact = verify.binomial_anticoncentration(n, 0.1)
        assert abs(est.value - exact) < 4 * est.stderr + 1e-12


def test_conjecture_scan():
    sym = verify.conjecture_scan(Bernoulli(0.5), [1, 3, 9], 20_000, seed=0)
    assert all(r.value >= 0.5 - 4 * r.stderr for r in sym)
    const = verify.conjecture_scan(Bernoulli(1.0), [4], 10_000, seed=0)
    assert const[0].value == 1.0
    scaled = verify.conjecture_scan(ScaledBernoulli(1.5, 1.5), [7], 10_000, seed=0)
    assert scaled[0].value == 1.0
    reports = verify.conjecture_scan(Exponential(1.0), [1, 10], 10_000, seed=1)
    reports += verify.conjecture_scan(Uniform(0.0, 1.0), [1, 10], 10_000, seed=1)
    assert all(not r.blocking and not r.exact for r in reports)
    assert all(r.passed for r in reports)
    # the sum of n standard exponentials is Gamma(n, 1)
    assert abs(reports[1].value - stats.gamma.cdf(10, 10)) < 4 * reports[1].stderr


def test_quick_suite_passes_fast():
    start = time.perf_counter()
    reports = verify.run_suite(quick=True)
    assert time.perf_counter() - start < 10
    assert verify.suite_passed(reports)
    claims = {r.claim for r in reports}
    assert claims == {"anticoncentration", "optimism_exact", "optimism_product_law", "optimism_mc", "concentration_mc", "conjecture"}
    assert max(r.params["n"] for r in reports) <= 30


def test_shifted_bound_fails_suite():
    assert not verify.suite_passed(verify.run_suite(quick=True, bound_shift=0.5))


def test_report_csv():
    r = verify.VerificationReport("anticoncentration", {"n": 3, "mu": 0.5}, 0.5, 0.25, True)
    text = verify.write_reports([r])
    assert text == "claim,params,value,stderr,bound,pass\nanticoncentration,n=3;mu=0.5,0.5,0,0.25,1\n"


def _brute_violations(mu, sigma2, n, l, horizon, delta, trials, rng):
    bounds = [verify.concentration_bound(i, l, sigma2, horizon, delta) for i in range(n + 1)]
    bad_trials = 0
    for _ in range(trials):
        sums, counts, bad = [0.0] * l, [0] * l, False
        for i in range(n):
            counts[i % l] += 1
            if rng.random() < mu:
                sums[i % l] += 1.0
            est = min(s / (c + 2) for s, c in zip(sums, counts))
            bad = bad or mu - est > bounds[i + 1]
        bad_trials += bad
    return bad_trials


def test_violation_counter_detects_tight_bounds():
    # horizon 1 with delta near 1 makes the bound small enough to be crossed often
    est = verify.concentration_check(0.5, None, 50, 1, 0.99, 10_000, seed=6, horizon=1)
    brute = _brute_violations(0.5, 0.25, 50, 1, 1, 0.99, 10_000, np.random.default_rng(6))
    assert est.hits == brute
    assert est.value > 0.1
