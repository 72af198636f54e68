import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from batchens.policies import (
    BatchEnsemblePolicy,
    PolicyConfig,
    break_ties,
    kl_bernoulli,
    kl_exponential,
    kl_lower_bound,
    klucb_budget,
    klucb_index,
    make_policy,
    mars_index,
    mars_subset_count,
    parse_policy,
    ucb_index,
    ucbv_index,
    warmup_size,
)


def test_ucb_index_examples():
    assert math.isclose(ucb_index(0.5, 8, math.exp(4)), -0.5)
    assert ucb_index(0.3, 5, 1) == 0.3


def test_ucbv_index_examples():
    # 0.5 - sqrt(0.02) - 0.12
    assert math.isclose(ucbv_index(0.5, 0.25, 25, math.e), 0.5 - math.sqrt(0.02) - 0.12)
    assert round(ucbv_index(0.5, 0.25, 25, math.e), 4) == 0.2386
    assert math.isclose(ucbv_index(0.4, 0.0, 10 ** 9, 100.0), 0.4, abs_tol=1e-7)


def test_kl_divergences():
    assert kl_bernoulli(0.3, 0.3) == 0.0
    assert kl_bernoulli(0.0, 0.5) == pytest.approx(math.log(2))
    assert kl_bernoulli(0.5, 0.0) == math.inf
    assert kl_bernoulli(0.5, 1.0) == math.inf
    assert kl_exponential(2.0, 2.0) == 0.0
    assert kl_exponential(1.0, 0.0) == math.inf


def test_kl_lower_bound_boundaries():
    assert kl_lower_bound(0.0, 0.7) == 0.0
    assert klucb_budget(1) == 0.0
    assert klucb_index(0.42, 5, 1) == 0.42
    with pytest.raises(ValueError):
        kl_lower_bound(0.5, -1.0)
    with pytest.raises(ValueError):
        kl_lower_bound(1.5, 0.1)
    with pytest.raises(ValueError):
        kl_lower_bound(0.5, 0.1, family="poisson")


def test_kl_lower_bound_ten_samples_unit_budget():
    # 10 KL(0.5, q) = 1  <=>  4 q (1 - q) = exp(-0.2): closed form and grid scan agree
    closed = 0.5 * (1.0 - math.sqrt(1.0 - math.exp(-0.2)))
    grid = np.linspace(0.0, 0.5, 5_000_001)[1:]
    kl = 0.5 * np.log(0.5 / grid) + 0.5 * np.log(0.5 / (1 - grid))
    scan = grid[np.argmax(10 * kl <= 1.0)]
    q = kl_lower_bound(0.5, 0.1)
    assert abs(q - closed) <= 1e-9
    assert abs(q - scan) <= 1e-7
    assert round(q, 5) == 0.28712


def test_kl_lower_bound_gaussian_and_exponential():
    assert math.isclose(kl_lower_bound(1.0, 0.125, "gaussian", sigma=2.0), 0.0)
    m, level = 2.0, 0.3
    root = optimize.brentq(lambda q: kl_exponential(m, q) - level, 1e-9, m)
    assert abs(kl_lower_bound(m, level, "exponential") - root) <= 1e-8


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 5.0))
def test_kl_lower_bound_feasible_and_tight(mean, level):
    q = kl_lower_bound(mean, level)
    assert 0.0 <= q <= mean
    assert kl_bernoulli(mean, q) <= level + 1e-12
    if q > 1e-9:
        assert kl_bernoulli(mean, q - 2e-9) > level - 1e-12


def test_mars_trivial_cases():
    rng = np.random.default_rng(0)
    assert mars_index([0.5], 10, rng) == 0.5
    assert mars_index([0.25] * 40, 100, rng) == 0.25
    with pytest.raises(ValueError):
        mars_index([], 10, rng)
    assert mars_subset_count(2000) == 61


def test_mars_two_samples_law():
    # nested subsets share the first shuffled element: index 0 iff it is the 0 sample
    rng = np.random.default_rng(5)
    values = np.array([mars_index([0.0, 1.0], 1000, rng) for _ in range(20_000)])
    assert set(np.unique(values)) <= {0.0, 0.5}
    assert abs((values == 0.0).mean() - 0.5) < 4 * math.sqrt(0.25 / values.size)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=40), st.integers(2, 5000), st.integers(0, 2 ** 32))
def test_mars_index_bounded_by_samples(xs, t, seed):
    v = mars_index(xs, t, np.random.default_rng(seed))
    assert min(xs) - 1e-12 <= v <= max(xs) + 1e-12


def test_warmup_size():
    assert warmup_size(1.0) == 4
    assert warmup_size(0.5) == 16
    with pytest.raises(ValueError):
        warmup_size(0.0)


def test_break_ties():
    assert break_ties([0.2, 0.1, 0.1], 0.0) == 1
    assert break_ties([0.2, 0.1, 0.1], 0.99) == 2
    assert break_ties([0.0, 0.0], 1.0) == 1


def test_parse_policy():
    assert parse_policy("ucb:alpha=1.5").alpha == 1.5
    p = parse_policy("ensemble-fixed-efficient:n_batches=8:label=e8")
    assert (p.kind, p.schedule, p.efficient, p.n_batches, p.label) == ("ensemble", "fixed", True, 8, "e8")
    assert parse_policy("kl-ucb:family=gaussian").family == "gaussian"
    assert parse_policy("ensemble-efficient").label == "ensemble-efficient"
    for bad in ("thompson", "ucb:alpha", "ucb:gamma=1", "ucb:alpha=x", "ucb:kind=mars", "ucb:alpha=-1"):
        with pytest.raises(ValueError):
            parse_policy(bad)


def test_config_round_trip_and_schedule():
    p = PolicyConfig("ensemble", schedule="fixed", delta=0.05)
    assert p.with_horizon(2000).n_batches == 40
    assert PolicyConfig.from_dict(p.to_dict()) == p
    with pytest.raises(ValueError):
        p.batch_schedule()
    for kwargs in (dict(kind="x"), dict(kind="ucb", alpha=0), dict(kind="ensemble", warmup=-1),
                   dict(kind="ensemble", delta=1.0), dict(kind="ucb", tie_break="last"),
                   dict(kind="mars", n_subsets=0), dict(kind="ensemble", schedule="daily")):
        with pytest.raises(ValueError):
            PolicyConfig(**kwargs)


def test_ensemble_first_step_is_uniform_tie():
    picks = [make_policy(PolicyConfig("ensemble"), 2, rng=s).select_action() for s in range(400)]
    assert 150 < sum(picks) < 250


def test_ensemble_prefers_lower_estimate():
    pol = make_policy(PolicyConfig("ensemble", schedule="fixed", n_batches=1), 2, rng=0)
    pol.estimators[0].extend([1.0, 1.0])
    pol.estimators[1].extend([0.0])
    assert pol.indices() == [0.5, 0.0]
    assert pol.select_action() == 1


def test_scaling_losses_keeps_choice():
    hist = [[0.3, 0.9, 0.1], [0.5, 0.2], [0.0, 0.7, 0.7, 0.4]]
    for b in (0.5, 3.0, 10.0):
        picks = []
        for scale in (1.0, b):
            pol = make_policy(PolicyConfig("ensemble", schedule="fixed", n_batches=2), 3, rng=11)
            for est, xs in zip(pol.estimators, hist):
                est.extend([scale * x for x in xs])
            picks.append(pol.select_action())
        assert picks[0] == picks[1]


def test_update_misuse_rejected():
    pol = make_policy(PolicyConfig("ucb"), 3, rng=0)
    with pytest.raises(ValueError):
        pol.update(0, 1.0)
    a = pol.select_action()
    with pytest.raises(ValueError):
        pol.update((a + 1) % 3, 1.0)
    pol.update(a, 1.0)
    assert pol.t == 2 and pol.pull_counts.sum() == 1
    with pytest.raises(ValueError):
        make_policy(PolicyConfig("ucb"), 0)


def test_anytime_rebatch_happens_before_next_observation():
    pol = make_policy(PolicyConfig("ensemble"), 2, rng=3)
    for t in range(1, 60):
        a = pol.select_action()
        pol.update(a, 1.0)
        # after update at step t the estimators already carry l_{t+1}
        assert all(e.n_batches == math.ceil(8 * math.log(t + 1)) for e in pol.estimators)


def test_baselines_pull_every_arm_first():
    for kind in ("ucb", "ucbv", "klucb", "mars"):
        pol = make_policy(PolicyConfig(kind), 4, rng=1)
        seen = []
        for _ in range(4):
            a = pol.select_action()
            seen.append(a)
            pol.update(a, 0.5)
        assert sorted(seen) == [0, 1, 2, 3]


def test_warmup_fills_batches_first():
    cfg = PolicyConfig("ensemble", schedule="fixed", n_batches=2, warmup=3)
    pol = make_policy(cfg, 2, rng=0)
    for _ in range(12):
        a = pol.select_action()
        pol.update(a, 0.0)
    assert [e.counts for e in pol.estimators] == [[3, 3], [3, 3]]


def test_distributed_decision_is_a_global_minimiser():
    rng = np.random.default_rng(4)
    for _ in range(50):
        pol = make_policy(PolicyConfig("ensemble", schedule="fixed", n_batches=3, tie_break="first"), 4, rng=0)
        assert isinstance(pol, BatchEnsemblePolicy)
        for est in pol.estimators:
            est.extend(rng.random(rng.integers(0, 10)))
        arm, batch = pol.distributed_decision()
        assert pol.indices()[arm] == min(pol.indices())
        assert pol.estimators[arm].batch_estimates()[batch] == min(pol.indices())
