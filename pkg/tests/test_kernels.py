import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from batchens import kernels
from batchens._accel import NUMBA_ENABLED, python_impl
from batchens.environments import Bandit, Exponential, Gaussian
from batchens.policies import kl_lower_bound, parse_policy
from batchens.simulator import simulate

SPECS = [
    "ensemble", "ensemble-efficient", "ensemble-fixed", "ensemble-fixed-efficient",
    "ensemble-fixed:n_batches=3", "ensemble:warmup=2", "ensemble-efficient:warmup=3",
    "ensemble:tie_break=first", "ucb", "ucb:alpha=1.2:scale=0.5", "ucbv", "ucbv:tie_break=first",
    "klucb", "klucb:kl_c=0", "mars", "mars:n_subsets=3",
]


def _table(seed, K=4, T=220):
    return Bandit.bernoulli(np.random.default_rng(seed).uniform(0.05, 0.95, K)).loss_table(T, seed)


@pytest.mark.parametrize("spec", SPECS)
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_kernel_matches_reference_policy(spec, seed):
    losses = _table(seed)
    gaps = np.zeros(losses.shape[0])
    policy = parse_policy(spec)
    fast = simulate(policy, losses, gaps, seed)
    slow = simulate(policy, losses, gaps, seed, stepwise=True)
    np.testing.assert_array_equal(fast.actions, slow.actions)


@pytest.mark.parametrize("spec,arms", [
    ("klucb:family=gaussian", (Gaussian(0.2), Gaussian(0.5), Gaussian(0.9))),
    ("klucb:family=exponential", (Exponential(1.0), Exponential(0.5), Exponential(3.0))),
    ("ensemble", (Gaussian(0.2), Gaussian(0.5))),
    ("ucbv", (Exponential(1.0), Exponential(0.4))),
])
def test_kernel_matches_reference_unbounded(spec, arms):
    losses = Bandit(arms).loss_table(150, 5)
    policy = parse_policy(spec)
    fast = simulate(policy, losses, np.zeros(len(arms)), 5)
    slow = simulate(policy, losses, np.zeros(len(arms)), 5, stepwise=True)
    np.testing.assert_array_equal(fast.actions, slow.actions)


def test_uncompiled_kernel_source_agrees():
    losses = _table(7, T=120)
    a = kernels.ensemble_episode(losses, True, 1, False, 0, False, np.random.default_rng(1))
    b = python_impl(kernels.ensemble_episode)(losses, True, 1, False, 0, False, np.random.default_rng(1))
    np.testing.assert_array_equal(a, b)
    c = kernels.mars_episode(losses, 0, False, np.random.default_rng(2))
    d = python_impl(kernels.mars_episode)(losses, 0, False, np.random.default_rng(2))
    np.testing.assert_array_equal(c, d)


@pytest.mark.parametrize("mean,level,family", [
    (0.5, 0.1, 0), (0.0, 0.3, 0), (0.97, 2.0, 0), (0.3, 0.05, 1), (2.0, 0.3, 2), (0.0, 1.0, 2),
])
def test_kl_kernel_matches_reference(mean, level, family):
    name = {v: k for k, v in kernels.FAMILY_CODES.items()}[family]
    assert kernels.kl_lower_bound(mean, level, family, 1.0) == kl_lower_bound(mean, level, name)


def test_binomial_kernel_against_pmf_sum():
    for n, k, mu in [(3, 1, 0.5), (100, 28, 0.29), (40, 0, 0.01), (1, 0, 0.0), (5, 5, 0.3)]:
        direct = sum(math.comb(n, i) * mu ** i * (1 - mu) ** (n - i) for i in range(k + 1))
        assert math.isclose(kernels.binom_cdf_log_space(n, k, mu), direct, rel_tol=1e-12)


_PROBE = """
import json, numpy as np
from batchens import verify
from batchens._accel import backend_name
from batchens.environments import Bandit
from batchens.policies import parse_policy
from batchens.simulator import simulate
losses = Bandit.bernoulli([0.1, 0.4, 0.6]).loss_table(300, 3)
acts = {s: simulate(parse_policy(s), losses, np.zeros(3), 3).actions.tolist()
        for s in ("ensemble", "ensemble-efficient:warmup=2", "ucb", "ucbv", "klucb", "mars")}
print(json.dumps({"backend": backend_name(), "actions": acts,
                  "opt": verify.optimism_probability_mc(0.4, 30, 4, 10_000, 1).hits,
                  "conc": verify.concentration_check(0.3, None, 40, 3, 0.1, 10_000, 2).hits,
                  "exact": verify.optimism_probability_exact(0.3, 12, 3)}))
"""


def _probe(disable):
    env = dict(os.environ, BATCHENS_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", _PROBE], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


@pytest.mark.skipif(not NUMBA_ENABLED, reason="compares against the compiled backend")
def test_numpy_fallback_reproduces_compiled_backend():
    fast, slow = _probe(False), _probe(True)
    assert (fast["backend"], slow["backend"]) == ("numba", "numpy")
    assert fast["actions"] == slow["actions"]
    assert fast["opt"] == slow["opt"] and fast["conc"] == slow["conc"]
    assert math.isclose(fast["exact"], slow["exact"], rel_tol=1e-12)
