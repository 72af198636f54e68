"""Episode runner, experiment aggregation and regret-bound evaluators."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .environments import Bandit, Bernoulli, Exponential, Gaussian, means_stream, policy_stream
from .policies import PolicyConfig, make_policy


@dataclass
class Trajectory:
    actions: np.ndarray
    regret_path: np.ndarray
    pull_counts: np.ndarray
    seed: int

    @property
    def final_regret(self) -> float:
        return float(self.regret_path[-1])


def _kernel_actions(policy: PolicyConfig, losses: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    K, T = losses.shape
    p = policy.with_horizon(T)
    first = p.tie_break == "first"
    if p.kind == "ensemble":
        sched = p.batch_schedule(T)
        anytime = sched.kind == "anytime"
        return kernels.ensemble_episode(losses, anytime, 1 if anytime else sched.n_batches,
                                        p.efficient, p.warmup, first, rng)
    if p.kind == "ucb":
        return kernels.ucb_episode(losses, p.alpha, p.scale, first, rng)
    if p.kind == "ucbv":
        return kernels.ucbv_episode(losses, p.scale, p.c_var, p.c_range, first, rng)
    if p.kind == "klucb":
        return kernels.klucb_episode(losses, kernels.FAMILY_CODES[p.family], p.kl_c, p.scale, first, rng)
    if p.kind == "mars":
        return kernels.mars_episode(losses, p.n_subsets or 0, first, rng)
    raise ValueError(f"unknown policy kind {p.kind!r}")


def _stepwise_actions(policy: PolicyConfig, losses: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    K, T = losses.shape
    agent = make_policy(policy.with_horizon(T), K, rng, horizon=T)
    actions = np.empty(T, dtype=np.int64)
    for t in range(T):
        a = agent.select_action()
        agent.update(a, losses[a, agent.pull_counts[a]])
        actions[t] = a
    return actions


def simulate(policy: PolicyConfig, losses: np.ndarray, gaps: np.ndarray, seed: int,
             stepwise: bool = False) -> Trajectory:
    """Run one episode against an explicit ``(K, T)`` loss table.

    ``stepwise=True`` drives the reference policy objects one step at a time
    instead of the compiled episode kernel. Both give the same actions.
    """
    losses = np.ascontiguousarray(losses, dtype=np.float64)
    gaps = np.asarray(gaps, dtype=np.float64)
    if losses.ndim != 2 or losses.shape[1] < 1:
        raise ValueError("loss table must have shape (K, T) with T >= 1")
    rng = policy_stream(seed)
    run = _stepwise_actions if stepwise else _kernel_actions
    actions = run(policy, losses, rng)
    return Trajectory(
        actions=actions,
        regret_path=np.cumsum(gaps[actions]),
        pull_counts=np.bincount(actions, minlength=losses.shape[0]).astype(np.int64),
        seed=seed,
    )


def run_episode(policy: PolicyConfig, bandit: Bandit, T: int, seed: int,
                stepwise: bool = False) -> Trajectory:
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T!r}")
    return simulate(policy, bandit.loss_table(T, seed), bandit.gaps, seed, stepwise)


# ---------------------------------------------------------------------------
# presets


@dataclass(frozen=True)
class Preset:
    """A named bandit family. Fixed presets return the same bandit for every
    seed. Random presets draw their means from the seed's means stream."""

    name: str
    description: str
    factory: Callable[[int], Bandit] = field(repr=False, compare=False)
    random_means: bool = False

    def bandit(self, seed: int) -> Bandit:
        return self.factory(seed)


def _fixed(bandit: Bandit):
    return lambda seed: bandit


def _uniform_bernoulli(seed):
    return Bandit.bernoulli(means_stream(seed).uniform(0.0, 1.0, 10))


def _uniform_gaussian(seed):
    return Bandit(tuple(Gaussian(float(m), 1.0) for m in means_stream(seed).uniform(0.0, 1.0, 10)))


MIN_EXPONENTIAL_RATE = 0.01


def _uniform_exponential(seed):
    rates = means_stream(seed).uniform(MIN_EXPONENTIAL_RATE, 1.0, 10)
    return Bandit(tuple(Exponential(float(r)) for r in rates))


TESTCASE1_MEANS = (0.001, 0.15, 0.2, 0.25, 0.3)
TESTCASE2_MEANS = tuple(round(0.9 + 0.01 * i, 2) for i in range(10))

PRESETS: dict[str, Preset] = {
    "testcase1": Preset("testcase1", "5 Bernoulli arms, clear low-variance best arm",
                        _fixed(Bandit.bernoulli(TESTCASE1_MEANS))),
    "testcase2": Preset("testcase2", "10 Bernoulli arms with means 0.90..0.99",
                        _fixed(Bandit.bernoulli(TESTCASE2_MEANS))),
    "testcase3": Preset("testcase3", "10 Bernoulli arms, means ~ U[0,1] per simulation",
                        _uniform_bernoulli, random_means=True),
    "testcase4": Preset("testcase4", "10 Gaussian arms, sigma=1, means ~ U[0,1] per simulation",
                        _uniform_gaussian, random_means=True),
    "testcase5": Preset("testcase5", "10 exponential arms, rates ~ U[0.01,1] per simulation",
                        _uniform_exponential, random_means=True),
}

# baseline settings used for the unbounded presets
PRESET_POLICY_DEFAULTS = {
    "testcase4": {"klucb": {"family": "gaussian"}},
    "testcase5": {"klucb": {"family": "exponential"}},
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)} or 'custom'") from None


# ---------------------------------------------------------------------------
# experiments


@dataclass
class ExperimentResult:
    labels: list[str]
    T: int
    N: int
    seeds: list[int]
    mean: np.ndarray          # (P, T)
    std: np.ndarray           # (P, T), population std over simulations
    final_regrets: np.ndarray  # (P, N)
    pull_counts: np.ndarray   # (P, N, K)
    metadata: dict = field(default_factory=dict)

    def final_mean(self, label: str) -> float:
        return float(self.mean[self.labels.index(label), -1])

    def rows(self):
        for p, label in enumerate(self.labels):
            for t in range(self.T):
                yield label, t + 1, float(self.mean[p, t]), float(self.std[p, t])


def _episode_task(args):
    policy, bandit, T, seed = args
    traj = run_episode(policy, bandit, T, seed)
    return traj.regret_path, traj.pull_counts


def run_experiment(policies: Sequence[PolicyConfig], bandit: Bandit | Preset, T: int, N: int,
                   base_seed: int = 0, parallel: int = 1) -> ExperimentResult:
    """``N`` episodes per policy with seeds ``base_seed + i``.

    Every policy sees the same seeds, hence the same loss tables and (for
    random presets) the same sampled means in simulation ``i``.
    """
    if N < 1 or T < 1:
        raise ValueError("need N >= 1 and T >= 1")
    labels = [p.label for p in policies]
    if len(set(labels)) != len(labels):
        raise ValueError(f"policy labels must be unique, got {labels}")
    seeds = [base_seed + i for i in range(N)]
    if isinstance(bandit, Preset):
        bandits = [bandit.bandit(s) for s in seeds]
    else:
        bandits = [bandit] * N
    tasks = [(p, bandits[i], T, seeds[i]) for p in policies for i in range(N)]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_episode_task, tasks, chunksize=max(1, len(tasks) // (4 * parallel))))
    else:
        results = [_episode_task(t) for t in tasks]

    P = len(policies)
    K = bandits[0].n_arms
    paths = np.empty((P, N, T))
    pulls = np.empty((P, N, K), dtype=np.int64)
    for j, (path, counts) in enumerate(results):
        paths[j // N, j % N] = path
        pulls[j // N, j % N] = counts
    return ExperimentResult(
        labels=labels, T=T, N=N, seeds=seeds,
        mean=paths.mean(axis=1), std=paths.std(axis=1),
        final_regrets=paths[:, :, -1].copy(), pull_counts=pulls,
        metadata={"std": "population (ddof=0)"},
    )


# ---------------------------------------------------------------------------
# regret bounds


def _suboptimal(bandit: Bandit):
    gaps = bandit.gaps
    mask = gaps > 0.0
    return gaps[mask], bandit.variances[mask]


def fixed_horizon_bounds(bandit: Bandit, T: int, delta: float) -> dict[str, float]:
    """High-probability regret bounds for the fixed-``l`` batch ensemble."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta!r}")
    K = bandit.n_arms
    L = math.log(6.0 * T * K / delta)
    gaps, var = _suboptimal(bandit)
    dependent = 3.5 * float(np.sum(var / gaps + 2.0)) * L * L
    spread = min(bandit.optimal_mean * K, float(np.sum(var)))
    independent = math.sqrt(14.0 * T * spread) * L + 11.0 * K * L * L
    return {"instance_dependent": dependent, "instance_independent": independent}


def anytime_bounds(bandit: Bandit, t: int) -> dict[str, float]:
    """Expected-regret bounds for the anytime schedule ``l_t = 8 ln t``."""
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t!r}")
    K = bandit.n_arms
    L = math.log(72.0 * t)
    gaps, var = _suboptimal(bandit)
    dependent = float(np.sum(9.0 * (8.0 * var / gaps + 4.0 / 3.0))) * L * L
    spread = min(bandit.optimal_mean * K, float(np.sum(var)))
    independent = 17.0 * math.sqrt(t * spread) * L + 84.0 * K * L * L
    return {"instance_dependent": dependent, "instance_independent": independent}
