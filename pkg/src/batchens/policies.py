"""Action-selection policies for loss-minimising bandits.

All policies share one step cycle, ``select_action()`` then ``update(arm, loss)``,
and all pick the arm with the *smallest* index. Random tie-breaking uses
one uniform draw per step from the policy's own generator, so every policy
consumes randomness in a fixed pattern:

* MARS draws its subset randomness arm by arm (arms in index order), then
  the tie-break uniform.
* Every other policy draws only the tie-break uniform.

The classes here are the reference implementation. ``batchens.kernels``
re-implements the same loops for whole episodes, and the two are checked
against each other step by step in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np

from .estimator import ArmEstimator, BatchSchedule, EstimatorMode, anytime_batch_count

KL_TOL = 1e-9

# ---------------------------------------------------------------------------
# index formulas


def ucb_index(mean: float, n: int, t: int, alpha: float = 2.0, scale: float = 1.0) -> float:
    """Lower confidence index ``mean - scale * sqrt(alpha ln t / n)``."""
    return mean - scale * math.sqrt(alpha * math.log(t) / n)


def ucbv_index(mean: float, var: float, n: int, t: int, b: float = 1.0,
               c_var: float = 2.0, c_range: float = 3.0) -> float:
    """Empirical-Bernstein lower index ``mean - sqrt(2 var ln t / n) - 3 b ln t / n``."""
    log_t = math.log(t)
    return mean - math.sqrt(c_var * var * log_t / n) - c_range * b * log_t / n


def kl_bernoulli(p: float, q: float) -> float:
    """``KL(Ber(p) || Ber(q))`` with ``0 ln 0 = 0``; infinite off the support."""
    out = 0.0
    if p > 0.0:
        if q <= 0.0:
            return math.inf
        out += p * math.log(p / q)
    if p < 1.0:
        if q >= 1.0:
            return math.inf
        out += (1.0 - p) * math.log((1.0 - p) / (1.0 - q))
    return out


def kl_exponential(m: float, q: float) -> float:
    """KL between exponential laws with means ``m`` and ``q``."""
    if q <= 0.0:
        return math.inf
    r = m / q
    return r - 1.0 - math.log(r)


def klucb_budget(t: int, c: float = 3.0) -> float:
    """Exploration budget ``ln t + c ln ln max(t, e)``."""
    return math.log(t) + c * math.log(math.log(max(t, math.e)))


def kl_lower_bound(mean: float, level: float, family: str = "bernoulli", sigma: float = 1.0) -> float:
    """Smallest ``q <= mean`` with ``KL(mean, q) <= level``.

    Bernoulli and exponential families are solved by bisection to ``KL_TOL``;
    the returned point is always feasible. Gaussian has a closed form.
    """
    if level < 0.0:
        raise ValueError(f"KL level must be >= 0, got {level!r}")
    if family == "gaussian":
        return mean - sigma * math.sqrt(2.0 * level)
    if family == "bernoulli":
        if not 0.0 <= mean <= 1.0:
            raise ValueError(f"Bernoulli KL-UCB needs a mean in [0, 1], got {mean!r}")
        kl, lo = kl_bernoulli, 0.0
        if kl(mean, 0.0) <= level:
            return 0.0
    elif family == "exponential":
        if not mean > 0.0:
            return mean
        kl, lo = kl_exponential, 0.0
    else:
        raise ValueError(f"unknown KL family {family!r}")
    hi = mean
    while hi - lo > KL_TOL:
        mid = 0.5 * (lo + hi)
        if kl(mean, mid) <= level:
            hi = mid
        else:
            lo = mid
    return hi


def klucb_index(mean: float, n: int, t: int, family: str = "bernoulli",
                c: float = 3.0, sigma: float = 1.0) -> float:
    return kl_lower_bound(mean, klucb_budget(t, c) / n, family, sigma)


def mars_subset_count(t: int) -> int:
    return anytime_batch_count(t)


def mars_index(samples: Sequence[float], t: int, rng: np.random.Generator,
               n_subsets: int | None = None) -> float:
    """Minimum average over random subsets of an arm's samples.

    ``n_subsets`` subsets (default ``ceil(8 ln t)``, at least 1) get sizes drawn
    uniformly from ``1..n``. The subsets are nested prefixes of one random
    ordering of the samples, built by a partial Fisher-Yates shuffle. Each
    subset is marginally a uniform random subset of its size and the whole
    index costs ``O(n)``.
    """
    x = [float(v) for v in samples]
    n = len(x)
    if n == 0:
        raise ValueError("MARS index needs at least one sample")
    m = n_subsets if n_subsets else mars_subset_count(t)
    sizes = []
    for _ in range(m):
        sizes.append(1 + min(int(rng.random() * n), n - 1))
    s_max = max(sizes)
    for i in range(s_max):
        j = i + min(int(rng.random() * (n - i)), n - i - 1)
        x[i], x[j] = x[j], x[i]
    prefix = []
    acc = 0.0
    for i in range(s_max):
        acc += x[i]
        prefix.append(acc)
    return min(prefix[s - 1] / s for s in sizes)


def warmup_size(sigma_lower_bound: float) -> int:
    """Samples per batch, ``ceil(4 / sigma**2)``, for the Berry-Esseen warmup."""
    if not sigma_lower_bound > 0.0:
        raise ValueError(f"sigma lower bound must be > 0, got {sigma_lower_bound!r}")
    return math.ceil(4.0 / sigma_lower_bound ** 2)


# ---------------------------------------------------------------------------
# configuration

POLICY_KINDS = ("ensemble", "ucb", "ucbv", "klucb", "mars")
KL_FAMILIES = ("bernoulli", "gaussian", "exponential")


@dataclass(frozen=True)
class PolicyConfig:
    """Parameters for one policy.

    ``kind`` selects the family. Fields that do not apply to a kind are
    ignored by it. For the batch ensemble, ``n_batches=None`` with
    ``schedule="fixed"`` means "derive l from ``horizon`` and ``delta``".
    """

    kind: str
    label: str = ""
    # batch ensemble
    schedule: str = "anytime"
    n_batches: int | None = None
    horizon: int | None = None
    delta: float = 0.05
    efficient: bool = False
    warmup: int = 0
    # UCB family
    alpha: float = 2.0
    scale: float = 1.0
    c_var: float = 2.0
    c_range: float = 3.0
    family: str = "bernoulli"
    kl_c: float = 3.0
    # MARS
    n_subsets: int | None = None
    # "random": uniform among minimisers; "first": lowest arm index
    tie_break: str = "random"

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {POLICY_KINDS}")
        if self.schedule not in ("anytime", "fixed"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.alpha <= 0 or self.scale <= 0 or self.c_var < 0 or self.c_range < 0:
            raise ValueError("alpha and scale must be > 0, UCB-V constants >= 0")
        if self.warmup < 0:
            raise ValueError(f"warmup must be >= 0, got {self.warmup!r}")
        if self.family not in KL_FAMILIES:
            raise ValueError(f"unknown KL family {self.family!r}")
        if self.n_batches is not None and self.n_batches < 1:
            raise ValueError("n_batches must be >= 1")
        if self.tie_break not in ("random", "first"):
            raise ValueError(f"unknown tie_break {self.tie_break!r}")
        if self.n_subsets is not None and self.n_subsets < 1:
            raise ValueError("n_subsets must be >= 1")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta!r}")
        if not self.label:
            object.__setattr__(self, "label", self.default_label())

    def default_label(self) -> str:
        if self.kind == "ensemble":
            name = "ensemble-fixed" if self.schedule == "fixed" else "ensemble"
            return name + ("-efficient" if self.efficient else "")
        return self.kind

    def batch_schedule(self, T: int | None = None) -> BatchSchedule:
        if self.schedule == "anytime":
            return BatchSchedule.anytime()
        if self.n_batches is not None:
            return BatchSchedule.fixed(self.n_batches)
        horizon = self.horizon if self.horizon is not None else T
        if horizon is None:
            raise ValueError("fixed schedule needs n_batches or a horizon")
        return BatchSchedule.for_horizon(horizon, self.delta)

    def with_horizon(self, T: int) -> "PolicyConfig":
        if self.kind == "ensemble" and self.schedule == "fixed" and self.n_batches is None:
            return replace(self, n_batches=self.batch_schedule(T).n_batches)
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyConfig":
        return cls(**d)


_ALIASES = {
    "ensemble": dict(kind="ensemble"),
    "ensemble-anytime": dict(kind="ensemble"),
    "ensemble-efficient": dict(kind="ensemble", efficient=True),
    "ensemble-fixed": dict(kind="ensemble", schedule="fixed"),
    "ensemble-fixed-efficient": dict(kind="ensemble", schedule="fixed", efficient=True),
    "ucb": dict(kind="ucb"),
    "ucbv": dict(kind="ucbv"),
    "ucb-v": dict(kind="ucbv"),
    "klucb": dict(kind="klucb"),
    "kl-ucb": dict(kind="klucb"),
    "mars": dict(kind="mars"),
}

_FIELD_TYPES = {"n_batches": int, "horizon": int, "warmup": int, "n_subsets": int,
                "efficient": lambda s: s.lower() in ("1", "true", "yes"),
                "label": str, "family": str, "schedule": str, "tie_break": str}


def parse_policy(text: str) -> PolicyConfig:
    """Parse ``name[:key=value[:key=value...]]``, e.g. ``ucb:alpha=1.5``."""
    name, *opts = text.strip().split(":")
    if name not in _ALIASES:
        raise ValueError(f"unknown policy {name!r}; expected one of {sorted(_ALIASES)}")
    params = dict(_ALIASES[name])
    for opt in opts:
        key, sep, value = opt.partition("=")
        if not sep or key not in PolicyConfig.__dataclass_fields__ or key == "kind":
            raise ValueError(f"bad policy option {opt!r} in {text!r}")
        try:
            params[key] = _FIELD_TYPES.get(key, float)(value)
        except ValueError:
            raise ValueError(f"bad value for {key} in {text!r}") from None
    return PolicyConfig(**params)


# ---------------------------------------------------------------------------
# stateful policies


def break_ties(index: Sequence[float], u: float) -> int:
    """Uniformly pick among minimisers of ``index`` using the uniform ``u``."""
    best = min(index)
    ties = [a for a, v in enumerate(index) if v == best]
    return ties[min(int(u * len(ties)), len(ties) - 1)]


class Policy:
    def __init__(self, config: PolicyConfig, n_arms: int, rng: np.random.Generator | int | None = None):
        if n_arms < 1:
            raise ValueError("need at least one arm")
        self.config = config
        self.n_arms = n_arms
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.t = 1
        self.pull_counts = np.zeros(n_arms, dtype=np.int64)
        self._pending: int | None = None

    def indices(self) -> list[float]:
        raise NotImplementedError

    def _tie_uniform(self) -> float:
        u = self.rng.random()
        return 0.0 if self.config.tie_break == "first" else u

    def select_action(self) -> int:
        index = self.indices()
        arm = break_ties(index, self._tie_uniform())
        self._pending = arm
        return arm

    def _record(self, arm: int, loss: float) -> None:
        raise NotImplementedError

    def update(self, arm: int, loss: float) -> None:
        if self._pending is None or arm != self._pending:
            raise ValueError(f"update for arm {arm} but the last selected arm was {self._pending}")
        self._record(arm, float(loss))
        self.pull_counts[arm] += 1
        self._pending = None
        self.t += 1


class BatchEnsemblePolicy(Policy):
    """Greedy on the batch-min estimate, with an optional per-batch warmup."""

    def __init__(self, config, n_arms, rng=None, horizon: int | None = None):
        super().__init__(config, n_arms, rng)
        self.schedule = config.batch_schedule(horizon)
        mode = EstimatorMode.EFFICIENT if config.efficient else EstimatorMode.FULL_HISTORY
        self.estimators = [ArmEstimator(self.schedule(1), mode) for _ in range(n_arms)]

    @property
    def n_batches(self) -> int:
        return self.estimators[0].n_batches

    def _sync_schedule(self) -> None:
        l_t = self.schedule(self.t)
        if l_t > self.n_batches:
            for est in self.estimators:
                est.rebatch(l_t)

    def _warmup_arm(self) -> int | None:
        w = self.config.warmup
        if w <= 0:
            return None
        fill = [min(est.counts) for est in self.estimators]
        lowest = min(fill)
        return fill.index(lowest) if lowest < w else None

    def indices(self):
        return [est.estimate() for est in self.estimators]

    def select_action(self):
        u = self._tie_uniform()
        arm = self._warmup_arm()
        if arm is None:
            arm = break_ties(self.indices(), u)
        self._pending = arm
        return arm

    def distributed_decision(self) -> tuple[int, int]:
        """Arm chosen by the per-batch view: each batch proposes its best arm,
        the batch with the lowest proposal wins. Lowest index on all ties."""
        best = None
        for b in range(self.n_batches):
            col = [est.batches[b].estimate() for est in self.estimators]
            a = col.index(min(col))
            if best is None or col[a] < best[0]:
                best = (col[a], a, b)
        return best[1], best[2]

    def _record(self, arm, loss):
        self.estimators[arm].observe(loss)

    def update(self, arm, loss):
        super().update(arm, loss)
        self._sync_schedule()


class UCBPolicy(Policy):
    def __init__(self, config, n_arms, rng=None):
        super().__init__(config, n_arms, rng)
        self.sums = np.zeros(n_arms)

    def _record(self, arm, loss):
        self.sums[arm] += loss

    def indices(self):
        c = self.config
        out = []
        for a in range(self.n_arms):
            n = int(self.pull_counts[a])
            if n == 0:
                out.append(-math.inf)
            else:
                out.append(ucb_index(float(self.sums[a]) / n, n, self.t, c.alpha, c.scale))
        return out


class UCBVPolicy(UCBPolicy):
    def __init__(self, config, n_arms, rng=None):
        super().__init__(config, n_arms, rng)
        self.sumsq = np.zeros(n_arms)

    def _record(self, arm, loss):
        self.sums[arm] += loss
        self.sumsq[arm] += loss * loss

    def indices(self):
        c = self.config
        out = []
        for a in range(self.n_arms):
            n = int(self.pull_counts[a])
            if n == 0:
                out.append(-math.inf)
                continue
            mean = float(self.sums[a]) / n
            var = max(float(self.sumsq[a]) / n - mean * mean, 0.0)
            out.append(ucbv_index(mean, var, n, self.t, c.scale, c.c_var, c.c_range))
        return out


class KLUCBPolicy(UCBPolicy):
    def indices(self):
        c = self.config
        budget = klucb_budget(self.t, c.kl_c)
        out = []
        for a in range(self.n_arms):
            n = int(self.pull_counts[a])
            if n == 0:
                out.append(-math.inf)
            else:
                out.append(kl_lower_bound(float(self.sums[a]) / n, budget / n, c.family, c.scale))
        return out


class MARSPolicy(Policy):
    def __init__(self, config, n_arms, rng=None):
        super().__init__(config, n_arms, rng)
        self.history: list[list[float]] = [[] for _ in range(n_arms)]

    def _record(self, arm, loss):
        self.history[arm].append(loss)

    def indices(self):
        out = []
        for a in range(self.n_arms):
            if not self.history[a]:
                out.append(-math.inf)
            else:
                out.append(mars_index(self.history[a], self.t, self.rng, self.config.n_subsets))
        return out


def make_policy(config: PolicyConfig, n_arms: int, rng=None, horizon: int | None = None) -> Policy:
    if config.kind == "ensemble":
        return BatchEnsemblePolicy(config, n_arms, rng, horizon)
    cls = {"ucb": UCBPolicy, "ucbv": UCBVPolicy, "klucb": KLUCBPolicy, "mars": MARSPolicy}[config.kind]
    return cls(config, n_arms, rng)
