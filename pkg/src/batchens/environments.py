"""Seeded synthetic loss arms.

Every arm is an immutable description. Randomness comes from
``numpy.random.Generator`` streams derived from one episode seed through
``SeedSequence`` spawn keys, one stream per arm, so an arm's loss sequence
does not depend on which policy is pulling it or in what order.

The ``n``-th pull of arm ``a`` in an episode always returns
``loss_table[a, n]``, and the table is drawn up front. Two policies run with
the same seed therefore see the same outcomes arm by arm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import ClassVar

import numpy as np

# spawn-key slots under one episode seed
ENV_STREAM = 0
POLICY_STREAM = 1
MEANS_STREAM = 2


def arm_stream(seed: int, arm: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(ENV_STREAM, arm)))


def policy_stream(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(POLICY_STREAM,)))


def means_stream(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(MEANS_STREAM,)))


class Arm:
    kind: ClassVar[str] = ""
    bounded: ClassVar[bool] = True

    @property
    def mean(self) -> float:
        raise NotImplementedError

    @property
    def variance(self) -> float:
        raise NotImplementedError

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator) -> float:
        return float(self.draw(rng, 1)[0])

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        d.update({f.name: getattr(self, f.name) for f in fields(self)})
        return d


@dataclass(frozen=True)
class Bernoulli(Arm):
    mu: float
    kind: ClassVar[str] = "bernoulli"

    def __post_init__(self):
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError(f"Bernoulli mean must lie in [0, 1], got {self.mu!r}")

    @property
    def mean(self):
        return self.mu

    @property
    def variance(self):
        return self.mu * (1.0 - self.mu)

    def draw(self, rng, size):
        return (rng.random(size) < self.mu).astype(np.float64)


@dataclass(frozen=True)
class ScaledBernoulli(Arm):
    """Two-point loss: ``b`` with probability ``mu / b``, else 0."""

    mu: float
    b: float
    kind: ClassVar[str] = "scaled_bernoulli"

    def __post_init__(self):
        if not (self.b > 0.0 and 0.0 <= self.mu <= self.b):
            raise ValueError(f"need b > 0 and 0 <= mu <= b, got mu={self.mu!r}, b={self.b!r}")

    @property
    def mean(self):
        return self.mu

    @property
    def variance(self):
        return self.mu * (self.b - self.mu)

    def draw(self, rng, size):
        return self.b * (rng.random(size) < self.mu / self.b).astype(np.float64)


@dataclass(frozen=True)
class Gaussian(Arm):
    mu: float
    sigma: float = 1.0
    kind: ClassVar[str] = "gaussian"
    bounded: ClassVar[bool] = False

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError(f"Gaussian sigma must be > 0, got {self.sigma!r}")

    @property
    def mean(self):
        return self.mu

    @property
    def variance(self):
        return self.sigma ** 2

    def draw(self, rng, size):
        return rng.normal(self.mu, self.sigma, size)


@dataclass(frozen=True)
class Exponential(Arm):
    """Exponential loss stored by its *rate*: mean ``1/rate``, variance ``1/rate**2``."""

    rate: float
    kind: ClassVar[str] = "exponential"
    bounded: ClassVar[bool] = False

    def __post_init__(self):
        if not self.rate > 0.0:
            raise ValueError(f"Exponential rate must be > 0, got {self.rate!r}")

    @property
    def mean(self):
        return 1.0 / self.rate

    @property
    def variance(self):
        return 1.0 / self.rate ** 2

    def draw(self, rng, size):
        return rng.exponential(1.0 / self.rate, size)


@dataclass(frozen=True)
class Uniform(Arm):
    low: float = 0.0
    high: float = 1.0
    kind: ClassVar[str] = "uniform"

    def __post_init__(self):
        if not self.high > self.low:
            raise ValueError(f"need high > low, got [{self.low!r}, {self.high!r}]")

    @property
    def mean(self):
        return 0.5 * (self.low + self.high)

    @property
    def variance(self):
        return (self.high - self.low) ** 2 / 12.0

    def draw(self, rng, size):
        return rng.uniform(self.low, self.high, size)


def bernoullify(loss: float, b: float, rng: np.random.Generator, rescale: bool = False) -> float:
    """Replace a loss in ``[0, b]`` with a ``Ber(loss / b)`` draw (times ``b`` if ``rescale``)."""
    if not b > 0.0:
        raise ValueError(f"scale b must be > 0, got {b!r}")
    if not 0.0 <= loss <= b:
        raise ValueError(f"loss {loss!r} outside [0, {b!r}]")
    hit = rng.random() < loss / b
    return (b if rescale else 1.0) * float(hit)


@dataclass(frozen=True)
class Bernoullified(Arm):
    """Wraps a bounded arm so every observed loss passes through :func:`bernoullify`."""

    base: Arm
    b: float = 1.0
    rescale: bool = False
    kind: ClassVar[str] = "bernoullified"

    def __post_init__(self):
        if not self.b > 0.0:
            raise ValueError(f"scale b must be > 0, got {self.b!r}")
        if not self.base.bounded:
            raise ValueError(f"cannot Bernoulli-fy unbounded arm {self.base!r}")

    @property
    def mean(self):
        return self.base.mean if self.rescale else self.base.mean / self.b

    @property
    def variance(self):
        p = self.base.mean / self.b
        return p * (1.0 - p) * (self.b ** 2 if self.rescale else 1.0)

    def draw(self, rng, size):
        raw = self.base.draw(rng, size)
        if np.any(raw < 0.0) or np.any(raw > self.b):
            raise ValueError(f"base arm produced losses outside [0, {self.b}]")
        hits = (rng.random(size) < raw / self.b).astype(np.float64)
        return hits * self.b if self.rescale else hits

    def to_dict(self):
        return {"kind": self.kind, "base": self.base.to_dict(), "b": self.b, "rescale": self.rescale}


ARM_KINDS: dict[str, type[Arm]] = {
    cls.kind: cls for cls in (Bernoulli, ScaledBernoulli, Gaussian, Exponential, Uniform, Bernoullified)
}


def arm_from_dict(d: dict) -> Arm:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in ARM_KINDS:
        raise ValueError(f"unknown arm kind {kind!r}; expected one of {sorted(ARM_KINDS)}")
    if kind == "bernoullified":
        d["base"] = arm_from_dict(d["base"])
    try:
        return ARM_KINDS[kind](**d)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {kind} arm: {exc}") from None


def parse_arm(text: str) -> Arm:
    """Parse a compact arm spec such as ``bernoulli:0.2`` or ``gaussian:0.5:1``."""
    kind, *args = text.strip().split(":")
    kind = {"ber": "bernoulli", "scaled": "scaled_bernoulli", "exp": "exponential",
            "normal": "gaussian"}.get(kind, kind)
    if kind not in ARM_KINDS or kind == "bernoullified":
        raise ValueError(f"unknown arm kind in {text!r}")
    try:
        values = [float(a) for a in args]
    except ValueError:
        raise ValueError(f"non-numeric arm parameter in {text!r}") from None
    try:
        return ARM_KINDS[kind](*values)
    except TypeError:
        raise ValueError(f"wrong number of parameters in {text!r}") from None


@dataclass(frozen=True)
class Bandit:
    arms: tuple[Arm, ...]
    means: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        arms = tuple(self.arms)
        if not arms:
            raise ValueError("a bandit needs at least one arm")
        object.__setattr__(self, "arms", arms)
        object.__setattr__(self, "means", np.array([a.mean for a in arms], dtype=np.float64))

    @classmethod
    def bernoulli(cls, means) -> "Bandit":
        return cls(tuple(Bernoulli(float(m)) for m in means))

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    @property
    def optimal_mean(self) -> float:
        return float(self.means.min())

    @property
    def optimal_arm(self) -> int:
        return int(np.argmin(self.means))

    @property
    def variances(self) -> np.ndarray:
        return np.array([a.variance for a in self.arms], dtype=np.float64)

    @property
    def gaps(self) -> np.ndarray:
        return self.means - self.optimal_mean

    def gap(self, arm: int) -> float:
        if not 0 <= arm < self.n_arms:
            raise IndexError(f"arm {arm} out of range for {self.n_arms} arms")
        return float(self.means[arm] - self.optimal_mean)

    def scaled(self, b: float) -> "Bandit":
        """Bernoulli arms mapped to scaled Bernoulli on ``{0, b}`` (mean times ``b``)."""
        out = []
        for arm in self.arms:
            if not isinstance(arm, Bernoulli):
                raise ValueError("scaled() only applies to Bernoulli arms")
            out.append(ScaledBernoulli(arm.mu * b, b))
        return Bandit(tuple(out))

    def loss_table(self, T: int, seed: int) -> np.ndarray:
        """``(K, T)`` table whose row ``a`` is arm ``a``'s loss sequence for this seed."""
        table = np.empty((self.n_arms, T), dtype=np.float64)
        for a, arm in enumerate(self.arms):
            table[a] = arm.draw(arm_stream(seed, a), T)
        return table

    def to_dict(self) -> dict:
        return {"arms": [a.to_dict() for a in self.arms]}

    @classmethod
    def from_dict(cls, d: dict) -> "Bandit":
        return cls(tuple(arm_from_dict(a) for a in d["arms"]))


def sample(arm: Arm, rng: np.random.Generator) -> float:
    return arm.sample(rng)


def gap(bandit: Bandit, arm: int) -> float:
    return bandit.gap(arm)


def third_abs_central_moment(arm: Arm) -> float:
    """``E|X - mean|**3`` for the arm kinds with a closed form."""
    if isinstance(arm, Gaussian):
        return 2.0 * math.sqrt(2.0 / math.pi) * arm.sigma ** 3
    if isinstance(arm, Bernoulli):
        p = arm.mu
        return p * (1 - p) * (p * p + (1 - p) * (1 - p))
    if isinstance(arm, Exponential):
        # E|X - 1/r|^3 = (12/e - 2) / r^3
        return (12.0 / math.e - 2.0) / arm.rate ** 3
    if isinstance(arm, Uniform):
        return (arm.high - arm.low) ** 3 / 32.0
    raise TypeError(f"no closed-form third moment for {type(arm).__name__}")
