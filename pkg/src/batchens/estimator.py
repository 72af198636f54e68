"""Optimistic batch-min mean estimator.

An arm's samples are dealt round-robin into ``l`` batches. Each batch yields
a shrunk mean ``sum / (count + 2)`` and the arm's index is the minimum of
those, with an empty batch contributing exactly 0. Because the losses are
being minimised, the min over batches underestimates the true mean with
probability at least ``1 - (3/4)**l`` for Bernoulli arms.

Two storage modes are provided:

* ``FULL_HISTORY`` keeps every raw loss and, when the number of batches grows,
  re-deals the whole history with the new ``l``.
* ``EFFICIENT`` keeps only ``(count, sum)`` per batch. Growing ``l`` appends
  empty batches, and new samples go to the least-filled batch until the
  counts are level again.

Batch indices are 0-based in code (batch ``b`` here is batch ``b + 1`` in
the usual 1-based notation).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence


class EstimatorMode(str, enum.Enum):
    FULL_HISTORY = "full"
    EFFICIENT = "efficient"


@dataclass
class BatchStat:
    count: int = 0
    sum: float = 0.0

    def estimate(self) -> float:
        # count == 0 gives 0.0 / 2 == 0.0, the empty-sum convention
        return self.sum / (self.count + 2)


def fixed_batch_count(T: int, delta: float) -> int:
    """Batch count for a known horizon and confidence: ``ceil(3.5 ln(2T/delta))``."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta!r}")
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T!r}")
    return max(1, math.ceil(3.5 * math.log(2.0 * T / delta)))


def anytime_batch_count(t: int) -> int:
    """Horizon-free batch count ``max(1, ceil(8 ln t))``."""
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t!r}")
    return max(1, math.ceil(8.0 * math.log(t)))


@dataclass(frozen=True)
class BatchSchedule:
    """Number of batches as a function of the (1-based) time step.

    ``BatchSchedule.fixed(l)`` holds ``l`` constant; ``BatchSchedule.anytime()``
    follows :func:`anytime_batch_count`.
    """

    kind: str = "anytime"
    n_batches: int = 1

    @classmethod
    def fixed(cls, n_batches: int) -> "BatchSchedule":
        if n_batches < 1:
            raise ValueError(f"number of batches must be >= 1, got {n_batches!r}")
        return cls("fixed", int(n_batches))

    @classmethod
    def anytime(cls) -> "BatchSchedule":
        return cls("anytime", 1)

    @classmethod
    def for_horizon(cls, T: int, delta: float) -> "BatchSchedule":
        return cls.fixed(fixed_batch_count(T, delta))

    def __post_init__(self):
        if self.kind not in ("fixed", "anytime"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    def __call__(self, t: int) -> int:
        if self.kind == "fixed":
            return self.n_batches
        return anytime_batch_count(t)

    def max_batches(self, T: int) -> int:
        """Largest batch count used over steps ``1..T``."""
        return self(max(int(T), 1))


def round_robin_batches(history: Sequence[float], n_batches: int) -> list[BatchStat]:
    """Deal ``history`` into ``n_batches`` round-robin batches from scratch.

    Sample ``n`` (0-based) lands in batch ``n % n_batches``. Sums accumulate in
    arrival order, so the result is bit-identical to feeding the samples one
    at a time into a full-history estimator with the same batch count.
    """
    if n_batches < 1:
        raise ValueError(f"number of batches must be >= 1, got {n_batches!r}")
    stats = [BatchStat() for _ in range(n_batches)]
    for i, loss in enumerate(history):
        s = stats[i % n_batches]
        s.count += 1
        s.sum += loss
    return stats


class ArmEstimator:
    """Per-arm batch statistics with the batch-min index.

    >>> est = ArmEstimator(n_batches=2)
    >>> for x in (1.0, 0.0, 1.0):
    ...     est.observe(x)
    >>> est.batch_estimates()
    [0.5, 0.0]
    >>> est.estimate()
    0.0
    """

    def __init__(self, n_batches: int = 1, mode: EstimatorMode | str = EstimatorMode.FULL_HISTORY):
        if n_batches < 1:
            raise ValueError(f"number of batches must be >= 1, got {n_batches!r}")
        self.mode = EstimatorMode(mode)
        self.batches = [BatchStat() for _ in range(n_batches)]
        self.history: list[float] | None = [] if self.mode is EstimatorMode.FULL_HISTORY else None
        self.n = 0

    def __repr__(self):
        return (f"ArmEstimator(mode={self.mode.value}, n={self.n}, "
                f"counts={self.counts}, sums={self.sums})")

    @property
    def n_batches(self) -> int:
        return len(self.batches)

    @property
    def counts(self) -> list[int]:
        return [b.count for b in self.batches]

    @property
    def sums(self) -> list[float]:
        return [b.sum for b in self.batches]

    def _target_batch(self) -> int:
        if self.mode is EstimatorMode.FULL_HISTORY:
            return self.n % self.n_batches
        # emptiest batch, lowest index on ties
        best = 0
        for b in range(1, self.n_batches):
            if self.batches[b].count < self.batches[best].count:
                best = b
        return best

    def observe(self, loss: float) -> None:
        loss = float(loss)
        stat = self.batches[self._target_batch()]
        stat.count += 1
        stat.sum += loss
        if self.history is not None:
            self.history.append(loss)
        self.n += 1

    def extend(self, losses: Iterable[float]) -> None:
        for x in losses:
            self.observe(x)

    def batch_estimates(self) -> list[float]:
        return [b.estimate() for b in self.batches]

    def estimate(self) -> float:
        return min(self.batch_estimates())

    def rebatch(self, n_batches: int) -> None:
        """Grow the number of batches to ``n_batches`` (never shrinks)."""
        if n_batches < self.n_batches:
            raise ValueError(
                f"batch count can only grow: have {self.n_batches}, asked for {n_batches}")
        if n_batches == self.n_batches:
            return
        if self.mode is EstimatorMode.FULL_HISTORY:
            self.batches = round_robin_batches(self.history, n_batches)
        else:
            self.batches.extend(BatchStat() for _ in range(n_batches - self.n_batches))

    def copy(self) -> "ArmEstimator":
        other = ArmEstimator(self.n_batches, self.mode)
        other.batches = [BatchStat(b.count, b.sum) for b in self.batches]
        other.history = None if self.history is None else list(self.history)
        other.n = self.n
        return other
