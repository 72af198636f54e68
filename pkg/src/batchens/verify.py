"""Numerical checks of the estimator's probabilistic guarantees.

Exact routines enumerate or sum binomial terms; Monte-Carlo routines report
an estimate with its binomial standard error. The MC and enumeration
kernels run compiled when numba is on. Otherwise they fall back to
vectorised numpy versions that draw the same uniforms in the same order,
so both backends return identical counts for a given seed.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from ._accel import NUMBA_ENABLED
from .environments import Arm, Bernoulli, Exponential, Gaussian, Uniform

MAX_ENUMERATION_N = 20
MIN_MC_TRIALS = 10_000
_CHUNK_CELLS = 2_000_000


@dataclass
class MCEstimate:
    value: float
    stderr: float
    hits: int
    trials: int


def _mc(hits: int, trials: int) -> MCEstimate:
    p = hits / trials
    return MCEstimate(p, math.sqrt(p * (1.0 - p) / trials), int(hits), int(trials))


@dataclass
class VerificationReport:
    claim: str
    params: dict
    value: float
    bound: float
    passed: bool
    stderr: float = 0.0
    exact: bool = True
    blocking: bool = True

    def csv_row(self) -> list[str]:
        params = ";".join(f"{k}={v}" for k, v in self.params.items())
        return [self.claim, params, f"{self.value:.17g}", f"{self.stderr:.17g}",
                f"{self.bound:.17g}", "1" if self.passed else "0"]


CSV_HEADER = ["claim", "params", "value", "stderr", "bound", "pass"]


def write_reports(reports: Iterable[VerificationReport], path_or_buf=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in reports:
        w.writerow(r.csv_row())
    text = buf.getvalue()
    if path_or_buf is not None:
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    return text


def _floor_product(n: int, mu: float) -> int:
    # guards n*mu such as 100*0.29 == 28.999999999999996
    return math.floor(round(n * mu, 9))


def _at_most(total, target):
    return total <= target + 1e-9 * max(1.0, abs(target))


# ---------------------------------------------------------------------------
# binomial anti-concentration


def binomial_anticoncentration(n: int, mu: float) -> float:
    """Exact ``Pr(Bin(n, mu) <= floor(n mu))``, accumulated in log space."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n!r}")
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"mu must lie in [0, 1], got {mu!r}")
    return float(kernels.binom_cdf_log_space(n, _floor_product(n, mu), mu))


def anticoncentration_sweep(n_max: int = 100, grid: int = 100, bound: float = 0.25) -> list[VerificationReport]:
    """Every ``n <= n_max`` and ``mu = k/grid`` with ``mu <= 1 - 1/n``."""
    out = []
    for n in range(1, n_max + 1):
        for k in range(1, grid):
            if k * n > grid * (n - 1):
                continue
            mu = k / grid
            p = binomial_anticoncentration(n, mu)
            out.append(VerificationReport("anticoncentration", {"n": n, "mu": mu}, p, bound, p >= bound))
    return out


# ---------------------------------------------------------------------------
# optimism of the batch-min estimate


def _optimism_exact_numpy(mu: float, n: int, l: int) -> float:
    counts = np.bincount(np.arange(n) % l, minlength=l)
    shifts = np.arange(n, dtype=np.int64)
    hits = np.zeros(n + 1, dtype=np.int64)
    block = 1 << 16
    for start in range(0, 1 << n, block):
        masks = np.arange(start, min(start + block, 1 << n), dtype=np.int64)
        bits = ((masks[:, None] >> shifts) & 1).astype(np.float64)
        sums = np.zeros((masks.size, l))
        for b in range(min(l, n)):
            sums[:, b] = bits[:, b::l].sum(axis=1)
        ok = (sums / (counts + 2)).min(axis=1) <= mu
        hits += np.bincount(bits[ok].sum(axis=1).astype(np.int64), minlength=n + 1)
    # sequential products, as in the compiled kernel
    pw1 = np.cumprod(np.r_[1.0, np.full(n, mu)])
    pw0 = np.cumprod(np.r_[1.0, np.full(n, 1.0 - mu)])
    total = 0.0
    for k in range(n + 1):
        total += hits[k] * pw1[k] * pw0[n - k]
    return float(total)


def optimism_probability_exact(mu: float, n: int, l: int) -> float:
    """``Pr(estimate <= mu)`` for a Bernoulli(mu) arm by enumerating all ``2**n`` outcomes."""
    if n > MAX_ENUMERATION_N:
        raise ValueError(f"enumeration is limited to n <= {MAX_ENUMERATION_N}, got {n}")
    if n < 0 or l < 1:
        raise ValueError("need n >= 0 and l >= 1")
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"mu must lie in [0, 1], got {mu!r}")
    if NUMBA_ENABLED:
        return float(kernels.optimism_exact_kernel(mu, n, l))
    return _optimism_exact_numpy(mu, n, l)


def batch_failure_probability(mu: float, tau: int) -> float:
    """Exact ``Pr(S / (tau + 2) > mu)`` for ``S ~ Bin(tau, mu)``."""
    return sum(math.comb(tau, s) * mu ** s * (1.0 - mu) ** (tau - s)
               for s in range(tau + 1) if s / (tau + 2) > mu)


def optimism_probability_product(mu: float, n: int, l: int) -> float:
    """``1 - prod_b Pr(batch b overestimates)``, using independence across batches."""
    fail = 1.0
    for b in range(l):
        tau = len(range(b, n, l))
        fail *= batch_failure_probability(mu, tau)
    return 1.0 - fail


def optimism_bound(l: int) -> float:
    return 1.0 - 0.75 ** l


def _optimism_mc_numpy(mu, n, l, trials, rng):
    counts = np.bincount(np.arange(n) % l, minlength=l)
    chunk = max(1, _CHUNK_CELLS // max(n, 1))
    hits = 0
    done = 0
    while done < trials:
        c = min(chunk, trials - done)
        x = (rng.random((c, n)) < mu).astype(np.float64)
        sums = np.zeros((c, l))
        for b in range(min(l, n)):
            sums[:, b] = x[:, b::l].sum(axis=1)
        hits += int(np.count_nonzero((sums / (counts + 2)).min(axis=1) <= mu))
        done += c
    return hits


def optimism_probability_mc(mu: float, n: int, l: int, trials: int = 100_000,
                            seed: int | np.random.Generator = 0) -> MCEstimate:
    if trials < MIN_MC_TRIALS:
        raise ValueError(f"need at least {MIN_MC_TRIALS} trials, got {trials}")
    if n < 0 or l < 1:
        raise ValueError("need n >= 0 and l >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if NUMBA_ENABLED:
        hits = kernels.optimism_mc_kernel(mu, n, l, trials, rng)
    else:
        hits = _optimism_mc_numpy(mu, n, l, trials, rng)
    return _mc(hits, trials)


# ---------------------------------------------------------------------------
# concentration


def concentration_bound(n: int, l: int, sigma2: float, horizon: int, delta: float) -> float:
    return float(kernels.concentration_bound(n, l, sigma2, horizon, delta))


def _concentration_numpy(mu, sigma2, n, l, horizon, delta, trials, rng):
    bounds = np.array([concentration_bound(i, l, sigma2, horizon, delta) for i in range(n + 1)])
    chunk = max(1, _CHUNK_CELLS // max(n, 1))
    violations = 0
    done = 0
    while done < trials:
        c = min(chunk, trials - done)
        x = (rng.random((c, n)) < mu).astype(np.float64)
        counts = np.zeros(l, dtype=np.int64)
        sums = np.zeros((c, l))
        bad = np.full(c, n == 0 and mu > bounds[0])
        for i in range(n):
            b = i % l
            counts[b] += 1
            sums[:, b] += x[:, i]
            bad |= mu - (sums / (counts + 2)).min(axis=1) > bounds[i + 1]
        violations += int(np.count_nonzero(bad))
        done += c
    return violations


def concentration_check(mu: float, sigma2: float | None, n: int, l: int, delta: float,
                        trials: int = 10_000, seed: int | np.random.Generator = 0,
                        horizon: int | None = None) -> MCEstimate:
    """Rate of trials where ``mu - estimate`` exceeds the Bernstein-type
    deviation bound at any prefix ``1..n`` of a Bernoulli(mu) sample stream.

    ``horizon`` (default ``max(n, 1)``) is the ``T`` inside the logarithms
    and ``sigma2`` defaults to ``mu (1 - mu)``.
    """
    if trials < MIN_MC_TRIALS:
        raise ValueError(f"need at least {MIN_MC_TRIALS} trials, got {trials}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta!r}")
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"mu must lie in [0, 1], got {mu!r}")
    sigma2 = mu * (1.0 - mu) if sigma2 is None else sigma2
    horizon = max(n, 1) if horizon is None else horizon
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if NUMBA_ENABLED:
        bad = kernels.concentration_mc_kernel(mu, sigma2, n, l, horizon, delta, trials, rng)
    else:
        bad = _concentration_numpy(mu, sigma2, n, l, horizon, delta, trials, rng)
    return _mc(bad, trials)


# ---------------------------------------------------------------------------
# beyond Bernoulli


def berry_esseen_warmup(sigma: float, rho: float) -> int:
    """Samples ``n >= 4 (rho / sigma**3)**2`` after which ``Pr(sum <= n mu) >= 1/4``."""
    if not sigma > 0.0:
        raise ValueError(f"sigma must be > 0, got {sigma!r}")
    if rho < 0.0:
        raise ValueError(f"rho must be >= 0, got {rho!r}")
    c = rho / sigma ** 3
    return max(1, math.ceil(4.0 * c * c))


def below_mean_probability(arm: Arm, n: int, trials: int, rng: np.random.Generator) -> MCEstimate:
    """MC estimate of ``Pr(X_1 + ... + X_n <= n * mean)``."""
    target = n * arm.mean
    chunk = max(1, _CHUNK_CELLS // n)
    hits = 0
    done = 0
    while done < trials:
        c = min(chunk, trials - done)
        totals = arm.draw(rng, c * n).reshape(c, n).sum(axis=1)
        hits += int(np.count_nonzero(_at_most(totals, target)))
        done += c
    return _mc(hits, trials)


def conjecture_scan(arm: Arm, n_grid: Sequence[int], trials: int = 10_000,
                    seed: int | np.random.Generator = 0, threshold: float = 0.25) -> list[VerificationReport]:
    """Anti-concentration at the mean for a general arm; informative only.

    A grid point fails when the estimate is below ``threshold - 4 SE``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out = []
    for n in n_grid:
        est = below_mean_probability(arm, n, trials, rng)
        params = {"arm": _arm_label(arm), "n": n, "trials": trials}
        out.append(VerificationReport("conjecture", params, est.value, threshold,
                                      est.value >= threshold - 4.0 * est.stderr,
                                      stderr=est.stderr, exact=False, blocking=False))
    return out


def _arm_label(arm: Arm) -> str:
    fields = ",".join(f"{v}" for k, v in arm.to_dict().items() if k != "kind")
    return f"{arm.kind}({fields})"


# ---------------------------------------------------------------------------
# suite

# chosen so that the bound at the final n is below mu, except the last point,
# which is the l=40 scale of the fixed-horizon analysis
CONCENTRATION_GRID = (
    (500, 1, 0.5), (1000, 2, 0.3), (2000, 4, 0.5), (1000, 1, 0.1), (2000, 2, 0.7),
    (800, 3, 0.9), (1500, 5, 0.6), (300, 1, 0.2), (2000, 8, 0.8), (200, 40, 0.5),
)
CONCENTRATION_QUICK_GRID = tuple((min(n, 30), min(l, 5), mu) for n, l, mu in CONCENTRATION_GRID)


@dataclass
class SuiteSettings:
    quick: bool = False
    seed: int = 0
    bound_shift: float = 0.0
    anticoncentration_n_max: int = field(init=False)
    optimism_n_max: int = field(init=False)
    mc_trials: int = field(init=False)

    def __post_init__(self):
        self.anticoncentration_n_max = 30 if self.quick else 100
        self.optimism_n_max = 10 if self.quick else 12
        self.mc_trials = 10_000 if self.quick else 100_000


def optimism_sweep(n_max: int = 12, ls: Sequence[int] = (1, 2, 3), grid: int = 20,
                 bound_shift: float = 0.0) -> list[VerificationReport]:
    out = []
    for l in ls:
        bound = optimism_bound(l) + bound_shift
        for n in range(0, n_max + 1):
            for k in range(1, grid):
                mu = k / grid
                p = optimism_probability_exact(mu, n, l)
                out.append(VerificationReport("optimism_exact", {"n": n, "l": l, "mu": mu}, p, bound, p >= bound))
    return out


def run_suite(quick: bool = False, seed: int = 0, bound_shift: float = 0.0) -> list[VerificationReport]:
    """All exact and Monte-Carlo checks plus the informative conjecture scans.

    ``bound_shift`` is added to every blocking bound; a positive shift is
    the negative-test hook that must make the suite fail.
    """
    s = SuiteSettings(quick, seed, bound_shift)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    reports = [r for r in anticoncentration_sweep(s.anticoncentration_n_max, bound=0.25 + bound_shift)]
    reports += optimism_sweep(s.optimism_n_max, bound_shift=bound_shift)

    for mu, n, l in ((0.3, 10, 2), (0.5, 12, 3), (0.1, 9, 1)):
        exact = optimism_probability_exact(mu, n, l)
        prod = optimism_probability_product(mu, n, l)
        reports.append(VerificationReport("optimism_product_law", {"n": n, "l": l, "mu": mu},
                                          exact, prod, abs(exact - prod) <= 1e-12))

    n, l = (30, 5) if quick else (200, 40)
    est = optimism_probability_mc(0.5, n, l, s.mc_trials, rng)
    bound = optimism_bound(l) + bound_shift
    reports.append(VerificationReport("optimism_mc", {"n": n, "l": l, "mu": 0.5, "trials": s.mc_trials},
                                      est.value, bound, est.value >= bound - 4.0 * est.stderr,
                                      stderr=est.stderr, exact=False))

    delta = 0.1
    for n, l, mu in (CONCENTRATION_QUICK_GRID if quick else CONCENTRATION_GRID):
        est = concentration_check(mu, None, n, l, delta, 10_000, rng)
        reports.append(VerificationReport("concentration_mc", {"n": n, "l": l, "mu": mu, "delta": delta},
                                          est.value, delta - bound_shift, est.value <= delta - bound_shift,
                                          stderr=est.stderr, exact=False))

    n_grid = [1, 2, 5, 10, 20, 30] if quick else [1, 2, 5, 10, 20, 50, 100]
    for arm in (Exponential(1.0), Uniform(0.0, 1.0), Bernoulli(0.1), Gaussian(0.0, 1.0)):
        reports += conjecture_scan(arm, n_grid, 10_000, rng)
    return reports


def suite_passed(reports: Iterable[VerificationReport]) -> bool:
    return all(r.passed for r in reports if r.blocking)
