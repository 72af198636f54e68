"""Hot loops: whole-episode policy runs and the verification kernels.

Everything here is written in the numba-compatible subset and wrapped by
:func:`batchens._accel.jit`. The episode kernels mirror the reference
policies in :mod:`batchens.policies` exactly, including the order of random
draws and the floating-point operation order. Given the same loss table
and generator they return the same action sequence as stepping the policy
objects by hand.

Episode kernels take a ``(K, T)`` loss table (row ``a`` is arm ``a``'s loss
sequence) and a ``numpy.random.Generator`` for the policy's own
randomness, and return the ``T`` chosen arms.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import jit

FAMILY_CODES = {"bernoulli": 0, "gaussian": 1, "exponential": 2}
KL_TOL = 1e-9


@jit
def anytime_count(t):
    c = math.ceil(8.0 * math.log(t))
    return c if c > 1 else 1


@jit
def _break_ties(index, u):
    K = index.shape[0]
    best = index[0]
    for a in range(1, K):
        if index[a] < best:
            best = index[a]
    n_ties = 0
    for a in range(K):
        if index[a] == best:
            n_ties += 1
    k = int(u * n_ties)
    if k > n_ties - 1:
        k = n_ties - 1
    for a in range(K):
        if index[a] == best:
            if k == 0:
                return a
            k -= 1
    return -1


@jit
def _tie_u(rng, tie_first):
    u = rng.random()
    return 0.0 if tie_first else u


@jit
def _batch_min(counts, sums, l):
    best = sums[0] / (counts[0] + 2)
    for b in range(1, l):
        v = sums[b] / (counts[b] + 2)
        if v < best:
            best = v
    return best


@jit
def _redeal(history, n, l, counts, sums):
    for b in range(counts.shape[0]):
        counts[b] = 0
        sums[b] = 0.0
    for i in range(n):
        b = i % l
        counts[b] += 1
        sums[b] += history[i]


@jit
def ensemble_episode(losses, anytime, l_fixed, efficient, warmup, tie_first, rng):
    K, T = losses.shape
    l_cap = anytime_count(T) if anytime else l_fixed
    counts = np.zeros((K, l_cap), dtype=np.int64)
    sums = np.zeros((K, l_cap), dtype=np.float64)
    pulls = np.zeros(K, dtype=np.int64)
    index = np.empty(K, dtype=np.float64)
    actions = np.empty(T, dtype=np.int64)
    l = 1 if anytime else l_fixed
    for t in range(1, T + 1):
        if anytime:
            l_t = anytime_count(t)
            if l_t > l:
                if not efficient:
                    for a in range(K):
                        _redeal(losses[a], pulls[a], l_t, counts[a], sums[a])
                l = l_t
        u = rng.random()
        if tie_first:
            u = 0.0
        arm = -1
        if warmup > 0:
            lowest = warmup
            for a in range(K):
                fill = counts[a, 0]
                for b in range(1, l):
                    if counts[a, b] < fill:
                        fill = counts[a, b]
                if fill < lowest:
                    lowest = fill
                    arm = a
        if arm < 0:
            for a in range(K):
                index[a] = _batch_min(counts[a], sums[a], l)
            arm = _break_ties(index, u)
        if efficient:
            b = 0
            for j in range(1, l):
                if counts[arm, j] < counts[arm, b]:
                    b = j
        else:
            b = pulls[arm] % l
        counts[arm, b] += 1
        sums[arm, b] += losses[arm, pulls[arm]]
        pulls[arm] += 1
        actions[t - 1] = arm
    return actions


@jit
def ucb_episode(losses, alpha, scale, tie_first, rng):
    K, T = losses.shape
    sums = np.zeros(K, dtype=np.float64)
    pulls = np.zeros(K, dtype=np.int64)
    index = np.empty(K, dtype=np.float64)
    actions = np.empty(T, dtype=np.int64)
    for t in range(1, T + 1):
        log_t = math.log(t)
        for a in range(K):
            n = pulls[a]
            if n == 0:
                index[a] = -np.inf
            else:
                index[a] = sums[a] / n - scale * math.sqrt(alpha * log_t / n)
        arm = _break_ties(index, _tie_u(rng, tie_first))
        sums[arm] += losses[arm, pulls[arm]]
        pulls[arm] += 1
        actions[t - 1] = arm
    return actions


@jit
def ucbv_episode(losses, b_scale, c_var, c_range, tie_first, rng):
    K, T = losses.shape
    sums = np.zeros(K, dtype=np.float64)
    sumsq = np.zeros(K, dtype=np.float64)
    pulls = np.zeros(K, dtype=np.int64)
    index = np.empty(K, dtype=np.float64)
    actions = np.empty(T, dtype=np.int64)
    for t in range(1, T + 1):
        log_t = math.log(t)
        for a in range(K):
            n = pulls[a]
            if n == 0:
                index[a] = -np.inf
            else:
                mean = sums[a] / n
                var = sumsq[a] / n - mean * mean
                if var < 0.0:
                    var = 0.0
                index[a] = mean - math.sqrt(c_var * var * log_t / n) - c_range * b_scale * log_t / n
        arm = _break_ties(index, _tie_u(rng, tie_first))
        x = losses[arm, pulls[arm]]
        sums[arm] += x
        sumsq[arm] += x * x
        pulls[arm] += 1
        actions[t - 1] = arm
    return actions


@jit
def _kl_bernoulli(p, q):
    out = 0.0
    if p > 0.0:
        if q <= 0.0:
            return np.inf
        out += p * math.log(p / q)
    if p < 1.0:
        if q >= 1.0:
            return np.inf
        out += (1.0 - p) * math.log((1.0 - p) / (1.0 - q))
    return out


@jit
def _kl_exponential(m, q):
    if q <= 0.0:
        return np.inf
    r = m / q
    return r - 1.0 - math.log(r)


@jit
def kl_lower_bound(mean, level, family, sigma):
    if family == 1:
        return mean - sigma * math.sqrt(2.0 * level)
    if family == 0:
        if mean < 0.0 or mean > 1.0:
            raise ValueError("Bernoulli KL-UCB needs empirical means in [0, 1]")
        if _kl_bernoulli(mean, 0.0) <= level:
            return 0.0
    elif not mean > 0.0:
        return mean
    lo = 0.0
    hi = mean
    while hi - lo > KL_TOL:
        mid = 0.5 * (lo + hi)
        if family == 0:
            kl = _kl_bernoulli(mean, mid)
        else:
            kl = _kl_exponential(mean, mid)
        if kl <= level:
            hi = mid
        else:
            lo = mid
    return hi


@jit
def klucb_episode(losses, family, c, sigma, tie_first, rng):
    K, T = losses.shape
    sums = np.zeros(K, dtype=np.float64)
    pulls = np.zeros(K, dtype=np.int64)
    index = np.empty(K, dtype=np.float64)
    actions = np.empty(T, dtype=np.int64)
    for t in range(1, T + 1):
        budget = math.log(t) + c * math.log(math.log(max(t, math.e)))
        for a in range(K):
            n = pulls[a]
            if n == 0:
                index[a] = -np.inf
            else:
                index[a] = kl_lower_bound(sums[a] / n, budget / n, family, sigma)
        arm = _break_ties(index, _tie_u(rng, tie_first))
        sums[arm] += losses[arm, pulls[arm]]
        pulls[arm] += 1
        actions[t - 1] = arm
    return actions


@jit
def mars_index_kernel(samples, n, m, rng, scratch, sizes, prefix):
    """Batch-free MARS index over ``samples[:n]``; buffers are caller-owned."""
    s_max = 0
    for j in range(m):
        s = int(rng.random() * n)
        if s > n - 1:
            s = n - 1
        s += 1
        sizes[j] = s
        if s > s_max:
            s_max = s
    for i in range(n):
        scratch[i] = samples[i]
    for i in range(s_max):
        j = int(rng.random() * (n - i))
        if j > n - i - 1:
            j = n - i - 1
        j += i
        tmp = scratch[i]
        scratch[i] = scratch[j]
        scratch[j] = tmp
    acc = 0.0
    for i in range(s_max):
        acc += scratch[i]
        prefix[i] = acc
    best = prefix[sizes[0] - 1] / sizes[0]
    for j in range(1, m):
        v = prefix[sizes[j] - 1] / sizes[j]
        if v < best:
            best = v
    return best


@jit
def mars_episode(losses, n_subsets, tie_first, rng):
    K, T = losses.shape
    pulls = np.zeros(K, dtype=np.int64)
    index = np.empty(K, dtype=np.float64)
    actions = np.empty(T, dtype=np.int64)
    m_cap = n_subsets if n_subsets > 0 else anytime_count(T)
    scratch = np.empty(T, dtype=np.float64)
    prefix = np.empty(T, dtype=np.float64)
    sizes = np.empty(m_cap, dtype=np.int64)
    for t in range(1, T + 1):
        m = n_subsets if n_subsets > 0 else anytime_count(t)
        for a in range(K):
            if pulls[a] == 0:
                index[a] = -np.inf
            else:
                index[a] = mars_index_kernel(losses[a], pulls[a], m, rng, scratch, sizes, prefix)
        arm = _break_ties(index, _tie_u(rng, tie_first))
        pulls[arm] += 1
        actions[t - 1] = arm
    return actions


# ---------------------------------------------------------------------------
# verification kernels


@jit
def log_binom_pmf(n, k, mu):
    if mu == 0.0:
        return 0.0 if k == 0 else -np.inf
    if mu == 1.0:
        return 0.0 if k == n else -np.inf
    return (math.lgamma(n + 1.0) - math.lgamma(k + 1.0) - math.lgamma(n - k + 1.0)
            + k * math.log(mu) + (n - k) * math.log1p(-mu))


@jit
def binom_cdf_log_space(n, k, mu):
    """``Pr(Bin(n, mu) <= k)`` by a running log-sum-exp over pmf terms."""
    if k < 0:
        return 0.0
    if k >= n:
        return 1.0
    acc = -np.inf
    for j in range(k + 1):
        lp = log_binom_pmf(n, j, mu)
        if lp == -np.inf:
            continue
        if acc == -np.inf:
            acc = lp
        elif lp > acc:
            acc = lp + math.log1p(math.exp(acc - lp))
        else:
            acc = acc + math.log1p(math.exp(lp - acc))
    p = math.exp(acc)
    return p if p < 1.0 else 1.0


@jit
def optimism_exact_kernel(mu, n, l):
    """Sum of ``Pr(sequence)`` over all ``2**n`` loss sequences whose batch-min
    estimate is ``<= mu``. Sample ``i`` goes to batch ``i % l``."""
    pw1 = np.empty(n + 1)
    pw0 = np.empty(n + 1)
    pw1[0] = 1.0
    pw0[0] = 1.0
    for k in range(1, n + 1):
        pw1[k] = pw1[k - 1] * mu
        pw0[k] = pw0[k - 1] * (1.0 - mu)
    counts = np.zeros(l, dtype=np.int64)
    for i in range(n):
        counts[i % l] += 1
    sums = np.zeros(l, dtype=np.float64)
    # qualifying sequences counted by number of ones, so only n + 1 terms are summed
    hits = np.zeros(n + 1, dtype=np.int64)
    for mask in range(1 << n):
        for b in range(l):
            sums[b] = 0.0
        k = 0
        for i in range(n):
            if (mask >> i) & 1:
                sums[i % l] += 1.0
                k += 1
        if _batch_min(counts, sums, l) <= mu:
            hits[k] += 1
    total = 0.0
    for k in range(n + 1):
        total += hits[k] * pw1[k] * pw0[n - k]
    return total


@jit
def optimism_mc_kernel(mu, n, l, trials, rng):
    """Number of trials whose batch-min estimate is ``<= mu``. Draws ``n``
    uniforms per trial in order (row-major over ``(trials, n)``)."""
    counts = np.zeros(l, dtype=np.int64)
    for i in range(n):
        counts[i % l] += 1
    sums = np.zeros(l, dtype=np.float64)
    hits = 0
    for _ in range(trials):
        for b in range(l):
            sums[b] = 0.0
        for i in range(n):
            if rng.random() < mu:
                sums[i % l] += 1.0
        if _batch_min(counts, sums, l) <= mu:
            hits += 1
    return hits


@jit
def concentration_bound(n, l, sigma2, horizon, delta):
    m = n / l + 1.0
    return 2.0 / m * math.log(3.0 * horizon / delta) + math.sqrt(sigma2 / m * math.log(horizon / delta))


@jit
def concentration_mc_kernel(mu, sigma2, n, l, horizon, delta, trials, rng):
    """Number of trials in which ``mu - estimate > bound`` at some prefix
    ``1..n`` of one Bernoulli stream (the simultaneous-over-n event)."""
    bounds = np.empty(n + 1)
    for i in range(n + 1):
        bounds[i] = concentration_bound(i, l, sigma2, horizon, delta)
    counts = np.zeros(l, dtype=np.int64)
    sums = np.zeros(l, dtype=np.float64)
    violations = 0
    for _ in range(trials):
        for b in range(l):
            counts[b] = 0
            sums[b] = 0.0
        bad = False
        if n == 0:
            bad = mu - 0.0 > bounds[0]
        for i in range(n):
            b = i % l
            counts[b] += 1
            if rng.random() < mu:
                sums[b] += 1.0
            if not bad and mu - _batch_min(counts, sums, l) > bounds[i + 1]:
                bad = True
        if bad:
            violations += 1
    return violations
