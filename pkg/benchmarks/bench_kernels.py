"""Time the compiled kernels against the plain numpy fallback.

Each backend runs in its own interpreter because the switch
(``BATCHENS_DISABLE_NUMBA``) is read at import time. Compilation is done in
a warm-up call and excluded. The script also checks that both backends give
the same outputs.

    python benchmarks/bench_kernels.py [--repeat 3] [--episodes 3]
"""

from __future__ import annotations

import argparse
import json
import math
import os
import subprocess
import sys

WORKER = r"""
import hashlib, json, sys, time
import numpy as np
from batchens import verify
from batchens._accel import backend_name
from batchens.policies import parse_policy
from batchens.simulator import PRESETS, run_episode

episodes, repeat = int(sys.argv[1]), int(sys.argv[2])
bandit = PRESETS["testcase1"].bandit(0)

def episodes_of(spec):
    def run():
        h = hashlib.sha256()
        for s in range(episodes):
            h.update(run_episode(parse_policy(spec), bandit, 2000, s).actions.tobytes())
        return h.hexdigest()
    return run

jobs = {
    f"ensemble x{episodes} (T=2000)": episodes_of("ensemble"),
    f"ensemble-efficient x{episodes}": episodes_of("ensemble-efficient"),
    f"klucb x{episodes}": episodes_of("klucb"),
    f"mars x{episodes}": episodes_of("mars"),
    "optimism MC n=200 l=40 1e5": lambda: verify.optimism_probability_mc(0.5, 200, 40, 100_000, 0).hits,
    "concentration MC n=1000 l=2 1e4": lambda: verify.concentration_check(0.3, None, 1000, 2, 0.1, 10_000, 0).hits,
    "exact enumeration n=18 l=3": lambda: verify.optimism_probability_exact(0.3, 18, 3),
}

# compile outside the timed region
run_episode(parse_policy("ensemble"), bandit, 50, 0)
for spec in ("ensemble-efficient", "klucb", "mars"):
    run_episode(parse_policy(spec), bandit, 50, 0)
verify.optimism_probability_mc(0.5, 5, 2, 10_000, 0)
verify.concentration_check(0.3, None, 5, 2, 0.1, 10_000, 0)
verify.optimism_probability_exact(0.3, 4, 2)

out = {"backend": backend_name(), "results": {}}
for name, job in jobs.items():
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        value = job()
        best = min(best, time.perf_counter() - t0)
    out["results"][name] = {"seconds": best, "value": value}
print(json.dumps(out))
"""


def run_backend(disable: bool, episodes: int, repeat: int) -> dict:
    env = dict(os.environ, BATCHENS_DISABLE_NUMBA="1" if disable else "0")
    proc = subprocess.run([sys.executable, "-c", WORKER, str(episodes), str(repeat)],
                          env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3, help="best-of repeats per job")
    parser.add_argument("--episodes", type=int, default=3, help="episodes per policy job")
    args = parser.parse_args(argv)

    fast = run_backend(False, args.episodes, args.repeat)
    slow = run_backend(True, args.episodes, 1)
    print(f"{'job':<36}{fast['backend']:>10}{slow['backend']:>10}{'speedup':>10}  same")
    mismatch = False
    for name, f in fast["results"].items():
        s = slow["results"][name]
        if isinstance(f["value"], float):
            # the two enumerations sum the same terms in a different order
            same = math.isclose(f["value"], s["value"], rel_tol=1e-12)
        else:
            same = f["value"] == s["value"]
        mismatch |= not same
        print(f"{name:<36}{f['seconds']:>9.3f}s{s['seconds']:>9.3f}s{s['seconds'] / f['seconds']:>9.1f}x  {same}")
    return 1 if mismatch else 0


if __name__ == "__main__":
    sys.exit(main())
