"""Compare the numba kernels with the pure-numpy fallback.

The backend is fixed at import time by ``EDGECHAIN_DISABLE_NUMBA``, so each
backend is timed in its own subprocess:

    python benchmarks/bench_kernels.py             # both, side by side
    python benchmarks/bench_kernels.py --worker    # current backend only, JSON out
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _best(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def worker(batches: int, batch_size: int, timeslots: int, repeat: int) -> dict[str, float]:
    from edgechain import kernels
    from edgechain._jit import USE_NUMBA
    from edgechain.config import ExperimentConfig
    from edgechain.harness import simulate_fast
    from edgechain.workload import generate_workload

    rng = np.random.default_rng(0)
    cases = [rng.integers(1, 16, size=(batch_size, 4)).astype(np.float64) for _ in range(batches)]
    cap0 = np.array([300.0, 250.0, 250.0, 250.0])

    def greedy():
        for d in cases:
            n = d.shape[0]
            kernels.greedy_admit(d, np.full(n, 1.35), np.arange(n), cap0.copy(), 100.0, np.zeros(n, np.int64),
                                 np.zeros(1, np.int64), False, np.zeros(n, np.int8), np.zeros(n),
                                 np.zeros(n, np.int64), np.full(n, -1, np.int64))

    cfg = ExperimentConfig(timeslots=timeslots, seeds=(1,))
    fleet, workload = generate_workload(cfg, 1)

    greedy()  # compile
    simulate_fast(cfg, fleet, workload)
    return {
        "backend": "numba" if USE_NUMBA else "numpy",
        "greedy_admit_s": _best(greedy, repeat),
        "simulate_run_s": _best(lambda: simulate_fast(cfg, fleet, workload), repeat),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--worker", action="store_true")
    ap.add_argument("--batches", type=int, default=200)
    ap.add_argument("--batch-size", type=int, default=60)
    ap.add_argument("--timeslots", type=int, default=300)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    sizes = (args.batches, args.batch_size, args.timeslots, args.repeat)
    if args.worker:
        print(json.dumps(worker(*sizes)))
        return
    results = []
    for disable in ("0", "1"):
        env = dict(os.environ, EDGECHAIN_DISABLE_NUMBA=disable)
        out = subprocess.run([sys.executable, __file__, "--worker", "--batches", str(args.batches),
                              "--batch-size", str(args.batch_size), "--timeslots", str(args.timeslots),
                              "--repeat", str(args.repeat)], env=env, check=True, capture_output=True, text=True)
        results.append(json.loads(out.stdout.strip().splitlines()[-1]))
    fast, slow = results
    print(f"{'kernel':<16}{'numba (s)':>12}{'numpy (s)':>12}{'speedup':>10}")
    for key, label in (("greedy_admit_s", "greedy_admit"), ("simulate_run_s", "simulate_run")):
        print(f"{label:<16}{fast[key]:>12.4f}{slow[key]:>12.4f}{slow[key] / fast[key]:>9.1f}x")


if __name__ == "__main__":
    main()
