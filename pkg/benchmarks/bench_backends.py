"""Compare the compiled kernel backend against the pure-Python fallback.

Runs the same synthetic day through both implementations and reports
wall time per episode plus the speedup, then verifies the outputs agree
bit for bit. Select the backend under test with LOBEXEC_BACKEND; this
script imports both directly so no environment variable is needed.

Usage: python benchmarks/bench_backends.py [--episodes N] [--horizon S]
"""

from __future__ import annotations

import argparse
import importlib
import time

import numpy as np

from lobexec import _kernels_py
from lobexec.synth import make_day


def _load_compiled():
    try:
        return importlib.import_module("lobexec._kernels")
    except ImportError:
        return None


def _run(kernels, day, starts, length, plan):
    results = []
    t0 = time.perf_counter()
    for start in starts:
        results.append(kernels.run_episode_core(
            day.timestamp_ns, day.bid_px, day.bid_sz, day.ask_px, day.ask_sz,
            start, length, 1.0, 0.0, 0.1, 0.003, 0.5, 60.0, 0.001, 0.01,
            0, plan, 3.0, 0.25, 0.0))
    elapsed = time.perf_counter() - t0
    return results, elapsed


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--episodes", type=int, default=20)
    ap.add_argument("--horizon", type=int, default=1800)
    args = ap.parse_args()

    compiled = _load_compiled()
    day = make_day("20200201", seed=7)
    length = args.horizon
    span = len(day) - length
    starts = [i * span // args.episodes for i in range(args.episodes)]
    plan = np.full(length - 1, 1.0 / (length - 1))

    py_res, py_t = _run(_kernels_py, day, starts, length, plan)
    print(f"python backend : {py_t / args.episodes * 1e3:9.3f} ms/episode "
          f"({args.episodes} episodes, H={args.horizon}s)")
    if compiled is None:
        print("compiled backend unavailable; skipping comparison")
        return 0
    cy_res, cy_t = _run(compiled, day, starts, length, plan)
    print(f"compiled backend: {cy_t / args.episodes * 1e3:9.3f} ms/episode")
    print(f"speedup        : {py_t / cy_t:9.1f}x")

    identical = all(
        all(a == b for a, b in zip(pr, cr))
        for pr, cr in zip(py_res, cy_res))
    print(f"bitwise equal  : {identical}")
    return 0 if identical else 1


if __name__ == "__main__":
    raise SystemExit(main())
