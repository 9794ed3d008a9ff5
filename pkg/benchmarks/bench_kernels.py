"""Compare the compiled kernels with the numpy fallback on realistic workloads.

Usage: python3 benchmarks/bench_kernels.py [--patterns N] [--repeat R]
"""

from __future__ import annotations

import argparse
import itertools
import time

import numpy as np

from sspi_lab import _pykernels
from sspi_lab import batch as B
from sspi_lab.core import RandomSource
from sspi_lab.harness import generate_instance

try:
    from sspi_lab import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def workloads(n_trials):
    g = generate_instance("random-graph", RandomSource(1), n=5, p=0.7, dist="uniform")
    ev = B.evaluate("truthful", B.draw_batch(
        generate_instance("bipartite", RandomSource(2), buyers=5, items=4, dist="uniform"),
        RandomSource(3), n_trials))
    em = B.evaluate("edge-matching", B.draw_batch(g, RandomSource(4), n_trials))
    bud = B.evaluate("budget-additive", B.draw_batch(
        generate_instance("budget-additive", RandomSource(5), buyers=4, items=4, dist="uniform",
                          budget_range=(3.0, 12.0)), RandomSource(6), n_trials))
    return [("edge-matching pref_totals", em), ("truthful pref_totals", ev), ("budget budget_totals", bud)]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=50_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--max-orders", type=int, default=720)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not available; only the numpy fallback can run")
    print(f"{'workload':32s} {'patterns':>9s} {'orders':>7s} {'numpy s':>9s} {'cython s':>9s} {'speedup':>8s}  agree")
    for label, ev in workloads(args.trials):
        m = len(ev.units)
        orders = np.array(list(itertools.islice(itertools.permutations(range(m)), args.max_orders)), dtype=np.int64)
        if isinstance(ev, B.PrefEvaluation):
            args_ = (ev.umasks, ev.W, orders)
            name = "pref_totals"
        else:
            args_ = (ev.val, ev.item, ev.budgets, ev.weight, orders)
            name = "budget_totals"
        t_py, r_py = best_of(lambda: getattr(_pykernels, name)(*args_), args.repeat)
        if _kernels is not None:
            t_cy, r_cy = best_of(lambda: getattr(_kernels, name)(*args_), args.repeat)
            agree = bool(np.allclose(r_py, r_cy, rtol=1e-12, atol=1e-12))
            print(f"{label:32s} {args_[0].shape[0]:9d} {len(orders):7d} {t_py:9.3f} {t_cy:9.3f} "
                  f"{t_py / max(t_cy, 1e-9):7.1f}x  {agree}")
        else:
            print(f"{label:32s} {args_[0].shape[0]:9d} {len(orders):7d} {t_py:9.3f} {'-':>9s} {'-':>8s}  -")


if __name__ == "__main__":
    main()
