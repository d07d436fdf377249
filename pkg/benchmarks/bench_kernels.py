"""Compare the numba and pure-numpy kernels on realistic inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--sessions 2000]

Prints best-of-N wall time per backend and checks that both return the same
answer (bit-identical for the edit distance, within 1e-10 for Cox).
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from clickipi import kernels
from clickipi._jit import HAS_NUMBA
from clickipi.actions import DEFAULT_TAXONOMY as TAX
from clickipi.simgen import simulate_weekly_hazard


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def edit_distance_case(n_sessions, rng):
    streams = [rng.integers(0, 8, size=int(rng.integers(20, 200))) for _ in range(n_sessions)]

    def run(use_numba):
        return [
            kernels.window_last_rows(s, TAX.codes, TAX.lengths, 0.1, 1.0, 1.0, use_numba=use_numba)
            for s in streams
        ]

    return run


def cox_case(n_rows):
    X, start, stop, event, _ = simulate_weekly_hazard(n_rows, beta=-0.45, seed=1)
    X = np.hstack([X, np.random.default_rng(2).standard_normal((n_rows, 2))])
    beta = np.array([-0.3, 0.1, 0.05])

    def run(use_numba):
        return kernels.cox_loglik_grad_hess(X, start, stop, event, beta, use_numba=use_numba)

    return run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sessions", type=int, default=2000)
    ap.add_argument("--rows", type=int, default=20000)
    args = ap.parse_args()
    if not HAS_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    cases = [
        (f"window edit distance, {args.sessions} sessions x {len(TAX.lengths)} patterns",
         edit_distance_case(args.sessions, rng)),
        (f"Cox loglik/grad/hess, {args.rows} person-weeks x 3 covariates", cox_case(args.rows)),
    ]
    for label, run in cases:
        run(True)  # compile outside the timing
        t_nb, out_nb = best_of(lambda: run(True), args.repeat)
        t_np, out_np = best_of(lambda: run(False), args.repeat)
        if isinstance(out_nb, list):
            same = all(np.array_equal(a, b) for a, b in zip(out_nb, out_np))
        else:
            same = all(np.allclose(a, b, rtol=1e-10, atol=1e-10) for a, b in zip(out_nb, out_np))
        print(label)
        print(f"  numba  {t_nb * 1e3:9.2f} ms")
        print(f"  numpy  {t_np * 1e3:9.2f} ms   ({t_np / t_nb:.1f}x)")
        print(f"  outputs agree: {same}")


if __name__ == "__main__":
    main()
