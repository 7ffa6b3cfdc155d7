"""Compare the numba loop kernels with their pure-numpy counterparts.

Part 1 times each kernel pair in-process (both implementations are always
importable). Part 2 re-runs an expression-evaluation workload in two child
processes, with and without ALPHAFORGE_NO_NUMBA=1, to measure end to end.

    python benchmarks/bench_kernels.py [--dates 1500] [--symbols 50] [--repeat 3]
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

WORKLOAD = """
import sys, time
from alphaforge.evaluate import evaluate
from alphaforge.generate import random_instantiate
from alphaforge.lang import PanelSchema
from alphaforge.panel import SyntheticConfig, generate_synthetic
n, m, k = (int(a) for a in sys.argv[1:4])
panel = generate_synthetic(SyntheticConfig(seed=0, n_symbols=m, n_days=n))
schema = PanelSchema.of(panel)
exprs = [random_instantiate(i, schema) for i in range(k)]
evaluate(exprs[0], panel)
t0 = time.perf_counter()
for e in exprs:
    evaluate(e, panel, check=False)
print(time.perf_counter() - t0)
"""


def best_of(fn, repeat):
    fn()  # warm-up (triggers JIT compilation)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_table(n, m, repeat):
    from alphaforge import _jit, kernels as K

    if not _jit.USE_NUMBA:
        print("numba disabled; loop kernels run as plain Python, skipping the in-process table")
        return
    rng = np.random.default_rng(0)
    x = rng.normal(size=(n, m))
    y = rng.normal(size=(n, m))
    x[rng.random(x.shape) < 0.05] = np.nan
    cases = [
        ("ts_mean w=20", lambda: K.ts_unary_loop(x, 20, K.TS_MEAN), lambda: K.ts_unary_numpy(x, 20, K.TS_MEAN)),
        ("ts_rank w=20", lambda: K.ts_unary_loop(x, 20, K.TS_RANK), lambda: K.ts_unary_numpy(x, 20, K.TS_RANK)),
        ("ts_skew w=60", lambda: K.ts_unary_loop(x, 60, K.TS_SKEW), lambda: K.ts_unary_numpy(x, 60, K.TS_SKEW)),
        ("ts_corr w=20", lambda: K.ts_binary_loop(x, y, 20, K.TS_CORR),
         lambda: K.ts_binary_numpy(x, y, 20, K.TS_CORR)),
        ("ts_regression_res w=60", lambda: K.ts_binary_loop(x, y, 60, K.TS_REGRES),
         lambda: K.ts_binary_numpy(x, y, 60, K.TS_REGRES)),
        ("ts_macd 12/26", lambda: K.ts_macd_loop(x, 12, 26), lambda: K.ts_macd_numpy(x, 12, 26)),
        ("ta_rsi w=14", lambda: K.ta_rsi_loop(x, 14), lambda: K.ta_rsi_numpy(x, 14)),
        ("cs_rank", lambda: K.cs_rank_loop(x), lambda: K.cs_rank_numpy(x)),
    ]
    print(f"kernel pairs on a {n}x{m} panel (best of {repeat}, ms)")
    print(f"{'kernel':<24}{'numba':>10}{'numpy':>10}{'speedup':>10}")
    for name, fast, slow in cases:
        a, b = best_of(fast, repeat), best_of(slow, repeat)
        print(f"{name:<24}{a * 1e3:>10.2f}{b * 1e3:>10.2f}{b / a:>9.1f}x")


def end_to_end(n, m, k):
    print(f"\nevaluating {k} random expressions on a {n}x{m} panel")
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, ALPHAFORGE_NO_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", WORKLOAD, str(n), str(m), str(k)], env=env,
                             capture_output=True, text=True, check=True)
        print(f"  {label:<6} {float(out.stdout.strip()):8.3f} s")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dates", type=int, default=1500)
    ap.add_argument("--symbols", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--expressions", type=int, default=200)
    args = ap.parse_args(argv)
    kernel_table(args.dates, args.symbols, args.repeat)
    end_to_end(args.dates, args.symbols, args.expressions)


if __name__ == "__main__":
    main()
