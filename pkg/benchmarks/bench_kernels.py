"""Compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--rounds N] [--repeat R]

Prints per-round (or per-call) times for each bank, for Reality's best
response, and for a whole game with the theorem2 mixture.
"""
import argparse
import math
import time

import numpy as np

from ufqsh import _kernels_py, kernels
from ufqsh.engine import play
from ufqsh.hedge import power_hedge
from ufqsh.players import constant_forecaster, iid_reality
from ufqsh.strategy import DEFAULT_EPS_GRID, theorem2_forcer

CUBIC = power_hedge(3.0)


def _best_of(fn, repeat):
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _path(n, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.5, 2.0, n).tolist(), rng.standard_normal(n).tolist()


def bench_exp(mod, n):
    ks = [(1 + e) * math.sqrt(2 * math.log(k * math.log(2)) / 2 ** k)
          for e in DEFAULT_EPS_GRID for k in range(5, 41)]
    m = len(ks)
    bank = mod.ExpBank(ks, [0.1] * m, [2.0 ** (5 + i % 36) for i in range(m)], [-math.log(m)] * m)
    v, d = _path(n)
    S = A = 0.0
    for vi, di in zip(v, d):
        A += vi
        S += di
        bank.stakes(vi, A)
        bank.settle(di, S, A, 0.0)


def bench_trunc(mod, n):
    eps = [e for e in DEFAULT_EPS_GRID for _ in range(32)]
    D = [float(k) for _ in DEFAULT_EPS_GRID for k in range(1, 33)]
    bank = mod.TruncBank(eps, D, [-math.log(len(eps))] * len(eps), CUBIC)
    v, d = _path(n)
    A = 0.0
    for vi, di in zip(v, d):
        A += vi
        b = math.sqrt(A / math.log(math.log(A))) if A > math.exp(math.e) else 0.0
        bank.stakes(2.0, b)
        bank.settle(abs(di) ** 3, 2.0)


def bench_block(mod, n):
    k = len(DEFAULT_EPS_GRID)
    bank = mod.BlockBank(list(DEFAULT_EPS_GRID), [e / 2 for e in DEFAULT_EPS_GRID], [0.05] * k,
                         [20.0] * k, [-math.log(k)] * k, CUBIC)
    v, d = _path(n)
    A = 0.0
    for vi, di in zip(v, d):
        A += vi
        bank.stakes(vi, vi ** 1.5, A)
        bank.settle(di, abs(di) ** 3, vi, vi ** 1.5, A)


def bench_best_response(mod, n):
    rng = np.random.default_rng(1)
    args = [(float(rng.normal()), float(rng.normal()), float(rng.exponential())) for _ in range(n)]
    for M, V, W in args:
        mod.best_response(CUBIC, M, V, W, 1.0, 1.5, 1.0)


def bench_game(backend, n):
    f = constant_forecaster(0.0, 1.0, 1.59577, CUBIC)
    play(hedge=CUBIC, forecaster=f, skeptic=theorem2_forcer(CUBIC, backend=backend),
         reality=iid_reality("gaussian", 0), rounds=n, record=False)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rounds", type=int, default=5000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not kernels.compiled_available():
        raise SystemExit("the compiled extension is not built; run: python setup.py build_ext --inplace")
    comp = kernels._compiled
    n = args.rounds
    rows = [
        ("ExpBank (252 accounts)", lambda m: bench_exp(m, n)),
        ("TruncBank (224 accounts)", lambda m: bench_trunc(m, n)),
        ("BlockBank (7 accounts)", lambda m: bench_block(m, n)),
        ("best_response", lambda m: bench_best_response(m, n)),
    ]
    print(f"{'kernel':<28}{'python us':>12}{'compiled us':>14}{'speedup':>10}")
    for name, fn in rows:
        tp = _best_of(lambda: fn(_kernels_py), args.repeat) / n * 1e6
        tc = _best_of(lambda: fn(comp), args.repeat) / n * 1e6
        print(f"{name:<28}{tp:>12.2f}{tc:>14.2f}{tp / tc:>9.1f}x")
    tp = _best_of(lambda: bench_game("python", n), args.repeat) / n * 1e6
    tc = _best_of(lambda: bench_game("compiled", n), args.repeat) / n * 1e6
    print(f"{'theorem2 game (per round)':<28}{tp:>12.2f}{tc:>14.2f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
