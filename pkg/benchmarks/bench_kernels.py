"""Time the membership and pattern sweeps on both kernel backends.

    python benchmarks/bench_kernels.py [--N 60] [--Q 150] [--K 30] [--repeat 3]
"""
import argparse
import time

import numpy as np

from infa._kernels import BACKENDS
from infa.factorization import Hyperparams, initialize, membership_iteration, pattern_iteration
from infa.segmentation import segment_series


def bench(backend, S, h, repeat):
    out = {}
    for name, step in (("membership", membership_iteration), ("pattern", pattern_iteration)):
        best = np.inf
        for _ in range(repeat):
            rng = np.random.default_rng(h.seed)
            m = initialize(S, h.K, rng, hyper=h)
            t0 = time.perf_counter()
            step(m, rng, backend)
            best = min(best, time.perf_counter() - t0)
        out[name] = best
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=60)
    ap.add_argument("--Q", type=int, default=150)
    ap.add_argument("--K", type=int, default=30)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    L = max(2, round(0.2 * args.Q))
    delta = max(1, round(0.05 * L))
    x = np.random.default_rng(0).normal(size=(args.N, args.Q)).cumsum(axis=1)
    S = segment_series(x, L, delta)
    h = Hyperparams(K=args.K, L=L, delta=delta)
    N, M, _ = S.shape
    print(f"N={N} M={M} K={args.K} L={L}: {N * M} segments, one sweep each")
    results = {}
    for name, mod in BACKENDS.items():
        if mod is None:
            print(f"{name:9s} unavailable")
            continue
        results[name] = bench(mod, S, h, args.repeat)
        r = results[name]
        print(f"{name:9s} membership {r['membership']:9.4f}s  pattern {r['pattern']:9.4f}s")
    if len(results) == 2:
        for part in ("membership", "pattern"):
            ratio = results["pure"][part] / results["compiled"][part]
            print(f"speed-up {part:10s} x{ratio:.0f}")


if __name__ == "__main__":
    main()
