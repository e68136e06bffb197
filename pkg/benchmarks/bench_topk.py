"""Benchmark: compiled top-k selection kernel vs the pure-numpy fallback.

Times the selection kernel on its own (the ranking hot loop once scores
exist) and end-to-end candidate ranking through `rank_candidates`, verifying
on the way that both backends return identical results.

Usage: python benchmarks/bench_topk.py [--repeats 30]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from iclselect import kernels
from iclselect.embeddings import EmbeddingStore, rank_candidates


def time_fn(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_kernel(repeats: int):
    rng = np.random.Generator(np.random.PCG64(1))
    print(f"{'pool':>8} {'k':>6} {'numpy (us)':>12} {'compiled (us)':>14} {'speedup':>8}")
    for pool in (1_000, 5_000, 25_000):
        scores = rng.standard_normal(pool)
        for k in (8, 250):
            expected = kernels.top_k_desc_py(scores, k)
            t_py = time_fn(lambda: kernels.top_k_desc_py(scores, k), repeats)
            if kernels.top_k_desc_compiled is None:
                print(f"{pool:>8} {k:>6} {t_py * 1e6:>12.1f} {'(not built)':>14} {'-':>8}")
                continue
            got = kernels.top_k_desc_compiled(scores, k)
            assert np.array_equal(got, expected), "backend outputs diverged"
            t_cy = time_fn(lambda: kernels.top_k_desc_compiled(scores, k), repeats)
            print(f"{pool:>8} {k:>6} {t_py * 1e6:>12.1f} {t_cy * 1e6:>14.1f} {t_py / t_cy:>8.2f}x")


def bench_end_to_end(repeats: int):
    rng = np.random.Generator(np.random.PCG64(2))
    print(f"\n{'pool':>8} {'dim':>5} {'depth':>6} {'rank_candidates (ms)':>22}  [{kernels.KERNEL_BACKEND} backend]")
    for pool, dim, depth in ((5_000, 64, 250), (25_000, 64, 250), (25_000, 64, 25_000)):
        store = EmbeddingStore({f"v{i:06d}": rng.standard_normal(dim).astype(np.float32) for i in range(pool)})
        query = rng.standard_normal(dim).astype(np.float32)
        t = time_fn(lambda: rank_candidates(query, store, depth), repeats)
        print(f"{pool:>8} {dim:>5} {depth:>6} {t * 1e3:>22.2f}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--repeats", type=int, default=30, help="timing repeats (best-of)")
    args = parser.parse_args()
    print(f"compiled kernel available: {kernels.HAVE_COMPILED}")
    bench_kernel(args.repeats)
    bench_end_to_end(max(3, args.repeats // 3))


if __name__ == "__main__":
    main()
