"""Time the numba kernels against their numpy fallbacks.

Run from the repo root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --paths 20000 --grid 1024

Each kernel is timed on the same inputs with both implementations and
the outputs are cross-checked, so this doubles as a coarse parity
smoke test.  Numba functions are called once before timing to exclude
JIT compilation.
"""
import argparse
import time

import numpy as np

from qgauss import _accel


def timeit(fn, *args, repeat=3):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--paths", type=int, default=50_000)
    ap.add_argument("--grid", type=int, default=512)
    ap.add_argument("--net-paths", type=int, default=2_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba backend unavailable (QGAUSS_NUMBA=0 or "
                         "numba not installed); nothing to compare")

    rng = np.random.default_rng(args.seed)
    block = rng.standard_normal((args.paths, args.grid))
    weights = np.full(args.grid, 1.0 / args.grid)
    y = np.cumsum(rng.standard_normal(100_000) * 0.01) + rng.standard_normal(100_000)
    w = np.ones_like(y)
    small = block[: args.net_paths]
    delta = 1.5

    cases = [
        ("sup_norms", _accel.sup_norms_nb, _accel.sup_norms_np, (block,)),
        ("lp_norms p=2", _accel.lp_norms_nb, _accel.lp_norms_np,
         (block, weights, 2.0)),
        ("lp_norms p=1.7", _accel.lp_norms_nb, _accel.lp_norms_np,
         (block, weights, 1.7)),
        ("isotonic PAV", _accel.isotonic_nondecreasing_nb,
         _accel.isotonic_nondecreasing_np, (y, w)),
        ("greedy_net_sup", _accel.greedy_net_sup_nb, _accel.greedy_net_sup_np,
         (small, delta)),
        ("greedy_net_lp p=2", _accel.greedy_net_lp_nb, _accel.greedy_net_lp_np,
         (small, weights, 2.0, delta)),
    ]

    print(f"{'kernel':<20} {'numba':>10} {'numpy':>10} {'speedup':>8}")
    for name, fn_nb, fn_np, inputs in cases:
        fn_nb(*inputs)  # warm the JIT cache
        t_nb, out_nb = timeit(fn_nb, *inputs)
        t_np, out_np = timeit(fn_np, *inputs)
        if isinstance(out_nb, tuple):
            agree = all(np.allclose(a, b, atol=1e-12)
                        for a, b in zip(out_nb, out_np))
        else:
            agree = np.allclose(out_nb, out_np, atol=1e-12)
        flag = "" if agree else "  MISMATCH"
        print(f"{name:<20} {t_nb * 1e3:>8.2f}ms {t_np * 1e3:>8.2f}ms "
              f"{t_np / t_nb:>7.1f}x{flag}")


if __name__ == "__main__":
    main()
