"""Time the numba kernels against their pure-numpy counterparts.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--csv out.csv]

Each kernel is called once untimed (numba compilation or cache load), then
the best of ``--repeat`` wall-clock runs is reported. The numpy matmul and SVD
call BLAS/LAPACK, so on large inputs they are expected to win; the pair
kernels are the ones numba exists for.
"""

import argparse
import csv
import sys
import time

import numpy as np

from pera import kernels
from pera.expansion import expanded_dim, pair_order


def best_time(fn, args, repeat):
    fn(*args)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    for m in (32, 128):
        a, b = rng.standard_normal((m, m)), rng.standard_normal((m, m))
        yield f"matmul {m}x{m}", kernels.matmul_nb, kernels.matmul_np, (a, b)
    for m in (32, 128):
        a = rng.standard_normal((m, m))
        yield f"svd {m}x{m}", kernels.svd_nb, kernels.svd_np, (a,)
    for r in (4, 16):
        order = pair_order(r)
        f, s = order.first, order.second
        b = rng.standard_normal((256, r))
        a = rng.standard_normal((r, 256))
        h = rng.standard_normal(f.size)
        d = expanded_dim(r)
        yield f"expand_b m=256 r={r}", kernels.expand_b_nb, kernels.expand_b_np, (b, f, s)
        yield f"expand_a n=256 r={r}", kernels.expand_a_nb, kernels.expand_a_np, (a, h, f, s)
        d_bhat, d_ahat = rng.standard_normal((256, d)), rng.standard_normal((d, 256))
        yield (
            f"collapse m=n=256 r={r}",
            kernels.collapse_grads_nb,
            kernels.collapse_grads_np,
            (b, a, h, d_bhat, d_ahat, f, s),
        )


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--csv", default=None, help="also write results to this file")
    args = parser.parse_args(argv)

    rows = []
    for name, nb, npy, inputs in cases(np.random.default_rng(args.seed)):
        t_nb = best_time(nb, inputs, args.repeat)
        t_np = best_time(npy, inputs, args.repeat)
        rows.append((name, t_nb, t_np))

    print(f"{'kernel':28s} {'numba (us)':>12s} {'numpy (us)':>12s} {'numpy/numba':>12s}")
    for name, t_nb, t_np in rows:
        print(f"{name:28s} {t_nb * 1e6:12.1f} {t_np * 1e6:12.1f} {t_np / t_nb:12.2f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kernel", "numba_s", "numpy_s"])
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
