"""Compare the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py --sizes 128 512 1024 --repeat 5
"""
import argparse
import timeit

import numpy as np

from ditreg import _fallback

try:
    from ditreg import _kernels
except ImportError:  # extension not built
    _kernels = None


def cases(n, rng):
    x = rng.normal(size=(n, 3))
    y = rng.normal(size=(n, 3))
    match = rng.integers(0, n, size=n)
    nbr = _fallback.knn_indices(x, 10)
    errors = rng.random((n, 45))
    return {
        "knn_indices(k=20)": lambda m: m.knn_indices(x, 20),
        "nearest_neighbors": lambda m: m.nearest_neighbors(x, y),
        "triangle_errors(k_s=10)": lambda m: m.triangle_errors(x, y, match, nbr),
        "mink_sum(k=10)": lambda m: m.mink_sum(errors, 10),
    }


def best_time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[128, 512, 1024])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<26}{'N':>6}{'numpy ms':>12}{'cython ms':>12}{'speedup':>10}")
    for n in args.sizes:
        for name, run in cases(n, rng).items():
            t_np = best_time(lambda: run(_fallback), args.repeat) * 1e3
            if _kernels is None:
                print(f"{name:<26}{n:>6}{t_np:>12.3f}{'n/a':>12}{'':>10}")
                continue
            t_cy = best_time(lambda: run(_kernels), args.repeat) * 1e3
            print(f"{name:<26}{n:>6}{t_np:>12.3f}{t_cy:>12.3f}{t_np / t_cy:>9.1f}x")


if __name__ == "__main__":
    main()
