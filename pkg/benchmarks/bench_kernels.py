"""Compares the compiled and pure-numpy kNN kernel backends.

Both backends follow one numerics contract (coordinate-ascending
accumulation, sort, then sqrt), so their outputs must match bitwise;
this script verifies that while timing them.  The (n=128, d=128) row is
the shape the training loop hits ten times per epoch when scoring
penultimate representations at the default batch size and hidden width.

Run from the repository root:

    python3 benchmarks/bench_kernels.py
"""

import argparse
import timeit

import numpy as np

from d2l import _kernels_py
from d2l import backend

try:
    from d2l import _kernels
except ImportError:
    _kernels = None

SIZES = [
    (128, 128, 20),
    (256, 128, 20),
    (512, 64, 20),
    (1024, 32, 20),
    (2000, 16, 20),
]


def best_of(fn, repeat: int, number: int) -> float:
    """Best per-call time in seconds; best-of, so scheduler noise only hurts."""
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5, help="timing repetitions (default 5)")
    parser.add_argument("--number", type=int, default=10, help="calls per repetition (default 10)")
    parser.add_argument("--seed", type=int, default=7, help="point cloud seed (default 7)")
    args = parser.parse_args()

    if _kernels is None:
        print("compiled extension not built; timing the numpy fallback only")
    print(f"active backend: {backend.BACKEND_NAME}")
    print()
    header = f"{'n':>6} {'d':>5} {'k':>3} {'numpy':>12} {'compiled':>12} {'speedup':>8}  bitwise"
    print(header)
    print("-" * len(header))

    rng = np.random.default_rng(args.seed)
    for n, d, k in SIZES:
        points = rng.standard_normal((n, d))
        t_py = best_of(lambda: _kernels_py.batch_knn(points, k), args.repeat, args.number)
        if _kernels is None:
            print(f"{n:>6} {d:>5} {k:>3} {t_py * 1e3:>10.3f} ms {'-':>12} {'-':>8}")
            continue
        t_c = best_of(lambda: _kernels.batch_knn(points, k), args.repeat, args.number)
        same = np.array_equal(_kernels.batch_knn(points, k), _kernels_py.batch_knn(points, k))
        print(
            f"{n:>6} {d:>5} {k:>3} {t_py * 1e3:>10.3f} ms {t_c * 1e3:>9.3f} ms "
            f"{t_py / t_c:>7.1f}x  {same}"
        )
        if not same:
            print("backend outputs differ; the numerics contract is broken")
            return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
