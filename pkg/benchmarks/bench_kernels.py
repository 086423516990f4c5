"""Compare the compiled urn kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Both backends are imported directly, so the compiled module must have been
built (``pip install -e . --no-build-isolation``). Results are also checked
for equality.
"""
import argparse
import timeit

import numpy as np

from twostage import _urn_py

try:
    from twostage import _urn
except ImportError:  # extension not built
    _urn = None


def cases():
    rng = np.random.default_rng(0)
    for n_patients in (12, 40, 200):
        s = (rng.random(n_patients) < 0.5).astype(np.uint8)
        u = rng.random((2000, n_patients))
        yield f"urn_null_statistics  n={n_patients:<4} R=2000", "urn_null_statistics", (s, u, 1, 1, 1)
    for n in (2000, 100_000):
        yield (f"rpw_allocate         n={n:<7}", "rpw_allocate",
               (rng.random(n), rng.random(n), 0.7, 0.3, 1, 1, 1))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _urn is None:
        raise SystemExit("compiled extension not available; build it first")
    print(f"{'kernel':<42}{'python ms':>12}{'cython ms':>12}{'speed-up':>10}")
    for label, name, argv in cases():
        py_fn, cy_fn = getattr(_urn_py, name), getattr(_urn, name)
        a, b = py_fn(*argv), cy_fn(*argv)
        same = np.array_equal(np.asarray(a), np.asarray(b))
        t_py = min(timeit.repeat(lambda: py_fn(*argv), number=1, repeat=args.repeat)) * 1e3
        t_cy = min(timeit.repeat(lambda: cy_fn(*argv), number=1, repeat=args.repeat)) * 1e3
        flag = "" if same else "  MISMATCH"
        print(f"{label:<42}{t_py:>12.3f}{t_cy:>12.3f}{t_py / t_cy:>9.1f}x{flag}")


if __name__ == "__main__":
    main()
