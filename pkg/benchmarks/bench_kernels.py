"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from ldpspde import _fallback, kernels

try:
    from ldpspde import _kernels
except ImportError:
    _kernels = None


def cases(rng):
    P, K, n = 1000, 256, 8
    y0 = rng.standard_normal((P, n))
    decay = np.exp(-rng.uniform(0, 0.1, (K, n)))
    inc = 0.01 * rng.standard_normal((P, K, n))
    yield "linear_recurrence P=1000 K=256 n=8", "linear_recurrence", lambda: (y0, decay, inc), False

    J = 200_000
    y = rng.standard_normal((P, n))
    d = np.zeros(n)
    d[0] = 1.0
    paths = np.sort(rng.integers(0, P, J)).astype(np.int64)
    amps = rng.choice([-0.5, 0.5], J)
    yield "apply_saturated_jumps P=1000 J=2e5", "apply_saturated_jumps", \
        lambda: (y.copy(), d, paths, amps, 1e-3, 2.0), True


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    print(f"selected backend: {kernels.BACKEND}")
    if _kernels is None:
        print("compiled extension not built; only the fallback is timed")
    rng = np.random.default_rng(0)
    for label, name, make, in_place in cases(rng):
        row = [label]
        results = {}
        for impl_name, impl in (("python", _fallback), ("cython", _kernels)):
            if impl is None:
                continue
            fn = getattr(impl, name)
            args_ = make()
            out = fn(*args_)
            results[impl_name] = args_[0] if in_place else out
            best = min(timeit.repeat(lambda: fn(*make()), number=1, repeat=args.repeat))
            row.append(f"{impl_name}={best * 1e3:.2f} ms")
        if len(results) == 2:
            err = np.max(np.abs(results["python"] - results["cython"]))
            row.append(f"max|diff|={err:.1e}")
        print("  ".join(row))


if __name__ == "__main__":
    main()
