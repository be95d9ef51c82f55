"""Time the numpy and numba kernel backends side by side.

Usage: python3 benchmarks/bench_kernels.py [--size 512] [--repeat 5]

Each numba kernel is called once before timing so compilation is excluded.
"""

import argparse
import timeit

import numpy as np

from hdrtk import _kernels
from hdrtk.losses import gaussian_taps


def cases(size: int, rng):
    u8 = rng.integers(0, 256, size=(size, size), dtype=np.uint8)
    plane = rng.uniform(size=(size, size))
    lut = rng.integers(0, 256, size=256, dtype=np.uint8)
    taps = gaussian_taps()
    return {
        "histogram256": (u8,),
        "apply_lut": (u8, lut),
        "gaussian_valid": (plane, taps),
        "avg_pool2": (plane,),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=512)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=10)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, call_args in cases(args.size, rng).items():
        np_fn, nb_fn = _kernels.NUMPY_KERNELS[name], _kernels.NUMBA_KERNELS[name]
        ref = np_fn(*call_args)
        got = nb_fn(*call_args)  # warm-up compiles
        np.testing.assert_allclose(got, ref, rtol=1e-12)
        t_np = min(timeit.repeat(lambda: np_fn(*call_args), number=args.number, repeat=args.repeat))
        t_nb = min(timeit.repeat(lambda: nb_fn(*call_args), number=args.number, repeat=args.repeat))
        ms_np, ms_nb = 1e3 * t_np / args.number, 1e3 * t_nb / args.number
        print(f"{name:<16}{ms_np:>12.3f}{ms_nb:>12.3f}{ms_np / ms_nb:>9.2f}x")


if __name__ == "__main__":
    main()
