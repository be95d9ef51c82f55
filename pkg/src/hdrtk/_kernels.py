"""Hot inner loops, with a numba path and a pure-numpy path.

The numba path is used when numba imports cleanly and the environment
variable ``HDRTK_DISABLE_NUMBA`` is unset (or ``0``).  Both paths are always
importable so tests and ``benchmarks/bench_kernels.py`` can compare them.

Integer kernels (histogram, LUT) agree bit-for-bit between paths.  Float
kernels agree to rounding; summation order differs.
"""

from __future__ import annotations

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def decorator(func):
            return func

        return decorator


def _env_disabled() -> bool:
    return os.environ.get("HDRTK_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")


USE_NUMBA = NUMBA_AVAILABLE and not _env_disabled()


# ---------------------------------------------------------------------------
# numpy reference path
# ---------------------------------------------------------------------------


def histogram256_np(values: np.ndarray) -> np.ndarray:
    return np.bincount(values.ravel(), minlength=256).astype(np.int64)


def apply_lut_np(values: np.ndarray, lut: np.ndarray) -> np.ndarray:
    return lut[values]


def gaussian_valid_np(plane: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Separable 'valid' correlation of a 2-D plane with a 1-D kernel."""
    k = taps.shape[0]
    rows = sliding_window_view(plane, k, axis=0)  # (H-k+1, W, k)
    tmp = rows @ taps
    cols = sliding_window_view(tmp, k, axis=1)  # (H-k+1, W-k+1, k)
    return cols @ taps


def avg_pool2_np(plane: np.ndarray) -> np.ndarray:
    h = plane.shape[0] // 2 * 2
    w = plane.shape[1] // 2 * 2
    p = plane[:h, :w]
    return 0.25 * (p[0::2, 0::2] + p[1::2, 0::2] + p[0::2, 1::2] + p[1::2, 1::2])


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------


@njit(cache=True)
def _histogram256_nb(flat):
    counts = np.zeros(256, dtype=np.int64)
    for i in range(flat.shape[0]):
        counts[flat[i]] += 1
    return counts


@njit(cache=True)
def _apply_lut_nb(flat, lut):
    out = np.empty_like(flat)
    for i in range(flat.shape[0]):
        out[i] = lut[flat[i]]
    return out


@njit(cache=True)
def _gaussian_valid_nb(plane, taps):
    k = taps.shape[0]
    h, w = plane.shape
    oh = h - k + 1
    ow = w - k + 1
    tmp = np.empty((oh, w), dtype=np.float64)
    for i in range(oh):
        for j in range(w):
            acc = 0.0
            for t in range(k):
                acc += plane[i + t, j] * taps[t]
            tmp[i, j] = acc
    out = np.empty((oh, ow), dtype=np.float64)
    for i in range(oh):
        for j in range(ow):
            acc = 0.0
            for t in range(k):
                acc += tmp[i, j + t] * taps[t]
            out[i, j] = acc
    return out


@njit(cache=True)
def _avg_pool2_nb(plane):
    oh = plane.shape[0] // 2
    ow = plane.shape[1] // 2
    out = np.empty((oh, ow), dtype=np.float64)
    for i in range(oh):
        for j in range(ow):
            out[i, j] = 0.25 * (
                plane[2 * i, 2 * j]
                + plane[2 * i + 1, 2 * j]
                + plane[2 * i, 2 * j + 1]
                + plane[2 * i + 1, 2 * j + 1]
            )
    return out


def histogram256_nb(values: np.ndarray) -> np.ndarray:
    return _histogram256_nb(np.ascontiguousarray(values, dtype=np.uint8).ravel())


def apply_lut_nb(values: np.ndarray, lut: np.ndarray) -> np.ndarray:
    v = np.ascontiguousarray(values, dtype=np.uint8)
    return _apply_lut_nb(v.ravel(), np.ascontiguousarray(lut, dtype=np.uint8)).reshape(v.shape)


def gaussian_valid_nb(plane: np.ndarray, taps: np.ndarray) -> np.ndarray:
    return _gaussian_valid_nb(
        np.ascontiguousarray(plane, dtype=np.float64), np.ascontiguousarray(taps, dtype=np.float64)
    )


def avg_pool2_nb(plane: np.ndarray) -> np.ndarray:
    return _avg_pool2_nb(np.ascontiguousarray(plane, dtype=np.float64))


NUMPY_KERNELS = {
    "histogram256": histogram256_np,
    "apply_lut": apply_lut_np,
    "gaussian_valid": gaussian_valid_np,
    "avg_pool2": avg_pool2_np,
}

NUMBA_KERNELS = {
    "histogram256": histogram256_nb,
    "apply_lut": apply_lut_nb,
    "gaussian_valid": gaussian_valid_nb,
    "avg_pool2": avg_pool2_nb,
}

_ACTIVE = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS

histogram256 = _ACTIVE["histogram256"]
apply_lut = _ACTIVE["apply_lut"]
gaussian_valid = _ACTIVE["gaussian_valid"]
avg_pool2 = _ACTIVE["avg_pool2"]


def backend() -> str:
    """Name of the kernel backend selected at import time."""
    return "numba" if USE_NUMBA else "numpy"
