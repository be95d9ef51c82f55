"""Histogram equalization and global tone-mapping operators."""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateInputError, ImageIOError, PreconditionError, ValidationError
from .image_core import HdrImage, Histogram, LdrImage, luma_u8

MU_DEFAULT = 5000.0

# BT.601 luma weights, shared by equalization (integer form) and Reinhard.
_LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


class EqualizeMode(str, enum.Enum):
    LUMA = "luma"
    PER_CHANNEL = "per-channel"


@dataclass(frozen=True)
class TonemapParams:
    mu: float = MU_DEFAULT

    def __post_init__(self):
        if not (np.isfinite(self.mu) and self.mu > 0):
            raise ValidationError(f"mu must be a positive finite number, got {self.mu}")


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5)


def equalization_lut(counts: np.ndarray) -> np.ndarray:
    """Min-CDF equalization lookup table for one 256-bin histogram.

    A histogram with a single occupied bin yields the identity table.
    """
    counts = np.asarray(counts, dtype=np.int64)
    cdf = np.cumsum(counts)
    total = int(cdf[-1])
    cdf_min = int(cdf[np.flatnonzero(counts)[0]])
    if total == cdf_min:
        return np.arange(256, dtype=np.uint8)
    lut = _round_half_up((cdf - cdf_min) / (total - cdf_min) * 255.0)
    return np.clip(lut, 0, 255).astype(np.uint8)


def equalize_histogram(image: LdrImage, mode: EqualizeMode | str = EqualizeMode.LUMA) -> LdrImage:
    """Histogram-equalize an 8-bit image.

    In luma mode the BT.601 luma plane is equalized and chroma is held fixed:
    every channel is shifted by the luma change ``lut[Y] - Y`` and clamped
    to [0, 255].  In per-channel mode R, G and B are equalized independently.
    """
    mode = EqualizeMode(mode)
    px = image.pixels
    if mode is EqualizeMode.PER_CHANNEL:
        out = np.empty_like(px)
        for c in range(3):
            channel = np.ascontiguousarray(px[..., c])
            lut = equalization_lut(_kernels.histogram256(channel))
            out[..., c] = _kernels.apply_lut(channel, lut)
        return LdrImage(out)

    y = luma_u8(px)
    lut = equalization_lut(_kernels.histogram256(y))
    shift = _kernels.apply_lut(y, lut).astype(np.int16) - y.astype(np.int16)
    out = np.clip(px.astype(np.int16) + shift[..., None], 0, 255).astype(np.uint8)
    return LdrImage(out)


def cdf_uniform_distance(values: np.ndarray) -> float:
    """Sup-distance between the empirical CDF of 8-bit values and the uniform CDF."""
    counts = _kernels.histogram256(np.ascontiguousarray(values, dtype=np.uint8))
    cdf = np.cumsum(counts) / counts.sum()
    uniform = np.arange(1, 257) / 256.0
    return float(np.max(np.abs(cdf - uniform)))


def tonemap_mu(image: HdrImage, params: TonemapParams = TonemapParams()) -> HdrImage:
    """Logarithmic mu-law compression of a unit-range image."""
    if not image.unit_range:
        raise PreconditionError("mu-law tone mapping needs a unit-range image; normalize first")
    return HdrImage(mu_law(image.pixels, params.mu), unit_range=True)


def mu_law(values: np.ndarray, mu: float = MU_DEFAULT) -> np.ndarray:
    """Array form of the mu-law curve ``log(1 + mu v) / log(1 + mu)``."""
    v = np.asarray(values, dtype=np.float64)
    out = np.log1p(mu * v) / np.log1p(mu)
    # pin the endpoint exactly; log1p ratios can land one ulp above 1
    return np.clip(out, 0.0, 1.0)


def normalize_minmax(image: HdrImage) -> HdrImage:
    peak = float(image.pixels.max())
    if peak <= 0:
        raise DegenerateInputError("cannot normalize an all-zero image")
    return HdrImage(image.pixels.astype(np.float64) / peak, unit_range=True)


def tonemap_reinhard(image: HdrImage) -> LdrImage:
    """Global ``L / (1 + L)`` operator on BT.601 luminance, quantized to 8 bits.

    Chroma ratios are preserved by scaling each channel by ``L_d / L``.
    """
    rgb = image.pixels.astype(np.float64)
    lum = rgb @ _LUMA_WEIGHTS
    display = lum / (1.0 + lum)
    ratio = np.divide(display, lum, out=np.zeros_like(lum), where=lum > 0)
    out = rgb * ratio[..., None]
    q = _round_half_up(np.clip(out, 0.0, 1.0) * 255.0)
    return LdrImage(q.astype(np.uint8))


def export_histogram(hist: Histogram, sink=None) -> str:
    """Render a histogram as ``bin,channel,count`` CSV, bin-major."""
    buf = io.StringIO()
    buf.write("bin,channel,count\n")
    for b in range(256):
        for row, name in enumerate(hist.channels):
            buf.write(f"{b},{name},{int(hist.counts[row, b])}\n")
    text = buf.getvalue()
    if sink is not None:
        try:
            sink.write(text)
        except OSError as exc:
            raise ImageIOError(f"failed to write histogram: {exc}") from exc
    return text
