"""Raster types, histograms and bit-exact PPM (P6) / PFM (PF) I/O."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from . import _kernels
from .errors import (
    ImageFormatError,
    ImageIOError,
    TruncatedDataError,
    UnsupportedFormatError,
    ValidationError,
)

ByteSource = Union[bytes, bytearray, memoryview, BinaryIO]

CHANNEL_NAMES = ("R", "G", "B")
LUMA_NAME = "Y"


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True, order="C")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class LdrImage:
    """8-bit RGB raster stored as a read-only ``(height, width, 3)`` uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValidationError(f"LDR pixels must have shape (H, W, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValidationError("LDR image must be at least 1x1")
        if px.dtype != np.uint8:
            if not np.issubdtype(px.dtype, np.integer):
                raise ValidationError(f"LDR pixels must be integers, got {px.dtype}")
            if px.min() < 0 or px.max() > 255:
                raise ValidationError("LDR intensities must lie in [0, 255]")
            px = px.astype(np.uint8)
        object.__setattr__(self, "pixels", _frozen(px))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def __eq__(self, other):
        if not isinstance(other, LdrImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class HdrImage:
    """Linear RGB raster of finite nonnegative floats, shape ``(height, width, 3)``.

    ``unit_range`` marks images whose values are known to lie in [0, 1]
    (normalized or tone-mapped).  The flag is checked, not trusted.
    """

    pixels: np.ndarray
    unit_range: bool = False

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValidationError(f"HDR pixels must have shape (H, W, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValidationError("HDR image must be at least 1x1")
        if not np.issubdtype(px.dtype, np.floating):
            px = px.astype(np.float64)
        if not np.all(np.isfinite(px)):
            raise ValidationError("HDR values must be finite")
        if np.any(px < 0):
            raise ValidationError("HDR values must be nonnegative")
        if self.unit_range and np.any(px > 1):
            raise ValidationError("unit-range HDR image has values above 1")
        object.__setattr__(self, "pixels", _frozen(px))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def __eq__(self, other):
        if not isinstance(other, HdrImage):
            return NotImplemented
        return (
            self.pixels.shape == other.pixels.shape
            and self.unit_range == other.unit_range
            and bool(np.array_equal(self.pixels, other.pixels))
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Histogram:
    """256-bin intensity counts.

    ``counts`` has one row per populated channel: three rows (R, G, B) in
    per-channel mode, a single luma row in luma mode.
    """

    counts: np.ndarray
    mode: str = "per-channel"
    channels: tuple = field(init=False)

    def __post_init__(self):
        if self.mode not in ("per-channel", "luma"):
            raise ValidationError(f"unknown histogram mode {self.mode!r}")
        c = np.asarray(self.counts, dtype=np.int64)
        expected = 3 if self.mode == "per-channel" else 1
        if c.shape != (expected, 256):
            raise ValidationError(f"{self.mode} histogram needs shape ({expected}, 256), got {c.shape}")
        if np.any(c < 0):
            raise ValidationError("histogram counts must be nonnegative")
        totals = c.sum(axis=1)
        if np.any(totals != totals[0]):
            raise ValidationError("histogram channels disagree on pixel count")
        object.__setattr__(self, "counts", _frozen(c))
        object.__setattr__(self, "channels", CHANNEL_NAMES if expected == 3 else (LUMA_NAME,))

    @property
    def total(self) -> int:
        return int(self.counts[0].sum())


def luma_u8(pixels: np.ndarray) -> np.ndarray:
    """BT.601 luma rounded half-up, computed exactly in integers."""
    p = pixels.astype(np.int64)
    y = (299 * p[..., 0] + 587 * p[..., 1] + 114 * p[..., 2] + 500) // 1000
    return y.astype(np.uint8)


def compute_histogram(image: LdrImage, mode: str = "per-channel") -> Histogram:
    if mode == "luma":
        counts = _kernels.histogram256(luma_u8(image.pixels))[None, :]
    elif mode == "per-channel":
        counts = np.stack([_kernels.histogram256(image.pixels[..., c]) for c in range(3)])
    else:
        raise ValidationError(f"unknown histogram mode {mode!r}")
    return Histogram(counts, mode)


# ---------------------------------------------------------------------------
# header parsing
# ---------------------------------------------------------------------------

_WHITESPACE = b" \t\r\n\v\f"


def _read_all(source: ByteSource) -> bytes:
    if isinstance(source, (bytes, bytearray, memoryview)):
        return bytes(source)
    try:
        return source.read()
    except OSError as exc:
        raise ImageIOError(f"failed to read image stream: {exc}") from exc


def _header_tokens(data: bytes, count: int, start: int, comments: bool) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated tokens; return them and the payload offset.

    The payload begins after exactly one whitespace byte following the last
    token, per the netpbm convention.
    """
    tokens = []
    pos = start
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos] in _WHITESPACE:
            pos += 1
        if pos < n and comments and data[pos] == ord("#"):
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
            continue
        if pos >= n:
            raise ImageFormatError("unexpected end of header")
        begin = pos
        while pos < n and data[pos] not in _WHITESPACE:
            pos += 1
        tokens.append(data[begin:pos])
    if pos >= n:
        raise TruncatedDataError("header not terminated before end of stream")
    return tokens, pos + 1


def _positive_int(token: bytes, what: str) -> int:
    try:
        value = int(token.decode("ascii"))
    except (UnicodeDecodeError, ValueError):
        raise ImageFormatError(f"invalid {what}: {token!r}") from None
    if value < 1:
        raise ImageFormatError(f"{what} must be positive, got {value}")
    return value


def _emit(payload: bytes, sink: BinaryIO | None) -> bytes:
    if sink is not None:
        try:
            sink.write(payload)
        except OSError as exc:
            raise ImageIOError(f"failed to write image stream: {exc}") from exc
    return payload


# ---------------------------------------------------------------------------
# PPM (P6, maxval 255)
# ---------------------------------------------------------------------------


def read_ppm(source: ByteSource) -> LdrImage:
    data = _read_all(source)
    if data[:2] != b"P6":
        raise ImageFormatError(f"not a binary PPM: magic {data[:2]!r}")
    if len(data) < 3 or data[2] not in _WHITESPACE:
        raise ImageFormatError("malformed PPM magic")
    (w_tok, h_tok, max_tok), offset = _header_tokens(data, 3, 2, comments=True)
    width = _positive_int(w_tok, "width")
    height = _positive_int(h_tok, "height")
    maxval = _positive_int(max_tok, "maxval")
    if maxval != 255:
        raise UnsupportedFormatError(f"only maxval 255 is supported, got {maxval}")
    size = width * height * 3
    payload = data[offset : offset + size]
    if len(payload) < size:
        raise TruncatedDataError(f"PPM payload has {len(payload)} bytes, expected {size}")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return LdrImage(pixels)


def write_ppm(image: LdrImage, sink: BinaryIO | None = None) -> bytes:
    header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
    return _emit(header + image.pixels.tobytes(), sink)


# ---------------------------------------------------------------------------
# PFM (color "PF")
# ---------------------------------------------------------------------------


def decode_pfm_array(source: ByteSource) -> np.ndarray:
    """Decode a colour PFM into a top-to-bottom float32 ``(H, W, 3)`` array.

    No finiteness or sign checks; :func:`read_pfm` applies those.
    """
    data = _read_all(source)
    magic = data[:2]
    if magic == b"Pf":
        raise UnsupportedFormatError("grayscale PFM ('Pf') is not supported")
    if magic != b"PF":
        raise ImageFormatError(f"not a colour PFM: magic {magic!r}")
    if len(data) < 3 or data[2] not in _WHITESPACE:
        raise ImageFormatError("malformed PFM magic")
    (w_tok, h_tok, s_tok), offset = _header_tokens(data, 3, 2, comments=False)
    width = _positive_int(w_tok, "width")
    height = _positive_int(h_tok, "height")
    try:
        scale = float(s_tok.decode("ascii"))
    except (UnicodeDecodeError, ValueError):
        raise ImageFormatError(f"invalid PFM scale: {s_tok!r}") from None
    if scale == 0.0 or not np.isfinite(scale):
        raise ImageFormatError(f"PFM scale must be finite and nonzero, got {scale}")
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    size = width * height * 3 * 4
    payload = data[offset : offset + size]
    if len(payload) < size:
        raise TruncatedDataError(f"PFM payload has {len(payload)} bytes, expected {size}")
    arr = np.frombuffer(payload, dtype=dtype).reshape(height, width, 3)
    return arr[::-1].astype(np.float32)


def encode_pfm_array(array: np.ndarray, sink: BinaryIO | None = None) -> bytes:
    """Encode any finite ``(H, W, 3)`` array as little-endian colour PFM."""
    arr = np.asarray(array)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValidationError(f"PFM payload must have shape (H, W, 3), got {arr.shape}")
    with np.errstate(over="ignore"):
        f32 = arr.astype("<f4")
    if not np.all(np.isfinite(f32)):
        raise ValidationError("value not representable as a finite float32")
    header = f"PF\n{arr.shape[1]} {arr.shape[0]}\n-1.0\n".encode("ascii")
    return _emit(header + np.ascontiguousarray(f32[::-1]).tobytes(), sink)


def read_pfm(source: ByteSource) -> HdrImage:
    arr = decode_pfm_array(source)
    if not np.all(np.isfinite(arr)):
        raise ValidationError("PFM payload contains non-finite values")
    if np.any(arr < 0):
        raise ValidationError("PFM payload contains negative values")
    return HdrImage(arr)


def write_pfm(image: HdrImage, sink: BinaryIO | None = None) -> bytes:
    return encode_pfm_array(image.pixels, sink)


# ---------------------------------------------------------------------------
# path helpers
# ---------------------------------------------------------------------------


def _read_path(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise ImageIOError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _write_path(path, payload: bytes) -> None:
    try:
        Path(path).write_bytes(payload)
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc.strerror or exc}") from exc


def load_ppm(path) -> LdrImage:
    return read_ppm(_read_path(path))


def save_ppm(image: LdrImage, path) -> None:
    _write_path(path, write_ppm(image))


def load_pfm(path) -> HdrImage:
    return read_pfm(_read_path(path))


def save_pfm(image: HdrImage, path) -> None:
    _write_path(path, write_pfm(image))


__all__ = [
    "LdrImage",
    "HdrImage",
    "Histogram",
    "compute_histogram",
    "luma_u8",
    "read_ppm",
    "write_ppm",
    "read_pfm",
    "write_pfm",
    "decode_pfm_array",
    "encode_pfm_array",
    "load_ppm",
    "save_ppm",
    "load_pfm",
    "save_pfm",
]
