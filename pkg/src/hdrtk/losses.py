"""Reconstruction losses and image-quality metrics.

Every function takes *unit-range planes*: float arrays shaped ``(H, W)`` or
``(H, W, C)`` with values in [0, 1], normally mu-law tone-mapped HDR.  Where
a formula is written in intensity units the planes are scaled internally by
``L = 2**bit_depth - 1``.

Batches are lists of ``(X, Y)`` pairs, ``X`` the ground truth and ``Y`` the
reconstruction; every batch loss is the mean of a per-pair term.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

from . import _kernels
from .errors import DegenerateInputError, NumericError, PreconditionError, ShapeError, ValidationError


# ---------------------------------------------------------------------------
# parameter records
# ---------------------------------------------------------------------------


def _check_nonneg(name, value):
    if not (math.isfinite(value) and value >= 0):
        raise ValidationError(f"{name} must be finite and >= 0, got {value}")


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.18  # L1
    beta: float = 0.5  # perceptual
    delta: float = 0.82  # Weber
    gamma: float = 0.80  # MS-SSIM
    lambda_: float = 0.82  # colour

    def __post_init__(self):
        for name, value in self.to_dict().items():
            _check_nonneg(name, value)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "delta": self.delta,
            "gamma": self.gamma,
            "lambda": self.lambda_,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LossWeights":
        d = dict(d)
        if "lambda" in d:
            d["lambda_"] = d.pop("lambda")
        return cls(**d)

    def as_vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.delta, self.gamma, self.lambda_])


@dataclass(frozen=True)
class WeberParams:
    fraction: float = 0.02
    bit_depth: int = 8

    def __post_init__(self):
        if not (math.isfinite(self.fraction) and self.fraction > 0):
            raise ValidationError(f"Weber fraction must be > 0, got {self.fraction}")
        if int(self.bit_depth) < 1:
            raise ValidationError(f"bit_depth must be >= 1, got {self.bit_depth}")


@dataclass(frozen=True)
class SsimParams:
    k1: float = 0.01
    k2: float = 0.03
    bit_depth: int = 8
    scales: int = 3
    eta: float = 1.0
    tau: float | tuple = 1.0
    mode: str = "windowed"
    window_size: int = 11
    sigma: float = 1.5

    def __post_init__(self):
        if not (self.k1 > 0 and self.k2 > 0):
            raise ValidationError("K1 and K2 must be positive")
        if int(self.bit_depth) < 1:
            raise ValidationError(f"bit_depth must be >= 1, got {self.bit_depth}")
        if int(self.scales) < 1:
            raise ValidationError(f"scales must be >= 1, got {self.scales}")
        if self.mode not in ("global", "windowed"):
            raise ValidationError(f"SSIM mode must be 'global' or 'windowed', got {self.mode!r}")
        if self.window_size < 1 or self.sigma <= 0:
            raise ValidationError("window_size must be >= 1 and sigma > 0")
        if not isinstance(self.tau, (int, float)) and len(self.tau) != self.scales:
            raise ValidationError(f"tau needs one exponent per scale ({self.scales})")

    @property
    def peak(self) -> float:
        return float(2**self.bit_depth - 1)

    @property
    def c1(self) -> float:
        return (self.k1 * self.peak) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.peak) ** 2

    def tau_at(self, k: int) -> float:
        return float(self.tau) if isinstance(self.tau, (int, float)) else float(self.tau[k])

    def min_size(self) -> int:
        base = self.window_size if self.mode == "windowed" else 2
        return 2 ** (self.scales - 1) * base


def peak_value(bit_depth: int) -> float:
    return float(2**bit_depth - 1)


# ---------------------------------------------------------------------------
# planes and batches
# ---------------------------------------------------------------------------


def as_plane(a) -> np.ndarray:
    p = np.asarray(a, dtype=np.float64)
    if p.ndim == 2:
        p = p[:, :, None]
    if p.ndim != 3 or p.shape[0] < 1 or p.shape[1] < 1 or p.shape[2] < 1:
        raise ShapeError(f"plane must be (H, W) or (H, W, C), got shape {np.shape(a)}")
    return p


def _pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x, y = as_plane(x), as_plane(y)
    if x.shape != y.shape:
        raise ShapeError(f"plane shapes differ: {x.shape} vs {y.shape}")
    return x, y


@dataclass(frozen=True, eq=False)
class ImageBatch:
    """Ordered ``(ground truth, reconstruction)`` plane pairs."""

    pairs: tuple

    def __post_init__(self):
        pairs = tuple(_pair(x, y) for x, y in self.pairs)
        if not pairs:
            raise ShapeError("a batch needs at least one pair")
        object.__setattr__(self, "pairs", pairs)

    @property
    def n(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self):
        return len(self.pairs)


def as_batch(batch) -> ImageBatch:
    return batch if isinstance(batch, ImageBatch) else ImageBatch(tuple(batch))


def _batch_mean(terms: Iterable[float]) -> float:
    terms = list(terms)
    return math.fsum(terms) / len(terms)


def _per_channel(fn: Callable[[np.ndarray], np.ndarray], plane: np.ndarray) -> np.ndarray:
    return np.stack([fn(plane[:, :, c]) for c in range(plane.shape[2])], axis=2)


# ---------------------------------------------------------------------------
# L1, PSNR, colour
# ---------------------------------------------------------------------------


def loss_l1(batch) -> float:
    return _batch_mean(float(np.mean(np.abs(x - y))) for x, y in as_batch(batch))


def psnr(x, y, bit_depth: int = 8) -> float:
    """Plain PSNR in dB over all pixel-channel entries; ``inf`` for identical planes."""
    x, y = _pair(x, y)
    peak = peak_value(bit_depth)
    mse = float(np.mean((peak * x - peak * y) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak**2 / mse)


def _color_distance(x: np.ndarray, y: np.ndarray, bit_depth: int, per_pixel: bool) -> float:
    peak = peak_value(bit_depth)
    d = math.sqrt(float(np.sum((peak * x - peak * y) ** 2))) / peak
    if per_pixel:
        d /= math.sqrt(x.shape[0] * x.shape[1])
    return d


def loss_color(batch, bit_depth: int = 8, per_pixel: bool = False) -> float:
    """Euclidean colour distance summed over the whole image, over the peak value.

    The literal form grows with the square root of the pixel count;
    ``per_pixel=True`` divides by ``sqrt(H * W)`` to make it size-independent.
    """
    return _batch_mean(_color_distance(x, y, bit_depth, per_pixel) for x, y in as_batch(batch))


def color_distance(x, y, bit_depth: int = 8, per_pixel: bool = False) -> float:
    x, y = _pair(x, y)
    return _color_distance(x, y, bit_depth, per_pixel)


# ---------------------------------------------------------------------------
# Weber-weighted PSNR
# ---------------------------------------------------------------------------


def psnr_weber(x, y, params: WeberParams = WeberParams()) -> float:
    """PSNR whose squared error is weighted by ``fraction * (2**bit_depth - X)``.

    The weight depends on the ground truth only, so the metric is not
    symmetric.  Returns ``inf`` when the weighted error is zero.
    """
    x, y = _pair(x, y)
    peak = peak_value(params.bit_depth)
    xi, yi = peak * x, peak * y
    w = params.fraction * (2.0**params.bit_depth - xi)
    wmse = float(np.mean(w**2 * (xi - yi) ** 2))
    if wmse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak**2 / wmse)


def loss_weber(batch, params: WeberParams = WeberParams()) -> float:
    terms = []
    for t, (x, y) in enumerate(as_batch(batch)):
        p = psnr_weber(x, y, params)
        if p <= 0:
            raise NumericError(f"Weber PSNR of pair {t} is {p:.4f} dB; its reciprocal is not a valid loss term")
        terms.append(0.0 if math.isinf(p) else 1.0 / p)
    return _batch_mean(terms)


# ---------------------------------------------------------------------------
# SSIM / MS-SSIM
# ---------------------------------------------------------------------------


def gaussian_taps(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2.0 * sigma**2))
    return g / g.sum()


def _global_lcs(x: np.ndarray, y: np.ndarray, c1: float, c2: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel (l, cs) from whole-plane population statistics."""
    axes = (0, 1)
    mx, my = x.mean(axis=axes), y.mean(axis=axes)
    dx, dy = x - mx, y - my
    vx, vy = (dx**2).mean(axis=axes), (dy**2).mean(axis=axes)
    cxy = (dx * dy).mean(axis=axes)
    lum = (2 * mx * my + c1) / (mx**2 + my**2 + c1)
    cs = (2 * cxy + c2) / (vx + vy + c2)
    return lum, cs


def _windowed_maps(x: np.ndarray, y: np.ndarray, c1: float, c2: float, taps: np.ndarray):
    """Per-channel local (l, cs) maps over Gaussian windows, valid region only."""
    filt = _kernels.gaussian_valid
    lum_maps, cs_maps = [], []
    for c in range(x.shape[2]):
        a = np.ascontiguousarray(x[:, :, c])
        b = np.ascontiguousarray(y[:, :, c])
        ma, mb = filt(a, taps), filt(b, taps)
        va = filt(a * a, taps) - ma * ma
        vb = filt(b * b, taps) - mb * mb
        cab = filt(a * b, taps) - ma * mb
        lum_maps.append((2 * ma * mb + c1) / (ma * ma + mb * mb + c1))
        cs_maps.append((2 * cab + c2) / (va + vb + c2))
    return lum_maps, cs_maps


def _check_windowed(x: np.ndarray, params: SsimParams) -> None:
    if min(x.shape[0], x.shape[1]) < params.window_size:
        raise PreconditionError(
            f"windowed SSIM needs planes of at least {params.window_size}x{params.window_size}, got {x.shape[:2]}"
        )


def _components(x: np.ndarray, y: np.ndarray, params: SsimParams) -> tuple[float, float]:
    peak = params.peak
    xi, yi = peak * x, peak * y
    if params.mode == "global":
        lum, cs = _global_lcs(xi, yi, params.c1, params.c2)
        return float(np.mean(lum)), float(np.mean(cs))
    _check_windowed(x, params)
    lum_maps, cs_maps = _windowed_maps(xi, yi, params.c1, params.c2, gaussian_taps(params.window_size, params.sigma))
    return (
        float(np.mean([m.mean() for m in lum_maps])),
        float(np.mean([m.mean() for m in cs_maps])),
    )


def ssim_components(x, y, params: SsimParams = SsimParams()) -> tuple[float, float]:
    """Luminance term ``l`` and contrast-structure term ``cs``, channel-averaged.

    Global mode uses whole-plane statistics; windowed mode averages the
    local terms over 11x11 Gaussian windows.
    """
    x, y = _pair(x, y)
    return _components(x, y, params)


def ssim(x, y, params: SsimParams = SsimParams()) -> float:
    """Single-scale SSIM.

    Windowed mode returns the window-mean of ``l * cs`` (the usual SSIM
    index); global mode returns the product of the channel-averaged terms.
    """
    x, y = _pair(x, y)
    if params.mode == "global":
        lum, cs = _components(x, y, params)
        return lum * cs
    _check_windowed(x, params)
    peak = params.peak
    lum_maps, cs_maps = _windowed_maps(
        peak * x, peak * y, params.c1, params.c2, gaussian_taps(params.window_size, params.sigma)
    )
    return float(np.mean([(lm * cm).mean() for lm, cm in zip(lum_maps, cs_maps)]))


def downsample2(plane: np.ndarray) -> np.ndarray:
    """2x2 average pooling with stride 2; a trailing odd row or column is dropped."""
    return _per_channel(_kernels.avg_pool2, as_plane(plane))


def ms_ssim(x, y, params: SsimParams = SsimParams()) -> float:
    """Multi-scale SSIM: ``l_M**eta * prod_k cs_k**tau_k`` over ``params.scales`` scales.

    No clamping is applied, so strongly anti-correlated inputs can yield a
    non-positive value.
    """
    x, y = _pair(x, y)
    need = params.min_size()
    if min(x.shape[0], x.shape[1]) < need:
        raise PreconditionError(
            f"{params.scales}-scale {params.mode} MS-SSIM needs planes of at least {need}x{need}, got {x.shape[:2]}"
        )
    result = 1.0
    for k in range(params.scales):
        lum, cs = _components(x, y, params)
        result *= cs ** params.tau_at(k)
        if k < params.scales - 1:
            x, y = downsample2(x), downsample2(y)
    result *= lum**params.eta
    if not math.isfinite(result):
        raise NumericError(f"MS-SSIM evaluated to {result}")
    return float(result)


def loss_msssim(batch, params: SsimParams = SsimParams()) -> float:
    return _batch_mean(1.0 - ms_ssim(x, y, params) for x, y in as_batch(batch))


# ---------------------------------------------------------------------------
# perceptual loss
# ---------------------------------------------------------------------------


class FeatureExtractor(Protocol):
    def extract(self, plane: np.ndarray) -> list[np.ndarray]: ...


class IdentityExtractor:
    """The plane itself as the only feature level."""

    name = "identity"

    def extract(self, plane):
        return [as_plane(plane)]


class PyramidExtractor:
    """Levels ``0..levels-1`` of a 2x average-pool pyramid.

    Levels that would have zero height or width are omitted.
    """

    name = "pyramid"

    def __init__(self, levels: int = 4):
        if levels < 1:
            raise ValidationError("pyramid needs at least one level")
        self.levels = levels

    def extract(self, plane):
        level = as_plane(plane)
        out = [level]
        for _ in range(self.levels - 1):
            if min(level.shape[0], level.shape[1]) < 2:
                break
            level = downsample2(level)
            out.append(level)
        return out


EXTRACTORS = {"identity": IdentityExtractor, "pyramid": PyramidExtractor}


def make_extractor(name: str) -> FeatureExtractor:
    try:
        return EXTRACTORS[name]()
    except KeyError:
        raise ValidationError(f"unknown feature extractor {name!r}; choose from {sorted(EXTRACTORS)}") from None


def perceptual_distance(x, y, extractor: FeatureExtractor) -> float:
    fx, fy = extractor.extract(x), extractor.extract(y)
    if len(fx) != len(fy):
        raise ShapeError("extractor returned different level counts for the two inputs")
    level_terms = []
    for a, b in zip(fx, fy):
        if a.shape != b.shape:
            raise ShapeError(f"feature level shapes differ: {a.shape} vs {b.shape}")
        level_terms.append(float(np.mean((a - b) ** 2)))
    return _batch_mean(level_terms)


def loss_perceptual(batch, extractor: FeatureExtractor | None = None) -> float:
    extractor = extractor or PyramidExtractor()
    return _batch_mean(perceptual_distance(x, y, extractor) for x, y in as_batch(batch))


# ---------------------------------------------------------------------------
# composite objective
# ---------------------------------------------------------------------------

COMPONENTS = ("l1", "perceptual", "weber", "msssim", "color")


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    l1: float
    perceptual: float
    weber: float
    msssim: float
    color: float
    weights: LossWeights

    def components(self) -> np.ndarray:
        return np.array([getattr(self, c) for c in COMPONENTS])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weights"] = self.weights.to_dict()
        return d

    def check_total(self, tol: float = 1e-12) -> bool:
        recomputed = float(np.dot(self.weights.as_vector(), self.components()))
        return abs(recomputed - self.total) <= tol * max(1.0, abs(self.total))


def composite_loss(
    batch,
    weights: LossWeights = LossWeights(),
    extractor: FeatureExtractor | None = None,
    weber: WeberParams = WeberParams(),
    ssim_params: SsimParams = SsimParams(),
    color_per_pixel: bool = False,
) -> LossBreakdown:
    batch = as_batch(batch)
    parts = {
        "l1": loss_l1(batch),
        "perceptual": loss_perceptual(batch, extractor),
        "weber": loss_weber(batch, weber),
        "msssim": loss_msssim(batch, ssim_params),
        "color": loss_color(batch, weber.bit_depth, color_per_pixel),
    }
    vec = np.array([parts[c] for c in COMPONENTS])
    total = float(np.dot(weights.as_vector(), vec))
    return LossBreakdown(total=total, weights=weights, **parts)


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------


def grad_fd(loss: Callable[[ImageBatch], float], batch, epsilon: float = 1e-3) -> list[np.ndarray]:
    """Finite-difference gradient of ``loss`` with respect to every reconstruction entry.

    Central differences in the interior; near 0 or 1 the perturbed value is
    clamped to [0, 1], giving a one-sided difference there.
    """
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise ValidationError(f"epsilon must be positive, got {epsilon}")
    batch = as_batch(batch)
    base = loss(batch)
    if not math.isfinite(base):
        raise NumericError(f"loss is not finite at the batch ({base})")
    pairs = [(x, y.copy()) for x, y in batch]
    grads = []
    for t, (x, work) in enumerate(pairs):
        g = np.empty_like(work)
        flat_w, flat_g = work.reshape(-1), g.reshape(-1)
        for e in range(flat_w.size):
            v = flat_w[e]
            hi, lo = min(v + epsilon, 1.0), max(v - epsilon, 0.0)
            flat_w[e] = hi
            f_hi = loss(ImageBatch(tuple(pairs)))
            flat_w[e] = lo
            f_lo = loss(ImageBatch(tuple(pairs)))
            flat_w[e] = v
            if not (math.isfinite(f_hi) and math.isfinite(f_lo)):
                raise NumericError(f"non-finite loss when perturbing entry {e} of pair {t}")
            flat_g[e] = (f_hi - f_lo) / (hi - lo)
        grads.append(g)
    return grads


def grad_color_analytic(batch, bit_depth: int = 8, per_pixel: bool = False) -> list[np.ndarray]:
    """Closed-form gradient of :func:`loss_color` with respect to each reconstruction."""
    batch = as_batch(batch)
    grads = []
    for t, (x, y) in enumerate(batch):
        diff = y - x
        dist = math.sqrt(float(np.sum(diff**2)))
        if dist == 0.0:
            raise DegenerateInputError(f"pair {t} has zero colour distance; gradient undefined")
        g = diff / (batch.n * dist)
        if per_pixel:
            g /= math.sqrt(x.shape[0] * x.shape[1])
        grads.append(g)
    return grads


def grad_l1_analytic(batch) -> list[np.ndarray]:
    """Subgradient of :func:`loss_l1`; zero at the kink."""
    batch = as_batch(batch)
    return [np.sign(y - x) / (batch.n * x.size) for x, y in batch]


def relative_error(approx: Sequence[np.ndarray], exact: Sequence[np.ndarray]) -> float:
    """``max |approx - exact| / max |exact|`` across all pairs."""
    num = max(float(np.max(np.abs(a - b))) for a, b in zip(approx, exact))
    den = max(float(np.max(np.abs(b))) for b in exact)
    return num / den if den > 0 else num
