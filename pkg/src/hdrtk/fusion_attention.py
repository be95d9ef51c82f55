"""Feature maps, the two fusion operators, and a self-attention forward pass."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ShapeError, ValidationError
from .image_core import LdrImage

DEFAULT_REDUCTION = 8


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True, order="C")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Channel-major ``(channels, height, width)`` float64 tensor."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 3:
            raise ShapeError(f"feature map must be 3-D (C, H, W), got shape {v.shape}")
        if v.shape[1] < 1 or v.shape[2] < 1:
            raise ShapeError("feature map needs nonzero spatial size")
        if not np.all(np.isfinite(v)):
            raise ValidationError("feature map values must be finite")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    def __eq__(self, other):
        if not isinstance(other, FeatureMap):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.values, other.values))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class AttentionParams:
    """Bias-free 1x1 projection weights plus the residual scale ``gamma``.

    ``query`` and ``key`` are ``(C', C)``, ``value`` is ``(C, C)`` with
    ``C' = max(1, C // reduction)``.
    """

    query: np.ndarray
    key: np.ndarray
    value: np.ndarray
    gamma: float = 0.0
    reduction: int = DEFAULT_REDUCTION

    def __post_init__(self):
        if int(self.reduction) < 1:
            raise ValidationError("reduction must be >= 1")
        q, k, v = (np.asarray(m, dtype=np.float64) for m in (self.query, self.key, self.value))
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] < 1:
            raise ShapeError(f"value projection must be square (C, C), got {v.shape}")
        c = v.shape[0]
        reduced = reduced_channels(c, self.reduction)
        for name, m in (("query", q), ("key", k)):
            if m.shape != (reduced, c):
                raise ShapeError(f"{name} projection must be ({reduced}, {c}), got {m.shape}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(k)) and np.all(np.isfinite(v))):
            raise ValidationError("attention weights must be finite")
        if not np.isfinite(self.gamma):
            raise ValidationError("gamma must be finite")
        object.__setattr__(self, "query", _frozen(q))
        object.__setattr__(self, "key", _frozen(k))
        object.__setattr__(self, "value", _frozen(v))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "reduction", int(self.reduction))

    @property
    def channels(self) -> int:
        return self.value.shape[0]

    def with_gamma(self, gamma: float) -> "AttentionParams":
        return AttentionParams(self.query, self.key, self.value, gamma, self.reduction)


def reduced_channels(channels: int, reduction: int) -> int:
    return max(1, channels // reduction)


def image_to_features(image: LdrImage) -> FeatureMap:
    """Scale an 8-bit image to [0, 1] and lay it out channel-major."""
    return FeatureMap(np.transpose(image.pixels, (2, 0, 1)).astype(np.float64) / 255.0)


def fuse_concat(a: FeatureMap, b: FeatureMap) -> FeatureMap:
    if (a.height, a.width) != (b.height, b.width):
        raise ShapeError(f"cannot concatenate {a.shape} with {b.shape}: spatial sizes differ")
    return FeatureMap(np.concatenate([a.values, b.values], axis=0))


def fuse_add(a: FeatureMap, b: FeatureMap) -> FeatureMap:
    if a.shape != b.shape:
        raise ShapeError(f"cannot add {a.shape} and {b.shape}")
    return FeatureMap(a.values + b.values)


def init_attention_params(seed: int, channels: int, reduction: int = DEFAULT_REDUCTION) -> AttentionParams:
    """Seeded uniform(-0.1, 0.1) projections, drawn query, key, value in that order; gamma = 0."""
    if channels < 1 or reduction < 1:
        raise ValidationError("channels and reduction must be >= 1")
    rng = np.random.default_rng(seed)
    reduced = reduced_channels(channels, reduction)
    q = rng.uniform(-0.1, 0.1, size=(reduced, channels))
    k = rng.uniform(-0.1, 0.1, size=(reduced, channels))
    v = rng.uniform(-0.1, 0.1, size=(channels, channels))
    return AttentionParams(q, k, v, 0.0, reduction)


def _column_softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)


def attention_map(x: FeatureMap, params: AttentionParams) -> np.ndarray:
    """The ``N x N`` weight matrix; column ``j`` mixes every position into position ``j``."""
    if x.channels != params.channels:
        raise ShapeError(f"attention expects {params.channels} channels, got {x.channels}")
    flat = x.values.reshape(x.channels, -1)
    f = params.query @ flat
    g = params.key @ flat
    beta = _column_softmax(f.T @ g)
    if not np.all(np.isfinite(beta)):
        raise NumericError("non-finite attention weights")
    return beta


def self_attention(x: FeatureMap, params: AttentionParams) -> FeatureMap:
    """``gamma * (V X) beta + X``, reshaped back to ``x.shape``."""
    beta = attention_map(x, params)
    flat = x.values.reshape(x.channels, -1)
    out = params.gamma * ((params.value @ flat) @ beta) + flat
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite attention output")
    return FeatureMap(out.reshape(x.shape))
