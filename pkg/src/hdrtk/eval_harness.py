"""Pairwise and directory-level evaluation of reconstructed HDR images.

PSNR, Weber-PSNR, colour distance and the composite loss are measured on
mu-law tone-mapped planes; SSIM and MS-SSIM on linear planes.  Both images
of a pair are divided by one shared peak so relative brightness survives.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateInputError,
    EmptyDatasetError,
    HdrToolkitError,
    ImageIOError,
    PairingError,
    ValidationError,
)
from .image_core import HdrImage, load_pfm
from .losses import (
    ImageBatch,
    LossWeights,
    SsimParams,
    WeberParams,
    color_distance,
    composite_loss,
    make_extractor,
    ms_ssim,
    psnr,
    psnr_weber,
    ssim,
)
from .preprocess import TonemapParams, mu_law

log = logging.getLogger(__name__)

METRICS = ("psnr_db", "ssim", "ms_ssim", "weber_psnr_db", "color", "composite")


@dataclass(frozen=True)
class EvalConfig:
    tonemap: TonemapParams = TonemapParams()
    ssim: SsimParams = SsimParams()
    weber: WeberParams = WeberParams()
    weights: LossWeights = LossWeights()
    extractor: str = "pyramid"

    def __post_init__(self):
        make_extractor(self.extractor)

    def to_dict(self) -> dict:
        ssim_d = {f.name: getattr(self.ssim, f.name) for f in fields(self.ssim)}
        return {
            "tonemap": {"mu": self.tonemap.mu},
            "ssim": ssim_d,
            "weber": {"fraction": self.weber.fraction, "bit_depth": self.weber.bit_depth},
            "weights": self.weights.to_dict(),
            "extractor": self.extractor,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalConfig":
        """Build a config from nested dicts; unknown keys raise :class:`ValidationError`."""
        allowed = {"tonemap", "ssim", "weber", "weights", "extractor"}
        unknown = set(d) - allowed
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        try:
            kwargs = {}
            if "tonemap" in d:
                kwargs["tonemap"] = TonemapParams(**d["tonemap"])
            if "ssim" in d:
                s = dict(d["ssim"])
                if isinstance(s.get("tau"), list):
                    s["tau"] = tuple(s["tau"])
                kwargs["ssim"] = SsimParams(**s)
            if "weber" in d:
                kwargs["weber"] = WeberParams(**d["weber"])
            if "weights" in d:
                kwargs["weights"] = LossWeights.from_dict(d["weights"])
            if "extractor" in d:
                kwargs["extractor"] = d["extractor"]
        except TypeError as exc:
            raise ValidationError(f"invalid config: {exc}") from None
        return cls(**kwargs)


@dataclass(frozen=True)
class EvalRecord:
    pair: str
    psnr_db: float
    ssim: float
    ms_ssim: float
    weber_psnr_db: float
    color: float
    composite: float

    def metric(self, name: str) -> float:
        return getattr(self, name)


@dataclass(frozen=True)
class Aggregate:
    mean: float
    std: float
    count: int
    excluded: int


@dataclass
class EvalReport:
    records: list
    aggregates: dict = field(default_factory=dict)
    unmatched: list = field(default_factory=list)

    @classmethod
    def from_records(cls, records, unmatched=()) -> "EvalReport":
        records = sorted(records, key=lambda r: r.pair)
        return cls(records, aggregate(records), list(unmatched))


def aggregate(records) -> dict:
    """Mean and sample standard deviation per metric, infinite values excluded.

    A single finite value has std 0.  If every value of a metric is infinite
    the mean is reported as ``inf`` (all pairs exact) and std as 0.
    """
    out = {}
    for name in METRICS:
        values = [r.metric(name) for r in records]
        finite = [v for v in values if math.isfinite(v)]
        excluded = len(values) - len(finite)
        if not finite:
            out[name] = Aggregate(math.inf, 0.0, 0, excluded)
            continue
        mean = math.fsum(finite) / len(finite)
        std = float(np.std(finite, ddof=1)) if len(finite) > 1 else 0.0
        out[name] = Aggregate(mean, std, len(finite), excluded)
    return out


@dataclass(frozen=True)
class PreparedPair:
    """The planes every metric of a pair is computed from."""

    linear_gt: np.ndarray
    linear_rec: np.ndarray
    tonemapped_gt: np.ndarray
    tonemapped_rec: np.ndarray


def prepare_pair(gt: HdrImage, rec: HdrImage, tonemap: TonemapParams = TonemapParams()) -> PreparedPair:
    if gt.pixels.shape != rec.pixels.shape:
        raise PairingError(f"cannot pair images of shape {gt.pixels.shape} and {rec.pixels.shape}")
    scale = max(float(gt.pixels.max()), float(rec.pixels.max()))
    if scale <= 0:
        raise DegenerateInputError("both images are all zero; no shared normalization exists")
    lin_gt = gt.pixels.astype(np.float64) / scale
    lin_rec = rec.pixels.astype(np.float64) / scale
    return PreparedPair(lin_gt, lin_rec, mu_law(lin_gt, tonemap.mu), mu_law(lin_rec, tonemap.mu))


def evaluate_pair(gt: HdrImage, rec: HdrImage, cfg: EvalConfig = EvalConfig(), name: str = "") -> EvalRecord:
    p = prepare_pair(gt, rec, cfg.tonemap)
    bit_depth = cfg.weber.bit_depth
    breakdown = composite_loss(
        ImageBatch(((p.tonemapped_gt, p.tonemapped_rec),)),
        cfg.weights,
        make_extractor(cfg.extractor),
        cfg.weber,
        cfg.ssim,
    )
    return EvalRecord(
        pair=name,
        psnr_db=psnr(p.tonemapped_gt, p.tonemapped_rec, bit_depth),
        ssim=ssim(p.linear_gt, p.linear_rec, cfg.ssim),
        ms_ssim=ms_ssim(p.linear_gt, p.linear_rec, cfg.ssim),
        weber_psnr_db=psnr_weber(p.tonemapped_gt, p.tonemapped_rec, cfg.weber),
        color=color_distance(p.tonemapped_gt, p.tonemapped_rec, bit_depth),
        composite=breakdown.total,
    )


def match_pairs(gt_dir, rec_dir) -> tuple[list[str], list[str]]:
    """Filenames present in both directories, and those present in only one."""
    gt_dir, rec_dir = Path(gt_dir), Path(rec_dir)
    for d in (gt_dir, rec_dir):
        if not d.is_dir():
            raise ImageIOError(f"not a directory: {d}")
    gt_names = {p.name for p in gt_dir.glob("*.pfm") if p.is_file()}
    rec_names = {p.name for p in rec_dir.glob("*.pfm") if p.is_file()}
    return sorted(gt_names & rec_names), sorted(gt_names ^ rec_names)


def evaluate_dataset(gt_dir, rec_dir, cfg: EvalConfig = EvalConfig(), workers: int = 1) -> EvalReport:
    matched, unmatched = match_pairs(gt_dir, rec_dir)
    for name in unmatched:
        log.warning("no counterpart for %s; skipped", name)
    if not matched:
        raise EmptyDatasetError(f"no matching .pfm names between {gt_dir} and {rec_dir}")

    def load(path: Path) -> HdrImage:
        try:
            return load_pfm(path)
        except ImageIOError:
            raise
        except HdrToolkitError as exc:
            raise type(exc)(f"{path}: {exc}") from exc

    def run(name):
        return evaluate_pair(load(Path(gt_dir) / name), load(Path(rec_dir) / name), cfg, name)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run, matched))
    else:
        records = [run(name) for name in matched]
    return EvalReport.from_records(records, unmatched)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

CSV_HEADER = ("pair",) + METRICS


def _fmt(v: float) -> str:
    return repr(float(v))


def _json_num(v: float):
    return float(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")


def write_report(report: EvalReport, fmt: str = "csv", sink=None) -> bytes:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in report.records:
            w.writerow([r.pair] + [_fmt(r.metric(m)) for m in METRICS])
        w.writerow(["__mean__"] + [_fmt(report.aggregates[m].mean) for m in METRICS])
        w.writerow(["__std__"] + [_fmt(report.aggregates[m].std) for m in METRICS])
        payload = buf.getvalue().encode("utf-8")
    elif fmt == "json":
        doc = {
            "records": [{"pair": r.pair, **{m: _json_num(r.metric(m)) for m in METRICS}} for r in report.records],
            "aggregates": {
                m: {
                    "mean": _json_num(a.mean),
                    "std": _json_num(a.std),
                    "count": a.count,
                    "excluded": a.excluded,
                }
                for m, a in report.aggregates.items()
            },
            "unmatched": list(report.unmatched),
        }
        payload = (json.dumps(doc, indent=2, sort_keys=False) + "\n").encode("utf-8")
    else:
        raise ValidationError(f"unknown report format {fmt!r}")
    if sink is not None:
        try:
            sink.write(payload)
        except OSError as exc:
            raise ImageIOError(f"failed to write report: {exc}") from exc
    return payload


def read_report_json(payload: bytes | str) -> EvalReport:
    doc = json.loads(payload)
    records = [
        EvalRecord(pair=r["pair"], **{m: float(r[m]) for m in METRICS}) for r in doc["records"]
    ]
    aggregates = {
        m: Aggregate(float(a["mean"]), float(a["std"]), a["count"], a["excluded"])
        for m, a in doc["aggregates"].items()
    }
    return EvalReport(records, aggregates, list(doc.get("unmatched", [])))
