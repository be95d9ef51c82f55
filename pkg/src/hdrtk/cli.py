"""Batch command-line front end.

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 validation or
degenerate-input error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import HdrToolkitError, ImageIOError, PreconditionError, ValidationError
from .eval_harness import EvalConfig, evaluate_dataset, prepare_pair, write_report
from .fusion_attention import (
    DEFAULT_REDUCTION,
    fuse_add,
    fuse_concat,
    image_to_features,
    init_attention_params,
    self_attention,
)
from .image_core import compute_histogram, encode_pfm_array, load_pfm, load_ppm, save_pfm, save_ppm
from .losses import (
    ImageBatch,
    LossWeights,
    PyramidExtractor,
    SsimParams,
    WeberParams,
    composite_loss,
    grad_color_analytic,
    grad_fd,
    grad_l1_analytic,
    loss_color,
    loss_l1,
    loss_msssim,
    loss_perceptual,
    loss_weber,
    make_extractor,
    relative_error,
)
from .preprocess import MU_DEFAULT, TonemapParams, equalize_histogram, export_histogram, normalize_minmax
from .preprocess import tonemap_mu, tonemap_reinhard

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_INVALID = 0, 1, 2, 3

ATTENTION_MAX_SIDE = 64
GRADCHECK_TOL = 1e-3
GRADCHECK_RETRIES = 5

log = logging.getLogger("hdrtk")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _write_output(path: str | None, payload: bytes) -> None:
    if path is None or path == "-":
        sys.stdout.buffer.write(payload)
        sys.stdout.flush()
        return
    try:
        Path(path).write_bytes(payload)
    except OSError as exc:
        raise ImageIOError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _json_bytes(doc) -> bytes:
    return (json.dumps(doc, indent=2) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_W, _S, _B, _T = LossWeights(), SsimParams(), WeberParams(), TonemapParams()

# flag dest -> (config section, key)
_OVERRIDES = {
    "mu": ("tonemap", "mu"),
    "k1": ("ssim", "k1"),
    "k2": ("ssim", "k2"),
    "scales": ("ssim", "scales"),
    "ssim_mode": ("ssim", "mode"),
    "weber_fraction": ("weber", "fraction"),
    "alpha": ("weights", "alpha"),
    "beta": ("weights", "beta"),
    "delta": ("weights", "delta"),
    "gamma": ("weights", "gamma"),
    "lambda_": ("weights", "lambda"),
    "extractor": (None, "extractor"),
}

_CLI_ONLY_KEYS = {"seed", "reduction"}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    sup = argparse.SUPPRESS
    p.add_argument("--config", help="JSON config file; flags override its values")
    g = p.add_argument_group("metric parameters")
    g.add_argument("--mu", type=float, default=sup, help=f"mu-law compression (default: {_T.mu:g})")
    g.add_argument("--k1", type=float, default=sup, help=f"SSIM K1 (default: {_S.k1})")
    g.add_argument("--k2", type=float, default=sup, help=f"SSIM K2 (default: {_S.k2})")
    g.add_argument("--scales", type=int, default=sup, help=f"MS-SSIM scale count (default: {_S.scales})")
    g.add_argument(
        "--ssim-mode", choices=("windowed", "global"), default=sup, help=f"SSIM statistics (default: {_S.mode})"
    )
    g.add_argument(
        "--weber-fraction", type=float, default=sup, help=f"Weber fraction (default: {_B.fraction})"
    )
    g.add_argument(
        "--bit-depth", type=int, default=sup, help=f"nominal bit depth for PSNR/SSIM/Weber (default: {_B.bit_depth})"
    )
    g.add_argument(
        "--extractor", choices=("identity", "pyramid"), default=sup, help="perceptual features (default: pyramid)"
    )
    g = p.add_argument_group("loss weights")
    g.add_argument("--alpha", type=float, default=sup, help=f"L1 weight (default: {_W.alpha})")
    g.add_argument("--beta", type=float, default=sup, help=f"perceptual weight (default: {_W.beta})")
    g.add_argument("--delta", type=float, default=sup, help=f"Weber weight (default: {_W.delta})")
    g.add_argument("--gamma", type=float, default=sup, help=f"MS-SSIM weight (default: {_W.gamma})")
    g.add_argument("--lambda", dest="lambda_", type=float, default=sup, help=f"colour weight (default: {_W.lambda_})")


def _read_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ImageIOError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return doc


def build_config(args: argparse.Namespace) -> tuple[EvalConfig, dict]:
    """Merge the config file with command-line overrides.

    Returns the evaluation config and the CLI-only keys (seed, reduction).
    """
    doc = _read_config_file(getattr(args, "config", None))
    extra = {k: doc.pop(k) for k in list(doc) if k in _CLI_ONLY_KEYS}
    for key in ("tonemap", "ssim", "weber", "weights"):
        if key in doc and not isinstance(doc[key], dict):
            raise UsageError(f"config section {key!r} must be an object")
        doc[key] = dict(doc.get(key, {}))
    for dest, (section, key) in _OVERRIDES.items():
        if hasattr(args, dest):
            if section is None:
                doc[key] = getattr(args, dest)
            else:
                doc[section][key] = getattr(args, dest)
    if hasattr(args, "bit_depth"):
        doc["ssim"]["bit_depth"] = args.bit_depth
        doc["weber"]["bit_depth"] = args.bit_depth
    try:
        return EvalConfig.from_dict(doc), extra
    except ValidationError as exc:
        if "unknown" in str(exc) or "invalid config" in str(exc):
            raise UsageError(str(exc)) from None
        raise


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_equalize(args) -> int:
    out = equalize_histogram(load_ppm(args.input), args.mode)
    save_ppm(out, args.output)
    return EXIT_OK


def cmd_histogram(args) -> int:
    hist = compute_histogram(load_ppm(args.input), args.mode)
    _write_output(args.output, export_histogram(hist).encode("ascii"))
    return EXIT_OK


def cmd_tonemap(args) -> int:
    if not (math.isfinite(args.mu) and args.mu > 0):
        raise UsageError("--mu must be a positive number")
    img = normalize_minmax(load_pfm(args.input))
    if args.operator == "mu":
        save_pfm(tonemap_mu(img, TonemapParams(args.mu)), args.output)
    else:
        save_ppm(tonemap_reinhard(img), args.output)
    return EXIT_OK


def _checksum(values: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(values, dtype="<f8").tobytes()).hexdigest()


def cmd_fuse(args) -> int:
    file_cfg = _read_config_file(args.config)
    unknown = set(file_cfg) - _CLI_ONLY_KEYS
    if unknown:
        raise UsageError(f"fuse config accepts only {sorted(_CLI_ONLY_KEYS)}, got {sorted(unknown)}")
    if args.seed is None:
        args.seed = int(file_cfg.get("seed", 0))
    if args.reduction is None:
        args.reduction = int(file_cfg.get("reduction", DEFAULT_REDUCTION))
    if args.reduction < 1:
        raise UsageError("--reduction must be >= 1")
    a = image_to_features(load_ppm(args.a))
    b = image_to_features(load_ppm(args.b))
    fused = fuse_concat(a, b) if args.op == "concat" else fuse_add(a, b)
    report = {"op": args.op, "attend": bool(args.attend)}
    if args.attend:
        if fused.height > ATTENTION_MAX_SIDE or fused.width > ATTENTION_MAX_SIDE:
            raise PreconditionError(
                f"attention is limited to {ATTENTION_MAX_SIDE}x{ATTENTION_MAX_SIDE} inputs, got {fused.height}x{fused.width}"
            )
        params = init_attention_params(args.seed, fused.channels, args.reduction).with_gamma(args.gamma)
        fused = self_attention(fused, params)
        report["attention"] = {
            "seed": args.seed,
            "channels": params.channels,
            "reduction": params.reduction,
            "gamma": params.gamma,
        }
    report.update(
        shape=list(fused.shape),
        checksum=_checksum(fused.values),
        sum=float(np.sum(fused.values)),
        gamma=float(args.gamma) if args.attend else 0.0,
        seed=args.seed,
    )
    if args.dump:
        dump = Path(args.dump)
        try:
            dump.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ImageIOError(f"cannot create {dump}: {exc.strerror or exc}") from exc
        for c in range(fused.channels):
            plane = np.repeat(fused.values[c][:, :, None], 3, axis=2)
            payload = encode_pfm_array(plane)
            try:
                (dump / f"channel_{c:03d}.pfm").write_bytes(payload)
            except OSError as exc:
                raise ImageIOError(f"cannot write into {dump}: {exc.strerror or exc}") from exc
    _write_output(args.output, _json_bytes(report))
    return EXIT_OK


def cmd_loss(args) -> int:
    cfg, _ = build_config(args)
    p = prepare_pair(load_pfm(args.gt), load_pfm(args.rec), cfg.tonemap)
    breakdown = composite_loss(
        ImageBatch(((p.tonemapped_gt, p.tonemapped_rec),)),
        cfg.weights,
        make_extractor(cfg.extractor),
        cfg.weber,
        cfg.ssim,
    )
    if not breakdown.check_total():
        raise ValidationError("composite total disagrees with the weighted sum of its components")
    _write_output(args.output, _json_bytes(breakdown.to_dict()))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    cfg, _ = build_config(args)
    report = evaluate_dataset(args.gt_dir, args.rec_dir, cfg, workers=args.workers)
    _write_output(args.output, write_report(report, args.format))
    return EXIT_OK


def gradcheck_pair(size: int, seed: int, epsilon: float):
    """Seeded ``(X, Y)`` pair with every ``|Y - X|`` in [0.02, 0.08] and ``Y`` in [0.02, 0.98].

    Returns None when the pair is degenerate for ``epsilon`` (kinks or the
    [0, 1] boundary within reach of a perturbation).
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.1, 0.9, size=(size, size, 3))
    d = rng.uniform(0.02, 0.08, size=x.shape) * rng.choice([-1.0, 1.0], size=x.shape)
    y = x + d
    if np.min(np.abs(y - x)) <= 2 * epsilon:
        return None
    if np.min(y) - epsilon < 0 or np.max(y) + epsilon > 1:
        return None
    return x, y


def _gradcheck_loss(name: str, size: int):
    if name == "l1":
        return loss_l1, grad_l1_analytic
    if name == "color":
        return loss_color, grad_color_analytic
    if name == "weber":
        return loss_weber, None
    if name == "perceptual":
        extractor = PyramidExtractor()
        return (lambda b: loss_perceptual(b, extractor)), None
    scales = 1
    while scales < 3 and size >= 2**scales * 11:
        scales += 1
    params = SsimParams(scales=scales)
    return (lambda b: loss_msssim(b, params)), None


def cmd_gradcheck(args) -> int:
    if not (math.isfinite(args.epsilon) and args.epsilon > 0):
        raise UsageError("--epsilon must be > 0")
    if args.size < 1:
        raise UsageError("--size must be >= 1")
    if args.loss == "msssim" and args.size < 16:
        raise UsageError("--loss msssim needs --size >= 16")
    loss, analytic = _gradcheck_loss(args.loss, args.size)

    seed, pair = args.seed, None
    for attempt in range(GRADCHECK_RETRIES + 1):
        pair = gradcheck_pair(args.size, seed, args.epsilon)
        if pair is not None:
            break
        log.warning("seed %d gave a degenerate pair; retrying with %d", seed, seed + 1)
        seed += 1
    if pair is None:
        raise PreconditionError(f"no usable pair after {GRADCHECK_RETRIES} retries")

    batch = ImageBatch((pair,))
    fd = grad_fd(loss, batch, args.epsilon)
    result = {
        "loss": args.loss,
        "size": args.size,
        "seed": seed,
        "epsilon": args.epsilon,
        "max_abs_gradient": float(max(np.max(np.abs(g)) for g in fd)),
    }
    status = EXIT_OK
    if analytic is not None:
        err = relative_error(fd, analytic(batch))
        result["max_rel_error"] = err
        result["tolerance"] = GRADCHECK_TOL
        result["pass"] = bool(err <= GRADCHECK_TOL)
        if args.loss == "l1":
            result["expected_magnitude"] = 1.0 / pair[0].size
        if err > GRADCHECK_TOL:
            status = EXIT_INVALID
    else:
        result["mode"] = "finite-difference only"
    _write_output(None, _json_bytes(result))
    return status


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="hdrtk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("equalize", help="histogram-equalize a P6 PPM", formatter_class=fmt)
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--mode", choices=("luma", "per-channel"), default="luma", help="equalization domain")
    p.set_defaults(func=cmd_equalize)

    p = sub.add_parser("histogram", help="export 256-bin histograms as CSV", formatter_class=fmt)
    p.add_argument("input")
    p.add_argument("output", nargs="?", default="-", help="CSV path, '-' for stdout")
    p.add_argument("--mode", choices=("per-channel", "luma"), default="per-channel", help="channels to count")
    p.set_defaults(func=cmd_histogram)

    p = sub.add_parser("tonemap", help="normalize and tone-map a PFM", formatter_class=fmt)
    p.add_argument("input")
    p.add_argument("output", help="PFM for --operator mu, PPM for reinhard")
    p.add_argument("--operator", choices=("mu", "reinhard"), default="mu", help="tone curve")
    p.add_argument("--mu", type=float, default=MU_DEFAULT, help="mu-law compression")
    p.set_defaults(func=cmd_tonemap)

    p = sub.add_parser("fuse", help="fuse two PPMs as feature maps and summarize", formatter_class=fmt)
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--op", choices=("concat", "add"), default="concat", help="fusion operator")
    p.add_argument("--attend", action="store_true", help="apply self-attention after fusion")
    p.add_argument("--seed", type=int, default=None, help="attention parameter seed (config or 0)")
    p.add_argument(
        "--reduction", type=int, default=None, help=f"query/key channel reduction (config or {DEFAULT_REDUCTION})"
    )
    p.add_argument("--config", help="JSON file supplying seed/reduction")
    p.add_argument("--gamma", type=float, default=0.0, help="attention residual scale")
    p.add_argument("-o", "--output", default="-", help="JSON report path, '-' for stdout")
    p.add_argument("--dump", metavar="DIR", help="also write each fused channel as a PFM")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("loss", help="composite loss breakdown for one PFM pair")
    p.add_argument("gt")
    p.add_argument("rec")
    p.add_argument("-o", "--output", default="-", help="JSON path, '-' for stdout (default: -)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("evaluate", help="evaluate matching PFMs in two directories")
    p.add_argument("gt_dir")
    p.add_argument("rec_dir")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="report format (default: csv)")
    p.add_argument("-o", "--output", default="-", help="report path, '-' for stdout (default: -)")
    p.add_argument("--workers", type=int, default=1, help="parallel pair evaluations (default: 1)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check of a loss", formatter_class=fmt)
    p.add_argument("--loss", choices=("l1", "color", "weber", "msssim", "perceptual"), default="color")
    p.add_argument("--size", type=int, default=16, help="random pair side length")
    p.add_argument("--seed", type=int, default=0, help="pair generator seed")
    p.add_argument("--epsilon", type=float, default=1e-3, help="finite-difference step")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        force=True,
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"hdrtk {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ImageIOError as exc:
        print(f"hdrtk {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except HdrToolkitError as exc:
        print(f"hdrtk {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
