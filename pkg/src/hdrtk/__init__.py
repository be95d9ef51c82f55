"""Numerics for HDR reconstruction from histogram-equalized LDR inputs.

Preprocessing (equalization, mu-law and Reinhard tone mapping), feature
fusion and self-attention, the five-term reconstruction loss, and a
PSNR/SSIM evaluation harness, with bit-exact PPM/PFM I/O.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .image_core import (  # noqa: F401
    HdrImage,
    Histogram,
    LdrImage,
    compute_histogram,
    load_pfm,
    load_ppm,
    read_pfm,
    read_ppm,
    save_pfm,
    save_ppm,
    write_pfm,
    write_ppm,
)
from .preprocess import (  # noqa: F401
    EqualizeMode,
    TonemapParams,
    equalize_histogram,
    export_histogram,
    normalize_minmax,
    tonemap_mu,
    tonemap_reinhard,
)
from .fusion_attention import (  # noqa: F401
    AttentionParams,
    FeatureMap,
    fuse_add,
    fuse_concat,
    image_to_features,
    init_attention_params,
    self_attention,
)
from .losses import (  # noqa: F401
    IdentityExtractor,
    ImageBatch,
    LossWeights,
    PyramidExtractor,
    SsimParams,
    WeberParams,
    composite_loss,
    grad_color_analytic,
    grad_fd,
    loss_color,
    loss_l1,
    loss_msssim,
    loss_perceptual,
    loss_weber,
    ms_ssim,
    psnr,
    psnr_weber,
    ssim,
    ssim_components,
)
from .eval_harness import EvalConfig, EvalReport, evaluate_dataset, evaluate_pair, write_report  # noqa: F401
