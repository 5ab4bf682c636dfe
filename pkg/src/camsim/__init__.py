"""Camera-model augmentation for sim-to-real studies.

Lens warps (pinhole, FOV, radial), additive sensor noise, ISP stages (Bayer
mosaic and demosaic, exposure matching, white-balance distortion), calibration
statistics from real images, and per-class performance-difference reports.
"""

from .image import (
    ChannelStats,
    Histogram,
    ImageError,
    compute_histogram,
    compute_stats,
    load_image,
    luminance,
    save_image,
)
from .isp import (
    BayerImage,
    WbGains,
    apply_white_balance,
    demosaic,
    match_brightness,
    match_brightness_paired,
    mosaic_rggb,
)
from .lens import Fov, LensError, Pinhole, Radial, apply_lens, fov_forward, fov_inverse, radial_forward, radial_inverse
from .sensor import NoiseParams, add_awgn, estimate_noise
from .calibration import ReferenceStats, calibrate, load_stats, save_stats
from .pipeline import PRESETS, PipelineConfig, build_pipeline, make_pairing, preset_config, run
from .evaluation import PerformanceRecord, contextual_difference, load_records, render_report

__version__ = "0.1.0"
