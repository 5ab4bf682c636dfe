"""Reference statistics from a calibration set of real images, and their file format."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .image import ChannelStats, ImageError, compute_stats, list_images, load_image
from .isp import WbGains
from .sensor import estimate_noise

log = logging.getLogger(__name__)

STATS_VERSION = 1
REQUIRED_FIELDS = ("version", "n_images", "source_id", "mean_rgb", "std_rgb", "wb_gains", "noise_sigma")


class StatsFormatError(ValueError):
    """A stats file is missing fields or holds invalid values."""


@dataclass
class ReferenceStats:
    mean_rgb: np.ndarray
    std_rgb: np.ndarray
    wb_gains: WbGains
    noise_sigma: float
    n_images: int
    source_id: str = ""
    # Optional per-image stats, keyed by image id, used for paired exposure matching.
    per_image: dict = field(default_factory=dict)

    def __post_init__(self):
        self.mean_rgb = np.asarray(self.mean_rgb, dtype=np.float64)
        self.std_rgb = np.asarray(self.std_rgb, dtype=np.float64)
        if self.n_images < 1:
            raise ValueError("n_images must be at least 1")
        self.wb_gains = self.wb_gains.normalized()

    @property
    def channel_stats(self) -> ChannelStats:
        return ChannelStats(self.mean_rgb, self.std_rgb)


def _column_mean(rows: np.ndarray) -> np.ndarray:
    """Column means that are exact for repeated rows and independent of row order."""
    base = rows.min(axis=0)
    n = rows.shape[0]
    return np.array([base[c] + math.fsum(rows[:, c] - base[c]) / n for c in range(rows.shape[1])])


def calibrate(images, source_id: str = "", ids=None) -> ReferenceStats:
    """Aggregate statistics over a non-empty sequence of images.

    Channel means and stds are unweighted averages of per-image values, so image
    size does not weight the result. White-balance gains are per-image
    ``mu_c / mean(mu)`` averaged over images and renormalized to mean 1; the noise
    level is the median of per-image blind estimates.
    """
    images = list(images)
    if not images:
        raise ValueError("calibration needs at least one image")
    stats = [compute_stats(img) for img in images]
    means = np.array([s.mean for s in stats])
    stds = np.array([s.std for s in stats])
    if np.any(means.mean(axis=1) <= 0):
        raise ValueError("calibration image with zero mean brightness")
    ratios = means / means.mean(axis=1, keepdims=True)
    gains = _column_mean(ratios)
    noise = float(np.median([estimate_noise(img) for img in images]))
    per_image = {}
    if ids is not None:
        ids = list(ids)
        if len(ids) != len(images):
            raise ValueError("ids and images differ in length")
        per_image = {i: s for i, s in zip(ids, stats)}
    return ReferenceStats(
        mean_rgb=_column_mean(means),
        std_rgb=_column_mean(stds),
        wb_gains=WbGains(*gains.tolist()),
        noise_sigma=noise,
        n_images=len(images),
        source_id=source_id,
        per_image=per_image,
    )


def calibrate_directory(directory, max_images: Optional[int] = None):
    """Calibrate from the images under ``directory``; returns ``(stats, skipped)``.

    Unreadable images are skipped with a warning; if nothing could be read a
    ``ValueError`` is raised. ``max_images`` keeps the first N in sorted order.
    """
    names = list_images(directory)
    if max_images is not None:
        names = names[:max_images]
    images, ids, skipped = [], [], []
    for name in names:
        try:
            images.append(load_image(os.path.join(directory, name)))
            ids.append(image_id(name))
        except ImageError as exc:
            log.warning("skipping %s: %s", name, exc)
            skipped.append(name)
    if not images:
        raise ValueError(f"no readable images in {directory}")
    return calibrate(images, source_id=os.fspath(directory), ids=ids), skipped


def image_id(rel_path: str) -> str:
    """Dataset-independent id for an image: relative path without extension."""
    return os.path.splitext(rel_path)[0]


def stats_to_dict(stats: ReferenceStats) -> dict:
    d = {
        "version": STATS_VERSION,
        "n_images": int(stats.n_images),
        "source_id": stats.source_id,
        "mean_rgb": stats.mean_rgb.tolist(),
        "std_rgb": stats.std_rgb.tolist(),
        "wb_gains": stats.wb_gains.as_array().tolist(),
        "noise_sigma": float(stats.noise_sigma),
    }
    if stats.per_image:
        d["per_image"] = {k: stats.per_image[k].to_dict() for k in sorted(stats.per_image)}
    return d


def save_stats(stats: ReferenceStats, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(stats_to_dict(stats), fh, indent=2)
        fh.write("\n")


def _triple(d, name):
    value = d[name]
    if not isinstance(value, list) or len(value) != 3 or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        raise StatsFormatError(f"field {name!r} must be a list of three numbers, got {value!r}")
    return [float(v) for v in value]


def stats_from_dict(d: dict) -> ReferenceStats:
    if not isinstance(d, dict):
        raise StatsFormatError("stats document must be an object")
    missing = [name for name in REQUIRED_FIELDS if name not in d]
    if missing:
        raise StatsFormatError(f"missing field(s): {', '.join(missing)}")
    if d["version"] != STATS_VERSION:
        raise StatsFormatError(f"field 'version': unsupported version {d['version']!r}")
    n = d["n_images"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise StatsFormatError(f"field 'n_images' must be a positive integer, got {n!r}")
    mean = _triple(d, "mean_rgb")
    std = _triple(d, "std_rgb")
    gains = _triple(d, "wb_gains")
    if min(std) < 0:
        raise StatsFormatError("field 'std_rgb' has a negative entry")
    if min(gains) <= 0:
        raise StatsFormatError("field 'wb_gains' must be positive")
    sigma = d["noise_sigma"]
    if not isinstance(sigma, (int, float)) or isinstance(sigma, bool) or sigma < 0:
        raise StatsFormatError(f"field 'noise_sigma' must be a non-negative number, got {sigma!r}")
    if not isinstance(d["source_id"], str):
        raise StatsFormatError("field 'source_id' must be a string")
    per_image = {}
    for key, entry in d.get("per_image", {}).items():
        try:
            per_image[key] = ChannelStats(_triple(entry, "mean"), _triple(entry, "std"))
        except (KeyError, TypeError, ValueError) as exc:
            raise StatsFormatError(f"field 'per_image.{key}': {exc}") from exc
    return ReferenceStats(
        mean_rgb=mean,
        std_rgb=std,
        wb_gains=WbGains(*gains),
        noise_sigma=float(sigma),
        n_images=n,
        source_id=d["source_id"],
        per_image=per_image,
    )


def load_stats(path) -> ReferenceStats:
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise StatsFormatError(f"{path}: not valid JSON ({exc})") from exc
    try:
        return stats_from_dict(d)
    except StatsFormatError as exc:
        raise StatsFormatError(f"{path}: {exc}") from exc
