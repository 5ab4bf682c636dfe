"""Image buffers, raster I/O, channel statistics and histograms.

Images are plain ``float64`` arrays of shape ``(height, width, 3)`` in R, G, B
order with samples in ``[0, 1]``. Samples are used exactly as stored in the
file; no gamma or color-space conversion happens anywhere in the package.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import cv2
import numpy as np

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

SUPPORTED_EXTENSIONS = (".png", ".jpg", ".jpeg")


class ImageError(ValueError):
    """Raised for unreadable, malformed or unsupported images."""


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel population mean and standard deviation."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        std = np.asarray(self.std, dtype=np.float64).reshape(-1)
        if mean.shape != (3,) or std.shape != (3,):
            raise ValueError("ChannelStats needs exactly three channels")
        if np.any(std < 0):
            raise ValueError("standard deviations must be non-negative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(mean=d["mean"], std=d["std"])


@dataclass(frozen=True)
class Histogram:
    """Per-channel bin counts over ``[0, 1]``; ``counts`` has shape ``(3, bin_count)``."""

    counts: np.ndarray

    @property
    def bin_count(self) -> int:
        return self.counts.shape[1]

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.bin_count + 1)

    def __add__(self, other: "Histogram") -> "Histogram":
        if other.counts.shape != self.counts.shape:
            raise ValueError("cannot add histograms with different bin counts")
        return Histogram(self.counts + other.counts)


def as_image(arr) -> np.ndarray:
    """Validate ``arr`` as an image buffer and return it as float64."""
    img = np.asarray(arr, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ImageError(f"expected an (H, W, 3) array, got shape {img.shape}")
    if img.shape[0] == 0 or img.shape[1] == 0:
        raise ImageError("image has a zero dimension")
    return img


def load_image(path) -> np.ndarray:
    """Read an 8- or 16-bit RGB(A) raster and scale codes to ``[0, 1]``.

    Integer sample ``v`` at bit depth ``B`` becomes ``v / (2**B - 1)``. An alpha
    channel is dropped. PNG and JPEG are supported.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise ImageError(f"{path}: no such file")
    raw = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ImageError(f"{path}: unreadable or unsupported image format")
    if raw.size == 0:
        raise ImageError(f"{path}: zero-dimension image")
    if raw.ndim != 3 or raw.shape[2] not in (3, 4):
        raise ImageError(f"{path}: expected an RGB image, got shape {raw.shape}")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise ImageError(f"{path}: unsupported sample type {raw.dtype}")
    rgb = raw[:, :, 2::-1]  # BGR(A) -> RGB, alpha dropped
    return rgb.astype(np.float64) / scale


def quantize(img: np.ndarray, bit_depth: int = 8) -> np.ndarray:
    """Integer codes for ``img`` using round-half-up: ``floor(s * (2**B - 1) + 0.5)``."""
    if bit_depth not in (8, 16):
        raise ValueError("bit_depth must be 8 or 16")
    top = (1 << bit_depth) - 1
    codes = np.floor(np.clip(img, 0.0, 1.0) * top + 0.5)
    return codes.astype(np.uint8 if bit_depth == 8 else np.uint16)


def save_image(img: np.ndarray, path, bit_depth: int = 8) -> None:
    """Write ``img`` as a PNG at 8 or 16 bits per sample."""
    img = as_image(img)
    codes = quantize(img, bit_depth)
    path = os.fspath(path)
    ok, buf = cv2.imencode(".png", np.ascontiguousarray(codes[:, :, ::-1]))
    if not ok:
        raise ImageError(f"{path}: PNG encoding failed")
    try:
        with open(path, "wb") as fh:
            fh.write(buf.tobytes())
    except OSError as exc:
        raise ImageError(f"{path}: cannot write image ({exc.strerror})") from exc


def compute_stats(img: np.ndarray) -> ChannelStats:
    img = as_image(img)
    flat = img.reshape(-1, 3)
    return ChannelStats(mean=flat.mean(axis=0), std=flat.std(axis=0))


def compute_histogram(img: np.ndarray, bin_count: int = 256) -> Histogram:
    """Sample ``s`` goes to bin ``floor(s * bin_count)``; ``s == 1`` lands in the last bin."""
    if bin_count < 1:
        raise ValueError("bin_count must be positive")
    img = as_image(img)
    idx = np.floor(np.clip(img, 0.0, 1.0) * bin_count).astype(np.int64)
    np.minimum(idx, bin_count - 1, out=idx)
    counts = np.stack(
        [np.bincount(idx[:, :, c].ravel(), minlength=bin_count) for c in range(3)]
    )
    return Histogram(counts.astype(np.int64))


def luminance(img: np.ndarray) -> np.ndarray:
    """Rec. 601 luma, ``0.299 R + 0.587 G + 0.114 B``, as an ``(H, W)`` array."""
    img = as_image(img)
    return img[:, :, 0] * 0.299 + img[:, :, 1] * 0.587 + img[:, :, 2] * 0.114


def write_histogram_csv(hist: Histogram, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["channel", "bin", "count"])
        for c, name in enumerate("RGB"):
            for b, n in enumerate(hist.counts[c]):
                writer.writerow([name, b, int(n)])


def list_images(directory) -> list[str]:
    """Relative POSIX paths of supported images under ``directory``, sorted."""
    directory = os.fspath(directory)
    if not os.path.isdir(directory):
        raise ImageError(f"{directory}: not a directory")
    found = []
    for root, dirs, files in os.walk(directory):
        dirs.sort()
        for name in files:
            if name.lower().endswith(SUPPORTED_EXTENSIONS):
                rel = os.path.relpath(os.path.join(root, name), directory)
                found.append(rel.replace(os.sep, "/"))
    return sorted(found)
