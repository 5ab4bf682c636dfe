"""Post-sensor processing: Bayer mosaic/demosaic, exposure matching, white balance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image import LUMA_WEIGHTS, ChannelStats, ImageError, as_image, luminance

PER_CHANNEL = "per_channel"
LUMINANCE = "luminance"

MIN_STD = 1e-6
MIN_MEAN = 1e-6


class DegenerateImageError(ValueError):
    """The image lacks the variation or signal an operation needs."""


@dataclass(frozen=True)
class BayerImage:
    data: np.ndarray
    pattern: str = "RGGB"

    def __post_init__(self):
        if self.pattern != "RGGB":
            raise ValueError(f"only the RGGB pattern is supported, got {self.pattern!r}")
        if self.data.ndim != 2 or self.data.shape[0] % 2 or self.data.shape[1] % 2:
            raise ImageError(f"Bayer data must be 2-D with even dimensions, got {self.data.shape}")

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]


@dataclass(frozen=True)
class WbGains:
    r: float
    g: float
    b: float

    def __post_init__(self):
        if not (self.r > 0 and self.g > 0 and self.b > 0):
            raise ValueError(f"white-balance gains must be positive, got {self.as_array()}")

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.g, self.b], dtype=np.float64)

    def normalized(self) -> "WbGains":
        """Gains rescaled so that their mean is exactly 1."""
        g = self.as_array()
        if abs(g.mean() - 1.0) <= 1e-12:
            return self
        g = g / g.mean()
        return WbGains(*g.tolist())


def mosaic_rggb(img: np.ndarray) -> BayerImage:
    img = as_image(img)
    h, w = img.shape[:2]
    if h % 2 or w % 2:
        raise ImageError(f"mosaicing needs even dimensions, got {w}x{h}")
    out = np.empty((h, w), dtype=np.float64)
    out[0::2, 0::2] = img[0::2, 0::2, 0]
    out[0::2, 1::2] = img[0::2, 1::2, 1]
    out[1::2, 0::2] = img[1::2, 0::2, 1]
    out[1::2, 1::2] = img[1::2, 1::2, 2]
    return BayerImage(out)


# Gradient-corrected linear interpolation kernels, in eighths.
G_AT_RB = np.array([
    [0, 0, -1, 0, 0],
    [0, 0, 2, 0, 0],
    [-1, 2, 4, 2, -1],
    [0, 0, 2, 0, 0],
    [0, 0, -1, 0, 0],
]) / 8.0

# Red at a green site in a red row (blue at a green site in a blue row).
RB_AT_G_SAME_ROW = np.array([
    [0, 0, 0.5, 0, 0],
    [0, -1, 0, -1, 0],
    [-1, 4, 5, 4, -1],
    [0, -1, 0, -1, 0],
    [0, 0, 0.5, 0, 0],
]) / 8.0

# Red at a green site in a blue row (blue at a green site in a red row).
RB_AT_G_OTHER_ROW = RB_AT_G_SAME_ROW.T.copy()

# Red at blue, blue at red.
RB_AT_BR = np.array([
    [0, 0, -1.5, 0, 0],
    [0, 2, 0, 2, 0],
    [-1.5, 0, 6, 0, -1.5],
    [0, 2, 0, 2, 0],
    [0, 0, -1.5, 0, 0],
]) / 8.0


def demosaic(bayer: BayerImage) -> np.ndarray:
    """Edge-aware RGGB demosaic with 5x5 gradient-corrected kernels.

    Each kernel is evaluated as the bilinear average of the missing channel plus
    a Laplacian correction from the channel present at the site. The correction
    is summed as ``center - neighbor`` differences, so flat regions give exactly
    zero and constant images survive a mosaic round trip bit for bit. The result
    equals correlating the mosaic with the kernel matrices above.

    Borders replicate the outermost mosaic samples, so the 2-pixel frame is less
    accurate than the interior.
    """
    cfa = np.asarray(bayer.data, dtype=np.float64)
    h, w = cfa.shape
    pad = np.pad(cfa, 2, mode="edge")

    def at(dy, dx):
        return pad[2 + dy : 2 + dy + h, 2 + dx : 2 + dx + w]

    c = cfa
    # Missing green at R/B sites.
    g_rb = ((at(-1, 0) + at(1, 0)) + (at(0, -1) + at(0, 1))) / 4.0 + (
        (c - at(-2, 0)) + (c - at(2, 0)) + (c - at(0, -2)) + (c - at(0, 2))
    ) / 8.0
    # Channel whose neighbours lie left/right of a green site.
    horiz = (at(0, -1) + at(0, 1)) / 2.0 + (
        (c - at(0, -2)) + (c - at(0, 2))
        + (c - at(-1, -1)) + (c - at(-1, 1)) + (c - at(1, -1)) + (c - at(1, 1))
        - 0.5 * (c - at(-2, 0)) - 0.5 * (c - at(2, 0))
    ) / 8.0
    # Channel whose neighbours lie above/below a green site.
    vert = (at(-1, 0) + at(1, 0)) / 2.0 + (
        (c - at(-2, 0)) + (c - at(2, 0))
        + (c - at(-1, -1)) + (c - at(-1, 1)) + (c - at(1, -1)) + (c - at(1, 1))
        - 0.5 * (c - at(0, -2)) - 0.5 * (c - at(0, 2))
    ) / 8.0
    # Red at blue sites and blue at red sites.
    cross = ((at(-1, -1) + at(-1, 1)) + (at(1, -1) + at(1, 1))) / 4.0 + 1.5 * (
        (c - at(-2, 0)) + (c - at(2, 0)) + (c - at(0, -2)) + (c - at(0, 2))
    ) / 8.0

    out = np.empty((h, w, 3), dtype=np.float64)
    r, g, b = out[:, :, 0], out[:, :, 1], out[:, :, 2]
    # R site (even, even)
    r[0::2, 0::2] = c[0::2, 0::2]
    g[0::2, 0::2] = g_rb[0::2, 0::2]
    b[0::2, 0::2] = cross[0::2, 0::2]
    # G site in a red row (even, odd)
    r[0::2, 1::2] = horiz[0::2, 1::2]
    g[0::2, 1::2] = c[0::2, 1::2]
    b[0::2, 1::2] = vert[0::2, 1::2]
    # G site in a blue row (odd, even)
    r[1::2, 0::2] = vert[1::2, 0::2]
    g[1::2, 0::2] = c[1::2, 0::2]
    b[1::2, 0::2] = horiz[1::2, 0::2]
    # B site (odd, odd)
    r[1::2, 1::2] = cross[1::2, 1::2]
    g[1::2, 1::2] = g_rb[1::2, 1::2]
    b[1::2, 1::2] = c[1::2, 1::2]
    return np.clip(out, 0.0, 1.0)


def mosaic_demosaic(img: np.ndarray) -> np.ndarray:
    """Round-trip through the Bayer mosaic, padding odd sizes by edge replication."""
    img = as_image(img)
    h, w = img.shape[:2]
    padded = np.pad(img, ((0, h % 2), (0, w % 2), (0, 0)), mode="edge")
    return demosaic(mosaic_rggb(padded))[:h, :w]


def _affine_match(src_mean, src_std, tgt_mean, tgt_std):
    if np.any(np.asarray(src_std) <= MIN_STD):
        raise DegenerateImageError(
            f"source standard deviation {np.round(src_std, 9).tolist()} is too small to rescale"
        )
    scale = np.asarray(tgt_std) / np.asarray(src_std)
    return scale, np.asarray(tgt_mean) - np.asarray(src_mean) * scale


def brightness_transform(img: np.ndarray, target: ChannelStats, mode: str = PER_CHANNEL):
    """Per-channel ``(scale, offset)`` so that ``img * scale + offset`` has the target stats.

    In luminance mode the target luma mean is the weighted channel mean and the
    target luma spread is the weighted channel spread, and the same affine map is
    used for all three channels.
    """
    img = as_image(img)
    if mode == PER_CHANNEL:
        flat = img.reshape(-1, 3)
        return _affine_match(flat.mean(axis=0), flat.std(axis=0), target.mean, target.std)
    if mode == LUMINANCE:
        y = luminance(img)
        scale, offset = _affine_match(
            y.mean(), y.std(), LUMA_WEIGHTS @ target.mean, LUMA_WEIGHTS @ target.std
        )
        return np.full(3, float(scale)), np.full(3, float(offset))
    raise ValueError(f"brightness mode must be {PER_CHANNEL!r} or {LUMINANCE!r}, got {mode!r}")


def match_brightness(img: np.ndarray, target: ChannelStats, mode: str = PER_CHANNEL) -> np.ndarray:
    """Affine exposure match ``(x - mu_src) * sigma_tgt / sigma_src + mu_tgt``, then clip.

    The statistics match exactly only before clipping.
    """
    img = as_image(img)
    scale, offset = brightness_transform(img, target, mode)
    return np.clip(img * scale + offset, 0.0, 1.0)


def match_brightness_paired(img: np.ndarray, partner_stats: ChannelStats, mode: str = PER_CHANNEL) -> np.ndarray:
    """Same transform as :func:`match_brightness`, targeting one partner image's stats."""
    return match_brightness(img, partner_stats, mode)


def gray_world_gains(img: np.ndarray) -> np.ndarray:
    """Gains ``mean(mu) / mu_c`` that would neutralize ``img`` to a gray world."""
    img = as_image(img)
    mu = img.reshape(-1, 3).mean(axis=0)
    if np.any(mu <= MIN_MEAN):
        raise DegenerateImageError(f"channel means {mu.tolist()} too close to black for white balance")
    return mu.mean() / mu


def apply_white_balance(img: np.ndarray, target: WbGains) -> np.ndarray:
    """Neutralize to gray world, then impose the (mean-normalized) target gains."""
    img = as_image(img)
    gains = gray_world_gains(img) * target.normalized().as_array()
    return np.clip(img * gains, 0.0, 1.0)
