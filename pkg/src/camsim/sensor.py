"""Sensor noise: additive white Gaussian noise and a blind noise estimate."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .image import LUMA_WEIGHTS, ImageError, as_image, luminance

DEFAULT_SIGMA = 0.01

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

_LUMA_NORM = float(np.sqrt(np.sum(LUMA_WEIGHTS**2)))


@dataclass(frozen=True)
class NoiseParams:
    sigma: float = DEFAULT_SIGMA
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")
        if not 0 <= self.seed <= _MASK64:
            raise ValueError("seed must be an unsigned 64-bit integer")


def fnv1a64(text: str) -> int:
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def image_seed(global_seed: int, rel_path: str) -> int:
    """Per-image seed: global seed XOR FNV-1a hash of the relative path."""
    return (int(global_seed) & _MASK64) ^ fnv1a64(rel_path)


def add_awgn(img: np.ndarray, params: NoiseParams) -> np.ndarray:
    """``clip(img + n, 0, 1)`` with ``n ~ Normal(0, sigma^2)`` drawn per sample."""
    img = as_image(img)
    if params.sigma == 0:
        return img.copy()
    rng = np.random.default_rng(params.seed)
    noise = rng.standard_normal(img.shape) * params.sigma
    return np.clip(img + noise, 0.0, 1.0)


def laplacian_residual(plane: np.ndarray) -> np.ndarray:
    """Valid-region response of the 3x3 mask [[1,-2,1],[-2,4,-2],[1,-2,1]]."""
    p = plane
    return (
        p[:-2, :-2] - 2 * p[:-2, 1:-1] + p[:-2, 2:]
        - 2 * p[1:-1, :-2] + 4 * p[1:-1, 1:-1] - 2 * p[1:-1, 2:]
        + p[2:, :-2] - 2 * p[2:, 1:-1] + p[2:, 2:]
    )


def estimate_noise(img: np.ndarray) -> float:
    """Blind AWGN sigma estimate on the luminance channel.

    The mask is a second difference along x times one along y, so it cancels
    anything of the form ``f(x) + g(y)``, ramps included. For white noise its response has standard deviation ``6 sigma``, and the mean absolute
    value of a zero-mean Gaussian is ``sqrt(2/pi)`` times its standard deviation.
    Luma of channel-independent noise has ``sigma * |w|`` spread (``w`` the luma
    weights), so the result is divided by ``|w|`` to report per-sample sigma.
    Textured scenes leak into the residual and inflate the estimate.
    """
    img = as_image(img)
    if img.shape[0] < 3 or img.shape[1] < 3:
        raise ImageError(f"noise estimation needs at least 3x3 pixels, got {img.shape[1]}x{img.shape[0]}")
    resid = laplacian_residual(luminance(img))
    sigma_luma = math.sqrt(math.pi / 2.0) * float(np.mean(np.abs(resid))) / 6.0
    return sigma_luma / _LUMA_NORM
