"""Lens distortion models and resolution-preserving image warps.

Three models are available: :class:`Pinhole` (no distortion), :class:`Fov`
(single-parameter wide-angle model) and :class:`Radial` (three-term
polynomial). Radii are measured in pixels from the optical center and divided
by a focal scale ``f``. The pixel-space mapping is additionally scaled so that
the point half an image width from the center on the horizontal axis maps to
itself, which keeps the horizontal field of view of the warped image equal to
the source.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .image import as_image

DISTORT = "distort"
UNDISTORT = "undistort"

RADIAL_MAX_ITER = 50
RADIAL_TOL = 1e-8


class LensError(ValueError):
    """Invalid lens parameters or a radius the model cannot invert."""


@dataclass(frozen=True)
class Pinhole:
    pass


@dataclass(frozen=True)
class Fov:
    omega: float
    center: tuple = (0.5, 0.5)
    focal: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.omega < math.pi:
            raise LensError(f"FOV parameter omega must lie in (0, pi), got {self.omega}")
        _check_center_focal(self.center, self.focal)


@dataclass(frozen=True)
class Radial:
    """Radial polynomial ``r_d = r_u (1 + k1 r_u^2 + k2 r_u^4 + k3 r_u^6)``.

    ``max_radius`` is the normalized radius up to which the forward map is
    verified to be strictly increasing when the object is built; warps check
    the radius range they actually need again.
    """

    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    center: tuple = (0.5, 0.5)
    focal: Optional[float] = None
    max_radius: float = 1.0

    def __post_init__(self):
        _check_center_focal(self.center, self.focal)
        check_radial_monotone(self, self.max_radius)

    @property
    def k(self):
        return (self.k1, self.k2, self.k3)


LensParams = Union[Pinhole, Fov, Radial]


def _check_center_focal(center, focal):
    if len(center) != 2:
        raise LensError("center must be a pair (cx, cy)")
    if focal is not None and not focal > 0:
        raise LensError(f"focal scale must be positive, got {focal}")


def fov_forward(r_u, omega):
    """Distorted radius ``arctan(2 r_u tan(omega / 2)) / omega``."""
    r_u = np.asarray(r_u, dtype=np.float64)
    return np.arctan(2.0 * r_u * math.tan(omega / 2.0)) / omega


def fov_inverse(r_d, omega):
    """Undistorted radius ``tan(r_d omega) / (2 tan(omega / 2))``; needs ``r_d omega < pi/2``."""
    r_d = np.asarray(r_d, dtype=np.float64)
    if np.any(r_d * omega >= math.pi / 2):
        raise LensError(
            f"FOV inverse undefined for r_d * omega >= pi/2 (max r_d {float(np.max(r_d)):.6g}, omega {omega})"
        )
    return np.tan(r_d * omega) / (2.0 * math.tan(omega / 2.0))


def radial_forward(r_u, params: Radial):
    r_u = np.asarray(r_u, dtype=np.float64)
    r2 = r_u * r_u
    return r_u * (1.0 + r2 * (params.k1 + r2 * (params.k2 + r2 * params.k3)))


def radial_derivative(r_u, params: Radial):
    r2 = np.asarray(r_u, dtype=np.float64) ** 2
    return 1.0 + r2 * (3.0 * params.k1 + r2 * (5.0 * params.k2 + r2 * 7.0 * params.k3))


def check_radial_monotone(params: Radial, r_max: float, samples: int = 2048) -> None:
    r = np.linspace(0.0, r_max, samples)
    if np.any(radial_derivative(r, params) <= 0):
        bad = float(r[np.argmax(radial_derivative(r, params) <= 0)])
        raise LensError(
            f"radial coefficients {params.k} are not monotone on [0, {r_max:.4g}] (fails near r={bad:.4g})"
        )


def radial_inverse(r_d, params: Radial):
    """Solve ``radial_forward(r_u) = r_d`` by damped fixed-point iteration.

    The fixed-point map is ``g(r) = r_d / (1 + k1 r^2 + k2 r^4 + k3 r^6)``. Each
    step moves ``r`` by ``alpha * (g(r) - r)`` with ``alpha = 1 / (1 - g'(r))``,
    which makes the iteration converge quadratically near the root even when
    plain fixed-point updates would oscillate or crawl.
    """
    r_d = np.asarray(r_d, dtype=np.float64)
    k1, k2, k3 = params.k
    r = r_d.copy()
    for _ in range(RADIAL_MAX_ITER):
        r2 = r * r
        poly = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
        if np.any(poly <= 0):
            break
        resid = r * poly - r_d
        if np.all(np.abs(resid) < 1e-14):
            break
        g = r_d / poly
        dpoly = r * (2.0 * k1 + r2 * (4.0 * k2 + r2 * 6.0 * k3))
        gprime = -r_d * dpoly / (poly * poly)
        denom = 1.0 - gprime
        alpha = np.where(denom > 0.02, 1.0 / np.maximum(denom, 0.02), 0.5)
        r = r + alpha * (g - r)
    resid = np.abs(radial_forward(r, params) - r_d)
    if not np.all(np.isfinite(r)) or np.any(resid >= RADIAL_TOL):
        worst = float(np.nanmax(np.where(np.isfinite(resid), resid, np.inf)))
        raise LensError(
            f"radial inverse did not converge in {RADIAL_MAX_ITER} iterations "
            f"(residual {worst:.3g}); coefficients {params.k} are invalid for this radius"
        )
    return r


def _geometry(lens, width, height):
    """Pixel center, focal scale and half-width-preserving scale for ``lens``."""
    cx, cy = lens.center
    center = (cx * width - 0.5, cy * height - 0.5)
    focal = float(lens.focal) if lens.focal is not None else float(width)
    half = width / 2.0
    model = _model_forward(lens)
    scale = half / (focal * float(model(half / focal)))
    return center, focal, scale


def _model_forward(lens):
    if isinstance(lens, Fov):
        return lambda r: fov_forward(r, lens.omega)
    return lambda r: radial_forward(r, lens)


def _model_inverse(lens):
    if isinstance(lens, Fov):
        return lambda r: fov_inverse(r, lens.omega)
    return lambda r: radial_inverse(r, lens)


def distort_radius(rho, lens: LensParams, width: int, height: int):
    """Pixel radius in the distorted image for undistorted pixel radius ``rho``."""
    if isinstance(lens, Pinhole):
        return np.asarray(rho, dtype=np.float64)
    _, focal, scale = _geometry(lens, width, height)
    return scale * focal * _model_forward(lens)(np.asarray(rho, dtype=np.float64) / focal)


def undistort_radius(rho, lens: LensParams, width: int, height: int):
    """Inverse of :func:`distort_radius`."""
    if isinstance(lens, Pinhole):
        return np.asarray(rho, dtype=np.float64)
    _, focal, scale = _geometry(lens, width, height)
    return focal * _model_inverse(lens)(np.asarray(rho, dtype=np.float64) / (scale * focal))


def warp_coordinates(shape, lens: LensParams, direction: str = DISTORT):
    """Source sampling coordinates ``(x, y)`` for every output pixel.

    ``distort`` turns an undistorted (pinhole) image into a distorted one, so each
    output pixel at distorted radius samples the source at the undistorted radius.
    ``undistort`` is the reverse.
    """
    height, width = shape[:2]
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    if isinstance(lens, Pinhole):
        return xs, ys
    if direction not in (DISTORT, UNDISTORT):
        raise ValueError(f"direction must be {DISTORT!r} or {UNDISTORT!r}")
    (cx, cy), focal, scale = _geometry(lens, width, height)
    dx = xs - cx
    dy = ys - cy
    rho = np.hypot(dx, dy)

    if isinstance(lens, Radial) and direction == UNDISTORT:
        check_radial_monotone(lens, float(rho.max()) / focal)

    if direction == DISTORT:
        src_rho = undistort_radius(rho, lens, width, height)
        if isinstance(lens, Radial):
            check_radial_monotone(lens, float(src_rho.max()) / focal)
        small = 1.0 / scale
    else:
        src_rho = distort_radius(rho, lens, width, height)
        small = scale
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(rho > 0, src_rho / np.where(rho > 0, rho, 1.0), small)
    return cx + dx * ratio, cy + dy * ratio


def bilinear_sample(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Bilinear lookup of ``img`` at float coordinates, clamping to the border."""
    height, width = img.shape[:2]
    x = np.clip(x, 0.0, width - 1)
    y = np.clip(y, 0.0, height - 1)
    x0 = np.minimum(np.floor(x).astype(np.intp), max(width - 2, 0))
    y0 = np.minimum(np.floor(y).astype(np.intp), max(height - 2, 0))
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


@functools.lru_cache(maxsize=8)
def _cached_coordinates(shape, lens, direction):
    src_x, src_y = warp_coordinates(shape, lens, direction)
    src_x.flags.writeable = False
    src_y.flags.writeable = False
    return src_x, src_y


def apply_lens(img: np.ndarray, lens: LensParams, direction: str = DISTORT) -> np.ndarray:
    img = as_image(img)
    if isinstance(lens, Pinhole):
        return img.copy()
    src_x, src_y = _cached_coordinates(img.shape[:2], lens, direction)
    return np.clip(bilinear_sample(img, src_x, src_y), 0.0, 1.0)


def lens_from_config(cfg: dict) -> LensParams:
    """Build lens parameters from a ``{"model": ..., ...}`` config stanza."""
    model = cfg.get("model", "pinhole")
    center = tuple(cfg.get("center", (0.5, 0.5)))
    focal = cfg.get("focal")
    if model == "pinhole":
        return Pinhole()
    if model == "fov":
        if "omega" not in cfg:
            raise LensError("fov lens needs 'omega'")
        return Fov(omega=float(cfg["omega"]), center=center, focal=focal)
    if model == "radial":
        k = list(cfg.get("k", [0.0, 0.0, 0.0]))
        if len(k) != 3:
            raise LensError("radial lens needs k = [k1, k2, k3]")
        return Radial(*map(float, k), center=center, focal=focal)
    raise LensError(f"unknown lens model {model!r}")


def lens_to_config(lens: LensParams) -> dict:
    if isinstance(lens, Pinhole):
        return {"model": "pinhole"}
    out = {"center": list(lens.center), "focal": lens.focal}
    if isinstance(lens, Fov):
        return {"model": "fov", "omega": lens.omega, **out}
    return {"model": "radial", "k": list(lens.k), **out}
