"""Stage composition, named presets, and deterministic batch execution.

A pipeline is an ordered list of stages drawn from ``lens``, ``noise``,
``demosaic``, ``white_balance`` and ``brightness``. Stages run in the order
given; by default that order must follow the direction light and data travel
through a camera (lens, then sensor noise, then ISP stages).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import cv2
import numpy as np

from . import isp
from .calibration import ReferenceStats, image_id, load_stats
from .image import ChannelStats, as_image, list_images, load_image, save_image
from .lens import DISTORT, UNDISTORT, apply_lens, lens_from_config
from .sensor import DEFAULT_SIGMA, NoiseParams, add_awgn, image_seed

log = logging.getLogger(__name__)

STAGE_KINDS = ("lens", "noise", "demosaic", "white_balance", "brightness")
STAGE_RANK = {"lens": 0, "noise": 1, "demosaic": 2, "white_balance": 2, "brightness": 2}
PAIRING_MODES = ("reference", "paired", "stochastic")

MANIFEST_NAME = "run_manifest.json"
PAIRING_NAME = "pairing_table.json"

# Placeholder lens parameters; replace with calibrated values for a real camera.
DEFAULT_FOV_OMEGA = 1.0
DEFAULT_RADIAL_K = [-0.3, 0.05, 0.0]


class ConfigError(ValueError):
    """Invalid pipeline configuration."""


@dataclass(frozen=True)
class Stage:
    kind: str
    params: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        if self.kind == "lens":
            model = self.params.get("model", "pinhole")
            return "pinhole" if model == "pinhole" else f"{model}_lens"
        if self.kind == "noise":
            return "awgn"
        if self.kind == "brightness" and self.params.get("pairing", "reference") != "reference":
            return "brightness_paired"
        return self.kind

    def to_dict(self):
        return {self.kind: dict(self.params)}


@dataclass
class PipelineConfig:
    stages: list
    seed: int = 0
    stats: Optional[str] = None
    pairing_table: Optional[str] = None
    allow_any_order: bool = False

    def to_dict(self):
        return {
            "seed": self.seed,
            "stats": self.stats,
            "pairing_table": self.pairing_table,
            "allow_any_order": self.allow_any_order,
            "stages": [s.to_dict() for s in self.stages],
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


PRESETS = {
    "pinhole": [Stage("lens", {"model": "pinhole"})],
    "fov_lens": [Stage("lens", {"model": "fov", "omega": DEFAULT_FOV_OMEGA})],
    "radial_lens": [Stage("lens", {"model": "radial", "k": DEFAULT_RADIAL_K})],
    "awgn": [Stage("noise", {"sigma": DEFAULT_SIGMA})],
    "demosaic": [Stage("demosaic", {"enabled": True})],
    "brightness": [Stage("brightness", {"mode": "per_channel", "pairing": "reference"})],
    "brightness_paired": [Stage("brightness", {"mode": "per_channel", "pairing": "stochastic"})],
    "white_balance": [Stage("white_balance", {"enabled": True})],
    "combined": [
        Stage("lens", {"model": "fov", "omega": DEFAULT_FOV_OMEGA}),
        Stage("demosaic", {"enabled": True}),
        Stage("brightness", {"mode": "per_channel", "pairing": "reference"}),
    ],
}


def preset_config(name: str, seed: int = 0, stats: Optional[str] = None) -> PipelineConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return PipelineConfig(stages=[Stage(s.kind, dict(s.params)) for s in PRESETS[name]], seed=seed, stats=stats)


def describe_presets() -> str:
    return "\n".join(
        f"  {name:<18} {' -> '.join(s.name for s in stages)}" for name, stages in PRESETS.items()
    )


def config_from_dict(d: dict) -> PipelineConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be an object")
    unknown = set(d) - {"seed", "stats", "pairing_table", "allow_any_order", "stages"}
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
    stages = []
    for i, entry in enumerate(d.get("stages", [])):
        if not isinstance(entry, dict) or len(entry) != 1:
            raise ConfigError(f"stages[{i}] must be a single-key object like {{\"noise\": {{...}}}}")
        (kind, params), = entry.items()
        if kind not in STAGE_KINDS:
            raise ConfigError(f"stages[{i}]: unknown stage {kind!r}")
        if not isinstance(params, dict):
            raise ConfigError(f"stages[{i}].{kind} must be an object")
        stages.append(Stage(kind, dict(params)))
    seed = d.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return PipelineConfig(
        stages=stages,
        seed=seed,
        stats=d.get("stats"),
        pairing_table=d.get("pairing_table"),
        allow_any_order=bool(d.get("allow_any_order", False)),
    )


def load_config(path) -> PipelineConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    cfg = config_from_dict(d)
    base = os.path.dirname(os.fspath(path))
    # Relative file references resolve against the config file's directory.
    if cfg.stats and not os.path.isabs(cfg.stats):
        cfg.stats = os.path.join(base, cfg.stats)
    if cfg.pairing_table and not os.path.isabs(cfg.pairing_table):
        cfg.pairing_table = os.path.join(base, cfg.pairing_table)
    return cfg


def make_pairing(sim_ids, real_stats: dict, mode: str, seed: int = 0) -> dict:
    """Map each simulated image id to a real image id.

    ``paired`` requires identical id sets and maps ids to themselves;
    ``stochastic`` draws a uniform partner for every sim id (in sorted id order)
    from a stream seeded by ``seed``.
    """
    sim_ids = sorted(sim_ids)
    real_ids = sorted(real_stats)
    if not sim_ids or not real_ids:
        raise ConfigError("pairing needs non-empty sim and real id lists")
    if mode == "paired":
        if set(sim_ids) != set(real_ids):
            only_sim = sorted(set(sim_ids) - set(real_ids))[:5]
            only_real = sorted(set(real_ids) - set(sim_ids))[:5]
            raise ConfigError(f"paired mode id mismatch: sim-only {only_sim}, real-only {only_real}")
        return {i: i for i in sim_ids}
    if mode == "stochastic":
        rng = np.random.default_rng(seed)
        picks = rng.integers(0, len(real_ids), size=len(sim_ids))
        return {s: real_ids[int(p)] for s, p in zip(sim_ids, picks)}
    raise ConfigError(f"pairing mode must be 'paired' or 'stochastic', got {mode!r}")


def save_pairing(pairs: dict, mode: str, seed: int, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"mode": mode, "seed": seed, "pairs": {k: pairs[k] for k in sorted(pairs)}}, fh, indent=2)
        fh.write("\n")


def load_pairing(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    if not isinstance(d, dict) or not isinstance(d.get("pairs"), dict):
        raise ConfigError(f"{path}: pairing table needs a 'pairs' object")
    return d["pairs"]


class Pipeline:
    """A validated, executable stage list with its reference statistics loaded."""

    def __init__(self, config: PipelineConfig, stats: Optional[ReferenceStats] = None):
        self.config = config
        self.stats = stats
        self._ops = [self._compile(stage) for stage in config.stages]

    @property
    def stage_names(self):
        return [s.name for s in self.config.stages]

    @property
    def pairing_mode(self) -> Optional[str]:
        for s in self.config.stages:
            if s.kind == "brightness" and s.params.get("pairing", "reference") != "reference":
                return s.params["pairing"]
        return None

    def _need_stats(self, stage):
        if self.stats is None:
            raise ConfigError(f"stage {stage.name!r} needs a stats file")
        return self.stats

    def _compile(self, stage: Stage):
        p = stage.params
        if stage.kind == "lens":
            lens = lens_from_config(p)
            direction = p.get("direction", DISTORT)
            if direction not in (DISTORT, UNDISTORT):
                raise ConfigError(f"lens direction must be {DISTORT!r} or {UNDISTORT!r}")
            return lambda img, ctx: apply_lens(img, lens, direction)
        if stage.kind == "noise":
            sigma = float(p.get("sigma", DEFAULT_SIGMA))
            NoiseParams(sigma)
            return lambda img, ctx: add_awgn(img, NoiseParams(sigma, ctx["seed"]))
        if stage.kind == "demosaic":
            if not p.get("enabled", True):
                return None
            return lambda img, ctx: isp.mosaic_demosaic(img)
        if stage.kind == "white_balance":
            if not p.get("enabled", True):
                return None
            if "gains" in p:
                gains = isp.WbGains(*map(float, p["gains"]))
            else:
                gains = self._need_stats(stage).wb_gains
            return lambda img, ctx: isp.apply_white_balance(img, gains)
        if stage.kind == "brightness":
            if not p.get("enabled", True):
                return None
            mode = p.get("mode", isp.PER_CHANNEL)
            if mode not in (isp.PER_CHANNEL, isp.LUMINANCE):
                raise ConfigError(f"brightness mode {mode!r} is not one of per_channel, luminance")
            pairing = p.get("pairing", "reference")
            if pairing not in PAIRING_MODES:
                raise ConfigError(f"brightness pairing {pairing!r} is not one of {', '.join(PAIRING_MODES)}")
            stats = self._need_stats(stage)
            if pairing == "reference":
                target = stats.channel_stats
                return lambda img, ctx: isp.match_brightness(img, target, mode)
            if not stats.per_image:
                raise ConfigError(f"{pairing} brightness pairing needs per-image stats in the stats file")
            return lambda img, ctx: isp.match_brightness_paired(img, ctx["partner"], mode)
        raise ConfigError(f"unknown stage {stage.kind!r}")

    def process(self, img: np.ndarray, rel_path: str = "", partner: Optional[ChannelStats] = None) -> np.ndarray:
        """Apply every stage to one image; ``rel_path`` seeds the noise stream."""
        ctx = {"seed": image_seed(self.config.seed, rel_path), "partner": partner}
        out = as_image(img)
        for op in self._ops:
            if op is not None:
                out = op(out, ctx)
        return out


def validate_order(stages, allow_any_order: bool = False) -> None:
    if allow_any_order:
        return
    ranks = [STAGE_RANK[s.kind] for s in stages]
    for i in range(1, len(ranks)):
        if ranks[i] < ranks[i - 1]:
            raise ConfigError(
                f"stage {stages[i].name!r} cannot follow {stages[i - 1].name!r}: "
                "order must be lens, then noise, then ISP stages (set allow_any_order to override)"
            )


def build_pipeline(config: PipelineConfig) -> Pipeline:
    validate_order(config.stages, config.allow_any_order)
    stats = load_stats(config.stats) if config.stats else None
    return Pipeline(config, stats)


@dataclass
class RunManifest:
    config_digest: str
    seed: int
    stages: list
    bit_depth: int
    resize_width: Optional[int]
    pairing_mode: Optional[str]
    images: list = field(default_factory=list)

    @property
    def inputs(self):
        return len(self.images)

    @property
    def succeeded(self):
        return sum(1 for im in self.images if im["status"] == "ok")

    @property
    def failed(self):
        return self.inputs - self.succeeded

    def to_dict(self):
        return {
            "config_digest": self.config_digest,
            "seed": self.seed,
            "stages": self.stages,
            "bit_depth": self.bit_depth,
            "resize_width": self.resize_width,
            "pairing_mode": self.pairing_mode,
            "inputs": self.inputs,
            "succeeded": self.succeeded,
            "failed": self.failed,
            "images": self.images,
        }

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def resize_to_width(img: np.ndarray, width: int) -> np.ndarray:
    """Aspect-preserving area-averaging downscale; images already narrow enough are untouched."""
    h, w = img.shape[:2]
    if width >= w:
        return img
    height = max(1, int(round(h * width / w)))
    return cv2.resize(img, (width, height), interpolation=cv2.INTER_AREA)


def output_name(rel_path: str) -> str:
    return os.path.splitext(rel_path)[0] + ".png"


def run(pipeline: Pipeline, input_dir, output_dir, jobs: int = 1, bit_depth: int = 8,
        resize_width: Optional[int] = None) -> RunManifest:
    """Process every image under ``input_dir`` into ``output_dir``.

    Each input ``a/b.jpg`` is written as ``a/b.png``. Output bytes depend only on
    the inputs, the config and the seed; ``jobs`` changes speed, not results.
    """
    names = list_images(input_dir)
    if not names:
        raise ConfigError(f"no images found in {input_dir}")
    os.makedirs(output_dir, exist_ok=True)

    cfg = pipeline.config
    partners = {}
    mode = pipeline.pairing_mode
    if mode is not None:
        sim_ids = [image_id(n) for n in names]
        if cfg.pairing_table:
            pairs = load_pairing(cfg.pairing_table)
        else:
            pairs = make_pairing(sim_ids, pipeline.stats.per_image, mode, cfg.seed)
        save_pairing(pairs, mode, cfg.seed, os.path.join(output_dir, PAIRING_NAME))
        partners = {sid: pipeline.stats.per_image.get(pairs.get(sid)) for sid in sim_ids}

    outputs = {}
    for name in names:
        outputs.setdefault(output_name(name), []).append(name)

    def work(name):
        out_rel = output_name(name)
        entry = {"input": name, "output": out_rel}
        try:
            if len(outputs[out_rel]) > 1:
                raise ConfigError(f"output name collides with {[n for n in outputs[out_rel] if n != name]}")
            partner = None
            if mode is not None:
                partner = partners.get(image_id(name))
                if partner is None:
                    raise ConfigError(f"no pairing partner stats for {image_id(name)!r}")
            img = load_image(os.path.join(input_dir, name))
            if resize_width:
                img = resize_to_width(img, resize_width)
            result = pipeline.process(img, name, partner)
            dest = os.path.join(output_dir, out_rel)
            os.makedirs(os.path.dirname(dest) or ".", exist_ok=True)
            save_image(result, dest, bit_depth)
            entry["status"] = "ok"
        except Exception as exc:  # recorded per image; the batch keeps going
            log.error("%s: %s", name, exc)
            entry["status"] = "failed"
            entry["error"] = str(exc)
        return entry

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(work, names))
    else:
        entries = [work(n) for n in names]

    manifest = RunManifest(
        config_digest=cfg.digest(),
        seed=cfg.seed,
        stages=[{"name": s.name, **s.to_dict()} for s in cfg.stages],
        bit_depth=bit_depth,
        resize_width=resize_width,
        pairing_mode=mode,
        images=entries,
    )
    manifest.write(os.path.join(output_dir, MANIFEST_NAME))
    return manifest
