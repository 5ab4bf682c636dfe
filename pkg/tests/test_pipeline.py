import json
import os

import numpy as np
import pytest

from camsim.calibration import calibrate, calibrate_directory, save_stats
from camsim.image import load_image, quantize, save_image
from camsim.pipeline import (
    MANIFEST_NAME,
    PAIRING_NAME,
    PRESETS,
    ConfigError,
    PipelineConfig,
    Stage,
    build_pipeline,
    config_from_dict,
    load_config,
    make_pairing,
    preset_config,
    resize_to_width,
    run,
    validate_order,
)


def tree_bytes(root):
    out = {}
    for d, _, files in os.walk(root):
        for f in files:
            p = os.path.join(d, f)
            out[os.path.relpath(p, root)] = open(p, "rb").read()
    return out


@pytest.fixture
def image_dir(tmp_path, rng):
    d = tmp_path / "in"
    (d / "sub").mkdir(parents=True)
    for i in range(4):
        save_image(rng.uniform(0.1, 0.9, (20, 30, 3)), d / f"img{i}.png")
    save_image(rng.uniform(0.1, 0.9, (21, 31, 3)), d / "sub" / "odd.png")
    return d


@pytest.fixture
def stats_file(tmp_path, rng):
    real = tmp_path / "real"
    real.mkdir()
    for i in range(3):
        save_image(rng.uniform(0.2, 0.7, (16, 16, 3)) * [1.1, 1.0, 0.8], real / f"r{i}.png")
    stats, _ = calibrate_directory(real)
    path = tmp_path / "stats.json"
    save_stats(stats, path)
    return path


def test_preset_contents():
    cfg = preset_config("awgn", seed=3)
    assert len(cfg.stages) == 1
    assert cfg.stages[0].kind == "noise" and cfg.stages[0].params["sigma"] == 0.01
    assert [s.name for s in PRESETS["combined"]] == ["fov_lens", "demosaic", "brightness"]
    assert set(PRESETS) >= {"pinhole", "fov_lens", "radial_lens", "awgn", "demosaic", "brightness",
                            "brightness_paired", "white_balance", "combined"}


def test_presets_do_not_share_state():
    a = preset_config("awgn")
    a.stages[0].params["sigma"] = 0.5
    assert preset_config("awgn").stages[0].params["sigma"] == 0.01


def test_empty_pipeline_is_identity(image_dir, tmp_path):
    pipe = build_pipeline(PipelineConfig(stages=[], seed=0))
    img = load_image(image_dir / "img0.png")
    assert np.array_equal(pipe.process(img, "img0.png"), img)
    run(pipe, image_dir, tmp_path / "out")
    assert open(image_dir / "img0.png", "rb").read() != b""
    assert np.array_equal(load_image(tmp_path / "out" / "img0.png"), img)


def test_order_validation():
    stages = [Stage("noise", {"sigma": 0.01}), Stage("lens", {"model": "fov", "omega": 1.0})]
    with pytest.raises(ConfigError, match="fov_lens"):
        validate_order(stages)
    validate_order(stages, allow_any_order=True)
    validate_order([Stage("lens"), Stage("noise"), Stage("brightness"), Stage("demosaic")])


def test_missing_stats():
    with pytest.raises(ConfigError, match="stats"):
        build_pipeline(preset_config("brightness", seed=0))


def test_config_parsing(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({
        "seed": 5, "stats": "s.json",
        "stages": [{"lens": {"model": "radial", "k": [-0.2, 0.0, 0.0]}}, {"noise": {"sigma": 0.02}}],
    }))
    cfg = load_config(tmp_path / "c.json")
    assert cfg.seed == 5 and cfg.stats == os.path.join(str(tmp_path), "s.json")
    assert [s.name for s in cfg.stages] == ["radial_lens", "awgn"]
    for bad in ({"stagez": []}, {"stages": [{"blur": {}}]}, {"stages": [{"noise": {}, "lens": {}}]},
                {"seed": -1}):
        with pytest.raises(ConfigError):
            config_from_dict(bad)


def test_invalid_lens_params_rejected():
    with pytest.raises(ValueError):
        build_pipeline(PipelineConfig([Stage("lens", {"model": "fov", "omega": 4.0})]))
    with pytest.raises(ValueError):
        build_pipeline(PipelineConfig([Stage("noise", {"sigma": -1.0})]))


def test_digest_stable():
    assert preset_config("combined", 1).digest() == preset_config("combined", 1).digest()
    assert preset_config("combined", 1).digest() != preset_config("combined", 2).digest()


def test_make_pairing():
    real = {"a": None, "b": None, "c": None}
    assert make_pairing(["a", "b", "c"], real, "paired") == {"a": "a", "b": "b", "c": "c"}
    with pytest.raises(ConfigError):
        make_pairing(["a", "x"], real, "paired")
    p1 = make_pairing([f"s{i}" for i in range(50)], real, "stochastic", seed=9)
    p2 = make_pairing([f"s{i}" for i in reversed(range(50))], real, "stochastic", seed=9)
    assert p1 == p2 and set(p1.values()) <= set(real)
    assert set(make_pairing(["s1", "s2"], {"only": None}, "stochastic", seed=1).values()) == {"only"}


def test_paired_brightness_run(image_dir, tmp_path, rng):
    real = {}
    for i in range(4):
        real[f"img{i}"] = rng.uniform(0.3, 0.6, (8, 8, 3))
    real["sub/odd"] = rng.uniform(0.3, 0.6, (8, 8, 3))
    stats = calibrate(list(real.values()), ids=list(real))
    save_stats(stats, tmp_path / "s.json")
    cfg = PipelineConfig([Stage("brightness", {"mode": "per_channel", "pairing": "paired"})],
                         seed=1, stats=str(tmp_path / "s.json"))
    m = run(build_pipeline(cfg), image_dir, tmp_path / "out")
    assert m.failed == 0
    table = json.load(open(tmp_path / "out" / PAIRING_NAME))
    assert table["pairs"]["img1"] == "img1"
    out = load_image(tmp_path / "out" / "img1.png").reshape(-1, 3)
    np.testing.assert_allclose(out.mean(axis=0), stats.per_image["img1"].mean, atol=3e-3)


def test_stochastic_pairing_run(image_dir, tmp_path, stats_file):
    cfg = preset_config("brightness_paired", seed=4, stats=str(stats_file))
    m = run(build_pipeline(cfg), image_dir, tmp_path / "out")
    assert m.failed == 0 and m.pairing_mode == "stochastic"
    pairs = json.load(open(tmp_path / "out" / PAIRING_NAME))["pairs"]
    assert set(pairs.values()) <= {"r0", "r1", "r2"}


def test_rerun_byte_identical_and_jobs_invariant(image_dir, tmp_path, stats_file):
    def go(seed, jobs, name):
        cfg = PipelineConfig(preset_config("combined").stages + [], seed=seed, stats=str(stats_file))
        cfg.stages.insert(1, Stage("noise", {"sigma": 0.01}))
        run(build_pipeline(cfg), image_dir, tmp_path / name, jobs=jobs)
        return tree_bytes(tmp_path / name)

    a, b, c = go(1, 1, "a"), go(1, 1, "b"), go(1, 4, "c")
    assert a == b == c
    d = go(2, 1, "d")
    assert d["img0.png"] != a["img0.png"]


def test_per_image_failure_recorded(image_dir, tmp_path):
    (image_dir / "broken.png").write_bytes(b"nope")
    save_image(np.zeros((4, 4, 3)), image_dir / "img0.jpg")  # collides with img0.png
    m = run(build_pipeline(preset_config("awgn", 1)), image_dir, tmp_path / "out", jobs=2)
    manifest = json.load(open(tmp_path / "out" / MANIFEST_NAME))
    assert manifest["inputs"] == 7 and manifest["failed"] == 3 and m.succeeded == 4
    failed = sorted(e["input"] for e in manifest["images"] if e["status"] == "failed")
    assert failed == ["broken.png", "img0.jpg", "img0.png"]
    assert (tmp_path / "out" / "sub" / "odd.png").exists()


def test_16_bit_output(image_dir, tmp_path):
    run(build_pipeline(preset_config("pinhole", 0)), image_dir, tmp_path / "out", bit_depth=16)
    src = load_image(image_dir / "img0.png")
    out = load_image(tmp_path / "out" / "img0.png")
    assert np.array_equal(quantize(out, 8), quantize(src, 8))


def test_resize_width(image_dir, tmp_path):
    img = np.random.default_rng(0).random((60, 100, 3))
    assert resize_to_width(img, 50).shape == (30, 50, 3)
    assert resize_to_width(img, 200) is img
    run(build_pipeline(preset_config("pinhole", 0)), image_dir, tmp_path / "out", resize_width=15)
    assert load_image(tmp_path / "out" / "img0.png").shape == (10, 15, 3)


def test_noise_depends_on_path_not_order(tmp_path):
    pipe = build_pipeline(preset_config("awgn", 11))
    img = np.full((16, 16, 3), 0.5)
    assert np.array_equal(pipe.process(img, "a.png"), pipe.process(img, "a.png"))
    assert not np.array_equal(pipe.process(img, "a.png"), pipe.process(img, "b.png"))


def test_white_balance_gain_override():
    pipe = build_pipeline(PipelineConfig([Stage("white_balance", {"gains": [1.0, 1.0, 1.0]})]))
    img = np.full((4, 4, 3), 0.3) * [1.2, 1.0, 0.8]
    np.testing.assert_allclose(pipe.process(img), 0.3)
