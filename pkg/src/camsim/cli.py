"""Command-line entry point: ``camsim <subcommand> ...``.

Exit status is 0 on success, 1 if any item failed or an input was invalid, and
2 on usage errors. Diagnostics go to stderr; data goes to stdout or files.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import evaluation, pipeline
from .calibration import StatsFormatError, calibrate_directory, save_stats
from .image import ImageError, compute_histogram, list_images, load_image, write_histogram_csv
from .lens import LensError
from .sensor import estimate_noise

log = logging.getLogger("camsim")

PRESET_HELP = "presets (name and stage order):\n" + pipeline.describe_presets()


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _seed(text):
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(
        prog="camsim",
        description="Camera-model augmentation, calibration statistics and sim-to-real evaluation.",
        epilog=PRESET_HELP,
        formatter_class=fmt,
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("calibrate", help="derive reference statistics from real images",
                       description="Derive reference statistics (channel mean/std, white-balance gains, "
                                   "noise level) from a directory of real images.")
    p.add_argument("--input", required=True, metavar="DIR")
    p.add_argument("--output", required=True, metavar="STATS_JSON")
    p.add_argument("--max-images", type=_positive_int, metavar="N",
                   help="use only the first N images in sorted order")

    p = sub.add_parser("augment", help="run a preset or configured pipeline over a directory",
                       description="Apply a camera-model pipeline to every image in a directory.",
                       epilog=PRESET_HELP, formatter_class=fmt)
    p.add_argument("--input", required=True, metavar="DIR")
    p.add_argument("--output", required=True, metavar="DIR")
    which = p.add_mutually_exclusive_group(required=True)
    which.add_argument("--preset", choices=sorted(pipeline.PRESETS), metavar="NAME")
    which.add_argument("--config", metavar="FILE", help="pipeline config JSON")
    p.add_argument("--seed", type=_seed, help="global seed (required with --preset; overrides the config)")
    p.add_argument("--stats", metavar="FILE", help="stats file from 'calibrate'")
    p.add_argument("--jobs", type=_positive_int, default=1, metavar="N",
                   help="worker threads; does not change outputs")
    p.add_argument("--bit-depth", type=int, choices=(8, 16), default=8)
    p.add_argument("--resize-width", type=_positive_int, metavar="W",
                   help="area-averaging downscale to width W before the pipeline (e.g. 957)")

    p = sub.add_parser("histogram", help="export per-channel histograms as CSV and a figure",
                       description="Per-channel histogram of an image, or pooled over a directory.")
    p.add_argument("--input", required=True, metavar="PATH")
    p.add_argument("--bins", type=_positive_int, default=256)
    p.add_argument("--output", required=True, metavar="CSV")
    p.add_argument("--overlay", action="append", default=[], metavar="PATH",
                   help="extra image or directory drawn in the figure for comparison (repeatable)")
    p.add_argument("--no-plot", action="store_true", help="skip the PNG figure")

    p = sub.add_parser("estimate-noise", help="blind AWGN sigma estimate of one image",
                       description="Print the blind noise estimate of one image as sigma_estimate=<float>.")
    p.add_argument("--input", required=True, metavar="IMG")

    p = sub.add_parser("evaluate", help="per-class performance difference between two record sets",
                       description="Compare per-image perception metrics of two datasets.")
    p.add_argument("--records-a", required=True, metavar="A_CSV")
    p.add_argument("--records-b", required=True, metavar="B_CSV")
    p.add_argument("--mode", choices=(evaluation.PAIRED, evaluation.BATCHED), required=True)
    p.add_argument("--output-dir", required=True, metavar="DIR")
    p.add_argument("--no-plot", action="store_true", help="skip the PNG figure")
    return parser


def _histogram_of(path, bins):
    if os.path.isdir(path):
        names = list_images(path)
        if not names:
            raise ImageError(f"{path}: no images")
        hist = None
        for name in names:
            h = compute_histogram(load_image(os.path.join(path, name)), bins)
            hist = h if hist is None else hist + h
        return hist
    return compute_histogram(load_image(path), bins)


def cmd_calibrate(args):
    stats, skipped = calibrate_directory(args.input, args.max_images)
    save_stats(stats, args.output)
    log.info("calibrated from %d image(s)", stats.n_images)
    for name in skipped:
        print(f"warning: skipped unreadable image {name}", file=sys.stderr)
    return 1 if skipped else 0


def cmd_augment(args, parser):
    if args.preset:
        if args.seed is None:
            parser.error("augment --preset requires --seed")
        cfg = pipeline.preset_config(args.preset, seed=args.seed, stats=args.stats)
    else:
        cfg = pipeline.load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.stats:
            cfg.stats = args.stats
    pipe = pipeline.build_pipeline(cfg)
    manifest = pipeline.run(pipe, args.input, args.output, jobs=args.jobs,
                            bit_depth=args.bit_depth, resize_width=args.resize_width)
    log.info("stages: %s", ", ".join(pipe.stage_names) or "(none)")
    log.info("%d/%d image(s) succeeded", manifest.succeeded, manifest.inputs)
    if manifest.failed:
        print(f"error: {manifest.failed} of {manifest.inputs} image(s) failed; see "
              f"{os.path.join(args.output, pipeline.MANIFEST_NAME)}", file=sys.stderr)
        return 1
    return 0


def cmd_histogram(args):
    hist = _histogram_of(args.input, args.bins)
    write_histogram_csv(hist, args.output)
    if not args.no_plot:
        from .plotting import plot_histograms

        hists = {os.path.basename(os.path.normpath(args.input)): hist}
        for path in args.overlay:
            hists[os.path.basename(os.path.normpath(path))] = _histogram_of(path, args.bins)
        plot_histograms(hists, os.path.splitext(args.output)[0] + ".png")
    return 0


def cmd_estimate_noise(args):
    print(f"sigma_estimate={estimate_noise(load_image(args.input))!r}")
    return 0


def cmd_evaluate(args):
    a = evaluation.load_records(args.records_a)
    b = evaluation.load_records(args.records_b)
    report = evaluation.contextual_difference(a, b, args.mode)
    evaluation.render_report(report, args.output_dir)
    if not args.no_plot:
        from .plotting import plot_difference_report

        plot_difference_report(report, os.path.join(args.output_dir, "report_class.png"))
    for cls in sorted(report.per_class):
        print(f"{cls},{report.per_class[cls]!r}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "calibrate":
            return cmd_calibrate(args)
        if args.command == "augment":
            return cmd_augment(args, parser)
        if args.command == "histogram":
            return cmd_histogram(args)
        if args.command == "estimate-noise":
            return cmd_estimate_noise(args)
        if args.command == "evaluate":
            return cmd_evaluate(args)
    except (ImageError, StatsFormatError, LensError, pipeline.ConfigError,
            evaluation.RecordError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    parser.error(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
