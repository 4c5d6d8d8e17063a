"""Command-line entry point: synth | calibrate | eval | bench | dump-barcodes"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from app.core.config import settings
from app.core.errors import CalibrationError, ConfigError, NoFrontierPoints
from app.models.schemas import CliConfig, ExperimentSpec
from app.services.barcode import BarcodeBank
from app.services.bench import run_experiment
from app.services.dataset import (
    file_hash, ground_truth_points, load_camera_masks, load_manifest, read_fundamental,
    read_json_file, write_fundamental, write_scene_dataset,
)
from app.services.pipeline import CalibrationPipeline, gt_distances
from app.services.synth import ground_truth_frontier_points, make_scene
from app.utils.logging_config import parse_level, setup_logging

logger = logging.getLogger('silcal.cli')

# flags that map onto CliConfig fields
_CONFIG_FLAGS = (
    "method", "hypotheses", "seed", "no_refine", "key_frames", "angle_step", "checkpoint_interval",
    "inlier_threshold", "min_correlation", "top_m", "threads", "pair", "out",
)


def _pair(text: str):
    try:
        a, b = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two camera indices like 0,1, got {text!r}")
    return a, b


def build_config(args: argparse.Namespace) -> CliConfig:
    """Config file values with explicit flags on top; unknown file keys are rejected"""
    values = {}
    if getattr(args, "config", None):
        values = read_json_file(args.config)
        if not isinstance(values, dict):
            raise ConfigError(f"config file {args.config} must hold a JSON object")
    for flag in _CONFIG_FLAGS:
        value = getattr(args, flag, None)
        if value is not None:
            values[flag] = value
    return CliConfig.model_validate(values)


# ============================================================
# SUBCOMMANDS
# ============================================================

def cmd_synth(args) -> int:
    spec = read_json_file(args.spec) if args.spec else {}
    scene = make_scene(spec)
    logger.info("Step 1: Rendering silhouettes...")
    masks = scene.render_all()
    logger.info("Step 2: Extracting ground-truth frontier points...")
    try:
        frontier = ground_truth_frontier_points(masks[0], masks[1], scene.fundamental(0, 1), scene=scene)
    except NoFrontierPoints as e:
        logger.warning(f"Dataset written without frontier points: {e}")
        frontier = None
    logger.info("Step 3: Writing dataset...")
    write_scene_dataset(scene, masks, args.out, frontier)
    manifest = Path(args.out) / "manifest.json"
    print(f"{manifest} sha256={file_hash(manifest)}")
    return 0


def cmd_calibrate(args) -> int:
    cfg = build_config(args)
    pipeline = CalibrationPipeline(cfg)
    result, _ = pipeline.run(args.manifest)

    if cfg.out:
        write_fundamental(result.f, cfg.out)
        logger.info(f"Wrote F to {cfg.out}")
    else:
        print(result.f.to_json())
    if args.report:
        result.report.to_csv(args.report, timing=args.timing)
    if args.matches:
        result.table.to_csv(args.matches)
    if args.trace and result.refinement is not None:
        result.refinement.trace.to_csv(args.trace, index=False, float_format="%.10g")
    if result.gt_errors is not None:
        print(f"error mean={result.gt_mean:.6f} median={result.gt_median:.6f}")
    logger.info(f"Run metrics: {json.dumps(pipeline.metrics.get_stats())}")
    return 0


def cmd_eval(args) -> int:
    f = read_fundamental(args.f)
    manifest, root = load_manifest(args.manifest)
    pair = tuple(args.pair) if args.pair else (0, 1)
    pairs = ground_truth_points(manifest, root, pair)
    d = gt_distances(f, pairs)
    print(f"error mean={float(np.mean(d)):.6f} median={float(np.median(d)):.6f} points={len(d)}")
    return 0


def cmd_bench(args) -> int:
    spec = ExperimentSpec.model_validate(read_json_file(args.spec) if args.spec else {})
    result = run_experiment(spec, threads=args.threads or settings.threads)
    for path in result.write(args.out):
        print(path)
    return 0


def cmd_dump_barcodes(args) -> int:
    manifest, root = load_manifest(args.manifest)
    masks = load_camera_masks(manifest, root, args.camera)
    bank = BarcodeBank.build(masks, args.angle_step or settings.angle_step_deg)
    for row in bank.dump_rows(args.frame):
        print(row)
    return 0


# ============================================================
# PARSER
# ============================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="silcal", description=settings.app_name)
    parser.add_argument("--log-level", default=None, help="Overrides LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="Render a synthetic dataset")
    p.add_argument("spec", nargs="?", help="Scene spec JSON (defaults when omitted)")
    p.add_argument("--out", required=True, help="Output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate", help="Estimate F for a camera pair")
    p.add_argument("manifest")
    p.add_argument("--config", help="JSON file with default flag values")
    p.add_argument("--method", choices=["barcode", "sinha"])
    p.add_argument("--hypotheses", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-refine", action="store_const", const=True, default=None)
    p.add_argument("--key-frames", type=int)
    p.add_argument("--angle-step", type=float)
    p.add_argument("--checkpoint-interval", type=int)
    p.add_argument("--inlier-threshold", type=float)
    p.add_argument("--min-correlation", type=float)
    p.add_argument("--top-m", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--pair", type=_pair)
    p.add_argument("--out", help="F JSON output (stdout when omitted)")
    p.add_argument("--report", help="Checkpoint report CSV")
    p.add_argument("--matches", help="Match table CSV")
    p.add_argument("--trace", help="Refinement trace CSV")
    p.add_argument("--timing", action="store_true", help="Fill wall_ms in the report")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("eval", help="Ground-truth error of an F")
    p.add_argument("f", help="F JSON or text file")
    p.add_argument("manifest")
    p.add_argument("--pair", type=_pair)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="Compare methods on synthetic scenes")
    p.add_argument("spec", nargs="?", help="Experiment spec JSON (defaults when omitted)")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("dump-barcodes", help="Print candidate-line barcodes as 0/1 strings")
    p.add_argument("manifest")
    p.add_argument("--camera", type=int, default=0)
    p.add_argument("--frame", type=int)
    p.add_argument("--angle-step", type=float)
    p.set_defaults(func=cmd_dump_barcodes)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(
        log_level=parse_level(args.log_level or settings.log_level),
        log_to_file=settings.log_to_file,
        log_dir=str(settings.log_dir),
    )
    try:
        return args.func(args)
    except CalibrationError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except ValidationError as e:
        logger.error(f"Invalid input: {e}")
        return 2
    except OSError as e:
        logger.error(f"I/O failure: {e}")
        return 3
    except Exception as e:
        logger.error(f"Unexpected failure: {e}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
