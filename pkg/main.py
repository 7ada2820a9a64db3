#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
DMN Segmentation - Main Entry Point
===================================

Command-line surface for referring-expression segmentation with a Dynamic
Multimodal Network: synthetic data generation, two-stage training,
evaluation, single-image prediction, the SRU/LSTM benchmark and ablations.

USAGE:
    python main.py gen-data --out data/train --count 2000 --size 64x64 --seed 0
    python main.py train --config tiny --data data/train --stage low --out dmn_low.ckpt
    python main.py train --config tiny --data data/train --stage high --resume dmn_low.ckpt --out dmn_high.ckpt
    python main.py eval --ckpt dmn_high.ckpt --data data/test --threshold auto --calib data/train
    python main.py predict --ckpt dmn_high.ckpt --image scene.ppm --query "red circle" --out heatmap.pgm
    python main.py bench --d 64 --T 100 --reps 50 --out bench.csv
    python main.py ablate --config tiny --data data/train --val data/test --out ablation.csv

EXIT CODES:
    0 success, 1 contract violation (bad shapes, arguments, configs), 2 I/O error
"""

import os

# BLAS thread pinning must happen before numpy is imported.
for _variable in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_variable, "1")

import sys
import logging
import argparse
from pathlib import Path
from datetime import datetime
from typing import List, Optional

logger = logging.getLogger("dmn_segmentation.main")

try:
    from dmn_segmentation import __version__
except ImportError as e:
    print(f"Failed to import dmn_segmentation package: {e}")
    print("Make sure you're running from the correct directory and all dependencies are installed.")
    print("Try: pip install -r requirements.txt")
    sys.exit(1)

from dmn_segmentation.core.errors import ContractViolation, DmnIOError


def setup_logging(command: str, debug: bool = False, logs_dir: Optional[Path] = None) -> Path:
    """
    Timestamped log file under logs/ plus stderr; returns the log path.
    """
    logs_dir = logs_dir or Path.cwd() / "logs"
    logs_dir.mkdir(parents=True, exist_ok=True)
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    log_path = logs_dir / f"dmn_{command}_{timestamp}.log"

    logging.basicConfig(
        level=logging.DEBUG if debug else logging.INFO,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        handlers=[
            logging.FileHandler(log_path, mode="w", encoding="utf-8"),
            logging.StreamHandler(sys.stderr)
        ],
        force=True,
    )
    return log_path


def load_env_file(env_file: Path = Path(".env")) -> int:
    """Load KEY=VALUE lines from .env without overriding the real environment."""
    loaded = 0
    if not env_file.exists():
        return loaded
    try:
        for line in env_file.read_text(encoding="utf-8").splitlines():
            if not line.strip() or line.strip().startswith("#"):
                continue
            if "=" in line:
                key, value = line.split("=", 1)
                os.environ.setdefault(key.strip(), value.strip())
                loaded += 1
        logger.info(f"Loaded environment variables from {env_file}")
    except Exception as e:
        logger.warning(f"Failed to parse .env file: {e}")
    return loaded


def parse_size(text: str) -> tuple:
    """'64x48' -> (height 64, width 48)."""
    try:
        height, width = (int(part) for part in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like HxW, got {text!r}")
    if height < 1 or width < 1:
        raise argparse.ArgumentTypeError(f"size must be positive, got {text!r}")
    return height, width


def parse_threshold(text: str):
    if text == "auto":
        return text
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"threshold must be a number in [0, 1] or 'auto', got {text!r}")
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"threshold must be in [0, 1], got {value}")
    return value


def parse_um_stages(text: str):
    return int(text) if text.isdigit() else text


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------

def cmd_gen_data(args: argparse.Namespace) -> int:
    from dmn_segmentation.data import SceneSpec, generate_examples, write_dataset

    height, width = args.size
    spec = SceneSpec(height=height, width=width, min_objects=args.min_objects, max_objects=args.max_objects)
    examples = generate_examples(args.count, spec, args.seed)
    manifest = write_dataset(examples, args.out)
    print(f"Wrote {len(examples)} examples ({height}x{width}, seed {args.seed}) to {manifest}")
    return 0


def _build_config(args: argparse.Namespace):
    from dmn_segmentation.core.config import AblationFlags, load_config

    config = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "stages", None) is not None:
        changes["um_stages"] = args.stages
    if getattr(args, "cell", None) is not None:
        changes["cell"] = args.cell
    if getattr(args, "ablation", None) is not None:
        changes["ablation"] = AblationFlags.for_mode(args.ablation)
    if getattr(args, "end_to_end", False):
        changes["end_to_end"] = True
    return config.replace(**changes) if changes else config


def cmd_train(args: argparse.Namespace) -> int:
    from dmn_segmentation.core.report_formatter import TableFormatter
    from dmn_segmentation.core.training import train
    from dmn_segmentation.data import load_dataset

    config = _build_config(args).replace(stage=args.stage)
    train_set = load_dataset(args.data)
    val_set = load_dataset(args.val) if args.val else None
    out = args.out or f"dmn_{args.stage}.ckpt"

    result = train(config, train_set, val_set, resume=args.resume, out=out, epochs=args.epochs)
    print(TableFormatter.frame_table(result.curve, title=f"Stage {args.stage} loss curve"))
    print(TableFormatter.create_summary_box(
        "Parameters", [(name, f"{count:,}") for name, count in result.model.parameter_report().items()]))
    print(f"Checkpoint written: {result.checkpoint}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    from dmn_segmentation.core.metrics import calibrate_threshold, evaluate
    from dmn_segmentation.core.model import DmnModel
    from dmn_segmentation.core.report_formatter import ReportOutput, TableFormatter
    from dmn_segmentation.data import load_dataset

    model = DmnModel.from_checkpoint(args.ckpt)
    stage = args.stage or model.config.stage
    dataset = load_dataset(args.data)

    threshold = args.threshold
    if threshold == "auto":
        if not args.calib:
            raise ContractViolation("--threshold auto needs --calib DIR (the training split)")
        threshold = calibrate_threshold(model, load_dataset(args.calib), stage, args.workers)

    report = evaluate(model, dataset, threshold, stage, args.workers)
    output = ReportOutput("eval", log_to_file=not args.no_report_file)
    try:
        output.section_header(f"EVALUATION ({Path(args.ckpt).name}, stage {stage})")
        output.output(TableFormatter.create_summary_box(f"{len(dataset)} examples from {args.data}",
                                                        report.summary_rows()))
    finally:
        output.close()
    if args.per_example:
        report.to_frame().to_csv(args.per_example, index=False)
        logger.info(f"Per-example IoU written: {args.per_example}")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    from dmn_segmentation.core.metrics import full_resolution_heatmap, intersection_union
    from dmn_segmentation.core.model import DmnModel
    from dmn_segmentation.core.upsample import binarize
    from dmn_segmentation.core.utils import side_by_side
    from dmn_segmentation.data import read_mask, read_ppm, write_heatmap, write_mask, write_ppm

    model = DmnModel.from_checkpoint(args.ckpt)
    image = read_ppm(args.image)
    heatmap = full_resolution_heatmap(model, image, args.query)
    write_heatmap(heatmap, args.out)
    print(f"Heatmap written: {args.out}")

    mask = binarize(heatmap, args.threshold)
    if args.mask_out:
        write_mask(mask, args.mask_out)
        print(f"Mask written: {args.mask_out}")
    if args.gt:
        gt = read_mask(args.gt)
        intersection, union = intersection_union(mask, gt)
        iou = intersection / union if union else float("nan")
        strip_path = Path(args.out).with_name(Path(args.out).stem + "_strip.ppm")
        write_ppm(side_by_side(image, heatmap, gt), strip_path)
        print(f"IoU against {args.gt}: {iou:.4f}")
        print(f"Side-by-side strip written: {strip_path}")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    from dmn_segmentation.core.benchmark import bench_recurrent
    from dmn_segmentation.core.report_formatter import ReportOutput

    report = bench_recurrent(args.d, args.T, args.reps, args.layers, args.seed)
    csv_path, text_path = report.write(args.out)
    output = ReportOutput("bench", log_to_file=not args.no_report_file)
    try:
        output.section_header("SRU vs LSTM")
        output.output(report.to_text())
    finally:
        output.close()
    print(f"Benchmark written: {csv_path} and {text_path}")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    from dmn_segmentation.core.ablation import run_ablation
    from dmn_segmentation.core.report_formatter import ReportOutput, TableFormatter
    from dmn_segmentation.data import load_dataset

    config = _build_config(args)
    train_set = load_dataset(args.data)
    eval_set = load_dataset(args.val)
    table = run_ablation(config, train_set, eval_set, args.modes, args.workers)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(out, index=False)
    text = TableFormatter.frame_table(table.drop(columns=["mode"]), title="Ablation study", float_format="{:.4f}")
    out.with_suffix(".txt").write_text(text + "\n", encoding="utf-8")

    output = ReportOutput("ablate", log_to_file=not args.no_report_file)
    try:
        output.section_header("ABLATIONS")
        output.output(text)
    finally:
        output.close()
    print(f"Ablation table written: {out}")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "bench": cmd_bench,
    "ablate": cmd_ablate,
}


def build_parser() -> argparse.ArgumentParser:
    from dmn_segmentation.core.ablation import ALL_MODES
    from dmn_segmentation.core.config import ABLATION_MODES, PRESETS, STAGES
    from dmn_segmentation.core.recurrent import SUPPORTED_CELLS

    parser = argparse.ArgumentParser(
        description="DMN Segmentation - referring-expression segmentation at desk scale",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="Configs: a JSON file mirroring DmnConfig, or a preset: " + ", ".join(PRESETS),
    )
    parser.add_argument("--version", action="version", version=f"dmn_segmentation {__version__}")
    parser.add_argument("--debug", action="store_true", help="Enable debug logging")
    subparsers = parser.add_subparsers(dest="command", required=True)

    gen = subparsers.add_parser("gen-data", help="Generate a synthetic shapes-and-queries dataset")
    gen.add_argument("--out", required=True, help="Output directory")
    gen.add_argument("--count", type=int, required=True, help="Number of examples")
    gen.add_argument("--size", type=parse_size, default=(32, 32), help="Image size HxW (default: 32x32)")
    gen.add_argument("--seed", type=int, default=0, help="Master seed")
    gen.add_argument("--min-objects", type=int, default=2)
    gen.add_argument("--max-objects", type=int, default=4)

    train = subparsers.add_parser("train", help="Run one training stage")
    train.add_argument("--config", default=None, help="Config JSON or preset name (default: desk_scale)")
    train.add_argument("--data", required=True, help="Training manifest directory")
    train.add_argument("--val", default=None, help="Validation manifest directory")
    train.add_argument("--stage", choices=STAGES, default="low")
    train.add_argument("--resume", default=None, help="Checkpoint to start from (required for stage high)")
    train.add_argument("--seed", type=int, default=None)
    train.add_argument("--out", default=None, help="Checkpoint path (default: dmn_<stage>.ckpt)")
    train.add_argument("--epochs", type=int, default=None, help="Override the stage's epoch count")
    train.add_argument("--stages", type=parse_um_stages, default=None,
                       help="Upsampling stages: full, log2 or a count")
    train.add_argument("--cell", choices=SUPPORTED_CELLS, default=None, help="Recurrent cell for LM and SM")
    train.add_argument("--ablation", choices=ABLATION_MODES, default=None)
    train.add_argument("--end-to-end", action="store_true", help="Stage high also updates VM, LM and SM")

    ev = subparsers.add_parser("eval", help="Cumulative mIoU and Pr@X on a dataset")
    ev.add_argument("--ckpt", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--threshold", type=parse_threshold, default=0.5, help="Threshold in [0, 1] or 'auto'")
    ev.add_argument("--calib", default=None, help="Calibration split for --threshold auto")
    ev.add_argument("--stage", choices=STAGES, default=None, help="Default: the checkpoint's stage")
    ev.add_argument("--workers", type=int, default=1)
    ev.add_argument("--per-example", default=None, help="CSV of per-example IoU")
    ev.add_argument("--no-report-file", action="store_true")

    pred = subparsers.add_parser("predict", help="Heatmap for one image and query")
    pred.add_argument("--ckpt", required=True)
    pred.add_argument("--image", required=True, help="PPM image")
    pred.add_argument("--query", required=True)
    pred.add_argument("--out", required=True, help="Heatmap PGM")
    pred.add_argument("--threshold", type=parse_threshold, default=0.5)
    pred.add_argument("--mask-out", default=None, help="Binarized mask PGM")
    pred.add_argument("--gt", default=None, help="Ground-truth mask PGM for IoU and a side-by-side strip")

    bench = subparsers.add_parser("bench", help="SRU vs LSTM forward timing")
    bench.add_argument("--d", type=int, default=64, help="Input and hidden size")
    bench.add_argument("--T", type=int, default=100, help="Sequence length")
    bench.add_argument("--reps", type=int, default=50, help="Timed repetitions (>= 10)")
    bench.add_argument("--layers", type=int, default=2)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", default="bench.csv")
    bench.add_argument("--no-report-file", action="store_true")

    ablate = subparsers.add_parser("ablate", help="Train and compare the ablation variants")
    ablate.add_argument("--config", default=None)
    ablate.add_argument("--data", required=True, help="Training manifest directory")
    ablate.add_argument("--val", required=True, help="Evaluation manifest directory")
    ablate.add_argument("--out", default="ablation.csv")
    ablate.add_argument("--modes", nargs="+", choices=ALL_MODES, default=None)
    ablate.add_argument("--seed", type=int, default=None)
    ablate.add_argument("--workers", type=int, default=1)
    ablate.add_argument("--no-report-file", action="store_true")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)

    log_path = setup_logging(args.command.replace("-", "_"), args.debug)
    if args.debug:
        logger.debug("Debug logging enabled")
    load_env_file()
    logger.info(f"dmn_segmentation v{__version__}: {args.command} (log file: {log_path})")

    try:
        code = COMMANDS[args.command](args)
        logger.info(f"{args.command} finished")
        return code
    except KeyboardInterrupt:
        print("\nInterrupted by user.")
        return 1
    except ContractViolation as e:
        logger.error(f"{args.command}: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return 1
    except (DmnIOError, OSError) as e:
        logger.error(f"{args.command}: {e}")
        print(f"I/O error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        logger.error(f"Unexpected error in {args.command}: {e}", exc_info=True)
        print(f"Unexpected error: {e}")
        print("Check the log file for more details.")
        return 1


if __name__ == "__main__":
    sys.exit(main())
