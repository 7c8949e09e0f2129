"""
Command-line entry point.

    python -m src.cli make-synthetic --kind orbit --seed 0 --out data/orbit-0
    python -m src.cli demo-forward --data data/orbit-0 --out runs/pred --previews
    python -m src.cli train-toy --data data --steps 500 --seed 0 --out runs/toy
    python -m src.cli train-toy --data data --ssl --init runs/toy/checkpoint --out runs/ssl
    python -m src.cli eval --pred runs/pred --gt data/orbit-0 --out runs/eval
    python -m src.cli filter --data data --out runs/filter
    python -m src.cli flops --frames 24 --tokens 672 --blocks 24 --ratio 0.25
    python -m src.cli registry --db sqlite:///recon_results.db

Every command exits 0 on success. Library errors exit 1 with a JSON object
{"error": <type>, "message": <text>} on stderr; usage errors exit 2.
"""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np
import torch
from PIL import Image

from src.analytics.aggregations import registry_report
from src.config.experiment import ModelConfig, load_train_config
from src.config.logging_config import get_logger, setup_logging
from src.config.settings import DEFAULT_SEED, RESULTS_DB, get_config, validate_config
from src.errors import ConfigError, ReconError
from src.db.session import open_registry
from src.models.recon.flops import flops_report
from src.models.recon.model import build_model, predict_bundle
from src.pipeline.eval_pipeline import evaluate_directory
from src.pipeline.filter_pipeline import filter_directory
from src.pipeline.synthetic import KINDS, make_synthetic
from src.storage.bundle_io import list_bundles, load_bundle, save_bundle
from src.storage.checkpoint import load_checkpoint
from src.training.trainer import train_toy

logger = get_logger(__name__)


def _write_json(path: Path, data) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


def depth_preview(depth: torch.Tensor) -> Image.Image:
    """8-bit grayscale preview of one depth map, near is bright."""
    d = depth.detach().to(torch.float64).cpu().numpy()
    finite = np.isfinite(d) & (d > 0)
    if not finite.any():
        return Image.fromarray(np.zeros(d.shape, dtype=np.uint8), mode="L")
    lo, hi = float(d[finite].min()), float(d[finite].max())
    scaled = np.where(finite, (hi - d) / max(hi - lo, 1e-12), 0.0)
    return Image.fromarray(np.round(255.0 * np.clip(scaled, 0.0, 1.0)).astype(np.uint8), mode="L")


def cmd_make_synthetic(args) -> int:
    bundle = make_synthetic(args.kind, seed=args.seed, num_frames=args.frames,
                            size=(args.height, args.width))
    path = save_bundle(bundle, args.out)
    print(f"Wrote {bundle.num_frames}-frame '{bundle.name}' bundle to {path}")
    return 0


def cmd_demo_forward(args) -> int:
    config = load_train_config(args.config)
    model = build_model(config.model, seed=args.seed)
    if args.checkpoint:
        load_checkpoint(model, args.checkpoint)
    model.eval()

    out = Path(args.out)
    paths = list_bundles(args.data)
    for path in paths:
        bundle = load_bundle(path)
        prediction = predict_bundle(model, bundle)
        target = out if len(paths) == 1 else out / path.name
        save_bundle(prediction, target)
        if args.previews:
            for i in range(prediction.num_frames):
                depth_preview(prediction.depths[i]).save(target / f"depth_{i}.png")
        print(f"Wrote predictions for '{bundle.name}' to {target}")
    return 0


def cmd_train_toy(args) -> int:
    config = load_train_config(args.config)
    overrides = {}
    if args.steps is not None:
        overrides["steps"] = args.steps
    if args.seed is not None:
        overrides["seed"] = args.seed
    config = replace(config, **overrides)

    bundles = [load_bundle(path) for path in list_bundles(args.data)]
    if not bundles:
        raise ReconError(f"no bundles found under {args.data}")
    result = train_toy(config, bundles, args.out, ssl=args.ssl, init=args.init)

    summary = {
        "checkpoint": str(result.checkpoint),
        "loss_log": str(result.loss_log),
        "steps": result.steps,
        "final_loss": result.final_loss,
        "initial_point_error": result.initial_point_error,
        "final_point_error": result.final_point_error,
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    summary = evaluate_directory(args.pred, args.gt, args.out, alignment=args.alignment, db_url=args.db)
    with open(Path(args.out) / "eval_table.txt", "w", encoding="utf-8") as f:
        f.write(summary["table"] + "\n")
    print(summary["table"])
    failed = [r["sequence"] for r in summary["sequences"] if r["errors"]]
    if failed:
        logger.warning(f"Evaluation failed for {len(failed)} sequence(s): {failed}")
    return 0


def cmd_filter(args) -> int:
    thresholds = load_train_config(args.config).quality if args.config else None
    summary = filter_directory(args.data, args.out, thresholds, seed=args.seed, db_url=args.db)
    for report in summary["reports"]:
        verdict = "accept" if report["accepted"] else "reject"
        reasons = "; ".join(report["reasons"])
        print(f"{report['sequence']}: {verdict}" + (f" ({reasons})" if reasons else ""))
    print(f"{summary['accepted']}/{summary['total']} sequences accepted")
    return 0


def cmd_flops(args) -> int:
    config = ModelConfig(
        num_blocks=args.blocks,
        hidden_dim=args.dim,
        num_heads=args.heads,
        num_registers=args.registers,
        register_attention_ratio=args.ratio,
    )
    report = flops_report(config, num_frames=args.frames, image_tokens=args.tokens)
    print(report.format_table())
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        _write_json(Path(args.out) / "flops.json", report.to_dict())
    return 0


def cmd_registry(args) -> int:
    db = open_registry(args.db, reset=args.reset)
    try:
        report = registry_report(db)
    finally:
        db.close()
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        _write_json(Path(args.out) / "registry_summary.json", report)
    print(json.dumps(report, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="recon", description="Multi-view reconstruction toolkit")
    parser.add_argument("--log-level", default=None, help="Log level (default RECON_LOG_LEVEL)")
    parser.add_argument("--log-file", default=None, help="Optional rotating log file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-synthetic", help="Render a synthetic SceneBundle with exact geometry")
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--frames", type=int, default=None, help="Frame count (default per kind)")
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--out", required=True, help="Output bundle directory")
    p.set_defaults(func=cmd_make_synthetic)

    p = sub.add_parser("demo-forward", help="Predict cameras and depths for bundles")
    p.add_argument("--data", required=True, help="Bundle or directory of bundles")
    p.add_argument("--config", default=None, help="Experiment config JSON")
    p.add_argument("--checkpoint", default=None, help="Checkpoint directory (default: random init)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--previews", action="store_true", help="Also write 8-bit PNG depth previews")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_demo_forward)

    p = sub.add_parser("train-toy", help="Desk-scale supervised or self-supervised training")
    p.add_argument("--config", default=None, help="Experiment config JSON")
    p.add_argument("--data", required=True, help="Bundle or directory of bundles")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--ssl", action="store_true", help="Self-distillation phase with frozen heads")
    p.add_argument("--init", default=None, help="Checkpoint to start from")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("eval", help="Pose AUC, depth and point metrics against ground truth")
    p.add_argument("--pred", required=True, help="Prediction bundle or directory")
    p.add_argument("--gt", required=True, help="Ground-truth bundle or directory")
    p.add_argument("--alignment", choices=("median", "none"), default="median")
    p.add_argument("--db", nargs="?", const=RESULTS_DB, default=None,
                   help="Record results in a registry (default URL: RECON_RESULTS_DB)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("filter", help="Geometric quality gate over a directory of bundles")
    p.add_argument("--data", required=True, help="Bundle or directory of bundles")
    p.add_argument("--config", default=None, help="Experiment config JSON (quality thresholds)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--db", nargs="?", const=RESULTS_DB, default=None,
                   help="Record results in a registry (default URL: RECON_RESULTS_DB)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("flops", help="Analytic backbone FLOPs of the register schedule")
    p.add_argument("--frames", type=int, default=24)
    p.add_argument("--tokens", type=int, default=672, help="Image tokens per frame")
    p.add_argument("--blocks", type=int, default=24)
    p.add_argument("--ratio", type=float, default=0.25, help="Fraction of global layers replaced")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--registers", type=int, default=16)
    p.add_argument("--out", default=None, help="Optional directory for flops.json")
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("registry", help="Summaries of the recorded filter verdicts and evaluations")
    p.add_argument("--db", default=RESULTS_DB, help="Registry URL (default RECON_RESULTS_DB)")
    p.add_argument("--reset", action="store_true", help="Drop and recreate the registry tables first")
    p.add_argument("--out", default=None, help="Optional directory for registry_summary.json")
    p.set_defaults(func=cmd_registry)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    settings = get_config()
    setup_logging(args.log_level or settings.LOG_LEVEL, args.log_file)

    try:
        errors = validate_config(settings)
        if errors:
            raise ConfigError("; ".join(errors))
        torch.set_num_threads(settings.NUM_THREADS)
        torch.use_deterministic_algorithms(settings.DETERMINISTIC)
        return args.func(args)
    except (ReconError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        sys.stderr.write(json.dumps({"error": type(e).__name__, "message": str(e)}, sort_keys=True) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
