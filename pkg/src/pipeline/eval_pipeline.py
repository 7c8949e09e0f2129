"""
Evaluation Pipeline

Compares prediction bundles against ground-truth bundles: pairwise pose AUC at
3 and 30 degrees, AbsRel and delta < 1.25 after median scale alignment, and
point error in unit space. Prediction and ground-truth bundles are matched by
directory name.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import torch

from src.analytics.metrics import depth_metrics, point_error, pose_auc
from src.errors import BundleFormatError, ReconError
from src.exports.csv_export import export_eval_results_to_csv
from src.geometry.scene import normalize_scene
from src.storage.bundle_io import list_bundles, load_bundle

logger = logging.getLogger(__name__)

METRIC_KEYS = ("auc_3", "auc_30", "abs_rel", "delta", "point_error")


def evaluate_sequence(pred_path: str, gt_path: str, alignment: str = "median") -> Dict[str, Any]:
    """
    Metrics of one predicted bundle against its ground truth.

    Args:
        pred_path: Prediction bundle directory
        gt_path: Ground-truth bundle directory
        alignment: Depth alignment, "median" or "none"

    Returns:
        dict: Metric values and an errors list
    """
    result = {
        "sequence": Path(gt_path).name,
        "auc_3": None,
        "auc_30": None,
        "abs_rel": None,
        "delta": None,
        "point_error": None,
        "excluded_pairs": 0,
        "errors": []
    }

    try:
        pred = load_bundle(pred_path)
        gt = load_bundle(gt_path)
        result["sequence"] = gt.name
        if pred.num_frames != gt.num_frames:
            raise BundleFormatError(f"prediction has {pred.num_frames} frames, ground truth {gt.num_frames}")
        if not pred.is_labeled or not gt.is_labeled:
            raise BundleFormatError("both bundles need cameras and depths")

        gt = normalize_scene(gt.to(torch.float64))
        if gt.num_frames >= 2:
            auc3 = pose_auc(pred.cameras, gt.cameras, 3.0)
            result["auc_3"] = auc3.auc
            result["auc_30"] = pose_auc(pred.cameras, gt.cameras, 30.0).auc
            result["excluded_pairs"] = auc3.excluded_pairs

        depth = depth_metrics(pred.depths, gt.depths, gt.valid, alignment)
        result["abs_rel"] = depth.abs_rel
        result["delta"] = depth.delta
        result["point_error"] = point_error(pred.depths, pred.cameras, gt)
    except (ReconError, OSError) as e:
        result["errors"].append(f"Eval error: {str(e)}")
        logger.error(f"Evaluation failed for {gt_path}: {e}")

    return result


def aggregate(results: List[Dict[str, Any]]) -> Dict[str, Any]:
    """Mean of every metric over the sequences where it is available."""
    row = {"sequence": "mean", "excluded_pairs": sum(r["excluded_pairs"] for r in results), "errors": []}
    for key in METRIC_KEYS:
        values = [r[key] for r in results if r[key] is not None]
        row[key] = sum(values) / len(values) if values else None
    return row


def format_table(rows: List[Dict[str, Any]]) -> str:
    header = f"{'sequence':<32} {'AUC@3':>8} {'AUC@30':>8} {'AbsRel':>8} {'delta':>8} {'PtErr':>8}"
    lines = [header, "-" * len(header)]
    for row in rows:
        cells = [
            "-" if row[key] is None else f"{row[key]:8.3f}"
            for key in METRIC_KEYS
        ]
        lines.append(f"{row['sequence']:<32} " + " ".join(f"{c:>8}" for c in cells))
    return "\n".join(lines)


def evaluate_directory(pred_dir: str, gt_dir: str, out_dir: str, alignment: str = "median",
                       db_url: Optional[str] = None) -> Dict[str, Any]:
    """
    Evaluate every ground-truth bundle that has a same-named prediction.

    Args:
        pred_dir: Prediction bundle or directory of prediction bundles
        gt_dir: Ground-truth bundle or directory of ground-truth bundles
        out_dir: Output directory for eval_results.json / eval_results.csv
        alignment: Depth alignment mode
        db_url: Optional results registry

    Returns:
        dict: Per-sequence rows, aggregate row and the text table
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    gt_paths = list_bundles(gt_dir)
    pred_root = Path(pred_dir)
    single = len(gt_paths) == 1 and gt_paths[0] == Path(gt_dir)

    results = []
    for gt_path in gt_paths:
        pred_path = pred_root if single else pred_root / gt_path.name
        results.append(evaluate_sequence(str(pred_path), str(gt_path), alignment))

    summary = {"sequences": results, "aggregate": aggregate(results)}
    with open(out / "eval_results.json", "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(out / "eval_results.csv", "w", encoding="utf-8", newline="") as f:
        f.write(export_eval_results_to_csv(results + [summary["aggregate"]]))

    if db_url:
        from src.db.crud import record_eval_result
        from src.db.session import open_registry

        db = open_registry(db_url)
        try:
            for result in results:
                record_eval_result(db, result)
        finally:
            db.close()

    summary["table"] = format_table(results + [summary["aggregate"]])
    return summary
