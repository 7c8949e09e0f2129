"""
Sequence Filter Pipeline

Reads a directory of SceneBundles, extracts geometric quality features for each
sequence, applies the heuristic gate and writes one JSON report per sequence
plus an aggregate CSV. Failures on one sequence are recorded in its report's
`errors` list and processing continues with the next one.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from src.config.experiment import QualityThresholds
from src.errors import ReconError
from src.exports.csv_export import export_filter_reports_to_csv
from src.quality.gate import extract_features, heuristic_gate
from src.storage.bundle_io import list_bundles, load_bundle

logger = logging.getLogger(__name__)


def filter_sequence(bundle_path: str, thresholds: Optional[QualityThresholds] = None,
                    seed: int = 0) -> Dict[str, Any]:
    """
    Quality features and gate verdict for one bundle directory.

    Args:
        bundle_path: Path to a SceneBundle directory
        thresholds: Gate thresholds
        seed: Seed for point subsampling

    Returns:
        dict: Report with features, verdict, reasons and errors
    """
    result = {
        "sequence": Path(bundle_path).name,
        "source_path": str(bundle_path),
        "num_frames": None,
        "accepted": False,
        "reasons": [],
        "codes": [],
        "features": None,
        "errors": []
    }

    try:
        bundle = load_bundle(bundle_path)
        result["sequence"] = bundle.name
        result["num_frames"] = bundle.num_frames

        features = extract_features(bundle, thresholds, seed=seed)
        verdict = heuristic_gate(features, thresholds)
        result["features"] = features.to_dict()
        result["accepted"] = verdict.accepted
        result["reasons"] = verdict.reasons
        result["codes"] = verdict.codes
        logger.info(f"{bundle.name}: {'accept' if verdict.accepted else 'reject'} {verdict.reasons}")
    except (ReconError, OSError) as e:
        result["errors"].append(f"Filter error: {str(e)}")
        result["reasons"].append("filter failed")
        result["codes"].append("error")
        logger.error(f"Filter failed for {bundle_path}: {e}")

    return result


def filter_directory(data_dir: str, out_dir: str, thresholds: Optional[QualityThresholds] = None,
                     seed: int = 0, db_url: Optional[str] = None) -> Dict[str, Any]:
    """
    Filter every bundle under data_dir and write reports to out_dir.

    Args:
        data_dir: A bundle directory or a directory of bundle directories
        out_dir: Output directory for <sequence>.json reports and filter_summary.csv
        thresholds: Gate thresholds
        seed: Seed for point subsampling
        db_url: Optional results registry to record the verdicts in

    Returns:
        dict: Aggregate counts and the list of reports
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    reports: List[Dict[str, Any]] = []
    for path in list_bundles(data_dir):
        report = filter_sequence(str(path), thresholds, seed)
        reports.append(report)
        with open(out / f"{report['sequence']}.json", "w", encoding="utf-8") as f:
            json.dump(report, f, indent=2, sort_keys=True)
            f.write("\n")

    with open(out / "filter_summary.csv", "w", encoding="utf-8", newline="") as f:
        f.write(export_filter_reports_to_csv(reports))

    accepted = sum(1 for r in reports if r["accepted"])
    summary = {
        "total": len(reports),
        "accepted": accepted,
        "rejected": len(reports) - accepted,
        "failed": sum(1 for r in reports if r["errors"]),
        "reports": reports
    }

    if db_url:
        from src.db.crud import record_quality_report
        from src.db.session import open_registry

        db = open_registry(db_url)
        try:
            for report in reports:
                record_quality_report(db, report)
        finally:
            db.close()
        logger.info(f"Recorded {len(reports)} verdicts in the results registry")

    return summary
