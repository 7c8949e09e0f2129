"""
Registry writes and queries for quality reports and evaluation results.
"""

import json
from typing import Any, Dict, List, Optional

from sqlalchemy.orm import Session

from src.db.models import EvalResult, QualityReport, RejectionReason, Verdict


def record_quality_report(db: Session, report: Dict[str, Any]) -> QualityReport:
    """Store one filter report (as produced by the filter pipeline)."""
    features = report.get("features") or {}
    row = QualityReport(
        sequence=report["sequence"],
        source_path=report["source_path"],
        verdict=Verdict.ACCEPT if report["accepted"] else Verdict.REJECT,
        num_frames=report.get("num_frames"),
        registration_ratio=features.get("registration_ratio"),
        fov_x=features.get("fov_x"),
        fov_y=features.get("fov_y"),
        valid_depth_fraction=features.get("valid_depth_fraction"),
        median_max_parallax=features.get("median_max_parallax"),
        linearity=features.get("linearity"),
        noise_fraction=features.get("noise_fraction"),
        features_json=json.dumps(features, sort_keys=True),
    )
    for code, message in zip(report.get("codes", []), report.get("reasons", [])):
        row.reasons.append(RejectionReason(code=code, message=message))
    db.add(row)
    db.commit()
    db.refresh(row)
    return row


def record_eval_result(db: Session, result: Dict[str, Any]) -> EvalResult:
    """Store one per-sequence evaluation row."""
    row = EvalResult(
        sequence=result["sequence"],
        auc_3=result.get("auc_3"),
        auc_30=result.get("auc_30"),
        abs_rel=result.get("abs_rel"),
        delta=result.get("delta"),
        point_error=result.get("point_error"),
        excluded_pairs=result.get("excluded_pairs", 0),
        succeeded=not result.get("errors"),
        error="; ".join(result.get("errors", [])) or None,
    )
    db.add(row)
    db.commit()
    db.refresh(row)
    return row


def list_quality_reports(db: Session, verdict: Optional[Verdict] = None) -> List[QualityReport]:
    query = db.query(QualityReport)
    if verdict is not None:
        query = query.filter(QualityReport.verdict == verdict)
    return query.order_by(QualityReport.sequence, QualityReport.id).all()


def list_eval_results(db: Session, sequence: Optional[str] = None) -> List[EvalResult]:
    query = db.query(EvalResult)
    if sequence:
        query = query.filter(EvalResult.sequence == sequence)
    return query.order_by(EvalResult.sequence, EvalResult.id).all()
