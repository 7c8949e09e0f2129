"""
Summaries over the results registry.

This module computes acceptance statistics for filtered sequences and mean
evaluation metrics from the recorded results.
"""

from sqlalchemy.orm import Session
from sqlalchemy import func
from typing import Dict, List, Any
from src.db.crud import list_eval_results, list_quality_reports
from src.db.models import EvalResult, QualityReport, RejectionReason, Verdict

def acceptance_summary(db: Session) -> Dict[str, Any]:
    """Counts and acceptance rate of all filtered sequences."""
    total = db.query(QualityReport).count()
    accepted = db.query(QualityReport).filter(QualityReport.verdict == Verdict.ACCEPT).count()
    acceptance_rate = (accepted / total * 100) if total > 0 else 0.0

    return {
        "total_sequences": total,
        "accepted": accepted,
        "rejected": total - accepted,
        "acceptance_rate": round(acceptance_rate, 1)
    }

def rejection_breakdown(db: Session) -> Dict[str, List]:
    """How often each rejection reason fired, most frequent first."""
    result = db.query(
        RejectionReason.code,
        func.count(RejectionReason.id).label('count')
    ).group_by(RejectionReason.code).order_by(
        func.count(RejectionReason.id).desc(), RejectionReason.code
    ).all()

    return {
        "codes": [row.code for row in result],
        "counts": [row.count for row in result]
    }

def feature_means(db: Session) -> Dict[str, Any]:
    """Mean of the stored quality features per verdict."""
    summary = {}
    for verdict in Verdict:
        row = db.query(
            func.avg(QualityReport.median_max_parallax).label('parallax'),
            func.avg(QualityReport.valid_depth_fraction).label('valid_depth_fraction'),
            func.avg(QualityReport.linearity).label('linearity'),
            func.avg(QualityReport.noise_fraction).label('noise_fraction')
        ).filter(QualityReport.verdict == verdict).one()
        summary[verdict.value] = {
            "median_max_parallax": _rounded(row.parallax),
            "valid_depth_fraction": _rounded(row.valid_depth_fraction),
            "linearity": _rounded(row.linearity),
            "noise_fraction": _rounded(row.noise_fraction)
        }
    return summary

def eval_summary(db: Session) -> Dict[str, Any]:
    """Mean metrics over successful evaluation rows."""
    row = db.query(
        func.count(EvalResult.id).label('count'),
        func.avg(EvalResult.auc_3).label('auc_3'),
        func.avg(EvalResult.auc_30).label('auc_30'),
        func.avg(EvalResult.abs_rel).label('abs_rel'),
        func.avg(EvalResult.delta).label('delta'),
        func.avg(EvalResult.point_error).label('point_error')
    ).filter(EvalResult.succeeded.is_(True)).one()
    failed = db.query(EvalResult).filter(EvalResult.succeeded.is_(False)).count()

    return {
        "sequences": row.count,
        "failed": failed,
        "auc_3": _rounded(row.auc_3),
        "auc_30": _rounded(row.auc_30),
        "abs_rel": _rounded(row.abs_rel),
        "delta": _rounded(row.delta),
        "point_error": _rounded(row.point_error)
    }

def _rounded(value, digits: int = 4):
    return round(value, digits) if value is not None else None

def registry_report(db: Session) -> Dict[str, Any]:
    """Every summary plus one line per recorded sequence, for the `registry` command."""
    reports = [
        {
            "sequence": row.sequence,
            "verdict": row.verdict.value,
            "codes": sorted(reason.code for reason in row.reasons)
        }
        for row in list_quality_reports(db)
    ]
    evaluations = [
        {
            "sequence": row.sequence,
            "succeeded": row.succeeded,
            "auc_30": _rounded(row.auc_30),
            "error": row.error
        }
        for row in list_eval_results(db)
    ]
    return {
        "acceptance": acceptance_summary(db),
        "rejections": rejection_breakdown(db),
        "feature_means": feature_means(db),
        "evaluation": eval_summary(db),
        "reports": reports,
        "evaluations": evaluations
    }
