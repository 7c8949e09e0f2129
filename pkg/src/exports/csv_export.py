"""
CSV export for filter verdicts and evaluation tables.
"""

import csv
import io
from typing import List, Dict, Any

FILTER_COLUMNS = [
    'sequence',
    'accepted',
    'num_frames',
    'registration_ratio',
    'fov_x',
    'fov_y',
    'distortion_ratio',
    'valid_depth_fraction',
    'median_max_parallax',
    'linearity',
    'planarity',
    'scattering',
    'completeness',
    'noise_fraction',
    's_trans',
    's_rot',
    'up_consistency',
    'reasons',
]

EVAL_COLUMNS = ['sequence', 'auc_3', 'auc_30', 'abs_rel', 'delta', 'point_error', 'excluded_pairs', 'errors']


def _cell(value: Any) -> str:
    if value is None:
        return ''
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def export_filter_reports_to_csv(reports: List[Dict[str, Any]]) -> str:
    """
    Export filter reports to CSV string format, one row per sequence.

    Args:
        reports: Reports as produced by the filter pipeline

    Returns:
        CSV content as string
    """
    output = io.StringIO()
    writer = csv.writer(output, lineterminator='\n')
    writer.writerow(FILTER_COLUMNS)

    for report in reports:
        features = report.get('features') or {}
        row = []
        for column in FILTER_COLUMNS:
            if column == 'reasons':
                row.append('; '.join(report.get('reasons', []) + report.get('errors', [])))
            elif column in report:
                row.append(_cell(report[column]))
            else:
                row.append(_cell(features.get(column)))
        writer.writerow(row)

    return output.getvalue()


def export_eval_results_to_csv(rows: List[Dict[str, Any]]) -> str:
    """
    Export per-sequence evaluation rows (plus an aggregate row, if present) to CSV.

    Args:
        rows: Rows as produced by the eval pipeline

    Returns:
        CSV content as string
    """
    output = io.StringIO()
    writer = csv.writer(output, lineterminator='\n')
    writer.writerow(EVAL_COLUMNS)

    for result in rows:
        writer.writerow([
            result['sequence'],
            _cell(result.get('auc_3')),
            _cell(result.get('auc_30')),
            _cell(result.get('abs_rel')),
            _cell(result.get('delta')),
            _cell(result.get('point_error')),
            _cell(result.get('excluded_pairs')),
            '; '.join(result.get('errors', []))
        ])

    return output.getvalue()
