from __future__ import annotations

import logging
from typing import Any

import numpy as np
import pandas as pd

from elegance.errors import DomainError, VerificationError
from elegance.evalkit.report import REPORT_METRICS, MetricsReport
from elegance.signal.metrics import MetricName

logger = logging.getLogger(__name__)

RI_DECIMALS = 2


def false_rate(report: MetricsReport | pd.DataFrame) -> float:
    """Share of rows whose SI-SDR-i is strictly below 0 dB."""
    rows = report.rows if isinstance(report, MetricsReport) else report
    if len(rows) == 0:
        raise DomainError("False rate of an empty report")
    column = MetricName.SI_SDR_I.value
    if column not in rows.columns:
        raise DomainError(f"Report has no {column} column")
    return float(np.mean(rows[column].to_numpy() < 0.0))


def relative_improvement(guided_mean: float, baseline_mean: float) -> float:
    """(guided - baseline) / baseline in percent."""
    if not np.isfinite(baseline_mean) or baseline_mean <= 0.0:
        raise DomainError(f"Relative improvement needs a positive baseline, got {baseline_mean}")
    return (guided_mean - baseline_mean) / baseline_mean * 100.0


def compare_reports(
    baseline: MetricsReport,
    guided: MetricsReport,
    metric: str = MetricName.SI_SDR.value,
) -> list[dict[str, Any]]:
    """Per-scenario RI rows of guided over baseline for one metric.

    Both reports must come from the same manifest, cover the same samples and
    share a pairing policy.
    """
    if metric not in REPORT_METRICS:
        raise DomainError(f"Unknown report metric {metric}")
    checks = [
        ("manifest checksum", "manifest_checksum"),
        ("pairing", "pairing"),
    ]
    for label, key in checks:
        a, b = baseline.meta.get(key), guided.meta.get(key)
        if a != b:
            raise VerificationError(f"Reports differ in {label}: {a} vs {b}")
    if sorted(baseline.rows["sample_id"]) != sorted(guided.rows["sample_id"]):
        raise VerificationError("Reports cover different samples")

    rows = []
    for scenario in baseline.scenarios:
        base = baseline.mean(metric, scenario)
        ours = guided.mean(metric, scenario)
        try:
            ri = round(relative_improvement(ours, base), RI_DECIMALS)
        except DomainError as e:
            logger.warning(f"⚠️ {scenario}: {e}")
            ri = None
        rows.append(
            {
                "scenario": scenario,
                "metric": metric,
                "baseline": base,
                "guided": ours,
                "ri_percent": ri,
                "baseline_false_rate": false_rate(baseline.rows[baseline.rows["scenario"] == scenario]),
                "guided_false_rate": false_rate(guided.rows[guided.rows["scenario"] == scenario]),
                "baseline_tag": baseline.meta.get("model_tag"),
                "guided_tag": guided.meta.get("model_tag"),
            }
        )
    return rows
