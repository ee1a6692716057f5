"""Toy efficacy checks over the reports of an acceptance sweep.

Expected layout, as written by deploy/bin/run_toy_acceptance.sh:
<root>/<KIND>/eval/<strategy>-<set>/<run>/reports/metrics.{csv,json}
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Mapping

import pandas as pd

from elegance.config import EFFICACY_BASELINE_MIN_DB, EFFICACY_IMPAIRED_GAIN_DB, EFFICACY_TOLERANCE_DB
from elegance.errors import FormatError, VerificationError
from elegance.evalkit.report import MetricsReport
from elegance.signal.metrics import MetricName
from elegance.utils import log_summary

logger = logging.getLogger(__name__)

BASELINE = "baseline"
STRATEGIES = ("output", "input", "intermediate")
HELD_OUT = "core"
IMPAIRED = "impaired"
TEST_SETS = (HELD_OUT, IMPAIRED)
EFFICACY_NAME = "efficacy.csv"


def load_sweep(root: Path | str) -> dict[str, dict[tuple[str, str], float]]:
    """Mean SI-SDR-i per backbone kind, keyed by (strategy, test set); the newest run wins."""
    root = Path(root)
    kinds = sorted(p.name for p in root.iterdir() if (p / "eval").is_dir()) if root.is_dir() else []
    if not kinds:
        raise FormatError(f"No <kind>/eval directories under {root}")
    sweep = {}
    for kind in kinds:
        means = {}
        for strategy in (BASELINE, *STRATEGIES):
            for test_set in TEST_SETS:
                runs = list((root / kind / "eval" / f"{strategy}-{test_set}").glob("*/reports"))
                if not runs:
                    raise FormatError(f"{kind}: no report for {strategy} on the {test_set} set")
                newest = max(runs, key=lambda p: p.stat().st_mtime)
                means[(strategy, test_set)] = MetricsReport.load(newest).mean(MetricName.SI_SDR_I.value)
        sweep[kind] = means
    return sweep


def _check(name: str, value: float, threshold: float, passed: bool) -> dict[str, Any]:
    return {"check": name, "value": value, "threshold": threshold, "passed": bool(passed)}


def efficacy_checks(
    means: Mapping[tuple[str, str], float],
    baseline_min_db: float = EFFICACY_BASELINE_MIN_DB,
    tolerance_db: float = EFFICACY_TOLERANCE_DB,
    impaired_gain_db: float = EFFICACY_IMPAIRED_GAIN_DB,
) -> list[dict[str, Any]]:
    """Baseline quality, no strategy below baseline on core, one strategy ahead on impaired cues."""
    missing = [(s, t) for s in (BASELINE, *STRATEGIES) for t in TEST_SETS if (s, t) not in means]
    if missing:
        raise FormatError(f"Sweep is missing {missing}")
    base = means[(BASELINE, HELD_OUT)]
    rows = [_check(f"{BASELINE} on {HELD_OUT}", base, baseline_min_db, base > baseline_min_db)]
    for strategy in STRATEGIES:
        value = means[(strategy, HELD_OUT)]
        floor = base - tolerance_db
        rows.append(_check(f"{strategy} on {HELD_OUT}", value, floor, value >= floor))
    gains = {s: means[(s, IMPAIRED)] - means[(BASELINE, IMPAIRED)] for s in STRATEGIES}
    best = max(gains, key=gains.get)
    rows.append(
        _check(f"{best} gain on {IMPAIRED}", gains[best], impaired_gain_db, gains[best] > impaired_gain_db)
    )
    return rows


def verify_efficacy(root: Path | str) -> pd.DataFrame:
    """Run every check per backbone kind, write efficacy.csv under root, raise if any fails."""
    root = Path(root)
    table = pd.DataFrame.from_records(
        [{"kind": kind, **row} for kind, means in load_sweep(root).items() for row in efficacy_checks(means)]
    )
    table.to_csv(root / EFFICACY_NAME, index=False, lineterminator="\n")
    failed = table[~table["passed"]]
    for row in failed.itertuples():
        logger.error(f"❌ {row.kind} {row.check}: {row.value:.3f} dB vs threshold {row.threshold:.3f} dB")
    if len(failed):
        raise VerificationError(f"{len(failed)} of {len(table)} efficacy checks failed")
    log_summary(f"✅ All {len(table)} efficacy checks passed for {table['kind'].nunique()} backbones")
    return table
