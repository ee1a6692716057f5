from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import pandas as pd

from elegance.errors import FormatError
from elegance.signal.metrics import MetricName
from elegance.utils import sha256_bytes, write_json

logger = logging.getLogger(__name__)

REPORT_METRICS = [
    MetricName.SI_SDR.value,
    MetricName.SI_SDR_I.value,
    MetricName.SDR_I.value,
    MetricName.STOI.value,
]
ROW_COLUMNS = ["sample_id", "scenario", *REPORT_METRICS, "perfect", "region_si_sdr"]
CSV_NAME = "metrics.csv"
JSON_NAME = "metrics.json"


@dataclass
class MetricsReport:
    """One row per evaluated sample plus per-scenario means.

    Metric cells hold capped values, so perfect-sentinel rows enter means at the cap.
    """

    rows: pd.DataFrame
    meta: dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def scenarios(self) -> list[str]:
        return sorted(self.rows["scenario"].unique())

    def aggregates(self) -> pd.DataFrame:
        grouped = self.rows.groupby("scenario", sort=True)
        table = grouped[REPORT_METRICS].mean()
        table["false_rate"] = grouped[MetricName.SI_SDR_I.value].apply(lambda s: float((s < 0.0).mean()))
        table["count"] = grouped.size()
        return table

    def mean(self, metric: str, scenario: Optional[str] = None) -> float:
        rows = self.rows if scenario is None else self.rows[self.rows["scenario"] == scenario]
        return float(rows[metric].mean())

    def to_csv(self) -> str:
        return self.rows[ROW_COLUMNS].to_csv(index=False, lineterminator="\n")

    def checksum(self) -> str:
        return sha256_bytes(self.to_csv().encode("utf-8"))

    def summary(self) -> dict[str, Any]:
        table = self.aggregates()
        return {
            "meta": self.meta,
            "checksum": self.checksum(),
            "aggregates": {
                scenario: {k: (None if pd.isna(v) else float(v)) for k, v in values.items()}
                for scenario, values in table.to_dict(orient="index").items()
            },
        }

    def save(self, out_dir: Path | str) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / CSV_NAME
        csv_path.write_text(self.to_csv(), encoding="utf-8")
        json_path = out_dir / JSON_NAME
        write_json(json_path, self.summary())
        logger.info(f"📨 Report with {len(self)} rows written to {out_dir}")
        return csv_path, json_path

    @classmethod
    def load(cls, path: Path | str) -> MetricsReport:
        """Read a saved report from its directory (or a run directory holding reports/)."""
        path = Path(path)
        for candidate in (path, path / "reports"):
            if (candidate / CSV_NAME).is_file() and (candidate / JSON_NAME).is_file():
                path = candidate
                break
        else:
            raise FormatError(f"No {CSV_NAME}/{JSON_NAME} pair under {path}")
        rows = pd.read_csv(path / CSV_NAME, float_precision="round_trip")
        missing = [c for c in ROW_COLUMNS if c not in rows.columns]
        if missing:
            raise FormatError(f"{path / CSV_NAME}: missing columns {missing}")
        rows["region_si_sdr"] = rows["region_si_sdr"].fillna("")
        with open(path / JSON_NAME, "r", encoding="utf-8") as fh:
            meta = json.load(fh).get("meta", {})
        return cls(rows, meta)


def build_report(records: list[dict[str, Any]], meta: dict[str, Any]) -> MetricsReport:
    rows = pd.DataFrame.from_records(records, columns=ROW_COLUMNS)
    rows[REPORT_METRICS] = rows[REPORT_METRICS].astype(np.float64)
    return MetricsReport(rows, meta)
