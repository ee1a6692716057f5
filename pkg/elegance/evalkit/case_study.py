from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import Any, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from elegance.errors import ConfigError  # noqa: E402
from elegance.evalkit.evaluate import Estimator, score_sample  # noqa: E402
from elegance.signal.metrics import MetricName  # noqa: E402
from elegance.signal.spectro import mel_spectrogram, to_db  # noqa: E402
from elegance.simkit.mixtures import MixtureSample  # noqa: E402
from elegance.utils import write_json  # noqa: E402

logger = logging.getLogger(__name__)

SIDECAR_NAME = "case_study.json"
CMAP = "magma"


def _panel_name(tag: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", tag)


def export_case_study(
    estimators: Sequence[Estimator],
    sample: MixtureSample,
    out_dir: Path | str,
    n_fft: int = 256,
    hop: int = 128,
    n_mels: int = 40,
) -> dict[str, Any]:
    """Write mel-spectrogram panels for the mixture, the ground truth and each estimate.

    All panels share one dB colour range so they compare pixel for pixel.
    The JSON sidecar carries the SI-SDR of every estimate.
    """
    tags = [e.tag for e in estimators]
    if len(set(tags)) != len(tags):
        raise ConfigError(f"Estimator tags must be unique, got {tags}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    waves = {"mixture": sample.mixture, "reference": sample.reference()}
    scores: dict[str, dict[str, Any]] = {}
    for estimator in estimators:
        estimate = estimator(sample)
        waves[estimator.tag] = estimate
        row = score_sample(estimate, sample)
        scores[estimator.tag] = {
            "si_sdr": row[MetricName.SI_SDR.value],
            "perfect": row["perfect"],
        }
    if len(waves) != 2 + len(estimators):
        raise ConfigError("Estimator tags must differ from 'mixture' and 'reference'")

    images = {name: to_db(mel_spectrogram(w, n_fft, hop, n_mels)) for name, w in waves.items()}
    vmin = min(float(img.min()) for img in images.values())
    vmax = max(float(img.max()) for img in images.values())
    panels = {}
    for name, img in images.items():
        path = out_dir / f"{_panel_name(name)}.png"
        plt.imsave(path, img, cmap=CMAP, vmin=vmin, vmax=vmax, origin="lower")
        panels[name] = path.name

    sidecar = {
        "sample_id": sample.sample_id,
        "scenario": sample.scenario.value,
        "panels": panels,
        "db_range": [vmin, vmax],
        "metrics": scores,
    }
    write_json(out_dir / SIDECAR_NAME, sidecar)
    logger.info(f"📨 Case study of {sample.sample_id}: {len(panels)} panels in {out_dir}")
    return sidecar
