from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Any, Optional, Protocol

import numpy as np

from elegance.backbone.model import AVTSEModel, extract
from elegance.config import MAX_WORKERS, METRIC_CAP_DB
from elegance.errors import ConfigError, DomainError
from elegance.evalkit.report import MetricsReport, build_report
from elegance.lmcore.embeddings import EmbeddingProvider
from elegance.signal.metrics import MetricName, MetricValue, improvement, si_sdr
from elegance.signal.stoi import stoi
from elegance.signal.waveform import Waveform
from elegance.simkit.dataset import Manifest, load_sample
from elegance.simkit.mixtures import MixtureSample
from elegance.utils import format_db, get_time_str, log_summary

logger = logging.getLogger(__name__)


class Estimator(Protocol):
    tag: str

    def __call__(self, sample: MixtureSample) -> Waveform: ...


class OracleEstimator:
    """Returns the stored reference."""

    tag = "oracle"

    def __call__(self, sample: MixtureSample) -> Waveform:
        return sample.reference()


class PassthroughEstimator:
    """Returns the unprocessed mixture."""

    tag = "passthrough"

    def __call__(self, sample: MixtureSample) -> Waveform:
        return sample.mixture


class ModelEstimator:
    """Offline inference with a trained extractor.

    Models carrying a prior fusion layer get the ZERO prior unless `use_text`
    is set, in which case the provider embeds the sample transcript.
    """

    def __init__(
        self,
        model: AVTSEModel,
        tag: str = "model",
        provider: Optional[EmbeddingProvider] = None,
        use_text: bool = False,
    ):
        if use_text and provider is None:
            raise ConfigError("Transcript priors at inference need an embedding provider")
        self.model = model.eval()
        self.tag = tag
        self.provider = provider
        self.use_text = use_text

    def _prior(self, sample: MixtureSample) -> Optional[np.ndarray]:
        fusion = self.model.prior_fusion
        if fusion is None:
            return None
        if self.use_text:
            return self.provider.utterance_embedding(sample.transcript())
        return np.zeros(fusion.prior_dim, dtype=np.float32)

    def __call__(self, sample: MixtureSample) -> Waveform:
        visual = sample.visual()
        if visual.dim != self.model.cfg.visual_dim:
            raise ConfigError(
                f"{sample.sample_id}: visual dim {visual.dim} but model expects {self.model.cfg.visual_dim}"
            )
        return extract(self.model, sample.mixture, visual, self._prior(sample))


def _weighted(values: list[MetricValue], weights: list[int]) -> MetricValue:
    if all(v.perfect for v in values):
        return MetricValue(values[0].name, METRIC_CAP_DB, perfect=True)
    total = float(sum(weights))
    return MetricValue(values[0].name, sum(v.capped * w for v, w in zip(values, weights)) / total)


def _region_scores(
    est: Waveform, sample: MixtureSample
) -> tuple[MetricValue, MetricValue, MetricValue, list[float]]:
    """SI-SDR, SI-SDR-i and SDR-i per active-target region, length-weighted."""
    ref = sample.reference()
    regions = sample.regions()
    scores: dict[MetricName, list[MetricValue]] = {
        MetricName.SI_SDR: [],
        MetricName.SI_SDR_I: [],
        MetricName.SDR_I: [],
    }
    for start, stop in regions:
        e, m, r = est.segment(start, stop), sample.mixture.segment(start, stop), ref.segment(start, stop)
        scores[MetricName.SI_SDR].append(si_sdr(e, r))
        scores[MetricName.SI_SDR_I].append(improvement(MetricName.SI_SDR, e, m, r))
        scores[MetricName.SDR_I].append(improvement(MetricName.SDR, e, m, r))
    weights = [stop - start for start, stop in regions]
    per_region = [v.capped for v in scores[MetricName.SI_SDR]]
    return (
        _weighted(scores[MetricName.SI_SDR], weights),
        _weighted(scores[MetricName.SI_SDR_I], weights),
        _weighted(scores[MetricName.SDR_I], weights),
        per_region,
    )


def score_sample(est: Waveform, sample: MixtureSample) -> dict[str, Any]:
    ref = sample.reference()
    mix = sample.mixture
    region_si_sdr = ""
    if len(sample.targets) > 1:
        value, gain, sdr_gain, per_region = _region_scores(est, sample)
        region_si_sdr = ";".join(f"{v:.6f}" for v in per_region)
    else:
        value = si_sdr(est, ref)
        gain = improvement(MetricName.SI_SDR, est, mix, ref)
        sdr_gain = improvement(MetricName.SDR, est, mix, ref)
    try:
        intelligibility = stoi(est, ref).value
    except DomainError as e:
        logger.warning(f"⚠️ {sample.sample_id}: STOI skipped, {e}")
        intelligibility = float("nan")
    return {
        "sample_id": sample.sample_id,
        "scenario": sample.scenario.value,
        MetricName.SI_SDR.value: value.capped,
        MetricName.SI_SDR_I.value: gain.capped,
        MetricName.SDR_I.value: sdr_gain.capped,
        MetricName.STOI.value: intelligibility,
        "perfect": bool(value.perfect),
        "region_si_sdr": region_si_sdr,
    }


def evaluate(
    estimator: Estimator,
    manifest: Manifest,
    scenarios: Optional[list[str]] = None,
    model_tag: Optional[str] = None,
    pairing: str = "like-with-like",
    max_workers: int = MAX_WORKERS,
) -> MetricsReport:
    """Score every manifest record (optionally filtered by scenario) into a report.

    Rows keep manifest order regardless of completion order, so the report
    checksum depends only on the estimator and the manifest.
    """
    records = manifest.filter(scenarios)
    if not records:
        raise DomainError(f"No manifest records match scenarios {scenarios}")
    start_time = time.time()

    def _one(index: int) -> dict[str, Any]:
        sample = load_sample(records[index], manifest.root)
        return score_sample(estimator(sample), sample)

    rows: list[dict[str, Any] | None] = [None] * len(records)
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as executor:
        futures = {executor.submit(_one, i): i for i in range(len(records))}
        for future in as_completed(futures):
            index = futures[future]
            try:
                rows[index] = future.result()
            except Exception as e:
                logger.error(f"❌ Evaluation of {records[index].sample_id} failed: {e}")
                raise
            row = rows[index]
            logger.debug(f"🔎 {row['sample_id']}: SI-SDR {format_db(row[MetricName.SI_SDR.value], row['perfect'])}")

    meta = {
        "model_tag": model_tag or estimator.tag,
        "manifest_checksum": manifest.checksum(),
        "scenarios": sorted({r.scenario for r in records}),
        "pairing": pairing,
    }
    report = build_report(rows, meta)
    log_summary(
        f"✅ Evaluated {meta['model_tag']} on {len(report)} samples ({get_time_str(start_time)}): "
        f"SI-SDR {report.mean(MetricName.SI_SDR.value):.2f} dB, "
        f"SI-SDR-i {report.mean(MetricName.SI_SDR_I.value):.2f} dB"
    )
    return report
