"""Separation metrics: SI-SDR, projection-free SDR and their improvements.

SI-SNR is treated as an alias of SI-SDR throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from elegance.config import METRIC_CAP_DB, PERFECT_THRESHOLD_DB
from elegance.errors import DomainError
from elegance.signal.waveform import Waveform, check_same_length


class MetricName(str, Enum):
    SI_SDR = "SI_SDR"
    SDR = "SDR"
    STOI = "STOI"
    SI_SDR_I = "SI_SDR_I"
    SDR_I = "SDR_I"
    STOI_I = "STOI_I"


@dataclass(frozen=True)
class MetricValue:
    name: MetricName
    value: float
    perfect: bool = False

    @property
    def capped(self) -> float:
        """Finite value used for aggregation; perfect scores map to the cap."""
        if self.perfect:
            return METRIC_CAP_DB
        return float(np.clip(self.value, -METRIC_CAP_DB, METRIC_CAP_DB))


def _ratio_db(name: MetricName, signal_energy: float, distortion_energy: float) -> MetricValue:
    # silent or orthogonal estimates score the floor, never perfect
    if signal_energy <= 0.0:
        return MetricValue(name, -METRIC_CAP_DB)
    if distortion_energy <= 0.0:
        return MetricValue(name, METRIC_CAP_DB, perfect=True)
    value = 10.0 * np.log10(signal_energy / distortion_energy)
    if value > PERFECT_THRESHOLD_DB:
        return MetricValue(name, METRIC_CAP_DB, perfect=True)
    return MetricValue(name, float(max(value, -METRIC_CAP_DB)))


def si_sdr(est: Waveform, ref: Waveform) -> MetricValue:
    check_same_length(est, ref)
    e = est.samples - est.samples.mean()
    r = ref.samples - ref.samples.mean()
    ref_energy = float(np.dot(r, r))
    if ref_energy <= 0.0:
        raise DomainError("Reference is identically zero after mean subtraction")
    target = (np.dot(e, r) / ref_energy) * r
    residual = e - target
    return _ratio_db(
        MetricName.SI_SDR, float(np.dot(target, target)), float(np.dot(residual, residual))
    )


def sdr(est: Waveform, ref: Waveform) -> MetricValue:
    """10*log10(|ref|^2 / |ref - est|^2), no BSS-Eval projections."""
    check_same_length(est, ref)
    ref_energy = ref.energy()
    if ref_energy <= 0.0:
        raise DomainError("Reference is identically zero")
    residual = ref.samples - est.samples
    return _ratio_db(MetricName.SDR, ref_energy, float(np.dot(residual, residual)))


_BASE = {
    MetricName.SI_SDR: MetricName.SI_SDR,
    MetricName.SI_SDR_I: MetricName.SI_SDR,
    MetricName.SDR: MetricName.SDR,
    MetricName.SDR_I: MetricName.SDR,
    MetricName.STOI: MetricName.STOI,
    MetricName.STOI_I: MetricName.STOI,
}
_IMPROVED = {
    MetricName.SI_SDR: MetricName.SI_SDR_I,
    MetricName.SDR: MetricName.SDR_I,
    MetricName.STOI: MetricName.STOI_I,
}


def base_metric(name: MetricName) -> Callable[[Waveform, Waveform], MetricValue]:
    from elegance.signal.stoi import stoi

    return {MetricName.SI_SDR: si_sdr, MetricName.SDR: sdr, MetricName.STOI: stoi}[name]


def improvement(metric: MetricName, est: Waveform, mix: Waveform, ref: Waveform) -> MetricValue:
    """metric(est, ref) - metric(mix, ref); exactly 0 when est is mix."""
    check_same_length(est, mix, ref)
    base = _BASE[MetricName(metric)]
    score = base_metric(base)
    processed = score(est, ref)
    unprocessed = score(mix, ref)
    name = _IMPROVED[base]
    if processed.perfect and unprocessed.perfect:
        return MetricValue(name, 0.0)
    if processed.perfect:
        return MetricValue(name, METRIC_CAP_DB, perfect=True)
    return MetricValue(name, processed.value - unprocessed.capped)
