"""Short-Time Objective Intelligibility via pystoi.

Inputs are brought to the 10 kHz analysis rate with `resample` first, so the
silent-frame check below sees the same frames pystoi scores.
"""

from pystoi import stoi as _pystoi
from pystoi.utils import remove_silent_frames

from elegance.config import (
    STOI_DYN_RANGE_DB,
    STOI_FRAME_LEN,
    STOI_MIN_DURATION_S,
    STOI_SAMPLE_RATE,
    STOI_SEGMENT_FRAMES,
)
from elegance.errors import DomainError
from elegance.signal.metrics import MetricName, MetricValue
from elegance.signal.waveform import Waveform, check_same_length, resample

STOI_HOP = STOI_FRAME_LEN // 2


def analysis_frames(n_samples: int) -> int:
    """Number of STFT frames pystoi takes from a signal of n_samples."""
    return len(range(0, n_samples - STOI_FRAME_LEN, STOI_HOP))


def stoi(est: Waveform, ref: Waveform) -> MetricValue:
    check_same_length(est, ref)
    ref = resample(ref, STOI_SAMPLE_RATE)
    est = resample(est, STOI_SAMPLE_RATE)
    too_short = DomainError(f"STOI needs at least {STOI_MIN_DURATION_S * 1000:.0f} ms of non-silent audio")
    if analysis_frames(len(ref)) < STOI_SEGMENT_FRAMES:
        raise too_short

    # pystoi returns a 1e-5 placeholder instead of failing on short voiced audio
    voiced, _ = remove_silent_frames(ref.samples, est.samples, STOI_DYN_RANGE_DB, STOI_FRAME_LEN, STOI_HOP)
    if analysis_frames(voiced.size) < STOI_SEGMENT_FRAMES:
        raise too_short

    value = float(_pystoi(ref.samples, est.samples, STOI_SAMPLE_RATE, extended=False))
    return MetricValue(MetricName.STOI, min(max(value, -1.0), 1.0))
