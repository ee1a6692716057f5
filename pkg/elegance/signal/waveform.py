from __future__ import annotations

from dataclasses import dataclass
from math import gcd
from pathlib import Path

import numpy as np
import soundfile as sf
from scipy import signal as sps

from elegance.config import SUPPORTED_SAMPLE_RATES
from elegance.errors import ContractError, DomainError, FormatError


@dataclass(frozen=True)
class Waveform:
    """Mono signal with its sample rate. Samples are held as float64."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ContractError(f"Waveform must be 1-D, got shape {samples.shape}")
        if samples.size == 0:
            raise ContractError("Waveform must contain at least one sample")
        if not np.all(np.isfinite(samples)):
            raise DomainError("Waveform contains non-finite samples")
        if int(self.sample_rate) not in SUPPORTED_SAMPLE_RATES:
            raise DomainError(
                f"Unsupported sample rate {self.sample_rate}; "
                f"expected one of {SUPPORTED_SAMPLE_RATES}"
            )
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate

    def energy(self) -> float:
        return float(np.dot(self.samples, self.samples))

    def segment(self, start: int, stop: int) -> Waveform:
        return Waveform(self.samples[start:stop], self.sample_rate)

    @classmethod
    def silence(cls, n_samples: int, sample_rate: int) -> Waveform:
        return cls(np.zeros(n_samples), sample_rate)


def check_same_length(*waves: Waveform) -> None:
    lengths = {len(w) for w in waves}
    if len(lengths) != 1:
        raise ContractError(f"Waveforms must have equal lengths, got {sorted(lengths)}")
    rates = {w.sample_rate for w in waves}
    if len(rates) != 1:
        raise ContractError(f"Waveforms must share a sample rate, got {sorted(rates)}")


def pad_to(wave: Waveform, n_samples: int) -> Waveform:
    """Zero-pad at the end (or trim) to exactly n_samples."""
    if len(wave) >= n_samples:
        return Waveform(wave.samples[:n_samples], wave.sample_rate)
    return Waveform(np.pad(wave.samples, (0, n_samples - len(wave))), wave.sample_rate)


def mix_at_snr(
    target: Waveform,
    interferers: list[Waveform],
    snr_db: list[float],
) -> tuple[Waveform, list[float]]:
    """Scale every interferer to its requested SNR against the target and sum.

    Interferer i gets g_i = sqrt(|target|^2 / (|interferer_i|^2 * 10^(snr_i/10))).
    """
    if len(interferers) != len(snr_db):
        raise ContractError(
            f"{len(interferers)} interferers but {len(snr_db)} SNR values"
        )
    check_same_length(target, *interferers)
    target_energy = target.energy()
    if target_energy <= 0.0:
        raise DomainError("Target has zero energy; SNR is undefined")

    mixture = target.samples.copy()
    gains = []
    for idx, (interferer, snr) in enumerate(zip(interferers, snr_db)):
        energy = interferer.energy()
        if energy <= 0.0:
            raise DomainError(f"Interferer {idx} has zero energy")
        gain = float(np.sqrt(target_energy / (energy * 10.0 ** (snr / 10.0))))
        mixture = mixture + gain * interferer.samples
        gains.append(gain)
    return Waveform(mixture, target.sample_rate), gains


def resample(wave: Waveform, sample_rate: int) -> Waveform:
    """Polyphase resampling (scipy.signal.resample_poly)."""
    if sample_rate == wave.sample_rate:
        return wave
    factor = gcd(int(sample_rate), wave.sample_rate)
    up = int(sample_rate) // factor
    down = wave.sample_rate // factor
    return Waveform(sps.resample_poly(wave.samples, up, down), sample_rate)


WAV_SUBTYPES = ("PCM_16", "FLOAT", "DOUBLE")


def write_wav(path: Path | str, wave: Waveform, subtype: str = "FLOAT") -> Path:
    if subtype not in WAV_SUBTYPES:
        raise FormatError(f"Unsupported WAV subtype {subtype!r}; use one of {WAV_SUBTYPES}")
    path = Path(path)
    sf.write(str(path), wave.samples, wave.sample_rate, subtype=subtype, format="WAV")
    return path


def read_wav(path: Path | str, expected_rate: int | None = None) -> Waveform:
    """Read a mono WAV. A rate mismatch is an error; resampling is explicit."""
    try:
        data, rate = sf.read(str(path), dtype="float64", always_2d=False)
    except RuntimeError as e:
        raise FormatError(f"Cannot read {path}: {e}") from e
    if data.ndim != 1:
        raise FormatError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if expected_rate is not None and rate != expected_rate:
        raise FormatError(f"{path}: sample rate {rate} Hz, expected {expected_rate} Hz")
    return Waveform(data, rate)
