"""Text-driven speech-like waveform synthesis.

Every character owns a fixed duration and either a harmonic-stack colour
(voiced), a noise band (fricative) or a pause. The same speaker, transcript
and seed always give the same samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import signal as sps

from elegance.config import CROSSFADE_S, DEFAULT_SAMPLE_RATE, PEAK_LEVEL
from elegance.errors import DomainError
from elegance.lmcore.tokenizer import char_index, check_text
from elegance.signal.waveform import Waveform
from elegance.simkit.speakers import SyntheticSpeakerSpec
from elegance.utils import seeded_rng

CHAR_SALT = 104729
N_HARMONICS = 12
FRICATIVES = frozenset("fhjsxzç")
PAUSES = frozenset(" '.,?-")


@dataclass(frozen=True)
class CharacterSound:
    duration_s: float
    kind: str  # "voiced" | "fricative" | "pause"
    bump_centres: tuple[float, ...] = ()
    bump_widths: tuple[float, ...] = ()
    bump_gains: tuple[float, ...] = ()
    band_hz: tuple[float, float] = (0.0, 0.0)


@lru_cache(maxsize=None)
def character_sound(ch: str) -> CharacterSound:
    rng = seeded_rng(CHAR_SALT, char_index(ch))
    duration = float(rng.uniform(0.060, 0.120))
    if ch in PAUSES:
        return CharacterSound(duration, "pause")
    if ch in FRICATIVES:
        low = float(rng.uniform(1500.0, 2400.0))
        return CharacterSound(duration, "fricative", band_hz=(low, low + float(rng.uniform(600.0, 1100.0))))
    centres = tuple(float(c) for c in rng.uniform(1.5, 9.5, size=3))
    widths = tuple(float(w) for w in rng.uniform(0.5, 0.9, size=3))
    gains = (1.0, *(float(g) for g in rng.uniform(0.2, 0.6, size=2)))
    return CharacterSound(duration, "voiced", centres, widths, gains)


def harmonic_gains(sound: CharacterSound, spec: SyntheticSpeakerSpec) -> np.ndarray:
    """Amplitude per harmonic index 1..N_HARMONICS; pitch-independent."""
    h = np.arange(1, N_HARMONICS + 1, dtype=np.float64)
    gains = 0.1 / h
    for centre, width, gain, offset in zip(
        sound.bump_centres, sound.bump_widths, sound.bump_gains, spec.formant_offsets
    ):
        gains = gains + gain * np.exp(-np.square(h - (centre + offset)) / (2.0 * width**2))
    return gains


def _raised_cosine(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(np.pi * np.arange(n) / n)


def _segment(
    ch: str,
    spec: SyntheticSpeakerSpec,
    sample_rate: int,
    rng: np.random.Generator,
) -> np.ndarray:
    sound = character_sound(ch)
    n = int(round(sound.duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    if sound.kind == "pause":
        return np.zeros(n)
    if sound.kind == "fricative":
        low, high = sound.band_hz
        high = min(high, 0.45 * sample_rate)
        sos = sps.butter(4, [low, high], btype="bandpass", fs=sample_rate, output="sos")
        burst = sps.sosfilt(sos, rng.normal(size=n))
        return 0.5 * burst / (np.max(np.abs(burst)) + 1e-12)

    gains = harmonic_gains(sound, spec)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=N_HARMONICS)
    out = np.zeros(n)
    for h in range(1, N_HARMONICS + 1):
        freq = h * spec.base_pitch
        if freq >= 0.45 * sample_rate:
            break
        out += gains[h - 1] * np.sin(2.0 * np.pi * freq * t + phases[h - 1])
    return out


def synth_utterance(
    spec: SyntheticSpeakerSpec,
    transcript: str,
    duration_s: float,
    seed: int,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
) -> Waveform:
    """Render transcript, crossfading character segments, padded/trimmed to duration_s."""
    if not transcript:
        raise DomainError("Transcript must be nonempty")
    check_text(transcript)
    total = int(round(duration_s * sample_rate))
    fade = int(round(CROSSFADE_S * sample_rate))
    ramp = _raised_cosine(fade)
    rng = seeded_rng(seed, spec.speaker_id)

    segments = [_segment(ch, spec, sample_rate, rng) for ch in transcript]
    length = sum(s.size for s in segments) - fade * (len(segments) - 1)
    out = np.zeros(max(length, total))
    pos = 0
    for seg in segments:
        seg = seg.copy()
        seg[:fade] *= ramp
        seg[-fade:] *= ramp[::-1]
        out[pos : pos + seg.size] += seg
        pos += seg.size - fade
    out = out[:total]

    peak = np.max(np.abs(out))
    if peak > 0.0:
        out = out * (PEAK_LEVEL / peak)
    return Waveform(out, sample_rate)
