from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter1d

from elegance.config import LOG_FLOOR, VISUAL_FPS, VISUAL_MAGIC, VISUAL_VERSION
from elegance.errors import ContractError, DomainError, FormatError
from elegance.signal.waveform import Waveform
from elegance.simkit.speakers import SyntheticSpeakerSpec
from elegance.utils import seeded_rng

IDENTITY_SALT = 15485863
IMPAIR_SALT = 32452843
N_ENVELOPE_CHANNELS = 5
LOW_BAND_EDGES_HZ = (0.0, 250.0, 500.0, 750.0, 1000.0)
VISUAL_HEADER = struct.Struct("<4sHIHf")


class Impairment(IntEnum):
    CLEAN = 0
    OCCLUDED = 1
    LOW_RES = 2
    MISSING = 3


IMPAIRMENT_KINDS = (Impairment.OCCLUDED, Impairment.LOW_RES, Impairment.MISSING)


@dataclass(frozen=True)
class VisualStream:
    """Per-frame feature matrix (F x d_v) standing in for lip features."""

    features: np.ndarray
    fps: float
    impairment_mask: np.ndarray

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float32)
        mask = np.asarray(self.impairment_mask, dtype=np.uint8)
        if features.ndim != 2 or features.shape[0] == 0:
            raise ContractError(f"Visual features must be (F, d_v), got {features.shape}")
        if mask.shape != (features.shape[0],):
            raise ContractError(
                f"Impairment mask shape {mask.shape} does not match {features.shape[0]} frames"
            )
        if np.any(features[mask == Impairment.MISSING] != 0.0):
            raise ContractError("MISSING frames must be zero vectors")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "impairment_mask", mask)
        object.__setattr__(self, "fps", float(self.fps))

    @property
    def n_frames(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])


def frame_count(duration_s: float, fps: float) -> int:
    return int(round(duration_s * fps))


def derive_visual_stream(
    source: Waveform,
    spec: SyntheticSpeakerSpec,
    fps: float = VISUAL_FPS,
    d_v: int = 16,
    seed: int = 0,
) -> VisualStream:
    """Lip-sync stand-in: log-energy and low-band channels plus a speaker identity vector.

    `seed` selects the corpus-wide identity table; the identity channels are
    constant for a speaker within one corpus.
    """
    if d_v < 8:
        raise ContractError(f"d_v must be at least 8, got {d_v}")
    n_frames = frame_count(source.duration_s, fps)
    bounds = np.round(np.arange(n_frames + 1) * source.sample_rate / fps).astype(int)
    bounds[-1] = len(source)

    envelope = np.empty((n_frames, N_ENVELOPE_CHANNELS))
    for f in range(n_frames):
        chunk = source.samples[bounds[f] : bounds[f + 1]]
        if chunk.size == 0:
            envelope[f] = np.log(LOG_FLOOR)
            continue
        envelope[f, 0] = np.log(np.mean(np.square(chunk)) + LOG_FLOOR)
        spectrum = np.abs(np.fft.rfft(chunk)) / chunk.size
        freqs = np.fft.rfftfreq(chunk.size, 1.0 / source.sample_rate)
        for b in range(4):
            sel = (freqs >= LOW_BAND_EDGES_HZ[b]) & (freqs < LOW_BAND_EDGES_HZ[b + 1])
            magnitude = float(spectrum[sel].mean()) if np.any(sel) else 0.0
            envelope[f, 1 + b] = np.log(magnitude + LOG_FLOOR)

    identity = seeded_rng(IDENTITY_SALT, seed, spec.speaker_id).normal(size=d_v - N_ENVELOPE_CHANNELS)
    features = np.concatenate([envelope, np.tile(identity, (n_frames, 1))], axis=1)
    return VisualStream(features, fps, np.zeros(n_frames, dtype=np.uint8))


def parse_impairment(kind: Impairment | int | str) -> Impairment:
    try:
        if isinstance(kind, str):
            return Impairment[kind.upper()]
        return Impairment(int(kind))
    except (KeyError, ValueError) as e:
        raise DomainError(f"Unknown impairment kind {kind!r}") from e


def impaired_frame_count(ratio: float, n_frames: int) -> int:
    """round(ratio * F), halves rounded up."""
    return int(np.floor(ratio * n_frames + 0.5))


def apply_visual_impairment(
    stream: VisualStream,
    kind: Impairment | int | str,
    ratio: float,
    seed: int,
) -> VisualStream:
    """Impair one contiguous run of round(ratio * F) frames starting at a seeded frame."""
    kind = parse_impairment(kind)
    if not 0.0 <= ratio <= 1.0:
        raise DomainError(f"Impairment ratio must be in [0, 1], got {ratio}")
    n_frames, dim = stream.features.shape
    count = impaired_frame_count(ratio, n_frames)
    if kind == Impairment.CLEAN or count == 0:
        return VisualStream(stream.features.copy(), stream.fps, stream.impairment_mask.copy())

    rng = seeded_rng(IMPAIR_SALT, seed)
    start = int(rng.integers(0, n_frames - count + 1))
    span = slice(start, start + count)
    features = stream.features.copy()
    mask = stream.impairment_mask.copy()

    if kind == Impairment.MISSING:
        features[span] = 0.0
    elif kind == Impairment.OCCLUDED:
        width = dim // 2
        first = int(rng.integers(0, dim - width + 1))
        obstacle = rng.normal(size=width).astype(np.float32)
        features[span, first : first + width] = obstacle
    else:
        blurred = uniform_filter1d(stream.features.astype(np.float64), size=3, axis=0, mode="nearest")
        sigma = 0.5 * stream.features.astype(np.float64).std(axis=0)
        noise = rng.normal(size=(count, dim)) * sigma
        features[span] = (blurred[span] + noise).astype(np.float32)
    mask[span] = kind
    return VisualStream(features, stream.fps, mask)


def write_visual_stream(path: Path | str, stream: VisualStream) -> Path:
    path = Path(path)
    header = VISUAL_HEADER.pack(
        VISUAL_MAGIC, VISUAL_VERSION, stream.n_frames, stream.dim, stream.fps
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(stream.features, dtype="<f4").tobytes())
        fh.write(stream.impairment_mask.astype(np.uint8).tobytes())
    return path


def read_visual_stream(path: Path | str) -> VisualStream:
    data = Path(path).read_bytes()
    if len(data) < VISUAL_HEADER.size:
        raise FormatError(f"{path}: truncated visual stream header")
    magic, version, n_frames, dim, fps = VISUAL_HEADER.unpack_from(data)
    if magic != VISUAL_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VISUAL_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    n_values = n_frames * dim
    expected = VISUAL_HEADER.size + 4 * n_values + n_frames
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    offset = VISUAL_HEADER.size
    features = np.frombuffer(data, dtype="<f4", count=n_values, offset=offset).reshape(n_frames, dim)
    mask = np.frombuffer(data, dtype=np.uint8, count=n_frames, offset=offset + 4 * n_values)
    return VisualStream(features.copy(), fps, mask.copy())
