from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np

from elegance.config import (
    DEFAULT_SAMPLE_RATE,
    SNR_RANGE_DB,
    SUPPORTED_SAMPLE_RATES,
    SWITCH_MIN_DURATION_S,
    SWITCH_WINDOW_S,
    VISUAL_FPS,
)
from elegance.errors import ConfigError
from elegance.signal.waveform import Waveform, mix_at_snr
from elegance.simkit.speakers import (
    HELD_OUT_LEXICON,
    Language,
    parse_languages,
    sample_transcript,
    speaker_spec,
)
from elegance.simkit.synth import synth_utterance
from elegance.simkit.visual import (
    IMPAIRMENT_KINDS,
    Impairment,
    VisualStream,
    apply_visual_impairment,
    derive_visual_stream,
)
from elegance.utils import seeded_rng

MIX_SALT = 2038074743
SNR_SALT = 1299709
IMPAIRMENT_SALT = 179424673
SWITCH_SALT = 86028121


class Scenario(str, Enum):
    CORE = "CORE"
    IMPAIRED = "IMPAIRED"
    MONOLINGUAL = "MONOLINGUAL"
    SWITCHING = "SWITCHING"
    THREE_SPK = "THREE_SPK"
    CROSS_DOMAIN = "CROSS_DOMAIN"


@dataclass
class SampleConfig:
    """Generation policy for one sample; shared by mixture and switching samples."""

    n_interferers: int = 1
    duration_s: float = 2.0
    sample_rate: int = DEFAULT_SAMPLE_RATE
    fps: float = VISUAL_FPS
    visual_dim: int = 16
    impairment: bool = False
    languages: List[str] = field(default_factory=lambda: [lang.value for lang in Language])
    n_speakers: int = 16
    speaker_offset: int = 0
    held_out_lexicon: bool = False
    snr_low_db: float = SNR_RANGE_DB[0]
    snr_high_db: float = SNR_RANGE_DB[1]
    switching: bool = False
    scale: float = 1.0
    switch_low_s: float = SWITCH_WINDOW_S[0]
    switch_high_s: float = SWITCH_WINDOW_S[1]
    min_switch_duration_s: float = SWITCH_MIN_DURATION_S
    identity_seed: int = 0


def resolve_scenario(cfg: SampleConfig) -> Scenario:
    if cfg.switching:
        return Scenario.SWITCHING
    if cfg.held_out_lexicon:
        return Scenario.CROSS_DOMAIN
    if cfg.n_interferers == 2:
        return Scenario.THREE_SPK
    if cfg.impairment:
        return Scenario.IMPAIRED
    if len(cfg.languages) == 1:
        return Scenario.MONOLINGUAL
    return Scenario.CORE


def validate_sample_config(cfg: SampleConfig) -> None:
    languages = parse_languages(cfg.languages)
    if cfg.n_interferers not in (1, 2):
        raise ConfigError(f"n_interferers must be 1 or 2, got {cfg.n_interferers}")
    if cfg.switching and cfg.n_interferers != 1:
        raise ConfigError("Switching samples use exactly one interferer")
    if cfg.duration_s <= 0:
        raise ConfigError(f"duration_s must be positive, got {cfg.duration_s}")
    if cfg.sample_rate not in SUPPORTED_SAMPLE_RATES:
        raise ConfigError(f"sample_rate {cfg.sample_rate} not in {SUPPORTED_SAMPLE_RATES}")
    if cfg.visual_dim < 8:
        raise ConfigError(f"visual_dim must be at least 8, got {cfg.visual_dim}")
    if cfg.snr_low_db > cfg.snr_high_db:
        raise ConfigError(f"SNR range [{cfg.snr_low_db}, {cfg.snr_high_db}] is empty")
    needed = cfg.n_interferers + (2 if cfg.switching else 1)
    if cfg.n_speakers < needed:
        raise ConfigError(f"n_speakers={cfg.n_speakers} cannot supply {needed} distinct speakers")
    if cfg.held_out_lexicon and languages != (Language.EN,):
        raise ConfigError("The held-out lexicon is English; set languages to [EN]")
    if cfg.scale <= 0:
        raise ConfigError(f"scale must be positive, got {cfg.scale}")


@dataclass
class TargetTrack:
    wave: Waveform
    transcript: str
    visual: VisualStream
    speaker_id: int
    language: Language
    start: int
    stop: int


@dataclass
class MixtureSample:
    mixture: Waveform
    targets: list[TargetTrack]
    interferers: list[Waveform]
    snr_db: list[float]
    scenario: Scenario
    seed: int
    switch_point_s: Optional[float] = None
    interferer_ids: list[int] = field(default_factory=list)
    impairment_kind: Impairment = Impairment.CLEAN
    impairment_ratio: float = 0.0
    scale: float = 1.0
    sample_id: str = ""

    def reference(self) -> Waveform:
        """All target tracks summed; for switching samples, the stitched reference."""
        total = np.zeros(len(self.mixture))
        for track in self.targets:
            total = total + track.wave.samples
        return Waveform(total, self.mixture.sample_rate)

    def visual(self) -> VisualStream:
        """The active target's visual stream, stitched at the switch frame."""
        first = self.targets[0].visual
        if len(self.targets) == 1:
            return first
        features = first.features.copy()
        mask = first.impairment_mask.copy()
        for track in self.targets[1:]:
            frame = int(round(track.start / self.mixture.sample_rate * first.fps))
            features[frame:] = track.visual.features[frame:]
            mask[frame:] = track.visual.impairment_mask[frame:]
        return VisualStream(features, first.fps, mask)

    def transcript(self) -> str:
        return " ".join(track.transcript for track in self.targets)

    def regions(self) -> list[tuple[int, int]]:
        return [(track.start, track.stop) for track in self.targets]


def draw_snrs(cfg: SampleConfig, seed: int) -> list[float]:
    rng = seeded_rng(SNR_SALT, seed)
    return [float(v) for v in rng.uniform(cfg.snr_low_db, cfg.snr_high_db, size=cfg.n_interferers)]


def draw_impairment(seed: int) -> tuple[Impairment, float]:
    """Kind with equal probability over the three impairments, ratio uniform on [0, 1]."""
    rng = seeded_rng(IMPAIRMENT_SALT, seed)
    kind = IMPAIRMENT_KINDS[int(rng.integers(len(IMPAIRMENT_KINDS)))]
    return kind, float(rng.uniform(0.0, 1.0))


def draw_switch_point(cfg: SampleConfig, seed: int) -> int:
    """Switch sample index, uniform on the scaled window and quantised to the sample grid."""
    rng = seeded_rng(SWITCH_SALT, seed)
    t = rng.uniform(cfg.switch_low_s * cfg.scale, cfg.switch_high_s * cfg.scale)
    return int(round(t * cfg.sample_rate))


def _speakers(cfg: SampleConfig, rng: np.random.Generator, count: int) -> list[int]:
    picks = rng.choice(cfg.n_speakers, size=count, replace=False)
    return [int(cfg.speaker_offset + p) for p in picks]


def _lexicon(cfg: SampleConfig):
    return HELD_OUT_LEXICON if cfg.held_out_lexicon else None


def _track(
    cfg: SampleConfig,
    speaker_id: int,
    rng: np.random.Generator,
    start: int,
    stop: int,
) -> tuple[TargetTrack, Waveform]:
    languages = parse_languages(cfg.languages)
    spec = speaker_spec(speaker_id, languages)
    duration = (stop - start) / cfg.sample_rate
    transcript = sample_transcript(rng, spec.language_tag, duration, _lexicon(cfg))
    voiced = synth_utterance(spec, transcript, duration, int(rng.integers(1 << 31)), cfg.sample_rate)
    total = int(round(cfg.duration_s * cfg.sample_rate))
    samples = np.zeros(total)
    samples[start:stop] = voiced.samples
    wave = Waveform(samples, cfg.sample_rate)
    visual = derive_visual_stream(wave, spec, cfg.fps, cfg.visual_dim, cfg.identity_seed)
    track = TargetTrack(wave, transcript, visual, speaker_id, spec.language_tag, start, stop)
    return track, wave


def _interferer(cfg: SampleConfig, speaker_id: int, rng: np.random.Generator) -> Waveform:
    languages = parse_languages(cfg.languages)
    spec = speaker_spec(speaker_id, languages)
    transcript = sample_transcript(rng, spec.language_tag, cfg.duration_s, _lexicon(cfg))
    return synth_utterance(spec, transcript, cfg.duration_s, int(rng.integers(1 << 31)), cfg.sample_rate)


def _impair(cfg: SampleConfig, sample: MixtureSample, seed: int) -> None:
    if not cfg.impairment:
        return
    kind, ratio = draw_impairment(seed)
    for k, track in enumerate(sample.targets):
        track.visual = apply_visual_impairment(track.visual, kind, ratio, seed * 2 + k)
    sample.impairment_kind = kind
    sample.impairment_ratio = ratio


def make_mixture_sample(cfg: SampleConfig, seed: int) -> MixtureSample:
    validate_sample_config(cfg)
    if cfg.switching:
        return make_switching_sample(cfg, seed)
    rng = seeded_rng(MIX_SALT, seed)
    total = int(round(cfg.duration_s * cfg.sample_rate))
    ids = _speakers(cfg, rng, cfg.n_interferers + 1)
    track, target = _track(cfg, ids[0], rng, 0, total)
    raw = [_interferer(cfg, sid, rng) for sid in ids[1:]]
    snrs = draw_snrs(cfg, seed)
    mixture, gains = mix_at_snr(target, raw, snrs)
    scaled = [Waveform(g * w.samples, cfg.sample_rate) for g, w in zip(gains, raw)]
    sample = MixtureSample(
        mixture=mixture,
        targets=[track],
        interferers=scaled,
        snr_db=snrs,
        scenario=resolve_scenario(cfg),
        seed=seed,
        interferer_ids=ids[1:],
        scale=cfg.scale,
    )
    _impair(cfg, sample, seed)
    return sample


def make_switching_sample(cfg: SampleConfig, seed: int) -> MixtureSample:
    """Target 1 speaks before the switch point, target 2 after; one interferer throughout."""
    validate_sample_config(cfg)
    minimum = cfg.min_switch_duration_s * cfg.scale
    if cfg.duration_s < minimum - 1e-9:
        raise ConfigError(
            f"Switching samples need duration >= {minimum:g}s (scale {cfg.scale:g}), "
            f"got {cfg.duration_s:g}s"
        )
    if cfg.switch_high_s * cfg.scale >= cfg.duration_s:
        raise ConfigError("Switch window must end before the sample does")
    rng = seeded_rng(MIX_SALT, seed)
    total = int(round(cfg.duration_s * cfg.sample_rate))
    switch = draw_switch_point(cfg, seed)
    ids = _speakers(cfg, rng, 3)
    first, _ = _track(cfg, ids[0], rng, 0, switch)
    second, _ = _track(cfg, ids[1], rng, switch, total)
    stitched = Waveform(first.wave.samples + second.wave.samples, cfg.sample_rate)
    raw = _interferer(cfg, ids[2], rng)
    snrs = draw_snrs(cfg, seed)
    mixture, gains = mix_at_snr(stitched, [raw], snrs)
    sample = MixtureSample(
        mixture=mixture,
        targets=[first, second],
        interferers=[Waveform(gains[0] * raw.samples, cfg.sample_rate)],
        snr_db=snrs,
        scenario=Scenario.SWITCHING,
        seed=seed,
        switch_point_s=switch / cfg.sample_rate,
        interferer_ids=[ids[2]],
        scale=cfg.scale,
    )
    _impair(cfg, sample, seed)
    return sample
