from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from functools import partial
from pathlib import Path
from typing import Any, Iterator, Optional

import numpy as np

from elegance.config import MAX_WORKERS
from elegance.errors import FormatError
from elegance.signal.waveform import read_wav, write_wav
from elegance.simkit.mixtures import (
    MixtureSample,
    SampleConfig,
    Scenario,
    TargetTrack,
    make_mixture_sample,
    validate_sample_config,
)
from elegance.simkit.speakers import Language
from elegance.simkit.visual import Impairment, read_visual_stream, write_visual_stream
from elegance.utils import get_time_str, log_summary, read_jsonl, sha256_file, write_jsonl

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"
# 64-bit float keeps stored components summing to the stored mixture
CORPUS_WAV_SUBTYPE = "DOUBLE"


@dataclass
class DatasetConfig:
    name: str = "core"
    n_samples: int = 200
    base_seed: int = 0
    sample: SampleConfig = field(default_factory=SampleConfig)
    max_workers: int = MAX_WORKERS


@dataclass
class ManifestRecord:
    sample_id: str
    files: dict[str, str]
    scenario: str
    seed: int
    snr_db: list[float]
    impairment_ratio: float
    language_tags: list[str]
    switch_point_s: Optional[float]
    impairment_kind: str = Impairment.CLEAN.name
    speaker_ids: list[int] = field(default_factory=list)
    interferer_ids: list[int] = field(default_factory=list)
    transcripts: list[str] = field(default_factory=list)
    regions: list[list[int]] = field(default_factory=list)
    scale: float = 1.0

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict[str, Any]) -> ManifestRecord:
        try:
            return cls(**payload)
        except TypeError as e:
            raise FormatError(f"Malformed manifest record: {e}") from e


@dataclass
class Manifest:
    records: list[ManifestRecord]
    root: Path

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ManifestRecord]:
        return iter(self.records)

    @property
    def path(self) -> Path:
        return self.root / MANIFEST_NAME

    def validate(self) -> None:
        seen: set[str] = set()
        for record in self.records:
            if record.sample_id in seen:
                raise FormatError(f"Duplicate sample_id {record.sample_id}")
            seen.add(record.sample_id)
            for role, rel in record.files.items():
                if not (self.root / rel).is_file():
                    raise FormatError(f"{record.sample_id}: missing {role} file {self.root / rel}")

    def checksum(self) -> str:
        return sha256_file(self.path)

    def transcripts(self) -> list[str]:
        return sorted({t for record in self.records for t in record.transcripts})

    def filter(self, scenarios: list[str] | None) -> list[ManifestRecord]:
        if not scenarios:
            return list(self.records)
        wanted = {Scenario(s.upper()).value for s in scenarios}
        return [r for r in self.records if r.scenario in wanted]

    def save(self) -> Path:
        write_jsonl(self.path, (r.to_dict() for r in self.records))
        return self.path

    @classmethod
    def load(cls, path: Path | str) -> Manifest:
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        if not path.is_file():
            raise FormatError(f"Manifest not found: {path}")
        records = [ManifestRecord.from_dict(r) for r in read_jsonl(path)]
        return cls(records, path.parent)


def sample_seeds(base_seed: int, n_samples: int) -> list[int]:
    return [
        int(np.random.SeedSequence([base_seed, i]).generate_state(1)[0])
        for i in range(n_samples)
    ]


def write_sample(sample: MixtureSample, root: Path) -> ManifestRecord:
    """Write audio and visual files for one sample and return its record."""
    sid = sample.sample_id
    files: dict[str, str] = {}

    def _put(role: str, rel: str, writer, payload) -> None:
        target = root / rel
        try:
            writer(target, payload)
        except OSError as e:
            raise OSError(f"Cannot write {target}: {e}") from e
        files[role] = rel

    write_audio = partial(write_wav, subtype=CORPUS_WAV_SUBTYPE)
    _put("mixture", f"audio/{sid}_mix.wav", write_audio, sample.mixture)
    for k, track in enumerate(sample.targets):
        _put(f"target{k}", f"audio/{sid}_target{k}.wav", write_audio, track.wave)
        _put(f"visual{k}", f"visual/{sid}_target{k}.elvs", write_visual_stream, track.visual)
    for k, interferer in enumerate(sample.interferers):
        _put(f"interferer{k}", f"audio/{sid}_interferer{k}.wav", write_audio, interferer)

    return ManifestRecord(
        sample_id=sid,
        files=files,
        scenario=sample.scenario.value,
        seed=sample.seed,
        snr_db=list(sample.snr_db),
        impairment_ratio=sample.impairment_ratio,
        language_tags=[t.language.value for t in sample.targets],
        switch_point_s=sample.switch_point_s,
        impairment_kind=Impairment(sample.impairment_kind).name,
        speaker_ids=[t.speaker_id for t in sample.targets],
        interferer_ids=list(sample.interferer_ids),
        transcripts=[t.transcript for t in sample.targets],
        regions=[[t.start, t.stop] for t in sample.targets],
        scale=sample.scale,
    )


def _generate(cfg: DatasetConfig, index: int, seed: int, root: Path) -> ManifestRecord:
    sample = make_mixture_sample(cfg.sample, seed)
    sample.sample_id = f"{cfg.name}-{index:05d}"
    return write_sample(sample, root)


def build_dataset(cfg: DatasetConfig, out_dir: Path | str) -> Manifest:
    """Generate cfg.n_samples samples under out_dir and write the manifest."""
    validate_sample_config(cfg.sample)
    root = Path(out_dir)
    (root / "audio").mkdir(parents=True, exist_ok=True)
    (root / "visual").mkdir(parents=True, exist_ok=True)

    start_time = time.time()
    seeds = sample_seeds(cfg.base_seed, cfg.n_samples)
    records: list[ManifestRecord | None] = [None] * cfg.n_samples
    with ThreadPoolExecutor(max_workers=max(1, cfg.max_workers)) as executor:
        futures = {
            executor.submit(_generate, cfg, i, seed, root): i for i, seed in enumerate(seeds)
        }
        for future in as_completed(futures):
            index = futures[future]
            try:
                records[index] = future.result()
            except Exception as e:
                logger.error(f"❌ Sample {index} (seed {seeds[index]}) failed: {e}")
                raise
            logger.debug(f"📨 Wrote sample {index}")

    manifest = Manifest([r for r in records if r is not None], root)
    manifest.save()
    manifest.validate()
    log_summary(
        f"✅ Dataset {cfg.name}: {len(manifest)} samples in {root} "
        f"({get_time_str(start_time)}), checksum {manifest.checksum()[:12]}"
    )
    return manifest


def load_sample(record: ManifestRecord, root: Path | str) -> MixtureSample:
    root = Path(root)
    mixture = read_wav(root / record.files["mixture"])
    rate = mixture.sample_rate
    targets = []
    for k, transcript in enumerate(record.transcripts):
        wave = read_wav(root / record.files[f"target{k}"], rate)
        visual = read_visual_stream(root / record.files[f"visual{k}"])
        start, stop = record.regions[k] if record.regions else (0, len(wave))
        targets.append(
            TargetTrack(
                wave=wave,
                transcript=transcript,
                visual=visual,
                speaker_id=record.speaker_ids[k],
                language=Language(record.language_tags[k]),
                start=int(start),
                stop=int(stop),
            )
        )
    interferers = [
        read_wav(root / record.files[f"interferer{k}"], rate) for k in range(len(record.snr_db))
    ]
    return MixtureSample(
        mixture=mixture,
        targets=targets,
        interferers=interferers,
        snr_db=list(record.snr_db),
        scenario=Scenario(record.scenario),
        seed=record.seed,
        switch_point_s=record.switch_point_s,
        interferer_ids=list(record.interferer_ids),
        impairment_kind=Impairment[record.impairment_kind],
        impairment_ratio=record.impairment_ratio,
        scale=record.scale,
        sample_id=record.sample_id,
    )


def load_samples(manifest: Manifest, records: list[ManifestRecord] | None = None) -> list[MixtureSample]:
    records = manifest.records if records is None else records
    return [load_sample(r, manifest.root) for r in records]