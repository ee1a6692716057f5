"""Experiment configuration: typed sections merged with YAML presets and dotlist overrides.

A run is fully described by its resolved ExperimentConfig; the CLI writes it
next to the outputs as config.snapshot.yaml, and feeding that file back via
--config reproduces the run.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, List, Optional

from omegaconf import OmegaConf
from omegaconf.errors import OmegaConfBaseException

from elegance.backbone.model import BackboneConfig, validate_backbone_config
from elegance.config import EXPERIMENTS_DIR
from elegance.errors import ConfigError
from elegance.guidance.bundle import GuidanceConfig, validate_guidance_config
from elegance.lmcore.model import LmConfig, validate_lm_config
from elegance.simkit.dataset import DatasetConfig
from elegance.simkit.mixtures import validate_sample_config
from elegance.trainer.loop import TrainConfig, validate_train_config
from elegance.utils import sha256_bytes

logger = logging.getLogger(__name__)

SNAPSHOT_NAME = "config.snapshot.yaml"


@dataclass
class EvalConfig:
    # checkpoint path, or one of the reference estimators "oracle" / "passthrough"
    checkpoint: Optional[str] = None
    scenarios: List[str] = field(default_factory=list)
    model_tag: Optional[str] = None
    use_text: bool = False
    pairing: str = "like-with-like"
    max_workers: int = 4
    case_models: List[str] = field(default_factory=list)
    case_sample: int = 0
    embeddings: Optional[str] = None


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    seed: Optional[int] = None
    # existing manifest (file or directory); simulated into the run directory when unset
    manifest: Optional[str] = None
    data: DatasetConfig = field(default_factory=DatasetConfig)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    lm: LmConfig = field(default_factory=LmConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)


def resolve_config_path(config: str) -> Path:
    """A YAML path, or a preset name under provisioning/experiments."""
    path = Path(config)
    if path.is_file():
        return path
    for candidate in (EXPERIMENTS_DIR / config, EXPERIMENTS_DIR / f"{config}.yaml"):
        if candidate.is_file():
            return candidate
    presets = sorted(p.stem for p in EXPERIMENTS_DIR.glob("*.yaml"))
    raise ConfigError(f"No config file or preset named {config!r}; presets: {presets}")


def load_experiment(
    config: Optional[str] = None,
    overrides: Optional[list[str]] = None,
    seed: Optional[int] = None,
) -> ExperimentConfig:
    layers = [OmegaConf.structured(ExperimentConfig)]
    try:
        if config:
            path = resolve_config_path(config)
            layers.append(OmegaConf.load(path))
            logger.debug(f"📨 Loaded config layer {path}")
        if overrides:
            layers.append(OmegaConf.from_dotlist(list(overrides)))
        if seed is not None:
            layers.append(OmegaConf.create({"seed": seed}))
        merged = OmegaConf.merge(*layers)
        cfg: ExperimentConfig = OmegaConf.to_object(merged)
    except OmegaConfBaseException as e:
        raise ConfigError(f"Invalid experiment config: {e}") from e
    apply_seed(cfg)
    validate_experiment(cfg)
    return cfg


def apply_seed(cfg: ExperimentConfig) -> None:
    """A top-level seed drives both data generation and training."""
    if cfg.seed is None:
        return
    cfg.data.base_seed = cfg.seed
    cfg.train.seed = cfg.seed


def validate_experiment(cfg: ExperimentConfig) -> None:
    validate_sample_config(cfg.data.sample)
    validate_backbone_config(cfg.backbone)
    validate_guidance_config(cfg.guidance)
    validate_train_config(cfg.train)
    validate_lm_config(cfg.lm)
    if cfg.data.n_samples < 1:
        raise ConfigError(f"data.n_samples must be positive, got {cfg.data.n_samples}")
    if cfg.data.sample.visual_dim != cfg.backbone.visual_dim:
        raise ConfigError(
            f"data.sample.visual_dim={cfg.data.sample.visual_dim} does not match "
            f"backbone.visual_dim={cfg.backbone.visual_dim}"
        )


def to_yaml(cfg: ExperimentConfig) -> str:
    return OmegaConf.to_yaml(OmegaConf.structured(cfg), sort_keys=True)


def to_plain(cfg: ExperimentConfig) -> dict[str, Any]:
    return OmegaConf.to_container(OmegaConf.structured(cfg), enum_to_str=True)


def config_hash(cfg: ExperimentConfig, verb: str = "") -> str:
    return sha256_bytes(f"{verb}\n{to_yaml(cfg)}".encode("utf-8"))[:10]


def write_snapshot(cfg: ExperimentConfig, run_dir: Path) -> Path:
    path = run_dir / SNAPSHOT_NAME
    path.write_text(to_yaml(cfg), encoding="utf-8")
    return path
