from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import torch
import torch.nn as nn

from elegance.backbone.checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from elegance.backbone.model import AVTSEModel, BackboneConfig, BackboneKind, build_backbone
from elegance.errors import ConfigError, EmbeddingLookupError, TrainingError
from elegance.guidance.bundle import (
    GuidanceBundle,
    GuidanceConfig,
    PslmStandin,
    Strategy,
    check_provider_dim,
)
from elegance.guidance.input_prior import PriorChoice, build_prior_fusion, sample_prior_drop
from elegance.guidance.intermediate import apply_intermediate_freeze, intermediate_ntp_loss
from elegance.guidance.objective import compose_objective
from elegance.guidance.output import output_constraint_loss
from elegance.lmcore.embeddings import EmbeddingProvider, ToyLMProvider, coverage, import_embeddings
from elegance.lmcore.model import LmConfig, LmMode, ToyLM
from elegance.lmcore.pretrain import load_lm, pretrain_lm, save_lm
from elegance.simkit.dataset import Manifest, load_samples
from elegance.simkit.mixtures import MixtureSample
from elegance.trainer.data import Batch, collate, make_batches, split_samples
from elegance.trainer.losses import si_sdr_db, si_sdr_loss
from elegance.trainer.schedule import PATIENCE_HALVE, PATIENCE_STOP, TrainState, is_improvement, lr_schedule_update
from elegance.utils import append_jsonl, get_time_str, log_final, log_summary, seeded_rng

logger = logging.getLogger(__name__)

LOG_NAME = "train_log.jsonl"
BEST_NAME = "best.pt"
LAST_NAME = "last.pt"
LM_NAME = "lm.pt"


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 8
    max_epochs: int = 30
    patience_halve: int = PATIENCE_HALVE
    patience_stop: int = PATIENCE_STOP
    seed: int = 0
    val_fraction: float = 0.2
    pretrained_checkpoint: Optional[str] = None
    lm_checkpoint: Optional[str] = None
    lm_pretrain_steps: int = 300
    pslm_hidden_dim: int = 64
    pslm_seed: int = 1234


def validate_train_config(cfg: TrainConfig) -> None:
    if cfg.lr <= 0:
        raise ConfigError(f"train.lr must be positive, got {cfg.lr}")
    for name in ("batch_size", "max_epochs", "patience_halve", "patience_stop"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"train.{name} must be >= 1, got {getattr(cfg, name)}")
    if not 0.0 < cfg.val_fraction < 1.0:
        raise ConfigError(f"train.val_fraction must lie in (0, 1), got {cfg.val_fraction}")


def build_model(backbone_cfg: BackboneConfig, guidance_cfg: GuidanceConfig) -> AVTSEModel:
    """Backbone with the INPUT fusion layer attached when that strategy is selected."""
    fusion = None
    if Strategy(guidance_cfg.strategy) == Strategy.INPUT:
        fusion = build_prior_fusion(guidance_cfg, backbone_cfg.enc_dim)
    return build_backbone(backbone_cfg, fusion)


def configs_from_checkpoint(payload: dict[str, Any]) -> tuple[BackboneConfig, GuidanceConfig]:
    stored = payload.get("config") or {}
    if "backbone" not in stored:
        raise ConfigError("Checkpoint does not echo a backbone config")
    backbone = dict(stored["backbone"])
    backbone["kind"] = BackboneKind(backbone["kind"])
    guidance = dict(stored.get("guidance") or {})
    if "strategy" in guidance:
        guidance["strategy"] = Strategy(guidance["strategy"])
    return BackboneConfig(**backbone), GuidanceConfig(**guidance)


def load_model(path: Path | str) -> tuple[AVTSEModel, GuidanceConfig]:
    """Rebuild the inference model of a training checkpoint; guidance-only modules are not loaded."""
    backbone_cfg, guidance_cfg = configs_from_checkpoint(read_checkpoint(path))
    model = build_model(backbone_cfg, guidance_cfg)
    load_checkpoint(path, {"model": model})
    model.eval()
    return model, guidance_cfg


class Trainer:
    """Single-writer training loop for one strategy.

    Holds the extractor, the strategy's adapters and whichever of LM, PSLM and
    text provider the strategy needs, plus the optimizer and the schedule state.
    """

    def __init__(
        self,
        model: AVTSEModel,
        bundle: GuidanceBundle,
        train_cfg: TrainConfig,
        lm: Optional[ToyLM] = None,
        pslm: Optional[PslmStandin] = None,
        provider: Optional[EmbeddingProvider] = None,
        out_dir: Optional[Path | str] = None,
        run_config: Optional[dict[str, Any]] = None,
    ):
        validate_train_config(train_cfg)
        self.model = model
        self.bundle = bundle
        self.cfg = train_cfg
        self.guidance_cfg = bundle.cfg
        self.strategy = bundle.strategy
        self.lm = lm
        self.pslm = pslm
        self.provider = provider
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.run_config = run_config or {
            "backbone": asdict(model.cfg),
            "guidance": asdict(bundle.cfg),
            "train": asdict(train_cfg),
        }
        self._check_components()
        self.optimizer = torch.optim.Adam(
            [p for _, p in self._named_trainable()], lr=train_cfg.lr, betas=(0.9, 0.999), eps=1e-8
        )
        self.state = TrainState(current_lr=train_cfg.lr)
        self.history: list[dict[str, Any]] = []

    def _check_components(self) -> None:
        if self.strategy == Strategy.OUTPUT and (self.pslm is None or self.provider is None):
            raise ConfigError("OUTPUT guidance needs a PSLM and a text provider")
        if self.strategy == Strategy.INTERMEDIATE and self.lm is None:
            raise ConfigError("INTERMEDIATE guidance needs a cross-attention LM")
        if self.strategy == Strategy.INPUT:
            if self.provider is None or not self.model.uses_prior:
                raise ConfigError("INPUT guidance needs a text provider and a model with prior fusion")
        if self.provider is not None:
            check_provider_dim(self.provider, self.guidance_cfg)

    def modules(self) -> dict[str, nn.Module]:
        modules = {"model": self.model, "bundle": self.bundle}
        if self.strategy == Strategy.INTERMEDIATE:
            modules["lm"] = self.lm
        return modules

    def _named_trainable(self) -> list[tuple[str, nn.Parameter]]:
        return [
            (f"{prefix}.{name}", p)
            for prefix, module in self.modules().items()
            for name, p in module.named_parameters()
        ]

    def _set_lr(self, lr: float) -> None:
        for group in self.optimizer.param_groups:
            group["lr"] = lr

    def _priors(self, batch: Batch, epoch: int) -> Optional[torch.Tensor]:
        """Per-sample Bernoulli(p) choice between the utterance embedding and ZERO."""
        if self.strategy != Strategy.INPUT:
            return None
        rows = []
        for index, text in zip(batch.indices, batch.transcripts):
            choice = sample_prior_drop(self.guidance_cfg.p, seeded_rng(self.cfg.seed, index, epoch))
            if choice == PriorChoice.USE_EMB:
                rows.append(np.asarray(self.provider.utterance_embedding(text), dtype=np.float64))
            else:
                rows.append(np.zeros(self.provider.dim))
        return torch.as_tensor(np.stack(rows), dtype=batch.mixture.dtype)

    def _guidance_loss(self, estimate: torch.Tensor, acoustic: torch.Tensor, batch: Batch) -> Optional[torch.Tensor]:
        if self.strategy == Strategy.OUTPUT:
            return output_constraint_loss(estimate, batch.transcripts, self.bundle, self.pslm, self.provider)
        if self.strategy == Strategy.INTERMEDIATE:
            return intermediate_ntp_loss(acoustic, batch.transcripts, self.bundle, self.lm)
        return None

    def _check_gradients(self) -> None:
        for name, p in self._named_trainable():
            if p.grad is not None and not torch.isfinite(p.grad).all():
                raise TrainingError(
                    f"Non-finite gradient in {name} at epoch {self.state.epoch} step {self.state.step}"
                )

    def train_step(self, batch: Batch) -> dict[str, Any]:
        """One optimizer update; returns the loss components separately."""
        for module in self.modules().values():
            module.train()
        step = self.state.step
        try:
            estimate, inter = self.model(batch.mixture, batch.visual, self._priors(batch, self.state.epoch))
            si = si_sdr_loss(estimate, batch.reference)
            guidance = self._guidance_loss(estimate, inter.X_a, batch)
            total = compose_objective(self.strategy, si, guidance, self.guidance_cfg, step=step)
        except TrainingError as e:
            raise TrainingError(f"Epoch {self.state.epoch} step {step}: {e}") from e
        self.optimizer.zero_grad(set_to_none=True)
        total.backward()
        self._check_gradients()
        self.optimizer.step()
        self.state = replace(self.state, step=step + 1)
        record = {
            "step": step,
            "loss": float(total.item()),
            "si_sdr_loss": float(si.item()),
            "guidance_loss": None if guidance is None else float(guidance.item()),
        }
        logger.debug(f"step {step}: loss {record['loss']:.4f} (si-sdr {record['si_sdr_loss']:.4f})")
        return record

    def validate(self, samples: Sequence[MixtureSample]) -> float:
        """Negative mean SI-SDR over the samples, ZERO prior, no guidance modules."""
        dtype = next(self.model.parameters()).dtype
        self.model.eval()
        total = 0.0
        with torch.no_grad():
            for k in range(0, len(samples), self.cfg.batch_size):
                chunk = samples[k : k + self.cfg.batch_size]
                batch = collate(chunk, range(k, k + len(chunk)), dtype)
                estimate, _ = self.model(batch.mixture, batch.visual)
                total += float(si_sdr_db(estimate, batch.reference).sum().item())
        return -total / len(samples)

    def checkpoint(self, path: Path | str) -> Path:
        return save_checkpoint(path, self.modules(), self.run_config, self.optimizer, asdict(self.state))

    def resume(self, path: Path | str) -> TrainState:
        """Restore parameters, optimizer moments and schedule state from a checkpoint."""
        payload = load_checkpoint(path, self.modules(), self.optimizer)
        self.state = TrainState(**payload["train_state"])
        self._set_lr(self.state.current_lr)
        logger.info(f"📨 Resumed from {path} at epoch {self.state.epoch}, step {self.state.step}")
        return self.state

    def fit(self, train: Sequence[MixtureSample], val: Sequence[MixtureSample]) -> TrainState:
        if not train or not val:
            raise ConfigError("Training needs non-empty train and validation sets")
        dtype = next(self.model.parameters()).dtype
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        start_time = time.time()

        while self.state.epoch < self.cfg.max_epochs and not self.state.stop:
            epoch = self.state.epoch
            if self.strategy == Strategy.INTERMEDIATE:
                apply_intermediate_freeze(self.lm, epoch, self.guidance_cfg.unfreeze_epochs)
            records = [self.train_step(b) for b in make_batches(train, self.cfg.batch_size, self.cfg.seed, epoch, dtype)]
            val_loss = self.validate(val)
            lr_used = self.state.current_lr
            improved = is_improvement(val_loss, self.state.best_val_loss)
            self.state = lr_schedule_update(self.state, val_loss, self.cfg.patience_halve, self.cfg.patience_stop)
            self._set_lr(self.state.current_lr)

            guidance = [r["guidance_loss"] for r in records if r["guidance_loss"] is not None]
            entry = {
                "epoch": epoch,
                "steps": self.state.step,
                "train_loss": float(np.mean([r["loss"] for r in records])),
                "si_sdr_loss": float(np.mean([r["si_sdr_loss"] for r in records])),
                "guidance_loss": float(np.mean(guidance)) if guidance else None,
                "val_loss": val_loss,
                "best_val_loss": self.state.best_val_loss,
                "lr": lr_used,
                "halvings": self.state.halvings,
                "improved": improved,
            }
            self.history.append(entry)
            if self.out_dir is not None:
                append_jsonl(self.out_dir / LOG_NAME, entry)
                self.checkpoint(self.out_dir / LAST_NAME)
                if improved:
                    self.checkpoint(self.out_dir / BEST_NAME)
            log_summary(
                f"{'✅' if improved else '⏳'} Epoch {epoch}: train {entry['train_loss']:.3f}, "
                f"val {val_loss:.3f} (best {self.state.best_val_loss:.3f}), lr {lr_used:.2e}"
            )

        if self.state.stop:
            logger.info(f"⚠️ Stopped after {self.state.epochs_since_improve} epochs without improvement")
        log_final(
            f"✅ {self.strategy.value} training finished: {self.state.epoch} epochs, {self.state.step} steps, "
            f"best val SI-SDR {-self.state.best_val_loss:.3f} dB ({get_time_str(start_time)})"
        )
        return self.state


def pretrained_text_lm(
    lm_cfg: LmConfig,
    transcripts: Sequence[str],
    train_cfg: TrainConfig,
    out_dir: Optional[Path] = None,
) -> ToyLM:
    """Vanilla toy LM, loaded from train.lm_checkpoint or pretrained on the transcripts."""
    if train_cfg.lm_checkpoint:
        lm = load_lm(train_cfg.lm_checkpoint)
        logger.info(f"📨 Loaded toy LM from {train_cfg.lm_checkpoint}")
        return lm
    torch.manual_seed(train_cfg.seed)
    lm = ToyLM(replace(lm_cfg, with_cross_attention=False))
    pretrain_lm(lm, transcripts, steps=train_cfg.lm_pretrain_steps, seed=train_cfg.seed)
    if out_dir is not None:
        save_lm(out_dir / LM_NAME, lm)
    return lm


def prepare_guidance(
    backbone_cfg: BackboneConfig,
    guidance_cfg: GuidanceConfig,
    train_cfg: TrainConfig,
    lm_cfg: LmConfig,
    transcripts: Sequence[str],
    out_dir: Optional[Path] = None,
) -> tuple[Optional[ToyLM], Optional[PslmStandin], Optional[EmbeddingProvider]]:
    """(cross-attention LM, PSLM, text provider) as the strategy needs them."""
    strategy = Strategy(guidance_cfg.strategy)
    lm = pslm = provider = None
    if strategy in (Strategy.OUTPUT, Strategy.INPUT):
        if guidance_cfg.provider.startswith("imported:"):
            provider = import_embeddings(guidance_cfg.provider.split(":", 1)[1], expected_dim=guidance_cfg.text_dim)
            missing = coverage(provider, transcripts)
            if missing:
                raise EmbeddingLookupError(f"{len(missing)} training transcripts missing from {provider.tag!r}")
        else:
            provider = ToyLMProvider(pretrained_text_lm(lm_cfg, transcripts, train_cfg, out_dir))
    if strategy == Strategy.OUTPUT:
        pslm = PslmStandin(
            backbone_cfg.kernel,
            backbone_cfg.stride,
            guidance_cfg.speech_dim,
            train_cfg.pslm_hidden_dim,
            train_cfg.pslm_seed,
        )
    if strategy == Strategy.INTERMEDIATE:
        if LmMode(lm_cfg.mode) != LmMode.CAUSAL:
            raise ConfigError("INTERMEDIATE guidance needs a CAUSAL LM")
        if lm_cfg.model_dim != guidance_cfg.text_dim:
            raise ConfigError(f"LM model_dim {lm_cfg.model_dim} differs from guidance.text_dim {guidance_cfg.text_dim}")
        vanilla = pretrained_text_lm(lm_cfg, transcripts, train_cfg, out_dir)
        lm = ToyLM(replace(vanilla.cfg, with_cross_attention=True, cross_scale=guidance_cfg.alpha, cross_input_dim=None))
        lm.load_state_dict(vanilla.state_dict(), strict=False)
    return lm, pslm, provider


def run_training(
    manifest: Manifest,
    backbone_cfg: BackboneConfig,
    guidance_cfg: GuidanceConfig,
    train_cfg: TrainConfig,
    lm_cfg: LmConfig,
    out_dir: Path | str,
    run_config: Optional[dict[str, Any]] = None,
) -> Trainer:
    """Train one strategy end to end; writes the JSON-lines log and best/last checkpoints to out_dir."""
    validate_train_config(train_cfg)
    if Strategy(guidance_cfg.strategy) == Strategy.INTERMEDIATE and not train_cfg.pretrained_checkpoint:
        raise ConfigError("INTERMEDIATE guidance fine-tunes a trained extractor; set train.pretrained_checkpoint")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = load_samples(manifest)
    train, val = split_samples(samples, train_cfg.val_fraction)
    logger.info(f"⏳ {len(train)} training and {len(val)} validation samples from {manifest.root}")

    torch.manual_seed(train_cfg.seed)
    model = build_model(backbone_cfg, guidance_cfg)
    if train_cfg.pretrained_checkpoint:
        load_checkpoint(train_cfg.pretrained_checkpoint, {"model": model})
        logger.info(f"📨 Fine-tuning from {train_cfg.pretrained_checkpoint}")
    bundle = GuidanceBundle(guidance_cfg, backbone_cfg.enc_dim)
    transcripts = sorted({s.transcript() for s in train})
    lm, pslm, provider = prepare_guidance(backbone_cfg, guidance_cfg, train_cfg, lm_cfg, transcripts, out_dir)
    trainer = Trainer(model, bundle, train_cfg, lm, pslm, provider, out_dir, run_config)
    trainer.fit(train, val)
    return trainer
