from __future__ import annotations

import logging
import time
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

import torch
import torch.nn.functional as F

from elegance.backbone.checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from elegance.errors import ConfigError, TrainingError
from elegance.lmcore.model import LmConfig, LmMode, ToyLM, next_token_loss
from elegance.lmcore.tokenizer import BOS_ID, EOS_ID, MASK_ID, PAD_ID, tokenize_batch
from elegance.utils import get_time_str, log_summary, seeded_rng

logger = logging.getLogger(__name__)

MLM_MASK_PROB = 0.15


def masked_token_loss(lm: ToyLM, ids: torch.Tensor, generator: torch.Generator) -> torch.Tensor:
    """RoBERTa-style objective: hide ~15% of the characters behind MASK and predict them."""
    maskable = (ids != PAD_ID) & (ids != BOS_ID) & (ids != EOS_ID)
    chosen = (torch.rand(ids.shape, generator=generator) < MLM_MASK_PROB) & maskable
    if not torch.any(chosen):
        first = torch.nonzero(maskable)[0]
        chosen[first[0], first[1]] = True
    corrupted = ids.masked_fill(chosen, MASK_ID)
    logits = lm(corrupted, mode=LmMode.BIDIRECTIONAL).logits
    targets = ids.masked_fill(~chosen, PAD_ID)
    return F.cross_entropy(logits.reshape(-1, logits.shape[-1]), targets.reshape(-1), ignore_index=PAD_ID)


def pretrain_lm(
    lm: ToyLM,
    transcripts: Sequence[str],
    steps: int = 300,
    lr: float = 1e-3,
    batch_size: int = 16,
    seed: int = 0,
) -> list[float]:
    """Fit the toy LM on transcripts: next-token prediction if CAUSAL, masked tokens if BIDIRECTIONAL."""
    if not transcripts:
        raise ConfigError("pretrain_lm needs at least one transcript")
    if lm.cfg.with_cross_attention:
        raise ConfigError("Pretrain the vanilla LM, then attach cross-attention")
    torch.manual_seed(seed)
    generator = torch.Generator().manual_seed(seed)
    optimizer = torch.optim.Adam(lm.parameters(), lr=lr)
    mode = LmMode(lm.cfg.mode)
    texts = sorted(set(transcripts))
    start_time = time.time()
    losses = []
    lm.train()
    for step in range(steps):
        rng = seeded_rng(seed, step)
        batch = [texts[i] for i in rng.integers(len(texts), size=min(batch_size, len(texts)))]
        ids = tokenize_batch(batch)
        if mode == LmMode.CAUSAL:
            loss = next_token_loss(lm(ids).logits, ids)
        else:
            loss = masked_token_loss(lm, ids, generator)
        if not torch.isfinite(loss):
            raise TrainingError(f"LM pretraining loss is {loss.item()} at step {step}")
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        losses.append(float(loss.item()))
        if step % 50 == 0:
            logger.debug(f"LM step {step}: loss {losses[-1]:.4f}")
    lm.eval()
    log_summary(
        f"✅ Pretrained {mode.value} toy LM on {len(texts)} transcripts: "
        f"loss {losses[0]:.3f} -> {losses[-1]:.3f} in {steps} steps ({get_time_str(start_time)})"
    )
    return losses


def save_lm(path: Path | str, lm: ToyLM) -> Path:
    return save_checkpoint(path, {"lm": lm}, asdict(lm.cfg))


def load_lm(path: Path | str, overrides: Optional[dict] = None) -> ToyLM:
    """Rebuild a saved LM; overrides (e.g. with_cross_attention) add fresh cross-attention layers."""
    stored = read_checkpoint(path)["config"]
    stored["mode"] = LmMode(stored["mode"])
    cfg = LmConfig(**{**stored, **(overrides or {})})
    lm = ToyLM(cfg)
    if cfg.with_cross_attention and not stored.get("with_cross_attention"):
        vanilla = ToyLM(LmConfig(**stored))
        load_checkpoint(path, {"lm": vanilla})
        missing = lm.load_state_dict(vanilla.state_dict(), strict=False).missing_keys
        logger.debug(f"Attached {len(missing)} fresh cross-attention tensors to {path}")
    else:
        load_checkpoint(path, {"lm": lm})
    return lm
