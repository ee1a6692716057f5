from __future__ import annotations

import logging
from typing import Sequence

import torch

from elegance.errors import ConfigError
from elegance.guidance.bundle import GuidanceBundle
from elegance.lmcore.model import LmMode, ToyLM, ntp_loss
from elegance.lmcore.tokenizer import tokenize_batch

logger = logging.getLogger(__name__)


def intermediate_ntp_loss(
    acoustic: torch.Tensor,
    transcripts: Sequence[str],
    bundle: GuidanceBundle,
    lm: ToyLM,
) -> torch.Tensor:
    """Next-token loss of the transcript with every LM block cross-attending to Linear(X_a)."""
    if not lm.cfg.with_cross_attention:
        raise ConfigError("Intermediate guidance needs an LM built with cross-attention")
    if bundle.acoustic_adapter is None:
        raise ConfigError(f"{bundle.strategy.value} bundle has no acoustic adapter")
    if bundle.cfg.alpha < 0:
        raise ConfigError(f"guidance.alpha must be >= 0, got {bundle.cfg.alpha}")
    ids = tokenize_batch(transcripts).to(acoustic.device)
    states = lm(ids, bundle.acoustic_adapter(acoustic), mode=LmMode.CAUSAL, cross_scale=bundle.cfg.alpha)
    return ntp_loss(states, ids)


def apply_intermediate_freeze(lm: ToyLM, epoch: int, unfreeze_epochs: int = 2) -> list[str]:
    """Whole LM trainable for the first `unfreeze_epochs` epochs, then only its cross-attention.

    Returns the names of the frozen LM parameters.
    """
    boost = epoch < unfreeze_epochs
    frozen = []
    for name, p in lm.vanilla_parameters():
        p.requires_grad_(boost)
        if not boost:
            frozen.append(name)
    for _, p in lm.cross_parameters():
        p.requires_grad_(True)
    if not boost and epoch == unfreeze_epochs:
        logger.info(f"🔒 Epoch {epoch}: froze {len(frozen)} vanilla LM tensors, cross-attention stays trainable")
    return frozen
