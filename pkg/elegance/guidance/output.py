from __future__ import annotations

from typing import Sequence

import torch

from elegance.errors import ConfigError
from elegance.guidance.bundle import GuidanceBundle, PslmStandin, check_provider_dim
from elegance.lmcore.embeddings import EmbeddingProvider, utterance_batch


def alignment_mse(z_hat: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
    """Mean over the aligned dimension (and batch) of the squared difference."""
    if z_hat.shape != z.shape:
        raise ConfigError(f"Aligned embeddings differ in shape: {tuple(z_hat.shape)} vs {tuple(z.shape)}")
    return torch.mean((z_hat - z) ** 2)


def output_constraint_loss(
    estimate: torch.Tensor,
    transcripts: Sequence[str],
    bundle: GuidanceBundle,
    pslm: PslmStandin,
    provider: EmbeddingProvider,
) -> torch.Tensor:
    """MSE between the adapted pooled PSLM view of the estimate and the adapted pooled text embedding.

    Gradient reaches the estimate through the frozen PSLM; the text side is a constant.
    """
    check_provider_dim(provider, bundle.cfg)
    if pslm.dim != bundle.cfg.speech_dim:
        raise ConfigError(f"PSLM has C'={pslm.dim} but guidance.speech_dim is {bundle.cfg.speech_dim}")
    if len(transcripts) != estimate.shape[0]:
        raise ConfigError(f"{len(transcripts)} transcripts for a batch of {estimate.shape[0]}")
    text_pooled = utterance_batch(provider, transcripts, dtype=estimate.dtype)
    speech_pooled = pslm(estimate).mean(dim=1)
    z_hat, z = bundle.aligned_pair(speech_pooled, text_pooled)
    return alignment_mse(z_hat, z)
