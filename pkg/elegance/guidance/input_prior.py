from __future__ import annotations

from enum import Enum
from typing import Optional

import numpy as np
import torch
import torch.nn as nn

from elegance.errors import ConfigError, ContractError


class AttentivePooling(nn.Module):
    """softmax_t(w^T tanh(W x_t)) weighted mean over frames: [B, T, D] -> [B, D]."""

    def __init__(self, dim: int, hidden_dim: Optional[int] = None):
        super().__init__()
        self.proj = nn.Linear(dim, hidden_dim or dim)
        self.score = nn.Linear(hidden_dim or dim, 1, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        weights = torch.softmax(self.score(torch.tanh(self.proj(x))), dim=1)
        return (weights * x).sum(dim=1)


class GatedUnit(nn.Module):
    """g = sigmoid(W_g [ctx; y]), out = g * ctx + (1 - g) * W_y y; W_g and W_y start at zero."""

    def __init__(self, dim: int, prior_dim: int):
        super().__init__()
        self.gate = nn.Linear(dim + prior_dim, dim)
        self.value = nn.Linear(prior_dim, dim)
        for layer in (self.gate, self.value):
            nn.init.zeros_(layer.weight)
            nn.init.zeros_(layer.bias)

    def forward(self, ctx: torch.Tensor, prior: torch.Tensor) -> torch.Tensor:
        g = torch.sigmoid(self.gate(torch.cat([ctx, prior], dim=-1)))
        return g * ctx + (1.0 - g) * self.value(prior)


class GatedPriorFusion(nn.Module):
    """Pools the mixture embedding to a context, gates it against the text prior,
    broadcasts it over time and projects [context; X] to the gated width D'.

    [B, T, enc_dim], [B, C] -> [B, T, D']
    """

    def __init__(self, enc_dim: int, prior_dim: int, gated_dim: int):
        super().__init__()
        self.enc_dim = enc_dim
        self.prior_dim = prior_dim
        self.out_dim = gated_dim
        self.pool = AttentivePooling(enc_dim)
        self.norm = nn.LayerNorm(enc_dim)
        self.ctx_proj = nn.Linear(enc_dim, gated_dim)
        self.gate = GatedUnit(gated_dim, prior_dim)
        self.out_proj = nn.Linear(gated_dim + enc_dim, gated_dim)

    def context(self, x: torch.Tensor, prior: torch.Tensor) -> torch.Tensor:
        ctx = self.ctx_proj(torch.relu(self.norm(self.pool(x))))
        return self.gate(ctx, prior)

    def forward(self, x: torch.Tensor, prior: torch.Tensor) -> torch.Tensor:
        if prior.shape != (x.shape[0], self.prior_dim):
            raise ConfigError(f"Text prior has shape {tuple(prior.shape)}, expected ({x.shape[0]}, {self.prior_dim})")
        if x.shape[-1] != self.enc_dim:
            raise ContractError(f"Mixture embedding has {x.shape[-1]} channels, expected {self.enc_dim}")
        ctx = self.context(x, prior)
        upsampled = ctx.unsqueeze(1).expand(-1, x.shape[1], -1)
        return self.out_proj(torch.cat([upsampled, x], dim=-1))


def input_prior_fuse(
    x: torch.Tensor,
    prior: Optional[torch.Tensor],
    fusion: GatedPriorFusion,
) -> torch.Tensor:
    """Fuse a pooled text embedding into X; None selects the ZERO embedding."""
    if prior is None:
        prior = x.new_zeros(x.shape[0], fusion.prior_dim)
    return fusion(x, prior)


class PriorChoice(str, Enum):
    USE_EMB = "USE_EMB"
    USE_ZERO = "USE_ZERO"


def sample_prior_drop(p: float, rng: np.random.Generator) -> PriorChoice:
    """Keep the text embedding with probability p, otherwise substitute the zero embedding."""
    if not 0.0 <= p <= 1.0:
        raise ContractError(f"Keep probability must lie in [0, 1], got {p}")
    return PriorChoice.USE_EMB if rng.random() < p else PriorChoice.USE_ZERO


def build_prior_fusion(cfg, enc_dim: int) -> GatedPriorFusion:
    """Fusion layer for INPUT guidance; it stays in the model at inference and is fed ZERO there."""
    return GatedPriorFusion(enc_dim, cfg.text_dim, cfg.gated_dim)
