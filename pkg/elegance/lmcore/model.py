from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import NamedTuple, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from elegance.errors import ConfigError, ContractError
from elegance.lmcore.tokenizer import PAD_ID, VOCAB_SIZE

logger = logging.getLogger(__name__)


class LmMode(str, Enum):
    CAUSAL = "CAUSAL"
    BIDIRECTIONAL = "BIDIRECTIONAL"


@dataclass
class LmConfig:
    mode: LmMode = LmMode.CAUSAL
    n_blocks: int = 2
    model_dim: int = 64
    n_heads: int = 2
    with_cross_attention: bool = False
    cross_scale: float = 0.1
    cross_input_dim: Optional[int] = None
    max_len: int = 256
    vocab_size: int = VOCAB_SIZE
    mlp_ratio: int = 4


# Text widths of the pretrained providers the toy LM stands in for.
LM_PRESETS = {
    "toy": LmConfig(),
    "roberta-base": LmConfig(mode=LmMode.BIDIRECTIONAL, n_blocks=12, model_dim=768, n_heads=12, max_len=512),
    "qwen3-0.6b": LmConfig(mode=LmMode.CAUSAL, n_blocks=28, model_dim=1024, n_heads=16, max_len=1024),
    "qwen3-4b": LmConfig(mode=LmMode.CAUSAL, n_blocks=36, model_dim=2560, n_heads=32, max_len=1024),
}


def lm_preset(name: str, **overrides) -> LmConfig:
    if name not in LM_PRESETS:
        raise ConfigError(f"Unknown LM preset {name!r}; choose from {sorted(LM_PRESETS)}")
    return replace(LM_PRESETS[name], **overrides)


def validate_lm_config(cfg: LmConfig) -> None:
    if cfg.model_dim % cfg.n_heads:
        raise ConfigError(f"lm.model_dim {cfg.model_dim} is not divisible by n_heads {cfg.n_heads}")
    if cfg.cross_scale < 0:
        raise ConfigError(f"lm.cross_scale must be >= 0, got {cfg.cross_scale}")
    if cfg.n_blocks < 1 or cfg.max_len < 2:
        raise ConfigError("lm.n_blocks must be >= 1 and lm.max_len >= 2")
    try:
        LmMode(cfg.mode)
    except ValueError:
        raise ConfigError(f"Unknown LM mode {cfg.mode!r}")


class LmStates(NamedTuple):
    block_states: list[torch.Tensor]
    last_layer: torch.Tensor
    logits: torch.Tensor
    mode: LmMode


class SelfAttention(nn.Module):
    def __init__(self, dim: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = dim // n_heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor, causal: bool, key_padding: torch.Tensor) -> torch.Tensor:
        batch, length, dim = x.shape
        q, k, v = self.qkv(x).split(dim, dim=-1)
        q, k, v = (t.view(batch, length, self.n_heads, self.head_dim).transpose(1, 2) for t in (q, k, v))
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        blocked = key_padding[:, None, None, :]
        if causal:
            future = torch.ones(length, length, dtype=torch.bool, device=x.device).triu(1)
            blocked = blocked | future
        scores = scores.masked_fill(blocked, float("-inf"))
        out = torch.softmax(scores, dim=-1) @ v
        return self.proj(out.transpose(1, 2).reshape(batch, length, dim))


class CrossAttention(nn.Module):
    """Single-head attention from text states onto acoustic features; value path starts at zero."""

    def __init__(self, dim: int, input_dim: int):
        super().__init__()
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(input_dim, dim)
        self.v_proj = nn.Linear(input_dim, dim)
        for layer in (self.q_proj, self.k_proj, self.v_proj):
            nn.init.zeros_(layer.bias)
        nn.init.zeros_(self.v_proj.weight)
        self.scale = 1.0 / math.sqrt(dim)

    def forward(self, h: torch.Tensor, acoustic: torch.Tensor) -> torch.Tensor:
        scores = self.q_proj(h) @ self.k_proj(acoustic).transpose(-2, -1) * self.scale
        return torch.softmax(scores, dim=-1) @ self.v_proj(acoustic)


class LmBlock(nn.Module):
    def __init__(self, cfg: LmConfig):
        super().__init__()
        dim = cfg.model_dim
        self.ln1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, cfg.n_heads)
        self.ln2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, cfg.mlp_ratio * dim),
            nn.GELU(),
            nn.Linear(cfg.mlp_ratio * dim, dim),
        )
        self.cross = None
        if cfg.with_cross_attention:
            self.cross = CrossAttention(dim, cfg.cross_input_dim or dim)

    def forward(
        self,
        x: torch.Tensor,
        causal: bool,
        key_padding: torch.Tensor,
        acoustic: Optional[torch.Tensor],
        cross_scale: float,
    ) -> torch.Tensor:
        h = x + self.attn(self.ln1(x), causal, key_padding)
        h = h + self.mlp(self.ln2(h))
        if self.cross is not None:
            h = h + cross_scale * self.cross(h, acoustic)
        return h


def _init_weights(module: nn.Module) -> None:
    if isinstance(module, nn.Linear):
        nn.init.normal_(module.weight, mean=0.0, std=0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.Embedding):
        nn.init.normal_(module.weight, mean=0.0, std=0.02)


class ToyLM(nn.Module):
    """Character-level pre-LN transformer with optional per-block cross-attention onto acoustics."""

    def __init__(self, cfg: LmConfig):
        super().__init__()
        validate_lm_config(cfg)
        self.cfg = cfg
        self.token_emb = nn.Embedding(cfg.vocab_size, cfg.model_dim)
        self.pos_emb = nn.Embedding(cfg.max_len, cfg.model_dim)
        self.blocks = nn.ModuleList(LmBlock(cfg) for _ in range(cfg.n_blocks))
        self.ln_f = nn.LayerNorm(cfg.model_dim)
        self.head = nn.Linear(cfg.model_dim, cfg.vocab_size)
        self.apply(_init_weights)
        for block in self.blocks:
            if block.cross is not None:
                nn.init.zeros_(block.cross.v_proj.weight)

    @property
    def dim(self) -> int:
        return self.cfg.model_dim

    def vanilla_parameters(self) -> list[tuple[str, nn.Parameter]]:
        return [(n, p) for n, p in self.named_parameters() if ".cross." not in n]

    def cross_parameters(self) -> list[tuple[str, nn.Parameter]]:
        return [(n, p) for n, p in self.named_parameters() if ".cross." in n]

    def forward(
        self,
        ids: torch.Tensor,
        cross_inputs: Optional[torch.Tensor] = None,
        mode: Optional[LmMode] = None,
        cross_scale: Optional[float] = None,
    ) -> LmStates:
        if ids.dim() != 2:
            raise ContractError(f"Token ids must be [B, N], got {tuple(ids.shape)}")
        if ids.shape[1] > self.cfg.max_len:
            raise ContractError(f"Sequence of {ids.shape[1]} tokens exceeds max_len {self.cfg.max_len}")
        if self.cfg.with_cross_attention and cross_inputs is None:
            raise ConfigError("This LM has cross-attention; cross_inputs are required")
        if not self.cfg.with_cross_attention and cross_inputs is not None:
            raise ConfigError("cross_inputs supplied to an LM built without cross-attention")
        mode = LmMode(mode or self.cfg.mode)
        alpha = self.cfg.cross_scale if cross_scale is None else cross_scale
        if alpha < 0:
            raise ConfigError(f"cross_scale must be >= 0, got {alpha}")

        positions = torch.arange(ids.shape[1], device=ids.device)
        h = self.token_emb(ids) + self.pos_emb(positions)
        key_padding = ids == PAD_ID
        states = []
        for block in self.blocks:
            h = block(h, mode == LmMode.CAUSAL, key_padding, cross_inputs, alpha)
            states.append(h)
        last = self.ln_f(h)
        return LmStates(states, last, self.head(last), mode)


def next_token_loss(logits: torch.Tensor, ids: torch.Tensor) -> torch.Tensor:
    """Mean teacher-forced cross-entropy of ids[:, 1:] under logits[:, :-1]; PAD targets skipped."""
    targets = ids[:, 1:]
    return F.cross_entropy(
        logits[:, :-1].reshape(-1, logits.shape[-1]),
        targets.reshape(-1),
        ignore_index=PAD_ID,
    )


def ntp_loss(states: LmStates, ids: torch.Tensor) -> torch.Tensor:
    if states.mode != LmMode.CAUSAL:
        raise ConfigError("Next-token loss needs a CAUSAL forward; run the LM in decoder mode")
    return next_token_loss(states.logits, ids)


def freeze(module: nn.Module) -> nn.Module:
    for p in module.parameters():
        p.requires_grad_(False)
    module.eval()
    return module
