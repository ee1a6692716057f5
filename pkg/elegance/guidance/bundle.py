from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import torch
import torch.nn as nn

from elegance.backbone.encoder import padded_length
from elegance.errors import ConfigError

logger = logging.getLogger(__name__)


class Strategy(str, Enum):
    OUTPUT = "OUTPUT"
    INTERMEDIATE = "INTERMEDIATE"
    INPUT = "INPUT"
    NONE = "NONE"


@dataclass
class GuidanceConfig:
    strategy: Strategy = Strategy.NONE
    omega: float = 1.0
    delta: float = 0.1
    alpha: float = 0.1
    p: float = 0.2
    aligned_dim: int = 64
    gated_dim: int = 64
    text_dim: int = 64
    speech_dim: int = 64
    provider: str = "toy"
    use_text_at_inference: bool = False
    unfreeze_epochs: int = 2


def validate_guidance_config(cfg: GuidanceConfig) -> None:
    try:
        Strategy(cfg.strategy)
    except ValueError:
        raise ConfigError(f"Unknown guidance strategy {cfg.strategy!r}")
    for name in ("omega", "delta", "alpha"):
        if getattr(cfg, name) < 0:
            raise ConfigError(f"guidance.{name} must be >= 0, got {getattr(cfg, name)}")
    if not 0.0 <= cfg.p <= 1.0:
        raise ConfigError(f"guidance.p must lie in [0, 1], got {cfg.p}")
    for name in ("aligned_dim", "gated_dim", "text_dim", "speech_dim"):
        if getattr(cfg, name) <= 0:
            raise ConfigError(f"guidance.{name} must be positive, got {getattr(cfg, name)}")
    if cfg.provider != "toy" and not cfg.provider.startswith("imported:"):
        raise ConfigError(f"guidance.provider must be 'toy' or 'imported:<path>', got {cfg.provider!r}")


def check_provider_dim(provider, cfg: GuidanceConfig) -> None:
    if provider.dim != cfg.text_dim:
        raise ConfigError(
            f"Text provider {provider.tag!r} has C={provider.dim} but guidance.text_dim is {cfg.text_dim}"
        )


class GuidanceBundle(nn.Module):
    """Training-only adapters for one strategy; none of them is needed at inference."""

    def __init__(self, cfg: GuidanceConfig, enc_dim: int):
        super().__init__()
        validate_guidance_config(cfg)
        self.cfg = cfg
        self.strategy = Strategy(cfg.strategy)
        self.text_adapter = None
        self.speech_adapter = None
        self.acoustic_adapter = None
        if self.strategy == Strategy.OUTPUT:
            self.text_adapter = nn.Linear(cfg.text_dim, cfg.aligned_dim)
            self.speech_adapter = nn.Linear(cfg.speech_dim, cfg.aligned_dim)
        elif self.strategy == Strategy.INTERMEDIATE:
            self.acoustic_adapter = nn.Linear(enc_dim, cfg.text_dim)

    def aligned_pair(self, speech_pooled: torch.Tensor, text_pooled: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """(z_hat, z): both pooled embeddings mapped into the shared D-dim space."""
        if self.text_adapter is None:
            raise ConfigError(f"{self.strategy.value} bundle has no output-constraint adapters")
        if speech_pooled.shape[-1] != self.cfg.speech_dim:
            raise ConfigError(f"Speech embedding has C'={speech_pooled.shape[-1]}, adapter expects {self.cfg.speech_dim}")
        if text_pooled.shape[-1] != self.cfg.text_dim:
            raise ConfigError(f"Text embedding has C={text_pooled.shape[-1]}, adapter expects {self.cfg.text_dim}")
        return self.speech_adapter(speech_pooled), self.text_adapter(text_pooled)


class PslmStandin(nn.Module):
    """Frozen, seeded stand-in for a pretrained speech LM: framing encoder plus 2-layer network.

    [B, L] -> [B, T, C']
    """

    def __init__(self, kernel: int, stride: int, speech_dim: int, hidden_dim: int = 64, seed: int = 1234):
        super().__init__()
        self.kernel = kernel
        self.stride = stride
        self.dim = speech_dim
        self.framing = nn.Conv1d(1, hidden_dim, kernel_size=kernel, stride=stride)
        self.net = nn.Sequential(
            nn.Linear(hidden_dim, hidden_dim),
            nn.Tanh(),
            nn.Linear(hidden_dim, speech_dim),
        )
        generator = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for name, p in self.named_parameters():
                fan_in = kernel if name.startswith("framing") else hidden_dim
                p.copy_(torch.empty_like(p).uniform_(-1.0, 1.0, generator=generator) / fan_in**0.5)
                p.requires_grad_(False)
        self.eval()

    def train(self, mode: bool = True) -> PslmStandin:
        return super().train(False)

    def forward(self, wave: torch.Tensor) -> torch.Tensor:
        length = wave.shape[-1]
        pad = padded_length(length, self.kernel, self.stride) - length
        frames = self.framing(nn.functional.pad(wave, (0, pad)).unsqueeze(1)).transpose(1, 2)
        return self.net(torch.tanh(frames))
