from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np
import torch
import torch.nn as nn

from elegance.backbone.bissm import BiSSMExtractor
from elegance.backbone.dprnn import DPRNNExtractor
from elegance.backbone.encoder import (
    Fusion,
    MaskHead,
    SpeechDecoder,
    SpeechEncoder,
    VisualEncoder,
    apply_mask,
)
from elegance.errors import ConfigError, ContractError
from elegance.signal.waveform import Waveform
from elegance.simkit.visual import VisualStream

logger = logging.getLogger(__name__)


class BackboneKind(str, Enum):
    DPRNN = "DPRNN"
    BISSM = "BISSM"


@dataclass
class BackboneConfig:
    kind: BackboneKind = BackboneKind.DPRNN
    enc_dim: int = 64
    kernel: int = 40
    stride: int = 20
    n_blocks: int = 2
    chunk_len: int = 20
    ssm_state_dim: int = 16
    hidden_dim: int = 64
    visual_dim: int = 16
    expand: int = 2
    conv_kernel: int = 4


BACKBONE_PRESETS = {
    "toy_dprnn": BackboneConfig(kind=BackboneKind.DPRNN),
    "toy_bissm": BackboneConfig(kind=BackboneKind.BISSM),
    "usev": BackboneConfig(
        kind=BackboneKind.DPRNN,
        enc_dim=256,
        kernel=40,
        stride=20,
        n_blocks=6,
        chunk_len=100,
        hidden_dim=256,
    ),
    "av_mamba": BackboneConfig(
        kind=BackboneKind.BISSM,
        enc_dim=512,
        kernel=40,
        stride=20,
        n_blocks=16,
        chunk_len=100,
        ssm_state_dim=16,
        hidden_dim=512,
        expand=2,
        conv_kernel=4,
    ),
}


def backbone_preset(name: str, **overrides) -> BackboneConfig:
    try:
        base = BACKBONE_PRESETS[name]
    except KeyError:
        raise ConfigError(f"Unknown backbone preset {name!r}; choose from {sorted(BACKBONE_PRESETS)}")
    return replace(base, **overrides)


def validate_backbone_config(cfg: BackboneConfig) -> None:
    for name in ("enc_dim", "kernel", "stride", "n_blocks", "chunk_len", "hidden_dim", "visual_dim"):
        if getattr(cfg, name) <= 0:
            raise ConfigError(f"backbone.{name} must be positive, got {getattr(cfg, name)}")
    try:
        BackboneKind(cfg.kind)
    except ValueError:
        raise ConfigError(f"Unknown backbone kind {cfg.kind!r}")
    if cfg.stride > cfg.kernel:
        raise ConfigError(f"backbone.stride {cfg.stride} exceeds kernel {cfg.kernel}")
    if cfg.chunk_len < 2:
        raise ConfigError(f"backbone.chunk_len must be at least 2, got {cfg.chunk_len}")


class Intermediates(NamedTuple):
    X: torch.Tensor
    """Encoded mixture [B, T, enc_dim]."""
    X_a: torch.Tensor
    """Masked encoded mixture, the extractor's target estimate in feature space."""
    mask: torch.Tensor


class AVTSEModel(nn.Module):
    """Mask-based time-domain extractor conditioned on a visual stream and an optional text prior.

    forward(x [B, L], v [B, F, d_v], prior [B, C] | None) -> (estimate [B, L], Intermediates)
    """

    def __init__(self, cfg: BackboneConfig, prior_fusion: Optional[nn.Module] = None):
        super().__init__()
        validate_backbone_config(cfg)
        self.cfg = cfg
        self.encoder = SpeechEncoder(cfg.enc_dim, cfg.kernel, cfg.stride)
        self.visual_encoder = VisualEncoder(cfg.visual_dim, cfg.hidden_dim)
        self.prior_fusion = prior_fusion
        audio_dim = cfg.enc_dim if prior_fusion is None else prior_fusion.out_dim
        self.fusion = Fusion(audio_dim, cfg.hidden_dim, cfg.hidden_dim)
        if BackboneKind(cfg.kind) == BackboneKind.DPRNN:
            self.extractor = DPRNNExtractor(cfg.hidden_dim, cfg.hidden_dim, cfg.n_blocks, cfg.chunk_len)
        else:
            self.extractor = BiSSMExtractor(
                cfg.hidden_dim,
                cfg.ssm_state_dim,
                cfg.n_blocks,
                cfg.chunk_len,
                cfg.expand,
                cfg.conv_kernel,
            )
        self.mask_head = MaskHead(cfg.hidden_dim, cfg.enc_dim)
        self.decoder = SpeechDecoder(cfg.enc_dim, cfg.kernel, cfg.stride)

    @property
    def uses_prior(self) -> bool:
        return self.prior_fusion is not None

    def forward(
        self,
        x: torch.Tensor,
        v: torch.Tensor,
        prior: Optional[torch.Tensor] = None,
    ) -> tuple[torch.Tensor, Intermediates]:
        if x.dim() != 2 or v.dim() != 3:
            raise ContractError(f"Expected x [B, L] and v [B, F, d_v], got {tuple(x.shape)} and {tuple(v.shape)}")
        if prior is not None and self.prior_fusion is None:
            raise ConfigError("A text prior was supplied but the model has no input-guidance fusion")

        encoded = self.encoder(x)
        audio = encoded
        if self.prior_fusion is not None:
            if prior is None:
                prior = encoded.new_zeros(x.shape[0], self.prior_fusion.prior_dim)
            audio = self.prior_fusion(encoded, prior)
        visual = self.visual_encoder(v, encoded.shape[1])
        feats = self.extractor(self.fusion(audio, visual))
        mask = self.mask_head(feats)
        masked = apply_mask(mask, encoded)
        estimate = self.decoder(masked, x.shape[-1])
        return estimate, Intermediates(encoded, masked, mask)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_backbone(cfg: BackboneConfig, prior_fusion: Optional[nn.Module] = None) -> AVTSEModel:
    model = AVTSEModel(cfg, prior_fusion)
    logger.info(
        f"⏳ Built {BackboneKind(cfg.kind).value} backbone: {model.parameter_count():,} parameters, "
        f"enc_dim={cfg.enc_dim} hidden={cfg.hidden_dim} blocks={cfg.n_blocks}"
    )
    return model


def extract(
    model: AVTSEModel,
    mixture: Waveform,
    visual: VisualStream,
    prior: Optional[np.ndarray] = None,
) -> Waveform:
    """Run one unbatched extraction without gradients and return the estimate as a Waveform."""
    dtype = next(model.parameters()).dtype
    x = torch.as_tensor(mixture.samples, dtype=dtype).unsqueeze(0)
    v = torch.as_tensor(visual.features, dtype=dtype).unsqueeze(0)
    p = None if prior is None else torch.as_tensor(prior, dtype=dtype).reshape(1, -1)
    was_training = model.training
    model.eval()
    with torch.no_grad():
        estimate, _ = model(x, v, p)
    model.train(was_training)
    return Waveform(estimate[0].double().numpy(), mixture.sample_rate)
