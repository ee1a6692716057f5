from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from elegance.errors import ContractError, DomainError


def frame_count(length: int, kernel: int, stride: int) -> int:
    """Frames produced after right-padding `length` samples to the next full frame."""
    if length < kernel:
        raise DomainError(f"Input of {length} samples is shorter than the {kernel}-sample kernel")
    return math.ceil((length - kernel) / stride) + 1


def padded_length(length: int, kernel: int, stride: int) -> int:
    return (frame_count(length, kernel, stride) - 1) * stride + kernel


def _uniform_fan_in_(weight: torch.Tensor, fan_in: int) -> None:
    bound = 1.0 / math.sqrt(fan_in)
    nn.init.uniform_(weight, -bound, bound)


class SpeechEncoder(nn.Module):
    """Strided framing with a learned linear basis per frame, then ReLU.

    [B, L] -> [B, T, enc_dim]
    """

    def __init__(self, enc_dim: int, kernel: int, stride: int):
        super().__init__()
        if stride > kernel:
            raise ContractError(f"stride {stride} must not exceed kernel {kernel}")
        self.kernel = kernel
        self.stride = stride
        self.conv = nn.Conv1d(1, enc_dim, kernel_size=kernel, stride=stride, bias=True)
        _uniform_fan_in_(self.conv.weight, kernel)
        nn.init.zeros_(self.conv.bias)

    def forward(self, wave: torch.Tensor) -> torch.Tensor:
        length = wave.shape[-1]
        pad = padded_length(length, self.kernel, self.stride) - length
        frames = self.conv(F.pad(wave, (0, pad)).unsqueeze(1))
        return F.relu(frames).transpose(1, 2)


class SpeechDecoder(nn.Module):
    """Transposed framing with overlap-add, trimmed to the requested length.

    [B, T, enc_dim] -> [B, out_len]
    """

    def __init__(self, enc_dim: int, kernel: int, stride: int):
        super().__init__()
        self.kernel = kernel
        self.stride = stride
        self.deconv = nn.ConvTranspose1d(enc_dim, 1, kernel_size=kernel, stride=stride, bias=True)
        _uniform_fan_in_(self.deconv.weight, enc_dim)
        nn.init.zeros_(self.deconv.bias)

    def forward(self, feats: torch.Tensor, out_len: int) -> torch.Tensor:
        expected = frame_count(out_len, self.kernel, self.stride)
        if feats.shape[1] != expected:
            raise ContractError(
                f"Decoder got {feats.shape[1]} frames, {out_len} samples need {expected}"
            )
        wave = self.deconv(feats.transpose(1, 2)).squeeze(1)
        return wave[..., :out_len]


def upsample_nearest(feats: torch.Tensor, n_frames: int) -> torch.Tensor:
    """Repeat visual rows onto n_frames acoustic frames: row t takes frame floor((t+0.5)F/T)."""
    source = feats.shape[1]
    positions = torch.arange(n_frames, dtype=torch.float64, device=feats.device)
    index = torch.clamp(torch.floor((positions + 0.5) * source / n_frames).long(), max=source - 1)
    return feats[:, index]


class VisualEncoder(nn.Module):
    """Per-frame 2-layer network followed by nearest-frame upsampling to the acoustic rate."""

    def __init__(self, visual_dim: int, hidden_dim: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(visual_dim, hidden_dim),
            nn.ReLU(),
            nn.Linear(hidden_dim, hidden_dim),
        )

    def forward(self, visual: torch.Tensor, n_frames: int) -> torch.Tensor:
        if visual.shape[1] == 0:
            raise ContractError("Visual stream is empty")
        return upsample_nearest(self.net(visual), n_frames)


class Fusion(nn.Module):
    """Channel concatenation of audio and visual features, projected to the model width."""

    def __init__(self, audio_dim: int, visual_dim: int, model_dim: int):
        super().__init__()
        self.proj = nn.Linear(audio_dim + visual_dim, model_dim)

    def forward(self, audio: torch.Tensor, visual: torch.Tensor) -> torch.Tensor:
        if audio.shape[1] != visual.shape[1]:
            raise ContractError(
                f"Cannot fuse {audio.shape[1]} audio frames with {visual.shape[1]} visual frames"
            )
        return self.proj(torch.cat([audio, visual], dim=-1))


class MaskHead(nn.Module):
    def __init__(self, model_dim: int, enc_dim: int):
        super().__init__()
        self.proj = nn.Linear(model_dim, enc_dim)

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        return F.relu(self.proj(feats))


def apply_mask(mask: torch.Tensor, encoded: torch.Tensor) -> torch.Tensor:
    if mask.shape != encoded.shape:
        raise ContractError(f"Mask shape {tuple(mask.shape)} != encoded shape {tuple(encoded.shape)}")
    return mask * encoded
