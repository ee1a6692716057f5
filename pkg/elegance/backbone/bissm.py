from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from elegance.backbone.dprnn import chunk, dechunk


def selective_scan(
    u: torch.Tensor,
    decay: torch.Tensor,
    drive: torch.Tensor,
    readout: torch.Tensor,
    skip: torch.Tensor,
) -> torch.Tensor:
    """Diagonal linear recurrence h_t = decay_t * h_{t-1} + drive_t, o_t = <C_t, h_t> + D * u_t.

    u: [B, T, E]; decay, drive: [B, T, E, N]; readout (C): [B, T, N]; skip (D): [E].
    """
    batch, length, inner, state = decay.shape
    h = u.new_zeros(batch, inner, state)
    outputs = []
    for t in range(length):
        h = decay[:, t] * h + drive[:, t]
        outputs.append(torch.einsum("ben,bn->be", h, readout[:, t]))
    return torch.stack(outputs, dim=1) + skip * u


class ScanBranch(nn.Module):
    """One scan direction: causal depthwise conv, SiLU, input-dependent (delta, B, C), recurrence."""

    def __init__(self, inner_dim: int, state_dim: int, conv_kernel: int = 4):
        super().__init__()
        self.state_dim = state_dim
        self.dt_rank = max(1, math.ceil(inner_dim / 16))
        self.conv = nn.Conv1d(
            inner_dim, inner_dim, kernel_size=conv_kernel, groups=inner_dim, padding=conv_kernel - 1
        )
        self.x_proj = nn.Linear(inner_dim, self.dt_rank + 2 * state_dim, bias=False)
        self.dt_proj = nn.Linear(self.dt_rank, inner_dim)
        a = torch.arange(1, state_dim + 1, dtype=torch.float32).repeat(inner_dim, 1)
        self.A_log = nn.Parameter(torch.log(a))
        self.D = nn.Parameter(torch.ones(inner_dim))

    def forward(self, u: torch.Tensor) -> torch.Tensor:
        length = u.shape[1]
        x = self.conv(u.transpose(1, 2))[..., :length].transpose(1, 2)
        x = F.silu(x)
        dt, b, c = self.x_proj(x).split([self.dt_rank, self.state_dim, self.state_dim], dim=-1)
        delta = F.softplus(self.dt_proj(dt))
        a = -torch.exp(self.A_log)
        decay = torch.exp(delta.unsqueeze(-1) * a)
        drive = delta.unsqueeze(-1) * b.unsqueeze(2) * x.unsqueeze(-1)
        return selective_scan(x, decay, drive, c, self.D)


class BiSSMLayer(nn.Module):
    """Bidirectional selective-SSM layer returning a residual update for [N, L, D]."""

    def __init__(self, model_dim: int, state_dim: int, expand: int = 2, conv_kernel: int = 4):
        super().__init__()
        inner = expand * model_dim
        self.inner_dim = inner
        self.norm = nn.LayerNorm(model_dim)
        self.in_proj = nn.Linear(model_dim, 2 * inner)
        self.forward_branch = ScanBranch(inner, state_dim, conv_kernel)
        self.backward_branch = ScanBranch(inner, state_dim, conv_kernel)
        self.out_proj = nn.Linear(inner, model_dim)

    def scan(self, u: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        forward = self.forward_branch(u)
        backward = self.backward_branch(u.flip(1)).flip(1)
        return forward, backward

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        u, z = self.in_proj(self.norm(x)).split(self.inner_dim, dim=-1)
        forward, backward = self.scan(u)
        return self.out_proj((forward + backward) * F.silu(z))


class BiSSMExtractor(nn.Module):
    """Dual-path bidirectional SSM extractor; residual stream kept in float64."""

    def __init__(
        self,
        model_dim: int,
        state_dim: int,
        n_blocks: int,
        chunk_len: int,
        expand: int = 2,
        conv_kernel: int = 4,
    ):
        super().__init__()
        self.chunk_len = chunk_len
        self.intra = nn.ModuleList(
            BiSSMLayer(model_dim, state_dim, expand, conv_kernel) for _ in range(n_blocks)
        )
        self.inter = nn.ModuleList(
            BiSSMLayer(model_dim, state_dim, expand, conv_kernel) for _ in range(n_blocks)
        )

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        dtype = feats.dtype
        residual = chunk(feats, self.chunk_len).to(torch.float64)
        batch, n_chunks, chunk_len, dim = residual.shape
        for intra, inter in zip(self.intra, self.inter):
            x = residual.to(dtype).reshape(batch * n_chunks, chunk_len, dim)
            residual = residual + intra(x).reshape(batch, n_chunks, chunk_len, dim).to(torch.float64)
            x = residual.to(dtype).transpose(1, 2).reshape(batch * chunk_len, n_chunks, dim)
            update = inter(x).reshape(batch, chunk_len, n_chunks, dim).transpose(1, 2)
            residual = residual + update.to(torch.float64)
        return dechunk(residual, feats.shape[1]).to(dtype)
