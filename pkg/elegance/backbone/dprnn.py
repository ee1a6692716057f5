from __future__ import annotations

import math

import torch
import torch.nn as nn

from elegance.errors import DomainError


def chunk_count(n_frames: int, chunk_len: int) -> int:
    hop = chunk_len // 2
    return math.ceil(max(n_frames - chunk_len, 0) / hop) + 1


def chunk(feats: torch.Tensor, chunk_len: int) -> torch.Tensor:
    """Split [B, T, D] into 50%-overlapping chunks [B, S, K, D], zero-padding the tail."""
    n_frames = feats.shape[1]
    if n_frames < chunk_len // 2:
        raise DomainError(f"Sequence of {n_frames} frames is shorter than half a chunk ({chunk_len})")
    hop = chunk_len // 2
    n_chunks = chunk_count(n_frames, chunk_len)
    total = (n_chunks - 1) * hop + chunk_len
    padded = nn.functional.pad(feats, (0, 0, 0, total - n_frames))
    return padded.unfold(1, chunk_len, hop).permute(0, 1, 3, 2)


def dechunk(chunks: torch.Tensor, n_frames: int) -> torch.Tensor:
    """Overlap-add [B, S, K, D] back to [B, n_frames, D], averaging overlapping frames."""
    batch, n_chunks, chunk_len, dim = chunks.shape
    hop = chunk_len // 2
    total = (n_chunks - 1) * hop + chunk_len
    out = chunks.new_zeros(batch, total, dim)
    counts = chunks.new_zeros(1, total, 1)
    for s in range(n_chunks):
        start = s * hop
        out[:, start : start + chunk_len] = out[:, start : start + chunk_len] + chunks[:, s]
        counts[:, start : start + chunk_len] += 1
    return (out / counts)[:, :n_frames]


class RecurrentPath(nn.Module):
    """x + LayerNorm(Linear(BiLSTM(x))) along the second axis of [N, L, D]."""

    def __init__(self, model_dim: int, hidden_dim: int):
        super().__init__()
        self.rnn = nn.LSTM(model_dim, hidden_dim, batch_first=True, bidirectional=True)
        self.proj = nn.Linear(2 * hidden_dim, model_dim)
        self.norm = nn.LayerNorm(model_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out, _ = self.rnn(x)
        return x + self.norm(self.proj(out))


class DPRNNBlock(nn.Module):
    def __init__(self, model_dim: int, hidden_dim: int):
        super().__init__()
        self.intra = RecurrentPath(model_dim, hidden_dim)
        self.inter = RecurrentPath(model_dim, hidden_dim)

    def forward(self, chunks: torch.Tensor) -> torch.Tensor:
        batch, n_chunks, chunk_len, dim = chunks.shape
        intra = self.intra(chunks.reshape(batch * n_chunks, chunk_len, dim))
        intra = intra.reshape(batch, n_chunks, chunk_len, dim)
        across = intra.transpose(1, 2).reshape(batch * chunk_len, n_chunks, dim)
        inter = self.inter(across).reshape(batch, chunk_len, n_chunks, dim)
        return inter.transpose(1, 2)


class DPRNNExtractor(nn.Module):
    """Dual-path recurrent extractor; shape preserving on [B, T, D]."""

    def __init__(self, model_dim: int, hidden_dim: int, n_blocks: int, chunk_len: int):
        super().__init__()
        self.chunk_len = chunk_len
        self.blocks = nn.ModuleList(DPRNNBlock(model_dim, hidden_dim) for _ in range(n_blocks))

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        chunks = chunk(feats, self.chunk_len)
        for block in self.blocks:
            chunks = block(chunks)
        return dechunk(chunks, feats.shape[1])
