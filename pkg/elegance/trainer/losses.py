from __future__ import annotations

import torch

from elegance.config import METRIC_CAP_DB, PERFECT_THRESHOLD_DB, SI_SDR_EPS
from elegance.errors import ContractError, TrainingError


def si_sdr_db(est: torch.Tensor, ref: torch.Tensor, eps: float = SI_SDR_EPS) -> torch.Tensor:
    """Per-row SI-SDR in dB of [B, L] (or [L]) tensors, mean-subtracted, clamped to the metric cap."""
    if est.shape != ref.shape:
        raise ContractError(f"Estimate {tuple(est.shape)} and reference {tuple(ref.shape)} differ in shape")
    e = est - est.mean(dim=-1, keepdim=True)
    r = ref - ref.mean(dim=-1, keepdim=True)
    scale = (e * r).sum(dim=-1, keepdim=True) / ((r * r).sum(dim=-1, keepdim=True) + eps)
    target = scale * r
    residual = e - target
    signal = (target * target).sum(dim=-1)
    distortion = (residual * residual).sum(dim=-1)
    value = 10.0 * torch.log10((signal + eps) / (distortion + eps))
    perfect = (signal > 0) & (distortion <= signal * 10.0 ** (-PERFECT_THRESHOLD_DB / 10.0))
    silent = (e * e).sum(dim=-1) <= 0
    value = torch.where(perfect, torch.full_like(value, METRIC_CAP_DB), value)
    value = torch.where(silent, torch.full_like(value, -METRIC_CAP_DB), value)
    return torch.clamp(value, -METRIC_CAP_DB, METRIC_CAP_DB)


def si_sdr_loss(est: torch.Tensor, ref: torch.Tensor, eps: float = SI_SDR_EPS) -> torch.Tensor:
    """Negative batch-mean SI-SDR."""
    loss = -si_sdr_db(est, ref, eps).mean()
    if not torch.isfinite(loss):
        raise TrainingError(f"SI-SDR loss is {loss.item()}")
    return loss
