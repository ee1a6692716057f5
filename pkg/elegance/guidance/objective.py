from __future__ import annotations

from typing import Optional

import torch

from elegance.errors import ConfigError, TrainingError
from elegance.guidance.bundle import GuidanceConfig, Strategy


def compose_objective(
    strategy: Strategy,
    si_sdr_loss: torch.Tensor,
    guidance_loss: Optional[torch.Tensor],
    cfg: GuidanceConfig,
    step: Optional[int] = None,
) -> torch.Tensor:
    """OUTPUT: L_si + omega * L_mse. INTERMEDIATE: L_si + delta * L_lm. INPUT, NONE: L_si."""
    where = "" if step is None else f" at step {step}"
    if not torch.isfinite(si_sdr_loss):
        raise TrainingError(f"SI-SDR loss is {si_sdr_loss.item()}{where}")
    strategy = Strategy(strategy)
    if strategy in (Strategy.INPUT, Strategy.NONE):
        return si_sdr_loss
    if guidance_loss is None:
        raise ConfigError(f"{strategy.value} guidance needs a guidance loss")
    if not torch.isfinite(guidance_loss):
        raise TrainingError(f"{strategy.value} guidance loss is {guidance_loss.item()}{where}")
    weight = cfg.omega if strategy == Strategy.OUTPUT else cfg.delta
    return si_sdr_loss + weight * guidance_loss
