"""Central-difference verification of autograd gradients.

All checks run in float64; `grad_check` returns the largest relative error seen
over the probed coordinates and callers compare it to GRADCHECK_TOLERANCE.
"""

from __future__ import annotations

import logging
from dataclasses import replace
from typing import Callable, Sequence

import torch
import torch.nn as nn

from elegance.backbone.model import BackboneConfig, BackboneKind
from elegance.config import GRADCHECK_EPS
from elegance.errors import ContractError
from elegance.guidance.bundle import GuidanceBundle, GuidanceConfig, PslmStandin, Strategy
from elegance.guidance.intermediate import intermediate_ntp_loss
from elegance.guidance.objective import compose_objective
from elegance.guidance.output import output_constraint_loss
from elegance.lmcore.embeddings import ToyLMProvider
from elegance.lmcore.model import LmConfig, ToyLM
from elegance.trainer.loop import build_model
from elegance.trainer.losses import si_sdr_loss
from elegance.utils import seeded_rng

logger = logging.getLogger(__name__)

GRADCHECK_FLOOR = 1e-4
TRANSCRIPTS = ("a short one", "and another line")


def relative_error(analytic: float, numeric: float, floor: float = GRADCHECK_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(
    fn: Callable[[], torch.Tensor],
    params: Sequence[torch.Tensor],
    n_probes: int = 8,
    eps: float = GRADCHECK_EPS,
    seed: int = 0,
) -> float:
    """Max relative error between autograd and central differences at `n_probes` coordinates per tensor."""
    params = list(params)
    for p in params:
        if p.dtype != torch.float64:
            raise ContractError(f"Gradient checks run in float64, got {p.dtype}")
    grads = torch.autograd.grad(fn(), params, allow_unused=True)
    rng = seeded_rng(seed)
    worst = 0.0
    for k, (p, g) in enumerate(zip(params, grads)):
        flat = p.data.view(-1)
        analytic = torch.zeros_like(flat) if g is None else g.reshape(-1)
        for idx in rng.choice(flat.numel(), size=min(n_probes, flat.numel()), replace=False):
            original = flat[idx].item()
            with torch.no_grad():
                flat[idx] = original + eps
                plus = fn().item()
                flat[idx] = original - eps
                minus = fn().item()
                flat[idx] = original
            err = relative_error(analytic[idx].item(), (plus - minus) / (2 * eps))
            if err > worst:
                logger.debug(f"tensor {k} index {idx}: relative error {err:.2e}")
            worst = max(worst, err)
    return worst


TINY_BACKBONE = BackboneConfig(
    enc_dim=8,
    kernel=8,
    stride=4,
    n_blocks=1,
    chunk_len=6,
    ssm_state_dim=4,
    hidden_dim=8,
    visual_dim=8,
)


def randomize_zero_parameters(module: nn.Module, generator: torch.Generator, scale: float = 0.3) -> None:
    """Move zero-initialized gates and value paths off zero so every branch carries gradient."""
    with torch.no_grad():
        for p in module.parameters():
            if p.requires_grad and not torch.any(p):
                p.add_(scale * torch.randn(p.shape, generator=generator, dtype=p.dtype))


def composed_objective_check(
    strategy: Strategy | str,
    kind: BackboneKind | str = BackboneKind.DPRNN,
    n_probes: int = 3,
    seed: int = 0,
) -> float:
    """Gradient check of the full training objective of one strategy on a tiny float64 model."""
    strategy = Strategy(strategy)
    torch.manual_seed(seed)
    generator = torch.Generator().manual_seed(seed)
    guidance_cfg = GuidanceConfig(
        strategy=strategy, text_dim=8, speech_dim=6, aligned_dim=5, gated_dim=8, alpha=0.1, delta=0.1, omega=1.0
    )
    backbone_cfg = replace(TINY_BACKBONE, kind=BackboneKind(kind))
    model = build_model(backbone_cfg, guidance_cfg).double()
    bundle = GuidanceBundle(guidance_cfg, backbone_cfg.enc_dim).double()
    randomize_zero_parameters(model, generator)

    x = torch.randn(2, 64, generator=generator, dtype=torch.float64)
    v = torch.randn(2, 3, backbone_cfg.visual_dim, generator=generator, dtype=torch.float64)
    ref = torch.randn(2, 64, generator=generator, dtype=torch.float64)
    prior = torch.randn(2, guidance_cfg.text_dim, generator=generator, dtype=torch.float64)
    params = [p for p in model.parameters()] + [p for p in bundle.parameters()]

    lm = pslm = provider = None
    if strategy == Strategy.OUTPUT:
        provider = ToyLMProvider(ToyLM(LmConfig(model_dim=8, n_heads=2, n_blocks=1)))
        pslm = PslmStandin(backbone_cfg.kernel, backbone_cfg.stride, guidance_cfg.speech_dim, hidden_dim=6).double()
    if strategy == Strategy.INTERMEDIATE:
        lm = ToyLM(LmConfig(model_dim=8, n_heads=2, n_blocks=1, with_cross_attention=True, cross_scale=0.1)).double()
        randomize_zero_parameters(lm, generator)
        params += [p for _, p in lm.cross_parameters()]

    def objective() -> torch.Tensor:
        estimate, inter = model(x, v, prior if strategy == Strategy.INPUT else None)
        guidance = None
        if strategy == Strategy.OUTPUT:
            guidance = output_constraint_loss(estimate, TRANSCRIPTS, bundle, pslm, provider)
        elif strategy == Strategy.INTERMEDIATE:
            guidance = intermediate_ntp_loss(inter.X_a, TRANSCRIPTS, bundle, lm)
        return compose_objective(strategy, si_sdr_loss(estimate, ref), guidance, guidance_cfg)

    worst = grad_check(objective, params, n_probes=n_probes, seed=seed)
    logger.info(f"🔎 {strategy.value}/{BackboneKind(kind).value} objective: max relative error {worst:.2e}")
    return worst
