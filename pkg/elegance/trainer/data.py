from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np
import torch

from elegance.errors import ConfigError, ContractError
from elegance.simkit.mixtures import MixtureSample
from elegance.utils import seeded_rng


class Batch(NamedTuple):
    indices: list[int]
    """Positions of the samples in the training list; keys for per-sample random streams."""
    mixture: torch.Tensor
    visual: torch.Tensor
    reference: torch.Tensor
    transcripts: list[str]


def collate(samples: Sequence[MixtureSample], indices: Sequence[int], dtype=torch.float32) -> Batch:
    lengths = {len(s.mixture) for s in samples}
    if len(lengths) != 1:
        raise ContractError(f"Samples in one batch must share a length, got {sorted(lengths)}")
    return Batch(
        indices=list(indices),
        mixture=torch.as_tensor(np.stack([s.mixture.samples for s in samples]), dtype=dtype),
        visual=torch.as_tensor(np.stack([s.visual().features for s in samples]), dtype=dtype),
        reference=torch.as_tensor(np.stack([s.reference().samples for s in samples]), dtype=dtype),
        transcripts=[s.transcript() for s in samples],
    )


def epoch_order(n_samples: int, seed: int, epoch: int) -> np.ndarray:
    """Sample order for one epoch, a pure function of (seed, epoch)."""
    return seeded_rng(seed, epoch).permutation(n_samples)


def make_batches(
    samples: Sequence[MixtureSample],
    batch_size: int,
    seed: int,
    epoch: int,
    dtype=torch.float32,
) -> list[Batch]:
    if batch_size < 1:
        raise ConfigError(f"batch_size must be positive, got {batch_size}")
    order = epoch_order(len(samples), seed, epoch)
    return [
        collate([samples[i] for i in order[k : k + batch_size]], order[k : k + batch_size].tolist(), dtype)
        for k in range(0, len(order), batch_size)
    ]


def split_samples(
    samples: Sequence[MixtureSample], val_fraction: float
) -> tuple[list[MixtureSample], list[MixtureSample]]:
    """Last ceil(n * val_fraction) samples validate, the rest train."""
    if not 0.0 < val_fraction < 1.0:
        raise ConfigError(f"val_fraction must lie in (0, 1), got {val_fraction}")
    n_val = max(1, math.ceil(len(samples) * val_fraction))
    if n_val >= len(samples):
        raise ConfigError(f"{len(samples)} samples cannot be split with val_fraction={val_fraction}")
    return list(samples[:-n_val]), list(samples[-n_val:])
