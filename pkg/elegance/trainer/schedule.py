from __future__ import annotations

import math
from dataclasses import dataclass, replace

from elegance.config import IMPROVEMENT_THRESHOLD

PATIENCE_HALVE = 6
PATIENCE_STOP = 10


@dataclass
class TrainState:
    epoch: int = 0
    step: int = 0
    current_lr: float = 1e-3
    best_val_loss: float = math.inf
    epochs_since_improve: int = 0
    halvings: int = 0
    stop: bool = False


def is_improvement(val_loss: float, best: float) -> bool:
    return val_loss < best - IMPROVEMENT_THRESHOLD


def lr_schedule_update(
    state: TrainState,
    val_loss: float,
    patience_halve: int = PATIENCE_HALVE,
    patience_stop: int = PATIENCE_STOP,
) -> TrainState:
    """One call per epoch. Halve the rate every `patience_halve` epochs without improvement,
    stop after `patience_stop`; halving never resets the stop counter.
    """
    if is_improvement(val_loss, state.best_val_loss):
        return replace(state, epoch=state.epoch + 1, best_val_loss=float(val_loss), epochs_since_improve=0)

    since = state.epochs_since_improve + 1
    lr, halvings = state.current_lr, state.halvings
    if since % patience_halve == 0:
        lr, halvings = lr / 2.0, halvings + 1
    return replace(
        state,
        epoch=state.epoch + 1,
        current_lr=lr,
        epochs_since_improve=since,
        halvings=halvings,
        stop=state.stop or since >= patience_stop,
    )
