from __future__ import annotations

import logging
from dataclasses import asdict, is_dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Optional

import torch
import torch.nn as nn

from elegance.config import CHECKPOINT_FORMAT_VERSION
from elegance.errors import FormatError
from elegance.utils import format_bytes

logger = logging.getLogger(__name__)


def plain(value: Any) -> Any:
    """Reduce configs and states to builtins that torch.load(weights_only=True) accepts."""
    if is_dataclass(value) and not isinstance(value, type):
        return plain(asdict(value))
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, Mapping):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if hasattr(value, "item") and not isinstance(value, torch.Tensor):
        return value.item()
    return value


def _module_params(modules: Mapping[str, nn.Module]) -> dict[str, torch.Tensor]:
    params = {}
    for prefix, module in modules.items():
        for name, tensor in module.state_dict().items():
            tensor = tensor.detach().cpu()
            if tensor.is_floating_point():
                tensor = tensor.to(torch.float32)
            params[f"{prefix}.{name}"] = tensor.clone()
    return params


def save_checkpoint(
    path: Path | str,
    modules: Mapping[str, nn.Module],
    config: Any,
    optimizer: Optional[torch.optim.Optimizer] = None,
    train_state: Optional[Mapping[str, Any]] = None,
) -> Path:
    """Write a self-describing checkpoint: config echo, float32 parameters, their shapes, format version."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    params = _module_params(modules)
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": plain(config),
        "params": params,
        "shapes": {name: list(t.shape) for name, t in params.items()},
        "optimizer": None if optimizer is None else optimizer.state_dict(),
        "optimizer_name": None if optimizer is None else type(optimizer).__name__,
        "train_state": plain(dict(train_state or {})),
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)
    logger.debug(f"📨 Checkpoint {path.name} written ({format_bytes(path.stat().st_size)})")
    return path


def read_checkpoint(path: Path | str) -> dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"Checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as e:
        raise FormatError(f"Cannot read checkpoint {path}: {e}") from e
    version = payload.get("format_version") if isinstance(payload, dict) else None
    if version != CHECKPOINT_FORMAT_VERSION:
        raise FormatError(f"{path}: checkpoint format {version}, expected {CHECKPOINT_FORMAT_VERSION}")
    return payload


def load_checkpoint(
    path: Path | str,
    modules: Mapping[str, nn.Module],
    optimizer: Optional[torch.optim.Optimizer] = None,
) -> dict[str, Any]:
    """Load parameters into `modules`, verifying every name and shape; returns the payload."""
    payload = read_checkpoint(path)
    stored = payload["params"]
    for prefix, module in modules.items():
        state = module.state_dict()
        restored = {}
        for name, tensor in state.items():
            key = f"{prefix}.{name}"
            if key not in stored:
                raise FormatError(f"{path}: missing parameter {key}")
            if list(stored[key].shape) != list(tensor.shape):
                raise FormatError(
                    f"{path}: parameter {key} has shape {list(stored[key].shape)}, "
                    f"model expects {list(tensor.shape)}"
                )
            restored[name] = stored[key].to(tensor.dtype)
        extra = [k for k in stored if k.startswith(prefix + ".") and k[len(prefix) + 1 :] not in state]
        if extra:
            raise FormatError(f"{path}: unexpected parameters {extra[:3]}")
        module.load_state_dict(restored)
    if optimizer is not None:
        if payload.get("optimizer") is None:
            raise FormatError(f"{path}: no optimizer state stored")
        optimizer.load_state_dict(payload["optimizer"])
    return payload
