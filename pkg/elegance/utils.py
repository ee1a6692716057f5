import hashlib
import json
import logging
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable

import numpy as np

SUMMARY: int = 25
"""Per-epoch / per-dataset summary level (shown at some/minimal, hidden at silent)."""
FINAL_SUMMARY: int = 35
"""Final overall run total level (shown at all levels including silent)."""
logging.addLevelName(SUMMARY, "SUMMARY")
logging.addLevelName(FINAL_SUMMARY, "FINAL_SUMMARY")

_cli_log_level: int | None = None

VERBOSITY_LEVELS = {
    "debug": logging.DEBUG,
    "some": logging.INFO,
    "minimal": SUMMARY,
    "silent": logging.WARNING,
}


def install_verbosity_level(verbosity: str) -> None:
    """Set the effective log level from a --verbosity argument.

    debug    → DEBUG   (everything, including per-step losses)
    some     → INFO    (hides per-step and per-sample lines)
    minimal  → SUMMARY (per-epoch and per-dataset totals only)
    silent   → WARNING (hides everything except FINAL_SUMMARY and errors)
    """
    global _cli_log_level
    _cli_log_level = VERBOSITY_LEVELS.get(verbosity, logging.DEBUG)
    logging.getLogger().setLevel(_cli_log_level)

    third_party = logging.DEBUG if _cli_log_level == logging.DEBUG else logging.WARNING
    for name in ("matplotlib", "PIL", "librosa"):
        logging.getLogger(name).setLevel(third_party)


def log_summary(msg: object, *args: object, **kwargs: object) -> None:
    """Log at SUMMARY level (per-epoch/per-dataset totals)."""
    logging.log(SUMMARY, msg, *args, **kwargs)


def log_final(msg: object, *args: object, **kwargs: object) -> None:
    """Log at FINAL_SUMMARY level (overall run totals; shown even in silent)."""
    logging.log(FINAL_SUMMARY, msg, *args, **kwargs)


def get_time_str(start_time: float, end_ts: float | None = None) -> str:
    _end_ts = time.time() if end_ts is None else end_ts
    return format_duration_seconds(_end_ts - start_time)


def format_duration_seconds(elapsed: float) -> str:
    days, rem = divmod(elapsed, 86400)
    hours, rem = divmod(rem, 3600)
    mins, secs = divmod(rem, 60)

    parts = []
    if days:
        parts.append(f"{int(days)}d")
    if hours or parts:
        parts.append(f"{int(hours)}h")
    if mins or parts:
        parts.append(f"{int(mins)}m")
    if secs or parts:
        parts.append(f"{secs:.3f}s")

    return "".join(parts) or "0s"


def format_bytes(value: int | None) -> str:
    if value is None:
        return "n/a"
    size = float(value)
    units = ["B", "KiB", "MiB", "GiB", "TiB"]
    unit_idx = 0
    while size >= 1024.0 and unit_idx < len(units) - 1:
        size /= 1024.0
        unit_idx += 1
    if unit_idx == 0:
        return f"{int(size)}{units[unit_idx]}"
    return f"{size:.3f}{units[unit_idx]}"


def format_db(value: float, perfect: bool = False) -> str:
    if perfect:
        return "perfect"
    return f"{value:+.3f}dB"


def run_timestamp(now: datetime | None = None) -> str:
    moment = now or datetime.now(timezone.utc)
    return moment.strftime("%Y%m%dT%H%M%S%f")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: Path | str, chunk_size: int = 1 << 20) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(chunk_size), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def to_json_line(record: dict[str, Any]) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False, default=_json_default)


def write_jsonl(path: Path | str, records: Iterable[dict[str, Any]]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(to_json_line(record) + "\n")
            count += 1
    return count


def append_jsonl(path: Path | str, record: dict[str, Any]) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(to_json_line(record) + "\n")


def read_jsonl(path: Path | str) -> list[dict[str, Any]]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def write_json(path: Path | str, payload: dict[str, Any]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, ensure_ascii=False, default=_json_default)
        fh.write("\n")


def seeded_rng(*keys: int) -> np.random.Generator:
    """Independent generator for a tuple of integer keys (seed, index, epoch, ...)."""
    return np.random.default_rng([int(k) for k in keys])
