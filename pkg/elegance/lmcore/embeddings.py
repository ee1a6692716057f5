from __future__ import annotations

import hashlib
import logging
import struct
import threading
from pathlib import Path
from typing import Iterable, Optional, Protocol

import numpy as np
import torch

from elegance.config import EMBEDDING_MAGIC, EMBEDDING_VERSION
from elegance.errors import ConfigError, EmbeddingLookupError, FormatError
from elegance.lmcore.model import LmMode, ToyLM, freeze
from elegance.lmcore.tokenizer import pad_batch, tokenize
from elegance.utils import format_bytes

logger = logging.getLogger(__name__)

HEADER = struct.Struct("<4sH")
U16 = struct.Struct("<H")
U32 = struct.Struct("<I")
HASH_BYTES = 16


def transcript_key(text: str) -> bytes:
    return hashlib.blake2b(text.encode("utf-8"), digest_size=HASH_BYTES).digest()


class EmbeddingProvider(Protocol):
    tag: str
    dim: int

    def sequence_embedding(self, text: str) -> np.ndarray: ...

    def utterance_embedding(self, text: str) -> np.ndarray: ...


def pool(sequence: np.ndarray) -> np.ndarray:
    """Temporal mean over rows, in float64."""
    return np.asarray(sequence, dtype=np.float64).mean(axis=0)


def utterance_batch(provider: EmbeddingProvider, texts: Iterable[str], dtype=torch.float32) -> torch.Tensor:
    """Pooled embeddings of several texts as a [B, C] tensor."""
    return torch.as_tensor(np.stack([provider.utterance_embedding(t) for t in texts]), dtype=dtype)


class ToyLMProvider:
    """Frozen toy LM exposing last-layer states; sequence rows cover BOS..EOS."""

    def __init__(self, lm: ToyLM, tag: str = "toy"):
        if lm.cfg.with_cross_attention:
            raise ConfigError("An embedding provider must be a vanilla LM without cross-attention")
        self.lm = freeze(lm)
        self.tag = tag
        self.dim = lm.dim
        self._cache: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def sequence_embedding(self, text: str) -> np.ndarray:
        with self._lock:
            cached = self._cache.get(text)
        if cached is not None:
            return cached
        ids = pad_batch([tokenize(text)])
        with torch.no_grad():
            states = self.lm(ids, mode=LmMode(self.lm.cfg.mode))
        rows = states.last_layer[0].to(torch.float32).numpy().copy()
        with self._lock:
            self._cache[text] = rows
        return rows

    def utterance_embedding(self, text: str) -> np.ndarray:
        return pool(self.sequence_embedding(text))


class ImportedEmbeddingTable:
    """Embeddings computed offline (any provider), keyed by transcript hash."""

    def __init__(self, tag: str, dim: int, entries: Optional[dict[bytes, tuple[np.ndarray, np.ndarray]]] = None):
        self.tag = tag
        self.dim = dim
        self.entries = entries or {}

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, text: str) -> bool:
        return transcript_key(text) in self.entries

    def _entry(self, text: str) -> tuple[np.ndarray, np.ndarray]:
        try:
            return self.entries[transcript_key(text)]
        except KeyError:
            raise EmbeddingLookupError(f"Transcript {text[:40]!r} is not in embedding table {self.tag!r}")

    def sequence_embedding(self, text: str) -> np.ndarray:
        return self._entry(text)[0]

    def utterance_embedding(self, text: str) -> np.ndarray:
        return self._entry(text)[1]


def export_embeddings(texts: Iterable[str], provider: EmbeddingProvider, path: Path | str) -> Path:
    """Write the ELEM table: header, then per transcript hash, rows, float32 sequence, float64 pooled."""
    path = Path(path)
    unique = sorted(set(texts))
    tag = provider.tag.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(EMBEDDING_MAGIC, EMBEDDING_VERSION))
        fh.write(U16.pack(len(tag)))
        fh.write(tag)
        fh.write(U32.pack(provider.dim))
        fh.write(U32.pack(len(unique)))
        for text in unique:
            sequence = np.ascontiguousarray(provider.sequence_embedding(text), dtype="<f4")
            if sequence.ndim != 2 or sequence.shape[1] != provider.dim:
                raise FormatError(f"Provider returned shape {sequence.shape} for dim {provider.dim}")
            pooled = np.ascontiguousarray(provider.utterance_embedding(text), dtype="<f8")
            fh.write(transcript_key(text))
            fh.write(U32.pack(sequence.shape[0]))
            fh.write(sequence.tobytes())
            fh.write(pooled.tobytes())
    logger.info(
        f"✅ Exported {len(unique)} embeddings ({provider.tag}, C={provider.dim}) "
        f"to {path} ({format_bytes(path.stat().st_size)})"
    )
    return path


def _take(raw: bytes, offset: int, size: int, path: Path) -> tuple[bytes, int]:
    if offset + size > len(raw):
        raise FormatError(f"{path}: truncated embedding table at byte {offset}")
    return raw[offset : offset + size], offset + size


def import_embeddings(path: Path | str, expected_dim: Optional[int] = None) -> ImportedEmbeddingTable:
    path = Path(path)
    raw = path.read_bytes()
    chunk, offset = _take(raw, 0, HEADER.size, path)
    magic, version = HEADER.unpack(chunk)
    if magic != EMBEDDING_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != EMBEDDING_VERSION:
        raise FormatError(f"{path}: version {version}, expected {EMBEDDING_VERSION}")
    chunk, offset = _take(raw, offset, U16.size, path)
    (tag_len,) = U16.unpack(chunk)
    chunk, offset = _take(raw, offset, tag_len, path)
    tag = chunk.decode("utf-8")
    chunk, offset = _take(raw, offset, U32.size, path)
    (dim,) = U32.unpack(chunk)
    if expected_dim is not None and dim != expected_dim:
        raise FormatError(f"{path}: table has C={dim}, expected C={expected_dim}")
    chunk, offset = _take(raw, offset, U32.size, path)
    (count,) = U32.unpack(chunk)

    entries = {}
    for _ in range(count):
        key, offset = _take(raw, offset, HASH_BYTES, path)
        chunk, offset = _take(raw, offset, U32.size, path)
        (rows,) = U32.unpack(chunk)
        chunk, offset = _take(raw, offset, 4 * rows * dim, path)
        sequence = np.frombuffer(chunk, dtype="<f4").reshape(rows, dim).astype(np.float32)
        chunk, offset = _take(raw, offset, 8 * dim, path)
        pooled = np.frombuffer(chunk, dtype="<f8").astype(np.float64)
        entries[key] = (sequence, pooled)
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes")
    logger.info(f"📨 Imported {len(entries)} embeddings ({tag}, C={dim}) from {path}")
    return ImportedEmbeddingTable(tag, dim, entries)


def coverage(table: ImportedEmbeddingTable, texts: Iterable[str]) -> list[str]:
    """Texts missing from the table."""
    return sorted({t for t in texts if t not in table})
