from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import torch

from elegance.errors import ContractError, DomainError

ALPHABET = " abcdefghijklmnopqrstuvwxyz0123456789'.,?-áéíóúàèìòùâêôãõçñü"
ALPHABET_VERSION = "char60-v1"

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2
MASK_ID = 3
SPECIAL_TOKENS = ("<pad>", "<bos>", "<eos>", "<mask>")
VOCAB_SIZE = len(SPECIAL_TOKENS) + len(ALPHABET)

_CHAR_TO_ID = {ch: idx + len(SPECIAL_TOKENS) for idx, ch in enumerate(ALPHABET)}
_ID_TO_CHAR = {idx: ch for ch, idx in _CHAR_TO_ID.items()}


@dataclass(frozen=True)
class TokenSequence:
    ids: tuple[int, ...]
    alphabet_version: str = ALPHABET_VERSION

    def __post_init__(self) -> None:
        ids = tuple(int(i) for i in self.ids)
        bad = [i for i in ids if not 0 <= i < VOCAB_SIZE]
        if bad:
            raise ContractError(f"Token ids out of range [0, {VOCAB_SIZE}): {bad[:5]}")
        object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return len(self.ids)


def check_text(text: str) -> None:
    for ch in text:
        if ch not in _CHAR_TO_ID:
            raise DomainError(f"Character {ch!r} is not in the alphabet")


def char_index(ch: str) -> int:
    """Position of ch in the alphabet (0-based)."""
    check_text(ch)
    return _CHAR_TO_ID[ch] - len(SPECIAL_TOKENS)


def tokenize(text: str) -> TokenSequence:
    check_text(text)
    return TokenSequence((BOS_ID, *(_CHAR_TO_ID[ch] for ch in text), EOS_ID))


def detokenize(tokens: TokenSequence) -> str:
    return "".join(_ID_TO_CHAR[i] for i in tokens.ids if i in _ID_TO_CHAR)


def pad_batch(sequences: Sequence[TokenSequence], length: int | None = None) -> torch.Tensor:
    """Right-pad with PAD into a [B, N] long tensor."""
    longest = max(len(s) for s in sequences)
    length = longest if length is None else length
    if length < longest:
        raise ContractError(f"Cannot pad sequences of length {longest} into {length}")
    batch = torch.full((len(sequences), length), PAD_ID, dtype=torch.long)
    for row, seq in enumerate(sequences):
        batch[row, : len(seq)] = torch.tensor(seq.ids, dtype=torch.long)
    return batch


def tokenize_batch(texts: Iterable[str]) -> torch.Tensor:
    return pad_batch([tokenize(t) for t in texts])
