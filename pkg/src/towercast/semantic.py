"""Summary-field embedding: vocabulary, tokenization and sum pooling.

Fields are whitespace-tokenized (they arrive pre-normalized from the parser).
Each token contributes a learned token vector plus a learned position vector,
with the position index running over the flattened token sequence across all
fields; the summary embedding is the sum of those contributions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import PositionOverflow
from .parsing import SummaryFields

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"


@dataclass(frozen=True)
class Vocab:
    """Token-to-id map with reserved PAD=0 and UNK=1 entries."""

    tokens: tuple[str, ...]  # tokens with ids 2, 3, ... in order

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i + 2 for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens) + 2

    def id_of(self, token: str) -> int:
        return self._index.get(token, UNK_ID)

    def token_of(self, idx: int) -> str:
        if idx == PAD_ID:
            return PAD_TOKEN
        if idx == UNK_ID:
            return UNK_TOKEN
        return self.tokens[idx - 2]


def build_vocab(corpus) -> Vocab:
    """Collect tokens from an iterable of :class:`SummaryFields` in
    first-seen order.  Deterministic for a deterministic corpus order."""
    seen: dict[str, None] = {}
    for summary in corpus:
        for fld in summary:
            for tok in fld.split():
                if tok not in seen:
                    seen[tok] = None
    return Vocab(tuple(seen.keys()))


def save_vocab(vocab: Vocab, path: str | Path) -> None:
    """One token per line; the token on (0-based) line ``n`` has id ``n + 2``."""
    Path(path).write_text("".join(t + "\n" for t in vocab.tokens), encoding="utf-8")


def load_vocab(path: str | Path) -> Vocab:
    text = Path(path).read_text(encoding="utf-8")
    return Vocab(tuple(line for line in text.splitlines()))


def tokenize(field: str, vocab: Vocab) -> list[int]:
    """Whitespace-split one field; unknown tokens map to UNK, empty to []."""
    return [vocab.id_of(tok) for tok in field.split()]


def summary_token_ids(fields: SummaryFields, vocab: Vocab) -> list[int]:
    """Flatten a summary into one token-id sequence across all fields."""
    ids: list[int] = []
    for fld in fields:
        ids.extend(tokenize(fld, vocab))
    return ids


@dataclass
class SemanticEmbeddingParams:
    token_table: np.ndarray  # [vocab, align_dim]
    pos_table: np.ndarray  # [max_positions, align_dim]

    @property
    def align_dim(self) -> int:
        return self.token_table.shape[1]

    @property
    def max_positions(self) -> int:
        return self.pos_table.shape[0]


def init_semantic_params(
    vocab_size: int,
    align_dim: int,
    max_positions: int,
    rng: np.random.Generator,
    dtype=np.float32,
) -> SemanticEmbeddingParams:
    """Zero-mean uniform init scaled by 1/sqrt(align_dim)."""
    scale = 1.0 / np.sqrt(align_dim)
    token = rng.uniform(-scale, scale, size=(vocab_size, align_dim)).astype(dtype)
    pos = rng.uniform(-scale, scale, size=(max_positions, align_dim)).astype(dtype)
    return SemanticEmbeddingParams(token_table=token, pos_table=pos)


def embed_summary(
    fields: SummaryFields,
    params: SemanticEmbeddingParams,
    vocab: Vocab,
) -> np.ndarray:
    """Sum of token + position vectors over the flattened token sequence.

    Deterministic, linear in both tables; an empty summary embeds to zeros.
    Raises :class:`PositionOverflow` when the sequence outgrows the position
    table.
    """
    ids = summary_token_ids(fields, vocab)
    if len(ids) > params.max_positions:
        raise PositionOverflow(len(ids), params.max_positions)
    out = np.zeros(params.align_dim, dtype=params.token_table.dtype)
    if not ids:
        return out
    idx = np.asarray(ids)
    return (params.token_table[idx] + params.pos_table[: len(ids)]).sum(axis=0)
