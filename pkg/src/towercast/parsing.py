"""Extraction of structured summary fields from free-form reasoning text.

The contract: the first ``<result>...</result>`` block wins, fields are split
on ``;``, and each field is normalized (trimmed, lowercased, internal
whitespace collapsed to single spaces).  Normalization is idempotent.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import EmptyField, FieldCountMismatch, MissingResultBlock

RESULT_OPEN = "<result>"
RESULT_CLOSE = "</result>"

DEFAULT_FIELD_COUNT = 8


@dataclass(frozen=True)
class SummaryFields:
    """An ordered tuple of normalized summary fields."""

    fields: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.fields)

    def __iter__(self):
        return iter(self.fields)

    def __getitem__(self, i: int) -> str:
        return self.fields[i]


def normalize_field(raw: str) -> str:
    """Trim, lowercase, and collapse internal whitespace runs."""
    return " ".join(raw.split()).lower()


def find_result_block(text: str) -> str:
    """Return the raw contents of the first result block; later blocks are ignored."""
    start = text.find(RESULT_OPEN)
    if start < 0:
        raise MissingResultBlock(raw_text=text)
    start += len(RESULT_OPEN)
    end = text.find(RESULT_CLOSE, start)
    if end < 0:
        raise MissingResultBlock("found <result> but no closing </result>", raw_text=text)
    return text[start:end]


def extract_summary(text, expected_k: int = DEFAULT_FIELD_COUNT) -> SummaryFields:
    """Parse reasoning output into exactly ``expected_k`` normalized fields.

    Accepts a string or anything with a ``.text`` attribute (a reasoning
    record).  Raises :class:`MissingResultBlock`, :class:`FieldCountMismatch`
    or :class:`EmptyField` on malformed input.
    """
    raw = getattr(text, "text", text)
    block = find_result_block(raw)
    parts = block.split(";")
    if len(parts) != expected_k:
        raise FieldCountMismatch(found=len(parts), expected=expected_k)
    fields = []
    for i, part in enumerate(parts, start=1):
        norm = normalize_field(part)
        if not norm:
            raise EmptyField(i)
        fields.append(norm)
    return SummaryFields(tuple(fields))
