"""Shared exception types.

``DataError`` subclasses describe problems with user-supplied inputs (files,
records, reasoning text) and map to CLI exit code 3; everything else under
``TowercastError`` maps to exit code 4.
"""

from __future__ import annotations


class TowercastError(Exception):
    """Base class for all package errors."""


class DataError(TowercastError):
    """Invalid or inconsistent input data."""


class MalformedRecord(DataError):
    def __init__(self, source: str, line: int, reason: str):
        super().__init__(f"{source}:{line}: {reason}")
        self.source = source
        self.line = line
        self.reason = reason


class DateOrderViolation(DataError):
    """A record's end date precedes its start date."""


class DuplicateRecord(DataError):
    """Two byte-identical records in one database load."""


class UnknownCountry(DataError):
    """Strict-mode query for a country with no records at all."""


class UnboundPlaceholder(DataError):
    """A template question references a slot the renderer cannot fill."""

    def __init__(self, name: str):
        super().__init__(f"template references unknown placeholder [{name}]")
        self.name = name


class MissingResultBlock(DataError):
    """Reasoning text contains no <result>...</result> block."""

    def __init__(self, message: str = "no <result>...</result> block found", raw_text: str = ""):
        super().__init__(message)
        self.raw_text = raw_text


class FieldCountMismatch(DataError):
    def __init__(self, found: int, expected: int):
        super().__init__(f"result block has {found} fields, expected {expected}")
        self.found = found
        self.expected = expected


class EmptyField(DataError):
    def __init__(self, index: int):
        super().__init__(f"result field {index} is empty after normalization")
        self.index = index


class PositionOverflow(TowercastError):
    def __init__(self, count: int, maximum: int):
        super().__init__(f"summary has {count} tokens, position table holds {maximum}")
        self.count = count
        self.maximum = maximum


class ShapeMismatch(TowercastError):
    """An array argument has the wrong shape for the operation."""


class DimensionMismatch(TowercastError):
    """Two vectors that must share a dimension do not."""


class MissingSummary(TowercastError):
    def __init__(self, horizon: int):
        super().__init__(f"no summary supplied for horizon {horizon}")
        self.horizon = horizon


class LengthMismatch(TowercastError):
    """Paired prediction/truth sequences differ in length."""


class EmptyInput(TowercastError):
    """A metric was asked for on zero observations."""


class NonFiniteLoss(TowercastError):
    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.value = value


class InsufficientData(DataError):
    def __init__(self, region: str, detail: str = ""):
        msg = f"region {region}: not enough history"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.region = region


class TransportError(TowercastError):
    """Remote reasoner transport failure after retries."""

    def __init__(self, reason: str, status: int | None = None, attempts: int = 0):
        bits = [reason]
        if status is not None:
            bits.append(f"status={status}")
        if attempts:
            bits.append(f"attempts={attempts}")
        super().__init__("; ".join(bits))
        self.reason = reason
        self.status = status
        self.attempts = attempts


class RemoteTimeout(TransportError):
    """Remote reasoner timed out on every attempt."""
