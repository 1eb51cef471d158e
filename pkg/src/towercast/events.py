"""Event database: campaigns, holidays, incentive rules and free-text reports.

Records live on disk as JSONL files (one object per line, UTF-8) plus a
``reports/`` directory of plain-text files whose first line is a header of the
form ``[Country NN | YYYY-MM-DD | Title]``.  Loading validates every record and
fails atomically unless ``permissive=True``, in which case bad records are
skipped and reported.  Queries are pure: :func:`events_for` assembles the
per-day context used by the prompt builder and the oracle reasoner.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import date as Date
from pathlib import Path

from .errors import (
    DateOrderViolation,
    DuplicateRecord,
    MalformedRecord,
    UnknownCountry,
)

HOLIDAY_KINDS = ("Religious", "Cultural", "Public")

ALL_CATEGORIES = "All categories"

_REPORT_HEADER = re.compile(r"^\[Country (\d{2}) \| (\d{4}-\d{2}-\d{2}) \| (.+)\]$")


def _parse_date(raw: object, source: str, line: int, what: str) -> Date:
    if not isinstance(raw, str):
        raise MalformedRecord(source, line, f"{what} must be a YYYY-MM-DD string, got {raw!r}")
    try:
        return Date.fromisoformat(raw)
    except ValueError:
        raise MalformedRecord(source, line, f"bad {what} {raw!r}") from None


def _require(cond: bool, source: str, line: int, reason: str) -> None:
    if not cond:
        raise MalformedRecord(source, line, reason)


@dataclass(frozen=True)
class CampaignEntry:
    """A platform promotion with an intensity level on a 1..12 scale."""

    country: str
    name: str
    start: Date
    end: Date
    scope: tuple[str, ...] | str  # tuple of categories, or ALL_CATEGORIES
    level: int

    def __post_init__(self):
        if self.end < self.start:
            raise DateOrderViolation(f"campaign {self.name!r}: end {self.end} before start {self.start}")
        if not (1 <= self.level <= 12):
            raise ValueError(f"campaign {self.name!r}: level {self.level} outside 1..12")
        if len(self.country) != 2:
            raise ValueError(f"campaign {self.name!r}: country must be 2 chars, got {self.country!r}")

    def spans(self, day: Date) -> bool:
        return self.start <= day <= self.end

    @property
    def scope_text(self) -> str:
        if isinstance(self.scope, str):
            return self.scope
        return ", ".join(self.scope)


@dataclass(frozen=True)
class HolidayEntry:
    country: str
    name: str
    start: Date
    end: Date
    kind: str  # one of HOLIDAY_KINDS

    def __post_init__(self):
        if self.end < self.start:
            raise DateOrderViolation(f"holiday {self.name!r}: end {self.end} before start {self.start}")
        if self.kind not in HOLIDAY_KINDS:
            raise ValueError(f"holiday {self.name!r}: kind {self.kind!r} not in {HOLIDAY_KINDS}")
        if len(self.country) != 2:
            raise ValueError(f"holiday {self.name!r}: country must be 2 chars, got {self.country!r}")

    def spans(self, day: Date) -> bool:
        return self.start <= day <= self.end

    @property
    def n_days(self) -> int:
        return (self.end - self.start).days + 1


@dataclass(frozen=True)
class IncentiveRule:
    country: str
    incentive_type: str
    start: Date
    end: Date
    description: str
    condition: str  # free-form, e.g. "Min. order 20 USD"

    def __post_init__(self):
        if self.end < self.start:
            raise DateOrderViolation(
                f"incentive {self.incentive_type!r}: end {self.end} before start {self.start}"
            )
        if len(self.country) != 2:
            raise ValueError(f"incentive {self.incentive_type!r}: country must be 2 chars")

    def spans(self, day: Date) -> bool:
        return self.start <= day <= self.end


@dataclass(frozen=True)
class CampaignReport:
    """Free-text daily report; body is preserved verbatim, typos and all."""

    country: str
    date: Date
    title: str
    body: str


@dataclass(frozen=True)
class ActiveHoliday:
    """A holiday spanning the query date, with 1-based day index into its span."""

    holiday: HolidayEntry
    day_index: int

    def __post_init__(self):
        if self.day_index < 1:
            raise ValueError(f"day_index must be >= 1, got {self.day_index}")


@dataclass(frozen=True)
class DayContext:
    """Everything the reasoner may see for one (country, date)."""

    country: str
    date: Date
    campaigns: tuple[CampaignEntry, ...]
    holidays: tuple[ActiveHoliday, ...]
    incentives: tuple[IncentiveRule, ...]
    reports: tuple[CampaignReport, ...]

    @property
    def is_empty(self) -> bool:
        return not (self.campaigns or self.holidays or self.incentives or self.reports)


@dataclass(frozen=True)
class EventDatabase:
    campaigns: tuple[CampaignEntry, ...] = ()
    holidays: tuple[HolidayEntry, ...] = ()
    incentives: tuple[IncentiveRule, ...] = ()
    reports: tuple[CampaignReport, ...] = ()
    load_errors: tuple[str, ...] = ()  # populated only by permissive loads

    @property
    def countries(self) -> frozenset[str]:
        return frozenset(
            r.country
            for group in (self.campaigns, self.holidays, self.incentives, self.reports)
            for r in group
        )

    def counts(self) -> dict[str, int]:
        return {
            "campaigns": len(self.campaigns),
            "holidays": len(self.holidays),
            "incentives": len(self.incentives),
            "reports": len(self.reports),
        }


# ---------------------------------------------------------------------------
# JSON (de)serialization


def campaign_from_json(obj: dict, source: str = "<mem>", line: int = 0) -> CampaignEntry:
    _require(isinstance(obj, dict), source, line, "record must be an object")
    for key in ("country", "name", "start", "end", "scope", "level"):
        _require(key in obj, source, line, f"missing field {key!r}")
    scope = obj["scope"]
    if isinstance(scope, list):
        _require(all(isinstance(s, str) and s for s in scope), source, line, "scope entries must be strings")
        _require(len(scope) > 0, source, line, "scope list may not be empty")
        scope = tuple(scope)
    else:
        _require(scope == ALL_CATEGORIES, source, line, f"scope must be a list or {ALL_CATEGORIES!r}")
    _require(isinstance(obj["level"], int), source, line, "level must be an integer")
    try:
        return CampaignEntry(
            country=str(obj["country"]),
            name=str(obj["name"]),
            start=_parse_date(obj["start"], source, line, "start"),
            end=_parse_date(obj["end"], source, line, "end"),
            scope=scope,
            level=obj["level"],
        )
    except ValueError as exc:
        raise MalformedRecord(source, line, str(exc)) from None


def holiday_from_json(obj: dict, source: str = "<mem>", line: int = 0) -> HolidayEntry:
    _require(isinstance(obj, dict), source, line, "record must be an object")
    for key in ("country", "name", "start", "end", "kind"):
        _require(key in obj, source, line, f"missing field {key!r}")
    try:
        return HolidayEntry(
            country=str(obj["country"]),
            name=str(obj["name"]),
            start=_parse_date(obj["start"], source, line, "start"),
            end=_parse_date(obj["end"], source, line, "end"),
            kind=str(obj["kind"]),
        )
    except ValueError as exc:
        raise MalformedRecord(source, line, str(exc)) from None


def incentive_from_json(obj: dict, source: str = "<mem>", line: int = 0) -> IncentiveRule:
    _require(isinstance(obj, dict), source, line, "record must be an object")
    for key in ("country", "incentive_type", "start", "end", "description", "condition"):
        _require(key in obj, source, line, f"missing field {key!r}")
    try:
        return IncentiveRule(
            country=str(obj["country"]),
            incentive_type=str(obj["incentive_type"]),
            start=_parse_date(obj["start"], source, line, "start"),
            end=_parse_date(obj["end"], source, line, "end"),
            description=str(obj["description"]),
            condition=str(obj["condition"]),
        )
    except ValueError as exc:
        raise MalformedRecord(source, line, str(exc)) from None


def campaign_to_json(c: CampaignEntry) -> dict:
    scope = list(c.scope) if isinstance(c.scope, tuple) else c.scope
    return {
        "country": c.country,
        "name": c.name,
        "start": c.start.isoformat(),
        "end": c.end.isoformat(),
        "scope": scope,
        "level": c.level,
    }


def holiday_to_json(h: HolidayEntry) -> dict:
    return {
        "country": h.country,
        "name": h.name,
        "start": h.start.isoformat(),
        "end": h.end.isoformat(),
        "kind": h.kind,
    }


def incentive_to_json(i: IncentiveRule) -> dict:
    return {
        "country": i.country,
        "incentive_type": i.incentive_type,
        "start": i.start.isoformat(),
        "end": i.end.isoformat(),
        "description": i.description,
        "condition": i.condition,
    }


def parse_report_text(text: str, source: str = "<mem>") -> CampaignReport:
    """Parse a report file: header line, then the body verbatim."""
    first, _, body = text.partition("\n")
    m = _REPORT_HEADER.match(first.rstrip("\r"))
    if m is None:
        raise MalformedRecord(source, 1, f"bad report header {first!r}")
    country, day, title = m.group(1), m.group(2), m.group(3)
    return CampaignReport(
        country=country,
        date=_parse_date(day, source, 1, "date"),
        title=title,
        body=body,
    )


def report_to_text(r: CampaignReport) -> str:
    return f"[Country {r.country} | {r.date.isoformat()} | {r.title}]\n{r.body}"


# ---------------------------------------------------------------------------
# Load / save


def _load_jsonl(path: Path, parse, permissive: bool, errors: list[str]):
    out = []
    seen = set()
    if not path.exists():
        return out
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                try:
                    obj = json.loads(raw)
                except json.JSONDecodeError as exc:
                    raise MalformedRecord(str(path), lineno, f"invalid JSON: {exc}") from None
                rec = parse(obj, str(path), lineno)
                if rec in seen:
                    raise DuplicateRecord(f"{path}:{lineno}: exact duplicate record")
                seen.add(rec)
                out.append(rec)
            except (MalformedRecord, DuplicateRecord, DateOrderViolation) as exc:
                if not permissive:
                    raise
                errors.append(str(exc))
    return out


def load_database(root: str | Path, permissive: bool = False) -> EventDatabase:
    """Load campaigns/holidays/incentives/reports from a directory.

    Non-permissive loads fail atomically on the first bad record.  Permissive
    loads skip bad records and report them in ``EventDatabase.load_errors``.
    """
    root = Path(root)
    errors: list[str] = []
    campaigns = _load_jsonl(root / "campaigns.jsonl", campaign_from_json, permissive, errors)
    holidays = _load_jsonl(root / "holidays.jsonl", holiday_from_json, permissive, errors)
    incentives = _load_jsonl(root / "incentives.jsonl", incentive_from_json, permissive, errors)

    reports = []
    seen_reports = set()
    reports_dir = root / "reports"
    if reports_dir.is_dir():
        for path in sorted(reports_dir.glob("*.txt")):
            try:
                rec = parse_report_text(path.read_text(encoding="utf-8"), str(path))
                if rec in seen_reports:
                    raise DuplicateRecord(f"{path}: exact duplicate report")
                seen_reports.add(rec)
                reports.append(rec)
            except (MalformedRecord, DuplicateRecord) as exc:
                if not permissive:
                    raise
                errors.append(str(exc))

    return EventDatabase(
        campaigns=tuple(campaigns),
        holidays=tuple(holidays),
        incentives=tuple(incentives),
        reports=tuple(reports),
        load_errors=tuple(errors),
    )


def save_database(db: EventDatabase, root: str | Path) -> None:
    """Write a database in the on-disk layout that :func:`load_database` reads.

    This is the generator's export path; the package otherwise treats the
    database as read-only.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    with (root / "campaigns.jsonl").open("w", encoding="utf-8") as fh:
        for c in db.campaigns:
            fh.write(json.dumps(campaign_to_json(c)) + "\n")
    with (root / "holidays.jsonl").open("w", encoding="utf-8") as fh:
        for h in db.holidays:
            fh.write(json.dumps(holiday_to_json(h)) + "\n")
    with (root / "incentives.jsonl").open("w", encoding="utf-8") as fh:
        for i in db.incentives:
            fh.write(json.dumps(incentive_to_json(i)) + "\n")
    reports_dir = root / "reports"
    reports_dir.mkdir(exist_ok=True)
    for n, r in enumerate(db.reports):
        slug = re.sub(r"[^A-Za-z0-9]+", "-", r.title).strip("-").lower() or "report"
        path = reports_dir / f"{r.country}_{r.date.isoformat()}_{n:03d}_{slug}.txt"
        path.write_text(report_to_text(r), encoding="utf-8")


# ---------------------------------------------------------------------------
# Queries


def events_for(db: EventDatabase, country: str, day: Date, strict: bool = False) -> DayContext:
    """Assemble the per-day context: exactly the records spanning ``day``.

    Pure with respect to ``db``.  Active items are sorted by start date then
    name (incentives by start then type); holidays carry a 1-based day index
    into their span.  ``strict=True`` raises :class:`UnknownCountry` when the
    database holds no records at all for ``country``.
    """
    if strict and country not in db.countries:
        raise UnknownCountry(f"no records for country {country!r}")

    campaigns = tuple(
        sorted(
            (c for c in db.campaigns if c.country == country and c.spans(day)),
            key=lambda c: (c.start, c.name),
        )
    )
    holidays = tuple(
        ActiveHoliday(h, (day - h.start).days + 1)
        for h in sorted(
            (h for h in db.holidays if h.country == country and h.spans(day)),
            key=lambda h: (h.start, h.name),
        )
    )
    incentives = tuple(
        sorted(
            (i for i in db.incentives if i.country == country and i.spans(day)),
            key=lambda i: (i.start, i.incentive_type),
        )
    )
    reports = tuple(
        sorted(
            (r for r in db.reports if r.country == country and r.date == day),
            key=lambda r: r.title,
        )
    )
    return DayContext(
        country=country,
        date=day,
        campaigns=campaigns,
        holidays=holidays,
        incentives=incentives,
        reports=reports,
    )
