"""Prompt construction for the reasoning step.

A template is a plain-text file: question blocks separated by lines containing
exactly ``---``, with the final block being the output-format instruction.
Editing the file (adding or reordering questions) never requires code changes.
Rendering substitutes ``[CountryCode]`` and ``[Date]`` and serializes the
day's records; any other bracketed CamelCase placeholder is an error.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .errors import UnboundPlaceholder
from .events import ActiveHoliday, CampaignEntry, CampaignReport, DayContext, IncentiveRule

RESULT_OPEN = "<result>"
RESULT_CLOSE = "</result>"

# Render slots the builder knows how to fill.  Lowercase bracket tokens such
# as the literal "[x]" in answer-format hints are not slots.
_SLOT = re.compile(r"\[([A-Z][A-Za-z]+)\]")
_KNOWN_SLOTS = {"CountryCode", "Date"}

DEFAULT_TEMPLATE_TEXT = """\
Q1: Which country is this forecast for? Answer with the two-digit country code.
---
Q2: Is the target date inside a holiday span? If yes, answer 'on the [x]th day of the holiday' using the day's position inside the span; if not, answer 'no holiday'.
---
Q3: If there is a holiday, is it observed state-wide or nation-wide? Answer 'state-level holiday' or 'national-level holiday', or 'no holiday' if none applies.
---
Q4: Is this holiday one where people mostly shop, or one where people mostly travel and shop less? Use the event records and the holiday kind to judge the expected direction of demand.
---
Q5: Is a free-shipping event running on the target date? If yes, answer '[x]th day of the free shipping event' using its position inside the span; otherwise answer 'Non-free shipping event'.
---
Q6: Is a campaign active on the target date? If yes, answer 'Campaign level [x]' using the highest active level; otherwise answer 'no campaign'.
---
Q7: Is a platform logistics event active? If so, answer 'Minimum shipping threshold is [x]' using the threshold amount from its conditions; otherwise answer 'no logistics shipping event'.
---
Q8: Are seller-side incentives active (subsidies, rebates, cashback)? Name them briefly, or answer 'no seller incentive'.
---
Q9: Putting all of the above together, how will demand on the target date compare to an ordinary day? Answer exactly one of: 'Demand surge', 'Moderate increase', 'Demand normal', 'Moderate decrease', 'Demand drop'.
---
Show your step-by-step reasoning for every question, then finish with a one-line summary in exactly this layout: <result>[CountryCode]; no holiday or on the [x]th day of the holiday; state-level or national-level or no holiday; Non-free shipping event or [x]th day of the free shipping event; Campaign level [x] or no campaign; Minimum shipping threshold is [x] or no logistics shipping event; seller incentive or no seller incentive; demand trend</result>. Place the summary inside <result></result> tags.
"""


@dataclass(frozen=True)
class PromptTemplate:
    questions: tuple[str, ...]
    format_line: str

    def __post_init__(self):
        if RESULT_OPEN not in self.format_line or RESULT_CLOSE not in self.format_line:
            raise ValueError("format line must mention the <result></result> delimiters")

    @property
    def expected_field_count(self) -> int:
        """Field count implied by the slot list inside the format line's
        first ``<result>...</result>`` pair."""
        start = self.format_line.index(RESULT_OPEN) + len(RESULT_OPEN)
        end = self.format_line.index(RESULT_CLOSE, start)
        inner = self.format_line[start:end]
        if not inner.strip():
            return 0
        return inner.count(";") + 1


@dataclass(frozen=True)
class PromptText:
    text: str

    def __str__(self) -> str:  # pragma: no cover - convenience
        return self.text


def default_template() -> PromptTemplate:
    return parse_template(DEFAULT_TEMPLATE_TEXT)


def parse_template(text: str) -> PromptTemplate:
    blocks = [b.strip() for b in re.split(r"^---$", text, flags=re.MULTILINE)]
    blocks = [b for b in blocks if b]
    if not blocks:
        raise ValueError("template file is empty")
    return PromptTemplate(questions=tuple(blocks[:-1]), format_line=blocks[-1])


def load_template(path: str | Path) -> PromptTemplate:
    return parse_template(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Record serialization (shared with tests; spans are rendered as relative day
# positions so the target date string appears exactly once per prompt).


def serialize_campaign(c: CampaignEntry, ctx_date) -> str:
    day = (ctx_date - c.start).days + 1
    n = (c.end - c.start).days + 1
    return f"Campaign: {c.name} | level {c.level} | scope {c.scope_text} | day {day} of {n}"


def serialize_holiday(ah: ActiveHoliday) -> str:
    h = ah.holiday
    return f"Holiday: {h.name} | kind {h.kind} | day {ah.day_index} of {h.n_days}"


def serialize_incentive(i: IncentiveRule, ctx_date) -> str:
    day = (ctx_date - i.start).days + 1
    n = (i.end - i.start).days + 1
    return (
        f"Incentive: {i.incentive_type} | {i.description} | "
        f"condition: {i.condition} | day {day} of {n}"
    )


def serialize_report(r: CampaignReport) -> str:
    body = " ".join(r.body.split())
    return f"Report: [{r.title}] {body}"


def serialize_context_records(ctx: DayContext) -> list[str]:
    lines = [serialize_campaign(c, ctx.date) for c in ctx.campaigns]
    lines += [serialize_holiday(ah) for ah in ctx.holidays]
    lines += [serialize_incentive(i, ctx.date) for i in ctx.incentives]
    lines += [serialize_report(r) for r in ctx.reports]
    return lines


# ---------------------------------------------------------------------------
# Rendering


def _substitute(text: str, ctx: DayContext) -> str:
    filled = text.replace("[CountryCode]", ctx.country).replace("[Date]", ctx.date.isoformat())
    leftover = [m for m in _SLOT.findall(filled) if m not in _KNOWN_SLOTS]
    if leftover:
        raise UnboundPlaceholder(leftover[0])
    return filled


def render_prompt(ctx: DayContext, template: PromptTemplate, strict: bool = False) -> PromptText:
    """Render the full prompt for one day.

    Output is preamble (country, date, serialized records), then the question
    blocks with placeholders substituted, then the format instruction.  Pure:
    identical inputs yield identical text.  With ``strict=True`` an empty
    question list is rejected; otherwise it renders preamble + format only.
    """
    if strict and not template.questions:
        raise ValueError("template has no questions")

    lines = [
        "You are a demand analyst for an e-commerce platform.",
        f"Country code {ctx.country}, target date {ctx.date.isoformat()}.",
        "Use only the event records below; records from other days or countries are not shown.",
        "",
        "Records for this date:",
    ]
    records = serialize_context_records(ctx)
    if records:
        lines.extend(records)
    else:
        lines.append("(no event records for this date)")
    lines.append("")
    if template.questions:
        lines.append("Questions:")
        for q in template.questions:
            lines.append(_substitute(q, ctx))
        lines.append("")
    lines.append(_substitute(template.format_line, ctx))
    return PromptText("\n".join(lines) + "\n")
