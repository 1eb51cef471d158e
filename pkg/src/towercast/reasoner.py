"""Reasoning over a day's event context.

Two interchangeable sources produce the same artifact — free text whose last
line is a ``<result>...</result>`` summary:

* :func:`reason_oracle` — a deterministic rule table over the day context.
  It exists so the rest of the pipeline can be exercised and tested without a
  network dependency, and it answers the default question schema directly
  from the structured records.
* :class:`RemoteReasoner` — a chat-completion HTTP client with retries,
  bounded concurrency and an optional on-disk response cache.

Every invocation can append one record to a newline-delimited audit log.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import requests

from .errors import FieldCountMismatch, MissingResultBlock, RemoteTimeout, TransportError
from .events import DayContext
from .parsing import RESULT_CLOSE, RESULT_OPEN
from .prompting import PromptTemplate, PromptText

SOURCE_ORACLE = "oracle"
SOURCE_REMOTE = "remote"

TREND_SURGE = "Demand surge"
TREND_UP = "Moderate increase"
TREND_NORMAL = "Demand normal"
TREND_DOWN = "Moderate decrease"
TREND_DROP = "Demand drop"

_NUMBER = re.compile(r"\d+(?:\.\d+)?")


@dataclass(frozen=True)
class RawReasoning:
    text: str
    source: str  # SOURCE_ORACLE or SOURCE_REMOTE


def prompt_digest(prompt: PromptText | str) -> str:
    raw = getattr(prompt, "text", prompt)
    return hashlib.sha256(raw.encode("utf-8")).hexdigest()


class AuditLog:
    """Append-only JSONL audit sink, safe for concurrent writers."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def record(self, country: str, day, source: str, digest: str, response: str) -> None:
        entry = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "country": country,
            "date": str(day),
            "source": source,
            "prompt_digest": digest,
            "response": response,
        }
        line = json.dumps(entry, ensure_ascii=False)
        with self._lock:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")


# ---------------------------------------------------------------------------
# Oracle


def ordinal(n: int) -> str:
    if 10 <= n % 100 <= 20:
        suffix = "th"
    else:
        suffix = {1: "st", 2: "nd", 3: "rd"}.get(n % 10, "th")
    return f"{n}{suffix}"


def _max_campaign_level(ctx: DayContext) -> int:
    return max((c.level for c in ctx.campaigns), default=0)


def _is_free_shipping(inc) -> bool:
    return "free shipping" in inc.incentive_type.lower()


def _is_logistics(inc) -> bool:
    t = inc.incentive_type.lower()
    return any(word in t for word in ("logistics", "coupon", "shipping"))


def _seller_keywords(ctx: DayContext) -> list[str]:
    found = []
    for key in ("subsidy", "rebate", "cashback"):
        if any(key in i.incentive_type.lower() for i in ctx.incentives):
            found.append(key)
    return found


def _threshold_amount(ctx: DayContext) -> str | None:
    for inc in ctx.incentives:
        if not _is_logistics(inc):
            continue
        m = _NUMBER.search(inc.condition)
        if m:
            value = m.group(0)
            return value.rstrip("0").rstrip(".") if "." in value else value
    return None


def _demand_trend(ctx: DayContext) -> str:
    """Deterministic trend cascade.

    Surge on heavy campaigns (level >= 10) or holiday onset backed by any
    campaign; drop inside a religious span past day 1 with no campaign;
    moderate moves for single mild signals; normal otherwise.
    """
    level = _max_campaign_level(ctx)
    rel_past_onset = any(
        ah.holiday.kind == "Religious" and ah.day_index >= 2 for ah in ctx.holidays
    )
    rel_day1 = any(ah.holiday.kind == "Religious" and ah.day_index == 1 for ah in ctx.holidays)
    public = any(ah.holiday.kind == "Public" for ah in ctx.holidays)
    cultural = any(ah.holiday.kind == "Cultural" for ah in ctx.holidays)
    onset = any(ah.day_index == 1 for ah in ctx.holidays)

    if level >= 10 or (onset and level >= 1):
        return TREND_SURGE
    if rel_past_onset and level == 0:
        return TREND_DROP
    if (rel_day1 or public) and level == 0:
        return TREND_DOWN
    if (rel_past_onset or rel_day1 or public) and level >= 1:
        return TREND_DOWN
    if cultural or level >= 6:
        return TREND_UP
    if level >= 1 or any(_is_free_shipping(i) for i in ctx.incentives) or _seller_keywords(ctx):
        return TREND_UP
    return TREND_NORMAL


def oracle_fields(ctx: DayContext) -> list[str]:
    """The eight raw (pre-normalization) summary fields for a day context."""
    fields = [f"Country code is {ctx.country}"]

    if ctx.holidays:
        lead = ctx.holidays[0]
        fields.append(f"On the {ordinal(lead.day_index)} day of the holiday")
        h = lead.holiday
        if h.kind == "Public" and h.n_days == 1:
            fields.append("state-level holiday")
        else:
            fields.append("national-level holiday")
    else:
        fields.append("no holiday")
        fields.append("no holiday")

    free = [i for i in ctx.incentives if _is_free_shipping(i)]
    if free:
        day = (ctx.date - free[0].start).days + 1
        fields.append(f"{ordinal(day)} day of the free shipping event")
    else:
        fields.append("Non-free shipping event")

    level = _max_campaign_level(ctx)
    fields.append(f"Campaign level {level}" if level else "no campaign")

    threshold = _threshold_amount(ctx)
    if threshold is not None:
        fields.append(f"Minimum shipping threshold is {threshold}")
    else:
        fields.append("no logistics shipping event")

    sellers = _seller_keywords(ctx)
    if sellers:
        phrases = {"subsidy": "top sellers' subsidy", "rebate": "rebate", "cashback": "cashback"}
        fields.append(" + ".join(phrases[k] for k in sellers))
    else:
        fields.append("no seller incentive")

    fields.append(_demand_trend(ctx))
    return fields


def _oracle_trace(ctx: DayContext, fields: list[str]) -> list[str]:
    """Short per-question reasoning lines preceding the summary."""
    lines = ["Working through the questions:"]
    lines.append(f"Q1: The records are for country {ctx.country}.")
    if ctx.holidays:
        lead = ctx.holidays[0]
        h = lead.holiday
        lines.append(
            f"Q2: {h.name} spans {h.n_days} day(s) and the target date is day "
            f"{lead.day_index} of that span."
        )
        lines.append(f"Q3: {h.name} is a {h.kind} holiday; judged {fields[2]}.")
        if lead.day_index == 1:
            lines.append("Q4: Holiday onset usually coincides with pre-holiday purchasing.")
        elif h.kind == "Religious":
            lines.append("Q4: Mid-holiday religious observance usually suppresses shopping.")
        else:
            lines.append("Q4: Shopping-oriented holiday; demand should hold up.")
    else:
        lines.append("Q2: No holiday spans the target date.")
        lines.append("Q3: Not applicable without a holiday.")
        lines.append("Q4: Not applicable without a holiday.")
    lines.append(f"Q5: {fields[3]}.")
    if ctx.campaigns:
        names = ", ".join(f"{c.name} (level {c.level})" for c in ctx.campaigns)
        lines.append(f"Q6: Active campaigns: {names}; highest level wins.")
    else:
        lines.append("Q6: No campaign is active.")
    lines.append(f"Q7: {fields[5]}.")
    if ctx.incentives:
        types = ", ".join(i.incentive_type for i in ctx.incentives)
        lines.append(f"Q8: Active incentives: {types}.")
    else:
        lines.append("Q8: No incentives are active.")
    lines.append(f"Q9: Combined signals point to: {fields[7]}.")
    return lines


def reason_oracle(
    ctx: DayContext,
    template: PromptTemplate,
    audit: AuditLog | None = None,
) -> RawReasoning:
    """Deterministic reasoning from structured records: a pure function of
    (ctx, template) — byte-identical output for identical inputs."""
    fields = oracle_fields(ctx)
    if template.expected_field_count != len(fields):
        raise FieldCountMismatch(found=len(fields), expected=template.expected_field_count)
    lines = _oracle_trace(ctx, fields)
    lines.append("Summary:")
    lines.append(RESULT_OPEN + "; ".join(fields) + RESULT_CLOSE)
    text = "\n".join(lines) + "\n"
    out = RawReasoning(text=text, source=SOURCE_ORACLE)
    if audit is not None:
        digest = prompt_digest("; ".join(fields))
        audit.record(ctx.country, ctx.date, SOURCE_ORACLE, digest, text)
    return out


# ---------------------------------------------------------------------------
# Remote client


@dataclass
class EndpointConfig:
    url: str
    api_key: str = ""
    model: str = "default"
    timeout_s: float = 30.0
    max_retries: int = 3
    backoff_s: float = 1.0
    concurrency: int = 4
    temperature: float | None = None
    cache_dir: str | None = None

    @classmethod
    def from_env(cls, env=os.environ) -> "EndpointConfig":
        url = env.get("TOWERCAST_LLM_URL", "")
        if not url:
            raise TransportError("TOWERCAST_LLM_URL is not set")
        return cls(
            url=url,
            api_key=env.get("TOWERCAST_LLM_API_KEY", ""),
            model=env.get("TOWERCAST_LLM_MODEL", "default"),
            timeout_s=float(env.get("TOWERCAST_LLM_TIMEOUT", "30")),
            max_retries=int(env.get("TOWERCAST_LLM_MAX_RETRIES", "3")),
            backoff_s=float(env.get("TOWERCAST_LLM_BACKOFF", "1.0")),
            concurrency=int(env.get("TOWERCAST_LLM_CONCURRENCY", "4")),
            cache_dir=env.get("TOWERCAST_LLM_CACHE") or None,
        )


class RemoteReasoner:
    """Chat-completion client: single user message in, message text out.

    Retries transport failures and 429/5xx responses with exponential backoff,
    caps in-flight requests with a semaphore, and (optionally) caches
    responses on disk keyed by prompt digest + model name.
    """

    def __init__(self, cfg: EndpointConfig, audit: AuditLog | None = None, session=None):
        self.cfg = cfg
        self.audit = audit
        self._session = session or requests.Session()
        self._gate = threading.Semaphore(max(1, cfg.concurrency))

    # -- cache ----------------------------------------------------------
    def _cache_path(self, digest: str) -> Path | None:
        if not self.cfg.cache_dir:
            return None
        key = hashlib.sha256(f"{self.cfg.model}\n{digest}".encode()).hexdigest()
        return Path(self.cfg.cache_dir) / f"{key}.json"

    def _cache_get(self, digest: str) -> str | None:
        path = self._cache_path(digest)
        if path is None or not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))["response"]

    def _cache_put(self, digest: str, response: str) -> None:
        path = self._cache_path(digest)
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps({"response": response}, ensure_ascii=False), encoding="utf-8")
        os.replace(tmp, path)

    # -- request --------------------------------------------------------
    def _post_once(self, prompt_text: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self.cfg.api_key:
            headers["Authorization"] = f"Bearer {self.cfg.api_key}"
        body = {
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt_text}],
        }
        if self.cfg.temperature is not None:
            body["temperature"] = self.cfg.temperature
        resp = self._session.post(
            self.cfg.url, json=body, headers=headers, timeout=self.cfg.timeout_s
        )
        if resp.status_code != 200:
            raise TransportError("non-200 response", status=resp.status_code)
        payload = resp.json()
        try:
            return payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise TransportError("response missing choices[0].message.content") from None

    def reason(
        self,
        prompt: PromptText | str,
        country: str = "",
        day: str = "",
    ) -> RawReasoning:
        prompt_text = getattr(prompt, "text", prompt)
        digest = prompt_digest(prompt_text)

        cached = self._cache_get(digest)
        if cached is not None:
            self._audit(country, day, digest, cached)
            self._require_result_block(cached)
            return RawReasoning(text=cached, source=SOURCE_REMOTE)

        attempts = 0
        last: Exception | None = None
        with self._gate:
            while attempts <= self.cfg.max_retries:
                if attempts:
                    time.sleep(self.cfg.backoff_s * (2 ** (attempts - 1)))
                attempts += 1
                try:
                    text = self._post_once(prompt_text)
                    break
                except requests.Timeout as exc:
                    last = exc
                except requests.RequestException as exc:
                    last = exc
                except TransportError as exc:
                    # 4xx other than 429 will not improve on retry
                    if exc.status is not None and 400 <= exc.status < 500 and exc.status != 429:
                        raise TransportError(exc.reason, status=exc.status, attempts=attempts)
                    last = exc
            else:
                if isinstance(last, requests.Timeout):
                    raise RemoteTimeout("request timed out", attempts=attempts)
                status = last.status if isinstance(last, TransportError) else None
                raise TransportError(str(last), status=status, attempts=attempts)

        self._cache_put(digest, text)
        self._audit(country, day, digest, text)
        self._require_result_block(text)
        return RawReasoning(text=text, source=SOURCE_REMOTE)

    def _require_result_block(self, text: str) -> None:
        if RESULT_OPEN not in text:
            raise MissingResultBlock(
                "remote response has no <result> block", raw_text=text
            )

    def _audit(self, country: str, day: str, digest: str, text: str) -> None:
        if self.audit is not None:
            self.audit.record(country, day, SOURCE_REMOTE, digest, text)
