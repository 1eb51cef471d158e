"""Synthetic multi-region demand scenarios with planted event effects.

Each country gets its own event calendar (campaigns, holidays, incentive
rules, a few free-text reports); all regions of a country share that calendar.
Per region-day the target is ``core * factor + noise`` where ``core`` is a
floored positive trend + weekly seasonality, ``factor`` composes the planted
multiplicative event effects, and the noise stream is drawn independently of
event placement so that regenerating with events removed reproduces the
stored no-event baseline bit-for-bit.

Planted effect shapes:

* campaigns — uplift grows monotonically with campaign level inside the
  configured band; overlapping campaigns contribute their maximum uplift;
* Religious holidays — surge in the run-up days, drop during the span;
* Cultural holidays — mild sustained uplift;
* Public holidays — drop during the span.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date as Date, timedelta

import numpy as np

from .data import Dataset, RegionSeries
from .events import (
    ALL_CATEGORIES,
    CampaignEntry,
    CampaignReport,
    EventDatabase,
    HolidayEntry,
    IncentiveRule,
)

FEATURE_NAMES = ["target", "dow_sin", "dow_cos", "traffic"]

_CAMPAIGN_NAMES = [
    "Mega Sale", "Flash Deal Day", "Payday Sale", "Super Brand Day",
    "Shopping Festival", "Clearance Rush", "Double Digit Day", "Weekend Blitz",
    "Category Spotlight", "Big Savings Week",
]
_SCOPES = [
    ALL_CATEGORIES,
    ("Electronics", "Fashion"),
    ("Home", "Kitchen"),
    ("Groceries",),
    ("Beauty", "Health"),
    ("Stationery", "Electronics"),
]
_HOLIDAY_NAMES = {
    "Religious": ["Fasting Month End", "Harvest Blessing", "Lantern Vigil", "Pilgrims' Days"],
    "Cultural": ["Water Festival", "Lantern Festival", "Harvest Festival", "River Parade"],
    "Public": ["Founders Day", "Unity Day", "Constitution Day", "Royal Birthday"],
}
_INCENTIVE_TYPES = [
    "Free shipping",
    "Seller subsidy",
    "Cross-category rebate",
    "Logistics coupon",
    "Seller cashback",
]
_INCENTIVE_DESCRIPTIONS = {
    "Free shipping": "Platform-funded free shipping",
    "Seller subsidy": "Subsidy on featured categories",
    "Cross-category rebate": "Rebate on qualifying orders",
    "Logistics coupon": "Shipping coupon bundle",
    "Seller cashback": "Cashback credited to sellers",
}


@dataclass
class ScenarioConfig:
    n_countries: int = 4
    regions_per_country: int = 10
    n_days: int = 730
    start: str = "2024-01-01"
    seed: int = 7

    base_level_range: tuple[float, float] = (60.0, 140.0)
    trend_slope_range: tuple[float, float] = (-0.01, 0.04)
    weekly_amp_frac: tuple[float, float] = (0.10, 0.30)
    noise_frac: float = 0.03

    promo_day_share: float = 0.30
    holiday_day_share: float = 0.15
    incentive_attach_prob: float = 0.42

    promo_uplift_range: tuple[float, float] = (0.85, 1.20)
    public_drop_range: tuple[float, float] = (0.30, 0.50)
    religious_presurge_range: tuple[float, float] = (0.35, 0.70)
    religious_drop_range: tuple[float, float] = (0.20, 0.40)
    cultural_uplift_range: tuple[float, float] = (0.10, 0.30)
    presurge_days: int = 3
    aux_response: float = 0.6

    def validate(self) -> None:
        if self.n_countries < 1 or self.regions_per_country < 1:
            raise ValueError("need at least one country and one region")
        if self.n_days < 1:
            raise ValueError("n_days must be positive")
        for name in ("promo_day_share", "holiday_day_share", "incentive_attach_prob"):
            if not (0.0 <= getattr(self, name) <= 1.0):
                raise ValueError(f"{name} must be in [0, 1]")
        for name in (
            "promo_uplift_range", "public_drop_range", "religious_presurge_range",
            "religious_drop_range", "cultural_uplift_range",
        ):
            lo, hi = getattr(self, name)
            if not (0.0 <= lo <= hi):
                raise ValueError(f"{name} must satisfy 0 <= lo <= hi")
        lo, hi = self.public_drop_range
        if hi >= 1.0 or self.religious_drop_range[1] >= 1.0:
            raise ValueError("drop fractions must stay below 1")
        if self.noise_frac < 0:
            raise ValueError("noise_frac must be non-negative")

    @property
    def start_date(self) -> Date:
        return Date.fromisoformat(self.start)


def campaign_uplift(level: int, uplift_range: tuple[float, float]) -> float:
    """Monotone map from level 1..12 into the configured uplift band."""
    lo, hi = uplift_range
    return lo + (hi - lo) * (level - 1) / 11.0


def _uniform(rng: np.random.Generator, rng_pair: tuple[float, float]) -> float:
    lo, hi = rng_pair
    if hi == lo:
        return float(lo)
    return float(rng.uniform(lo, hi))


@dataclass
class _PlannedHoliday:
    entry: HolidayEntry
    start_idx: int
    length: int
    presurge: float
    drop_or_uplift: float


def _place_span(
    rng: np.random.Generator,
    length: int,
    n_days: int,
    covered: set[int],
    used_spans: set[tuple[int, int]],
) -> int | None:
    """Pick a start index, preferring placements that don't overlap existing
    same-type spans (40 attempts), then falling back to any fresh span."""
    fallback = None
    for _ in range(40):
        start_idx = int(rng.integers(0, n_days - length + 1))
        if (start_idx, length) in used_spans:
            continue
        if all(d not in covered for d in range(start_idx, start_idx + length)):
            return start_idx
        if fallback is None:
            fallback = start_idx
    return fallback


def _plan_campaigns(cfg: ScenarioConfig, country: str, rng: np.random.Generator):
    target = round(cfg.promo_day_share * cfg.n_days)
    covered: set[int] = set()
    campaigns: list[tuple[CampaignEntry, int, int]] = []  # entry, start_idx, length
    used_spans: set[tuple[int, int]] = set()
    guard = 0
    while len(covered) < target and guard < 10_000:
        guard += 1
        remaining = target - len(covered)
        kind = rng.random()
        if kind < 0.25 or remaining <= 2:
            length = 1
        elif kind < 0.80 or remaining <= 10:
            length = int(rng.integers(3, 8))
        else:
            length = int(rng.integers(14, 31))
        length = min(length, cfg.n_days, max(1, remaining + 2))
        start_idx = _place_span(rng, length, cfg.n_days, covered, used_spans)
        if start_idx is None:
            continue
        used_spans.add((start_idx, length))
        level = int(rng.integers(1, 13))
        name = _CAMPAIGN_NAMES[int(rng.integers(0, len(_CAMPAIGN_NAMES)))]
        start = cfg.start_date + timedelta(days=start_idx)
        entry = CampaignEntry(
            country=country,
            name=f"{name} {start.strftime('%b %Y')}",
            start=start,
            end=start + timedelta(days=length - 1),
            scope=_SCOPES[int(rng.integers(0, len(_SCOPES)))],
            level=level,
        )
        campaigns.append((entry, start_idx, length))
        covered.update(range(start_idx, start_idx + length))
    return campaigns


def _plan_holidays(cfg: ScenarioConfig, country: str, rng: np.random.Generator):
    target = round(cfg.holiday_day_share * cfg.n_days)
    covered: set[int] = set()
    planned: list[_PlannedHoliday] = []
    used_spans: set[tuple[int, int]] = set()
    guard = 0
    while len(covered) < target and guard < 10_000:
        guard += 1
        remaining = target - len(covered)
        length = int(rng.integers(1, 5))
        if remaining < length:
            length = max(1, remaining)
        start_idx = _place_span(rng, length, cfg.n_days, covered, used_spans)
        if start_idx is None:
            continue
        used_spans.add((start_idx, length))
        roll = rng.random()
        kind = "Religious" if roll < 0.4 else ("Cultural" if roll < 0.7 else "Public")
        names = _HOLIDAY_NAMES[kind]
        name = names[int(rng.integers(0, len(names)))]
        start = cfg.start_date + timedelta(days=start_idx)
        entry = HolidayEntry(
            country=country,
            name=f"{name} {start.year}",
            start=start,
            end=start + timedelta(days=length - 1),
            kind=kind,
        )
        if kind == "Religious":
            effect = _uniform(rng, cfg.religious_drop_range)
        elif kind == "Public":
            effect = _uniform(rng, cfg.public_drop_range)
        else:
            effect = _uniform(rng, cfg.cultural_uplift_range)
        planned.append(
            _PlannedHoliday(
                entry=entry,
                start_idx=start_idx,
                length=length,
                presurge=_uniform(rng, cfg.religious_presurge_range),
                drop_or_uplift=effect,
            )
        )
        covered.update(range(start_idx, start_idx + length))
    return planned


def _plan_incentives(cfg: ScenarioConfig, country: str, campaigns, rng: np.random.Generator):
    """Attach incentive rules to a subset of campaigns.

    Targets ``incentive_attach_prob`` as a share of campaign *days*, not of
    campaigns: a per-campaign coin flip has very high day-share variance when
    span lengths are dispersed (one long campaign flips weeks at a time).
    """
    total_days = sum(length for _, _, length in campaigns)
    target_days = round(cfg.incentive_attach_prob * total_days)
    incentives: list[IncentiveRule] = []
    attached_days = 0
    chosen: list[tuple] = []
    for idx in rng.permutation(len(campaigns)):
        if attached_days >= target_days:
            break
        entry, _start_idx, length = campaigns[int(idx)]
        if attached_days + length > target_days + 2:
            continue
        chosen.append(campaigns[int(idx)])
        attached_days += length
    if target_days > 0 and not chosen and campaigns:
        # every span overshoots; take the shortest so the share is off, not zero
        chosen.append(min(campaigns, key=lambda t: t[2]))
    for entry, _start_idx, _length in chosen:
        itype = _INCENTIVE_TYPES[int(rng.integers(0, len(_INCENTIVE_TYPES)))]
        threshold = int(rng.integers(1, 51))
        condition = (
            f"Min. threshold {threshold} USD"
            if itype == "Logistics coupon"
            else f"Min. order {threshold} USD"
        )
        incentives.append(
            IncentiveRule(
                country=country,
                incentive_type=itype,
                start=entry.start,
                end=entry.end,
                description=_INCENTIVE_DESCRIPTIONS[itype],
                condition=condition,
            )
        )
    return incentives


def _reports_for(cfg: ScenarioConfig, country: str, campaigns, rng: np.random.Generator):
    """A short free-text report on each campaign's opening day.

    Bodies deliberately use loose shorthand (as real merchandiser notes do)
    and avoid ISO dates, which the prompt renderer relies on.
    """
    blurbs = [
        "Deals go live at midnight!! expect heavy trafic on app.",
        "Vouchers stack with store coupons; FS for orders over {n} USD.",
        "B1G1 on select SKUs, limited stock.",
        "Top brands joining, rebte codes emailed to members.",
        "Push notifications scheduled twice daily thru the sale.",
    ]
    reports = []
    for entry, _s, _l in campaigns:
        if rng.random() > 0.35:
            continue
        body = blurbs[int(rng.integers(0, len(blurbs)))].replace(
            "{n}", str(int(rng.integers(5, 40)))
        )
        body = f"{body} (ref {len(reports) + 1:03d})"
        reports.append(
            CampaignReport(country=country, date=entry.start, title=entry.name, body=body)
        )
    return reports


def _country_factors(cfg: ScenarioConfig, campaigns, holidays) -> tuple[np.ndarray, np.ndarray]:
    """Per-day planted multiplicative factor and event mask for one country."""
    n = cfg.n_days
    best_uplift = np.full(n, -np.inf)
    mask = np.zeros(n, dtype=bool)
    for entry, start_idx, length in campaigns:
        u = campaign_uplift(entry.level, cfg.promo_uplift_range)
        days = slice(start_idx, start_idx + length)
        best_uplift[days] = np.maximum(best_uplift[days], u)
        mask[days] = True

    # the uplift is already the full multiplier; days without campaigns stay at 1
    factor = np.where(np.isfinite(best_uplift), best_uplift, 1.0)
    for ph in holidays:
        days = slice(ph.start_idx, ph.start_idx + ph.length)
        kind = ph.entry.kind
        if kind == "Religious":
            pre_lo = max(0, ph.start_idx - cfg.presurge_days)
            factor[pre_lo : ph.start_idx] *= 1.0 + ph.presurge
            factor[days] *= 1.0 - ph.drop_or_uplift
        elif kind == "Public":
            factor[days] *= 1.0 - ph.drop_or_uplift
        else:  # Cultural
            factor[days] *= 1.0 + ph.drop_or_uplift
        mask[days] = True
    return np.maximum(factor, 0.05), mask


def _incentive_mask(cfg: ScenarioConfig, incentives) -> np.ndarray:
    mask = np.zeros(cfg.n_days, dtype=bool)
    start0 = cfg.start_date
    for inc in incentives:
        lo = (inc.start - start0).days
        hi = (inc.end - start0).days
        mask[lo : hi + 1] = True
    return mask


def generate(cfg: ScenarioConfig) -> tuple[Dataset, EventDatabase]:
    """Generate the dataset and the event database describing exactly the
    planted events.  Fully deterministic in ``cfg.seed``; noise streams are
    spawned independently of event placement."""
    cfg.validate()
    root = np.random.SeedSequence(cfg.seed)
    event_seeds = root.spawn(cfg.n_countries)
    region_seeds = root.spawn(cfg.n_countries * cfg.regions_per_country)

    dow0 = cfg.start_date.weekday()
    day_idx = np.arange(cfg.n_days)
    dow = (day_idx + dow0) % 7
    dow_sin = np.sin(2.0 * np.pi * dow / 7.0)
    dow_cos = np.cos(2.0 * np.pi * dow / 7.0)
    dates = [cfg.start_date + timedelta(days=int(i)) for i in day_idx]

    all_campaigns: list[CampaignEntry] = []
    all_holidays: list[HolidayEntry] = []
    all_incentives: list[IncentiveRule] = []
    all_reports: list[CampaignReport] = []
    regions: list[RegionSeries] = []

    for c in range(cfg.n_countries):
        country = f"{c + 1:02d}"
        ev_rng = np.random.default_rng(event_seeds[c])
        campaigns = _plan_campaigns(cfg, country, ev_rng)
        holidays = _plan_holidays(cfg, country, ev_rng)
        incentives = _plan_incentives(cfg, country, campaigns, ev_rng)
        reports = _reports_for(cfg, country, campaigns, ev_rng)

        factor, record_mask = _country_factors(cfg, campaigns, holidays)
        record_mask = record_mask | _incentive_mask(cfg, incentives)

        all_campaigns.extend(e for e, _s, _l in campaigns)
        all_holidays.extend(ph.entry for ph in holidays)
        all_incentives.extend(incentives)
        all_reports.extend(reports)

        for r in range(cfg.regions_per_country):
            rg = np.random.default_rng(region_seeds[c * cfg.regions_per_country + r])
            base = _uniform(rg, cfg.base_level_range)
            slope = _uniform(rg, cfg.trend_slope_range)
            amp = base * _uniform(rg, cfg.weekly_amp_frac)
            phase = float(rg.uniform(0.0, 2.0 * np.pi))
            sigma = base * cfg.noise_frac
            noise = rg.normal(0.0, sigma, size=cfg.n_days) if sigma > 0 else np.zeros(cfg.n_days)
            aux_noise = rg.normal(0.0, sigma, size=cfg.n_days) if sigma > 0 else np.zeros(cfg.n_days)

            core = base + slope * day_idx + amp * np.sin(2.0 * np.pi * dow / 7.0 + phase)
            core = np.maximum(core, 0.05 * base)
            target = core * factor + noise
            baseline = core + noise
            traffic = core * (1.0 + cfg.aux_response * (factor - 1.0)) + aux_noise

            values = np.column_stack([target, dow_sin, dow_cos, traffic])
            regions.append(
                RegionSeries(
                    country=country,
                    region=f"R{r + 1:02d}",
                    dates=list(dates),
                    values=values,
                    event_mask=record_mask.copy(),
                    baseline=baseline,
                    extras={
                        "core": core,
                        "noise": noise,
                        "factor": factor.copy(),
                        "aux_noise": aux_noise,
                    },
                )
            )

    db = EventDatabase(
        campaigns=tuple(all_campaigns),
        holidays=tuple(all_holidays),
        incentives=tuple(all_incentives),
        reports=tuple(all_reports),
    )
    return Dataset(regions=regions, feature_names=list(FEATURE_NAMES)), db


def label_event_days(ds: Dataset, db: EventDatabase) -> dict[str, np.ndarray]:
    """Recompute per-region event masks from the database records alone:
    a day is event-driven iff at least one record spans it."""
    out: dict[str, np.ndarray] = {}
    for r in ds.regions:
        mask = np.zeros(r.n_days, dtype=bool)
        spans = (
            [(e.start, e.end) for e in db.campaigns if e.country == r.country]
            + [(e.start, e.end) for e in db.holidays if e.country == r.country]
            + [(e.start, e.end) for e in db.incentives if e.country == r.country]
        )
        for i, day in enumerate(r.dates):
            if any(s <= day <= e for s, e in spans):
                mask[i] = True
        out[r.key] = mask
    return out


def overlap_stats(cfg: ScenarioConfig, db: EventDatabase, country: str) -> dict[str, float]:
    """Empirical event-day shares for one country's calendar."""
    n = cfg.n_days
    start0 = cfg.start_date
    counts = np.zeros(n, dtype=int)
    promo_days = np.zeros(n, dtype=bool)
    holiday_days = np.zeros(n, dtype=bool)
    for e in db.campaigns:
        if e.country != country:
            continue
        lo, hi = (e.start - start0).days, (e.end - start0).days
        counts[lo : hi + 1] += 1
        promo_days[lo : hi + 1] = True
    for e in db.holidays:
        if e.country != country:
            continue
        lo, hi = (e.start - start0).days, (e.end - start0).days
        counts[lo : hi + 1] += 1
        holiday_days[lo : hi + 1] = True
    for e in db.incentives:
        if e.country != country:
            continue
        lo, hi = (e.start - start0).days, (e.end - start0).days
        counts[lo : hi + 1] += 1
    event_days = counts >= 1
    n_event = int(event_days.sum())
    return {
        "promo_share": float(promo_days.mean()),
        "holiday_share": float(holiday_days.mean()),
        "event_share": float(event_days.mean()),
        "overlap_given_event": float((counts[event_days] >= 2).mean()) if n_event else 0.0,
    }
