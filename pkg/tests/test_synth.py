from dataclasses import replace
from datetime import date, timedelta

import numpy as np
import pytest

from towercast.events import HolidayEntry
from towercast.presets import small_scenario, zero_effect_scenario
from towercast.synth import (
    ScenarioConfig,
    _country_factors,
    _PlannedHoliday,
    campaign_uplift,
    generate,
    label_event_days,
    overlap_stats,
)


def zeroed(cfg: ScenarioConfig) -> ScenarioConfig:
    return replace(
        cfg,
        promo_uplift_range=(1.0, 1.0),
        public_drop_range=(0.0, 0.0),
        religious_presurge_range=(0.0, 0.0),
        religious_drop_range=(0.0, 0.0),
        cultural_uplift_range=(0.0, 0.0),
    )


def test_generation_is_deterministic():
    a_ds, a_db = generate(small_scenario())
    b_ds, b_db = generate(small_scenario())
    assert a_db == b_db
    for ra, rb in zip(a_ds.regions, b_ds.regions):
        assert ra.key == rb.key and ra.dates == rb.dates
        np.testing.assert_array_equal(ra.values, rb.values)
        np.testing.assert_array_equal(ra.event_mask, rb.event_mask)
        np.testing.assert_array_equal(ra.baseline, rb.baseline)
    c_ds, _ = generate(small_scenario(seed=12))
    assert not np.array_equal(a_ds.regions[0].values, c_ds.regions[0].values)


def test_target_composition_from_extras():
    ds, _ = generate(small_scenario())
    for r in ds.regions:
        core, noise, factor = r.extras["core"], r.extras["noise"], r.extras["factor"]
        np.testing.assert_array_equal(r.values[:, 0], core * factor + noise)
        np.testing.assert_array_equal(r.baseline, core + noise)
        aux = core * (1.0 + 0.6 * (factor - 1.0)) + r.extras["aux_noise"]
        np.testing.assert_allclose(r.values[:, 3], aux, atol=1e-12)


def test_day_of_week_columns():
    cfg = small_scenario()
    ds, _ = generate(cfg)
    r = ds.regions[0]
    dow = np.array([(cfg.start_date + timedelta(days=i)).weekday() for i in range(cfg.n_days)])
    np.testing.assert_allclose(r.values[:, 1], np.sin(2 * np.pi * dow / 7), atol=1e-12)
    np.testing.assert_allclose(r.values[:, 2], np.cos(2 * np.pi * dow / 7), atol=1e-12)


def test_zero_effect_twin_reproduces_baseline_bitwise():
    """Noise streams are independent of event placement, so pinning every
    multiplier to 1 regenerates exactly the stored counterfactual."""
    std_ds, _ = generate(small_scenario())
    zero_ds, zero_db = generate(zeroed(small_scenario()))
    assert len(zero_db.campaigns) > 0  # records still planted
    for rs, rz in zip(std_ds.regions, zero_ds.regions):
        np.testing.assert_array_equal(rz.values[:, 0], rs.baseline)
        np.testing.assert_array_equal(rz.extras["noise"], rs.extras["noise"])
        assert (rz.extras["factor"] == 1.0).all()


def test_zero_effect_preset_pins_all_ranges():
    cfg = zero_effect_scenario()
    assert cfg.promo_uplift_range == (1.0, 1.0)
    assert cfg.public_drop_range == (0.0, 0.0)
    assert cfg.religious_presurge_range == (0.0, 0.0)
    assert cfg.religious_drop_range == (0.0, 0.0)
    assert cfg.cultural_uplift_range == (0.0, 0.0)
    assert cfg.n_days == 730 and cfg.n_countries == 4


def test_campaign_uplift_level_map():
    band = (0.85, 1.20)
    assert campaign_uplift(1, band) == 0.85
    assert campaign_uplift(12, band) == pytest.approx(1.20)
    ups = [campaign_uplift(l, band) for l in range(1, 13)]
    assert all(b > a for a, b in zip(ups, ups[1:]))
    np.testing.assert_allclose(np.diff(ups), (1.20 - 0.85) / 11.0)


def test_campaign_days_carry_exact_uplift():
    """Away from holidays, the planted factor equals the max level uplift of
    the active campaigns — recomputable from the database alone."""
    cfg = small_scenario()
    ds, db = generate(cfg)
    start0 = cfg.start_date
    for country in ("01", "02"):
        r = next(rr for rr in ds.regions if rr.country == country)
        factor = r.extras["factor"]
        blocked = np.zeros(cfg.n_days, dtype=bool)
        for h in db.holidays:
            if h.country != country:
                continue
            lo = (h.start - start0).days
            hi = (h.end - start0).days
            blocked[max(0, lo - cfg.presurge_days) : hi + 1] = True
        best = np.full(cfg.n_days, -np.inf)
        for e in db.campaigns:
            if e.country != country:
                continue
            lo = (e.start - start0).days
            hi = (e.end - start0).days
            u = campaign_uplift(e.level, cfg.promo_uplift_range)
            best[lo : hi + 1] = np.maximum(best[lo : hi + 1], u)
        check = np.isfinite(best) & ~blocked
        assert check.sum() > 20
        np.testing.assert_allclose(factor[check], best[check], atol=1e-12)
        outside = ~np.isfinite(best) & ~blocked
        np.testing.assert_array_equal(factor[outside], 1.0)


def planned_holiday(cfg, kind, start_idx, length, presurge, effect):
    start = cfg.start_date + timedelta(days=start_idx)
    entry = HolidayEntry(country="01", name=f"{kind} test", start=start,
                         end=start + timedelta(days=length - 1), kind=kind)
    return _PlannedHoliday(entry=entry, start_idx=start_idx, length=length,
                           presurge=presurge, drop_or_uplift=effect)


def test_religious_pattern_is_biphasic():
    cfg = ScenarioConfig(n_days=30)
    ph = planned_holiday(cfg, "Religious", 10, 4, presurge=0.5, effect=0.3)
    factor, mask = _country_factors(cfg, [], [ph])
    np.testing.assert_allclose(factor[7:10], 1.5)  # 3 run-up days
    np.testing.assert_allclose(factor[10:14], 0.7)  # drop during the span
    np.testing.assert_allclose(factor[:7], 1.0)
    np.testing.assert_allclose(factor[14:], 1.0)
    assert mask[10:14].all() and not mask[:10].any() and not mask[14:].any()


def test_public_and_cultural_factors():
    cfg = ScenarioConfig(n_days=20)
    pub = planned_holiday(cfg, "Public", 5, 2, presurge=0.4, effect=0.35)
    cul = planned_holiday(cfg, "Cultural", 12, 3, presurge=0.4, effect=0.2)
    factor, _ = _country_factors(cfg, [], [pub, cul])
    np.testing.assert_allclose(factor[5:7], 0.65)
    np.testing.assert_allclose(factor[12:15], 1.2)
    np.testing.assert_allclose(factor[3:5], 1.0)  # no presurge outside Religious


def test_factor_floor():
    cfg = ScenarioConfig(n_days=10)
    stack = [
        planned_holiday(cfg, "Public", 2, 3, 0.0, 0.9),
        planned_holiday(cfg, "Public", 2, 3, 0.0, 0.9),
    ]
    factor, _ = _country_factors(cfg, [], stack)
    np.testing.assert_allclose(factor[2:5], 0.05)  # 0.01 floored at 0.05


def test_calendar_shares_at_long_range():
    cfg = ScenarioConfig(n_countries=1, regions_per_country=1, n_days=3650, seed=0)
    _, db = generate(cfg)
    stats = overlap_stats(cfg, db, "01")
    assert stats["promo_share"] == pytest.approx(0.30, abs=0.03)
    assert stats["holiday_share"] == pytest.approx(0.15, abs=0.03)
    assert 0.33 <= stats["overlap_given_event"] <= 0.43


def test_label_event_days_matches_stored_masks():
    ds, db = generate(small_scenario())
    labels = label_event_days(ds, db)
    for r in ds.regions:
        np.testing.assert_array_equal(labels[r.key], r.event_mask)


def test_incentives_ride_on_campaign_spans():
    _, db = generate(small_scenario())
    assert len(db.incentives) > 0
    campaign_spans = {(e.country, e.start, e.end) for e in db.campaigns}
    for inc in db.incentives:
        assert (inc.country, inc.start, inc.end) in campaign_spans


def test_reports_open_on_campaign_start_days():
    _, db = generate(small_scenario())
    starts = {(e.country, e.name): e.start for e in db.campaigns}
    for rep in db.reports:
        assert rep.date == starts[(rep.country, rep.title)]
        assert rep.body


def test_scenario_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(n_countries=0).validate()
    with pytest.raises(ValueError):
        ScenarioConfig(n_days=0).validate()
    with pytest.raises(ValueError):
        ScenarioConfig(promo_day_share=1.5).validate()
    with pytest.raises(ValueError):
        ScenarioConfig(cultural_uplift_range=(0.3, 0.1)).validate()
    with pytest.raises(ValueError):
        ScenarioConfig(public_drop_range=(0.5, 1.0)).validate()
    with pytest.raises(ValueError):
        ScenarioConfig(noise_frac=-0.1).validate()
    ScenarioConfig().validate()


def test_start_date_property():
    assert ScenarioConfig(start="2024-03-01").start_date == date(2024, 3, 1)
