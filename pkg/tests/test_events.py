import json
from datetime import date

import pytest

from towercast.errors import (
    DateOrderViolation,
    DuplicateRecord,
    MalformedRecord,
    UnknownCountry,
)
from towercast.events import (
    ALL_CATEGORIES,
    CampaignEntry,
    CampaignReport,
    HolidayEntry,
    IncentiveRule,
    campaign_from_json,
    campaign_to_json,
    events_for,
    holiday_from_json,
    incentive_from_json,
    load_database,
    parse_report_text,
    report_to_text,
    save_database,
)

from conftest import DATA_DIR, FESTIVAL_DAY


def test_fixture_database_counts(event_db):
    assert event_db.counts() == {
        "campaigns": 3,
        "holidays": 3,
        "incentives": 4,
        "reports": 2,
    }
    assert event_db.countries == {"01", "02"}
    assert event_db.load_errors == ()


def test_save_load_round_trip(event_db, tmp_path):
    save_database(event_db, tmp_path / "db")
    again = load_database(tmp_path / "db")
    assert sorted(again.campaigns, key=str) == sorted(event_db.campaigns, key=str)
    assert sorted(again.holidays, key=str) == sorted(event_db.holidays, key=str)
    assert sorted(again.incentives, key=str) == sorted(event_db.incentives, key=str)
    assert sorted(again.reports, key=str) == sorted(event_db.reports, key=str)


def test_events_for_festival_day(event_db):
    ctx = events_for(event_db, "01", FESTIVAL_DAY)
    assert [c.name for c in ctx.campaigns] == ["Global Shopping Festival"]
    assert ctx.campaigns[0].level == 12
    assert [(h.holiday.name, h.day_index) for h in ctx.holidays] == [("Founders Day", 1)]
    # incentives sorted by (start, type)
    assert [i.incentive_type for i in ctx.incentives] == [
        "Cross-category rebate",
        "Logistics coupon",
        "Seller subsidy",
    ]
    assert [r.title for r in ctx.reports] == ["Global Shopping Festival"]
    assert not ctx.is_empty


def test_events_for_includes_span_boundaries(event_db):
    first = events_for(event_db, "01", date(2025, 10, 12))
    last = events_for(event_db, "01", date(2025, 10, 18))
    before = events_for(event_db, "01", date(2025, 10, 11))
    after = events_for(event_db, "01", date(2025, 10, 19))
    assert [c.name for c in first.campaigns] == ["Autumn Outlet Days"]
    assert [c.name for c in last.campaigns] == ["Autumn Outlet Days"]
    assert before.campaigns == ()
    assert after.campaigns == ()


def test_holiday_day_index_counts_from_one(event_db):
    d1 = events_for(event_db, "02", date(2025, 11, 21))
    d2 = events_for(event_db, "02", date(2025, 11, 22))
    assert d1.holidays[0].day_index == 1
    assert d2.holidays[0].day_index == 2
    assert d2.holidays[0].holiday.n_days == 2


def test_events_for_empty_day(event_db):
    ctx = events_for(event_db, "01", date(2026, 6, 15))
    assert ctx.is_empty
    assert ctx.country == "01"


def test_events_for_unknown_country(event_db):
    assert events_for(event_db, "99", FESTIVAL_DAY).is_empty
    with pytest.raises(UnknownCountry):
        events_for(event_db, "99", FESTIVAL_DAY, strict=True)


def test_reports_only_surface_on_their_date(event_db):
    on = events_for(event_db, "01", FESTIVAL_DAY)
    off = events_for(event_db, "01", date(2025, 11, 2))
    assert len(on.reports) == 1
    assert off.reports == ()
    # the campaign still spans Nov 2 even though the report does not
    assert [c.name for c in off.campaigns] == ["Global Shopping Festival"]


def test_campaign_validation():
    with pytest.raises(DateOrderViolation):
        CampaignEntry("01", "X", date(2025, 1, 2), date(2025, 1, 1), ALL_CATEGORIES, 3)
    with pytest.raises(ValueError):
        CampaignEntry("01", "X", date(2025, 1, 1), date(2025, 1, 2), ALL_CATEGORIES, 13)
    with pytest.raises(ValueError):
        CampaignEntry("1", "X", date(2025, 1, 1), date(2025, 1, 2), ALL_CATEGORIES, 3)


def test_holiday_kind_validation():
    with pytest.raises(ValueError):
        HolidayEntry("01", "X", date(2025, 1, 1), date(2025, 1, 1), "Bank")


def test_scope_text():
    c = CampaignEntry("01", "X", date(2025, 1, 1), date(2025, 1, 2), ("A", "B"), 3)
    assert c.scope_text == "A, B"
    c2 = CampaignEntry("01", "X", date(2025, 1, 1), date(2025, 1, 2), ALL_CATEGORIES, 3)
    assert c2.scope_text == ALL_CATEGORIES


def test_campaign_json_round_trip():
    c = CampaignEntry("03", "Mega Sale", date(2025, 2, 1), date(2025, 2, 7), ("Toys",), 8)
    assert campaign_from_json(campaign_to_json(c)) == c


def test_campaign_from_json_errors():
    good = {"country": "01", "name": "X", "start": "2025-01-01",
            "end": "2025-01-02", "scope": "All categories", "level": 3}
    with pytest.raises(MalformedRecord):
        campaign_from_json({k: v for k, v in good.items() if k != "level"})
    with pytest.raises(MalformedRecord):
        campaign_from_json({**good, "start": "01/02/2025"})
    with pytest.raises(MalformedRecord):
        campaign_from_json({**good, "scope": "Toys"})  # bare string must be the sentinel
    with pytest.raises(MalformedRecord):
        campaign_from_json({**good, "scope": []})
    with pytest.raises(MalformedRecord):
        campaign_from_json({**good, "level": "3"})
    with pytest.raises(MalformedRecord):
        campaign_from_json({**good, "level": 13})


def test_holiday_incentive_from_json_errors():
    with pytest.raises(MalformedRecord):
        holiday_from_json({"country": "01", "name": "X", "start": "2025-01-01",
                           "end": "2025-01-01", "kind": "Bank"})
    with pytest.raises(MalformedRecord):
        incentive_from_json({"country": "01", "incentive_type": "Free shipping",
                             "start": "2025-01-01", "end": "2025-01-01",
                             "description": "d"})  # missing condition


def test_report_text_round_trip():
    r = CampaignReport("07", date(2025, 3, 4), "Flash Sale", "line one\nline two\n")
    assert parse_report_text(report_to_text(r)) == r


def test_report_bad_header():
    with pytest.raises(MalformedRecord):
        parse_report_text("Country 01 2025-01-01 Flash\nbody")
    with pytest.raises(MalformedRecord):
        parse_report_text("[Country 1 | 2025-01-01 | Flash]\nbody")


def test_loader_reports_source_and_line(tmp_path):
    db_dir = tmp_path / "db"
    db_dir.mkdir()
    lines = [
        json.dumps({"country": "01", "name": "A", "start": "2025-01-01",
                    "end": "2025-01-03", "scope": "All categories", "level": 2}),
        "{not json",
    ]
    (db_dir / "campaigns.jsonl").write_text("\n".join(lines) + "\n")
    with pytest.raises(MalformedRecord) as exc:
        load_database(db_dir)
    assert "campaigns.jsonl" in str(exc.value)
    assert ":2:" in str(exc.value)


def test_loader_duplicate_record(tmp_path):
    db_dir = tmp_path / "db"
    db_dir.mkdir()
    line = json.dumps({"country": "01", "name": "A", "start": "2025-01-01",
                       "end": "2025-01-03", "scope": "All categories", "level": 2})
    (db_dir / "campaigns.jsonl").write_text(line + "\n" + line + "\n")
    with pytest.raises(DuplicateRecord):
        load_database(db_dir)
    db = load_database(db_dir, permissive=True)
    assert len(db.campaigns) == 1
    assert len(db.load_errors) == 1


def test_loader_permissive_skips_bad_lines(tmp_path):
    db_dir = tmp_path / "db"
    db_dir.mkdir()
    lines = [
        "{bad",
        json.dumps({"country": "01", "name": "A", "start": "2025-01-01",
                    "end": "2025-01-03", "scope": "All categories", "level": 2}),
        json.dumps({"country": "01", "name": "B", "start": "2025-01-05",
                    "end": "2025-01-04", "scope": "All categories", "level": 2}),
    ]
    (db_dir / "campaigns.jsonl").write_text("\n".join(lines) + "\n")
    db = load_database(db_dir, permissive=True)
    assert [c.name for c in db.campaigns] == ["A"]
    assert len(db.load_errors) == 2


def test_loader_missing_files_gives_empty_db(tmp_path):
    (tmp_path / "db").mkdir()
    db = load_database(tmp_path / "db")
    assert db.counts() == {"campaigns": 0, "holidays": 0, "incentives": 0, "reports": 0}


def test_events_for_is_sorted_and_pure(event_db):
    a = events_for(event_db, "01", FESTIVAL_DAY)
    b = events_for(event_db, "01", FESTIVAL_DAY)
    assert a == b
    starts = [c.start for c in a.campaigns]
    assert starts == sorted(starts)
