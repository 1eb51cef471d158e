import pathlib
from datetime import date, timedelta

import numpy as np
import pytest

from towercast.data import Dataset, RegionSeries
from towercast.events import events_for, load_database

DATA_DIR = pathlib.Path(__file__).parent / "data"

# raw (pre-normalization) oracle fields for country 01 on 2025-11-01 in the
# fixture database: stacked public holiday onset + level-12 campaign +
# subsidy/rebate/logistics incentives
FESTIVAL_DAY = date(2025, 11, 1)
FESTIVAL_FIELDS = (
    "Country code is 01",
    "On the 1st day of the holiday",
    "state-level holiday",
    "Non-free shipping event",
    "Campaign level 12",
    "Minimum shipping threshold is 1",
    "top sellers' subsidy + rebate",
    "Demand surge",
)


@pytest.fixture(scope="session")
def event_db():
    return load_database(DATA_DIR / "eventdb")


@pytest.fixture(scope="session")
def festival_ctx(event_db):
    return events_for(event_db, "01", FESTIVAL_DAY)


@pytest.fixture(scope="session")
def empty_ctx(event_db):
    return events_for(event_db, "01", date(2026, 6, 15))


def make_region(
    country: str = "01",
    region: str = "R01",
    n_days: int = 40,
    n_features: int = 2,
    seed: int = 0,
    start: date = date(2024, 1, 1),
) -> RegionSeries:
    rng = np.random.default_rng(seed)
    values = rng.normal(loc=100.0, scale=10.0, size=(n_days, n_features))
    return RegionSeries(
        country=country,
        region=region,
        dates=[start + timedelta(days=i) for i in range(n_days)],
        values=values,
        event_mask=rng.random(n_days) < 0.3,
        baseline=values[:, 0].copy(),
    )


def make_dataset(n_regions: int = 2, n_days: int = 40, n_features: int = 2, seed: int = 0):
    regions = [
        make_region(country="01", region=f"R{i + 1:02d}", n_days=n_days,
                    n_features=n_features, seed=seed + i)
        for i in range(n_regions)
    ]
    names = ["target"] + [f"feat_{i}" for i in range(1, n_features)]
    return Dataset(regions=regions, feature_names=names)
