"""Dataset containers and the shared CSV format.

Synthetic and real data go through the same loader.  The on-disk form is one
CSV with header ``date,country,region,target,feat_1..feat_k,event_mask,baseline``
sorted by (country, region, date); in memory each (country, region) pair
becomes a :class:`RegionSeries` with a contiguous daily date range.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import date as Date, timedelta
from pathlib import Path

import numpy as np

from .errors import InsufficientData, MalformedRecord


@dataclass
class RegionSeries:
    country: str
    region: str
    dates: list[Date]  # consecutive ascending days
    values: np.ndarray  # [n_days, n_features]; column 0 is the target
    event_mask: np.ndarray  # [n_days] bool
    baseline: np.ndarray  # [n_days] counterfactual no-event series
    extras: dict[str, np.ndarray] = field(default_factory=dict)  # generator ground truth

    @property
    def key(self) -> str:
        return f"{self.country}/{self.region}"

    @property
    def n_days(self) -> int:
        return len(self.dates)

    def __post_init__(self):
        if len(self.dates) != self.values.shape[0]:
            raise ValueError(f"{self.key}: dates/values length mismatch")
        for prev, cur in zip(self.dates, self.dates[1:]):
            if cur != prev + timedelta(days=1):
                raise ValueError(f"{self.key}: dates not consecutive at {cur}")


@dataclass
class Dataset:
    regions: list[RegionSeries]
    feature_names: list[str]  # ["target", "feat_1", ...]

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def countries(self) -> list[str]:
        return sorted({r.country for r in self.regions})

    def region(self, country: str, region: str) -> RegionSeries:
        for r in self.regions:
            if r.country == country and r.region == region:
                return r
        raise KeyError(f"{country}/{region}")


def _fmt(x: float) -> str:
    return repr(float(x))


def write_dataset_csv(ds: Dataset, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n_feat = ds.n_features - 1
    header = ["date", "country", "region", "target"]
    header += [f"feat_{i}" for i in range(1, n_feat + 1)]
    header += ["event_mask", "baseline"]
    regions = sorted(ds.regions, key=lambda r: (r.country, r.region))
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in regions:
            for i, day in enumerate(r.dates):
                row = [day.isoformat(), r.country, r.region, _fmt(r.values[i, 0])]
                row += [_fmt(v) for v in r.values[i, 1:]]
                row += [str(int(r.event_mask[i])), _fmt(r.baseline[i])]
                w.writerow(row)


def load_dataset_csv(path: str | Path) -> Dataset:
    path = Path(path)
    groups: dict[tuple[str, str], list[tuple[Date, list[float], bool, float]]] = {}
    feat_cols: list[str] = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRecord(str(path), 0, "empty dataset file") from None
        expected_head = ["date", "country", "region", "target"]
        if header[:4] != expected_head or header[-2:] != ["event_mask", "baseline"]:
            raise MalformedRecord(str(path), 1, f"unexpected header {header!r}")
        feat_cols = header[4:-2]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise MalformedRecord(str(path), lineno, f"expected {len(header)} columns")
            try:
                day = Date.fromisoformat(row[0])
                values = [float(row[3])] + [float(v) for v in row[4:-2]]
                mask = bool(int(row[-2]))
                baseline = float(row[-1])
            except ValueError as exc:
                raise MalformedRecord(str(path), lineno, str(exc)) from None
            groups.setdefault((row[1], row[2]), []).append((day, values, mask, baseline))

    regions = []
    for (country, region), rows in sorted(groups.items()):
        rows.sort(key=lambda t: t[0])
        dates = [t[0] for t in rows]
        values = np.asarray([t[1] for t in rows], dtype=np.float64)
        mask = np.asarray([t[2] for t in rows], dtype=bool)
        baseline = np.asarray([t[3] for t in rows], dtype=np.float64)
        regions.append(RegionSeries(country, region, dates, values, mask, baseline))
    return Dataset(regions=regions, feature_names=["target"] + feat_cols)


# ---------------------------------------------------------------------------
# Split and normalization


def train_length(n_days: int, test_frac: float) -> int:
    """Days before the held-out tail (final ``test_frac`` of dates)."""
    n_test = int(round(n_days * test_frac))
    n_train = n_days - n_test
    if n_train < 1 or n_test < 1:
        raise InsufficientData("<dataset>", f"cannot split {n_days} days at {test_frac}")
    return n_train


@dataclass
class NormStats:
    """Per-region z-score statistics from the training split."""

    region_keys: list[str]  # "country/region" in dataset order
    mean: np.ndarray  # [n_regions, n_features]
    std: np.ndarray  # [n_regions, n_features], floored positive

    def index_of(self, key: str) -> int:
        return self.region_keys.index(key)


def compute_norm_stats(ds: Dataset, n_train: int) -> NormStats:
    keys, means, stds = [], [], []
    for r in ds.regions:
        if n_train > r.n_days:
            raise InsufficientData(r.key, f"{r.n_days} days < train length {n_train}")
        train = r.values[:n_train]
        keys.append(r.key)
        means.append(train.mean(axis=0))
        stds.append(np.maximum(train.std(axis=0), 1e-8))
    return NormStats(keys, np.asarray(means), np.asarray(stds))


def normalize(values: np.ndarray, stats: NormStats, region_idx: int) -> np.ndarray:
    return (values - stats.mean[region_idx]) / stats.std[region_idx]


def denormalize_target(pred: np.ndarray, stats: NormStats, region_idx: int) -> np.ndarray:
    return pred * stats.std[region_idx, 0] + stats.mean[region_idx, 0]
