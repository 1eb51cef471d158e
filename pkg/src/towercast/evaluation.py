"""Rolling-origin evaluation, event ablation, and blend-weight sweeps.

The held-out split is the final fraction of dates per region (the trainer's
``test_frac``).  Evaluation rolls the origin forward with stride one day;
each origin uses the trailing look-back window and predicts horizons 1..H.
Metrics are computed on de-normalized values, overall and restricted to
event-driven target dates (dates with at least one spanning event record).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from datetime import date as Date
from pathlib import Path

import numpy as np

from .data import Dataset, RegionSeries, train_length
from .errors import EmptyInput, InsufficientData, LengthMismatch
from .events import EventDatabase
from .model import ModelConfig
from .parsing import SummaryFields
from .training import (
    TrainConfig,
    TrainedModel,
    build_windows,
    summaries_for_dataset,
    train,
)

SPLIT_ALL = "all"
SPLIT_EVENT = "event"


def mae(pred, truth) -> float:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape:
        raise LengthMismatch(f"{pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise EmptyInput("mae of zero observations")
    return float(np.mean(np.abs(pred - truth)))


def mse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape:
        raise LengthMismatch(f"{pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise EmptyInput("mse of zero observations")
    return float(np.mean((pred - truth) ** 2))


@dataclass(frozen=True)
class MetricCell:
    mae: float
    mse: float
    n: int


@dataclass
class MetricsReport:
    """Per (horizon, split) metric cells plus bookkeeping."""

    cells: dict[tuple[int, str], MetricCell] = field(default_factory=dict)

    def cell(self, horizon: int, split: str) -> MetricCell:
        return self.cells[(horizon, split)]

    def to_rows(self) -> list[dict]:
        rows = []
        for (h, split), c in sorted(self.cells.items()):
            rows.append(
                {"horizon": h, "split": split, "mae": c.mae, "mse": c.mse, "n": c.n}
            )
        return rows

    def write_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["horizon", "split", "mae", "mse", "n"])
            for row in self.to_rows():
                w.writerow(
                    [row["horizon"], row["split"], repr(row["mae"]), repr(row["mse"]), row["n"]]
                )

    def to_json(self) -> dict:
        return {
            f"h{h}/{split}": {"mae": c.mae, "mse": c.mse, "n": c.n}
            for (h, split), c in sorted(self.cells.items())
        }


def _collect(preds: np.ndarray, truths: np.ndarray, event: np.ndarray, horizons: int) -> MetricsReport:
    """Build a report from aligned [n, H] prediction/truth/mask arrays."""
    report = MetricsReport()
    for h in range(1, horizons + 1):
        p, t, m = preds[:, h - 1], truths[:, h - 1], event[:, h - 1]
        report.cells[(h, SPLIT_ALL)] = MetricCell(mae(p, t), mse(p, t), int(p.size))
        if m.any():
            report.cells[(h, SPLIT_EVENT)] = MetricCell(
                mae(p[m], t[m]), mse(p[m], t[m]), int(m.sum())
            )
        else:
            report.cells[(h, SPLIT_EVENT)] = MetricCell(float("nan"), float("nan"), 0)
    return report


@dataclass
class EvalArrays:
    """Cached per-origin arrays for the held-out split."""

    preds_trend: np.ndarray  # [n, H] de-normalized trend-head forecasts
    preds_event: np.ndarray  # [n, H] de-normalized event-head forecasts
    truths: np.ndarray  # [n, H]
    event_mask: np.ndarray  # [n, H] bool, keyed on the target date
    x: np.ndarray
    ids: np.ndarray
    mask: np.ndarray
    region_idx: np.ndarray
    origin_idx: np.ndarray

    def blended(self, trend_weight: float) -> np.ndarray:
        return trend_weight * self.preds_trend + (1.0 - trend_weight) * self.preds_event


def _regions_by_stats_index(model: TrainedModel, ds: Dataset) -> dict[int, RegionSeries]:
    return {model.norm.index_of(r.key): r for r in ds.regions}


def compute_eval_arrays(
    model: TrainedModel,
    ds: Dataset,
    db: EventDatabase | None = None,
    summaries: dict[tuple[str, Date], SummaryFields] | None = None,
    batch: int = 512,
) -> EvalArrays:
    """Forward the model over every held-out origin once, caching both head
    outputs so any blend weight can be evaluated without another pass."""
    if summaries is None:
        if db is None:
            raise ValueError("need either a database or precomputed summaries")
        summaries = summaries_for_dataset(db, ds)
    cfg = model.model_cfg
    n_days = ds.regions[0].n_days
    n_train = train_length(n_days, model.train_cfg.test_frac)
    windows = build_windows(
        ds, model.norm, summaries, model.vocab, cfg,
        origin_lo=n_train - 1,
        origin_hi_excl=None,
        dtype=model.train_cfg.np_dtype,
        use_events=model.train_cfg.use_event_features,
    )

    n = windows.n_windows
    H = cfg.horizons
    trend = np.zeros((n, H))
    event = np.zeros((n, H))
    for lo in range(0, n, batch):
        sel = slice(lo, min(lo + batch, n))
        y_t, y_e = model.predict_heads(
            windows.x[sel], windows.ids[sel], windows.mask[sel]
        )
        trend[sel] = y_t
        event[sel] = y_e

    regions = _regions_by_stats_index(model, ds)
    truths = np.zeros((n, H))
    emask = np.zeros((n, H), dtype=bool)
    std_t = model.norm.std[windows.region_idx, 0][:, None]
    mean_t = model.norm.mean[windows.region_idx, 0][:, None]
    for w in range(n):
        r = regions[int(windows.region_idx[w])]
        i = int(windows.origin_idx[w])
        truths[w] = r.values[i + 1 : i + 1 + H, 0]
        emask[w] = r.event_mask[i + 1 : i + 1 + H]
    return EvalArrays(
        preds_trend=trend * std_t + mean_t,
        preds_event=event * std_t + mean_t,
        truths=truths,
        event_mask=emask,
        x=windows.x,
        ids=windows.ids,
        mask=windows.mask,
        region_idx=windows.region_idx,
        origin_idx=windows.origin_idx,
    )


def evaluate(
    model,
    ds: Dataset,
    db: EventDatabase | None = None,
    summaries: dict[tuple[str, Date], SummaryFields] | None = None,
    trend_weight: float | None = None,
    test_frac: float | None = None,
    horizons: int | None = None,
) -> MetricsReport:
    """Rolling-origin metrics on the held-out split.

    ``model`` is either a :class:`TrainedModel` or a predictor callable
    ``fn(region, origin_idx, horizons) -> [H] de-normalized predictions``
    (used for reference baselines in tests and reports).
    """
    if isinstance(model, TrainedModel):
        arrays = compute_eval_arrays(model, ds, db, summaries)
        w = model.train_cfg.trend_weight if trend_weight is None else trend_weight
        preds = arrays.blended(w)
        return _collect(preds, arrays.truths, arrays.event_mask, model.model_cfg.horizons)

    # plain predictor path
    if test_frac is None or horizons is None:
        raise ValueError("predictor evaluation needs test_frac and horizons")
    n_days = ds.regions[0].n_days
    n_train = train_length(n_days, test_frac)
    preds_rows, truth_rows, mask_rows = [], [], []
    for r in ds.regions:
        for i in range(n_train - 1, r.n_days - horizons):
            preds_rows.append(np.asarray(model(r, i, horizons), dtype=np.float64))
            truth_rows.append(r.values[i + 1 : i + 1 + horizons, 0])
            mask_rows.append(r.event_mask[i + 1 : i + 1 + horizons])
    if not preds_rows:
        raise InsufficientData("<dataset>", "no held-out origins")
    return _collect(
        np.stack(preds_rows), np.stack(truth_rows), np.stack(mask_rows), horizons
    )


def seasonal_naive_predictor(period: int = 7):
    """Forecast ``value[t + h - period]`` for horizon ``h`` (same weekday)."""

    def predict(region: RegionSeries, origin_idx: int, horizons: int) -> np.ndarray:
        out = np.zeros(horizons)
        for h in range(1, horizons + 1):
            j = origin_idx + h - period
            if j < 0:
                raise InsufficientData(region.key, f"needs {period} days of history")
            out[h - 1] = region.values[j, 0]
        return out

    return predict


# ---------------------------------------------------------------------------
# Ablation


@dataclass
class AblationReport:
    with_events: MetricsReport
    without_events: MetricsReport
    mae_improvement_pct: dict[int, float]
    mse_improvement_pct: dict[int, float]
    split: str = SPLIT_EVENT

    def write_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["horizon", "split", "mae_with", "mae_without", "mae_improvement_pct",
                 "mse_with", "mse_without", "mse_improvement_pct"]
            )
            for h in sorted(self.mae_improvement_pct):
                cw = self.with_events.cell(h, self.split)
                co = self.without_events.cell(h, self.split)
                w.writerow(
                    [h, self.split, repr(cw.mae), repr(co.mae),
                     repr(self.mae_improvement_pct[h]),
                     repr(cw.mse), repr(co.mse), repr(self.mse_improvement_pct[h])]
                )


def _improvement(before: float, after: float) -> float:
    if before == 0.0:
        return 0.0
    return (before - after) / before * 100.0


def ablate_events(
    ds: Dataset,
    db: EventDatabase,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    summaries: dict[tuple[str, Date], SummaryFields] | None = None,
    split: str = SPLIT_EVENT,
    log_fn=None,
) -> tuple[AblationReport, TrainedModel, TrainedModel]:
    """Train twin models from identical seeds — full pipeline vs the event
    pathway blinded to a constant summary — and compare held-out metrics."""
    if summaries is None:
        summaries = summaries_for_dataset(db, ds)
    cfg_with = replace(train_cfg, use_event_features=True)
    cfg_without = replace(train_cfg, use_event_features=False)
    model_with = train(ds, db, model_cfg, cfg_with, summaries=summaries, log_fn=log_fn)
    model_without = train(ds, db, model_cfg, cfg_without, summaries=summaries, log_fn=log_fn)
    report_with = evaluate(model_with, ds, summaries=summaries)
    report_without = evaluate(model_without, ds, summaries=summaries)

    mae_imp, mse_imp = {}, {}
    for h in range(1, model_cfg.horizons + 1):
        cw = report_with.cell(h, split)
        co = report_without.cell(h, split)
        mae_imp[h] = _improvement(co.mae, cw.mae)
        mse_imp[h] = _improvement(co.mse, cw.mse)
    report = AblationReport(report_with, report_without, mae_imp, mse_imp, split)
    return report, model_with, model_without


# ---------------------------------------------------------------------------
# Blend-weight sweep


@dataclass
class SweepResult:
    grid: list[float]
    cells: dict[tuple[float, int, str], MetricCell]

    def curve(self, split: str = SPLIT_EVENT) -> list[tuple[float, float]]:
        """(weight, mean MAE over horizons) for one split."""
        out = []
        for w in self.grid:
            vals = [self.cells[(w, h, split)].mae for h in self._horizons()]
            out.append((w, float(np.mean(vals))))
        return out

    def _horizons(self) -> list[int]:
        return sorted({h for (_w, h, _s) in self.cells} )

    def best(self, split: str = SPLIT_EVENT) -> tuple[float, float]:
        return min(self.curve(split), key=lambda t: t[1])

    def write_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda", "horizon", "split", "mae", "mse"])
            for (weight, h, split), c in sorted(self.cells.items()):
                w.writerow([repr(weight), h, split, repr(c.mae), repr(c.mse)])


def sweep_lambda(
    model: TrainedModel,
    ds: Dataset,
    db: EventDatabase | None = None,
    grid: list[float] | None = None,
    summaries: dict[tuple[str, Date], SummaryFields] | None = None,
    check_points: int = 3,
    check_seed: int = 0,
) -> SweepResult:
    """Metrics across blend weights from one cached forward pass per origin.

    The blend is affine in the weight, so head outputs are computed once and
    mixed per grid point; the fast path is revalidated against a full forward
    pass at ``check_points`` randomly chosen grid entries.
    """
    if grid is None:
        grid = [round(0.1 * i, 1) for i in range(11)]
    for w in grid:
        if not (0.0 <= w <= 1.0):
            raise ValueError(f"grid weight {w} outside [0, 1]")
    arrays = compute_eval_arrays(model, ds, db, summaries)
    H = model.model_cfg.horizons

    cells: dict[tuple[float, int, str], MetricCell] = {}
    for weight in grid:
        preds = arrays.blended(weight)
        rep = _collect(preds, arrays.truths, arrays.event_mask, H)
        for (h, split), c in rep.cells.items():
            cells[(weight, h, split)] = c

    # fast-path validation: recompute a few grid points end to end
    rng = np.random.default_rng(check_seed)
    n_checks = min(check_points, len(grid))
    std_t = model.norm.std[arrays.region_idx, 0][:, None]
    mean_t = model.norm.mean[arrays.region_idx, 0][:, None]
    for gi in rng.choice(len(grid), size=n_checks, replace=False):
        weight = grid[int(gi)]
        direct_norm = model.predict(arrays.x, arrays.ids, arrays.mask, trend_weight=weight)
        direct = direct_norm * std_t + mean_t
        fast = arrays.blended(weight)
        if not np.allclose(direct, fast, rtol=1e-5, atol=1e-4):
            raise RuntimeError(
                f"sweep fast path diverged from direct forecast at weight {weight}"
            )
    return SweepResult(grid=list(grid), cells=cells)
