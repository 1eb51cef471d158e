import numpy as np
import pytest

from towercast.data import train_length
from towercast.errors import EmptyInput, InsufficientData, LengthMismatch
from towercast.evaluation import (
    SPLIT_ALL,
    SPLIT_EVENT,
    AblationReport,
    MetricCell,
    MetricsReport,
    SweepResult,
    _collect,
    _improvement,
    ablate_events,
    compute_eval_arrays,
    evaluate,
    mae,
    mse,
    seasonal_naive_predictor,
    sweep_lambda,
)
from towercast.presets import tiny_model_config
from towercast.training import train

from conftest import make_dataset
from test_training import flat_summaries, quick_cfg, sine_dataset


@pytest.fixture(scope="module")
def trained():
    ds = sine_dataset(n_days=72)
    # mark a scattering of days event-driven so the event split is non-empty
    ds.regions[0].event_mask[::3] = True
    summaries = flat_summaries(ds)
    tm = train(ds, None, tiny_model_config(), quick_cfg(), summaries=summaries)
    return ds, summaries, tm


def test_mae_mse_oracles():
    p = np.array([1.0, 2.0, 4.0])
    t = np.array([1.5, 2.0, 2.0])
    assert mae(p, t) == pytest.approx(np.mean(np.abs(p - t)))
    assert mse(p, t) == pytest.approx(np.mean((p - t) ** 2))
    for fn in (mae, mse):
        with pytest.raises(LengthMismatch):
            fn(p, t[:2])
        with pytest.raises(EmptyInput):
            fn([], [])


def test_collect_splits_on_event_mask():
    preds = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    truths = np.zeros((3, 2))
    event = np.array([[True, False], [False, False], [True, False]])
    rep = _collect(preds, truths, event, horizons=2)
    assert rep.cell(1, SPLIT_ALL).n == 3
    assert rep.cell(1, SPLIT_ALL).mae == pytest.approx(3.0)
    assert rep.cell(1, SPLIT_EVENT).n == 2
    assert rep.cell(1, SPLIT_EVENT).mae == pytest.approx(3.0)  # rows 0 and 2
    assert rep.cell(1, SPLIT_EVENT).mse == pytest.approx((1 + 25) / 2)
    # empty event split is reported, not dropped
    empty = rep.cell(2, SPLIT_EVENT)
    assert empty.n == 0 and np.isnan(empty.mae) and np.isnan(empty.mse)


def test_perfect_predictor_scores_zero():
    ds = make_dataset(n_regions=2, n_days=40)

    def oracle(region, i, horizons):
        return region.values[i + 1 : i + 1 + horizons, 0]

    rep = evaluate(oracle, ds, test_frac=0.25, horizons=3)
    n_train = train_length(40, 0.25)
    expected_n = 2 * ((40 - 3) - (n_train - 1))
    for h in (1, 2, 3):
        cell = rep.cell(h, SPLIT_ALL)
        assert cell.mae == 0.0 and cell.mse == 0.0
        assert cell.n == expected_n // 2 * 2 == expected_n


def test_predictor_path_requires_split_args():
    ds = make_dataset()
    with pytest.raises(ValueError, match="test_frac and horizons"):
        evaluate(lambda r, i, h: np.zeros(h), ds)


def test_seasonal_naive_hand_values():
    ds = make_dataset(n_regions=1, n_days=30)
    r = ds.regions[0]
    fn = seasonal_naive_predictor(period=7)
    np.testing.assert_array_equal(fn(r, 10, 3), r.values[[4, 5, 6], 0])
    with pytest.raises(InsufficientData):
        fn(r, 3, 3)  # would need day index 3 + 1 - 7 < 0


def test_seasonal_naive_through_evaluate():
    ds = make_dataset(n_regions=1, n_days=40)
    rep = evaluate(seasonal_naive_predictor(7), ds, test_frac=0.2, horizons=2)
    r = ds.regions[0]
    n_train = train_length(40, 0.2)
    errs = [
        abs(r.values[i + 1 - 7, 0] - r.values[i + 1, 0])
        for i in range(n_train - 1, 40 - 2)
    ]
    assert rep.cell(1, SPLIT_ALL).mae == pytest.approx(np.mean(errs))


def test_mse_dominates_squared_mae(trained):
    ds, summaries, tm = trained
    rep = evaluate(tm, ds, summaries=summaries)
    for cell in rep.cells.values():
        if cell.n:
            assert cell.mse >= cell.mae**2 - 1e-12


def test_model_evaluation_counts_and_blend(trained):
    ds, summaries, tm = trained
    n_train = train_length(72, tm.train_cfg.test_frac)
    expected_n = (72 - 2) - (n_train - 1)
    rep = evaluate(tm, ds, summaries=summaries)
    assert rep.cell(1, SPLIT_ALL).n == expected_n
    assert rep.cell(1, SPLIT_EVENT).n > 0

    arrays = compute_eval_arrays(tm, ds, summaries=summaries)
    w = tm.train_cfg.trend_weight
    np.testing.assert_allclose(
        arrays.blended(w), w * arrays.preds_trend + (1 - w) * arrays.preds_event
    )
    direct = _collect(arrays.blended(0.3), arrays.truths, arrays.event_mask, 2)
    via_eval = evaluate(tm, ds, summaries=summaries, trend_weight=0.3)
    assert direct.cells == via_eval.cells


def test_endpoint_weights_isolate_heads(trained):
    ds, summaries, tm = trained
    only_trend = evaluate(tm, ds, summaries=summaries, trend_weight=1.0)
    only_event = evaluate(tm, ds, summaries=summaries, trend_weight=0.0)
    assert only_trend.cell(1, SPLIT_ALL).mae != only_event.cell(1, SPLIT_ALL).mae


def test_sweep_matches_separate_evaluations(trained):
    ds, summaries, tm = trained
    grid = [0.0, 0.4, 1.0]
    sweep = sweep_lambda(tm, ds, summaries=summaries, grid=grid)
    assert sweep.grid == grid
    for w in grid:
        rep = evaluate(tm, ds, summaries=summaries, trend_weight=w)
        for (h, split), cell in rep.cells.items():
            got = sweep.cells[(w, h, split)]
            if cell.n:
                assert got == cell
            else:
                assert got.n == 0 and np.isnan(got.mae)


def test_sweep_rejects_bad_grid(trained):
    ds, summaries, tm = trained
    with pytest.raises(ValueError, match="outside"):
        sweep_lambda(tm, ds, summaries=summaries, grid=[0.0, 1.5])


def test_sweep_fast_path_guard_fires(trained):
    ds, summaries, tm = trained
    broken = lambda x, ids, mask, trend_weight=None: np.full(  # noqa: E731
        (x.shape[0], 2), 1e6
    )
    original = tm.predict
    tm.predict = broken
    try:
        with pytest.raises(RuntimeError, match="fast path diverged"):
            sweep_lambda(tm, ds, summaries=summaries, grid=[0.0, 0.5, 1.0])
    finally:
        tm.predict = original


def test_sweep_curve_and_best():
    cells = {}
    for w, maes in [(0.0, (4.0, 6.0)), (0.5, (1.0, 2.0)), (1.0, (3.0, 5.0))]:
        for h, m in enumerate(maes, start=1):
            cells[(w, h, SPLIT_EVENT)] = MetricCell(m, m * m, 10)
            cells[(w, h, SPLIT_ALL)] = MetricCell(m + 1, m * m, 20)
    sweep = SweepResult(grid=[0.0, 0.5, 1.0], cells=cells)
    assert sweep.curve(SPLIT_EVENT) == [(0.0, 5.0), (0.5, 1.5), (1.0, 4.0)]
    assert sweep.best(SPLIT_EVENT) == (0.5, 1.5)
    assert sweep.best(SPLIT_ALL) == (0.5, 2.5)


def test_improvement_formula():
    assert _improvement(10.0, 7.0) == pytest.approx(30.0)
    assert _improvement(10.0, 12.0) == pytest.approx(-20.0)
    assert _improvement(0.0, 5.0) == 0.0


def test_ablation_trains_twins_and_reports():
    ds = sine_dataset(n_days=60)
    ds.regions[0].event_mask[::4] = True
    summaries = flat_summaries(ds)
    report, tm_with, tm_without = ablate_events(
        ds, None, tiny_model_config(), quick_cfg(epochs=2), summaries=summaries
    )
    assert tm_with.train_cfg.use_event_features
    assert not tm_without.train_cfg.use_event_features
    assert set(report.mae_improvement_pct) == {1, 2}
    for h in (1, 2):
        cw = report.with_events.cell(h, SPLIT_EVENT)
        co = report.without_events.cell(h, SPLIT_EVENT)
        assert report.mae_improvement_pct[h] == pytest.approx(
            (co.mae - cw.mae) / co.mae * 100.0
        )
        assert report.mse_improvement_pct[h] == pytest.approx(
            (co.mse - cw.mse) / co.mse * 100.0
        )


def test_metrics_csv_format(tmp_path):
    rep = MetricsReport()
    rep.cells[(1, SPLIT_ALL)] = MetricCell(1.25, 2.5, 10)
    rep.cells[(1, SPLIT_EVENT)] = MetricCell(0.5, 0.75, 4)
    rep.write_csv(tmp_path / "report.csv")
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert lines[0] == "horizon,split,mae,mse,n"
    assert lines[1] == "1,all,1.25,2.5,10"
    assert lines[2] == "1,event,0.5,0.75,4"
    assert rep.to_json() == {
        "h1/all": {"mae": 1.25, "mse": 2.5, "n": 10},
        "h1/event": {"mae": 0.5, "mse": 0.75, "n": 4},
    }


def test_ablation_csv_format(tmp_path):
    with_rep = MetricsReport()
    without_rep = MetricsReport()
    with_rep.cells[(1, SPLIT_EVENT)] = MetricCell(7.0, 50.0, 9)
    without_rep.cells[(1, SPLIT_EVENT)] = MetricCell(10.0, 100.0, 9)
    rep = AblationReport(with_rep, without_rep, {1: 30.0}, {1: 50.0})
    rep.write_csv(tmp_path / "ablation.csv")
    lines = (tmp_path / "ablation.csv").read_text().splitlines()
    assert lines[0] == ("horizon,split,mae_with,mae_without,mae_improvement_pct,"
                       "mse_with,mse_without,mse_improvement_pct")
    assert lines[1] == "1,event,7.0,10.0,30.0,50.0,100.0,50.0"


def test_sweep_csv_format(tmp_path):
    cells = {(0.5, 1, SPLIT_ALL): MetricCell(1.5, 3.0, 7)}
    SweepResult([0.5], cells).write_csv(tmp_path / "sweep.csv")
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0] == "lambda,horizon,split,mae,mse"
    assert lines[1] == "0.5,1,all,1.5,3.0"
