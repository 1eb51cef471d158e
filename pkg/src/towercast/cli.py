"""Command-line entry points.

Layout conventions: a data directory holds ``sales.csv`` plus an ``events/``
subdirectory; a model directory holds the checkpoint triple written by
:func:`towercast.training.save_checkpoint`.  Every command that writes
artifacts also writes a JSON run manifest (resolved config, input/output
paths with SHA-256 digests, UTC timestamp) next to them.

Exit codes: 0 success, 2 usage error, 3 malformed or missing data,
4 any other pipeline failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from datetime import date as Date
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from . import evaluation, presets, synth
from .data import load_dataset_csv, write_dataset_csv
from .errors import DataError, InsufficientData, MalformedRecord, TowercastError
from .events import events_for, load_database, save_database
from .model import ModelConfig, summaries_to_id_matrix
from .parsing import DEFAULT_FIELD_COUNT, extract_summary
from .prompting import default_template, load_template, render_prompt
from .reasoner import (
    SOURCE_ORACLE,
    SOURCE_REMOTE,
    AuditLog,
    EndpointConfig,
    RemoteReasoner,
    reason_oracle,
)
from .semantic import PAD_ID
from .synth import ScenarioConfig
from .training import (
    TrainConfig,
    _atomic_write_text,
    load_checkpoint,
    save_checkpoint,
    train,
    write_training_log,
)

DATASET_FILE = "sales.csv"
EVENTS_DIR = "events"
MANIFEST_NAME = "run_manifest.json"


# ---------------------------------------------------------------------------
# Helpers


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _digest_tree(path: Path) -> dict[str, str]:
    """path -> digest for a file, or every file under a directory."""
    if path.is_file():
        return {path.name: _sha256_file(path)}
    out = {}
    for p in sorted(path.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(path))] = _sha256_file(p)
    return out


def write_run_manifest(
    manifest_path: Path,
    subcommand: str,
    config: dict,
    inputs: list[Path],
    outputs: list[Path],
    extra: dict | None = None,
) -> None:
    doc = {
        "subcommand": subcommand,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "config": config,
        "inputs": {str(p): _digest_tree(p) for p in inputs if p.exists()},
        "outputs": {str(p): _digest_tree(p) for p in outputs if p.exists()},
    }
    if extra:
        doc["extra"] = extra
    _atomic_write_text(manifest_path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _read_json_config(path: str) -> dict:
    p = Path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedRecord(str(p), exc.lineno, f"invalid JSON: {exc.msg}")
    if not isinstance(doc, dict):
        raise MalformedRecord(str(p), 1, "config root must be a JSON object")
    return doc


def _build_config(cls, base, file_path: str | None, overrides: dict):
    """Dataclass config = preset defaults <- JSON file <- explicit flags."""
    kwargs = dataclasses.asdict(base)
    if file_path:
        for key, value in _read_json_config(file_path).items():
            if key not in kwargs:
                raise MalformedRecord(file_path, 0, f"unknown {cls.__name__} field {key!r}")
            kwargs[key] = value
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    for key, value in kwargs.items():
        if isinstance(value, list):
            kwargs[key] = tuple(value)
    return cls(**kwargs)


def _parse_date(text: str) -> Date:
    try:
        return Date.fromisoformat(text)
    except ValueError:
        raise MalformedRecord("<args>", 0, f"not an ISO date: {text!r}")


def _load_data_dir(data_dir: str):
    root = Path(data_dir)
    ds = load_dataset_csv(root / DATASET_FILE)
    db = load_database(root / EVENTS_DIR)
    return ds, db


def _scenario_preset(name: str) -> ScenarioConfig:
    table = {
        "standard": presets.standard_scenario,
        "small": presets.small_scenario,
        "zero-effect": presets.zero_effect_scenario,
    }
    return table[name]()


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_gen_data(args) -> int:
    cfg = _build_config(
        ScenarioConfig,
        _scenario_preset(args.preset),
        args.config,
        {
            "seed": args.seed,
            "n_days": args.days,
            "n_countries": args.countries,
            "regions_per_country": args.regions,
        },
    )
    ds, db = synth.generate(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset_csv(ds, out / DATASET_FILE)
    save_database(db, out / EVENTS_DIR)
    write_run_manifest(
        out / MANIFEST_NAME,
        "gen-data",
        dataclasses.asdict(cfg),
        inputs=[],
        outputs=[out / DATASET_FILE, out / EVENTS_DIR],
        extra={"seed": cfg.seed, "record_counts": db.counts()},
    )
    n_regions = len(ds.regions)
    print(f"wrote {out / DATASET_FILE} ({n_regions} regions x {cfg.n_days} days)")
    print(f"wrote {out / EVENTS_DIR} ({db.counts()})")
    return 0


def _cmd_reason(args) -> int:
    db = load_database(args.events)
    day = _parse_date(args.date)
    ctx = events_for(db, args.country, day, strict=True)
    template = load_template(args.template) if args.template else default_template()
    prompt = render_prompt(ctx, template)
    if args.show_prompt:
        print(prompt.text)
        return 0
    audit = AuditLog(args.audit) if args.audit else None
    if args.remote:
        client = RemoteReasoner(EndpointConfig.from_env(), audit=audit)
        reasoning = client.reason(prompt, country=args.country, day=args.date)
    else:
        reasoning = reason_oracle(ctx, template, audit=audit)
    fields = extract_summary(reasoning.text)
    if args.out:
        out = Path(args.out)
        _atomic_write_text(out, reasoning.text)
        write_run_manifest(
            out.parent / MANIFEST_NAME,
            "reason",
            {"country": args.country, "date": args.date, "source": reasoning.source},
            inputs=[Path(args.events)],
            outputs=[out],
            extra={"summary_fields": list(fields)},
        )
        print("; ".join(fields))
    else:
        print(reasoning.text, end="" if reasoning.text.endswith("\n") else "\n")
    return 0


def _model_train_configs(args) -> tuple[ModelConfig, TrainConfig]:
    base_model = presets.tiny_model_config() if args.preset == "tiny" else presets.desk_model_config()
    model_cfg = _build_config(ModelConfig, base_model, args.model_config, {})
    train_overrides = {
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "lr": args.lr,
        "seed": args.seed,
        "trend_weight": args.trend_weight,
        "test_frac": args.test_frac,
    }
    if getattr(args, "no_events", False):
        train_overrides["use_event_features"] = False
    train_cfg = _build_config(
        TrainConfig, presets.desk_train_config(), args.train_config, train_overrides
    )
    return model_cfg, train_cfg


def _cmd_train(args) -> int:
    ds, db = _load_data_dir(args.data)
    model_cfg, train_cfg = _model_train_configs(args)
    log_fn = None if args.quiet else (lambda e, loss: print(f"epoch {e}: loss {loss:.6f}"))
    tm = train(ds, db, model_cfg, train_cfg, log_fn=log_fn)
    out = Path(args.out)
    save_checkpoint(tm, out)
    write_training_log(out / "training_log.csv", tm.loss_history)
    write_run_manifest(
        out / MANIFEST_NAME,
        "train",
        {
            "model": dataclasses.asdict(model_cfg),
            "train": dataclasses.asdict(train_cfg),
        },
        inputs=[Path(args.data) / DATASET_FILE, Path(args.data) / EVENTS_DIR],
        outputs=[out / "model.manifest", out / "model.tensors", out / "vocab.txt",
                 out / "training_log.csv"],
        extra={"seed": train_cfg.seed,
               "final_loss": tm.loss_history[-1] if tm.loss_history else None},
    )
    if tm.loss_history:
        print(f"final epoch loss {tm.loss_history[-1]:.6f}")
    print(f"saved checkpoint to {out}")
    return 0


def _cmd_forecast(args) -> int:
    tm = load_checkpoint(args.model)
    ds, db = _load_data_dir(args.data)
    try:
        region = ds.region(args.country, args.region)
    except KeyError:
        raise InsufficientData(
            f"{args.country}/{args.region}", "region not present in dataset"
        )
    cfg = tm.model_cfg
    origin_date = _parse_date(args.origin) if args.origin else region.dates[-1]
    if origin_date not in region.dates:
        raise InsufficientData(region.key, f"origin {origin_date} outside series")
    origin = region.dates.index(origin_date)
    if origin < cfg.look_back - 1:
        raise InsufficientData(
            region.key, f"origin needs {cfg.look_back} days of history"
        )

    ri = tm.norm.index_of(region.key)
    norm = (region.values - tm.norm.mean[ri]) / tm.norm.std[ri]
    x = norm[origin - cfg.look_back + 1 : origin + 1].astype(tm.train_cfg.np_dtype)

    template = default_template()
    if tm.train_cfg.use_event_features:
        per_horizon = []
        for h in range(1, cfg.horizons + 1):
            ctx = events_for(db, args.country, origin_date + timedelta(days=h))
            per_horizon.append(extract_summary(reason_oracle(ctx, template).text))
        ids, mask = summaries_to_id_matrix(per_horizon, tm.vocab, cfg)
    else:
        ids = np.full((cfg.horizons, 1), PAD_ID, dtype=np.int64)
        mask = np.ones((cfg.horizons, 1), dtype=tm.train_cfg.np_dtype)

    y_t, y_e = tm.predict_heads(x[None], ids[None], mask[None])
    w = tm.train_cfg.trend_weight if args.trend_weight is None else args.trend_weight
    if not (0.0 <= w <= 1.0):
        raise ValueError(f"lambda {w} outside [0, 1]")
    mean_t, std_t = tm.norm.mean[ri, 0], tm.norm.std[ri, 0]
    trend = y_t[0] * std_t + mean_t
    event = y_e[0] * std_t + mean_t
    blended = w * trend + (1.0 - w) * event

    lines = ["horizon,date,forecast,trend,event"]
    for h in range(1, cfg.horizons + 1):
        d = origin_date + timedelta(days=h)
        lines.append(
            f"{h},{d.isoformat()},{repr(float(blended[h - 1]))},"
            f"{repr(float(trend[h - 1]))},{repr(float(event[h - 1]))}"
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        out = Path(args.out)
        _atomic_write_text(out, text)
        write_run_manifest(
            out.parent / MANIFEST_NAME,
            "forecast",
            {"country": args.country, "region": args.region,
             "origin": origin_date.isoformat(), "lambda": w},
            inputs=[Path(args.model), Path(args.data) / DATASET_FILE],
            outputs=[out],
        )
        print(f"wrote {out}")
    else:
        print(text, end="")
    return 0


def _cmd_evaluate(args) -> int:
    tm = load_checkpoint(args.model)
    ds, db = _load_data_dir(args.data)
    report = evaluation.evaluate(tm, ds, db, trend_weight=args.trend_weight)
    out = Path(args.out)
    report.write_csv(out)
    write_run_manifest(
        out.parent / MANIFEST_NAME,
        "evaluate",
        {"lambda": args.trend_weight if args.trend_weight is not None
         else tm.train_cfg.trend_weight},
        inputs=[Path(args.model), Path(args.data) / DATASET_FILE],
        outputs=[out],
        extra={"metrics": report.to_json()},
    )
    for row in report.to_rows():
        print(
            f"T+{row['horizon']} {row['split']:>5}: "
            f"mae {row['mae']:.4f}  mse {row['mse']:.4f}  n {row['n']}"
        )
    print(f"wrote {out}")
    return 0


def _cmd_ablate(args) -> int:
    ds, db = _load_data_dir(args.data)
    model_cfg, train_cfg = _model_train_configs(args)
    log_fn = None if args.quiet else (lambda e, loss: print(f"epoch {e}: loss {loss:.6f}"))
    report, tm_with, tm_without = evaluation.ablate_events(
        ds, db, model_cfg, train_cfg, split=args.split, log_fn=log_fn
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "ablation.csv")
    save_checkpoint(tm_with, out / "with_events")
    save_checkpoint(tm_without, out / "without_events")
    write_run_manifest(
        out / MANIFEST_NAME,
        "ablate",
        {
            "model": dataclasses.asdict(model_cfg),
            "train": dataclasses.asdict(train_cfg),
            "split": args.split,
        },
        inputs=[Path(args.data) / DATASET_FILE, Path(args.data) / EVENTS_DIR],
        outputs=[out / "ablation.csv", out / "with_events", out / "without_events"],
        extra={"mae_improvement_pct": {str(h): v for h, v in report.mae_improvement_pct.items()}},
    )
    for h in sorted(report.mae_improvement_pct):
        print(f"T+{h}: MAE improvement {report.mae_improvement_pct[h]:+.2f}% ({args.split} split)")
    print(f"wrote {out / 'ablation.csv'}")
    return 0


def _cmd_sweep_lambda(args) -> int:
    tm = load_checkpoint(args.model)
    ds, db = _load_data_dir(args.data)
    grid = None
    if args.grid:
        try:
            grid = [float(tok) for tok in args.grid.split(",") if tok.strip()]
        except ValueError:
            raise MalformedRecord("<args>", 0, f"bad --grid value: {args.grid!r}")
    result = evaluation.sweep_lambda(tm, ds, db, grid=grid)
    out = Path(args.out)
    result.write_csv(out)
    best_w, best_mae = result.best(args.split)
    write_run_manifest(
        out.parent / MANIFEST_NAME,
        "sweep-lambda",
        {"grid": result.grid, "split": args.split},
        inputs=[Path(args.model), Path(args.data) / DATASET_FILE],
        outputs=[out],
        extra={"best_lambda": best_w, "best_mean_mae": best_mae},
    )
    for w, m in result.curve(args.split):
        print(f"lambda {w:.2f}: mean MAE {m:.4f} ({args.split} split)")
    print(f"best lambda {best_w:.2f} (mean MAE {best_mae:.4f})")
    print(f"wrote {out}")
    return 0


def _cmd_parse(args) -> int:
    if args.infile and args.infile != "-":
        text = Path(args.infile).read_text(encoding="utf-8")
    else:
        text = sys.stdin.read()
    fields = extract_summary(text, expected_k=args.k)
    if args.json:
        print(json.dumps(list(fields)))
    else:
        for f in fields:
            print(f)
    return 0


# ---------------------------------------------------------------------------
# Parser assembly


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model-config", help="JSON file of model dimensions")
    p.add_argument("--train-config", help="JSON file of optimizer settings")
    p.add_argument("--preset", choices=["desk", "tiny"], default="desk",
                   help="base model size before overrides")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--lambda", dest="trend_weight", type=float,
                   help="trend-tower blend weight in [0, 1]")
    p.add_argument("--test-frac", type=float)
    p.add_argument("--quiet", action="store_true", help="suppress epoch logs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="towercast",
        description="Event-aware regional demand forecasting pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic market and event database")
    p.add_argument("--out", required=True, help="output data directory")
    p.add_argument("--preset", choices=["standard", "small", "zero-effect"],
                   default="standard")
    p.add_argument("--config", help="JSON scenario config (overrides preset)")
    p.add_argument("--seed", type=int)
    p.add_argument("--days", type=int)
    p.add_argument("--countries", type=int)
    p.add_argument("--regions", type=int, help="regions per country")
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("reason", help="produce event reasoning for one country-day")
    p.add_argument("--events", required=True, help="event database directory")
    p.add_argument("--country", required=True)
    p.add_argument("--date", required=True, help="target date YYYY-MM-DD")
    p.add_argument("--template", help="prompt template file")
    p.add_argument("--remote", action="store_true",
                   help=f"use the TOWERCAST_LLM_* endpoint instead of the "
                        f"built-in {SOURCE_ORACLE} rules ({SOURCE_REMOTE} source)")
    p.add_argument("--audit", help="JSONL audit log path")
    p.add_argument("--out", help="write reasoning text here instead of stdout")
    p.add_argument("--show-prompt", action="store_true",
                   help="print the rendered prompt and exit")
    p.set_defaults(func=_cmd_reason)

    p = sub.add_parser("train", help="fit the forecaster on a data directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint directory")
    _add_train_flags(p)
    p.add_argument("--no-events", action="store_true",
                   help="blind the event pathway (constant summary token)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("forecast", help="forecast horizons 1..H from one origin day")
    p.add_argument("--model", required=True, help="checkpoint directory")
    p.add_argument("--data", required=True)
    p.add_argument("--country", required=True)
    p.add_argument("--region", required=True)
    p.add_argument("--origin", help="origin date (default: last day in the series)")
    p.add_argument("--lambda", dest="trend_weight", type=float)
    p.add_argument("--out", help="write CSV here instead of stdout")
    p.set_defaults(func=_cmd_forecast)

    p = sub.add_parser("evaluate", help="rolling-origin metrics on the held-out split")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="report CSV path")
    p.add_argument("--lambda", dest="trend_weight", type=float)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("ablate", help="train with/without event features and compare")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    _add_train_flags(p)
    p.add_argument("--split", choices=["all", "event"], default="event")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("sweep-lambda", help="metrics across blend weights")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="sweep CSV path")
    p.add_argument("--grid", help="comma-separated weights (default 0.0..1.0 by 0.1)")
    p.add_argument("--split", choices=["all", "event"], default="event")
    p.set_defaults(func=_cmd_sweep_lambda)

    p = sub.add_parser("parse", help="extract the summary fields from reasoning text")
    p.add_argument("--in", dest="infile", help="input file (default stdin, '-' = stdin)")
    p.add_argument("--k", type=int, default=DEFAULT_FIELD_COUNT,
                   help="expected field count")
    p.add_argument("--json", action="store_true", help="emit a JSON array")
    p.set_defaults(func=_cmd_parse)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (TowercastError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
