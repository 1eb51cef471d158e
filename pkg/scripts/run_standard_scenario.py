"""End-to-end benchmark on the standard synthetic market.

Generates the scenario, trains twin models (with / without event features),
reports held-out metrics, the event-day ablation, and the blend-weight sweep.

Usage:
    python scripts/run_standard_scenario.py --out runs/standard
"""

import argparse
import dataclasses
from pathlib import Path

from towercast import presets
from towercast.data import write_dataset_csv
from towercast.evaluation import ablate_events, evaluate, sweep_lambda
from towercast.events import save_database
from towercast.synth import generate
from towercast.training import save_checkpoint, write_training_log


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/standard", help="output directory")
    ap.add_argument("--seed", type=int, default=7, help="scenario seed")
    ap.add_argument("--train-seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=None, help="override preset epochs")
    ap.add_argument("--quiet", action="store_true")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    scen = presets.standard_scenario(seed=args.seed)
    print(f"generating scenario: {scen.n_countries} countries x "
          f"{scen.regions_per_country} regions x {scen.n_days} days (seed {scen.seed})")
    ds, db = generate(scen)
    write_dataset_csv(ds, out / "sales.csv")
    save_database(db, out / "events")

    model_cfg = presets.desk_model_config()
    train_cfg = presets.desk_train_config(seed=args.train_seed)
    if args.epochs is not None:
        train_cfg = dataclasses.replace(train_cfg, epochs=args.epochs)
    log_fn = None if args.quiet else (lambda e, loss: print(f"  epoch {e}: loss {loss:.6f}"))

    print("training twin models (with / without event features)...")
    ablation, tm_with, tm_without = ablate_events(
        ds, db, model_cfg, train_cfg, log_fn=log_fn
    )
    save_checkpoint(tm_with, out / "model_with_events")
    save_checkpoint(tm_without, out / "model_without_events")
    write_training_log(out / "model_with_events" / "training_log.csv", tm_with.loss_history)
    write_training_log(out / "model_without_events" / "training_log.csv", tm_without.loss_history)
    ablation.write_csv(out / "ablation.csv")

    report = evaluate(tm_with, ds, db)
    report.write_csv(out / "report.csv")
    print("\nheld-out metrics (event-aware model):")
    for row in report.to_rows():
        print(f"  T+{row['horizon']} {row['split']:>5}: "
              f"mae {row['mae']:.4f}  mse {row['mse']:.4f}  n {row['n']}")

    print("\nevent-day ablation (MAE improvement from event features):")
    for h in sorted(ablation.mae_improvement_pct):
        print(f"  T+{h}: {ablation.mae_improvement_pct[h]:+.2f}%")

    sweep = sweep_lambda(tm_with, ds, db)
    sweep.write_csv(out / "sweep.csv")
    best_w, best_mae = sweep.best()
    print("\nblend-weight sweep (event split, mean MAE over horizons):")
    for w, m in sweep.curve():
        marker = "  <-- best" if w == best_w else ""
        print(f"  lambda {w:.1f}: {m:.4f}{marker}")
    print(f"\nartifacts in {out}")


if __name__ == "__main__":
    main()
