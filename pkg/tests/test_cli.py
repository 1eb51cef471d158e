import hashlib
import io
import json
import subprocess
import sys

import pytest

from towercast import cli
from towercast.cli import main


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    rc = main([
        "gen-data", "--out", str(d), "--preset", "small",
        "--days", "120", "--countries", "1", "--regions", "2", "--seed", "3",
    ])
    assert rc == 0
    return d


@pytest.fixture(scope="module")
def model_dir(tmp_path_factory, data_dir):
    root = tmp_path_factory.mktemp("model")
    mc = root / "mc.json"
    # the tiny preset's position table is too small for real generated
    # summaries, which run to ~33 tokens on stacked-event days
    mc.write_text(json.dumps({"n_features": 4, "max_positions": 64}))
    out = root / "ckpt"
    rc = main([
        "train", "--data", str(data_dir), "--out", str(out),
        "--preset", "tiny", "--model-config", str(mc),
        "--epochs", "2", "--quiet",
    ])
    assert rc == 0
    return out


def test_gen_data_layout_and_manifest(data_dir):
    assert (data_dir / "sales.csv").is_file()
    for name in ("campaigns.jsonl", "holidays.jsonl", "incentives.jsonl"):
        assert (data_dir / "events" / name).is_file()
    manifest = json.loads((data_dir / "run_manifest.json").read_text())
    assert manifest["subcommand"] == "gen-data"
    assert manifest["config"]["seed"] == 3
    assert manifest["config"]["n_days"] == 120
    digest = manifest["outputs"][str(data_dir / "sales.csv")]["sales.csv"]
    actual = hashlib.sha256((data_dir / "sales.csv").read_bytes()).hexdigest()
    assert digest == actual


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "scenario.json"
    cfg.write_text(json.dumps({"n_days": 60, "n_countries": 1,
                               "regions_per_country": 1}))
    out = tmp_path / "d"
    rc = main(["gen-data", "--out", str(out), "--preset", "small",
               "--config", str(cfg), "--days", "70"])
    assert rc == 0
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["config"]["n_days"] == 70  # flag beats file
    assert manifest["config"]["n_countries"] == 1  # file beats preset


def test_unknown_config_key_is_data_error(tmp_path, capsys):
    cfg = tmp_path / "scenario.json"
    cfg.write_text(json.dumps({"n_dayz": 60}))
    rc = main(["gen-data", "--out", str(tmp_path / "d"), "--config", str(cfg)])
    assert rc == 3
    assert "n_dayz" in capsys.readouterr().err


def test_malformed_config_json(tmp_path, capsys):
    cfg = tmp_path / "scenario.json"
    cfg.write_text("{not json")
    rc = main(["gen-data", "--out", str(tmp_path / "d"), "--config", str(cfg)])
    assert rc == 3
    assert "invalid JSON" in capsys.readouterr().err


def test_train_writes_checkpoint_and_log(model_dir):
    for name in ("model.manifest", "model.tensors", "vocab.txt",
                 "training_log.csv", "run_manifest.json"):
        assert (model_dir / name).is_file(), name
    log = (model_dir / "training_log.csv").read_text().splitlines()
    assert log[0] == "epoch,loss" and len(log) == 3
    manifest = json.loads((model_dir / "model.manifest").read_text())
    assert manifest["train_config"]["epochs"] == 2
    assert manifest["model_config"]["n_features"] == 4


def test_train_no_events_flag(tmp_path, data_dir):
    mc = tmp_path / "mc.json"
    mc.write_text(json.dumps({"n_features": 4, "max_positions": 64}))
    out = tmp_path / "ckpt"
    rc = main(["train", "--data", str(data_dir), "--out", str(out),
               "--preset", "tiny", "--model-config", str(mc),
               "--epochs", "1", "--quiet", "--no-events"])
    assert rc == 0
    manifest = json.loads((out / "model.manifest").read_text())
    assert manifest["train_config"]["use_event_features"] is False


def test_missing_data_dir_is_exit_3(tmp_path, capsys):
    rc = main(["train", "--data", str(tmp_path / "nope"), "--out",
               str(tmp_path / "ckpt"), "--quiet"])
    assert rc == 3
    assert "error:" in capsys.readouterr().err


def test_evaluate_writes_report(tmp_path, data_dir, model_dir, capsys):
    out = tmp_path / "report.csv"
    rc = main(["evaluate", "--model", str(model_dir), "--data", str(data_dir),
               "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "horizon,split,mae,mse,n"
    assert len(lines) >= 5  # 2 horizons x 2 splits
    stdout = capsys.readouterr().out
    assert "T+1" in stdout and "wrote" in stdout
    manifest = json.loads((tmp_path / "run_manifest.json").read_text())
    assert manifest["subcommand"] == "evaluate"
    assert "h1/all" in manifest["extra"]["metrics"]


def test_forecast_stdout_and_lambda(data_dir, model_dir, capsys):
    rc = main(["forecast", "--model", str(model_dir), "--data", str(data_dir),
               "--country", "01", "--region", "R01", "--lambda", "1.0"])
    assert rc == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "horizon,date,forecast,trend,event"
    assert len(lines) == 3  # two horizons
    for line in lines[1:]:
        h, day, fc, trend, event = line.split(",")
        assert fc == trend  # lambda 1.0 keeps the trend head only

    rc = main(["forecast", "--model", str(model_dir), "--data", str(data_dir),
               "--country", "01", "--region", "R01", "--lambda", "0.0"])
    assert rc == 0
    lines0 = capsys.readouterr().out.splitlines()
    for line in lines0[1:]:
        h, day, fc, trend, event = line.split(",")
        assert fc == event


def test_forecast_out_file_and_manifest(tmp_path, data_dir, model_dir):
    out = tmp_path / "forecast.csv"
    rc = main(["forecast", "--model", str(model_dir), "--data", str(data_dir),
               "--country", "01", "--region", "R02", "--out", str(out)])
    assert rc == 0
    assert out.read_text().startswith("horizon,date,forecast")
    manifest = json.loads((tmp_path / "run_manifest.json").read_text())
    assert manifest["config"]["region"] == "R02"


def test_forecast_unknown_region(data_dir, model_dir, capsys):
    rc = main(["forecast", "--model", str(model_dir), "--data", str(data_dir),
               "--country", "01", "--region", "R99"])
    assert rc == 3
    assert "R99" in capsys.readouterr().err


def test_forecast_bad_origins(data_dir, model_dir, capsys):
    rc = main(["forecast", "--model", str(model_dir), "--data", str(data_dir),
               "--country", "01", "--region", "R01", "--origin", "1999-01-01"])
    assert rc == 3
    rc = main(["forecast", "--model", str(model_dir), "--data", str(data_dir),
               "--country", "01", "--region", "R01", "--origin", "2024-01-01"])
    assert rc == 3  # not enough history before the first day
    rc = main(["forecast", "--model", str(model_dir), "--data", str(data_dir),
               "--country", "01", "--region", "R01", "--origin", "not-a-date"])
    assert rc == 3
    capsys.readouterr()


def test_sweep_lambda_csv_and_best(tmp_path, data_dir, model_dir, capsys):
    out = tmp_path / "sweep.csv"
    rc = main(["sweep-lambda", "--model", str(model_dir), "--data", str(data_dir),
               "--out", str(out), "--grid", "0.0,0.5,1.0"])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "lambda,horizon,split,mae,mse"
    assert len(lines) == 1 + 3 * 2 * 2
    stdout = capsys.readouterr().out
    assert "best lambda" in stdout
    manifest = json.loads((tmp_path / "run_manifest.json").read_text())
    assert manifest["config"]["grid"] == [0.0, 0.5, 1.0]


def test_sweep_lambda_bad_grid(tmp_path, data_dir, model_dir, capsys):
    rc = main(["sweep-lambda", "--model", str(model_dir), "--data", str(data_dir),
               "--out", str(tmp_path / "s.csv"), "--grid", "a,b"])
    assert rc == 3
    rc = main(["sweep-lambda", "--model", str(model_dir), "--data", str(data_dir),
               "--out", str(tmp_path / "s.csv"), "--grid", "0.0,1.5"])
    assert rc == 4  # ValueError, not a data error
    capsys.readouterr()


def test_reason_show_prompt(data_dir, capsys):
    rc = main(["reason", "--events", str(data_dir / "events"), "--country", "01",
               "--date", "2024-03-01", "--show-prompt"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "<result>" in out and "2024-03-01" in out


def test_reason_oracle_stdout(data_dir, capsys):
    rc = main(["reason", "--events", str(data_dir / "events"), "--country", "01",
               "--date", "2024-03-01"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "<result>" in out and "</result>" in out


def test_reason_out_file_then_parse(tmp_path, data_dir, capsys):
    out = tmp_path / "reasoning.txt"
    rc = main(["reason", "--events", str(data_dir / "events"), "--country", "01",
               "--date", "2024-03-01", "--out", str(out)])
    assert rc == 0
    summary_line = capsys.readouterr().out.strip()
    assert summary_line.count(";") == 7  # 8 fields printed joined by ';'

    rc = main(["parse", "--in", str(out), "--json"])
    assert rc == 0
    fields = json.loads(capsys.readouterr().out)
    assert len(fields) == 8
    assert fields[0] == "country code is 01"


def test_reason_errors(data_dir, capsys):
    rc = main(["reason", "--events", str(data_dir / "events"), "--country", "99",
               "--date", "2024-03-01"])
    assert rc == 3  # unknown country in strict mode
    rc = main(["reason", "--events", str(data_dir / "events"), "--country", "01",
               "--date", "03/01/2024"])
    assert rc == 3
    capsys.readouterr()


def test_parse_reads_stdin(monkeypatch, capsys):
    monkeypatch.setattr(sys, "stdin", io.StringIO("<result>a; b</result>"))
    rc = main(["parse", "--k", "2"])
    assert rc == 0
    assert capsys.readouterr().out.splitlines() == ["a", "b"]


def test_parse_without_block_fails(tmp_path, capsys):
    p = tmp_path / "junk.txt"
    p.write_text("no summary here")
    rc = main(["parse", "--in", str(p)])
    assert rc == 3
    assert "result" in capsys.readouterr().err


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["train", "--data", "d"])  # missing --out
    assert exc.value.code == 2


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "towercast", "--help"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "towercast" in proc.stdout
    assert "gen-data" in proc.stdout


def test_digest_tree_covers_nested_files(tmp_path):
    (tmp_path / "sub").mkdir()
    (tmp_path / "a.txt").write_text("alpha")
    (tmp_path / "sub" / "b.txt").write_text("beta")
    tree = cli._digest_tree(tmp_path)
    assert set(tree) == {"a.txt", "sub/b.txt"}
    assert tree["a.txt"] == hashlib.sha256(b"alpha").hexdigest()
