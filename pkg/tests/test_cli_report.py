import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from benefitmark import cli
from benefitmark.data import AnalysisConfig, BenefitDefinition
from benefitmark.metrics import FPR_GRID
from benefitmark.report import dumps, format_float, roc_filename


def write_config(path, **kw):
    base = dict(benefit=BenefitDefinition("binary_leq"), marker_columns=("z",),
                covariate_columns=("w",), gamma_grid=(1.0, 2.0), theta_u_grid=(0.0, 1.8),
                bootstrap_replicates=0)
    base.update(kw)
    path.write_text(json.dumps(AnalysisConfig(**base).to_dict()))
    return path


@pytest.fixture(scope="module")
def trial_dir(tmp_path_factory):
    from conftest import SCENARIO_DOC

    root = tmp_path_factory.mktemp("trial")
    (root / "scenario.json").write_text(json.dumps(SCENARIO_DOC))
    code = cli.main(["simulate", "--scenario", str(root / "scenario.json"), "--n", "300",
                     "--seed", "4", "--out", str(root / "sim")])
    assert code == 0
    return root


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_format_float():
    assert format_float(0.1) == "0.10000000000000001"
    assert format_float(2.0) == "2.0"
    assert format_float(1e300) == "1.0000000000000001e+300"
    assert format_float(float("nan")) == "null"
    assert format_float(np.float32(0.5)) == "0.5"


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_format_float_round_trips(x):
    assert float(format_float(x)) == x
    assert json.loads(format_float(x)) == x


def test_dumps_is_json():
    obj = {"b": [1, 2.5, np.float64(0.25)], "a": {"x": None, "y": True}, "c": np.arange(3)}
    text = dumps(obj)
    assert json.loads(text) == {"b": [1, 2.5, 0.25], "a": {"x": None, "y": True}, "c": [0, 1, 2]}
    assert text.index('"b"') < text.index('"a"')


def test_roc_filename():
    assert roc_filename("z", "direct", "gamma", 1.0) == "roc_z_direct_gamma1.0.csv"
    assert roc_filename("a b/c", "indirect", "theta_u", 1.8) == \
        "roc_a_b_c_indirect_theta_u1.8.csv"


def test_simulate_outputs(trial_dir):
    full = read_csv(trial_dir / "sim" / "full.csv")
    masked = read_csv(trial_dir / "sim" / "masked.csv")
    assert full[0] == ["id", "treatment", "outcome", "y0", "y1", "u", "b", "z", "w"]
    assert masked[0] == ["id", "treatment", "outcome", "z", "w"]
    assert len(full) == len(masked) == 301


def test_analyze_without_bootstrap(trial_dir, tmp_path):
    cfg = write_config(tmp_path / "config.json")
    out = tmp_path / "out"
    code = cli.main(["analyze", "--data", str(trial_dir / "sim" / "masked.csv"),
                     "--config", str(cfg), "--out", str(out)])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert len(report["results"]) == 4
    for entry in report["results"]:
        assert "auc_se" not in entry and "auc_ci" not in entry
        assert 0 <= entry["auc"] <= 1
        rows = read_csv(out / entry["roc_csv"])
        assert rows[0] == ["fpr", "tpr", "lower", "upper"]
        assert len(rows) == 1 + len(FPR_GRID)
        assert all(r[2] == "" and r[3] == "" for r in rows[1:])
    assert report["metadata"]["bootstrap"]["requested"] == 0


def test_analyze_with_bootstrap_is_deterministic(trial_dir, tmp_path):
    cfg = write_config(tmp_path / "config.json", marker_columns=("z", "w"), covariate_columns=(),
                       bootstrap_replicates=4)
    texts = []
    for k in range(2):
        out = tmp_path / f"out{k}"
        assert cli.main(["analyze", "--data", str(trial_dir / "sim" / "masked.csv"),
                         "--config", str(cfg), "--out", str(out)]) == 0
        texts.append((out / "report.json").read_text())
    assert texts[0] == texts[1]
    report = json.loads(texts[0])
    assert len(report["results"]) == 8
    for entry in report["results"]:
        lo, hi = entry["auc_ci"]
        assert lo <= hi and entry["auc_se"] >= 0
        rows = read_csv(tmp_path / "out0" / entry["roc_csv"])
        assert all(float(r[2]) <= float(r[3]) for r in rows[1:])
    # one row per setting, each with both markers and their difference
    assert len(report["table"]) == 4
    for row in report["table"]:
        assert set(row["markers"]) == {"z", "w"}
        (diff,) = row["differences"]
        expected = row["markers"]["z"]["auc"] - row["markers"]["w"]["auc"]
        assert diff["estimate"] == pytest.approx(expected, abs=1e-15)
        assert diff["se"] is not None


def test_floats_written_with_17_digits(trial_dir, tmp_path):
    cfg = write_config(tmp_path / "config.json", approach="direct", gamma_grid=(1.0,))
    out = tmp_path / "out"
    cli.main(["analyze", "--data", str(trial_dir / "sim" / "masked.csv"), "--config", str(cfg),
              "--out", str(out)])
    text = (out / "report.json").read_text()
    entry = json.loads(text)["results"][0]
    assert f'"auc": {format(entry["auc"], ".17g")}' in text


def test_validate(trial_dir, tmp_path):
    cfg = write_config(tmp_path / "config.json")
    out = tmp_path / "val"
    code = cli.main(["validate", "--full-data", str(trial_dir / "sim" / "full.csv"),
                     "--config", str(cfg), "--out", str(out),
                     "--scenario", str(trial_dir / "scenario.json"), "--mc-draws", "2000"])
    assert code == 0
    summary = json.loads((out / "validation.json").read_text())
    assert summary["n"] == 300 and len(summary["settings"]) == 4
    for row in summary["settings"]:
        assert row["auc_abs_error"] == pytest.approx(abs(row["auc"] - row["oracle_auc"]))
        assert 0 <= row["pi_z_sup_error"] < 1
    assert (out / "report.json").exists()


def test_validate_needs_counterfactuals(trial_dir, tmp_path, capsys):
    cfg = write_config(tmp_path / "config.json")
    out = tmp_path / "val"
    code = cli.main(["validate", "--full-data", str(trial_dir / "sim" / "masked.csv"),
                     "--config", str(cfg), "--out", str(out)])
    assert code == cli.EXIT_INVALID
    assert "counterfactual columns required" in capsys.readouterr().err
    assert not out.exists()


def test_invalid_input_exit_code(trial_dir, tmp_path, capsys):
    cfg = write_config(tmp_path / "config.json", marker_columns=("nope",))
    out = tmp_path / "out"
    code = cli.main(["analyze", "--data", str(trial_dir / "sim" / "masked.csv"),
                     "--config", str(cfg), "--out", str(out)])
    assert code == cli.EXIT_INVALID
    assert "column not found" in capsys.readouterr().err
    assert not out.exists()
    assert cli.main(["analyze", "--data", str(tmp_path / "missing.csv"), "--config", str(cfg),
                     "--out", str(out)]) != 0


def test_partial_outputs_removed(trial_dir, tmp_path, monkeypatch):
    cfg = write_config(tmp_path / "config.json")
    out = tmp_path / "out"
    out.mkdir()
    (out / "keep.txt").write_text("unrelated")

    def failing_dumps(obj, *a, **kw):
        raise OSError("disk full")

    monkeypatch.setattr(cli, "dumps", failing_dumps)
    code = cli.main(["analyze", "--data", str(trial_dir / "sim" / "masked.csv"),
                     "--config", str(cfg), "--out", str(out)])
    assert code == cli.EXIT_ERROR
    # the ROC files were written before the report failed, and are gone again
    assert sorted(p.name for p in out.iterdir()) == ["keep.txt"]


def test_threads_env_gives_same_report(trial_dir, tmp_path, monkeypatch):
    cfg = write_config(tmp_path / "config.json", approach="indirect", theta_u_grid=(0.0,),
                       bootstrap_replicates=4)
    texts = []
    for threads in ("1", "2"):
        monkeypatch.setenv("BENEFITMARK_THREADS", threads)
        out = tmp_path / f"t{threads}"
        assert cli.main(["analyze", "--data", str(trial_dir / "sim" / "masked.csv"),
                         "--config", str(cfg), "--out", str(out)]) == 0
        texts.append((out / "report.json").read_text())
    assert texts[0] == texts[1]


def test_cli_overrides(trial_dir, tmp_path):
    cfg = write_config(tmp_path / "config.json")
    out = tmp_path / "out"
    assert cli.main(["analyze", "--data", str(trial_dir / "sim" / "masked.csv"),
                     "--config", str(cfg), "--out", str(out), "--approach", "direct",
                     "--link", "probit", "--seed", "9"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["metadata"]["seed"] == 9
    assert report["metadata"]["config"]["link"] == "probit"
    assert {e["approach"] for e in report["results"]} == {"direct"}
    assert all(math.isfinite(e["auc"]) for e in report["results"])
