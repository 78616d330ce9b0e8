"""End-to-end tests for the command-line interface.

Commands run in-process through ``main(argv)`` for speed; one test exercises
the installed console script. Reproducibility tests compare output bytes
across reruns, excluding ``*manifest.json`` (its wall-time field is the one
legitimately non-deterministic output).
"""

from __future__ import annotations

import csv
import hashlib
import json
import subprocess
import sys
from importlib import resources
from pathlib import Path

import pytest

from sliceserve.cli import DAY_LONG_COLUMNS, SWEEP_COLUMNS, geometry_digest, main
from sliceserve.workload import DAY_REPORT_COLUMNS

APP = str(resources.files("sliceserve").joinpath("apps/social-media.json"))
KNOBS = str(resources.files("sliceserve").joinpath("apps/social-media.knobs.json"))


@pytest.fixture(scope="module")
def profile_csv(tmp_path_factory) -> str:
    out = tmp_path_factory.mktemp("prof") / "profile.csv"
    assert main(["gen", "profile", "--app", APP, "--knobs", KNOBS, "--out", str(out)]) == 0
    return str(out)


def _read_csv(path) -> list[list[str]]:
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _tree_hashes(root: Path) -> dict[str, str]:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file() and not p.name.endswith("manifest.json"):
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    assert text.startswith("sliceserve 0.1.0 (geometry ")
    assert geometry_digest() in text


def test_console_script_installed():
    proc = subprocess.run(
        ["sliceserve", "--version"], capture_output=True, text=True, check=False
    )
    assert proc.returncode == 0
    assert "sliceserve 0.1.0" in proc.stdout


def test_gen_profile_writes_table_and_manifest(profile_csv):
    rows = _read_csv(profile_csv)
    assert len(rows) > 10
    manifest = json.loads(Path(profile_csv + ".manifest.json").read_text())
    assert manifest["command"][0] == "sliceserve"
    assert manifest["version"] == "0.1.0"
    assert set(manifest["inputs"]) == {APP, KNOBS}
    for path, digest in manifest["inputs"].items():
        assert digest == hashlib.sha256(Path(path).read_bytes()).hexdigest()
    assert manifest["wall_ms"] >= 0.0


def test_gen_profile_seed_override_changes_table(tmp_path, profile_csv):
    out = tmp_path / "other.csv"
    assert (
        main(["gen", "profile", "--app", APP, "--knobs", KNOBS, "--seed", "99", "--out", str(out)])
        == 0
    )
    assert out.read_bytes() != Path(profile_csv).read_bytes()


def test_gen_trace_defaults_to_full_day(tmp_path):
    out = tmp_path / "trace.csv"
    assert main(["gen", "trace", "--scale", "120", "--seed", "3", "--out", str(out)]) == 0
    rows = _read_csv(out)
    assert len(rows) == 1 + 288
    demands = [float(r[1]) for r in rows[1:]]
    assert max(demands) == 120.0


def test_plan_feasible_exit_zero(tmp_path, profile_csv, capsys):
    out = tmp_path / "plan.json"
    code = main(
        ["plan", "--app", APP, "--profile", profile_csv, "--demand", "200", "--slices", "28",
         "--out", str(out)]
    )
    assert code == 0
    assert "feasible" in capsys.readouterr().out
    doc = json.loads(out.read_text())
    assert doc["feasible"] is True
    assert doc["config"]["total_slices"] <= 28
    assert (tmp_path / "plan.json.manifest.json").exists()


def test_plan_infeasible_exit_two(tmp_path, profile_csv, capsys):
    out = tmp_path / "plan.json"
    code = main(
        ["plan", "--app", APP, "--profile", profile_csv, "--demand", "50000", "--slices", "28",
         "--out", str(out)]
    )
    assert code == 2
    assert "infeasible" in capsys.readouterr().out
    assert json.loads(out.read_text())["feasible"] is False


def test_sweep_row_order_and_ratios(tmp_path, profile_csv):
    out = tmp_path / "sweep.csv"
    code = main(["sweep", "--app", APP, "--profile", profile_csv, "--slices", "28",
                 "--out", str(out)])
    assert code == 0
    rows = _read_csv(out)
    assert tuple(rows[0]) == SWEEP_COLUMNS
    labels = [r[0] for r in rows[1:]]
    assert labels == ["Unopt", "T", "A", "A+T", "S", "S+T", "A+S", "A+S+T"]
    by_label = {r[0]: r for r in rows[1:]}
    assert float(by_label["Unopt"][3]) == 1.0
    # widening the space never reduces max demand
    md = {label: float(r[1]) for label, r in by_label.items()}
    for sub, sup in [("Unopt", "T"), ("Unopt", "A"), ("Unopt", "S"), ("A", "A+T"),
                     ("S", "A+S"), ("S+T", "A+S+T"), ("A+S", "A+S+T"), ("T", "S+T")]:
        assert md[sub] <= md[sup] + 1e-9
    assert all(r[4] == "" for r in rows[1:])
    assert all(0.0 <= float(r[2]) <= 100.0 for r in rows[1:])


def test_sweep_records_errors_in_row(tmp_path, profile_csv):
    # a profile missing one task entirely cannot support any space
    rows = _read_csv(profile_csv)
    broken = tmp_path / "broken.csv"
    with open(broken, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerows([r for r in rows if r[0] != "caption"])
    out = tmp_path / "sweep.csv"
    code = main(["sweep", "--app", APP, "--profile", str(broken), "--slices", "28",
                 "--out", str(out)])
    assert code == 0
    got = _read_csv(out)
    assert len(got) == 9
    assert any(r[4] != "" for r in got[1:])


def test_simulate_writes_report_and_events(tmp_path, profile_csv):
    out = tmp_path / "sim.json"
    events = tmp_path / "events.csv"
    code = main(
        ["simulate", "--app", APP, "--profile", profile_csv, "--demand", "150",
         "--duration", "20", "--warmup", "5", "--slices", "28", "--seed", "4",
         "--out", str(out), "--events", str(events)]
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["plan"]["feasible"] is True
    report = doc["report"]
    assert report["arrived_roots"] > 0
    assert report["completed_roots"] + report["dropped_roots"] == report["arrived_roots"]
    rows = _read_csv(events)
    assert rows[0] == ["time_ms", "event", "request_id", "task", "instance", "detail"]
    assert len(rows) > 100


def test_simulate_infeasible_exit_two(tmp_path, profile_csv, capsys):
    out = tmp_path / "sim.json"
    code = main(
        ["simulate", "--app", APP, "--profile", profile_csv, "--demand", "50000",
         "--slices", "28", "--out", str(out)]
    )
    assert code == 2
    assert "binding constraint" in capsys.readouterr().err
    assert not out.exists()


def test_run_day_outputs(tmp_path, profile_csv):
    trace = tmp_path / "trace.csv"
    assert main(["gen", "trace", "--bins", "8", "--scale", "150", "--seed", "3",
                 "--out", str(trace)]) == 0
    out = tmp_path / "day"
    code = main(
        ["run-day", "--app", APP, "--profile", profile_csv, "--trace", str(trace),
         "--slices", "28", "--seed", "9", "--bin-sim-seconds", "10", "--warmup", "3",
         "--out", str(out)]
    )
    assert code == 0
    report_rows = _read_csv(out / "day_report.csv")
    assert tuple(report_rows[0]) == DAY_REPORT_COLUMNS
    assert len(report_rows) == 1 + 8
    assert all(r[-1] == "" for r in report_rows[1:])
    long_rows = _read_csv(out / "day_long.csv")
    assert tuple(long_rows[0]) == DAY_LONG_COLUMNS
    metrics = {r[1] for r in long_rows[1:]}
    assert {"demand_rps", "pct_slices_used", "accuracy_drop_pct", "violation_rate"} <= metrics
    assert len(list((out / "bins").glob("bin_*.json"))) == 8
    assert (out / "manifest.json").exists()


def test_run_day_zero_demand_trace(tmp_path, profile_csv):
    trace = tmp_path / "zeros.csv"
    with open(trace, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_index", "demand_rps"])
        writer.writerows([[i, "0.0"] for i in range(4)])
    out = tmp_path / "day"
    code = main(
        ["run-day", "--app", APP, "--profile", profile_csv, "--trace", str(trace),
         "--slices", "28", "--seed", "1", "--bin-sim-seconds", "5", "--warmup", "1",
         "--out", str(out)]
    )
    assert code == 0
    rows = _read_csv(out / "day_report.csv")
    col = DAY_REPORT_COLUMNS.index("violation_rate")
    assert [r[col] for r in rows[1:]] == ["0.0"] * 4


def test_rerun_outputs_byte_identical(tmp_path, profile_csv):
    def run_all(base: Path) -> None:
        base.mkdir()
        trace = base / "trace.csv"
        assert main(["gen", "trace", "--bins", "6", "--scale", "120", "--seed", "3",
                     "--out", str(trace)]) == 0
        assert main(["gen", "profile", "--app", APP, "--knobs", KNOBS,
                     "--out", str(base / "prof.csv")]) == 0
        assert main(["plan", "--app", APP, "--profile", profile_csv, "--demand", "200",
                     "--slices", "28", "--out", str(base / "plan.json")]) == 0
        assert main(["sweep", "--app", APP, "--profile", profile_csv, "--slices", "28",
                     "--out", str(base / "sweep.csv")]) == 0
        assert main(["simulate", "--app", APP, "--profile", profile_csv, "--demand", "150",
                     "--duration", "10", "--warmup", "2", "--slices", "28", "--seed", "4",
                     "--out", str(base / "sim.json"),
                     "--events", str(base / "events.csv")]) == 0
        assert main(["run-day", "--app", APP, "--profile", profile_csv, "--trace", str(trace),
                     "--slices", "28", "--seed", "9", "--bin-sim-seconds", "5",
                     "--warmup", "1", "--out", str(base / "day")]) == 0

    run_all(tmp_path / "a")
    run_all(tmp_path / "b")
    hashes_a = _tree_hashes(tmp_path / "a")
    hashes_b = _tree_hashes(tmp_path / "b")
    assert hashes_a and hashes_a == hashes_b


def test_bad_space_label_exit_one(tmp_path, profile_csv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["plan", "--app", APP, "--profile", profile_csv, "--demand", "10",
              "--slices", "28", "--space", "Q+Z"])
    assert exc.value.code == 1
    assert "search space" in capsys.readouterr().err


def test_bad_knobs_exit_one(tmp_path, capsys):
    knobs = tmp_path / "knobs.json"
    doc = json.loads(Path(KNOBS).read_text())
    doc["gamma_slices"] = 1.5
    knobs.write_text(json.dumps(doc))
    code = main(["gen", "profile", "--app", APP, "--knobs", str(knobs),
                 "--out", str(tmp_path / "prof.csv")])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_missing_input_exit_one(tmp_path, capsys):
    code = main(["plan", "--app", str(tmp_path / "nope.json"), "--profile", "also-nope.csv",
                 "--demand", "10", "--slices", "28"])
    assert code == 1
    assert "error" in capsys.readouterr().err
