import json
from pathlib import Path

import numpy as np
import pytest

from platoon_setm import cli, report
from platoon_setm.engine import run
from platoon_setm.report import ReportIOError, render_csvs, write_files
from platoon_setm.scenario import dump_document, shipped_document, validate_document

CSV_NAMES = {"states.csv", "errors.csv", "control.csv", "spacing.csv", "weights.csv", "lyapunov.csv", "events.csv",
             "plot_tracking.csv", "plot_distances.csv", "plot_velocity_audit.csv", "plot_intervals.csv"}


def short_doc(duration=1.0):
    doc = shipped_document()
    doc["simulation"]["duration_s"] = duration
    return doc


@pytest.fixture()
def scen(tmp_path):
    path = tmp_path / "short.yaml"
    path.write_text(dump_document(short_doc()))
    return path


def main(*argv):
    return cli.main([str(a) for a in argv])


def test_validate_ok(scen, capsys):
    assert main("validate", scen) == 0
    assert "4 vehicles" in capsys.readouterr().out


def test_validate_shipped_file(capsys):
    from platoon_setm.scenario import shipped_path
    assert main("validate", shipped_path()) == 0


def test_validate_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("simulation: [1, 2\n")
    assert main("validate", bad) == cli.EXIT_PARSE == 2
    assert "[parse]" in capsys.readouterr().err


def test_validate_rule_violation(tmp_path, capsys):
    doc = short_doc()
    doc["setm"].update(delta1=0.5, delta2=0.05)
    path = tmp_path / "x.yaml"
    path.write_text(dump_document(doc))
    assert main("validate", path) == cli.EXIT_INVALID == 3
    assert "[setm.delta-order]" in capsys.readouterr().err


def test_missing_file_is_io_error(tmp_path):
    assert main("validate", tmp_path / "nope.yaml") == cli.EXIT_IO == 5


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["run", "x.yaml"],
                                  ["sweep", "x.yaml", "--param", "mass", "--values", "1", "--out", "o"],
                                  ["sweep", "x.yaml", "--param", "k2", "--values", "a,b", "--out", "o"]])
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as info:
        cli.main(argv)
    assert info.value.code == cli.EXIT_USAGE


def test_bad_stride(scen, tmp_path):
    assert main("run", scen, "--out", tmp_path / "o", "--stride", "0") == cli.EXIT_USAGE


def test_exit_codes_distinct():
    codes = [cli.EXIT_OK, cli.EXIT_PARSE, cli.EXIT_INVALID, cli.EXIT_FAULT, cli.EXIT_IO, cli.EXIT_USAGE]
    assert len(set(codes)) == len(codes)


def test_run_writes_report(scen, tmp_path, capsys):
    out = tmp_path / "out"
    assert main("run", scen, "--out", out) == 0
    assert {p.name for p in out.iterdir()} == CSV_NAMES | {"summary.json"}
    summary = json.loads((out / "summary.json").read_text())
    assert summary["schema_version"] == 1 and summary["ticks"] == 1000
    table = summary["trigger_table"]
    assert len(table) == 4 and [r["vehicle"] for r in table] == [1, 2, 3, 4]
    for r in table:
        assert r["lon_reduction"] == pytest.approx(100 * (1 - r["lon_triggers"] / 1000))
    assert summary["audit"]["violations"] == 0
    assert "lon red. %" in capsys.readouterr().out


def test_rerun_is_byte_identical(scen, tmp_path):
    out = tmp_path / "out"
    assert main("run", scen, "--out", out) == 0
    first = {n: (out / n).read_bytes() for n in CSV_NAMES}
    assert main("run", scen, "--out", out) == 0
    for n in CSV_NAMES:
        assert (out / n).read_bytes() == first[n], n


def test_run_fault_exit(tmp_path, capsys):
    doc = short_doc()
    doc["controller"]["k2"] = 1e300
    path = tmp_path / "f.yaml"
    path.write_text(dump_document(doc))
    with np.errstate(all="ignore"):
        assert main("run", path, "--out", tmp_path / "o") == cli.EXIT_FAULT == 4
    assert "tick" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_unwritable_output_is_clean_error(scen, tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main("run", scen, "--out", blocker / "sub") == cli.EXIT_IO
    assert "cannot write" in capsys.readouterr().err


def test_failed_write_leaves_no_partial_files(tmp_path, monkeypatch):
    out = tmp_path / "out"
    calls = {"n": 0}
    real = Path.write_text

    def flaky(self, *a, **k):
        calls["n"] += 1
        if calls["n"] == 3:
            raise OSError("disk full")
        return real(self, *a, **k)

    monkeypatch.setattr(Path, "write_text", flaky)
    with pytest.raises(ReportIOError):
        write_files(out, {f"f{i}.csv": "a\n" for i in range(5)})
    assert list(out.iterdir()) == []


def test_csv_layout():
    sc = validate_document(short_doc(0.1))
    log = run(sc)
    files = render_csvs(log, sc, stride=10)
    assert set(files) == CSV_NAMES
    for name, text in files.items():
        lines = text.splitlines()
        assert lines[0] == "# schema_version=1", name
    states = files["states.csv"].splitlines()
    assert states[1] == "t,vehicle,p_lon,p_lat,v_lon,v_lat"
    assert len(states) == 2 + 10 * 4
    data = np.loadtxt(files["states.csv"].splitlines()[2:], delimiter=",")
    np.testing.assert_array_equal(data[:4, 1], [1, 2, 3, 4])
    np.testing.assert_allclose(data[4:8, 0], 0.01)
    np.testing.assert_allclose(data[:, 2:4], log.p[::10].reshape(-1, 2), rtol=1e-11)
    events = np.loadtxt(files["events.csv"].splitlines()[2:], delimiter=",", ndmin=2)
    assert events.shape[0] == log.triggered.sum()
    assert np.all(np.diff(events[:, 2]) >= 0)
    assert files["plot_distances.csv"].splitlines()[1] == "t,d_min,d_max,d1_2,d2_3,d3_4"
    with pytest.raises(ValueError):
        render_csvs(log, sc, stride=0)


def test_sweep_single_value_and_skip(scen, tmp_path, capsys):
    out = tmp_path / "sw"
    assert main("sweep", scen, "--param", "k2", "--values", "0.6,60", "--out", out) == 0
    rows = json.loads((out / "sweep.json").read_text())
    assert [r["status"] for r in rows] == ["skipped", "ok"]
    assert rows[0]["rules"] == ["gains.k2-theorem1"]
    assert (out / "k2=60" / "summary.json").exists() and not (out / "k2=0.6").exists()
    csv = (out / "sweep.csv").read_text().splitlines()
    assert csv[0].startswith("value,status,triggers_total") and len(csv) == 3
    assert "gains.k2-theorem1" in capsys.readouterr().err


def test_sweep_row_matches_run(scen, tmp_path):
    out = tmp_path / "sw"
    assert main("sweep", scen, "--param", "delta2", "--values", "0.5", "--out", out) == 0
    row = json.loads((out / "sweep.json").read_text())[0]
    summary = json.loads((out / "delta2=0.5" / "summary.json").read_text())
    assert row["triggers_total"] == summary["triggers_total"]
    assert row["lyapunov_floor"] == pytest.approx(summary["lyapunov"]["floor_final_10s"])
