import json
import math

from marktau.cli import main


def _run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def _read_artifact(path):
    """Split a CSV artifact into (config dict, header, data rows)."""
    lines = path.read_text(encoding="utf-8").splitlines()
    prefix = "# marktau format=1 config="
    assert lines[0].startswith(prefix)
    config = json.loads(lines[0][len(prefix):])
    header = lines[1].split(",")
    rows = [line.split(",") for line in lines[2:]]
    return config, header, rows


def test_estimate_artifacts(tmp_path, capsys, trial_files):
    csv_path, meta_path = trial_files
    out = tmp_path / "est.csv"
    code, _, err = _run(
        capsys,
        "estimate", "--input", str(csv_path), "--meta", str(meta_path),
        "--interval", "0.2,0.45", "--grid-points", "6", "--out", str(out),
    )
    assert code == 0, err
    config, header, rows = _read_artifact(out)
    assert header == [
        "v", "tau1", "tau0", "tau", "sigma2", "ci_lower", "ci_upper",
        "events1", "events0",
    ]
    assert len(rows) == 6
    for row in rows:
        floats = [float(x) for x in row[:7]]
        assert all(math.isfinite(x) for x in floats)
        assert floats[5] <= floats[3] <= floats[6]
        assert int(row[7]) >= 0 and int(row[8]) >= 0

    summary = json.loads(out.with_suffix(".json").read_text(encoding="utf-8"))
    assert summary["format_version"] == 1
    assert summary["config"] == config
    assert summary["n"] == summary["n0"] + summary["n1"]
    assert summary["h"] > 0
    assert summary["observed_events"] >= 20
    assert summary["dropped_rows"] == 0
    assert "input_sha256" in config
    assert "threads" not in config and "input" not in config


def test_estimate_rejects_nonpositive_bandwidth(tmp_path, capsys, trial_files):
    csv_path, meta_path = trial_files
    code, _, err = _run(
        capsys,
        "estimate", "--input", str(csv_path), "--meta", str(meta_path),
        "--interval", "0.2,0.45", "--bandwidth", "0",
        "--out", str(tmp_path / "x.csv"),
    )
    assert code == 1
    assert "bandwidth must be positive" in err


def test_estimate_requires_scaled_marks(tmp_path, capsys, trial_files):
    csv_path, _ = trial_files
    # without the sidecar the raw marks are far outside [0,1]
    code, _, err = _run(
        capsys,
        "estimate", "--input", str(csv_path),
        "--interval", "0.2,0.45", "--out", str(tmp_path / "x.csv"),
    )
    assert code == 1
    assert "fails validation" in err
    assert "mark in [0,1]" in err


def test_estimate_requires_interval_or_grid(tmp_path, capsys, trial_files):
    csv_path, meta_path = trial_files
    code, _, err = _run(
        capsys,
        "estimate", "--input", str(csv_path), "--meta", str(meta_path),
        "--out", str(tmp_path / "x.csv"),
    )
    assert code == 1
    assert "pass --interval" in err


def test_estimate_dumps_censoring_curves(tmp_path, capsys, trial_files):
    csv_path, meta_path = trial_files
    out = tmp_path / "est.csv"
    prefix = tmp_path / "cens"
    code, _, _ = _run(
        capsys,
        "estimate", "--input", str(csv_path), "--meta", str(meta_path),
        "--interval", "0.2,0.45", "--out", str(out),
        "--dump-censoring", str(prefix),
    )
    assert code == 0
    for a in (0, 1):
        _, header, rows = _read_artifact(tmp_path / f"cens_arm{a}.csv")
        assert header == ["t", "survival"]
        assert [float(x) for x in rows[0]] == [0.0, 1.0]
        surv = [float(r[1]) for r in rows]
        times = [float(r[0]) for r in rows]
        assert times == sorted(times)
        assert all(b <= a for a, b in zip(surv, surv[1:]))


def test_test_report_and_determinism(tmp_path, capsys, trial_files):
    csv_path, meta_path = trial_files
    out = tmp_path / "report.json"
    args = (
        "test", "--input", str(csv_path), "--meta", str(meta_path),
        "--interval", "0.2,0.45", "--grid-points", "5", "--kind", "global",
        "--resamples", "60", "--seed", "11", "--out", str(out),
    )
    code, stdout, _ = _run(capsys, *args)
    assert code == 0
    assert "global test:" in stdout
    assert "reject=" in stdout
    report = json.loads(out.read_text(encoding="utf-8"))
    for key in ("format_version", "config", "kind", "statistic",
                "critical_value", "p_value", "reject", "alpha", "B", "seed",
                "grid", "excluded_points", "skipped_pairs", "h", "n"):
        assert key in report, key
    assert report["kind"] == "global"
    assert report["B"] == 60 and report["seed"] == 11
    first = out.read_bytes()

    code, _, _ = _run(capsys, *args)
    assert code == 0
    assert out.read_bytes() == first

    reseeded = tmp_path / "report2.json"
    code, _, _ = _run(capsys, *args[:-2], "--seed", "12", "--out", str(reseeded))
    assert code == 0
    a = json.loads(out.read_text(encoding="utf-8"))
    b = json.loads(reseeded.read_text(encoding="utf-8"))
    assert a["statistic"] == b["statistic"]
    assert a["critical_value"] != b["critical_value"]


def test_constancy_needs_a_real_grid(tmp_path, capsys, trial_files):
    csv_path, meta_path = trial_files
    code, _, err = _run(
        capsys,
        "test", "--input", str(csv_path), "--meta", str(meta_path),
        "--interval", "0.2,0.45", "--grid", "0.3", "--kind", "constancy",
        "--resamples", "20",
    )
    assert code == 1
    assert "at least 2 usable" in err


def test_simulate_artifact(tmp_path, capsys):
    out = tmp_path / "metrics.csv"
    code, _, err = _run(
        capsys,
        "simulate", "--c3", "-1", "--n", "150", "--reps", "4", "--seed", "5",
        "--censor-mean0", "5.44", "--censor-mean1", "5.76",
        "--grid", "0.3,0.5,0.7", "--interval", "0.1,0.9", "--out", str(out),
    )
    assert code == 0, err
    config, header, rows = _read_artifact(out)
    assert header == [
        "v", "true_tau", "bias", "bias_se", "ratio", "ratio_se",
        "coverage", "coverage_se", "reps", "n",
    ]
    assert len(rows) == 3
    assert config["reps"] == 4 and config["n"] == 150
    for row in rows:
        assert int(row[8]) == 4 and int(row[9]) == 150


def test_power_artifact(tmp_path, capsys):
    out = tmp_path / "power.csv"
    code, _, err = _run(
        capsys,
        "power", "--kind", "global", "--c3-range=-2:0:2",
        "--n", "150", "--reps", "3", "--resamples", "20", "--seed", "5",
        "--censor-mean0", "5.44", "--censor-mean1", "5.5",
        "--grid", "0.3,0.5,0.7", "--interval", "0.1,0.9", "--out", str(out),
    )
    assert code == 0, err
    config, header, rows = _read_artifact(out)
    assert header == ["c3", "rate", "se", "rejections", "reps", "n"]
    assert [float(r[0]) for r in rows] == [-2.0, 0.0]
    assert config["kind"] == "global" and config["B"] == 20
    for row in rows:
        assert 0.0 <= float(row[1]) <= 1.0


def test_drop_missing_marks_flag(tmp_path, capsys):
    text = "y,delta,mark,a\n1.0,1,,1\n2.0,0,,0\n1.5,1,0.6,0\n3.0,1,0.2,1\n"
    path = tmp_path / "holes.csv"
    path.write_text(text, encoding="utf-8")
    out = tmp_path / "est.csv"
    base = (
        "estimate", "--input", str(path), "--grid", "0.2,0.6",
        "--interval", "0.1,0.9", "--bandwidth", "0.3", "--out", str(out),
    )
    code, _, err = _run(capsys, *base)
    assert code == 1
    assert "mark absent" in err

    code, _, err = _run(capsys, *base, "--drop-missing-marks")
    assert code == 0, err
    summary = json.loads(out.with_suffix(".json").read_text(encoding="utf-8"))
    assert summary["dropped_rows"] == 1
    assert summary["n"] == 3


def test_small_event_count_warns(tmp_path, capsys):
    rows = ["y,delta,mark,a"]
    rows += [f"{1.0 + i / 10.0},1,{0.1 + 0.08 * i},{i % 2}" for i in range(8)]
    path = tmp_path / "tiny.csv"
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    code, _, err = _run(
        capsys,
        "estimate", "--input", str(path), "--grid", "0.3,0.5",
        "--interval", "0.1,0.9", "--bandwidth", "0.3",
        "--out", str(tmp_path / "est.csv"),
    )
    assert code == 0
    assert "only 8 observed events" in err


def test_malformed_csv_reports_line(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("y,delta,mark,a\n1.0,7,0.3,1\n", encoding="utf-8")
    code, _, err = _run(
        capsys,
        "estimate", "--input", str(path), "--grid", "0.3,0.5",
        "--interval", "0.1,0.9", "--out", str(tmp_path / "est.csv"),
    )
    assert code == 1
    assert err.startswith("error:")
    assert "line 2" in err
