import csv
import json

import pytest
import yaml

from crgs.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from crgs.config import ConfigError, load_config
from crgs.gateset import PulseLibrary, gaussian_library


def run(tmp_path, sub, text, *extra, name="run.yaml"):
    cfg = tmp_path / name
    cfg.write_text(text)
    out = tmp_path / f"out_{sub}_{name.split('.')[0]}"
    return main([sub, "--config", str(cfg), "--out", str(out), *extra]), out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# configuration


def test_bad_type_reports_line(tmp_path, capsys):
    code, _ = run(tmp_path, "optimize", "layout: chain:2\ngate_set:\n  mode: crgs\n  amplitude_rad_per_ns: fast\n")
    assert code == EXIT_CONFIG
    assert "line 4" in capsys.readouterr().err


def test_unknown_key_reports_line(tmp_path, capsys):
    code, _ = run(tmp_path, "optimize", "layout: chain:2\nsolver:\n  max_outer: 3\n  speed: 11\n")
    assert code == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "line 4" in err and "solver.speed" in err


def test_missing_path(tmp_path, capsys):
    code, _ = run(tmp_path, "simulate", "library: gaussian\nsimulate:\n  circuit: nowhere.txt\n")
    assert code == EXIT_CONFIG
    assert "line 3" in capsys.readouterr().err


def test_unknown_subcommand(tmp_path):
    (tmp_path / "c.yaml").write_text("layout: chain:2\n")
    assert main(["train", "--config", str(tmp_path / "c.yaml")]) == EXIT_CONFIG


def test_range_expansion(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("benchmark:\n  repetitions: {start: 0, stop: 200, step: 20}\n")
    cfg = load_config(p, "benchmark")
    assert cfg.benchmark.repetitions == list(range(0, 201, 20))


def test_yaml_syntax_error(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("layout: [chain\n")
    with pytest.raises(ConfigError):
        load_config(p, "optimize")


# optimize


def test_optimize_gaussian_heavy_hex(tmp_path):
    text = "layout: heavy-hex:1x1\ngate_set:\n  mode: gaussian\n"
    code, out = run(tmp_path, "optimize", text)
    assert code == EXIT_OK
    lib = PulseLibrary.load(out / "library.json")
    assert len(lib.entries) == 6
    report = yaml.safe_load((out / "report.yaml").read_text())
    assert report["solve"] is None and report["converged"]
    code, out2 = run(tmp_path, "optimize", text, name="again.yaml")
    assert (out / "report.yaml").read_bytes() == (out2 / "report.yaml").read_bytes()


def test_optimize_nonconvergence_exit_code(tmp_path):
    text = "layout: chain:1\ngate_set:\n  knots: 20\n  amplitude_rad_per_ns: 0.001\nsolver:\n  max_outer: 3\n"
    code, out = run(tmp_path, "optimize", text)
    assert code == EXIT_NUMERIC
    assert yaml.safe_load((out / "report.yaml").read_text())["converged"] is False


# sweep


def test_sweep_grid_rows_and_idempotence(tmp_path):
    text = "layout: chain:1\ngate_set:\n  knots: 16\nsweep:\n  amplitudes_rad_per_ns: [0.1, 0.2]\n  curvatures_rad_per_ns3: [2.0e-4, 4.0e-4]\n"
    code, out = run(tmp_path, "sweep", text)
    assert code == EXIT_OK
    rows = read_csv(out / "sweep.csv")
    assert len(rows) == 4
    assert {"objective", "min_fidelity", "converged"} <= set(rows[0])
    _, out2 = run(tmp_path, "sweep", text, name="again.yaml")
    assert (out / "sweep.csv").read_bytes() == (out2 / "sweep.csv").read_bytes()


def test_codesign_rows(tmp_path):
    text = (
        "layout: chain:2\n"
        "sweep:\n  kind: codesign\n  factors: [0.5, 1.0, 2.0]\n"
        "  libraries: {gaussian: gaussian, square: square}\n  robust_library: gaussian\n  robust_entry: red:sx\n"
    )
    code, out = run(tmp_path, "sweep", text)
    assert code == EXIT_OK
    rows = read_csv(out / "codesign.csv")
    assert len(rows) == 3 * 2 * 2
    assert {r["ecr"] for r in rows} == {"plain", "robust"}


# simulate and benchmark


def test_simulate_populations(tmp_path):
    (tmp_path / "bell.txt").write_text("sx 0\necr 0 1\n")
    code, out = run(tmp_path, "simulate", "layout: chain:2\nlibrary: gaussian\nsimulate:\n  circuit: bell.txt\n")
    assert code == EXIT_OK
    rows = read_csv(out / "populations.csv")
    assert [r["parameter"] for r in rows] == ["00", "01", "10", "11"]
    assert sum(float(r["value"]) for r in rows) == pytest.approx(1.0)


def test_simulate_parse_error(tmp_path, capsys):
    (tmp_path / "bad.txt").write_text("x 0\nswap 0 1\n")
    code, _ = run(tmp_path, "simulate", "layout: chain:2\nlibrary: gaussian\nsimulate:\n  circuit: bad.txt\n")
    assert code == EXIT_CONFIG
    assert "line 2" in capsys.readouterr().err


def test_xy4_benchmark_rows_and_determinism(tmp_path):
    text = "layout: chain:2\nlibrary: gaussian\nbenchmark:\n  protocol: xy4\n  repetitions: {start: 0, stop: 200, step: 20}\n  shots: 2048\n"
    code, out = run(tmp_path, "benchmark", text)
    assert code == EXIT_OK
    assert len(read_csv(out / "xy4.csv")) == 11
    report = yaml.safe_load((out / "xy4_fit.yaml").read_text())
    assert {"free", "J_fixed_zero", "residual_ratio"} <= set(report)
    _, out2 = run(tmp_path, "benchmark", text, name="again.yaml")
    assert (out / "xy4.csv").read_bytes() == (out2 / "xy4.csv").read_bytes()


def test_seed_override_changes_counts(tmp_path):
    text = "layout: chain:2\nlibrary: gaussian\nbenchmark:\n  protocol: xy4\n  repetitions: [0, 5, 10, 15]\n  shots: 512\n"
    _, a = run(tmp_path, "benchmark", text, "--seed", "1")
    _, b = run(tmp_path, "benchmark", text, "--seed", "2", name="other.yaml")
    assert (a / "xy4.csv").read_bytes() != (b / "xy4.csv").read_bytes()


def test_tfim_benchmark(tmp_path):
    text = "layout: chain:2\nlibrary: gaussian\nbenchmark:\n  protocol: tfim\n  repetitions: {start: 1, stop: 8}\n  bootstrap: 50\n"
    code, out = run(tmp_path, "benchmark", text)
    assert code == EXIT_OK
    rows = read_csv(out / "tfim.csv")
    assert [int(r["parameter"]) for r in rows] == list(range(1, 9))
    assert all(float(r["std"]) >= 0 for r in rows)


def test_rc_benchmark(tmp_path):
    text = "layout: chain:2\nlibrary: gaussian\ndevice:\n  zz_ghz: 0.0\nbenchmark:\n  protocol: rc\n  lengths: [1, 5, 10, 20]\n  circuits: 2\n"
    code, out = run(tmp_path, "benchmark", text)
    assert code == EXIT_OK
    fits = yaml.safe_load((out / "rc_fit.yaml").read_text())["fits"]
    assert set(fits) == {"q0", "q1"}
    assert all(0 <= f["epc"] < 0.01 for f in fits.values())


def test_benchmark_missing_entry(tmp_path, capsys):
    lib = gaussian_library()
    for k in [k for k in lib.entries if k.endswith(":x")]:
        del lib.entries[k]
    lib.save(tmp_path / "partial.json")
    text = "layout: chain:2\nlibrary: partial.json\nbenchmark:\n  protocol: xy4\n  repetitions: [0, 1, 2, 3]\n"
    code, _ = run(tmp_path, "benchmark", text)
    assert code == EXIT_CONFIG


# calibrate


def test_calibrate_ideal(tmp_path):
    text = "layout: chain:1\nlibrary: gaussian\ncalibrate:\n  noise: false\n  initial_error: 0.05\n"
    code, out = run(tmp_path, "calibrate", text)
    assert code == EXIT_OK
    recs = {p.name: yaml.safe_load(p.read_text()) for p in out.glob("calibration_*.yaml")}
    assert set(recs) == {"calibration_red_sx.yaml", "calibration_red_x.yaml"}
    for r in recs.values():
        assert abs(r["history"][-1]["delta_theta"]) < 1e-3
    assert recs["calibration_red_sx.yaml"]["odd_repetitions_only"]
    lib = json.loads((out / "library_calibrated.json").read_text())
    assert "calibration" in lib["metadata"]
    _, out2 = run(tmp_path, "calibrate", text, name="again.yaml")
    for name in recs:
        assert (out / name).read_bytes() == (out2 / name).read_bytes()
