import csv
import json
import math
import os

import numpy as np
import pytest

from whichpath_sim import output
from whichpath_sim.cli import main, parse_value
from whichpath_sim.config import ConfigError, load, parse_overrides


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def read_json(path):
    doc = json.loads(path.read_text())
    output.validate(doc)
    return doc


# ---------------------------------------------------------------- verify

def test_verify_default(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "verify", f"--output.dir={tmp_path}")
    doc = json.loads(out)
    output.validate(doc)
    assert code == 0
    assert doc["is_isometry"] == "pass" and doc["all_passed"]
    assert doc["mutual_information_bits"] <= 1e-12


def test_verify_collapsed_expected_failure(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "verify", "--variant.kind=collapsed", f"--output.dir={tmp_path}")
    doc = json.loads(out)
    assert code == 0 and doc["is_isometry"] == "fail"
    u2 = doc["isometry"]["collapsed"]["U2"]
    assert u2["result"] == "fail" and u2["expected"] == "fail" and u2["gram_defect"] >= 0.999


def test_verify_marker_overlap(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "verify", "--variant.kind=marker_overlap", "--variant.chi_rad=0.4")
    assert code == 0 and json.loads(out)["gamma"] == pytest.approx(math.cos(0.4))


def test_negative_wavelength_names_field(capsys):
    code, _, err = run_cli(capsys, "verify", "--geometry.wavelength_m=-1e-7")
    assert code == 2 and "geometry.wavelength_m" in err


@pytest.mark.parametrize("args, field", [
    (["--variant.kind=marker_overlap"], "variant.chi_rad"),
    (["--variant.kind=marker_overlap", "--variant.chi_rad=2.0"], "variant.chi_rad"),
    (["--variant.chi_rad=0.3"], "variant.chi_rad"),
    (["--variant.kind=bogus"], "variant.kind"),
    (["--geometry.nope=1"], "geometry.nope"),
    (["--run.n_samples=0"], "run.n_samples"),
    (["--output.formats=xml"], "output.formats"),
    (["--geometry.detector.count=0"], "geometry.detector.count"),
])
def test_config_errors_exit_2(capsys, args, field):
    code, _, err = run_cli(capsys, "pattern", *args)
    assert code == 2 and field in err


def test_unknown_command_exits_2(capsys):
    assert run_cli(capsys, "frobnicate")[0] == 2


# ---------------------------------------------------------------- pattern

def test_pattern_marker_overlap_chi0(capsys, tmp_path):
    code, _, _ = run_cli(capsys, "pattern", "--variant.kind=marker_overlap", "--variant.chi_rad=0",
                         f"--output.dir={tmp_path}")
    assert code == 0
    doc = read_json(tmp_path / "report.json")
    assert abs(doc["visibility"] - 1) <= 1e-6
    assert abs(doc["fringe_spacing_m"] - 5e-3) <= 25e-3 / 63


def test_pattern_paper_exact_flat(capsys, tmp_path):
    assert run_cli(capsys, "pattern", f"--output.dir={tmp_path}")[0] == 0
    text = (tmp_path / "pattern.csv").read_text()
    assert len(text.splitlines()) == 65
    rows = read_csv(tmp_path / "pattern.csv")
    assert list(rows[0]) == ["element_index", "position_m", "probability"]
    assert max(abs(float(r["probability"]) - 1 / 64) for r in rows) <= 1e-15
    doc = read_json(tmp_path / "report.json")
    assert doc["visibility"] <= 1e-9 and doc["fringe_spacing_m"] is None


def test_pattern_csv_round_trips_doubles(capsys, tmp_path):
    from whichpath_sim.analysis import click_distribution
    from whichpath_sim.interferometer import Geometry, MarkerOverlap, evolve

    run_cli(capsys, "pattern", "--variant.kind=marker_overlap", "--variant.chi_rad=0.3",
            f"--output.dir={tmp_path}")
    probs = click_distribution(evolve(MarkerOverlap(0.3), Geometry.default())).probs
    got = np.array([float(r["probability"]) for r in read_csv(tmp_path / "pattern.csv")])
    assert np.array_equal(got, probs)


def test_formats_json_only(capsys, tmp_path):
    run_cli(capsys, "pattern", "--output.formats=json", f"--output.dir={tmp_path}")
    assert (tmp_path / "report.json").exists() and not (tmp_path / "pattern.csv").exists()


def test_dephasing_override(capsys, tmp_path):
    run_cli(capsys, "pattern", "--variant.kind=marker_overlap", "--variant.chi_rad=0",
            "--dephasing_sigma_rad=1.0", f"--output.dir={tmp_path}")
    assert read_json(tmp_path / "report.json")["visibility"] == pytest.approx(math.exp(-0.5), abs=1e-5)


# ---------------------------------------------------------------- eraser

def test_eraser_outputs(capsys, tmp_path):
    assert run_cli(capsys, "eraser", "--run.eraser_phi_rad=0.5", f"--output.dir={tmp_path}")[0] == 0
    doc = read_json(tmp_path / "report.json")
    assert abs(doc["visibility_plus"] - 1) <= 1e-9 and abs(doc["visibility_minus"] - 1) <= 1e-9
    assert doc["decomposition_residual"] <= 1e-12 and doc["marginal_flatness"] <= 1e-12
    rows = read_csv(tmp_path / "eraser.csv")
    assert len(rows) == 64 and doc["phi_rad"] == 0.5


def test_eraser_needs_paper_exact(capsys, tmp_path):
    code, _, err = run_cli(capsys, "eraser", "--variant.kind=collapsed", f"--output.dir={tmp_path}")
    assert code == 2 and "paper_exact" in err


# ---------------------------------------------------------------- sample

def test_sample_byte_identical(capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run_cli(capsys, "sample", "--run.seed=42", "--run.n_samples=20000", f"--output.dir={d}")[0] == 0
    assert (a / "events.csv").read_bytes() == (b / "events.csv").read_bytes()
    assert (a / "histogram.csv").read_bytes() == (b / "histogram.csv").read_bytes()
    doc = read_json(a / "gof.json")
    assert doc["p_value"] > 0.001 and doc["measure_internal"] == "none"
    assert doc["empirical_mutual_information_bits"] is None


def test_sample_chunking_byte_identical(capsys, tmp_path):
    for d, extra in ((tmp_path / "a", []), (tmp_path / "b", ["--chunk", "777"])):
        run_cli(capsys, "sample", *extra, "--run.n_samples=5000", "--run.measure_internal=ab",
                f"--output.dir={d}")
    assert (tmp_path / "a/events.csv").read_bytes() == (tmp_path / "b/events.csv").read_bytes()


def test_sample_internal_column(capsys, tmp_path):
    run_cli(capsys, "sample", "--run.n_samples=2000", "--run.measure_internal=rotated",
            "--run.eraser_phi_rad=0", f"--output.dir={tmp_path}")
    rows = read_csv(tmp_path / "events.csv")
    assert {r["internal_outcome"] for r in rows} == {"+", "-"}
    hist = read_csv(tmp_path / "histogram.csv")
    assert sum(int(r["count_plus"]) + int(r["count_minus"]) for r in hist) == 2000
    assert read_json(tmp_path / "gof.json")["measure_internal"] == "rotated"


def test_env_seed_precedence(capsys, tmp_path, monkeypatch):
    cfg = tmp_path / "run.toml"
    cfg.write_text("[run]\nseed = 1\nn_samples = 10\n")
    monkeypatch.setenv("WHICHPATH_SIM_SEED", "5")
    run_cli(capsys, "sample", "--config", str(cfg), f"--output.dir={tmp_path / 'env'}")
    assert read_json(tmp_path / "env/gof.json")["seed"] == 5
    run_cli(capsys, "sample", "--config", str(cfg), "--run.seed=9", f"--output.dir={tmp_path / 'cli'}")
    assert read_json(tmp_path / "cli/gof.json")["seed"] == 9


def test_bad_env_seed(capsys, monkeypatch):
    monkeypatch.setenv("WHICHPATH_SIM_SEED", "x")
    code, _, err = run_cli(capsys, "sample")
    assert code == 2 and "WHICHPATH_SIM_SEED" in err


# ---------------------------------------------------------------- sweep

def test_sweep_chi(capsys, tmp_path):
    assert run_cli(capsys, "sweep", "--sweep", "chi_rad=0:pi/2:9", f"--output.dir={tmp_path}")[0] == 0
    rows = read_csv(tmp_path / "sweep.csv")
    assert len(rows) == 9
    V = [float(r["visibility"]) for r in rows]
    D = [float(r["distinguishability"]) for r in rows]
    assert all(a > b for a, b in zip(V, V[1:])) and all(a < b for a, b in zip(D, D[1:]))
    assert max(abs(float(r["v2_plus_d2"]) - 1) for r in rows) <= 2e-6
    assert float(rows[-1]["value"]) == pytest.approx(math.pi / 2)


def test_sweep_sigma(capsys, tmp_path):
    run_cli(capsys, "sweep", "--sweep=dephasing_sigma_rad=0:2:5", "--variant.kind=marker_overlap",
            "--variant.chi_rad=0", f"--output.dir={tmp_path}")
    for r in read_csv(tmp_path / "sweep.csv"):
        s = float(r["value"])
        assert abs(float(r["visibility"]) - math.exp(-s * s / 2)) <= 1e-5


def test_sweep_slit_separation(capsys, tmp_path):
    run_cli(capsys, "sweep", "--sweep=slit_separation_m=50e-6:200e-6:4", "--variant.kind=marker_overlap",
            "--variant.chi_rad=0", f"--output.dir={tmp_path}")
    assert len(read_csv(tmp_path / "sweep.csv")) == 4


@pytest.mark.parametrize("arg", ["nope=0:1:3", "chi_rad=0:1", "chi_rad=0:1:x", "chi_rad=0:1:0", "chi_rad"])
def test_sweep_bad_argument(capsys, tmp_path, arg):
    assert run_cli(capsys, "sweep", "--sweep", arg, f"--output.dir={tmp_path}")[0] == 2


def test_sweep_requires_argument(capsys, tmp_path):
    assert run_cli(capsys, "sweep", f"--output.dir={tmp_path}")[0] == 2


@pytest.mark.parametrize("text, value", [("pi/2", math.pi / 2), ("3*pi/8", 3 * math.pi / 8),
                                         ("-pi", -math.pi), ("0.25", 0.25), ("2pi", 2 * math.pi)])
def test_parse_value(text, value):
    assert parse_value(text) == pytest.approx(value)


# ---------------------------------------------------------------- config and I/O

def test_toml_config_file(capsys, tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text(f"""
dephasing_sigma_rad = 0.0
[geometry]
wavelength_m = 500e-9
slit_separation_m = 200e-6
screen_distance_m = 1.0
[geometry.detector]
positions_m = [-1e-3, 0.0, 1e-3]
[variant]
kind = "marker_overlap"
chi_rad = 0.0
[output]
dir = "{tmp_path / 'o'}"
""")
    assert run_cli(capsys, "pattern", "--config", str(cfg))[0] == 0
    assert read_json(tmp_path / "o/report.json")["n_elements"] == 3


def test_missing_config_file(capsys, tmp_path):
    code, _, err = run_cli(capsys, "verify", "--config", str(tmp_path / "missing.toml"))
    assert code == 2 and "--config" in err


def test_invalid_toml(capsys, tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[geometry\n")
    assert run_cli(capsys, "verify", "--config", str(bad))[0] == 2


def test_io_error_exits_3(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, err = run_cli(capsys, "pattern", f"--output.dir={blocker / 'sub'}")
    assert code == 3 and "I/O" in err


def test_overrides_parsing():
    got = parse_overrides(["--run.seed=7", "--variant.kind", "collapsed", "--geometry.detector.span_m=1e-2"])
    assert got == {"run.seed": 7, "variant.kind": "collapsed", "geometry.detector.span_m": 0.01}
    with pytest.raises(ConfigError):
        parse_overrides(["stray"])


def test_load_defaults():
    cfg = load(env={})
    assert cfg.geometry.n == 64 and cfg.variant.name == "paper_exact" and cfg.run.seed == 0


def test_schema_rejects_extra_fields():
    import jsonschema
    with pytest.raises(jsonschema.ValidationError):
        output.validate({"kind": "pattern", "surprise": 1})


def test_atomic_write_leaves_no_temp_files(tmp_path):
    output.write_json(tmp_path / "x.json", {"a": 1})
    assert os.listdir(tmp_path) == ["x.json"]
