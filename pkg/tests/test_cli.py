import json
import math
import subprocess
import sys

import numpy as np
import pytest

from catbreed.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, load_config, main


def write(path, text):
    path.write_text(text)
    return str(path)


def read_summary(out):
    return dict(line.split(": ", 1) for line in (out / "summary.txt").read_text().splitlines())


def test_breed_summary_and_artifacts(tmp_path):
    cfg = write(tmp_path / "c.yaml", "breed:\n  alpha: 1.0\n  fit: false\n  grid_points: 31\n")
    out = tmp_path / "out"
    assert main(["breed", "--config", cfg, "--out", str(out)]) == EXIT_OK
    summary = read_summary(out)
    assert float(summary["fidelity with SC+(sqrt(2) alpha)"]) == pytest.approx(0.99, abs=0.01)
    for name in ("report.json", "wigner_input.csv", "wigner_output.csv", "summary.txt"):
        assert (out / name).exists()
        meta = json.loads((out / (name + ".json")).read_text())
        assert {"config_hash", "seed", "version"} <= set(meta)


def test_breed_missing_key_leaves_no_files(tmp_path, capsys):
    cfg = write(tmp_path / "c.yaml", "breed:\n  fit: false\n")
    out = tmp_path / "out"
    assert main(["breed", "--config", cfg, "--out", str(out)]) == EXIT_CONFIG
    assert not out.exists()
    assert "breed.alpha" in capsys.readouterr().err


def test_unknown_keys_rejected(tmp_path):
    cfg = write(tmp_path / "c.yaml", "breed:\n  alpha: 1.0\n  colour: red\n")
    assert main(["breed", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    cfg = write(tmp_path / "d.yaml", "breed:\n  alpha: 1.0\nextras: {}\n")
    assert main(["breed", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_breed_byte_identical_reruns(tmp_path):
    cfg = write(tmp_path / "c.yaml", "breed:\n  alpha: 0.9\n  delta: 0.3\n  fit: false\n  grid_points: 21\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["breed", "--config", cfg, "--out", str(a), "--seed", "5"]) == EXIT_OK
    assert main(["breed", "--config", cfg, "--out", str(b), "--seed", "5"]) == EXIT_OK
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_flags_override_file(tmp_path):
    cfg = write(tmp_path / "c.yaml", "run:\n  seed: 1\n  dim: 30\nbreed:\n  alpha: 1.0\n")
    resolved = load_config("breed", cfg, {"seed": 9, "dim": None, "out": None, "format": None})
    assert resolved["run"]["seed"] == 9 and resolved["run"]["dim"] == 30


def test_numeric_failure_exit_code(tmp_path):
    cfg = write(tmp_path / "c.yaml", "breed:\n  alpha: 3.0\n  fit: false\n")
    out = tmp_path / "out"
    assert main(["breed", "--config", cfg, "--out", str(out), "--dim", "12"]) == EXIT_NUMERIC
    assert not out.exists()


def test_experiment_defaults_and_footnote(tmp_path):
    cfg = write(tmp_path / "c.yaml", "experiment:\n  grid_points: 21\n")
    out = tmp_path / "out"
    assert main(["experiment", "--config", cfg, "--out", str(out)]) == EXIT_OK
    assert 0.1 <= float(read_summary(out)["accept_prob"]) <= 0.3
    fits = (out / "fits.csv").read_text().splitlines()
    assert fits[0].startswith("state,correction,accept_prob")
    for stem in ("initial", "amplified"):
        assert (out / f"wigner_{stem}_corrected.csv").exists()
        assert (out / f"wigner_{stem}_measured.csv").exists()
    foot = tmp_path / "foot"
    assert main(["experiment", "--config", cfg, "--out", str(foot), "--footnote"]) == EXIT_OK
    assert read_summary(foot)["correction"] == "detection"


def test_experiment_ideal_collapses_to_breed(tmp_path):
    exp = write(tmp_path / "e.yaml", "experiment:\n  ideal_cat_alpha: 1.0\n  prep_mode_match: 1.0\n"
                                     "  detection_eta: 1.0\n  fit: false\n  grid_points: 21\n")
    brd = write(tmp_path / "b.yaml", "breed:\n  alpha: 1.0\n  delta: 0.3\n  fit: false\n  grid_points: 21\n")
    assert main(["experiment", "--config", exp, "--out", str(tmp_path / "e")]) == EXIT_OK
    assert main(["breed", "--config", brd, "--out", str(tmp_path / "b")]) == EXIT_OK
    assert read_summary(tmp_path / "e")["accept_prob"] == read_summary(tmp_path / "b")["accept_prob"]


def test_tomography_vacuum_self_test(tmp_path):
    cfg = write(tmp_path / "t.yaml", "tomography:\n  state: {kind: vacuum}\n  per_phase: 5000\n")
    out = tmp_path / "out"
    assert main(["tomography", "--config", cfg, "--out", str(out), "--dim", "10", "--seed", "3"]) == EXIT_OK
    assert float(read_summary(out)["fidelity with truth"]) >= 0.995
    meta = json.loads((out / "samples.csv.json").read_text())
    assert meta["seed"] == 3 and "dataset_seed" in meta
    recon = json.loads((out / "reconstruction.json.json").read_text())
    assert recon["dataset_seed"] == meta["dataset_seed"]


def test_tomography_ingests_csv_and_reports_bad_rows(tmp_path, capsys):
    good = tmp_path / "good.csv"
    rng = np.random.default_rng(0)
    good.write_text("theta,x\n" + "".join(f"{t},{x}\n" for t, x in zip(np.repeat([0.0, 1.0], 500), rng.normal(0, math.sqrt(0.5), 1000))))
    cfg = write(tmp_path / "t.yaml", f"tomography:\n  samples: {good}\n")
    assert main(["tomography", "--config", cfg, "--out", str(tmp_path / "o"), "--dim", "6"]) == EXIT_OK
    bad = tmp_path / "bad.csv"
    bad.write_text("theta,x\n0.0,0.1\n0.0,nope\n")
    cfg = write(tmp_path / "u.yaml", f"tomography:\n  samples: {bad}\n")
    assert main(["tomography", "--config", cfg, "--out", str(tmp_path / "p")]) != EXIT_OK
    assert "bad.csv:3" in capsys.readouterr().err
    assert not (tmp_path / "p").exists()


def test_sweep_outputs(tmp_path):
    cfg = write(tmp_path / "s.yaml", "sweep:\n  alphas: [1.0]\n  deltas: [1.0, 0.1, 0.3, 0.6]\n")
    out = tmp_path / "out"
    assert main(["sweep", "--config", cfg, "--out", str(out), "--dim", "30"]) == EXIT_OK
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "alpha,delta,eta,accept_prob,fit_alpha,fit_db,fidelity"
    rows = [list(map(float, ln.split(","))) for ln in lines[1:]]
    assert [r[1] for r in rows] == [0.1, 0.3, 0.6, 1.0]
    probs = [r[3] for r in rows]
    assert all(a < b for a, b in zip(probs, probs[1:]))
    cfg = write(tmp_path / "e.yaml", "sweep:\n  alphas: []\n  deltas: [0.3]\n")
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "x")]) == EXIT_CONFIG


def test_sweep_large_alpha_json(tmp_path):
    cfg = write(tmp_path / "s.yaml", "sweep:\n  alphas: [3.0]\n  deltas: [2.0]\n")
    out = tmp_path / "out"
    assert main(["sweep", "--config", cfg, "--out", str(out), "--dim", "60", "--format", "json"]) == EXIT_OK
    (row,) = json.loads((out / "sweep.json").read_text())
    assert row["accept_prob"] == pytest.approx(math.erf(2) / 2, abs=0.005)


def test_wigner_command(tmp_path):
    cfg = write(tmp_path / "w.yaml", "wigner:\n  state: {kind: fock, n: 1}\n  gnuplot: true\n  nx: 11\n  np: 11\n")
    out = tmp_path / "out"
    assert main(["wigner", "--config", cfg, "--out", str(out), "--dim", "8"]) == EXIT_OK
    assert float(read_summary(out)["minimum"]) == pytest.approx(-1 / math.pi, abs=1e-8)
    assert (out / "wigner.dat").exists()
    cfg = write(tmp_path / "v.yaml", "wigner:\n  state: {kind: blob}\n")
    assert main(["wigner", "--config", cfg, "--out", str(tmp_path / "x")]) == EXIT_CONFIG


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "catbreed", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "catbreed" in proc.stdout
