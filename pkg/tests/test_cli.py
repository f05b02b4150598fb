import json
import subprocess
import sys

import pytest

from phononkin.cli import main
from phononkin.reporting import read_csv


def run(argv, tmp_path, capsys):
    code = main(list(argv) + ["--out", str(tmp_path / "out")])
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_no_arguments_prints_usage(capsys):
    assert main([]) == 1
    assert "usage" in capsys.readouterr().err


def test_bad_arguments_give_error_record(tmp_path, capsys):
    code, _, err = run(["boltzmann", "--N", "notanint"], tmp_path, capsys)
    assert code == 1
    assert "phononkin: error" in err and "exit=1" in err
    code, _, err = run(["boltzmann", "--model", "bogus"], tmp_path, capsys)
    assert code == 1 and "exit=1" in err
    code, _, err = run(["diagrams"], tmp_path, capsys)
    assert code == 1 and "ConfigError" in err


def test_dispersion_check_nn(tmp_path, capsys):
    code, out, _ = run(["dispersion-check", "--model", "nn", "--omega0", "1", "--levels", "4,6"], tmp_path, capsys)
    assert code == 0
    assert "min_gap > 0" in out
    meta = read_csv(tmp_path / "out" / "dispersion.txt")[0]
    assert {"tool", "config_hash", "seed"} <= set(meta)


def test_diagrams_census(tmp_path, capsys):
    code, out, _ = run(["diagrams", "--order", "2", "--census"], tmp_path, capsys)
    assert code == 0
    assert "diagrams=57600" in out
    ex = [line for line in out.splitlines() if line.startswith("example:")]
    assert len(ex) == 1 and "class=Subleading" in ex[0]


def test_diagrams_classify_and_evaluate(tmp_path, capsys):
    code, out, _ = run(["diagrams", "--order", "1", "--census"], tmp_path, capsys)
    line = (tmp_path / "out" / "census_order1.txt").read_text().splitlines()[-1]
    enc = " ".join(line.split()[:4])
    code, out, _ = run(["diagrams", "--classify", enc], tmp_path, capsys)
    assert code == 0 and out.strip() == line
    code, out, _ = run(["diagrams", "--evaluate", "--L", "3", "--q", "0,1"], tmp_path, capsys)
    assert code == 0 and "excluded_degenerate=24" in out


def test_resolution_error_exit_two(tmp_path, capsys):
    code, _, err = run(["boltzmann", "--model", "nn-nnn-311", "--N", "6", "--eta", "0.01"], tmp_path, capsys)
    assert code == 2 and "ResolutionError" in err


@pytest.mark.filterwarnings("ignore")
def test_blowup_exit_two(tmp_path, capsys):
    code, _, err = run(["simulate", "--L", "4", "--lam", "1e4", "--eps", "1", "--T", "5", "--w0", "100"],
                       tmp_path, capsys)
    assert code == 2 and "BlowUp" in err


def test_boltzmann_outputs_and_config_roundtrip(tmp_path, capsys):
    argv = ["boltzmann", "--N", "4", "--t", "0.2", "--dt", "0.1", "--w0", "(1 + 0.3*c1)/omega"]
    code, out, _ = run(argv, tmp_path, capsys)
    assert code == 0 and "energy_drift=" in out
    first = tmp_path / "out"
    meta, cols, rows = read_csv(first / "trajectory.csv")
    assert set(meta) == {"tool", "config_hash", "seed"}
    assert cols == ["t", "k1", "k2", "k3", "W"] and len(rows) == 3 * 64
    cfg = json.loads((first / "config.json").read_text())
    assert cfg["header"]["config_hash"] == meta["config_hash"]
    code = main(["boltzmann", "--config", str(first / "config.json"), "--out", str(tmp_path / "again")])
    assert code == 0
    assert (tmp_path / "again" / "trajectory.csv").read_bytes() == (first / "trajectory.csv").read_bytes()
    bad = dict(cfg, bogus=1)
    (tmp_path / "bad.json").write_text(json.dumps(bad))
    assert main(["boltzmann", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path / "x")]) == 1


def test_series_and_wigner(tmp_path, capsys):
    code, out, _ = run(["series", "--N", "4", "--order", "2", "--t", "0.05"], tmp_path, capsys)
    assert code == 0 and out.startswith("sup_norms=")
    code, out, _ = run(["wigner", "--L", "4", "--samples", "8"], tmp_path, capsys)
    assert code == 0 and "phonon_number=" in out
    code, out, _ = run(["wigner", "--L", "4", "--samples", "8", "--eps", "0.5"], tmp_path, capsys)
    assert code == 0 and "imag_residual=" in out


def test_simulate_and_wigner_from_snapshots(tmp_path, capsys):
    code, out, _ = run(["simulate", "--L", "4", "--T", "0.5", "--eps", "0.5"], tmp_path, capsys)
    assert code == 0 and "snapshots=2" in out
    man = json.loads((tmp_path / "out" / "snapshots.json").read_text())
    files = [str(tmp_path / "out" / s["file"]) for s in man["snapshots"]]
    code = main(["wigner", "--model", "nn-nnn-311", "--snapshots", *files, "--out", str(tmp_path / "w")])
    assert code == 0


def test_kinetic_compare_and_manifest(tmp_path, capsys):
    argv = ["kinetic-compare", "--L", "6", "--samples", "8", "--eps", "0.5,0.25", "--t", "0.05"]
    code, out, _ = run(argv, tmp_path, capsys)
    assert code == 0 and "verdict_control=" in out
    code = main(["kinetic-compare", "--manifest", str(tmp_path / "out"), "--threads", "2",
                 "--out", str(tmp_path / "re")])
    assert code == 0
    for name in ("discrepancy.csv", "summary.json", "plan.json"):
        assert (tmp_path / "re" / name).read_bytes() == (tmp_path / "out" / name).read_bytes()


def test_module_entry_point(tmp_path):
    p = subprocess.run([sys.executable, "-m", "phononkin", "dispersion-check", "--model", "flat", "--levels", "4",
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert p.returncode == 0 and "min_gap" in p.stdout
    p = subprocess.run([sys.executable, "-m", "phononkin", "--version"], capture_output=True, text=True)
    assert p.returncode == 0 and "phononkin" in p.stdout
