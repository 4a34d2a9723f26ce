import json

import numpy as np
import pytest

from ladderflux.cli import emit_csv, run


def read_csv(path):
    lines = path.read_text().splitlines()
    return lines[0].split(","), [line.split(",") for line in lines[1:]]


def test_emit_csv_conventions(tmp_path):
    path = tmp_path / "t.csv"
    emit_csv((["a", "b"], [(0.1, float("nan")), (1, True)]), path)
    raw = path.read_bytes()
    assert b"\r" not in raw
    assert raw.decode() == "a,b\n0.10000000000000001,nan\n1,1\n"
    assert float(raw.decode().splitlines()[1].split(",")[0]) == 0.1
    emit_csv((["x"], []), path)
    assert path.read_text() == "x\n"
    with pytest.raises(ValueError):
        emit_csv((["a", "b"], [(1,)]), path)
    assert list(tmp_path.iterdir()) == [path]


def test_bands_single_minimum_at_critical_coupling(tmp_path):
    assert run(["bands", "--k", "1.41421", "--phi-over-pi", "0.5", "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "bands.csv")
    assert header == ["q", "omega_minus", "omega_plus"]
    data = np.array(rows, dtype=float)
    lo = data[:, 1]
    interior = [i for i in range(1, len(lo) - 1) if lo[i] < lo[i - 1] and lo[i] < lo[i + 1]]
    assert len(interior) == 1 and data[interior[0], 0] == 0.0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert set(manifest) == {"command", "config", "seed", "version", "outputs"}
    assert manifest["config"]["ladder"]["k_mhz"] == 1.41421


def test_spectrum_outputs(tmp_path):
    assert run(["spectrum", "--n-rungs", "8", "--out", str(tmp_path)]) == 0
    assert read_csv(tmp_path / "spectrum.csv")[0] == ["n", "mu"]
    header, rows = read_csv(tmp_path / "wavefunction.csv")
    assert header == ["leg", "l", "re", "im", "abs"] and len(rows) == 16
    assert read_csv(tmp_path / "quasimomentum.csv")[0] == ["leg", "q", "intensity"]


def test_currents_csv(tmp_path):
    args = ["currents", "--units", "physical-MHz", "--g", "3.5", "--k", "1.75", "--out", str(tmp_path)]
    assert run(args) == 0
    header, rows = read_csv(tmp_path / "currents.csv")
    assert header == ["kind", "leg", "l", "value_mhz"]
    lookup = {(r[0], r[1], int(r[2])): float(r[3]) for r in rows}
    assert lookup[("leg_link", "L", 10)] == pytest.approx(0.43, rel=0.01)
    assert lookup[("rung", "LR", 10)] == pytest.approx(-0.5785, rel=0.01)


def test_phase_diagram_is_deterministic(tmp_path):
    args = ["phase-diagram", "--n-rungs", "8", "--phi-steps", "4", "--k-steps", "3", "--workers", "2"]
    assert run(args + ["--out", str(tmp_path / "a")]) == 0
    assert run(args + ["--out", str(tmp_path / "b"), "--workers", "1"]) == 0
    a = (tmp_path / "a" / "phase_diagram.csv").read_bytes()
    assert a == (tmp_path / "b" / "phase_diagram.csv").read_bytes()
    assert a.splitlines()[0] == b"phi_over_pi,k_over_g,j_chiral,vortex_density,degenerate_flag"
    assert len(a.splitlines()) == 13


def test_generate_report(tmp_path, capsys):
    assert run(["generate", "--c1-mhz", "1", "--units", "physical-MHz", "--g", "3.5", "--k", "1.75", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "generate_report.json").read_text())
    assert report["t_pi_us"] == 0.5
    assert report["fidelity_approx"] == pytest.approx(0.9273, abs=1e-4)
    assert "t_pi_us = 0.5" in capsys.readouterr().out


def test_measure_and_drive(tmp_path):
    args = ["measure", "--units", "physical-MHz", "--g", "3.5", "--k", "1.75", "--samples", "601", "--out", str(tmp_path)]
    assert run(args) == 0
    assert read_csv(tmp_path / "trace.csv")[0] == ["t_us", "value"]
    report = json.loads((tmp_path / "measure_report.json").read_text())
    assert report["j_estimate_mhz"] == pytest.approx(0.43, rel=0.005)
    assert run(["drive", "--out", str(tmp_path)]) == 0
    drive = json.loads((tmp_path / "drive_report.json").read_text())
    assert drive["stark_shift_mhz"] == pytest.approx(30.24, abs=0.005)


def test_config_file_and_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("ladder:\n  n_rungs: 6\n  k_mhz: 2.0\nphi_over_pi: 0.25\n")
    out = tmp_path / "env_out"
    monkeypatch.setenv("LADDERFLUX_OUT", str(out))
    assert run(["spectrum", "--config", str(cfg), "--k", "0.3"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    ladder = manifest["config"]["ladder"]
    assert ladder == {"n_rungs": 6, "g_mhz": 1.0, "k_mhz": 0.3, "phi_over_pi": 0.25, "units": "dimensionless"}
    js = tmp_path / "c.json"
    js.write_text(json.dumps({"n_rungs": 3}))
    assert run(["spectrum", "--config", str(js), "--out", str(tmp_path / "j")]) == 0
    assert len(read_csv(tmp_path / "j" / "spectrum.csv")[1]) == 6


@pytest.mark.parametrize(
    "argv",
    [
        ["bands", "--bogus"],
        ["nonsense"],
        ["bands", "--n-rungs", "0"],
        ["bands", "--g", "-1"],
        ["bands", "--config", "/nonexistent.yaml"],
        ["drive", "--delta2-mhz", "1000"],
    ],
)
def test_config_errors_exit_1(argv, tmp_path):
    assert run(argv + ["--out", str(tmp_path)]) == 1
    assert not (tmp_path / "manifest.json").exists()


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"flux": 1}))
    assert run(["bands", "--config", str(cfg), "--out", str(tmp_path)]) == 1


def test_numerical_failure_exit_2(tmp_path):
    # zero flux, decoupled legs: the ground level is degenerate and cannot be addressed
    args = ["generate", "--k", "0", "--phi-over-pi", "0", "--out", str(tmp_path)]
    assert run(args) == 2
    assert list(tmp_path.iterdir()) == []


def test_version_flag(capsys):
    assert run(["--version"]) == 0
    assert "0.1.0" in capsys.readouterr().out
