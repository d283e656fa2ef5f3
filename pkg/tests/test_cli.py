import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from continuum_trap import __version__
from continuum_trap.cli import build_parser, main
from continuum_trap.manifest import RunManifest, verify


def run(tmp_path, *argv, name="out", config=None):
    out = tmp_path / name
    args = ["--out", str(out)]
    if config is not None:
        args += ["--config", str(config)]
    return main(args + list(argv)), out


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_help_lists_every_subcommand():
    text = build_parser().format_help()
    for cmd in ("modes", "bpm", "cmt", "photons", "hom", "validate"):
        assert cmd in text


def test_bad_config_exit_2(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"geometry": {"channel_radius": -1e-6}}))
    status, _ = run(tmp_path, "modes", config=cfg)
    assert status == 2
    assert "channel_radius" in capsys.readouterr().err


def test_unreadable_and_unknown_config(tmp_path, capsys):
    status, _ = run(tmp_path, "modes", config=tmp_path / "missing.json")
    assert status == 2
    cfg = tmp_path / "odd.json"
    cfg.write_text(json.dumps({"wavelengths": {}}))
    status, _ = run(tmp_path, "modes", config=cfg)
    assert status == 2
    assert "wavelengths" in capsys.readouterr().err


def test_bad_state_is_config_error(tmp_path):
    status, out = run(tmp_path, "photons", "--state", "thermal:3")
    assert status == 2
    assert manifest(out)["status"] == "failed"


def test_modes_outputs(tmp_path, modes):
    status, out = run(tmp_path, "modes")
    assert status == 0
    summary = json.loads((out / "modes.json").read_text())
    assert summary["sigma"] == pytest.approx(modes.decay.sigma, rel=1e-12)
    assert summary["delta_beta0"] == pytest.approx(modes.delta_beta0, rel=1e-12)
    header, data = read_csv(out / "coupling.csv")
    assert header == ["k", "g_re", "g_im"]
    assert data.shape[0] == modes.spectrum.k_samples.size
    m = manifest(out)
    assert m["status"] == "ok" and m["tool_version"] == __version__
    assert set(m["outputs"]) == {"modes.json", "dispersion.csv", "coupling.csv"}
    assert m["config"]["geometry"]["channel_radius"] == 2e-6
    assert verify(out / "manifest.json") == []


def test_manifest_detects_tampering(tmp_path):
    status, out = run(tmp_path, "cmt", "--n-points", "11")
    assert status == 0
    (out / "s_matrix.csv").write_text("z\n")
    assert verify(out / "manifest.json") == ["s_matrix.csv"]
    (out / "s_matrix.csv").unlink()
    assert verify(out / "manifest.json") == ["s_matrix.csv"]


def test_manifest_written_before_run(tmp_path):
    m = RunManifest.begin(tmp_path, "modes", {"a": 1}, seed=3)
    d = json.loads((tmp_path / "manifest.json").read_text())
    assert d["status"] == "running" and d["finished"] is None
    assert d["extra"]["seed"] == 3
    m.finalize(True)
    assert json.loads((tmp_path / "manifest.json").read_text())["status"] == "ok"


def test_cmt_modes(tmp_path):
    status, out = run(tmp_path, "cmt", "--n-points", "51")
    assert status == 0
    header, data = read_csv(out / "s_matrix.csv")
    assert header == ["z", "k11", "k12", "k13"]
    np.testing.assert_allclose(data[:, 1:].sum(axis=1), 1, atol=1e-12)
    status, out = run(tmp_path, "cmt", "--mode", "pulse", "--n-points", "9", name="pulse")
    assert status == 0
    _, data = read_csv(out / "pulse.csv")
    assert data[0, 1] >= 0.999
    assert data[-1, 1] == pytest.approx(0.5, abs=0.005)


def test_cmt_bath(tmp_path, modes):
    status, out = run(tmp_path, "cmt", "--mode", "bath", "--z-end", str(1 / modes.decay.sigma))
    assert status == 0
    header, data = read_csv(out / "bath.csv")
    assert header == ["z", "p1", "p2", "norm"]
    assert np.max(np.abs(data[:, 3] - 1)) < 1e-6


def test_photons_outputs(tmp_path):
    status, out = run(tmp_path, "photons", "--state", "fock:3", "--z-sweep", "5")
    assert status == 0
    joint = json.loads((out / "joint.json").read_text())
    assert sum(e["p"] for e in joint["entries"]) == pytest.approx(1, abs=1e-12)
    assert all(sum(e["n"]) == 3 for e in joint["entries"])
    header, data = read_csv(out / "joint_sweep.csv")
    assert header == ["z", "P300", "P003"]
    assert data[0, 1] == 1.0


def test_hom_outputs(tmp_path):
    status, out = run(tmp_path, "hom", "--n-delta", "81", "--t1t2-map")
    assert status == 0
    summary = json.loads((out / "hom_summary.json").read_text())
    assert summary["visibility"] > 0.98
    _, data = read_csv(out / "hom.csv")
    assert data.shape == (81, 3)
    assert (out / "hom_t1t2.csv").exists()
    assert "hom_t1t2.csv" in manifest(out)["outputs"]


@pytest.mark.parametrize("argv", [
    ("modes",),
    ("cmt", "--n-points", "101"),
    ("photons", "--state", "pair", "--z-sweep", "21"),
    ("hom", "--method", "quadrature", "--n-delta", "41"),
    ("bpm", "--z-end", "2e-4", "--snapshot-out", "field"),
])
def test_bitwise_determinism(tmp_path, argv):
    s1, a = run(tmp_path, *argv, name="a")
    s2, b = run(tmp_path, *argv, name="b")
    assert s1 == s2 == 0
    ha, hb = manifest(a)["outputs"], manifest(b)["outputs"]
    assert ha and ha == hb


def test_bpm_snapshots_and_trace(tmp_path, modes):
    from continuum_trap.bpm import read_snapshot
    status, out = run(tmp_path, "bpm", "--z-end", "1e-3", "--snapshot-out", "f",
                      "--snapshot-every", "250", "--trace-out", "t.csv")
    assert status == 0
    header, data = read_csv(out / "t.csv")
    assert header == ["z", "p1", "p2", "p_total"]
    snaps = sorted(out.glob("f_*.bpmf"))
    assert len(snaps) == 3                       # z = 0, 5e-4, 1e-3
    assert read_snapshot(snaps[-1]).z == pytest.approx(1e-3)
    assert set(manifest(out)["outputs"]) >= {"t.csv", "bpm_summary.json", snaps[0].name}


def test_bpm_antisymmetric_full_length(tmp_path):
    status, out = run(tmp_path, "bpm", "--input", "antisymmetric")
    assert status == 0
    _, data = read_csv(out / "trace.csv")
    assert data[-1, 0] == pytest.approx(0.06)
    assert data[-1, 1] + data[-1, 2] >= 0.98


def test_validate_skip_bpm(tmp_path, capsys):
    status, out = run(tmp_path, "validate", "--skip-bpm")
    assert status == 0
    report = json.loads((out / "validation.json").read_text())
    assert report["passed"] is True
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3 and all(line.startswith("PASS") for line in lines)


def test_validate_default_config(tmp_path, capsys):
    status, out = run(tmp_path, "validate")
    report = json.loads((out / "validation.json").read_text())
    print(capsys.readouterr().out)
    assert manifest(out)["status"] == ("ok" if report["passed"] else "failed")
    assert status == 0 and report["passed"], report["checks"]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "continuum_trap", "--version"],
                         capture_output=True, text=True, check=True)
    assert __version__ in res.stdout
