import json

import pytest

from qndtomo.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, cmd_report, main
from qndtomo.config import load_config
from qndtomo.report import strip_header

TWO_QUBITS = """
mode = "{mode}"
[device]
n_qubits = 2
edges = [[0, 1]]
[device.noise]
p_decay = {p}
[run]
shots = {shots}
seed = 5
[output]
directory = "{out}"
"""


def write_config(tmp_path, mode="direct", p=0.05, shots=3000, name="run"):
    out = tmp_path / name
    path = tmp_path / f"{name}.toml"
    path.write_text(TWO_QUBITS.format(mode=mode, p=p, shots=shots, out=out))
    return path, out


def test_generate_default_device(tmp_path, capsys):
    assert main(["generate", "--out", str(tmp_path)]) == EXIT_OK
    text = (tmp_path / "manifest_direct.txt").read_text()
    assert "colour groups: 3" in text
    assert "batches: 1054" in text
    doc = json.loads((tmp_path / "schedule_direct.json").read_text())
    assert len(doc["schedule"]["batches"]) == 1054
    assert str(tmp_path / "manifest_direct.txt") in capsys.readouterr().out


def test_generate_single_qubit(tmp_path):
    cfg = tmp_path / "one.toml"
    cfg.write_text(f'[device]\nn_qubits = 1\nedges = []\n[output]\ndirectory = "{tmp_path}"\n')
    assert main(["generate", "--config", str(cfg)]) == EXIT_OK
    assert "batches: 82" in (tmp_path / "manifest_direct.txt").read_text()


def test_bad_edge_exits_with_config_error(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[device]\nn_qubits = 7\nedges = [[0, 1], [7, 8]]\n")
    assert main(["generate", "--config", str(cfg)]) == EXIT_CONFIG
    assert "device.edges[1]" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["generate", "--config", str(tmp_path / "nope.toml")]) == EXIT_IO


def test_simulate_is_reproducible(tmp_path):
    path, out = write_config(tmp_path)
    assert main(["generate", "--config", str(path)]) == EXIT_OK
    assert main(["simulate", "--config", str(path)]) == EXIT_OK
    first = (out / "counts_direct.csv").read_text()
    assert first.startswith("# config_hash=")
    assert main(["simulate", "--config", str(path), "--jobs", "3"]) == EXIT_OK
    assert (out / "counts_direct.csv").read_text() == first
    assert main(["simulate", "--config", str(path), "--seed", "6"]) == EXIT_IO  # schedule hash differs


def test_stage_rejects_foreign_artifacts(tmp_path, capsys):
    path, out = write_config(tmp_path)
    assert main(["generate", "--config", str(path)]) == EXIT_OK
    assert main(["simulate", "--config", str(path)]) == EXIT_OK
    assert main(["reconstruct", "--config", str(path), "--shots", "100"]) == EXIT_IO
    assert "rerun the earlier stages" in capsys.readouterr().err


def test_truncated_counts(tmp_path, capsys):
    path, out = write_config(tmp_path)
    assert main(["generate", "--config", str(path)]) == EXIT_OK
    assert main(["simulate", "--config", str(path)]) == EXIT_OK
    (out / "counts_direct.json").unlink()
    csv = out / "counts_direct.csv"
    lines = csv.read_text().splitlines()
    csv.write_text("\n".join(lines[: len(lines) // 2]) + "\n")
    assert main(["reconstruct", "--config", str(path)]) == EXIT_IO
    assert capsys.readouterr().err


def test_stage_before_its_inputs(tmp_path):
    path, _ = write_config(tmp_path)
    assert main(["quantify", "--config", str(path)]) == EXIT_IO


@pytest.mark.slow
def test_seven_qubit_reconstruct_logs_every_problem(tmp_path):
    out = str(tmp_path)
    assert main(["generate", "--out", out, "--shots", "300"]) == EXIT_OK
    assert main(["simulate", "--out", out, "--shots", "300", "--jobs", "4"]) == EXIT_OK
    assert main(["reconstruct", "--out", out, "--shots", "300", "--jobs", "4"]) == EXIT_OK
    rows = (tmp_path / "problems_direct.csv").read_text().strip().splitlines()
    assert rows[0].startswith("# config_hash=")
    assert len(rows) - 2 == 51


def test_ideal_device_end_to_end(tmp_path):
    path, out = write_config(tmp_path, p=0.0, shots=20000)
    assert main(["all", "--config", str(path)]) == EXIT_OK
    reports = json.loads((out / "quality_direct.json").read_text())["reports"]
    for r in reports:
        assert r["D"] == pytest.approx(0.0, abs=0.02)
        assert r["F"] > 0.98 and r["Q"] > 0.98
    report = (out / "report.md").read_text()
    assert "## Mode: direct" in report and "Point estimates only" in report
    for name in ("bars", "flips", "choi_avg"):
        assert (out / f"{name}_direct.csv").read_text().startswith("# config_hash=")


def test_both_modes_and_report_determinism(tmp_path):
    path, out = write_config(tmp_path, mode="both", shots=2000)
    assert main(["all", "--config", str(path), "--bootstrap", "2"]) == EXIT_OK
    report = (out / "report.md").read_text()
    assert "## Direct vs. measure-and-reset" in report
    assert "## Mode: reset" in report and "±" in report
    assert (out / "bootstrap_reset.json").exists()
    cfg = load_config(path).override(bootstrap=2)
    cmd_report(cfg, timestamp="2000-01-01T00:00:00+00:00")
    again = (out / "report.md").read_text()
    assert again != report
    assert strip_header(again) == strip_header(report)
