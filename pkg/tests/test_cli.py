import csv
import hashlib
import json
import subprocess
import sys

import pytest

from oirssim.cli import build_parser, main
from oirssim.experiments import EXPERIMENTS
from oirssim.scenario import Scenario, load_scenario

NMSE_ARGS = ["nmse-siso", "--seed", "42", "--seeds", "2", "--spacing", "1", "--spacing", "2",
             "--sigma", "0.1,1", "--no-plots"]


def _run(args, out):
    assert main([*args, "--out", str(out)]) == 0
    return json.loads((out / "manifest.json").read_text())


def _csvs(out):
    return sorted(p for p in out.iterdir() if p.suffix == ".csv")


@pytest.fixture(scope="module")
def nmse_runs(tmp_path_factory):
    a = tmp_path_factory.mktemp("a")
    b = tmp_path_factory.mktemp("b")
    return _run(NMSE_ARGS, a), a, _run(NMSE_ARGS, b), b


def test_reruns_are_byte_identical(nmse_runs):
    _, a, _, b = nmse_runs
    files = _csvs(a)
    assert [p.name for p in files] == [p.name for p in _csvs(b)]
    for p in files:
        assert p.read_bytes() == (b / p.name).read_bytes()
    assert (a / "scenario.json").read_bytes() == (b / "scenario.json").read_bytes()


def test_different_seed_changes_noisy_results(nmse_runs, tmp_path):
    _, a, _, _ = nmse_runs
    args = list(NMSE_ARGS)
    args[args.index("42")] = "43"
    _run(args, tmp_path)
    assert (tmp_path / "nmse.csv").read_bytes() != (a / "nmse.csv").read_bytes()


def test_csv_format_and_provenance(nmse_runs):
    manifest, a, _, _ = nmse_runs
    for p in _csvs(a):
        raw = p.read_bytes()
        assert b"\r" not in raw and raw.endswith(b"\n")
        rows = list(csv.reader(raw.decode().splitlines()))
        header, body = rows[0], rows[1:]
        assert header[-2:] == ["seed", "scenario_hash"]
        assert body
        for row in body:
            assert len(row) == len(header)
            assert row[-2] == "42" and row[-1] == manifest["scenario_hash"]


def test_nmse_table_contents(nmse_runs):
    _, a, _, _ = nmse_runs
    with open(a / "nmse.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [(r["s"], r["sigma_rel"]) for r in rows] == [("1", "0.1"), ("1", "1.0"),
                                                        ("2", "0.1"), ("2", "1.0")]
    assert all(r["trials"] == "2" for r in rows)
    assert all(float(r["nmse_mean"]) > 0 for r in rows)


def test_manifest_contents(nmse_runs):
    manifest, a, _, _ = nmse_runs
    assert manifest["experiment"] == "nmse-siso"
    assert manifest["seed"] == 42
    assert manifest["tool"] == "oirs-sim" and manifest["version"]
    assert manifest["scenario_hash"] == Scenario.preset("paper-siso").hash
    for entry in manifest["files"]:
        digest = hashlib.sha256((a / entry["name"]).read_bytes()).hexdigest()
        assert digest == entry["sha256"]


def test_scenario_file_reloads(nmse_runs):
    _, a, _, _ = nmse_runs
    sc = load_scenario(a / "scenario.json")
    assert sc == Scenario.preset("paper-siso")
    assert json.loads((a / "scenario.json").read_text())["preset"] == "paper-siso"


def test_config_and_radius_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"preset": "paper-siso", "xi_c": 0.05}))
    out = tmp_path / "out"
    manifest = _run(["overhead", "--config", str(cfg), "--radius", "0.3", "--no-plots"], out)
    doc = json.loads((out / "scenario.json").read_text())
    assert doc["xi_c"] == 0.05 and doc["radius"] == 0.3
    assert manifest["scenario_hash"] == load_scenario(out / "scenario.json").hash


def test_overhead_with_figures(tmp_path):
    manifest = _run(["overhead"], tmp_path)
    assert (tmp_path / "overhead.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert "overhead.png" in {f["name"] for f in manifest["files"]}
    with open(tmp_path / "overhead.csv", newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if r["n_t"] == "1"]
    assert [float(r["reduction"]) for r in rows[:4]] == [1.0, 4.0, 9.0, 16.0]


def test_unknown_experiment_is_usage_error(capsys, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["coherence-frequency", "--out", str(tmp_path)])
    assert exc.value.code == 2
    assert "invalid choice" in capsys.readouterr().err


@pytest.mark.parametrize("seed", ["-1", str(2 ** 64), "abc"])
def test_seed_must_be_u64(seed, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["overhead", "--out", str(tmp_path), "--seed", seed])
    assert exc.value.code == 2


def test_largest_seed_accepted(tmp_path):
    assert _run(["overhead", "--seed", str(2 ** 64 - 1), "--no-plots"], tmp_path)["seed"] == 2 ** 64 - 1


def test_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"pd": {"fov_deg": 95}}))
    assert main(["overhead", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "pd.fov_deg" in capsys.readouterr().err


def test_parser_lists_every_experiment():
    choices = build_parser()._actions[1].choices
    assert tuple(choices) == EXPERIMENTS
    assert len(EXPERIMENTS) == 10


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "oirssim.cli", "coherence-time", "--out",
                           str(tmp_path), "--seed", "1", "--no-plots"],
                          capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip().endswith("manifest.json")
    assert (tmp_path / "coherence_time.csv").exists()
