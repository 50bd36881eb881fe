import csv
import json

import pytest

from qkdgrid import schemas
from qkdgrid.cli import ECON_COLUMNS, main
from qkdgrid.topology import Topology


def _write(path, doc):
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture
def manifest(tmp_path):
    assert main(["--out", str(tmp_path), "topology", "metro", "--substations", "4",
                 "--ring-km", "20", "--chords", "1"]) == 0
    _write(tmp_path / "scenarios.json", {"scenarios": [
        {"name": "baseline", "prob": 0.7},
        {"name": "threat", "prob": 0.3, "overrides": {"pqc_hazard_scale": 5}},
    ]})
    _write(tmp_path / "script.json", [{"kind": "KeyRateOutage", "link": "r0",
                                       "start_s": 400, "duration_s": 200}])
    doc = {
        "topology": "topology.json",
        "scenarios": "scenarios.json",
        "script": "script.json",
        "architectures": ["PqcOnly", "Hybrid"],
        "sim": {"horizon": 1200, "warmup": 200, "seeds": [0, 1], "delay_samples": 100},
        "sizing": {"qkd_margin": 1.5, "pqc_margin": 1.5},
        "output": "out",
    }
    return _write(tmp_path / "manifest.json", doc)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_topology_longhaul(tmp_path):
    out = tmp_path / "lh.json"
    assert main(["topology", "longhaul", "--km", "200", "--trusted", "1", "--output",
                 str(out)]) == 0
    doc = json.loads(out.read_text())
    schemas.validate(doc, schemas.TOPOLOGY, "topology")
    assert len(Topology.from_dict(doc).nodes) == 3


def test_topology_errors(tmp_path):
    assert main(["topology", "ring"]) == 2
    assert main(["--out", str(tmp_path), "topology", "longhaul", "--trusted", "7"]) == 2


def test_validate(manifest, capsys):
    assert main(["--manifest", str(manifest), "validate"]) == 0
    assert "ok:" in capsys.readouterr().out


def test_missing_manifest_and_files(tmp_path, manifest):
    assert main(["--manifest", str(tmp_path / "none.json"), "run"]) == 2
    doc = json.loads(manifest.read_text())
    doc["classes"] = "nowhere.json"
    bad = _write(tmp_path / "bad.json", doc)
    assert main(["--manifest", str(bad), "run"]) == 2
    assert main(["run"]) == 2


def test_schema_violation_exit_code(tmp_path, manifest):
    doc = json.loads(manifest.read_text())
    doc["colour"] = "blue"
    assert main(["--manifest", str(_write(tmp_path / "m2.json", doc)), "validate"]) == 2


def test_run_then_economics(manifest, tmp_path):
    out = tmp_path / "out"
    assert main(["--manifest", str(manifest), "run"]) == 0
    first = (out / "results.csv").read_text()
    rows = _rows(out / "results.csv")
    assert {r["arch"] for r in rows} == {"PqcOnly", "Hybrid"}
    assert {r["seed"] for r in rows} == {"0", "1"}
    summary = _rows(out / "summary.csv")
    assert all(r["ci95_lo"] != "" for r in summary)
    stamp = json.loads((out / "run_log.json").read_text())[0]
    schemas.validate(stamp, schemas.RUN_LOG, "log")
    for rep in json.loads((out / "report.json").read_text()).values():
        schemas.validate(rep, schemas.SLA_REPORT, "report")

    assert main(["--manifest", str(manifest), "run"]) == 0
    assert (out / "results.csv").read_text() == first

    assert main(["--manifest", str(manifest), "economics"]) == 0
    econ = _rows(out / "economics.csv")
    assert tuple(econ[0]) == ECON_COLUMNS
    assert len(econ) == 4
    hyb = [r for r in econ if r["arch"] == "Hybrid"]
    assert all(r["cis"] != "" and r["breakeven_pass"] in ("True", "False") for r in hyb)
    assert all(r["cis"] == "" for r in econ if r["arch"] == "PqcOnly")
    base, threat = (float(r["lcosec"]) for r in econ if r["arch"] == "PqcOnly")
    assert threat > base
    assert len(_rows(out / "expected_lcosec.csv")) == 2


def test_economics_single_arch_and_missing_baseline(manifest, tmp_path):
    doc = json.loads(manifest.read_text())
    doc["architectures"] = ["Hybrid"]
    m = _write(tmp_path / "hyb.json", doc)
    out = tmp_path / "out"
    assert main(["--manifest", str(m), "--seeds", "1", "run"]) == 0
    assert main(["--manifest", str(m), "economics"]) == 0
    assert all(r["cis"] == "" for r in _rows(out / "economics.csv"))
    doc["architectures"] = ["QkdOnly", "Hybrid"]
    m = _write(tmp_path / "two.json", doc)
    assert main(["--manifest", str(m), "--seeds", "1", "run"]) == 0
    assert main(["--manifest", str(m), "economics"]) == 2


def test_scenarios_must_sum_to_one(manifest, tmp_path):
    _write(tmp_path / "scenarios.json", {"scenarios": [{"name": "a", "prob": 0.5},
                                                       {"name": "b", "prob": 0.6}]})
    assert main(["--manifest", str(manifest), "economics"]) == 2


def test_sweep(manifest, tmp_path):
    out = tmp_path / "out"
    args = ["--manifest", str(manifest), "--seeds", "2", "sweep",
            "--axis", "topology.alpha=0.2,0.25", "--axis", "nodes.b_min=1e4,2e4,3e4"]
    assert main(args) == 0
    rows = _rows(out / "sweep.csv")
    runs = {(r["arch"], r["topology.alpha"], r["nodes.b_min"], r["seed"]) for r in rows}
    assert len(runs) == 2 * 6 * 2
    assert main(["--manifest", str(manifest), "sweep"]) == 2
    assert main(["--manifest", str(manifest), "sweep", "--axis", "topology.alpha="]) == 2
    assert main(["--manifest", str(manifest), "sweep", "--axis", "a=1", "--axis", "b=1",
                 "--axis", "c=1"]) == 2
