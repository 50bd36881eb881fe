"""``qgs`` command line: topology | run | sweep | economics | validate.

Exit codes: 0 success, 1 runtime failure, 2 configuration or validation error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import economics as econ
from . import schemas
from .analytics import DelayModel
from .errors import ConfigurationError, NotComparable, QkdGridError
from .simulator import (
    ARCHITECTURES,
    DisturbanceEvent,
    DisturbanceRates,
    Experiment,
    SimulationConfig,
    generate_script,
    monte_carlo,
    result_rows,
    run_log,
    size_supply,
    sweep,
    write_long_csv,
)
from .supply import curve_from_dict
from .topology import Topology, build_distribution, build_longhaul, build_metro
from .traffic import load_classes

log = logging.getLogger("qkdgrid")

ECON_COLUMNS = ("scenario", "arch", "topology", "npv", "eac", "risk_sla", "risk_sndl",
                "pv_secval", "lcosec", "cis", "breakeven_pass")


# -- manifest loading ----------------------------------------------------------------------


def _read_json(path: Path, schema=None, what: str = "") -> Any:
    if not path.is_file():
        raise ConfigurationError(f"missing file {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
    if schema is not None:
        schemas.validate(doc, schema, what or str(path))
    return doc


class Manifest:
    """Parsed experiment manifest; file references resolve relative to it."""

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        self.doc = _read_json(self.path, schemas.MANIFEST, "manifest")
        self.root = self.path.parent

    def ref(self, key: str) -> Path | None:
        v = self.doc.get(key)
        return None if v is None else (self.root / v)

    def load(self, key: str, schema=None):
        p = self.ref(key)
        return None if p is None else _read_json(p, schema, key)

    @property
    def architectures(self) -> list[str]:
        return list(self.doc.get("architectures", ARCHITECTURES))

    def experiment(self, seeds: int | None = None) -> Experiment:
        top = Topology.from_dict(self.load("topology", schemas.TOPOLOGY))
        cls_path = self.ref("classes")
        if cls_path is not None:
            _read_json(cls_path, schemas.CLASSES, "classes")
        classes = load_classes(cls_path)
        curves_doc = self.load("curves", schemas.CURVES)
        curves = ({k: curve_from_dict(v) for k, v in curves_doc.items()}
                  if curves_doc else {"dv": curve_from_dict({"type": "dv", "r0_bps": 1e6,
                                                              "eta_per_db": 0.1})})
        pqc_doc = self.load("pqc", schemas.CURVES)
        sim = dict(self.doc.get("sim", {}))
        if seeds is not None:
            sim["seeds"] = list(range(seeds))
        try:
            cfg = SimulationConfig.from_dict(sim)
        except TypeError as exc:
            raise ConfigurationError(f"sim settings: {exc}") from None
        script_doc = self.load("script", schemas.SCRIPT) or []
        script = [DisturbanceEvent.from_dict(e, cfg.dt) for e in script_doc]
        rates = None
        if "disturbances" in self.doc:
            d = dict(self.doc["disturbances"])
            fixed_seed = d.pop("seed", None)
            try:
                rates = DisturbanceRates(**d)
            except TypeError as exc:
                raise ConfigurationError(f"disturbances: {exc}") from None
            if fixed_seed is not None:
                # one shared sampled script for every Monte Carlo seed
                script += generate_script(top, cfg.horizon, int(fixed_seed), rates, cfg.dt)
                rates = None
        delay_doc = self.load("delay_model")
        kw = {}
        if pqc_doc:
            kw["pqc"] = {k: curve_from_dict(v) for k, v in pqc_doc.items()}
        exp = Experiment(top, classes, curves, script=tuple(script),
                         delay=DelayModel.from_dict(delay_doc) if delay_doc else None,
                         config=cfg, disturbances=rates, **kw)
        sizing = self.doc.get("sizing")
        if sizing:
            exp = size_supply(exp, sizing.get("qkd_margin"), sizing.get("pqc_margin"),
                              sizing.get("bits_per_hs", 256.0))
        return exp

    def prices(self) -> econ.PriceTable:
        p = self.ref("prices")
        if p is None:
            return econ.PriceTable.load()
        _read_json(p)
        return econ.PriceTable.load(p)

    def scenarios(self) -> econ.ScenarioSet:
        doc = self.load("scenarios", schemas.SCENARIOS)
        if doc is None:
            return econ.ScenarioSet((econ.Scenario("baseline", 1.0),))
        return econ.ScenarioSet.from_dict(doc)


def _sim_overrides(overrides: dict) -> dict:
    """Scenario overrides addressed by dotted paths change the simulation itself."""
    return {k: v for k, v in overrides.items() if "." in k}


def _price_overrides(overrides: dict) -> dict:
    return {k: v for k, v in overrides.items() if "." not in k}


# -- commands -------------------------------------------------------------------------------


def cmd_topology(args) -> int:
    if args.kind == "metro":
        top = build_metro(args.substations, args.ring_km, args.chords, args.seed,
                          alpha=args.alpha, jitter=args.jitter)
    elif args.kind == "distribution":
        top = build_distribution(args.neighborhoods, args.agg, args.span, args.seed,
                                 alpha=args.alpha)
    else:
        top = build_longhaul(args.km, args.trusted, args.dual, alpha=args.alpha)
    out = Path(args.output) if args.output else _out_dir(args) / "topology.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(top.to_json() + "\n")
    log.info("wrote %s (%d nodes, %d links)", out, len(top.nodes), len(top.links))
    print(out)
    return 0


def _out_dir(args, manifest: Manifest | None = None) -> Path:
    if args.out:
        return Path(args.out)
    if manifest is not None and "output" in manifest.doc:
        return manifest.root / manifest.doc["output"]
    return Path("qgs-out")


def _need_manifest(args) -> Manifest:
    if not args.manifest:
        raise ConfigurationError("--manifest is required for this command")
    return Manifest(args.manifest)


def _timestamp() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _summary_rows(mc, scenario: str, topology: str) -> list[list]:
    rows = []
    for (metric, key), est in mc.summary.items():
        rows.append([scenario, mc.arch, topology, metric, key, repr(est.mean),
                     repr(est.lo) if est.ci_available else "", repr(est.hi) if est.ci_available
                     else "", est.n])
    return rows


def cmd_run(args) -> int:
    man = _need_manifest(args)
    base = man.experiment(args.seeds)
    scen = man.scenarios()
    out = _out_dir(args, man)
    out.mkdir(parents=True, exist_ok=True)
    topo = base.topology.kind.value
    rows, summary, reports, logs = [], [], {}, []
    runs_done: dict[str, Experiment] = {"baseline": base}
    for s in scen.scenarios:
        sim_over = _sim_overrides(dict(s.overrides))
        if sim_over:
            exp = base
            for path, value in sim_over.items():
                exp = exp.with_override(path, value)
            runs_done[s.name] = exp
    for name, exp in runs_done.items():
        for arch in man.architectures:
            e = exp.with_config(architecture=arch, scenario=name)
            mc = monte_carlo(e, parallel=args.parallel)
            rows += result_rows(mc.runs, topo, name)
            summary += _summary_rows(mc, name, topo)
            rep = mc.report().to_dict()
            schemas.validate(rep, schemas.SLA_REPORT, "sla report")
            reports[f"{name}/{arch}"] = rep
            logs.append(run_log(e, e.config.seeds, _timestamp()))
            log.info("%s %s: %d seeds done", name, arch, len(mc.runs))
    write_long_csv(rows, out / "results.csv")
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "arch", "topology", "metric", "class_or_node", "mean",
                    "ci95_lo", "ci95_hi", "n"])
        w.writerows(summary)
    (out / "report.json").write_text(json.dumps(reports, indent=2, sort_keys=True) + "\n")
    for entry in logs:
        schemas.validate(entry, schemas.RUN_LOG, "run log")
    (out / "run_log.json").write_text(json.dumps(logs, indent=2) + "\n")
    print(out / "results.csv")
    return 0


def _parse_axis(text: str) -> tuple[str, list]:
    if "=" not in text:
        raise ConfigurationError(f"axis {text!r} must look like path=v1,v2")
    path, vals = text.split("=", 1)
    values = []
    for v in vals.split(","):
        v = v.strip()
        if not v:
            continue
        try:
            values.append(json.loads(v))
        except json.JSONDecodeError:
            values.append(v)
    return path.strip(), values


def cmd_sweep(args) -> int:
    man = _need_manifest(args)
    exp = man.experiment(args.seeds)
    axes = [_parse_axis(a) for a in args.axis] if args.axis else \
        [(a["path"], a["values"]) for a in man.doc.get("sweep", [])]
    if not axes:
        raise ConfigurationError("no sweep axes given")
    out = _out_dir(args, man)
    out.mkdir(parents=True, exist_ok=True)
    topo = exp.topology.kind.value
    rows = []
    axis_cols = [p for p, _ in axes]
    for arch in man.architectures:
        cells = sweep(exp.with_config(architecture=arch), axes, parallel=args.parallel)
        for cell in cells:
            rows += result_rows(cell.result.runs, topo, exp.config.scenario, cell.assignment)
    write_long_csv(rows, out / "sweep.csv", axis_cols)
    (out / "run_log.json").write_text(
        json.dumps(run_log(exp, exp.config.seeds, _timestamp()), indent=2) + "\n")
    print(out / "sweep.csv")
    return 0


def _load_results(path: Path) -> dict[tuple[str, str], dict[str, dict[str, list[float]]]]:
    """(scenario, arch) -> metric -> key -> per-seed values."""
    if not path.is_file():
        raise ConfigurationError(f"missing results file {path}")
    table: dict = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            cell = table.setdefault((row["scenario"], row["arch"]), {})
            cell.setdefault(row["metric"], {}).setdefault(row["class_or_node"], []).append(
                float(row["value"]))
    return table


def cmd_economics(args) -> int:
    man = _need_manifest(args)
    exp = man.experiment()
    prices = man.prices()
    scen = man.scenarios()
    out = _out_dir(args, man)
    results = _load_results(Path(args.results) if args.results else out / "results.csv")
    archs = sorted({a for _, a in results}, key=ARCHITECTURES.index)
    baseline = man.doc.get("baseline", "PqcOnly")
    if len(archs) > 1 and baseline not in archs:
        raise ConfigurationError(f"baseline architecture {baseline} missing from results")
    price = float(man.doc.get("shadow_price", 1.0))
    eps = float(man.doc.get("chance_eps", 0.05))
    topo = exp.topology.kind.value
    rows = []
    lcos: dict[str, list[float]] = {a: [] for a in archs}
    compliance: dict[str, list] = {a: [] for a in archs}
    targets = [c.a_target for c in exp.classes.values()]
    for s in scen.scenarios:
        p = prices.with_overrides(_price_overrides(dict(s.overrides)))
        per_arch = {}
        for arch in archs:
            cell = results.get((s.name, arch)) or results.get(("baseline", arch))
            if cell is None:
                raise ConfigurationError(f"no results for {arch} in scenario {s.name}")
            avail = {k: float(np.median(v)) for k, v in cell.get("availability", {}).items()}
            rho = {k: float(np.median(v)) for k, v in cell.get("qkd_share", {}).items()}
            res = econ.evaluate(exp.topology, exp.classes, arch, avail, rho, p)
            per_arch[arch] = res
            lcos[arch].append(res.lcosec)
            compliance[arch].append([avail.get(k, 1.0) for k in exp.classes])
        for arch, res in per_arch.items():
            cis_v, be = "", ""
            if arch != baseline and baseline in per_arch:
                b = per_arch[baseline]
                d_npv, d_pv = res.npv - b.npv, res.pv_secval - b.pv_secval
                try:
                    cis_v = repr(econ.cis(d_npv, d_pv))
                except NotComparable:
                    cis_v = "NotComparable"
                be = str(econ.breakeven(price, d_pv, d_npv).ok)
            rows.append([s.name, arch, topo, repr(res.npv), repr(res.eac), repr(res.risk_sla),
                         repr(res.risk_sndl), repr(res.pv_secval), repr(res.lcosec), cis_v, be])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "economics.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ECON_COLUMNS)
        w.writerows(rows)
    with open(out / "expected_lcosec.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["arch", "expected", "q05", "q50", "q95", "cvar95", "chance_ok",
                    "chance_mass"])
        for arch in archs:
            summ = econ.expected_lcosec(scen.probs, lcos[arch])
            ok, mass = econ.chance_constraint(scen.probs, np.array(compliance[arch]), targets, eps)
            w.writerow([arch, *(repr(float(v)) for v in summ), ok, repr(mass)])
    print(out / "economics.csv")
    return 0


def cmd_validate(args) -> int:
    man = _need_manifest(args)
    exp = man.experiment()
    man.prices()
    man.scenarios()
    print(f"ok: {len(exp.topology.nodes)} nodes, {len(exp.topology.links)} links, "
          f"{len(exp.classes)} classes, {len(exp.script)} events")
    return 0


# -- entry point ----------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qgs", description=__doc__.splitlines()[0])
    p.add_argument("--manifest", help="experiment manifest (JSON)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seeds", type=int, help="use seeds 0..N-1 instead of the manifest's")
    p.add_argument("--parallel", type=int, default=1, help="worker processes")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("topology", help="generate a topology file")
    t.add_argument("kind", choices=["metro", "distribution", "longhaul"])
    t.add_argument("--substations", type=int, default=20)
    t.add_argument("--ring-km", type=float, default=60.0)
    t.add_argument("--chords", type=int, default=0)
    t.add_argument("--neighborhoods", type=int, default=12)
    t.add_argument("--agg", type=int, default=4)
    t.add_argument("--span", type=float, default=20.0)
    t.add_argument("--km", type=float, default=200.0)
    t.add_argument("--trusted", type=int, default=1)
    t.add_argument("--dual", action="store_true")
    t.add_argument("--alpha", type=float, default=0.2)
    t.add_argument("--jitter", type=float, default=0.2)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--output", help="topology file path (default OUT/topology.json)")
    t.set_defaults(func=cmd_topology)

    sub.add_parser("run", help="Monte Carlo per architecture").set_defaults(func=cmd_run)
    s = sub.add_parser("sweep", help="one- or two-axis parameter sweep")
    s.add_argument("--axis", action="append", help="path=v1,v2,... (repeat for a 2nd axis)")
    s.set_defaults(func=cmd_sweep)
    e = sub.add_parser("economics", help="cost and LCoSec tables from results")
    e.add_argument("--results", help="results CSV (default OUT/results.csv)")
    e.set_defaults(func=cmd_economics)
    sub.add_parser("validate", help="check a manifest and its files").set_defaults(
        func=cmd_validate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("QGS_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors exit with 2 already
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigurationError, FileNotFoundError) as exc:
        print(f"qgs: configuration error: {exc}", file=sys.stderr)
        return 2
    except QkdGridError as exc:
        print(f"qgs: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        log.debug("runtime failure", exc_info=True)
        print(f"qgs: runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
