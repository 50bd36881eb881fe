"""Seeded runs, disturbance scripts, Monte Carlo replication and parameter sweeps."""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import __version__, _kernels
from .analytics import (
    DelayModel,
    Estimate,
    SlaReport,
    availability,
    mean_ci,
)
from .buffer import BufferRun, simulate_buffers
from .economics import annualize
from .errors import ConfigurationError, UsageError
from .rng import stream
from .supply import (
    DV,
    LinkProfile,
    PqcHandshake,
    RateCurve,
    SupplySchedule,
    curve_from_dict,
    curve_to_dict,
    rate_from_loss,
)
from .topology import Topology
from .traffic import TrafficClass, mean_demand_rate

ARCHITECTURES = ("PqcOnly", "QkdOnly", "Hybrid")
ALLOCATIONS = {"MaxMin": _kernels.MAXMIN, "Weighted": _kernels.WEIGHTED}
CSV_COLUMNS = ("run_id", "seed", "scenario", "arch", "topology", "metric", "class_or_node", "value")


# -- disturbances --------------------------------------------------------------------


class EventKind(str, enum.Enum):
    KEY_RATE_OUTAGE = "KeyRateOutage"
    LOSS_STEP = "LossStep"
    LINK_CUT = "LinkCut"


@dataclass(frozen=True)
class DisturbanceEvent:
    kind: EventKind
    link: str
    start: int  # step
    duration: int  # steps
    magnitude: float = 0.0  # dB, loss steps only

    def __post_init__(self):
        object.__setattr__(self, "kind", EventKind(self.kind))
        if self.duration < 1:
            raise ConfigurationError("event duration must be at least one step")
        if self.start < 0:
            raise ConfigurationError("event start must be nonnegative")
        if self.kind is EventKind.LOSS_STEP and not self.magnitude > 0:
            raise ConfigurationError("loss step needs a positive magnitude")

    @property
    def end(self) -> int:
        return self.start + self.duration

    def to_dict(self, dt: float = 1.0) -> dict:
        d = {"kind": self.kind.value, "link": self.link, "start_s": self.start * dt,
             "duration_s": self.duration * dt}
        if self.kind is EventKind.LOSS_STEP:
            d["magnitude_db"] = self.magnitude
        return d

    @classmethod
    def from_dict(cls, d: Mapping, dt: float = 1.0) -> "DisturbanceEvent":
        return cls(EventKind(d["kind"]), d["link"], int(round(float(d["start_s"]) / dt)),
                   int(round(float(d["duration_s"]) / dt)), float(d.get("magnitude_db", 0.0)))


def compile_schedule(topology: Topology, script: Sequence[DisturbanceEvent], horizon: int,
                     curves: Mapping[str, RateCurve] | None = None, *, dt: float = 1.0,
                     pqc: Mapping[str, PqcHandshake] | None = None) -> SupplySchedule:
    """Turn link rate curves plus a disturbance script into per-step link supply.

    With ``pqc`` given (one handshake curve per link) the supply is loss
    independent: only link cuts affect it, and the bits are drawn as Poisson
    handshakes at run time.
    """
    curves = dict(curves or {"dv": DV()})
    by_link: dict[str, list[DisturbanceEvent]] = {l: [] for l in topology.links}
    for ev in script:
        if ev.link not in topology.links:
            raise ConfigurationError(f"disturbance references unknown link {ev.link}")
        if ev.start >= horizon:
            raise ConfigurationError(f"event on {ev.link} starts after the horizon")
        by_link[ev.link].append(ev)
    profiles = []
    stochastic = {}
    for li, (lid, link) in enumerate(topology.links.items()):
        if pqc is not None:
            curve = pqc.get(lid, pqc.get("*"))
            if curve is None:
                raise ConfigurationError(f"no handshake curve for link {lid}")
            stochastic[li] = curve.bits_per_hs
        else:
            if link.rate_curve not in curves:
                raise ConfigurationError(f"link {lid} uses unknown curve {link.rate_curve}")
            curve = curves[link.rate_curve]
        base_loss = topology.link_loss(lid)
        events = by_link[lid]
        cuts = sorted({0, horizon, *(min(e.start, horizon) for e in events),
                       *(min(e.end, horizon) for e in events)})
        bits, usable = [], []
        for lo in cuts[:-1]:
            active = [e for e in events if e.start <= lo < e.end]
            cut = any(e.kind is EventKind.LINK_CUT for e in active)
            if pqc is not None:
                down = cut
                extra = 0.0
            else:
                down = cut or any(e.kind is EventKind.KEY_RATE_OUTAGE for e in active)
                extra = sum(e.magnitude for e in active if e.kind is EventKind.LOSS_STEP)
            bits.append(0.0 if down else rate_from_loss(curve, base_loss + extra) * dt)
            usable.append(not cut)
        profiles.append(LinkProfile(np.array(cuts, dtype=np.int64), np.array(bits),
                                    np.array(usable)))
    return SupplySchedule(topology.link_ids, profiles, horizon, stochastic)


@dataclass(frozen=True)
class DisturbanceRates:
    """Per-link event frequencies (per day) and lognormal durations (median seconds)."""

    outage_per_day: float = 0.0
    outage_median_s: float = 3600.0
    loss_step_per_day: float = 0.0
    loss_step_median_s: float = 3600.0
    loss_step_db: float = 3.0
    cut_per_day: float = 0.0
    cut_median_s: float = 1800.0
    sigma_log: float = 0.5


def generate_script(topology: Topology, horizon: int, seed: int, rates: DisturbanceRates,
                    dt: float = 1.0) -> list[DisturbanceEvent]:
    """Sample a disturbance script: Poisson event starts, lognormal durations.

    Each (link, kind) pair has its own stream, so changing one rate leaves
    the other event families untouched. Windows are clipped to the horizon.
    """
    plan = [
        (EventKind.KEY_RATE_OUTAGE, rates.outage_per_day, rates.outage_median_s),
        (EventKind.LOSS_STEP, rates.loss_step_per_day, rates.loss_step_median_s),
        (EventKind.LINK_CUT, rates.cut_per_day, rates.cut_median_s),
    ]
    steps_per_day = 86_400.0 / dt
    out = []
    for lid in topology.links:
        for kind, per_day, median in plan:
            if per_day <= 0:
                continue
            rng = stream(seed, "disturbance", kind.value, lid)
            t = rng.exponential(steps_per_day / per_day)
            while t < horizon:
                dur = rng.lognormal(math.log(median / dt), rates.sigma_log)
                start = int(t)
                length = max(1, min(int(round(dur)), horizon - start))
                mag = rates.loss_step_db if kind is EventKind.LOSS_STEP else 0.0
                out.append(DisturbanceEvent(kind, lid, start, length, mag))
                t += dur + rng.exponential(steps_per_day / per_day)
    out.sort(key=lambda e: (e.start, e.link, e.kind.value))
    return out


# -- configuration ---------------------------------------------------------------------


@dataclass(frozen=True)
class SimulationConfig:
    dt: float = 1.0
    horizon: int = 604_800
    warmup: int = 86_400
    seeds: tuple[int, ...] = (0,)
    architecture: str = "Hybrid"
    allocation: str = "MaxMin"
    b_clear_factor: float = 1.5
    delay_samples: int = 10_000
    critical_classes: tuple[str, ...] = ("GOOSE", "SV", "PMU", "SCADA")
    scenario: str = "baseline"
    # PQC-only nodes derive keys on demand and keep only a small session-key
    # cache: their b_max and b_min are this fraction of the configured buffer
    pqc_cache_fraction: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "critical_classes", tuple(self.critical_classes))
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if not 0 <= self.warmup < self.horizon:
            raise ConfigurationError("warmup must be shorter than the horizon")
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        if self.architecture not in ARCHITECTURES:
            raise ConfigurationError(f"unknown architecture {self.architecture!r}")
        if self.allocation not in ALLOCATIONS:
            raise ConfigurationError(f"unknown allocation {self.allocation!r}")
        if self.b_clear_factor < 1:
            raise ConfigurationError("b_clear_factor must be >= 1")
        if self.delay_samples < 1:
            raise ConfigurationError("delay_samples must be positive")
        if not 0 < self.pqc_cache_fraction <= 1:
            raise ConfigurationError("pqc_cache_fraction must be in (0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        d["critical_classes"] = list(self.critical_classes)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "SimulationConfig":
        names = {f.name for f in fields(cls)}
        bad = set(d) - names
        if bad:
            raise ConfigurationError(f"unknown simulation settings {sorted(bad)}")
        return cls(**d)


@dataclass(frozen=True)
class Experiment:
    """Everything a run needs: topology, traffic, supply curves, script, delays, config."""

    topology: Topology
    classes: Mapping[str, TrafficClass]
    curves: Mapping[str, RateCurve] = field(default_factory=lambda: {"dv": DV()})
    pqc: Mapping[str, PqcHandshake] = field(default_factory=lambda: {"*": PqcHandshake(50.0)})
    script: tuple[DisturbanceEvent, ...] = ()
    delay: DelayModel | None = None
    config: SimulationConfig = field(default_factory=SimulationConfig)
    # sampled afresh for every seed, on top of the fixed script
    disturbances: DisturbanceRates | None = None

    def __post_init__(self):
        object.__setattr__(self, "script", tuple(self.script))
        for node in self.topology.nodes.values():
            for c in node.class_ids:
                if c not in self.classes:
                    raise ConfigurationError(f"node {node.id} references unknown class {c}")

    def delay_model(self) -> DelayModel:
        if self.delay is not None:
            return self.delay
        return DelayModel.default(self.classes, self.topology.path_km())

    def to_dict(self) -> dict:
        return {
            "topology": self.topology.to_dict(),
            "classes": [c.to_dict() for c in self.classes.values()],
            "curves": {k: curve_to_dict(v) for k, v in self.curves.items()},
            "pqc": {k: curve_to_dict(v) for k, v in self.pqc.items()},
            "script": [e.to_dict(self.config.dt) for e in self.script],
            "delay": self.delay_model().to_dict(),
            "config": self.config.to_dict(),
            "disturbances": None if self.disturbances is None else asdict(self.disturbances),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Experiment":
        cfg = SimulationConfig.from_dict(d.get("config", {}))
        classes = {c["id"]: TrafficClass.from_dict(c) for c in d["classes"]}
        return cls(
            topology=Topology.from_dict(d["topology"]),
            classes=classes,
            curves={k: curve_from_dict(v) for k, v in d.get("curves", {"dv": {"type": "dv",
                    "r0_bps": 1e6, "eta_per_db": 0.1}}).items()},
            pqc={k: curve_from_dict(v) for k, v in d.get("pqc", {"*": {"type": "pqc",
                 "hs_per_s": 50.0, "bits_per_hs": 256.0}}).items()},
            script=tuple(DisturbanceEvent.from_dict(e, cfg.dt) for e in d.get("script", [])),
            delay=DelayModel.from_dict(d["delay"]) if d.get("delay") else None,
            config=cfg,
            disturbances=DisturbanceRates(**d["disturbances"]) if d.get("disturbances") else None,
        )

    def digest(self) -> str:
        """Stable hash of every input except the seed list."""
        doc = self.to_dict()
        doc["config"].pop("seeds")
        text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    # -- overrides --

    def script_for(self, seed: int) -> list[DisturbanceEvent]:
        """Fixed events plus, when rates are configured, this seed's sampled events."""
        events = list(self.script)
        if self.disturbances is not None:
            events += generate_script(self.topology, self.config.horizon, seed,
                                      self.disturbances, self.config.dt)
        return events

    def with_config(self, **changes) -> "Experiment":
        return replace(self, config=replace(self.config, **changes))

    def with_override(self, path: str, value: Any) -> "Experiment":
        """Return a copy with one parameter changed, addressed by a dotted path.

        Paths: ``topology.alpha``, ``nodes.<field>`` (all nodes; ``reserve_bits``
        sets b_min and scales b_max with it), ``classes.<id|*>.<field>``,
        ``curves.<id>.<field>``, ``pqc.<id>.<field>`` and ``sim.<field>``.
        """
        parts = path.split(".")
        head = parts[0]
        if head == "topology" and len(parts) == 2 and parts[1] == "alpha":
            return replace(self, topology=replace(self.topology, alpha=float(value)))
        if head == "nodes" and len(parts) == 2:
            name = parts[1]
            nodes = {}
            for k, n in self.topology.nodes.items():
                if name == "reserve_bits":
                    ratio = n.b_max / n.b_min if n.b_min > 0 else 1.0
                    nodes[k] = replace(n, b_min=float(value), b_max=float(value) * ratio)
                elif name in ("b_min", "b_max", "phi", "delta"):
                    nodes[k] = replace(n, **{name: float(value)})
                else:
                    raise ConfigurationError(f"unknown node field {name!r}")
            return replace(self, topology=replace(self.topology, nodes=nodes))
        if head == "classes" and len(parts) == 3:
            ids = list(self.classes) if parts[1] == "*" else [parts[1]]
            valid = {f.name for f in fields(TrafficClass)} - {"id", "name"}
            if parts[2] not in valid:
                raise ConfigurationError(f"unknown class field {parts[2]!r}")
            classes = dict(self.classes)
            for cid in ids:
                if cid not in classes:
                    raise ConfigurationError(f"unknown class {cid!r}")
                classes[cid] = replace(classes[cid], **{parts[2]: value})
            return replace(self, classes=classes)
        if head in ("curves", "pqc") and len(parts) == 3:
            table = dict(getattr(self, head))
            keys = list(table) if parts[1] == "*" else [parts[1]]
            for key in keys:
                if key not in table:
                    raise ConfigurationError(f"unknown curve {key!r}")
                try:
                    table[key] = replace(table[key], **{parts[2]: float(value)})
                except TypeError as exc:
                    raise ConfigurationError(f"bad curve field {parts[2]!r}") from exc
            return replace(self, **{head: table})
        if head == "sim" and len(parts) == 2:
            if parts[1] not in {f.name for f in fields(SimulationConfig)}:
                raise ConfigurationError(f"unknown simulation field {parts[1]!r}")
            return self.with_config(**{parts[1]: value})
        raise ConfigurationError(f"unsupported override path {path!r}")


def size_supply(exp: Experiment, qkd_margin: float | None = None,
                pqc_margin: float | None = None, bits_per_hs: float = 256.0) -> Experiment:
    """Give every link its own curve so that node supply is about ``margin`` x demand.

    A link is sized for the hungrier of its two endpoints, split by that
    endpoint's degree; relay-only links get the largest target. QKD links
    keep their loss dependence: the curve's R0 is scaled so the rate at the
    current loss hits the target.
    """
    top = exp.topology
    degree = {n: 0 for n in top.nodes}
    for l in top.links.values():
        for n in l.fed_nodes:
            degree[n] += 1
    need = {n: mean_demand_rate(spec, exp.classes) / max(degree[n], 1)
            for n, spec in top.nodes.items()}
    target = {lid: max(need[n] for n in l.fed_nodes) for lid, l in top.links.items()}
    # links between demand-free relays carry forwarded key: size them like the busiest link
    busiest = max(target.values(), default=0.0)
    target = {lid: (v if v > 0 else busiest) for lid, v in target.items()}
    if busiest <= 0:
        return exp
    out = exp
    if qkd_margin is not None:
        curves = dict(exp.curves)
        links = {}
        for lid, l in top.links.items():
            base = curves[l.rate_curve]
            rate = rate_from_loss(base, top.link_loss(lid))
            if rate <= 0:
                raise ConfigurationError(f"link {lid} has no key rate to scale")
            name = f"{l.rate_curve}@{lid}"
            want = qkd_margin * target[lid]
            curves[name] = replace(base, r0=base.r0 * want / rate)
            links[lid] = replace(l, rate_curve=name)
        out = replace(out, curves=curves, topology=replace(top, links=links))
    if pqc_margin is not None:
        pqc = {lid: PqcHandshake(pqc_margin * target[lid] / bits_per_hs, bits_per_hs)
               for lid in top.links}
        out = replace(out, pqc=pqc)
    return out


# -- single run ---------------------------------------------------------------------


@dataclass
class RunResult:
    seed: int
    arch: str
    digest: str
    report: SlaReport
    metrics: list[tuple[str, str, float]]  # (metric, class_or_node, value)
    run: BufferRun | None = None

    @property
    def run_id(self) -> str:
        return f"{self.digest[:12]}-{self.seed}"

    def metric(self, name: str, key: str) -> float:
        for m, k, v in self.metrics:
            if m == name and k == key:
                return v
        raise KeyError((name, key))

    def table(self, name: str) -> dict[str, float]:
        return {k: v for m, k, v in self.metrics if m == name}


def _phi(exp: Experiment, arch: str) -> np.ndarray:
    if arch == "Hybrid":
        return np.array([n.phi for n in exp.topology.nodes.values()])
    return np.zeros(len(exp.topology.nodes))


def run_one(exp: Experiment, seed: int, *, keep_run: bool = False,
            backend: str | None = None) -> RunResult:
    """Simulate one seed and reduce it to service-level and key-flow metrics."""
    cfg = exp.config
    arch = cfg.architecture
    top = exp.topology
    if arch == "PqcOnly" and cfg.pqc_cache_fraction != 1.0:
        k = cfg.pqc_cache_fraction
        top = replace(top, nodes={nid: replace(n, b_max=n.b_max * k, b_min=n.b_min * k)
                                  for nid, n in top.nodes.items()})
    schedule = compile_schedule(top, exp.script_for(seed), cfg.horizon, exp.curves, dt=cfg.dt,
                                pqc=exp.pqc if arch == "PqcOnly" else None)
    phi = _phi(exp, arch)
    run = simulate_buffers(top, exp.classes, schedule, cfg.horizon, seed, dt=cfg.dt,
                           warmup=cfg.warmup, phi=phi, b_clear_factor=cfg.b_clear_factor,
                           policy=ALLOCATIONS[cfg.allocation], backend=backend)
    steps = run.window(_kernels.STEPS)
    p_out = run.window(_kernels.OUTAGE) / steps
    p_fb = run.window(_kernels.FALLBACK) / steps
    delay = exp.delay_model()
    window_hours = (cfg.horizon - cfg.warmup) * cfg.dt / 3600.0

    metrics: list[tuple[str, str, float]] = []
    nodes_rep = {}
    for i, (nid, node) in enumerate(top.nodes.items()):
        nodes_rep[nid] = {"p_out": float(p_out[i]), "fb_occupancy": float(p_fb[i])}
        metrics.append(("p_out", nid, float(p_out[i])))
        metrics.append(("fb_occupancy", nid, float(p_fb[i])))
        for name, idx in (("consumed_bits", _kernels.CONSUMED), ("supplied_bits", _kernels.SUPPLIED),
                          ("shortfall_bits", _kernels.SHORTFALL),
                          ("overflow_bits", _kernels.OVERFLOW)):
            metrics.append((name, nid, float(run.window(idx)[i])))
        metrics.append(("annual_consumed_bits", nid,
                        annualize(float(run.window(_kernels.CONSUMED)[i]), window_hours)))

    per_class: dict[str, list[tuple[float, float, float]]] = {}
    for i, (nid, node) in enumerate(top.nodes.items()):
        prop = delay.prop.get(nid, 0.0)
        for cid in node.class_ids:
            cls = exp.classes[cid]
            cd = delay.classes[cid]
            rng = stream(seed, "delay", nid, cid)
            n = cfg.delay_samples
            if cd.deterministic_queue is not None:
                queue = np.full(n, cd.deterministic_queue)
            else:
                queue = rng.lognormal(cd.queue_mu_log, cd.queue_sigma_log, n)
            crypto = cd.crypto_pqc if arch == "PqcOnly" else cd.crypto_qkd
            base = prop + queue + crypto + cd.crypto_jitter * rng.random(n)
            p_norm = float(np.mean(base > cls.delay_bound))
            p_fbx = float(np.mean(base + cd.fallback > cls.delay_bound))
            if phi[i] > 0:
                # outage steps served by fallback move to the occupancy term
                a = availability((1.0 - phi[i]) * p_out[i], p_fbx, p_fb[i])
                exceed = (1 - phi[i]) * p_out[i] + (1 - p_fb[i]) * p_norm + p_fb[i] * p_fbx
            else:
                a = availability(p_out[i], 0.0, 0.0)
                exceed = p_out[i] + (1 - p_out[i]) * p_norm
            rho = 1.0 - float(p_fb[i]) if phi[i] > 0 else (1.0 if arch == "QkdOnly" else 0.0)
            per_class.setdefault(cid, []).append((a, min(1.0, exceed), rho))
            metrics.append(("node_availability", f"{nid}:{cid}", a))

    classes_rep = {}
    for cid in exp.classes:
        if cid not in per_class:
            continue
        rows = np.array(per_class[cid])
        a, e, rho = (float(np.mean(rows[:, j])) for j in range(3))
        classes_rep[cid] = {"availability": a, "delay_exceedance": e}
        metrics.append(("availability", cid, a))
        metrics.append(("delay_exceedance", cid, e))
        metrics.append(("qkd_share", cid, rho))
    crit = [classes_rep[c]["availability"] for c in cfg.critical_classes if c in classes_rep]
    if crit:
        metrics.append(("min_critical_availability", "all", float(min(crit))))
    report = SlaReport(classes_rep, nodes_rep)
    return RunResult(int(seed), arch, exp.digest(), report, metrics, run if keep_run else None)


# -- replication -----------------------------------------------------------------------


def _run_seed(args):
    exp, seed = args
    return run_one(exp, seed)


def run_many(exp: Experiment, seeds: Sequence[int], parallel: int = 1) -> list[RunResult]:
    """Run ``seeds`` serially or on a process pool; output order follows ``seeds``."""
    jobs = [(exp, int(s)) for s in seeds]
    if parallel <= 1 or len(jobs) <= 1:
        return [_run_seed(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(_run_seed, jobs))


@dataclass
class McResult:
    exp_digest: str
    arch: str
    runs: list[RunResult]
    summary: dict[tuple[str, str], Estimate]

    def estimate(self, metric: str, key: str) -> Estimate:
        return self.summary[(metric, key)]

    def values(self, metric: str, key: str) -> np.ndarray:
        return np.array([r.metric(metric, key) for r in self.runs])

    def report(self) -> SlaReport:
        cls_rep, node_rep = {}, {}
        for (m, k), est in self.summary.items():
            ci = [est.lo, est.hi] if est.ci_available else None
            if m == "availability":
                cls_rep.setdefault(k, {}).update(availability=est.mean, ci95=ci)
            elif m == "delay_exceedance":
                cls_rep.setdefault(k, {})["delay_exceedance"] = est.mean
            elif m == "p_out":
                node_rep.setdefault(k, {}).update(p_out=est.mean, ci95=ci)
            elif m == "fb_occupancy":
                node_rep.setdefault(k, {})["fb_occupancy"] = est.mean
        return SlaReport(cls_rep, node_rep)


def summarize(runs: Sequence[RunResult]) -> dict[tuple[str, str], Estimate]:
    keys: list[tuple[str, str]] = []
    seen = set()
    for r in runs:
        for m, k, _ in r.metrics:
            if (m, k) not in seen:
                seen.add((m, k))
                keys.append((m, k))
    table = {(m, k): [] for m, k in keys}
    for r in runs:
        for m, k, v in r.metrics:
            table[(m, k)].append(v)
    return {key: mean_ci(vals) for key, vals in table.items()}


def monte_carlo(exp: Experiment, parallel: int = 1) -> McResult:
    """Replicate over the configured seeds; normal-approximation 95% CIs per metric."""
    runs = run_many(exp, exp.config.seeds, parallel)
    return McResult(exp.digest(), exp.config.architecture, runs, summarize(runs))


@dataclass
class SweepCell:
    assignment: dict[str, Any]
    result: McResult


def sweep(exp: Experiment, axes: Sequence[tuple[str, Sequence[Any]]],
          parallel: int = 1) -> list[SweepCell]:
    """Monte Carlo on the Cartesian product of one or two parameter axes."""
    if not axes:
        raise ConfigurationError("a sweep needs at least one axis")
    if len(axes) > 2:
        raise ConfigurationError("sweeps vary at most two parameters at once")
    for path, values in axes:
        if len(values) == 0:
            raise ConfigurationError(f"axis {path} has no values")
    cells = []
    for combo in itertools.product(*(values for _, values in axes)):
        cell_exp = exp
        assignment = {}
        for (path, _), value in zip(axes, combo):
            cell_exp = cell_exp.with_override(path, value)
            assignment[path] = value
        cells.append((assignment, cell_exp))
    jobs = [(e, s) for _, e in cells for s in e.config.seeds]
    flat = run_many_jobs(jobs, parallel)
    out, pos = [], 0
    for assignment, e in cells:
        n = len(e.config.seeds)
        runs = flat[pos : pos + n]
        pos += n
        out.append(SweepCell(assignment, McResult(e.digest(), e.config.architecture, runs,
                                                  summarize(runs))))
    return out


def run_many_jobs(jobs: Sequence[tuple[Experiment, int]], parallel: int = 1) -> list[RunResult]:
    if parallel <= 1 or len(jobs) <= 1:
        return [_run_seed(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(_run_seed, jobs))


# -- output -------------------------------------------------------------------------------


def _fmt(v: Any) -> str:
    if isinstance(v, float):
        return repr(float(v))  # numpy scalars would print as np.float64(...)
    return str(v)


def result_rows(runs: Iterable[RunResult], topology: str, scenario: str | None = None,
                extra: Mapping[str, Any] | None = None) -> list[dict]:
    rows = []
    for r in runs:
        for m, k, v in r.metrics:
            row = {"run_id": r.run_id, "seed": r.seed, "scenario": scenario or "baseline",
                   "arch": r.arch, "topology": topology, "metric": m, "class_or_node": k,
                   "value": v}
            if extra:
                row.update(extra)
            rows.append(row)
    return rows


def write_long_csv(rows: Sequence[Mapping], path=None, extra_columns: Sequence[str] = ()) -> str:
    """Long-format results; returns the text and writes it when ``path`` is given."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = list(CSV_COLUMNS) + list(extra_columns)
    w.writerow(cols)
    for row in rows:
        w.writerow([_fmt(row.get(c, "")) for c in cols])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def run_log(exp: Experiment, seeds: Sequence[int], timestamp: str) -> dict:
    return {"version": __version__, "timestamp": timestamp, "seeds": [int(s) for s in seeds],
            "config_digest": exp.digest(), "architecture": exp.config.architecture,
            "backend": _kernels.BACKEND}
