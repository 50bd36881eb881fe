"""Discounted costs, risk, effective security output and the LCoSec/CIS metrics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError, NotComparable, Undefined, UsageError
from .topology import Tier, Topology, TopologyKind
from .traffic import TrafficClass

HOURS_PER_YEAR = 8760.0
MONTH_DAYS = (31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)
ARCHS = ("PqcOnly", "QkdOnly", "Hybrid")


# -- cash-flow primitives -----------------------------------------------------


@dataclass(frozen=True)
class Device:
    power_kw: float
    count: float = 1.0


@dataclass(frozen=True)
class LeasedLink:
    km: float
    rate: float  # currency per km-year


@dataclass
class CostModel:
    """Cash-flow inputs over years 0..T.

    ``salvage`` follows the negative-is-recovery convention and is added to the
    discounted total, so a recovery lowers the cost.
    """

    horizon: int
    discount: float
    capex: np.ndarray
    devices: list[Device] = field(default_factory=list)
    hours: np.ndarray | None = None  # per year
    tariff: np.ndarray | None = None  # per year, currency/kWh
    leases: list[LeasedLink] = field(default_factory=list)
    om: np.ndarray | None = None  # fraction of in-service capital per year
    retirement: float = 0.0  # yearly attrition of installed capital
    salvage: float = 0.0

    def __post_init__(self):
        if self.discount <= 0:
            raise ConfigurationError("discount rate must be positive")
        if self.horizon < 1:
            raise ConfigurationError("horizon must be at least one year")
        n = self.horizon + 1
        self.capex = _series(self.capex, n, "capex")
        self.hours = _series(HOURS_PER_YEAR if self.hours is None else self.hours, n, "hours")
        self.tariff = _series(0.0 if self.tariff is None else self.tariff, n, "tariff")
        self.om = _series(0.0 if self.om is None else self.om, n, "om")
        if not 0 <= self.retirement <= 1:
            raise ConfigurationError("retirement must be in [0, 1]")
        if self.salvage > 0:
            raise ConfigurationError("salvage uses the negative-is-recovery convention")

    def survival(self, tau: int, t: int) -> float:
        """Share of capital installed in year tau still in service in year t."""
        if t < tau:
            return 0.0
        return (1.0 - self.retirement) ** (t - tau)


def _series(x, n: int, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.shape != (n,):
        raise UsageError(f"{name} must have {n} entries (years 0..T)")
    return arr.copy()


def discount_factors(r: float, T: int) -> np.ndarray:
    return (1.0 + r) ** -np.arange(T + 1, dtype=float)


def npv_cost(model: CostModel, opex, risk) -> float:
    """Present value of capex + opex + risk over 0..T, plus discounted salvage."""
    n = model.horizon + 1
    opex = np.asarray(opex, dtype=float)
    risk = np.asarray(risk, dtype=float)
    if opex.shape != (n,) or risk.shape != (n,):
        raise UsageError(f"cash-flow series must have {n} entries")
    d = discount_factors(model.discount, model.horizon)
    flows = model.capex + opex + risk
    return float(math.fsum(flows * d) + model.salvage * d[-1])


def eac(npv: float, r: float, T: int) -> float:
    """Equivalent annual cost via the capital-recovery factor."""
    if r <= 0 or T < 1:
        raise UsageError("need r > 0 and T >= 1")
    # r / (1 - (1+r)^-T), with the denominator formed without cancellation
    return npv * r / -math.expm1(-T * math.log1p(r))


def pv(series, r: float) -> float:
    s = np.asarray(series, dtype=float)
    return float(math.fsum(s * discount_factors(r, s.size - 1)))


def opex_year(model: CostModel, t: int) -> float:
    """Energy + leases + O&M on surviving capital for year ``t``."""
    if not 0 <= t <= model.horizon:
        raise UsageError("year outside the horizon")
    energy = sum(d.power_kw * d.count for d in model.devices) * model.hours[t] * model.tariff[t]
    lease = sum(l.rate * l.km for l in model.leases)
    base = sum(model.capex[tau] * model.survival(tau, t) for tau in range(t + 1))
    return float(energy + lease + model.om[t] * base)


def annual_tariff(monthly: Sequence[float], hours_by_month: Sequence[float] | None = None) -> float:
    """Hours-weighted average of month-varying tariffs."""
    m = np.asarray(monthly, dtype=float)
    if m.shape != (12,):
        raise UsageError("need 12 monthly tariffs")
    w = np.asarray(MONTH_DAYS if hours_by_month is None else hours_by_month, dtype=float)
    return float(np.dot(m, w) / w.sum())


def annualize(window_value: float, window_hours: float) -> float:
    """Scale a total observed over the simulated window to one year."""
    if window_hours <= 0:
        raise UsageError("window must be positive")
    return window_value * HOURS_PER_YEAR / window_hours


# -- risk and output ------------------------------------------------------------


@dataclass
class RiskModel:
    """Per-class penalty and confidentiality inputs, with per-architecture hazards.

    ``hazard`` maps an architecture to a yearly breach-probability series; the
    hybrid hazard is derived from the PQC and QKD series when absent.
    """

    c_sla: Mapping[str, float]
    volume: Mapping[str, float]
    v_conf: Mapping[str, float]
    hazard: Mapping[str, np.ndarray]

    def __post_init__(self):
        for name in ("c_sla", "volume", "v_conf"):
            if any(v < 0 for v in getattr(self, name).values()):
                raise ConfigurationError(f"{name} values must be nonnegative")
        self.hazard = {k: np.asarray(v, dtype=float) for k, v in self.hazard.items()}
        for k, v in self.hazard.items():
            if np.any((v < 0) | (v > 1)):
                raise ConfigurationError(f"hazard for {k} must lie in [0, 1]")


def risk_sla(availability: Mapping[str, float], risk: RiskModel, t: int = 0) -> float:
    """SLA penalties proportional to unavailability."""
    total = 0.0
    for k, a in availability.items():
        if not 0 <= a <= 1:
            raise UsageError("availability must be in [0, 1]")
        total += risk.c_sla.get(k, 0.0) * (1.0 - a) * risk.volume.get(k, 0.0)
    return total


def hybrid_hazard(rho: float, p_pqc: float, p_qkd: float) -> float:
    """Convex mix of the two hazards by the QKD-supported share rho."""
    for v in (rho, p_pqc, p_qkd):
        if not 0 <= v <= 1:
            raise UsageError("inputs must be in [0, 1]")
    return (1.0 - rho) * p_pqc + rho * p_qkd


def risk_sndl(risk: RiskModel, arch: str, t: int, rho: Mapping[str, float] | None = None) -> float:
    """Annualized store-now-decrypt-later value at risk."""
    if arch in risk.hazard:
        p = {k: float(risk.hazard[arch][t]) for k in risk.v_conf}
    elif arch == "Hybrid" and "PqcOnly" in risk.hazard and "QkdOnly" in risk.hazard:
        rho = rho or {}
        p = {k: hybrid_hazard(rho.get(k, 1.0), float(risk.hazard["PqcOnly"][t]),
                              float(risk.hazard["QkdOnly"][t])) for k in risk.v_conf}
    else:
        raise UsageError(f"no hazard defined for {arch}")
    return float(sum(p[k] * v for k, v in risk.v_conf.items()))


def secval_year(availability: Mapping[str, float], weights: Mapping[str, float],
                q: Mapping[str, float], t: int = 0) -> float:
    """SLA-adjusted output: sum of weight x availability x delivered volume."""
    return float(sum(weights[k] * a * q[k] for k, a in availability.items()))


def lcosec(npv: float, pv_secval: float) -> float:
    if pv_secval <= 0:
        raise Undefined("discounted security output must be positive")
    return npv / pv_secval


def cis(d_npv: float, d_pv: float) -> float:
    """Incremental cost per incremental unit of security output."""
    if d_pv <= 0:
        raise NotComparable("no incremental security output versus the baseline")
    return d_npv / d_pv


class Verdict(NamedTuple):
    ok: bool
    net_benefit: float


def breakeven(price: float, d_pv: float, d_npv: float) -> Verdict:
    """Shadow-price test: value of added output at ``price`` covers added cost."""
    net = price * d_pv - d_npv
    return Verdict(net >= 0, net)


# -- scenarios -------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    name: str
    prob: float
    overrides: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ScenarioSet:
    scenarios: tuple[Scenario, ...]

    def __post_init__(self):
        if not self.scenarios:
            raise ConfigurationError("scenario set is empty")
        if any(s.prob < 0 for s in self.scenarios):
            raise ConfigurationError("scenario probabilities must be nonnegative")
        total = math.fsum(s.prob for s in self.scenarios)
        if abs(total - 1.0) > 1e-9:
            raise ConfigurationError(f"scenario probabilities sum to {total}, not 1")
        names = [s.name for s in self.scenarios]
        if len(set(names)) != len(names):
            raise ConfigurationError("duplicate scenario names")

    @property
    def probs(self) -> np.ndarray:
        return np.array([s.prob for s in self.scenarios])

    @classmethod
    def from_dict(cls, d) -> "ScenarioSet":
        items = d["scenarios"] if isinstance(d, Mapping) else d
        return cls(tuple(Scenario(s["name"], float(s["prob"]), dict(s.get("overrides", {})))
                         for s in items))

    def to_dict(self) -> dict:
        return {"scenarios": [{"name": s.name, "prob": s.prob, "overrides": dict(s.overrides)}
                              for s in self.scenarios]}


class LcosecSummary(NamedTuple):
    expected: float
    q05: float
    q50: float
    q95: float
    cvar: float


def _weighted_quantile(values: np.ndarray, probs: np.ndarray, q: float) -> float:
    order = np.argsort(values, kind="mergesort")
    cum = np.cumsum(probs[order])
    i = int(np.searchsorted(cum, q - 1e-12, side="left"))
    return float(values[order][min(i, len(values) - 1)])


def expected_lcosec(probs, values, cvar_level: float = 0.95) -> LcosecSummary:
    """Probability-weighted LCoSec with quantiles and upper-tail CVaR."""
    p = np.asarray(probs, dtype=float)
    v = np.asarray(values, dtype=float)
    if p.shape != v.shape or p.size == 0:
        raise UsageError("need one value per scenario")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ConfigurationError("scenario probabilities must sum to 1")
    mean = float(np.dot(p, v))
    var = _weighted_quantile(v, p, cvar_level)
    tail = float(np.dot(p, np.maximum(v - var, 0.0)))
    cvar = var + tail / (1.0 - cvar_level) if cvar_level < 1 else float(v[p > 0].max())
    return LcosecSummary(mean, _weighted_quantile(v, p, 0.05), _weighted_quantile(v, p, 0.5),
                         _weighted_quantile(v, p, 0.95), cvar)


def chance_constraint(probs, availability, targets, eps: float) -> tuple[bool, float]:
    """Probability mass of scenarios meeting every class target in every year.

    ``availability`` has shape (scenarios, classes, years); ``targets`` one
    value per class. The test is inclusive.
    """
    if not 0 <= eps < 1:
        raise UsageError("eps must be in [0, 1)")
    p = np.asarray(probs, dtype=float)
    a = np.asarray(availability, dtype=float)
    if a.ndim == 2:
        a = a[:, :, None]
    tgt = np.asarray(targets, dtype=float)[None, :, None]
    ok = np.all(a >= tgt, axis=(1, 2))
    mass = float(math.fsum(p[ok]))
    return mass >= 1.0 - eps - 1e-12, mass


# -- synthetic price table and per-architecture builders --------------------------


@dataclass(frozen=True)
class PriceTable:
    """Synthetic default prices; every field can be overridden per scenario."""

    pqc_sw_per_node: float = 2_000.0
    qkd_pair_per_link: float = 150_000.0
    trusted_node: float = 250_000.0
    kms_per_node: float = 10_000.0
    integration_per_node: float = 3_000.0
    qkd_power_kw: float = 0.5  # per device, two per link
    pqc_power_kw: float = 0.05  # per node
    tariff: float = 0.12
    lease_per_km_year: float = 500.0
    om_fraction: float = 0.05
    retirement: float = 0.0
    salvage_fraction: float = 0.0
    discount: float = 0.06
    horizon_years: int = 10
    p_qkd: float = 1e-4
    p_pqc_start: float = 1e-3
    p_pqc_end: float = 1e-2
    pqc_hazard_scale: float = 1.0
    capex_scale: float = 1.0
    tariff_scale: float = 1.0
    lease_scale: float = 1.0
    v_conf_per_node: float = 20_000.0

    def with_overrides(self, overrides: Mapping[str, float]) -> "PriceTable":
        names = {f.name for f in fields(self)}
        bad = set(overrides) - names
        if bad:
            raise ConfigurationError(f"unknown price overrides {sorted(bad)}")
        cast = {k: (int(v) if k == "horizon_years" else float(v)) for k, v in overrides.items()}
        return replace(self, **cast)

    def pqc_hazard(self) -> np.ndarray:
        ramp = np.linspace(self.p_pqc_start, self.p_pqc_end, self.horizon_years + 1)
        return np.clip(ramp * self.pqc_hazard_scale, 0.0, 1.0)

    def qkd_hazard(self) -> np.ndarray:
        return np.full(self.horizon_years + 1, self.p_qkd)

    @classmethod
    def load(cls, path=None) -> "PriceTable":
        if path is None:
            text = resources.files("qkdgrid.data").joinpath("prices.json").read_text()
        else:
            with open(path) as fh:
                text = fh.read()
        return cls().with_overrides(json.loads(text))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def trusted_nodes(topology: Topology) -> list[str]:
    """Relay nodes on long-haul chains (no traffic classes of their own)."""
    if topology.kind != TopologyKind.LONGHAUL:
        return []
    return [n.id for n in topology.nodes.values() if n.tier == Tier.AGGREGATION and not n.class_ids]


def build_cost_model(topology: Topology, arch: str, prices: PriceTable) -> CostModel:
    if arch not in ARCHS:
        raise UsageError(f"unknown architecture {arch}")
    p = prices
    T = p.horizon_years
    n_nodes = len(topology.nodes)
    n_links = len(topology.links)
    capex0 = p.kms_per_node * n_nodes
    devices: list[Device] = []
    leases: list[LeasedLink] = []
    if arch in ("PqcOnly", "Hybrid"):
        capex0 += p.pqc_sw_per_node * n_nodes
        devices.append(Device(p.pqc_power_kw, n_nodes))
    if arch in ("QkdOnly", "Hybrid"):
        capex0 += p.qkd_pair_per_link * n_links + p.trusted_node * len(trusted_nodes(topology))
        devices.append(Device(p.qkd_power_kw, 2 * n_links))
        leases = [LeasedLink(l.d_km, p.lease_per_km_year * p.lease_scale)
                  for l in topology.links.values()]
    if arch == "Hybrid":
        capex0 += p.integration_per_node * n_nodes
    capex = np.zeros(T + 1)
    capex[0] = capex0 * p.capex_scale
    return CostModel(
        horizon=T,
        discount=p.discount,
        capex=capex,
        devices=devices,
        tariff=p.tariff * p.tariff_scale,
        leases=leases,
        om=p.om_fraction,
        retirement=p.retirement,
        salvage=-p.salvage_fraction * capex[0],
    )


def class_hosts(topology: Topology) -> dict[str, int]:
    out: dict[str, int] = {}
    for node in topology.nodes.values():
        for c in node.class_ids:
            out[c] = out.get(c, 0) + 1
    return out


def build_risk_model(topology: Topology, classes: Mapping[str, TrafficClass],
                     prices: PriceTable) -> RiskModel:
    hosts = class_hosts(topology)
    ids = [k for k in classes if hosts.get(k)]
    return RiskModel(
        c_sla={k: classes[k].c_sla for k in ids},
        volume={k: classes[k].q_per_year * hosts[k] for k in ids},
        v_conf={k: prices.v_conf_per_node * classes[k].t_conf_years * hosts[k] for k in ids},
        hazard={"PqcOnly": prices.pqc_hazard(), "QkdOnly": prices.qkd_hazard()},
    )


@dataclass(frozen=True)
class EconResult:
    arch: str
    npv: float
    eac: float
    risk_sla: float
    risk_sndl: float
    pv_secval: float
    lcosec: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("arch", "npv", "eac", "risk_sla", "risk_sndl", "pv_secval", "lcosec")}


def evaluate(topology: Topology, classes: Mapping[str, TrafficClass], arch: str,
             availability: Mapping[str, float], rho: Mapping[str, float] | None = None,
             prices: PriceTable | None = None) -> EconResult:
    """Full economics for one architecture given simulated per-class availability.

    Availability and QKD-supported shares are held constant across the years.
    """
    prices = prices or PriceTable()
    model = build_cost_model(topology, arch, prices)
    risk = build_risk_model(topology, classes, prices)
    avail = {k: availability[k] for k in risk.c_sla if k in availability}
    T = model.horizon
    opex = np.array([opex_year(model, t) for t in range(T + 1)])
    r_sla = np.full(T + 1, risk_sla(avail, risk))
    r_sndl = np.array([risk_sndl(risk, arch, t, rho) for t in range(T + 1)])
    total = npv_cost(model, opex, r_sla + r_sndl)
    q = risk.volume
    weights = {k: classes[k].weight for k in avail}
    sec = np.full(T + 1, secval_year(avail, weights, q))
    pv_sec = pv(sec, model.discount)
    return EconResult(arch, total, eac(total, model.discount, T), pv(r_sla, model.discount),
                      pv(r_sndl, model.discount), pv_sec, lcosec(total, pv_sec))
