"""End-to-end acceptance checks.

Each test records one PASS/FAIL line (printed, and repeated in the terminal
summary) before asserting, so a failing check still reports its numbers.
Simulation settings are pinned here rather than taken from package defaults.
"""

import json
import math
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from qkdgrid.analytics import (
    mean_ci,
    reserve_depletion_is,
    underflow_exponent,
)
from qkdgrid.buffer import BufferState, buffer_step
from qkdgrid.cli import main
from qkdgrid.economics import CostModel, PriceTable, breakeven, cis, eac, evaluate, npv_cost
from qkdgrid.errors import NotComparable
from qkdgrid.rng import stream
from qkdgrid.simulator import (
    DisturbanceRates,
    Experiment,
    SimulationConfig,
    run_many,
    size_supply,
    sweep,
)
from qkdgrid.supply import allocate_maxmin
from qkdgrid.topology import build_distribution, build_longhaul, build_metro
from qkdgrid.traffic import load_classes

ARCHS = ("PqcOnly", "QkdOnly", "Hybrid")
DAY = 86_400
SIGMA_LOG = DisturbanceRates().sigma_log


def _outage_rate(share: float, median_s: float) -> float:
    """Events per day giving ``share`` of time in outage with lognormal durations."""
    return share * DAY / (median_s * math.exp(SIGMA_LOG**2 / 2))


# -- analytic oracles -------------------------------------------------------------


def test_gaussian_exponent(verdict):
    x = stream(0, "acceptance", "gauss").normal(10.0, 5.0, 1_000_000)
    k = underflow_exponent(x)
    spread = [underflow_exponent(stream(s, "acceptance", "gauss").normal(10.0, 5.0, 1_000_000))
              for s in range(1, 5)]
    ok = abs(k / 0.8 - 1) <= 0.05
    verdict(1, "gaussian exponent", ok,
            f"kappa={k:.4f} vs 0.8; seeds 1-4 give {min(spread):.3f}..{max(spread):.3f}")
    assert ok


def test_cramer_bound(verdict):
    mu, sd = 10.0, 30.0
    grid = np.arange(0, 50_001, 5_000, dtype=float)
    kappa = underflow_exponent(stream(7, "acc2", "cgf").normal(mu, sd, 1_000_000))
    logp = reserve_depletion_is(mu, sd, grid, 4000, stream(7, "acc2", "is"), tilt=kappa)
    log_c = logp[0]  # C fitted at b_min = 0
    excess = logp - (log_c - kappa * grid)
    bound_ok = bool(np.all(excess <= 0))
    slope = np.polyfit(grid, logp, 1)[0]
    slope_ok = abs(slope / -kappa - 1) <= 0.15
    verdict(2, "cramer bound", bound_ok and slope_ok,
            f"bound holds at {int(np.sum(excess <= 0))}/{grid.size} thresholds, worst ratio "
            f"{math.exp(excess.max()):.3f}; slope {slope:.3e} vs -kappa {-kappa:.3e} "
            f"({abs(slope / -kappa - 1):.2%})")
    assert slope_ok
    assert bound_ok


def _outage_fraction(ratio, delta, n=100_000, mean_d=1000.0, seed=3):
    rng = stream(seed, "acc3", ratio)
    d = rng.poisson(mean_d, n).astype(float)
    a = rng.poisson(ratio * mean_d + delta, n).astype(float)
    b_max, b_min = 100 * mean_d, 10 * mean_d
    st = BufferState(level=b_max / 2)
    for ai, di in zip(a, d):
        buffer_step(st, ai, di, b_max, b_min)
    return st.steps_outage / st.steps_total


def test_stability_dichotomy(verdict):
    short = _outage_fraction(0.9, 0.0)
    long = _outage_fraction(1.2, 50.0)
    ok = short > 0.99 and long < 1e-3
    verdict(3, "stability dichotomy", ok, f"0.9x -> {short:.4f}, 1.2x+delta -> {long:.2e}")
    assert ok


def test_annuity_identities(verdict):
    eps = np.finfo(float).eps
    worst = 0.0
    for npv, r in [(1000.0, 0.05), (1234.5, 0.07), (1.0, 1e-6), (9e9, 0.3)]:
        want = npv * (1 + r)
        worst = max(worst, abs(eac(npv, r, 1) - want) / (want * eps))
    trip = 0.0
    for c, r, T in [(100.0, 0.06, 10), (3.7e5, 0.12, 25), (1.0, 0.01, 40)]:
        flows = np.full(T + 1, c)
        flows[0] = 0.0
        model = CostModel(horizon=T, discount=r, capex=0.0)
        back = eac(npv_cost(model, flows, np.zeros(T + 1)), r, T)
        trip = max(trip, abs(back / c - 1))
    ok = worst <= 4 and trip <= 1e-9
    verdict(4, "annuity identities", ok, f"T=1 error {worst:.0f} ulp, round trip {trip:.1e}")
    assert ok


# -- simulation orderings -----------------------------------------------------------


@pytest.mark.slow
def test_architecture_ordering(verdict):
    top = build_metro(19, 60.0, 3, seed=0)  # 19 substations plus the control centre
    assert len(top.nodes) == 20
    rates = DisturbanceRates(outage_per_day=_outage_rate(0.10, 3600.0), outage_median_s=3600.0)
    seeds = tuple(range(20))
    p = {}
    for arch in ARCHS:
        exp = Experiment(top, load_classes(), disturbances=rates,
                         config=SimulationConfig(horizon=7 * DAY, warmup=DAY, architecture=arch,
                                                 delay_samples=500, seeds=seeds))
        exp = size_supply(exp, qkd_margin=1.2, pqc_margin=1.2)
        p[arch] = np.array([v for r in run_many(exp, seeds) for v in r.table("p_out").values()])
    med = {a: float(np.median(v)) for a, v in p.items()}
    p90 = {a: float(np.percentile(v, 90)) for a, v in p.items()}
    order = med["Hybrid"] < med["QkdOnly"] < med["PqcOnly"]
    gap = p90["Hybrid"] * 5 <= p90["QkdOnly"]
    verdict(5, "architecture ordering", order and gap,
            "median " + ", ".join(f"{a} {med[a]:.3g}" for a in ARCHS)
            + f"; p90 Hybrid {p90['Hybrid']:.3g} vs QKD {p90['QkdOnly']:.3g}")
    assert gap
    assert order


DOMINANCE_SEEDS = tuple(range(10))


@pytest.fixture(scope="module")
def dominance():
    """Per-class median availability and QKD share, per topology and architecture.

    Outages cover about 3% of each link's time (two a day, 20 min median).
    """
    tops = {
        "Metro": build_metro(19, 60.0, 3, seed=0),
        "Distribution": build_distribution(12, 4, 20.0, seed=0),
        "LongHaul": build_longhaul(200.0, 1),
    }
    rates = DisturbanceRates(outage_per_day=2.0, outage_median_s=1200.0)
    classes = load_classes()
    out = {}
    for name, top in tops.items():
        out[name] = {}
        for arch in ARCHS:
            exp = Experiment(top, classes, disturbances=rates,
                             config=SimulationConfig(horizon=DAY, warmup=7200, architecture=arch,
                                                     delay_samples=2000, seeds=DOMINANCE_SEEDS))
            exp = size_supply(exp, qkd_margin=1.2, pqc_margin=1.2)
            runs = run_many(exp, DOMINANCE_SEEDS)
            med = {}
            for metric in ("availability", "qkd_share"):
                med[metric] = {k: float(np.median([r.table(metric)[k] for r in runs]))
                               for k in runs[0].table(metric)}
            out[name][arch] = med
    return tops, classes, out


@pytest.mark.slow
def test_availability_dominance(verdict, dominance):
    _, _, res = dominance
    bad = []
    for topo, by_arch in res.items():
        hyb = by_arch["Hybrid"]["availability"]
        for k, a in hyb.items():
            for other in ("PqcOnly", "QkdOnly"):
                if a < by_arch[other]["availability"][k]:
                    bad.append(f"{topo}/{k}/{other}")
    lows = {t: min(r["QkdOnly"]["availability"].values()) for t, r in res.items()}
    verdict(6, "availability dominance", not bad,
            f"violations {bad or 'none'}; lowest QKD-only median "
            + ", ".join(f"{t} {v:.4f}" for t, v in lows.items()))
    assert not bad


@pytest.mark.slow
def test_heatmap_monotone(verdict):
    top = build_longhaul(150.0, 2, alpha=0.18)
    exp = Experiment(top, load_classes(),
                     disturbances=DisturbanceRates(outage_per_day=10.0, outage_median_s=1200.0),
                     config=SimulationConfig(horizon=2 * DAY, warmup=7200, architecture="Hybrid",
                                             delay_samples=4000, b_clear_factor=1.0,
                                             seeds=tuple(range(16))))
    exp = size_supply(exp, qkd_margin=3.8)
    alphas = [0.18, 0.20, 0.22, 0.25, 0.28]
    reserves = list(np.linspace(5e6, 50e6, 7))
    cells = sweep(exp, [("topology.alpha", alphas), ("nodes.reserve_bits", reserves)])
    grid = np.array([c.result.estimate("min_critical_availability", "all").mean
                     for c in cells]).reshape(len(alphas), len(reserves))
    in_alpha = bool(np.all(np.diff(grid, axis=0) <= 0))
    in_reserve = bool(np.all(np.diff(grid, axis=1) >= 0))
    need = [next((b for b, a in zip(reserves, row) if a >= 0.999), math.inf) for row in grid]
    tilt = need[alphas.index(0.28)] > need[alphas.index(0.20)]
    verdict(7, "heatmap monotonicity", in_alpha and in_reserve and tilt,
            f"non-increasing in alpha {in_alpha}, non-decreasing in b_min {in_reserve}; "
            "b_min for A>=0.999: " + ", ".join(f"{a:.2f}->{b / 1e6:g}M" for a, b in zip(alphas, need)))
    assert in_alpha and in_reserve
    assert tilt


@pytest.mark.slow
def test_refresh_burst_sensitivity(verdict):
    top = build_metro(9, 30.0, 2, seed=0, b_min=5e4, b_max=2.5e5)
    base = Experiment(top, load_classes(),
                      config=SimulationConfig(horizon=43_200, warmup=1800, architecture="Hybrid",
                                              delay_samples=2000, seeds=tuple(range(8))))
    # supply sized for the heaviest refresh setting, then the nominal classes restored
    sized = size_supply(base.with_override("classes.*.f_hz", 5.0), qkd_margin=1.1)
    exp = replace(sized, classes=base.classes)
    fs, betas = [0.1, 0.5, 1.0, 2.0, 5.0], [1.0, 1.5, 2.0, 3.0]
    cells = sweep(exp, [("classes.*.f_hz", fs), ("classes.*.beta", betas)])
    critical = {"GOOSE", "SV", "PMU", "SCADA"}
    med = np.zeros((len(fs), len(betas)))
    tail = np.zeros_like(med)
    for i, c in enumerate(cells):
        v = np.array([val for r in c.result.runs for m, key, val in r.metrics
                      if m == "node_availability" and key.split(":")[1] in critical])
        med.flat[i] = np.median(v)
        tail.flat[i] = np.median(v) - np.percentile(v, 5)
    mono = bool(np.all(np.diff(med, axis=1) <= 0))
    wide = tail[fs.index(5.0), -1] > tail[fs.index(1.0), -1]
    verdict(8, "refresh/burst sensitivity", mono and wide,
            f"non-increasing in beta {mono}; p50-p5 at beta=3: f=5 {tail[-1, -1]:.2e}, "
            f"f=1 {tail[2, -1]:.2e}")
    assert mono
    assert wide


# -- economics --------------------------------------------------------------------------


def _lcosec(dominance, prices):
    tops, classes, res = dominance
    return {t: {a: evaluate(tops[t], classes, a, res[t][a]["availability"],
                            res[t][a]["qkd_share"], prices).lcosec for a in ARCHS}
            for t in tops}


@pytest.mark.slow
def test_economics_ordering(verdict, dominance):
    p = PriceTable()
    assert p.qkd_pair_per_link > p.pqc_sw_per_node
    lc = _lcosec(dominance, p)
    per_topo = {t: v["PqcOnly"] < v["QkdOnly"] <= v["Hybrid"] for t, v in lc.items()}
    scaling = all(lc["LongHaul"][a] > lc["Metro"][a] for a in ("QkdOnly", "Hybrid"))
    ok = all(per_topo.values()) and scaling
    verdict(9, "economics ordering", ok,
            "; ".join(f"{t} " + "/".join(f"{v[a]:.3f}" for a in ARCHS) for t, v in lc.items())
            + f" (PQC/QKD/Hybrid); LongHaul > Metro for QKD-based {scaling}")
    assert scaling
    assert all(per_topo.values()), per_topo


@pytest.mark.slow
def test_threat_escalation(verdict, dominance):
    base = _lcosec(dominance, PriceTable())
    threat = _lcosec(dominance, PriceTable().with_overrides({"pqc_hazard_scale": 5}))
    lift = {t: {a: threat[t][a] / base[t][a] - 1 for a in ARCHS} for t in base}
    ok = all(v["PqcOnly"] > max(v["QkdOnly"], v["Hybrid"]) for v in lift.values())
    verdict(10, "threat escalation", ok,
            "; ".join(f"{t} " + "/".join(f"{v[a]:+.1%}" for a in ARCHS) for t, v in lift.items()))
    assert ok


def test_breakeven_loci(verdict):
    cases = [  # (d_pv, d_npv, verdict at 0.8, verdict at 1.2)
        (100.0, 100.0, False, True),
        (100.0, 80.0, True, True),
        (100.0, 120.0, False, True),
        (100.0, 121.0, False, False),
        (100.0, 79.0, True, True),
        (50.0, 70.0, False, False),
    ]
    got = [(breakeven(0.8, dp, dn).ok, breakeven(1.2, dp, dn).ok) for dp, dn, *_ in cases]
    loci = got == [(lo, hi) for *_, lo, hi in cases]
    endpoints = cis(0.0, 5.0) == 0.0 and cis(10.0, 4.0) == 2.5
    contracts = 0
    for d_pv in (0.0, -3.0):
        try:
            cis(10.0, d_pv)
        except NotComparable:
            contracts += 1
    ok = loci and endpoints and contracts == 2
    verdict(11, "break-even loci", ok,
            f"bracketing {loci}, cis endpoints {endpoints}, NotComparable raised {contracts}/2")
    assert ok


def test_determinism(verdict, tmp_path):
    assert main(["--out", str(tmp_path), "topology", "metro", "--substations", "5",
                 "--ring-km", "25", "--chords", "1"]) == 0
    (tmp_path / "script.json").write_text(json.dumps(
        [{"kind": "KeyRateOutage", "link": "r1", "start_s": 900, "duration_s": 600}]))
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps({
        "topology": "topology.json",
        "script": "script.json",
        "architectures": list(ARCHS),
        "sim": {"horizon": 3600, "warmup": 600, "seeds": [0, 1, 2, 3], "delay_samples": 200},
        "sizing": {"qkd_margin": 1.1, "pqc_margin": 1.1},
        "output": "out",
    }))

    def run(out, *extra):
        assert main(["--manifest", str(manifest), "--out", str(out), *extra, "run"]) == 0
        return (out / "results.csv").read_bytes()

    first = run(tmp_path / "a")
    again = run(tmp_path / "b")
    parallel = run(tmp_path / "c", "--parallel", "2")
    ok = first == again == parallel
    verdict(12, "determinism", ok, f"{len(first)} bytes; rerun {first == again}, "
                                   f"parallel {first == parallel}")
    assert ok


def _water_fill(budget, demands):
    """Exact rational max-min allocation."""
    b = Fraction(budget)
    ds = [Fraction(d) for d in demands]
    if sum(ds) <= b:
        return ds
    remaining, m = b, len(ds)
    for d in sorted(ds):
        if d * m <= remaining:
            remaining -= d
            m -= 1
        else:
            return [min(d, remaining / m) for d in ds]
    return ds


def test_allocation_oracle(verdict):
    rng = stream(13, "acc13")
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(1, 7))
        demands = rng.integers(0, 10_000, n)
        if rng.random() < 0.3:  # ties
            demands[rng.integers(0, n)] = demands[0]
        budget = int(rng.integers(0, int(demands.sum() * 1.2) + 2))
        keys = [f"n{i}" for i in range(n)]
        got = allocate_maxmin(budget, dict(zip(keys, demands.tolist())))
        want = _water_fill(budget, demands.tolist())
        mismatches += any(got[k] != float(w) for k, w in zip(keys, want))
    verdict(13, "allocation oracle", mismatches == 0, f"{mismatches}/1000 instances differ")
    assert mismatches == 0


def test_ci_coverage(verdict):
    rng = stream(14, "acc14")
    hits = 0
    for _ in range(200):
        est = mean_ci(rng.binomial(1, 0.3, 50).astype(float))
        hits += est.lo <= 0.3 <= est.hi
    rate = hits / 200
    ok = 0.90 <= rate <= 0.99
    verdict(14, "confidence interval coverage", ok, f"coverage {rate:.3f}")
    assert ok
