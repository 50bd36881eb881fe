"""Per-node key buffers: recursion, fallback switching and trace generation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from . import _kernels
from ._kernels import CONSUMED, FALLBACK, N_ACC, OUTAGE, OVERFLOW, SHORTFALL, STEPS, SUPPLIED
from .errors import ConfigurationError, UsageError
from .rng import stream
from .supply import SupplySchedule, fed_csr
from .topology import Topology
from .traffic import ArrivalSampler, TrafficClass, class_rate, demand_matrix, node_classes

CHUNK = 21_600  # steps per kernel call; fixed so results never depend on it


@dataclass
class BufferState:
    level: float
    chi: bool = False
    steps_total: int = 0
    steps_outage: int = 0
    steps_fallback: int = 0
    consumed_bits: float = 0.0
    supplied_bits: float = 0.0
    shortfall_bits: float = 0.0
    overflow_bits: float = 0.0


@dataclass(frozen=True)
class StepRecord:
    t: int
    node: str
    level: float
    chi: bool
    demand: float
    effective_demand: float
    supply: float


def effective_demand(d: float, phi: float, chi: bool) -> float:
    """Demand left on the key buffer after a share ``phi`` falls back to PQC."""
    return d * (1.0 - phi) if chi else d


def buffer_step(state: BufferState, a: float, d_eff: float, b_max: float,
                b_min: float = 0.0) -> BufferState:
    """Consume ``d_eff`` then add supply ``a``, capped at ``b_max``.

    Unmet demand is dropped and counted as shortfall; supply beyond capacity
    is discarded and counted as overflow. The state is updated in place and
    returned.
    """
    if a < 0 or d_eff < 0:
        raise UsageError("supply and demand must be nonnegative")
    b = state.level
    short = max(0.0, d_eff - b)
    tot = max(0.0, b - d_eff) + a
    new = min(b_max, tot)
    state.steps_total += 1
    state.steps_outage += int(b < b_min)
    state.steps_fallback += int(state.chi)
    state.consumed_bits += d_eff - short
    state.supplied_bits += a
    state.shortfall_bits += short
    state.overflow_bits += tot - new
    state.level = new
    return state


def update_fallback(state: BufferState, b_min: float, b_clear: float) -> bool:
    """Hysteresis switch: set below ``b_min``, clear only at or above ``b_clear``."""
    if b_clear < b_min:
        raise ConfigurationError("b_clear must be >= b_min")
    if state.chi:
        state.chi = state.level < b_clear
    else:
        state.chi = state.level < b_min
    return state.chi


@dataclass
class Trace:
    """Full per-step record of one run (levels at step start)."""

    node_ids: list[str]
    level: np.ndarray
    chi: np.ndarray
    demand: np.ndarray
    effective_demand: np.ndarray
    supply: np.ndarray
    b_min: np.ndarray
    final_level: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def horizon(self) -> int:
        return self.level.shape[1]

    @property
    def outage(self) -> np.ndarray:
        return self.level < self.b_min[:, None]

    def records(self) -> Iterator[StepRecord]:
        for t in range(self.horizon):
            for i, node in enumerate(self.node_ids):
                yield StepRecord(t, node, float(self.level[i, t]), bool(self.chi[i, t]),
                                 float(self.demand[i, t]), float(self.effective_demand[i, t]),
                                 float(self.supply[i, t]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "node", "B_bits", "chi", "demand_bits", "eff_demand_bits",
                        "supply_bits"])
            for r in self.records():
                w.writerow([r.t, r.node, repr(r.level), int(r.chi), repr(r.demand),
                            repr(r.effective_demand), repr(r.supply)])


@dataclass
class BufferRun:
    node_ids: list[str]
    acc: np.ndarray  # (n_nodes, 2, N_ACC): all steps / post warm-up window
    initial_level: np.ndarray
    final_level: np.ndarray
    trace: Trace | None = None

    def window(self, field_index: int) -> np.ndarray:
        return self.acc[:, 1, field_index]

    def totals(self, field_index: int) -> np.ndarray:
        return self.acc[:, 0, field_index]

    def states(self, window: bool = False) -> dict[str, BufferState]:
        k = 1 if window else 0
        out = {}
        for i, node in enumerate(self.node_ids):
            a = self.acc[i, k]
            out[node] = BufferState(
                level=float(self.final_level[i]),
                steps_total=int(a[STEPS]),
                steps_outage=int(a[OUTAGE]),
                steps_fallback=int(a[FALLBACK]),
                consumed_bits=float(a[CONSUMED]),
                supplied_bits=float(a[SUPPLIED]),
                shortfall_bits=float(a[SHORTFALL]),
                overflow_bits=float(a[OVERFLOW]),
            )
        return out


def make_samplers(topology: Topology, classes: Mapping[str, TrafficClass], seed: int,
                  dt: float) -> list[list[tuple[TrafficClass, ArrivalSampler]]]:
    out = []
    for node in topology.nodes.values():
        pairs = []
        for cls in node_classes(node, classes):
            model = cls.arrival_model(class_rate(node, cls))
            sampler = ArrivalSampler(model, dt, stream(seed, "arrivals", node.id, cls.id),
                                     stream(seed, "modulation", node.id, cls.id))
            pairs.append((cls, sampler))
        out.append(pairs)
    return out


def simulate_buffers(
    topology: Topology,
    classes: Mapping[str, TrafficClass],
    schedule: SupplySchedule,
    horizon: int,
    seed: int,
    *,
    dt: float = 1.0,
    warmup: int = 0,
    phi: Sequence[float] | None = None,
    b_clear_factor: float = 1.5,
    policy: int = _kernels.MAXMIN,
    initial_level: Sequence[float] | None = None,
    record: bool = False,
    backend: str | None = None,
) -> BufferRun:
    """Step every node buffer over ``horizon`` steps.

    Per step: sample arrivals, form demand, scale it by the fallback share,
    allocate link supply, apply the buffer recursion and update the fallback
    flag. Deterministic given ``seed``.
    """
    if horizon < 1:
        raise UsageError("horizon must be at least one step")
    if b_clear_factor < 1:
        raise ConfigurationError("b_clear_factor must be >= 1")
    if schedule.horizon < horizon:
        raise UsageError("supply schedule shorter than the horizon")
    nodes = list(topology.nodes.values())
    n = len(nodes)
    b_max = np.array([x.b_max for x in nodes])
    b_min = np.array([x.b_min for x in nodes])
    b_clear = b_min * b_clear_factor
    phi_arr = np.array([x.phi for x in nodes] if phi is None else phi, dtype=float)
    if phi_arr.shape != (n,) or np.any((phi_arr < 0) | (phi_arr > 1)):
        raise ConfigurationError("phi must give one value in [0, 1] per node")
    B = b_max.copy() if initial_level is None else np.array(initial_level, dtype=float)
    B0 = B.copy()
    chi = B < b_min
    csr = fed_csr(topology, schedule.link_ids)
    samplers = make_samplers(topology, classes, seed, dt)
    link_rngs = [stream(seed, "pqc", lid) for lid in schedule.link_ids]
    acc = np.zeros((n, 2, N_ACC))

    trace = None
    if record:
        trace = Trace(
            node_ids=topology.node_ids,
            level=np.zeros((n, horizon)),
            chi=np.zeros((n, horizon), dtype=bool),
            demand=np.zeros((n, horizon)),
            effective_demand=np.zeros((n, horizon)),
            supply=np.zeros((n, horizon)),
            b_min=b_min,
        )
    for t0 in range(0, horizon, CHUNK):
        t1 = min(horizon, t0 + CHUNK)
        demand = demand_matrix(samplers, t1 - t0, dt)
        bits = schedule.chunk(t0, t1, link_rngs)
        rec = None
        if trace is not None:
            trace.demand[:, t0:t1] = demand
            rec = (trace.level[:, t0:t1], trace.chi[:, t0:t1],
                   trace.effective_demand[:, t0:t1], trace.supply[:, t0:t1])
            rec = tuple(np.ascontiguousarray(r) for r in rec)
        w0 = min(max(warmup - t0, 0), t1 - t0)
        _kernels.run_chunk(B, chi, demand, bits, csr, topology.sharing == "shared", policy,
                           phi_arr, b_min, b_clear, b_max, w0, acc, rec, backend)
        if trace is not None:
            trace.level[:, t0:t1], trace.chi[:, t0:t1] = rec[0], rec[1]
            trace.effective_demand[:, t0:t1], trace.supply[:, t0:t1] = rec[2], rec[3]
    if trace is not None:
        trace.final_level = B.copy()
    return BufferRun(topology.node_ids, acc, B0, B.copy(), trace)


def run_trace(topology: Topology, classes: Mapping[str, TrafficClass],
              schedule: SupplySchedule, horizon: int, seed: int, **kw) -> Trace:
    """Simulate and return the full per-step trace."""
    return simulate_buffers(topology, classes, schedule, horizon, seed, record=True, **kw).trace
