"""Traffic classes, arrival processes and per-node key demand."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, UsageError
from .topology import NodeSpec

log = logging.getLogger(__name__)

# Plaintext-rate ceiling (bits/s) under which a class may use one-time pad.
OTP_CAP_BPS = 4096.0


@dataclass(frozen=True)
class TrafficClass:
    id: str
    name: str
    lam: float  # packets/s per node
    s_bits: float
    delay_bound: float  # seconds
    a_target: float
    beta: float = 1.0
    f_hz: float = 1.0
    l_sess: float = 256.0
    l_mac: float = 128.0
    uses_otp: bool = False
    t_conf_years: float = 1.0
    weight: float = 1.0
    q_per_year: float = 1.0
    c_sla: float = 0.0
    on_dwell: float = 10.0
    off_dwell: float = 30.0

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigurationError(f"class {self.id}: arrival rate must be nonnegative")
        if self.beta < 1:
            raise ConfigurationError(f"class {self.id}: burst factor must be >= 1")
        if not 0 < self.a_target <= 1:
            raise ConfigurationError(f"class {self.id}: availability target must be in (0, 1]")
        if not self.weight > 0:
            raise ConfigurationError(f"class {self.id}: weight must be positive")
        if self.uses_otp and self.lam * self.s_bits > OTP_CAP_BPS:
            raise ConfigurationError(
                f"class {self.id}: OTP only allowed below {OTP_CAP_BPS:g} bit/s plaintext"
            )

    def arrival_model(self, lam: float | None = None) -> "ArrivalModel":
        rate = self.lam if lam is None else lam
        if self.beta == 1.0:
            return Poisson(rate)
        return Burst(rate, self.beta, self.on_dwell, self.off_dwell)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "lambda_pps": self.lam,
            "s_bits": self.s_bits,
            "L_s": self.delay_bound,
            "A_target": self.a_target,
            "beta": self.beta,
            "f_hz": self.f_hz,
            "l_sess_bits": self.l_sess,
            "l_mac_bits": self.l_mac,
            "uses_otp": self.uses_otp,
            "T_conf_years": self.t_conf_years,
            "weight": self.weight,
            "q_per_year": self.q_per_year,
            "c_sla": self.c_sla,
            "on_dwell_s": self.on_dwell,
            "off_dwell_s": self.off_dwell,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrafficClass":
        return cls(
            id=d["id"],
            name=d.get("name", d["id"]),
            lam=float(d["lambda_pps"]),
            s_bits=float(d["s_bits"]),
            delay_bound=float(d["L_s"]),
            a_target=float(d["A_target"]),
            beta=float(d.get("beta", 1.0)),
            f_hz=float(d.get("f_hz", 1.0)),
            l_sess=float(d.get("l_sess_bits", 256)),
            l_mac=float(d.get("l_mac_bits", 128)),
            uses_otp=bool(d.get("uses_otp", False)),
            t_conf_years=float(d.get("T_conf_years", 1.0)),
            weight=float(d.get("weight", 1.0)),
            q_per_year=float(d.get("q_per_year", 1.0)),
            c_sla=float(d.get("c_sla", 0.0)),
            on_dwell=float(d.get("on_dwell_s", 10.0)),
            off_dwell=float(d.get("off_dwell_s", 30.0)),
        )


def load_classes(path=None) -> dict[str, TrafficClass]:
    """Load a class table; without a path, the bundled synthetic defaults."""
    if path is None:
        text = resources.files("qkdgrid.data").joinpath("classes.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return {c.id: c for c in map(TrafficClass.from_dict, json.loads(text))}


def dump_classes(classes: Mapping[str, TrafficClass]) -> str:
    return json.dumps([c.to_dict() for c in classes.values()], indent=2)


# -- arrival processes -------------------------------------------------------


@dataclass(frozen=True)
class Poisson:
    rate: float

    @property
    def mean_rate(self) -> float:
        return self.rate


@dataclass(frozen=True)
class Burst:
    """Two-state ON/OFF modulated Poisson surrogate.

    ON rate is ``burst_factor * base_rate``; the OFF rate is set so that the
    long-run mean equals ``base_rate`` (clipped at zero when the burst factor
    times the ON fraction exceeds one).
    """

    base_rate: float
    burst_factor: float
    on_dwell: float = 10.0
    off_dwell: float = 30.0

    def __post_init__(self):
        if self.burst_factor < 1:
            raise ConfigurationError("burst factor must be >= 1")
        if not (self.on_dwell > 0 and self.off_dwell > 0):
            raise ConfigurationError("dwell times must be positive")
        if self.burst_factor * self.p_on > 1:
            log.warning("burst factor %.2f too large for ON share %.2f; OFF rate clipped",
                        self.burst_factor, self.p_on)

    @property
    def p_on(self) -> float:
        return self.on_dwell / (self.on_dwell + self.off_dwell)

    @property
    def on_rate(self) -> float:
        return self.burst_factor * self.base_rate

    @property
    def off_rate(self) -> float:
        p = self.p_on
        return max(0.0, self.base_rate * (1 - self.burst_factor * p) / (1 - p))

    @property
    def mean_rate(self) -> float:
        return self.p_on * self.on_rate + (1 - self.p_on) * self.off_rate


ArrivalModel = Poisson | Burst


class ArrivalSampler:
    """Chunked arrival-count generator for one (node, class) pair.

    Counts and the ON/OFF modulation use separate generators, so the result
    does not depend on how the horizon is cut into chunks.
    """

    def __init__(self, model: ArrivalModel, dt: float, counts_rng: np.random.Generator,
                 modulation_rng: np.random.Generator | None = None):
        if not dt > 0:
            raise UsageError("time step must be positive")
        self.model = model
        self.dt = dt
        self._counts = counts_rng
        self._mod = modulation_rng if modulation_rng is not None else counts_rng
        if isinstance(model, Burst):
            self._units = np.empty(0)
            self._used = 0
            self._on = bool(self._mod.random() < model.p_on)
            self._left = self._scale(self._on) * self._take(1)[0]
            self._used += 1

    _BLOCK = 256

    def _scale(self, on) -> np.ndarray:
        return np.where(on, self.model.on_dwell, self.model.off_dwell)

    def _take(self, n: int) -> np.ndarray:
        """Peek at the next ``n`` unit exponentials without consuming them.

        Draws come in fixed blocks, so the stream seen by the dwell sequence
        is the same however the horizon is chunked.
        """
        while len(self._units) - self._used < n:
            self._units = np.concatenate([self._units[self._used:],
                                          self._mod.standard_exponential(self._BLOCK)])
            self._used = 0
        return self._units[self._used : self._used + n]

    def on_fraction(self, n_steps: int) -> np.ndarray:
        """Fraction of each of the next ``n_steps`` steps spent in the ON state."""
        end = n_steps * self.dt
        ends = [np.array([self._left])]
        reach, k = self._left, 0
        while reach <= end:
            # dwell j >= 1 after the current one is ON iff state flipped an odd number of times
            n = max(16, int(2 * (end - reach) / (self.model.on_dwell + self.model.off_dwell)) + 16)
            on = np.logical_xor(self._on, (np.arange(k + 1, k + n + 1) % 2).astype(bool))
            step = np.cumsum(self._scale(on) * self._take(n)) + reach
            hit = int(np.searchsorted(step, end, side="right"))
            if hit < n:
                ends.append(step[: hit + 1])
                self._used += hit + 1
                k += hit + 1
                break
            ends.append(step)
            self._used += n
            k += n
            reach = float(step[-1])
        ends = np.concatenate(ends)
        J = len(ends) - 1
        states = np.logical_xor(self._on, (np.arange(J + 1) % 2).astype(bool))
        knots = np.concatenate([[0.0], np.minimum(ends, end)])
        covered = np.concatenate([[0.0], np.cumsum(np.diff(knots) * states)])
        self._left = float(ends[-1] - end)
        self._on = bool(states[-1])
        grid = np.arange(n_steps + 1) * self.dt
        return np.diff(np.interp(grid, knots, covered)) / self.dt

    def rates(self, n_steps: int) -> np.ndarray:
        m = self.model
        if isinstance(m, Poisson):
            return np.full(n_steps, m.rate)
        frac = self.on_fraction(n_steps)
        return m.off_rate + (m.on_rate - m.off_rate) * frac

    def sample(self, n_steps: int) -> np.ndarray:
        rates = self.rates(n_steps)
        return self._counts.poisson(rates * self.dt)


def sample_arrivals(model: ArrivalModel, dt: float, rng: np.random.Generator,
                    n_steps: int | None = None):
    """Draw arrival counts for one step, or ``n_steps`` consecutive steps."""
    sampler = ArrivalSampler(model, dt, rng)
    counts = sampler.sample(1 if n_steps is None else n_steps)
    return int(counts[0]) if n_steps is None else counts


# -- demand ----------------------------------------------------------------


def demand_sym(cls: TrafficClass, lam: float) -> float:
    """Session refresh plus per-message authentication, bits/s."""
    if lam < 0:
        raise UsageError("arrival rate must be nonnegative")
    return cls.f_hz * cls.l_sess + lam * cls.l_mac


def demand_otp(cls: TrafficClass, lam: float) -> float:
    """One-time-pad demand equals the plaintext rate, bits/s."""
    if not cls.uses_otp:
        raise UsageError(f"class {cls.id} does not use one-time pad")
    if lam < 0:
        raise UsageError("arrival rate must be nonnegative")
    return lam * cls.s_bits


def _per_arrival_bits(cls: TrafficClass) -> float:
    return cls.l_mac + (cls.s_bits if cls.uses_otp else 0.0)


def node_classes(node: NodeSpec, classes: Mapping[str, TrafficClass]) -> list[TrafficClass]:
    missing = [c for c in node.class_ids if c not in classes]
    if missing:
        raise ConfigurationError(f"node {node.id} references unknown classes {missing}")
    return [classes[c] for c in node.class_ids]


def class_rate(node: NodeSpec, cls: TrafficClass) -> float:
    return float(node.rates.get(cls.id, cls.lam))


def node_demand(node: NodeSpec, classes: Iterable[TrafficClass], arrivals: Mapping[str, object],
                dt: float):
    """Key bits consumed at a node over one step (or an array of steps).

    ``arrivals`` maps class id to a count or an array of counts.
    """
    total = 0.0
    for cls in classes:
        if cls.id not in arrivals:
            raise UsageError(f"no arrivals supplied for class {cls.id}")
        count = np.asarray(arrivals[cls.id], dtype=float)
        total = total + cls.f_hz * cls.l_sess * dt + count * _per_arrival_bits(cls)
    if np.ndim(total) == 0:
        return float(total)
    return total


def mean_demand_rate(node: NodeSpec, classes: Mapping[str, TrafficClass]) -> float:
    """Expected key demand at a node, bits/s."""
    total = 0.0
    for cls in node_classes(node, classes):
        lam = cls.arrival_model(class_rate(node, cls)).mean_rate
        total += cls.f_hz * cls.l_sess + lam * _per_arrival_bits(cls)
    return total


def demand_envelope(node: NodeSpec, classes: Mapping[str, TrafficClass]) -> float:
    """Worst-case demand rate using burst-inflated arrival rates, bits/s."""
    total = 0.0
    for cls in node_classes(node, classes):
        lam = class_rate(node, cls)
        total += cls.f_hz * cls.l_sess + cls.beta * lam * cls.l_mac
        if cls.uses_otp:
            total += lam * cls.s_bits
    return total


def demand_matrix(samplers: Sequence[Sequence[tuple[TrafficClass, ArrivalSampler]]],
                  n_steps: int, dt: float) -> np.ndarray:
    """Per-node per-step demand in bits for the next ``n_steps`` steps."""
    out = np.zeros((len(samplers), n_steps))
    for i, pairs in enumerate(samplers):
        row = out[i]
        for cls, sampler in pairs:
            row += cls.f_hz * cls.l_sess * dt
            row += sampler.sample(n_steps) * _per_arrival_bits(cls)
    return out
