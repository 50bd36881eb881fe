"""Loss-to-rate curves, supply schedules and per-link key allocation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import _kernels
from .errors import ConfigurationError, UsageError
from .topology import Topology


@dataclass(frozen=True)
class DV:
    r0: float = 1e6
    eta: float = 0.1

    def __post_init__(self):
        if not (self.r0 > 0 and self.eta > 0):
            raise ConfigurationError("DV curve needs positive r0 and eta")


@dataclass(frozen=True)
class CV:
    r0: float = 1e6
    eta: float = 0.1
    cutoff_loss: float = 25.0

    def __post_init__(self):
        if not (self.r0 > 0 and self.eta > 0 and self.cutoff_loss > 0):
            raise ConfigurationError("CV curve needs positive r0, eta and cutoff")


@dataclass(frozen=True)
class Tabulated:
    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(a), float(b)) for a, b in self.points)
        object.__setattr__(self, "points", pts)
        if not pts:
            raise ConfigurationError("tabulated curve needs at least one point")
        losses = [p[0] for p in pts]
        rates = [p[1] for p in pts]
        if any(b <= a for a, b in zip(losses, losses[1:])):
            raise ConfigurationError("tabulated losses must be strictly increasing")
        if any(b >= a for a, b in zip(rates, rates[1:])):
            raise ConfigurationError("tabulated rates must be strictly decreasing")
        if min(rates) < 0:
            raise ConfigurationError("tabulated rates must be nonnegative")


@dataclass(frozen=True)
class PqcHandshake:
    """Loss-independent key supply from post-quantum key agreement.

    Handshakes complete as a Poisson process; each yields a fixed number of
    key bits.
    """

    hs_per_s: float
    bits_per_hs: float = 256.0

    def __post_init__(self):
        if self.hs_per_s < 0 or self.bits_per_hs <= 0:
            raise ConfigurationError("PQC handshake curve needs hs_per_s >= 0, bits_per_hs > 0")


RateCurve = DV | CV | Tabulated | PqcHandshake


def rate_from_loss(curve: RateCurve, loss: float) -> float:
    """Mean key rate in bits/s for a link with the given total loss in dB."""
    if loss < 0:
        raise UsageError("loss must be nonnegative")
    if isinstance(curve, DV):
        return curve.r0 * 10.0 ** (-curve.eta * loss)
    if isinstance(curve, CV):
        if loss > curve.cutoff_loss:
            return 0.0
        return curve.r0 * 10.0 ** (-curve.eta * loss)
    if isinstance(curve, Tabulated):
        xs = [p[0] for p in curve.points]
        ys = [p[1] for p in curve.points]
        if loss > xs[-1]:
            return 0.0
        return float(np.interp(loss, xs, ys))
    if isinstance(curve, PqcHandshake):
        return curve.hs_per_s * curve.bits_per_hs
    raise UsageError(f"unknown curve type {type(curve).__name__}")


def curve_from_dict(d: Mapping) -> RateCurve:
    kind = d.get("type")
    if kind == "dv":
        return DV(float(d["r0_bps"]), float(d["eta_per_db"]))
    if kind == "cv":
        return CV(float(d["r0_bps"]), float(d["eta_per_db"]), float(d.get("cutoff_db", 25.0)))
    if kind == "tabulated":
        return Tabulated(tuple(tuple(p) for p in d["points"]))
    if kind == "pqc":
        return PqcHandshake(float(d["hs_per_s"]), float(d["bits_per_hs"]))
    raise ConfigurationError(f"unknown rate curve type {kind!r}")


def curve_to_dict(curve: RateCurve) -> dict:
    if isinstance(curve, DV):
        return {"type": "dv", "r0_bps": curve.r0, "eta_per_db": curve.eta}
    if isinstance(curve, CV):
        return {"type": "cv", "r0_bps": curve.r0, "eta_per_db": curve.eta,
                "cutoff_db": curve.cutoff_loss}
    if isinstance(curve, Tabulated):
        return {"type": "tabulated", "points": [list(p) for p in curve.points]}
    return {"type": "pqc", "hs_per_s": curve.hs_per_s, "bits_per_hs": curve.bits_per_hs}


def load_curves(path) -> dict[str, RateCurve]:
    with open(path) as fh:
        doc = json.load(fh)
    return {k: curve_from_dict(v) for k, v in doc.items()}


DEFAULT_CURVES: dict[str, RateCurve] = {
    "dv": DV(1e6, 0.1),
    "cv": CV(1e6, 0.1, 25.0),
}


# -- allocation --------------------------------------------------------------


def allocate_maxmin(link_budget: float, demands: Mapping[str, float]) -> dict[str, float]:
    """Max-min fair split of ``link_budget`` across the requesting nodes."""
    if link_budget < 0 or any(d < 0 for d in demands.values()):
        raise UsageError("budget and demands must be nonnegative")
    keys = list(demands)
    req = np.array([demands[k] for k in keys], dtype=float)
    out = np.zeros(len(keys))
    if keys:
        _kernels.maxmin_fill(float(link_budget), req, out)
    return dict(zip(keys, out.tolist()))


def allocate_weighted(link_budget: float, demands: Mapping[str, float],
                      weights: Mapping[str, float]) -> dict[str, float]:
    """Weight-proportional split capped at demand, excess passed on to the rest."""
    if link_budget < 0 or any(d < 0 for d in demands.values()):
        raise UsageError("budget and demands must be nonnegative")
    keys = list(demands)
    w = np.array([float(weights.get(k, 0.0)) for k in keys])
    if np.any(w < 0):
        raise ConfigurationError("weights must be nonnegative")
    if keys and not np.any(w > 0):
        raise ConfigurationError("at least one weight must be positive")
    req = np.array([demands[k] for k in keys], dtype=float)
    out = np.zeros(len(keys))
    if keys:
        _kernels.weighted_fill(float(link_budget), req, w, out)
    return dict(zip(keys, out.tolist()))


# -- supply schedules ----------------------------------------------------------


@dataclass
class LinkProfile:
    """Piecewise-constant per-step key bits for one link.

    ``edges`` are step indices ``0 = e0 < e1 < ... < eK = horizon``; segment k
    covers ``[e_k, e_{k+1})`` and yields ``bits[k]`` per step (mean bits for
    stochastic handshake links).
    """

    edges: np.ndarray
    bits: np.ndarray
    usable: np.ndarray  # per segment, False during link cuts


@dataclass
class SupplySchedule:
    link_ids: list[str]
    profiles: list[LinkProfile]
    horizon: int
    # links whose supply is drawn as Poisson handshakes: link index -> bits per handshake
    stochastic: dict[int, float] = field(default_factory=dict)

    def mean_bits(self, t0: int, t1: int) -> np.ndarray:
        """Mean key bits per step, shape ``(n_links, t1 - t0)``."""
        out = np.zeros((len(self.profiles), t1 - t0))
        for l, prof in enumerate(self.profiles):
            for k in range(len(prof.bits)):
                lo, hi = max(prof.edges[k], t0), min(prof.edges[k + 1], t1)
                if lo < hi:
                    out[l, lo - t0 : hi - t0] = prof.bits[k]
        return out

    def chunk(self, t0: int, t1: int, rngs: Sequence[np.random.Generator] | None = None):
        """Realised key bits per link and step for steps ``[t0, t1)``."""
        out = self.mean_bits(t0, t1)
        for l, per_hs in self.stochastic.items():
            if rngs is None:
                raise UsageError("stochastic supply needs per-link generators")
            out[l] = rngs[l].poisson(out[l] / per_hs) * per_hs
        return out

    def bits_at(self, link: str, t: int) -> float:
        return float(self.mean_bits(t, t + 1)[self.link_ids.index(link), 0])


def fed_csr(topology: Topology, link_ids: Sequence[str] | None = None):
    """Compressed fed-node lists for the kernels: (ptr, node index, weight)."""
    index = {n: i for i, n in enumerate(topology.node_ids)}
    ids = topology.link_ids if link_ids is None else link_ids
    ptr, idx, w = [0], [], []
    for lid in ids:
        for node, weight in topology.links[lid].weights.items():
            idx.append(index[node])
            w.append(float(weight))
        ptr.append(len(idx))
    return (np.array(ptr, dtype=np.int64), np.array(idx, dtype=np.int64),
            np.array(w, dtype=float))


def node_supply(topology: Topology, schedule: SupplySchedule, node: str, t: int) -> float:
    """Key bits reaching ``node`` at step ``t`` from all links feeding it.

    Symmetric sharing hands every fed node the full link amount; shared links
    are split in proportion to their static weights.
    """
    if node not in topology.nodes:
        raise UsageError(f"unknown node {node}")
    bits = schedule.mean_bits(t, t + 1)[:, 0]
    total = 0.0
    for l, lid in enumerate(schedule.link_ids):
        weights = topology.links[lid].weights
        if node not in weights:
            continue
        if topology.sharing == "symmetric":
            total += bits[l]
        else:
            wsum = sum(weights.values())
            total += bits[l] * weights[node] / wsum if wsum > 0 else 0.0
    return float(total)
