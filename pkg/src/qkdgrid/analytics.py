"""Design levers and service-level metrics.

Covers the stability margin, the large-deviation underflow exponent and
bound, outage estimation, the delay model and the availability decomposition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .errors import NoUnderflowRisk, Unstable, UsageError

LIGHT_KM_PER_S = 299_792.458
FIBER_SPEED = LIGHT_KM_PER_S * 2.0 / 3.0


class Margin(NamedTuple):
    margin: float
    ok: bool


def stability_margin(mean_supply: float, mean_demand: float, delta: float = 0.0) -> Margin:
    """Mean supply minus mean demand minus the safety margin, with a verdict."""
    m = mean_supply - mean_demand - delta
    return Margin(m, m >= 0)


# -- large-deviation underflow -------------------------------------------------


@dataclass
class CgfEstimate:
    """Empirical cumulant generating function of the net increment a - d_eff."""

    samples: np.ndarray
    kappa: float = math.nan
    prefactor: float = math.nan

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float).ravel()

    @property
    def mean(self) -> float:
        return float(self.samples.mean())

    @property
    def var(self) -> float:
        return float(self.samples.var())

    def cgf(self, theta: float) -> float:
        """log E[exp(theta X)], computed with a max shift."""
        return float(logsumexp(theta * self.samples) - math.log(self.samples.size))

    def fit(self, tol: float = 1e-9) -> "CgfEstimate":
        self.kappa = underflow_exponent(self.samples, tol=tol)
        return self


def underflow_exponent(samples, tol: float = 1e-9, theta_max: float | None = None) -> float:
    """Positive root kappa of the empirical CGF at negative argument, Lambda(-kappa) = 0.

    Raises NoUnderflowRisk when no sample is negative and Unstable when the
    sample mean is not positive.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise UsageError("need at least one sample")
    mean = x.mean()
    if mean <= 0:
        raise Unstable(f"net increment mean {mean:g} is not positive")
    if not np.any(x < 0):
        raise NoUnderflowRisk("no negative increments observed")
    logn = math.log(x.size)

    def lam(k: float) -> float:
        return float(logsumexp(-k * x) - logn)

    # Lambda(-k) dips below zero just right of 0 and grows without bound.
    hi = 2.0 * mean / max(x.var(), 1e-300) if theta_max is None else theta_max
    while lam(hi) <= 0:
        hi *= 2.0
        if hi > 1e300:
            raise NoUnderflowRisk("no root found for the exponent")
    lo = hi
    while lam(lo) >= 0:
        lo *= 0.5
        if lo < 1e-300:
            raise NoUnderflowRisk("exponent bracket collapsed to zero")
    return float(brentq(lam, lo, hi, xtol=tol * hi, rtol=4 * np.finfo(float).eps))


def underflow_bound(kappa: float, prefactor: float, b_min: float) -> float:
    """Exponential tail bound min(1, C exp(-kappa b_min))."""
    if not (kappa > 0 and prefactor > 0):
        raise UsageError("kappa and prefactor must be positive")
    return min(1.0, prefactor * math.exp(-kappa * b_min))


def calibrate_prefactor(kappa: float, b_grid: Sequence[float], outage: Sequence[float]) -> float:
    """Match the bound to the simulated outage at the smallest threshold of the grid."""
    i = int(np.argmin(b_grid))
    return float(outage[i]) * math.exp(kappa * float(b_grid[i]))


def reserve_depletion_mc(mean: float, sd: float, reserves: Sequence[float], n_paths: int,
                         n_steps: int, rng: np.random.Generator) -> np.ndarray:
    """Crude Monte Carlo: fraction of Gaussian-increment paths whose reserve runs out.

    A path starts with ``reserve`` bits above empty, has unbounded capacity and
    counts as an outage if its level ever drops below zero within ``n_steps``.
    """
    reserves = np.asarray(reserves, dtype=float)
    hits = np.zeros(reserves.size)
    block = max(1, 2_000_000 // n_steps)
    done = 0
    while done < n_paths:
        m = min(block, n_paths - done)
        walk = np.cumsum(rng.normal(mean, sd, size=(m, n_steps)), axis=1)
        low = walk.min(axis=1)
        hits += (low[:, None] < -reserves[None, :]).sum(axis=0)
        done += m
    return hits / n_paths


def reserve_depletion_is(mean: float, sd: float, reserves: Sequence[float], n_paths: int,
                         rng: np.random.Generator, tilt: float | None = None) -> np.ndarray:
    """Importance-sampled log depletion probability for Gaussian increments.

    Paths are drawn under an exponentially tilted law with drift
    ``mean - tilt * sd**2`` (which depletes almost surely) and reweighted by the
    exact likelihood ratio. Results are natural logs, since for large reserves
    the probabilities fall below the smallest double.
    """
    theta = 2.0 * mean / sd**2 if tilt is None else float(tilt)
    cgf_neg = -theta * mean + 0.5 * theta**2 * sd**2  # log E[exp(-theta X)]
    drift = mean - theta * sd**2
    if drift >= 0:
        raise UsageError("tilt too small: tilted walk does not deplete")
    out = np.zeros(len(reserves))
    for j, u in enumerate(reserves):
        level = np.full(n_paths, float(u))
        steps = np.zeros(n_paths)
        logw = np.zeros(n_paths)
        alive = np.arange(n_paths)
        while alive.size:
            level[alive] += rng.normal(drift, sd, alive.size)
            steps[alive] += 1
            hit = alive[level[alive] < 0]
            # log likelihood ratio of the path: theta * sum X + n * Lambda(-theta)
            logw[hit] = theta * (level[hit] - u) + steps[hit] * cgf_neg
            alive = alive[level[alive] >= 0]
        out[j] = logsumexp(logw) - math.log(n_paths)
    return out


# -- outage and confidence intervals ------------------------------------------------


def outage_probability(outage_flags, warmup: int = 0) -> np.ndarray:
    """Per-node fraction of post-warm-up steps spent below the safety threshold."""
    flags = np.atleast_2d(np.asarray(outage_flags, dtype=bool))
    if flags.shape[1] <= warmup:
        raise UsageError("trace is not longer than the warm-up window")
    return flags[:, warmup:].mean(axis=1)


class Estimate(NamedTuple):
    mean: float
    lo: float
    hi: float
    n: int

    @property
    def ci_available(self) -> bool:
        return self.n >= 2


Z95 = 1.959963984540054


def mean_ci(values, z: float = Z95) -> Estimate:
    """Mean with a normal-approximation confidence interval across seeds."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise UsageError("no values")
    m = float(math.fsum(v) / v.size)
    if v.size < 2:
        return Estimate(m, math.nan, math.nan, 1)
    half = z * float(v.std(ddof=1)) / math.sqrt(v.size)
    return Estimate(m, m - half, m + half, int(v.size))


# -- delay and availability --------------------------------------------------


@dataclass(frozen=True)
class ClassDelay:
    """Delay components for one class; times in seconds."""

    queue_mu_log: float
    queue_sigma_log: float
    crypto_qkd: float
    crypto_pqc: float
    crypto_jitter: float
    fallback: float
    deterministic_queue: float | None = None

    def __post_init__(self):
        if min(self.queue_sigma_log, self.crypto_qkd, self.crypto_pqc, self.crypto_jitter,
               self.fallback) < 0:
            raise UsageError("delay components must be nonnegative")


@dataclass(frozen=True)
class DelayModel:
    classes: Mapping[str, ClassDelay]
    prop: Mapping[str, float] = field(default_factory=dict)  # per node, seconds

    @classmethod
    def default(cls, classes, path_km: Mapping[str, float] | None = None) -> "DelayModel":
        """Synthetic defaults scaled to each class's delay bound."""
        table = {}
        for c in classes.values():
            bound = c.delay_bound
            table[c.id] = ClassDelay(
                queue_mu_log=math.log(0.3 * bound),
                queue_sigma_log=0.5,
                crypto_qkd=0.05 * bound,
                crypto_pqc=0.25 * bound,
                crypto_jitter=0.05 * bound,
                fallback=0.25 * bound,
            )
        prop = {} if path_km is None else {n: km / FIBER_SPEED for n, km in path_km.items()}
        return cls(table, prop)

    def to_dict(self) -> dict:
        return {
            "classes": {
                k: {
                    "queue_mu_log": v.queue_mu_log,
                    "queue_sigma_log": v.queue_sigma_log,
                    "crypto_qkd_s": v.crypto_qkd,
                    "crypto_pqc_s": v.crypto_pqc,
                    "crypto_jitter_s": v.crypto_jitter,
                    "fallback_s": v.fallback,
                    **({"deterministic_queue_s": v.deterministic_queue}
                       if v.deterministic_queue is not None else {}),
                }
                for k, v in self.classes.items()
            },
            "prop_s": dict(self.prop),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DelayModel":
        table = {
            k: ClassDelay(
                queue_mu_log=float(v["queue_mu_log"]),
                queue_sigma_log=float(v["queue_sigma_log"]),
                crypto_qkd=float(v["crypto_qkd_s"]),
                crypto_pqc=float(v["crypto_pqc_s"]),
                crypto_jitter=float(v.get("crypto_jitter_s", 0.0)),
                fallback=float(v["fallback_s"]),
                deterministic_queue=v.get("deterministic_queue_s"),
            )
            for k, v in d["classes"].items()
        }
        return cls(table, {k: float(v) for k, v in d.get("prop_s", {}).items()})


def propagation_delay(path_km: float) -> float:
    return path_km / FIBER_SPEED


def sample_delay(model: ClassDelay, chi, rng: np.random.Generator, *, prop: float = 0.0,
                 pqc: bool = False, size: int | None = None):
    """End-to-end delay: propagation + queueing + crypto (+ fallback switching if chi)."""
    n = 1 if size is None else size
    if model.deterministic_queue is not None:
        queue = np.full(n, model.deterministic_queue)
    else:
        queue = rng.lognormal(model.queue_mu_log, model.queue_sigma_log, n)
    crypto = (model.crypto_pqc if pqc else model.crypto_qkd) + model.crypto_jitter * rng.random(n)
    chi_arr = np.broadcast_to(np.asarray(chi, dtype=float), (n,))
    delay = prop + queue + crypto + chi_arr * model.fallback
    return float(delay[0]) if size is None else delay


def availability(p_out: float, p_exceed_fb: float, p_fb: float) -> float:
    """1 - outright outage - (delay violation | fallback) * fallback occupancy, in [0, 1]."""
    a = float(1.0 - p_out - p_exceed_fb * p_fb)
    return min(1.0, max(0.0, a))


def fallback_delay_bound(queue_tail: Callable[[float], float], fb_tail: Callable[[float], float],
                         tau: float, bound: float, t_prop: float, t_crypto: float) -> float:
    """Union bound on the delay violation probability while in fallback."""
    rest = bound - t_prop - t_crypto
    if not 0 < tau < rest:
        raise UsageError("tau must lie strictly between 0 and L - T_prop - T_crypto")
    return min(1.0, float(queue_tail(tau)) + float(fb_tail(rest - tau)))


# -- report ------------------------------------------------------------------------


@dataclass
class SlaReport:
    """Per-class and per-node service-level summary.

    ``ci95`` entries are ``(lo, hi)`` pairs, or None when a single seed was run.
    """

    classes: dict[str, dict] = field(default_factory=dict)
    nodes: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self):
        for table in (self.classes, self.nodes):
            for row in table.values():
                for key in ("availability", "delay_exceedance", "p_out", "fb_occupancy"):
                    if key in row and not 0 <= row[key] <= 1:
                        raise UsageError(f"{key} outside [0, 1]")

    def to_dict(self) -> dict:
        return {"class": self.classes, "node": self.nodes}

    def to_json(self) -> str:
        import json

        return json.dumps(self.to_dict(), indent=2, sort_keys=True)
