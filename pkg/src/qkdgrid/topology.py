"""Three-tier communication graphs and the canonical topology generators."""

from __future__ import annotations

import enum
import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigurationError
from .rng import stream

log = logging.getLogger(__name__)


class Tier(str, enum.Enum):
    BACKBONE = "Backbone"
    AGGREGATION = "Aggregation"
    EDGE = "Edge"


class TopologyKind(str, enum.Enum):
    METRO = "Metro"
    DISTRIBUTION = "Distribution"
    LONGHAUL = "LongHaul"


ALL_CLASSES = ("GOOSE", "SV", "PMU", "SCADA", "M1", "M2", "M3", "M4", "M5")

DEFAULT_TIER_CLASSES: dict[Tier, tuple[str, ...]] = {
    Tier.EDGE: ALL_CLASSES,
    Tier.AGGREGATION: ("SCADA", "M1", "M3"),
    Tier.BACKBONE: ("SCADA", "M2", "M4", "M5"),
}

DEFAULT_B_MAX = 50e6
DEFAULT_B_MIN = 10e6


@dataclass(frozen=True)
class NodeSpec:
    id: str
    tier: Tier
    b_max: float = DEFAULT_B_MAX
    b_min: float = DEFAULT_B_MIN
    phi: float = 1.0
    delta: float = 0.0
    class_ids: tuple[str, ...] = ()
    # per-class arrival-rate overrides (packets/s)
    rates: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.b_min <= self.b_max:
            raise ConfigurationError(f"node {self.id}: need 0 <= b_min <= b_max")
        if not 0 <= self.phi <= 1:
            raise ConfigurationError(f"node {self.id}: phi must lie in [0, 1]")
        if self.delta < 0:
            raise ConfigurationError(f"node {self.id}: delta must be nonnegative")


@dataclass(frozen=True)
class LinkSpec:
    id: str
    src: str
    dst: str
    d_km: float
    l_fix_db: float = 0.0
    rate_curve: str = "dv"
    weights: Mapping[str, float] = field(default_factory=dict)
    alpha: float | None = None  # per-link attenuation override, dB/km

    def __post_init__(self):
        if not self.d_km > 0:
            raise ConfigurationError(f"link {self.id}: length must be positive")
        if self.l_fix_db < 0:
            raise ConfigurationError(f"link {self.id}: fixed loss must be nonnegative")
        if any(w < 0 for w in self.weights.values()):
            raise ConfigurationError(f"link {self.id}: weights must be nonnegative")
        if not self.weights:
            object.__setattr__(self, "weights", {self.src: 1.0, self.dst: 1.0})

    @property
    def fed_nodes(self) -> tuple[str, ...]:
        return tuple(self.weights)


@dataclass(frozen=True)
class Topology:
    nodes: Mapping[str, NodeSpec]
    links: Mapping[str, LinkSpec]
    alpha: float = 0.2
    kind: TopologyKind = TopologyKind.METRO
    # "symmetric": every fed node receives the full link rate (both ends of a QKD
    # link hold the same key material); "shared": the link budget is split.
    sharing: str = "symmetric"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigurationError("alpha must be positive")
        if self.sharing not in ("symmetric", "shared"):
            raise ConfigurationError(f"unknown sharing mode {self.sharing!r}")
        for link in self.links.values():
            for end in (link.src, link.dst, *link.weights):
                if end not in self.nodes:
                    raise ConfigurationError(f"link {link.id} references unknown node {end}")
        if not self.is_connected():
            raise ConfigurationError("topology is not connected")

    @property
    def node_ids(self) -> list[str]:
        return list(self.nodes)

    @property
    def link_ids(self) -> list[str]:
        return list(self.links)

    def neighbors(self) -> dict[str, set[str]]:
        adj: dict[str, set[str]] = {n: set() for n in self.nodes}
        for link in self.links.values():
            adj[link.src].add(link.dst)
            adj[link.dst].add(link.src)
        return adj

    def is_connected(self) -> bool:
        if not self.nodes:
            return True
        adj = self.neighbors()
        start = next(iter(self.nodes))
        seen = {start}
        queue = deque([start])
        while queue:
            for nxt in adj[queue.popleft()]:
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        return len(seen) == len(self.nodes)

    def link_loss(self, link_id: str) -> float:
        link = self.links[link_id]
        return link_loss(link, link.alpha if link.alpha is not None else self.alpha)

    def path_km(self) -> dict[str, float]:
        """Shortest fiber distance from every node to the nearest backbone node."""
        import networkx as nx

        g = nx.Graph()
        g.add_nodes_from(self.nodes)
        for link in self.links.values():
            prev = g.get_edge_data(link.src, link.dst)
            if prev is None or prev["d"] > link.d_km:
                g.add_edge(link.src, link.dst, d=link.d_km)
        roots = [n for n, spec in self.nodes.items() if spec.tier is Tier.BACKBONE]
        if not roots:
            roots = [next(iter(self.nodes))]
        dist = nx.multi_source_dijkstra_path_length(g, roots, weight="d")
        return {n: float(dist[n]) for n in self.nodes}

    def with_nodes(self, **changes) -> "Topology":
        return replace(self, nodes={k: replace(v, **changes) for k, v in self.nodes.items()})

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "alpha_db_per_km": self.alpha,
            "sharing": self.sharing,
            "nodes": [
                {
                    "id": n.id,
                    "tier": n.tier.value,
                    "b_max_bits": n.b_max,
                    "b_min_bits": n.b_min,
                    "phi": n.phi,
                    "delta_bits_per_s": n.delta,
                    "classes": list(n.class_ids),
                    **({"rates": dict(n.rates)} if n.rates else {}),
                }
                for n in self.nodes.values()
            ],
            "links": [
                {
                    "id": l.id,
                    "from": l.src,
                    "to": l.dst,
                    "d_km": l.d_km,
                    "l_fix_db": l.l_fix_db,
                    "rate_curve": l.rate_curve,
                    "weights": dict(l.weights),
                    **({"alpha_db_per_km": l.alpha} if l.alpha is not None else {}),
                }
                for l in self.links.values()
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Topology":
        nodes = {}
        for n in doc["nodes"]:
            nodes[n["id"]] = NodeSpec(
                id=n["id"],
                tier=Tier(n["tier"]),
                b_max=float(n["b_max_bits"]),
                b_min=float(n["b_min_bits"]),
                phi=float(n.get("phi", 1.0)),
                delta=float(n.get("delta_bits_per_s", 0.0)),
                class_ids=tuple(n.get("classes", ())),
                rates=dict(n.get("rates", {})),
            )
        links = {}
        for l in doc["links"]:
            links[l["id"]] = LinkSpec(
                id=l["id"],
                src=l["from"],
                dst=l["to"],
                d_km=float(l["d_km"]),
                l_fix_db=float(l.get("l_fix_db", 0.0)),
                rate_curve=l.get("rate_curve", "dv"),
                weights={k: float(v) for k, v in l.get("weights", {}).items()},
                alpha=l.get("alpha_db_per_km"),
            )
        return cls(
            nodes=nodes,
            links=links,
            alpha=float(doc["alpha_db_per_km"]),
            kind=TopologyKind(doc["kind"]),
            sharing=doc.get("sharing", "symmetric"),
        )

    @classmethod
    def from_json(cls, text: str) -> "Topology":
        return cls.from_dict(json.loads(text))


def link_loss(link: LinkSpec, alpha: float) -> float:
    """Total optical loss in dB: attenuation times length plus fixed losses."""
    if not alpha > 0:
        raise ConfigurationError("alpha must be positive")
    return alpha * link.d_km + link.l_fix_db


def _jittered(rng: np.random.Generator, base: np.ndarray, jitter: float) -> np.ndarray:
    if jitter <= 0:
        return base.astype(float)
    return base * rng.uniform(1.0 - jitter, 1.0 + jitter, size=base.shape)


def _node(node_id: str, tier: Tier, classes: Mapping[Tier, Iterable[str]] | None, **kw) -> NodeSpec:
    table = DEFAULT_TIER_CLASSES if classes is None else classes
    return NodeSpec(id=node_id, tier=tier, class_ids=tuple(table.get(tier, ())), **kw)


def build_metro(
    n_substations: int,
    ring_length: float,
    n_chords: int,
    seed: int,
    *,
    alpha: float = 0.2,
    l_fix_db: float = 3.0,
    jitter: float = 0.2,
    tier_classes: Mapping[Tier, Iterable[str]] | None = None,
    **node_kw,
) -> Topology:
    """Ring of substations with a control-center tap on node 0 plus random chords.

    Ring segment lengths are jittered and renormalised so they still sum to
    ``ring_length``. Chords join node pairs that are not already linked
    (the control center included) and take the geometric chord length of the
    ring circle.
    """
    if n_substations < 3:
        raise ConfigurationError("metro ring needs at least 3 substations")
    if not ring_length > 0:
        raise ConfigurationError("ring_length must be positive")
    if n_chords < 0:
        raise ConfigurationError("n_chords must be nonnegative")
    rng = stream(seed, "topology", "metro")
    n = n_substations
    width = len(str(n - 1))
    names = [f"s{i:0{width}d}" for i in range(n)]

    nodes = {"cc": _node("cc", Tier.BACKBONE, tier_classes, **node_kw)}
    for name in names:
        nodes[name] = _node(name, Tier.EDGE, tier_classes, **node_kw)

    seg = _jittered(rng, np.full(n, ring_length / n), jitter)
    seg *= ring_length / seg.sum()
    links: dict[str, LinkSpec] = {}
    for i in range(n):
        a, b = names[i], names[(i + 1) % n]
        links[f"r{i}"] = LinkSpec(f"r{i}", a, b, float(seg[i]), l_fix_db)
    tap = float(_jittered(rng, np.array([ring_length / n]), jitter)[0])
    links["tap"] = LinkSpec("tap", "cc", names[0], tap, l_fix_db)

    linked = {frozenset((l.src, l.dst)) for l in links.values()}
    everyone = ["cc", *names]
    candidates = [
        (a, b)
        for i, a in enumerate(everyone)
        for b in everyone[i + 1 :]
        if frozenset((a, b)) not in linked
    ]
    if n_chords > len(candidates):
        raise ConfigurationError(f"at most {len(candidates)} chords fit a ring of {n}")
    radius = ring_length / (2 * math.pi)
    picked = rng.choice(len(candidates), size=n_chords, replace=False) if n_chords else []
    for c, idx in enumerate(sorted(int(i) for i in picked)):
        a, b = candidates[idx]
        if a == "cc":
            length = tap + radius  # through the ring centre
        else:
            k = abs(names.index(a) - names.index(b))
            length = 2 * radius * math.sin(math.pi * min(k, n - k) / n)
        length = float(_jittered(rng, np.array([length]), jitter)[0])
        links[f"c{c}"] = LinkSpec(f"c{c}", a, b, length, l_fix_db)
    return Topology(nodes=nodes, links=links, alpha=alpha, kind=TopologyKind.METRO)


def build_distribution(
    n_neighborhoods: int,
    agg_points: int,
    span: float,
    seed: int,
    *,
    alpha: float = 0.2,
    l_fix_db: float = 3.0,
    jitter: float = 0.2,
    tier_classes: Mapping[Tier, Iterable[str]] | None = None,
    **node_kw,
) -> Topology:
    """Two-level tree: station -> aggregation points -> neighborhood leaves."""
    if agg_points < 1 or n_neighborhoods < 1:
        raise ConfigurationError("need at least one aggregation point and one neighborhood")
    if agg_points > n_neighborhoods:
        raise ConfigurationError("more aggregation points than neighborhoods")
    if not span > 0:
        raise ConfigurationError("span must be positive")
    if not 4 <= agg_points <= 8:
        log.warning("agg_points=%d outside the usual 4-8 range", agg_points)
    rng = stream(seed, "topology", "distribution")
    nodes = {"station": _node("station", Tier.BACKBONE, tier_classes, **node_kw)}
    links: dict[str, LinkSpec] = {}
    up = _jittered(rng, np.full(agg_points, span / 2), jitter)
    for a in range(agg_points):
        name = f"a{a}"
        nodes[name] = _node(name, Tier.AGGREGATION, tier_classes, **node_kw)
        links[f"u{a}"] = LinkSpec(f"u{a}", "station", name, float(up[a]), l_fix_db)
    width = len(str(n_neighborhoods - 1))
    down = _jittered(rng, np.full(n_neighborhoods, span / 4), jitter)
    for i in range(n_neighborhoods):
        leaf = f"n{i:0{width}d}"
        nodes[leaf] = _node(leaf, Tier.EDGE, tier_classes, **node_kw)
        links[f"d{i}"] = LinkSpec(f"d{i}", f"a{i % agg_points}", leaf, float(down[i]), l_fix_db)
    return Topology(nodes=nodes, links=links, alpha=alpha, kind=TopologyKind.DISTRIBUTION)


def build_longhaul(
    total_length: float,
    n_trusted: int,
    dual_chain: bool = False,
    *,
    alpha: float = 0.2,
    l_fix_db: float = 3.0,
    end_classes: Iterable[str] = ALL_CLASSES,
    **node_kw,
) -> Topology:
    """Two control areas joined by a chain of trusted nodes with equal segments."""
    if not 0 <= n_trusted <= 3:
        raise ConfigurationError("n_trusted must lie in 0..3")
    if not total_length > 0:
        raise ConfigurationError("total_length must be positive")
    if not 150 <= total_length <= 300:
        log.warning("long-haul length %.0f km outside the usual 150-300 km", total_length)
    chain = ["A", *[f"T{i + 1}" for i in range(n_trusted)], "B"]
    nodes = {}
    for name in chain:
        if name in ("A", "B"):
            nodes[name] = NodeSpec(name, Tier.BACKBONE, class_ids=tuple(end_classes), **node_kw)
        else:
            nodes[name] = NodeSpec(name, Tier.AGGREGATION, **node_kw)
    seg = total_length / (len(chain) - 1)
    links = {}
    for i in range(len(chain) - 1):
        for lane in (("a", "b") if dual_chain else ("",)):
            lid = f"h{i}{lane}"
            links[lid] = LinkSpec(lid, chain[i], chain[i + 1], seg, l_fix_db)
    return Topology(nodes=nodes, links=links, alpha=alpha, kind=TopologyKind.LONGHAUL)
