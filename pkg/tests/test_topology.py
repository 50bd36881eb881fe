import json

import pytest
from hypothesis import assume, given, strategies as st

from qkdgrid.errors import ConfigurationError
from qkdgrid.topology import (
    LinkSpec,
    NodeSpec,
    Tier,
    Topology,
    TopologyKind,
    build_distribution,
    build_longhaul,
    build_metro,
    link_loss,
)


def test_metro_three_equal_segments():
    top = build_metro(3, 30.0, 0, seed=1, jitter=0.0)
    assert len(top.nodes) == 4
    assert len(top.links) == 4
    for lid in ("r0", "r1", "r2"):
        assert top.links[lid].d_km == pytest.approx(10.0)
    assert top.nodes["cc"].tier is Tier.BACKBONE


def test_metro_ring_sums_to_length_with_jitter():
    top = build_metro(12, 100.0, 4, seed=9)
    ring = sum(l.d_km for lid, l in top.links.items() if lid.startswith("r"))
    assert ring == pytest.approx(100.0, rel=1e-12)
    assert len(top.links) == 12 + 1 + 4


def test_metro_118_bus_scale():
    top = build_metro(118, 100.0, 20, seed=4)
    edge = [n for n in top.nodes.values() if n.tier is Tier.EDGE]
    assert len(edge) == 118
    assert len(top.links) >= 138
    assert top.is_connected()


def test_metro_deterministic():
    a = build_metro(3, 30.0, 1, seed=5)
    b = build_metro(3, 30.0, 1, seed=5)
    assert a.to_json() == b.to_json()
    assert build_metro(10, 30.0, 3, seed=5).to_json() != build_metro(10, 30.0, 3, seed=6).to_json()


@pytest.mark.parametrize("args", [(2, 30.0, 0), (3, 0.0, 0), (3, 30.0, -1), (3, 30.0, 99)])
def test_metro_invalid(args):
    with pytest.raises(ConfigurationError):
        build_metro(*args, seed=0)


def test_distribution_tree_counts():
    top = build_distribution(8, 4, 20.0, seed=1)
    assert len(top.nodes) == 13
    assert len(top.links) == 12
    depth = top.path_km()
    assert all(d > 0 for n, d in depth.items() if n != "station")


def test_distribution_123_leaves():
    top = build_distribution(123, 6, 40.0, seed=2)
    leaves = [n for n in top.nodes.values() if n.tier is Tier.EDGE]
    assert len(leaves) == 123


def test_distribution_bijection_and_single_parent():
    top = build_distribution(4, 4, 20.0, seed=3)
    parents = {}
    for l in top.links.values():
        if l.dst.startswith("n"):
            parents.setdefault(l.dst, []).append(l.src)
    assert all(len(p) == 1 for p in parents.values())
    served = sorted(p[0] for p in parents.values())
    assert served == ["a0", "a1", "a2", "a3"]


def test_distribution_errors_and_warning(caplog):
    with pytest.raises(ConfigurationError):
        build_distribution(3, 4, 20.0, seed=0)
    build_distribution(12, 2, 20.0, seed=0)
    assert "outside" in caplog.text


def test_longhaul_shapes():
    t1 = build_longhaul(200.0, 1)
    assert len(t1.nodes) == 3 and len(t1.links) == 2
    assert all(l.d_km == pytest.approx(100.0) for l in t1.links.values())
    t0 = build_longhaul(200.0, 0)
    assert len(t0.nodes) == 2 and list(t0.links.values())[0].d_km == 200.0
    t3 = build_longhaul(300.0, 3, dual_chain=True)
    assert len(t3.nodes) == 5 and len(t3.links) == 8
    with pytest.raises(ConfigurationError):
        build_longhaul(200.0, 4)


@pytest.mark.parametrize("d,fix,alpha,want", [(50, 3, 0.2, 13.0), (1e-4, 0, 0.2, 2e-5),
                                              (100, 0, 0.28, 28.0)])
def test_link_loss_examples(d, fix, alpha, want):
    assert link_loss(LinkSpec("x", "a", "b", d, fix), alpha) == pytest.approx(want)


@given(st.floats(0.01, 500), st.floats(0.01, 500), st.floats(0.05, 1.0), st.floats(0, 10))
def test_link_loss_increasing(d1, d2, alpha, fix):
    lo, hi = sorted((d1, d2))
    if hi > lo:
        assert link_loss(LinkSpec("x", "a", "b", hi, fix), alpha) > \
            link_loss(LinkSpec("x", "a", "b", lo, fix), alpha)
        assert link_loss(LinkSpec("x", "a", "b", lo, fix), alpha * 1.1) > \
            link_loss(LinkSpec("x", "a", "b", lo, fix), alpha)


@given(st.integers(3, 30), st.integers(0, 5), st.integers(0, 2**31 - 1))
def test_generated_metro_connected_and_roundtrips(n, chords, seed):
    assume(chords <= (n + 1) * n // 2 - n - 1)
    top = build_metro(n, 50.0, chords, seed=seed)
    assert top.is_connected()
    again = Topology.from_json(top.to_json())
    assert again.to_json() == top.to_json()


def test_node_and_topology_invariants():
    with pytest.raises(ConfigurationError):
        NodeSpec("a", Tier.EDGE, b_max=1.0, b_min=2.0)
    with pytest.raises(ConfigurationError):
        NodeSpec("a", Tier.EDGE, phi=1.5)
    with pytest.raises(ConfigurationError):
        LinkSpec("l", "a", "b", 0.0)
    nodes = {k: NodeSpec(k, Tier.EDGE) for k in "abc"}
    with pytest.raises(ConfigurationError):
        Topology(nodes, {"l": LinkSpec("l", "a", "b", 1.0)})  # c is isolated
    with pytest.raises(ConfigurationError):
        Topology(nodes, {"l": LinkSpec("l", "a", "z", 1.0)})
    with pytest.raises(ConfigurationError):
        Topology({"a": nodes["a"]}, {}, alpha=0.0)


def test_json_keys():
    doc = json.loads(build_longhaul(200.0, 1).to_json())
    assert set(doc) >= {"kind", "alpha_db_per_km", "nodes", "links"}
    assert set(doc["links"][0]) >= {"id", "from", "to", "d_km", "l_fix_db", "rate_curve", "weights"}
    assert doc["kind"] == TopologyKind.LONGHAUL.value
