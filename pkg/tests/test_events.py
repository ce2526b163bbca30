import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import h_site, ring_sites, v_site
from pinball.configuration import Configuration
from pinball.errors import InvalidArgumentError
from pinball.events import (
    BondField,
    crossing,
    dual_crosscheck,
    dump_witness,
    load_witness,
    radial_closed_path,
    rect_crossing,
    rectangle_box,
    surrounding_circuit_4rect,
    surrounding_circuit_exact,
    validate_witness,
    winding_number,
)
from pinball.geometry import (
    RegionKind,
    TiltedRegion,
    TiltedVertex,
    edge_for_site,
    lattice_to_vertex,
    region_contains,
)
from pinball.tracer import trace

NE_CHAIN = [(1, 1), (2, 2), (3, 3)]
ORIGIN_VERTEX = TiltedVertex(0.5, 0.5)


def test_bond_field_lookup():
    c = Configuration.from_sites(4, [h_site(0, 0), v_site(1, -1)])
    field = BondField(c, 3)
    assert field.h(0, 0)
    assert field.v(1, -1)
    assert not field.h(1, 0)
    assert field.neighbors((1, 0)) == [(0, 0), (1, -1)]
    assert field.is_closed((1, 0), (0, 0))


def test_radial_path():
    c = Configuration.from_sites(8, NE_CHAIN)
    result = radial_closed_path(c, 5)
    assert result.holds
    assert result.witness == tuple(lattice_to_vertex(i, 0) for i in range(4))
    assert validate_witness(c, result)
    assert not radial_closed_path(c, 7).holds


def test_radial_path_extremes():
    assert radial_closed_path(Configuration.filled(4, True), 3).holds
    assert not radial_closed_path(Configuration.filled(4, False), 3).holds


def test_radial_path_needs_extent():
    with pytest.raises(InvalidArgumentError):
        radial_closed_path(Configuration.from_sites(7, NE_CHAIN), 7)


def test_rectangle_boxes():
    assert rectangle_box(4, "T") == ((1, 2), (-4, 4), 1)
    assert rectangle_box(4, "T1") == ((3, 4), (-4, 4), 1)
    assert rectangle_box(4, "T2") == ((-4, -3), (-4, 4), 1)
    assert rectangle_box(4, "T3") == ((-4, 4), (3, 4), 0)
    assert rectangle_box(4, "T4") == ((-4, 4), (-4, -3), 0)


def _staircase(skip_bridge=False):
    sites = [v_site(1, j) for j in range(-4, 0)] + [v_site(2, j) for j in range(0, 4)]
    if not skip_bridge:
        sites.append(h_site(1, 0))
    return sites


def test_rect_crossing_staircase():
    c = Configuration.from_sites(9, _staircase())
    result = rect_crossing(c, 4)
    assert result.event == "Aprime"
    assert result.holds
    assert validate_witness(c, result)
    assert not rect_crossing(Configuration.from_sites(9, _staircase(skip_bridge=True)), 4).holds


def test_rect_crossing_extremes():
    assert rect_crossing(Configuration.filled(8, True), 4).holds
    assert not rect_crossing(Configuration.filled(8, False), 4).holds


def test_circuit_ring():
    c = Configuration.from_sites(5, ring_sites(2))
    result = surrounding_circuit_exact(c, 2)
    assert result.holds
    assert result.witness_kind == "circuit"
    assert abs(winding_number(result.witness)) == 1
    assert validate_witness(c, result)
    assert dual_crosscheck(c, 2)
    assert surrounding_circuit_4rect(c, 2).holds


def test_broken_ring_has_dual_path():
    c = Configuration.from_sites(5, ring_sites(2, skip=[h_site(0, 2)]))
    result = surrounding_circuit_exact(c, 2, witness=True)
    assert not result.holds
    assert result.witness_kind == "dual_path"
    assert validate_witness(c, result)
    assert not dual_crosscheck(c, 2)


def test_inner_ring_is_exact_but_not_four_rectangles():
    c = Configuration.from_sites(9, ring_sites(3))
    assert surrounding_circuit_exact(c, 4).holds
    four = surrounding_circuit_4rect(c, 4)
    assert not four.holds
    assert len(four.parts) == 4


def test_ring_inside_core_does_not_count():
    # Q_n の中の閉路は環状領域の外
    c = Configuration.from_sites(9, ring_sites(1))
    assert not surrounding_circuit_exact(c, 4).holds
    assert not dual_crosscheck(c, 4)


def test_circuit_needs_extent():
    with pytest.raises(InvalidArgumentError):
        surrounding_circuit_exact(Configuration.filled(8, True), 4)
    with pytest.raises(InvalidArgumentError):
        surrounding_circuit_exact(Configuration.filled(8, True), 1)


def test_crossing_and_winding():
    assert crossing((0, 0), (1, 0)) == 1
    assert crossing((1, 0), (0, 0)) == -1
    assert crossing((1, 0), (1, 1)) == -1
    assert crossing((3, 3), (4, 3)) == 1
    assert crossing((0, 1), (1, 1)) == 0
    assert winding_number([(5, 5), (6, 5), (6, 6), (5, 6)]) == 0


def test_tampered_witness_rejected():
    c = Configuration.from_sites(5, ring_sites(2))
    result = surrounding_circuit_exact(c, 2)
    broken = Configuration.from_sites(5, ring_sites(2, skip=[h_site(0, 2)]))
    assert not validate_witness(broken, result)


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=0.3, max_value=0.7), st.integers(min_value=0, max_value=10**6))
def test_exact_agrees_with_dual(p, seed):
    c = Configuration.sample(p, 7, seed)
    result = surrounding_circuit_exact(c, 3, witness=True)
    assert result.holds == dual_crosscheck(c, 3)
    assert validate_witness(c, result)
    if surrounding_circuit_4rect(c, 3).holds:
        assert result.holds


@settings(max_examples=30, deadline=None)
@given(
    st.floats(min_value=0, max_value=1),
    st.floats(min_value=0, max_value=1),
    st.integers(min_value=0, max_value=10**6),
)
def test_detectors_are_monotone_in_p(p1, p2, seed):
    lo, hi = sorted((p1, p2))
    c_lo = Configuration.sample(lo, 9, seed)
    c_hi = Configuration.sample(hi, 9, seed)
    for detect in (
        lambda c: radial_closed_path(c, 4).holds,
        lambda c: rect_crossing(c, 4).holds,
        lambda c: surrounding_circuit_exact(c, 4).holds,
        lambda c: surrounding_circuit_4rect(c, 4).holds,
    ):
        assert not detect(c_lo) or detect(c_hi)


def test_witness_file(tmp_path):
    c = Configuration.from_sites(5, ring_sites(2))
    result = surrounding_circuit_exact(c, 2)
    path = dump_witness(result, tmp_path / "ring.witness")
    assert path.read_text().startswith("# pinball-witness v1\n# event Acirc\n# n 2\n# holds true\n# kind circuit\n")
    loaded = load_witness(path)
    assert loaded.holds and loaded.witness == result.witness
    assert validate_witness(c, loaded)


# --- 傾いた座標だけで組んだ総当たりの判定 ---

def _mirror_graph(c):
    """閉じたサイトの傾いた辺をそのまま辺にしたグラフ"""
    g = nx.Graph()
    g.add_edges_from(edge_for_site(s) for s in c.closed_sites())
    return g


def _region(kind, n):
    return lambda v: region_contains(TiltedRegion(kind, n), v)


def _reaches_outside(g, n):
    if ORIGIN_VERTEX not in g:
        return False
    inside = _region(RegionKind.Q, n)
    return any(not inside(v) for v in nx.node_connected_component(g, ORIGIN_VERTEX))


def _crosses(g, kind, n):
    sub = g.subgraph([v for v in g if _region(kind, n)(v)])
    # T, T1, T2 は u - v の向き、T3, T4 は u + v - 1 の向きに長い
    if kind in (RegionKind.T3, RegionKind.T4):
        coord = lambda v: v.u + v.v - 1
    else:
        coord = lambda v: v.u - v.v
    for comp in nx.connected_components(sub):
        values = {round(coord(v)) for v in comp}
        if -2 * n in values and 2 * n in values:
            return True
    return False


def _turns(cycle):
    pts = np.array(cycle, dtype=float) - 0.5
    angles = np.arctan2(pts[:, 1], pts[:, 0])
    steps = np.diff(np.append(angles, angles[0]))
    steps = (steps + math.pi) % (2 * math.pi) - math.pi
    return int(round(steps.sum() / (2 * math.pi)))


def _surrounds(g, n):
    outer, inner = _region(RegionKind.Q, 2 * n), _region(RegionKind.Q, n)
    sub = g.subgraph([v for v in g if outer(v) and not inner(v)])
    return any(_turns(cycle) != 0 for cycle in nx.cycle_basis(sub))


@pytest.mark.parametrize("p", [0.4, 0.5, 0.6])
def test_detectors_match_brute_force(p):
    for stream in range(100):
        n = 2 + stream % 3
        c = Configuration.sample(p, 2 * n + 1, 17, stream)
        g = _mirror_graph(c)
        assert radial_closed_path(c, n).holds == _reaches_outside(g, n)
        crossings = {}
        for kind in (RegionKind.T, RegionKind.T1, RegionKind.T2, RegionKind.T3, RegionKind.T4):
            crossings[kind] = _crosses(g, kind, n)
            assert rect_crossing(c, n, kind).holds == crossings[kind]
        assert surrounding_circuit_4rect(c, n).holds == all(
            crossings[k] for k in (RegionKind.T1, RegionKind.T2, RegionKind.T3, RegionKind.T4)
        )
        assert surrounding_circuit_exact(c, n).holds == _surrounds(g, n)


def test_brute_force_sees_planted_ring():
    g = _mirror_graph(Configuration.from_sites(5, ring_sites(2)))
    assert _surrounds(g, 2)
    assert not _surrounds(_mirror_graph(Configuration.from_sites(5, ring_sites(2, skip=[h_site(0, 2)]))), 2)


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=0.4, max_value=0.95), st.integers(min_value=0, max_value=10**6))
def test_circuit_traps_the_ray(p, seed):
    c = Configuration.sample(p, 7, seed)
    if surrounding_circuit_exact(c, 3).holds:
        t = trace(c)
        assert t.closed
        assert t.within(6)
