"""Topology tests: neighborhoods, balls, edges, canonical identities."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ipslab import lattice
from ipslab.lattice import (
    Comb,
    InfiniteLattice,
    RegularTree,
    Torus,
    ball_edges,
    ball_offsets,
    canonical_edge,
    connected_in_ball,
    edge_axis_base,
    edge_entity,
    edges,
    graph_ball,
    l1_ball,
    neighbors,
    punctured_ball_offsets,
    regular_degree,
    vertex_entity,
    vertices,
)

# |B_1(0, R)| on Z^d ("crystal ball" counts), d = 1..4, R = 1..4.
BALL_SIZES = {
    (1, 1): 3, (1, 2): 5, (1, 3): 7, (1, 4): 9,
    (2, 1): 5, (2, 2): 13, (2, 3): 25, (2, 4): 41,
    (3, 1): 7, (3, 2): 25, (3, 3): 63, (3, 4): 129,
    (4, 1): 9, (4, 2): 41, (4, 3): 129, (4, 4): 321,
}


def test_constructor_validation():
    with pytest.raises(ValueError):
        Torus(dim=0, side=5)
    with pytest.raises(ValueError):
        Torus(dim=2, side=2)
    with pytest.raises(ValueError):
        InfiniteLattice(dim=0)
    with pytest.raises(ValueError):
        RegularTree(degree=1)
    with pytest.raises(ValueError):
        RegularTree(degree=3, depth=0)


@pytest.mark.parametrize("dim,radius", sorted(BALL_SIZES))
def test_ball_offset_counts(dim, radius):
    offs = ball_offsets(dim, radius)
    assert len(offs) == BALL_SIZES[(dim, radius)]
    assert len(punctured_ball_offsets(dim, radius)) == len(offs) - 1
    assert list(offs) == sorted(offs)
    assert all(sum(abs(c) for c in z) <= radius for z in offs)


def test_torus_ring_neighbors():
    c3 = Torus(dim=1, side=3)
    assert sorted(neighbors(c3, (0,))) == [(1,), (2,)]
    t25 = Torus(dim=2, side=5)
    assert sorted(neighbors(t25, (0, 0))) == [(0, 1), (0, 4), (1, 0), (4, 0)]


def test_comb_neighbors():
    comb = Comb()
    assert neighbors(comb, (3, 2)) == [(3, 1), (3, 3)]
    spine = neighbors(comb, (0, 0))
    assert sorted(spine) == [(-1, 0), (0, -1), (0, 1), (1, 0)]


def test_tree_neighbors_and_degree():
    t = RegularTree(degree=3)
    assert sorted(neighbors(t, ())) == [(0,), (1,), (2,)]
    inner = neighbors(t, (1,))
    assert sorted(inner) == [(), (1, 0), (1, 1)]
    assert regular_degree(t) == 3
    capped = RegularTree(degree=3, depth=1)
    assert neighbors(capped, (2,)) == [()]
    with pytest.raises(ValueError):
        regular_degree(capped)
    with pytest.raises(ValueError):
        regular_degree(Comb())


@st.composite
def _topology_and_vertex(draw):
    which = draw(st.sampled_from(["torus", "lattice", "comb", "tree"]))
    if which == "torus":
        dim = draw(st.integers(1, 3))
        side = draw(st.integers(3, 6))
        top = Torus(dim=dim, side=side)
        v = tuple(draw(st.integers(0, side - 1)) for _ in range(dim))
    elif which == "lattice":
        dim = draw(st.integers(1, 4))
        top = InfiniteLattice(dim=dim)
        v = tuple(draw(st.integers(-5, 5)) for _ in range(dim))
    elif which == "comb":
        top = Comb()
        v = (draw(st.integers(-5, 5)), draw(st.integers(-5, 5)))
    else:
        top = RegularTree(degree=draw(st.integers(2, 4)))
        length = draw(st.integers(0, 4))
        v = ()
        for i in range(length):
            limit = top.degree if i == 0 else top.degree - 1
            v = v + (draw(st.integers(0, limit - 1)),)
    return top, v


@given(_topology_and_vertex())
def test_neighbor_symmetry(top_and_v):
    top, v = top_and_v
    for w in neighbors(top, v):
        assert v in neighbors(top, w), f"{v} -> {w} not symmetric on {top}"


def test_l1_ball_wraps_and_dedups():
    c3 = Torus(dim=1, side=3)
    assert l1_ball(c3, (0,), 2) == [(0,), (1,), (2,)]
    t = Torus(dim=2, side=3)
    assert len(l1_ball(t, (1, 1), 1)) == 5
    with pytest.raises(ValueError):
        l1_ball(Comb(), (0, 0), 1)


def test_ball_edges_on_small_ring_includes_far_edge():
    # On C3 the radius-1 ball is the whole ring, so the "far" edge {1,2}
    # belongs to the ball graph; lifting counts from Z^1 would miss it.
    c3 = Torus(dim=1, side=3)
    be = ball_edges(c3, (0,), 1)
    assert be == [((0,), (1,)), ((0,), (2,)), ((1,), (2,))]


def test_ball_edges_on_infinite_lattice():
    z2 = InfiniteLattice(dim=2)
    be = ball_edges(z2, (0, 0), 1)
    # Four spokes only: the ball's boundary vertices are pairwise non-adjacent.
    assert len(be) == 4
    assert all((0, 0) in e for e in be)


def test_graph_ball_matches_l1_ball_on_lattice():
    z2 = InfiniteLattice(dim=2)
    assert graph_ball(z2, (2, -1), 2) == sorted(l1_ball(z2, (2, -1), 2))
    t = RegularTree(degree=3)
    assert graph_ball(t, (), 1) == [(), (0,), (1,), (2,)]


def test_connected_in_ball_hand_case():
    # d=1, R=2: {0,1} closed, {1,2} open; no open path 0 <-> 2 inside the ball.
    z1 = InfiniteLattice(dim=1)
    zeta = {
        ((-2,), (-1,)): 1,
        ((-1,), (0,)): 1,
        ((0,), (1,)): 0,
        ((1,), (2,)): 1,
    }
    assert not connected_in_ball(zeta, z1, (0,), (2,), 2)
    zeta[((0,), (1,))] = 1
    assert connected_in_ball(zeta, z1, (0,), (2,), 2)
    assert connected_in_ball(zeta, z1, (0,), (0,), 2)


def test_connected_in_ball_requires_target_inside():
    z1 = InfiniteLattice(dim=1)
    with pytest.raises(ValueError):
        connected_in_ball({}, z1, (0,), (3,), 2)


def test_connected_in_ball_raises_on_missing_edge():
    z1 = InfiniteLattice(dim=1)
    with pytest.raises(KeyError):
        connected_in_ball({((0,), (1,)): 1}, z1, (0,), (2,), 2)


@given(st.integers(0, 2**32))
def test_connectivity_monotone_in_open_set(seed):
    import random

    rng = random.Random(seed)
    z2 = InfiniteLattice(dim=2)
    be = ball_edges(z2, (0, 0), 2)
    zeta = {e: rng.randint(0, 1) for e in be}
    target = rng.choice([v for v in l1_ball(z2, (0, 0), 2) if v != (0, 0)])
    before = connected_in_ball(zeta, z2, (0, 0), target, 2)
    # Open one more closed edge; connectivity can only be gained.
    closed = [e for e in be if zeta[e] == 0]
    if closed:
        zeta[rng.choice(closed)] = 1
    after = connected_in_ball(zeta, z2, (0, 0), target, 2)
    assert after or not before


def test_vertices_and_edges_counts():
    assert len(vertices(Torus(dim=2, side=3))) == 9
    assert len(edges(Torus(dim=2, side=3))) == 18
    assert len(vertices(Torus(dim=1, side=5))) == 5
    assert len(edges(Torus(dim=1, side=5))) == 5
    t = RegularTree(degree=3, depth=2)
    assert len(vertices(t)) == 10
    assert len(edges(t)) == 9
    with pytest.raises(ValueError):
        vertices(InfiniteLattice(dim=2))


def test_canonical_edge():
    assert canonical_edge((1,), (0,)) == ((0,), (1,))
    with pytest.raises(ValueError):
        canonical_edge((2, 2), (2, 2))


def test_edge_axis_base_plain_and_wrapped():
    z2 = InfiniteLattice(dim=2)
    assert edge_axis_base(z2, ((2, 3), (2, 4))) == (1, (2, 3))
    c5 = Torus(dim=1, side=5)
    assert edge_axis_base(c5, ((0,), (4,))) == (0, (4,))
    assert edge_axis_base(c5, ((1,), (2,))) == (0, (1,))
    with pytest.raises(ValueError):
        edge_axis_base(z2, ((0, 0), (1, 1)))


def test_entity_ids_are_distinct():
    z2 = InfiniteLattice(dim=2)
    ids = {
        edge_entity(z2, ((0, 0), (1, 0))),
        edge_entity(z2, ((0, 0), (0, 1))),
        edge_entity(z2, ((0, 0), (1, 0)), env=1),
        vertex_entity(z2, (0, 0)),
        vertex_entity(z2, (1, 0)),
    }
    assert len(ids) == 5
    t = RegularTree(degree=3)
    assert edge_entity(t, canonical_edge((1,), (1, 0))) == (0, 2, 1, 0)
