"""Graph topologies: finite tori, the infinite lattice, the comb, regular trees.

Vertices are plain tuples: integer coordinate vectors for lattice-like
topologies, path-from-root labels for trees (the root is the empty tuple).
Edges are unordered pairs stored canonically as a lexicographically sorted
2-tuple of vertices, so the two representations {x,y} and {y,x} compare and
hash equal.

All functions are pure; topologies are frozen dataclasses and safe to share
across replica workers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Optional, Sequence

from .randomness import label_entity_parts, vertex_entity_parts, zigzag

Vertex = tuple
Edge = tuple  # (u, v) with u < v lexicographically

__all__ = [
    "Torus",
    "InfiniteLattice",
    "Comb",
    "RegularTree",
    "Topology",
    "canonical_edge",
    "neighbors",
    "l1_ball",
    "ball_edges",
    "graph_ball",
    "attempt_ball",
    "connected_in_ball",
    "vertices",
    "edges",
    "ball_offsets",
    "punctured_ball_offsets",
    "edge_axis_base",
    "regular_degree",
    "describe",
    "from_description",
    "vertex_entity",
    "edge_entity",
]


@dataclass(frozen=True)
class Torus:
    """d-dimensional discrete torus of side ``side`` (side >= 3)."""

    dim: int
    side: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"torus dimension must be >= 1, got {self.dim}")
        if self.side < 3:
            raise ValueError(f"torus side must be >= 3, got {self.side}")

    kind = "torus"
    lattice_like = True
    finite = True


@dataclass(frozen=True)
class InfiniteLattice:
    """The integer lattice of dimension ``dim`` with nearest-neighbor edges."""

    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"lattice dimension must be >= 1, got {self.dim}")

    kind = "infinite_lattice"
    lattice_like = True
    finite = False


@dataclass(frozen=True)
class Comb:
    """The comb over the integers: the 2-d lattice with every horizontal edge
    deleted except those on the spine (second coordinate zero).

    Vertical edges {(x,y),(x,y+1)} always exist; horizontal edges
    {(x,0),(x+1,0)} exist only on the spine.
    """

    kind = "comb"
    dim = 2
    lattice_like = False  # l1 balls are not subgraph balls here
    finite = False


@dataclass(frozen=True)
class RegularTree:
    """Rooted representation of the regular tree of the given degree.

    The root is the empty tuple and has ``degree`` children; every other
    internal vertex has one parent and ``degree - 1`` children, so all
    non-leaf vertices have the same degree.  ``depth=None`` is the infinite
    tree (vertices materialized lazily); a finite ``depth`` caps the label
    length, which makes leaves degree-1 vertices (the truncation is not
    regular at the boundary, which is fine for forward simulations on small
    trees and documented where it matters).
    """

    degree: int
    depth: Optional[int] = None

    def __post_init__(self):
        if self.degree < 2:
            raise ValueError(f"tree degree must be >= 2, got {self.degree}")
        if self.depth is not None and self.depth < 1:
            raise ValueError(f"tree depth must be >= 1 or None, got {self.depth}")

    kind = "regular_tree"
    lattice_like = False

    @property
    def finite(self):
        return self.depth is not None


Topology = (Torus, InfiniteLattice, Comb, RegularTree)


def canonical_edge(u: Vertex, v: Vertex) -> Edge:
    """Canonical (lexicographically sorted) form of the undirected edge {u,v}."""
    if u == v:
        raise ValueError(f"self-loop {u!r} is not an edge")
    return (u, v) if u < v else (v, u)


def _check_lattice_vertex(top, v: Vertex):
    if not isinstance(v, tuple) or len(v) != top.dim:
        raise ValueError(f"vertex {v!r} is not a coordinate {top.dim}-tuple")
    if isinstance(top, Torus) and not all(0 <= c < top.side for c in v):
        raise ValueError(f"vertex {v!r} outside torus of side {top.side}")


def _tree_is_valid(top: RegularTree, v: Vertex) -> bool:
    if not isinstance(v, tuple):
        return False
    if top.depth is not None and len(v) > top.depth:
        return False
    for i, c in enumerate(v):
        limit = top.degree if i == 0 else top.degree - 1
        if not 0 <= c < limit:
            return False
    return True


def neighbors(top, v: Vertex) -> list:
    """All vertices adjacent to ``v``, computed on demand, no duplicates."""
    if isinstance(top, Torus):
        _check_lattice_vertex(top, v)
        out = []
        for axis in range(top.dim):
            for step in (1, -1):
                w = list(v)
                w[axis] = (w[axis] + step) % top.side
                w = tuple(w)
                if w != v and w not in out:
                    out.append(w)
        return out
    if isinstance(top, InfiniteLattice):
        _check_lattice_vertex(top, v)
        out = []
        for axis in range(top.dim):
            for step in (1, -1):
                w = list(v)
                w[axis] += step
                out.append(tuple(w))
        return out
    if isinstance(top, Comb):
        if not isinstance(v, tuple) or len(v) != 2:
            raise ValueError(f"vertex {v!r} is not a coordinate pair")
        x, y = v
        out = [(x, y - 1), (x, y + 1)]
        if y == 0:
            out = [(x - 1, 0), (x + 1, 0)] + out
        return out
    if isinstance(top, RegularTree):
        if not _tree_is_valid(top, v):
            raise ValueError(f"vertex {v!r} is not a valid tree label")
        out = []
        if len(v) > 0:
            out.append(v[:-1])
        if top.depth is None or len(v) < top.depth:
            n_children = top.degree if len(v) == 0 else top.degree - 1
            out.extend(v + (j,) for j in range(n_children))
        return out
    raise TypeError(f"unknown topology {top!r}")


@lru_cache(maxsize=None)
def ball_offsets(dim: int, radius: int) -> tuple:
    """All offsets z with |z|_1 <= radius, lexicographically sorted."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    rng = range(-radius, radius + 1)
    offs = [z for z in itertools.product(rng, repeat=dim) if sum(abs(c) for c in z) <= radius]
    offs.sort()
    return tuple(offs)


@lru_cache(maxsize=None)
def punctured_ball_offsets(dim: int, radius: int) -> tuple:
    """Ball offsets without the origin; the displacement mark alphabet."""
    return tuple(z for z in ball_offsets(dim, radius) if any(c != 0 for c in z))


def l1_ball(top, x: Vertex, radius: int) -> list:
    """All vertices within L1 distance ``radius`` of x (torus metric on tori)."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    if isinstance(top, InfiniteLattice):
        _check_lattice_vertex(top, x)
        return [tuple(c + o for c, o in zip(x, off)) for off in ball_offsets(top.dim, radius)]
    if isinstance(top, Torus):
        _check_lattice_vertex(top, x)
        seen = {
            tuple((c + o) % top.side for c, o in zip(x, off))
            for off in ball_offsets(top.dim, radius)
        }
        return sorted(seen)
    raise ValueError(f"l1_ball is defined for lattice-like topologies, not {top.kind}")


def ball_edges(top, x: Vertex, radius: int) -> list:
    """All edges with both endpoints in attempt_ball(top, x, radius), canonical order."""
    ball = attempt_ball(top, x, radius)
    ball_set = set(ball)
    out = set()
    for u in ball:
        for w in neighbors(top, u):
            if w in ball_set:
                out.add(canonical_edge(u, w))
    return sorted(out)


def graph_ball(top, x: Vertex, radius: int) -> list:
    """Vertices within graph distance ``radius`` of x (any topology), sorted.

    On tori and the infinite lattice this coincides with the L1 ball; on
    trees it is the natural ball for range-limited dynamics.
    """
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    frontier = [x]
    seen = {x}
    for _ in range(radius):
        nxt = []
        for u in frontier:
            for w in neighbors(top, u):
                if w not in seen:
                    seen.add(w)
                    nxt.append(w)
        frontier = nxt
    return sorted(seen)


def attempt_ball(top, x: Vertex, radius: int) -> list:
    """The ball that range-limited dynamics use at x: the L1 ball on
    lattice-like topologies, the graph ball on trees.  This is the domain of
    copy-attempt marks and of ball-restricted connectivity alike."""
    if getattr(top, "lattice_like", False):
        return l1_ball(top, x, radius)
    if isinstance(top, RegularTree):
        return graph_ball(top, x, radius)
    raise ValueError(f"ball-restricted dynamics are unsupported on {top.kind}")


def connected_in_ball(zeta: Mapping, top, x: Vertex, y: Vertex, radius: int) -> bool:
    """True iff x and y are joined by open edges inside the radius-ball at x.

    ``zeta`` maps canonical edges to {0, 1} (closed/open) and must cover every
    ball edge: a lazy configuration that has not materialized one of them will
    raise, which is a contract violation on the caller's side, never a silent
    resample.  connected_in_ball(zeta, top, x, x, radius) is always true.
    """
    ball = attempt_ball(top, x, radius)
    ball_set = set(ball)
    if y not in ball_set:
        raise ValueError(f"target {y!r} lies outside the radius-{radius} ball at {x!r}")
    if x == y:
        return True
    frontier = [x]
    visited = {x}
    while frontier:
        nxt = []
        for u in frontier:
            for w in neighbors(top, u):
                if w in visited or w not in ball_set:
                    continue
                if zeta[canonical_edge(u, w)]:
                    if w == y:
                        return True
                    visited.add(w)
                    nxt.append(w)
        frontier = nxt
    return False


def vertices(top) -> list:
    """All vertices of a finite topology, in canonical (sorted) order."""
    if isinstance(top, Torus):
        return [tuple(v) for v in itertools.product(range(top.side), repeat=top.dim)]
    if isinstance(top, RegularTree) and top.depth is not None:
        out = [()]
        frontier = [()]
        for _ in range(top.depth):
            nxt = []
            for v in frontier:
                n_children = top.degree if len(v) == 0 else top.degree - 1
                nxt.extend(v + (j,) for j in range(n_children))
            out.extend(nxt)
            frontier = nxt
        return sorted(out, key=lambda v: (len(v), v))
    raise ValueError(f"vertex enumeration needs a finite topology, got {top.kind}")


def edges(top) -> list:
    """All edges of a finite topology, canonical, sorted."""
    out = set()
    for v in vertices(top):
        for w in neighbors(top, v):
            out.add(canonical_edge(v, w))
    return sorted(out)


def edge_axis_base(top, edge: Edge) -> tuple:
    """Decompose a lattice-like edge into (axis, base) with other = base + e_axis.

    On a torus the wrap edge {(L-1,..), (0,..)} has base (L-1,..): the unique
    endpoint whose successor modulo the side is the other endpoint.
    """
    u, v = edge
    diff_axes = [i for i in range(len(u)) if u[i] != v[i]]
    if len(diff_axes) != 1:
        raise ValueError(f"{edge!r} is not a lattice edge")
    axis = diff_axes[0]
    if isinstance(top, InfiniteLattice):
        if v[axis] - u[axis] == 1:
            return axis, u
        if u[axis] - v[axis] == 1:
            return axis, v
    elif isinstance(top, Torus):
        side = top.side
        if (u[axis] + 1) % side == v[axis]:
            return axis, u
        if (v[axis] + 1) % side == u[axis]:
            return axis, v
    else:
        raise ValueError(f"edge_axis_base is lattice-like only, got {top.kind}")
    raise ValueError(f"{edge!r} endpoints are not adjacent on {top!r}")


def regular_degree(top) -> int:
    """Common vertex degree, for topologies that are regular graphs."""
    if isinstance(top, (Torus, InfiniteLattice)):
        return 2 * top.dim
    if isinstance(top, RegularTree) and top.depth is None:
        return top.degree
    raise ValueError(f"{top.kind} is not a regular graph")


def describe(top) -> dict:
    """JSON-ready description of a topology, for exports and reports."""
    out = {"kind": top.kind}
    if isinstance(top, Torus):
        out.update(dim=top.dim, side=top.side)
    elif isinstance(top, InfiniteLattice):
        out.update(dim=top.dim)
    elif isinstance(top, RegularTree):
        out.update(degree=top.degree, depth=top.depth)
    return out


def from_description(desc: Mapping) -> "Topology":
    """Inverse of ``describe`` (used by config parsing)."""
    kind = desc["kind"]
    if kind == "torus":
        return Torus(int(desc["dim"]), int(desc["side"]))
    if kind == "infinite_lattice":
        return InfiniteLattice(int(desc["dim"]))
    if kind == "comb":
        return Comb()
    if kind == "regular_tree":
        depth = desc.get("depth")
        return RegularTree(int(desc["degree"]), None if depth is None else int(depth))
    raise ValueError(f"unknown topology kind {kind!r}")


def vertex_entity(top, v: Vertex) -> tuple:
    """Canonical RNG entity id parts for a vertex."""
    if isinstance(top, RegularTree):
        return label_entity_parts(v)
    return vertex_entity_parts(v)


def edge_entity(top, edge: Edge, env: int = 0) -> tuple:
    """Canonical RNG entity id parts for an edge.

    Lattice-like edges are identified by (env, axis, zigzagged base
    coordinates); tree edges by (env, length-prefixed label of the child
    endpoint).
    """
    if isinstance(top, RegularTree):
        u, v = edge
        child = u if len(u) > len(v) else v
        return (int(env),) + label_entity_parts(child)
    axis, base = edge_axis_base(top, edge)
    return (int(env), int(axis)) + tuple(zigzag(int(c)) for c in base)
