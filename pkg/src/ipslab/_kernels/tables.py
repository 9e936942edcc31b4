"""Precomputed geometry tables and run plans for the simulation kernels.

Tables hold pure geometry (ball offsets, adjacency CSum-of-row structures,
mark alphabets) as numpy arrays; plans bundle tables with model parameters
and per-entity RNG key prefixes.  Both kernel backends consume the same
plan objects, so everything here is built once in Python and treated as
read-only afterwards.

Two position modes exist.  FINITE plans index sites of a finite topology
and take their geometry from per-site CSR tables built with the generic
lattice functions, which keeps small graphs with wrap-around or irregular
degree exact.  LATTICE plans work on the infinite lattice with coordinate
vectors; edges are identified by (axis, base-vertex) keys packed into 64
bits, 14 bits per coordinate, at most 4 dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .. import lattice
from ..randomness import SeedScheme, StreamKind, fold_step, zigzag

__all__ = [
    "COORD_BITS",
    "COORD_OFFSET",
    "MAX_PACK_DIMS",
    "MODEL_VOTER",
    "MODEL_STIRRING",
    "MODEL_VMDYN",
    "MODE_INDEPENDENT",
    "MODE_COALESCING",
    "MODE_COUPLED",
    "MODE_STIRRING_SET",
    "SPACE_FINITE",
    "SPACE_LATTICE",
    "pack_coords",
    "unpack_coords",
    "pack_edge_key",
    "unpack_edge_key",
    "LatticeTables",
    "FiniteTables",
    "build_lattice_tables",
    "build_finite_tables",
    "ForwardPlan",
    "SetWalkPlan",
    "EnvWalkPlan",
    "make_forward_plan",
    "make_set_walk_plan",
    "make_env_walk_plan",
]

COORD_BITS = 14
COORD_OFFSET = 1 << (COORD_BITS - 1)  # 8192; coordinates live in [-8192, 8191]
_COORD_MASK = (1 << COORD_BITS) - 1
MAX_PACK_DIMS = 4

MODEL_VOTER = 0
MODEL_STIRRING = 1
MODEL_VMDYN = 2

MODE_INDEPENDENT = 0
MODE_COALESCING = 1
MODE_COUPLED = 2
MODE_STIRRING_SET = 3

SPACE_FINITE = 0
SPACE_LATTICE = 1


def pack_coords(coords: Sequence[int]) -> int:
    """Pack a coordinate vector into one nonnegative integer key."""
    if len(coords) > MAX_PACK_DIMS:
        raise ValueError(f"can pack at most {MAX_PACK_DIMS} coordinates, got {len(coords)}")
    packed = 0
    for i, c in enumerate(coords):
        c = int(c)
        if not -COORD_OFFSET <= c < COORD_OFFSET:
            raise ValueError(f"coordinate {c} outside the packable range")
        packed |= (c + COORD_OFFSET) << (COORD_BITS * i)
    return packed


def unpack_coords(packed: int, dim: int) -> tuple:
    return tuple(
        ((packed >> (COORD_BITS * i)) & _COORD_MASK) - COORD_OFFSET for i in range(dim)
    )


def pack_edge_key(axis: int, packed_base: int) -> int:
    """Key of the lattice edge from its base vertex in direction ``axis``."""
    return (int(axis) << 56) | int(packed_base)


def unpack_edge_key(key: int, dim: int):
    axis = (key >> 56) & 0xF
    base = unpack_coords(key & ((1 << 56) - 1), dim)
    return axis, base


@dataclass(frozen=True)
class LatticeTables:
    """Ball geometry of the infinite lattice, relative to the walker."""

    dim: int
    radius: int
    n_ball: int
    n_marks: int
    ball_off: np.ndarray        # (n_ball, dim) int64, lexicographic
    mark_off: np.ndarray        # (n_marks, dim) int64, lexicographic
    center_local: int
    mark_local: np.ndarray      # (n_marks,) int32 index into ball_off
    n_ledges: int
    ledge_axis: np.ndarray      # (n_ledges,) int8
    ledge_base_off: np.ndarray  # (n_ledges, dim) int64
    ladj_ptr: np.ndarray        # (n_ball + 1,) int32
    ladj_vert: np.ndarray       # int32, ball-local neighbor
    ladj_edge: np.ndarray       # int32, index into ledge arrays
    nbr_off: np.ndarray         # (2 dim, dim) int64 unit steps, lexicographic
    nbr_delta: np.ndarray       # (2 dim,) int64 packed-coordinate deltas


def build_lattice_tables(dim: int, radius: int) -> LatticeTables:
    if dim > MAX_PACK_DIMS:
        raise ValueError(f"lattice kernels support dim <= {MAX_PACK_DIMS}, got {dim}")
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    ball = lattice.ball_offsets(dim, radius)
    marks = lattice.punctured_ball_offsets(dim, radius)
    local = {off: i for i, off in enumerate(ball)}
    ball_set = set(ball)
    ledges = []  # (axis, base offset, local u, local v)
    for off in ball:
        for axis in range(dim):
            upper = tuple(c + (1 if i == axis else 0) for i, c in enumerate(off))
            if upper in ball_set:
                ledges.append((axis, off, local[off], local[upper]))
    adj = [[] for _ in ball]
    for le, (_, _, lu, lv) in enumerate(ledges):
        adj[lu].append((lv, le))
        adj[lv].append((lu, le))
    ladj_ptr = np.zeros(len(ball) + 1, dtype=np.int32)
    ladj_vert, ladj_edge = [], []
    for i, entries in enumerate(adj):
        for v, e in entries:
            ladj_vert.append(v)
            ladj_edge.append(e)
        ladj_ptr[i + 1] = len(ladj_vert)
    unit = lattice.punctured_ball_offsets(dim, 1)
    nbr_delta = [
        sum((off[i]) << (COORD_BITS * i) for i in range(dim)) for off in unit
    ]
    return LatticeTables(
        dim=dim,
        radius=radius,
        n_ball=len(ball),
        n_marks=len(marks),
        ball_off=np.asarray(ball, dtype=np.int64).reshape(len(ball), dim),
        mark_off=np.asarray(marks, dtype=np.int64).reshape(len(marks), dim),
        center_local=local[(0,) * dim],
        mark_local=np.asarray([local[m] for m in marks], dtype=np.int32),
        n_ledges=len(ledges),
        ledge_axis=np.asarray([e[0] for e in ledges], dtype=np.int8),
        ledge_base_off=np.asarray([e[1] for e in ledges], dtype=np.int64).reshape(
            len(ledges), dim
        ),
        ladj_ptr=ladj_ptr,
        ladj_vert=np.asarray(ladj_vert, dtype=np.int32),
        ladj_edge=np.asarray(ladj_edge, dtype=np.int32),
        nbr_off=np.asarray(unit, dtype=np.int64).reshape(len(unit), dim),
        nbr_delta=np.asarray(nbr_delta, dtype=np.int64),
    )


@dataclass(frozen=True)
class FiniteTables:
    """Per-site CSR geometry of a finite topology.

    The ball tables (marks, ball vertices, ball edges, in-ball adjacency)
    are present only when the tables were built with a radius; plain walks
    need just the neighbor CSR.
    """

    n_sites: int
    n_edges: int
    verts: tuple
    edge_pairs: tuple
    nbr_ptr: np.ndarray
    nbr_idx: np.ndarray
    degree: np.ndarray
    edge_u: np.ndarray = None   # (n_edges,) int32 endpoint site ids
    edge_v: np.ndarray = None
    radius: Optional[int] = None
    mark_ptr: Optional[np.ndarray] = None
    mark_idx: Optional[np.ndarray] = None        # global site ids
    mark_local: Optional[np.ndarray] = None      # ball-local index per mark
    ball_ptr: Optional[np.ndarray] = None
    ball_vert: Optional[np.ndarray] = None       # global site ids
    center_local: Optional[np.ndarray] = None    # (n_sites,)
    bedge_ptr: Optional[np.ndarray] = None
    bedge_idx: Optional[np.ndarray] = None       # global edge ids
    badj_ptr: Optional[np.ndarray] = None        # indexed by ball_ptr[x] + local
    badj_vert: Optional[np.ndarray] = None       # ball-local neighbor
    badj_edge: Optional[np.ndarray] = None       # position within site's bedge run


def build_finite_tables(top, radius: Optional[int] = None) -> FiniteTables:
    if not getattr(top, "finite", False):
        raise ValueError(f"finite tables need a finite topology, got {top!r}")
    verts = lattice.vertices(top)
    vid = {v: i for i, v in enumerate(verts)}
    edge_pairs = lattice.edges(top)
    eid = {e: i for i, e in enumerate(edge_pairs)}
    nbr_ptr = np.zeros(len(verts) + 1, dtype=np.int32)
    nbr_idx = []
    for i, v in enumerate(verts):
        for w in lattice.neighbors(top, v):
            nbr_idx.append(vid[w])
        nbr_ptr[i + 1] = len(nbr_idx)
    degree = np.diff(nbr_ptr).astype(np.int32)
    kwargs = {}
    if radius is not None:
        mark_ptr = np.zeros(len(verts) + 1, dtype=np.int32)
        ball_ptr = np.zeros(len(verts) + 1, dtype=np.int32)
        bedge_ptr = np.zeros(len(verts) + 1, dtype=np.int32)
        mark_idx, mark_local, ball_vert, center_local = [], [], [], []
        bedge_idx = []
        badj_chunks = []  # per ball-local vertex: list of (local, edge position)
        for i, v in enumerate(verts):
            ball = lattice.attempt_ball(top, v, radius)
            local = {u: j for j, u in enumerate(ball)}
            bedges = lattice.ball_edges(top, v, radius)
            bpos = {e: j for j, e in enumerate(bedges)}
            center_local.append(local[v])
            for u in ball:
                ball_vert.append(vid[u])
                if u != v:
                    mark_idx.append(vid[u])
                    mark_local.append(local[u])
            for e in bedges:
                bedge_idx.append(eid[e])
            for u in ball:
                entries = []
                for w in lattice.neighbors(top, u):
                    e = lattice.canonical_edge(u, w)
                    if w in local and e in bpos:
                        entries.append((local[w], bpos[e]))
                badj_chunks.append(entries)
            mark_ptr[i + 1] = len(mark_idx)
            ball_ptr[i + 1] = len(ball_vert)
            bedge_ptr[i + 1] = len(bedge_idx)
        badj_ptr = np.zeros(len(badj_chunks) + 1, dtype=np.int32)
        badj_vert, badj_edge = [], []
        for j, entries in enumerate(badj_chunks):
            for w, e in entries:
                badj_vert.append(w)
                badj_edge.append(e)
            badj_ptr[j + 1] = len(badj_vert)
        kwargs = dict(
            radius=radius,
            mark_ptr=mark_ptr,
            mark_idx=np.asarray(mark_idx, dtype=np.int32),
            mark_local=np.asarray(mark_local, dtype=np.int32),
            ball_ptr=ball_ptr,
            ball_vert=np.asarray(ball_vert, dtype=np.int32),
            center_local=np.asarray(center_local, dtype=np.int32),
            bedge_ptr=bedge_ptr,
            bedge_idx=np.asarray(bedge_idx, dtype=np.int32),
            badj_ptr=badj_ptr,
            badj_vert=np.asarray(badj_vert, dtype=np.int32),
            badj_edge=np.asarray(badj_edge, dtype=np.int32),
        )
        if np.any(np.diff(mark_ptr) < 1):
            raise ValueError("every site needs at least one attempt mark")
    return FiniteTables(
        n_sites=len(verts),
        n_edges=len(edge_pairs),
        verts=tuple(verts),
        edge_pairs=tuple(edge_pairs),
        nbr_ptr=nbr_ptr,
        nbr_idx=np.asarray(nbr_idx, dtype=np.int32),
        degree=degree,
        edge_u=np.asarray([vid[e[0]] for e in edge_pairs], dtype=np.int32),
        edge_v=np.asarray([vid[e[1]] for e in edge_pairs], dtype=np.int32),
        **kwargs,
    )


def _site_prefixes(scheme: SeedScheme, top, ft: FiniteTables) -> np.ndarray:
    out = np.empty(ft.n_sites, dtype=np.uint64)
    for i, v in enumerate(ft.verts):
        out[i] = scheme.entity_prefix(StreamKind.SITE, lattice.vertex_entity(top, v))
    return out


def _edge_prefixes(scheme: SeedScheme, top, ft: FiniteTables, n_envs: int) -> np.ndarray:
    out = np.empty((n_envs, ft.n_edges), dtype=np.uint64)
    for env in range(n_envs):
        for j, e in enumerate(ft.edge_pairs):
            out[env, j] = scheme.entity_prefix(
                StreamKind.EDGE, lattice.edge_entity(top, e, env=env)
            )
    return out


def _walker_prefixes(scheme: SeedScheme, labels: Sequence[tuple]) -> np.ndarray:
    out = np.empty(len(labels), dtype=np.uint64)
    for i, label in enumerate(labels):
        out[i] = scheme.entity_prefix(StreamKind.WALKER, tuple(int(p) for p in label))
    return out


@dataclass(frozen=True)
class ForwardPlan:
    """Finite-topology forward simulation of one of the three models."""

    model: int
    ft: FiniteTables
    horizon: float
    site_prefix: np.ndarray
    edge_prefix: np.ndarray     # env 0
    edge_rate: float            # per-edge event rate (0 disables edge events)
    speed: float = 0.0
    density: float = 0.0
    eta0: Optional[np.ndarray] = None   # int8; None means product(alpha) start
    alpha: float = 0.0
    zeta0: Optional[np.ndarray] = None  # int8; None means product(density) start
    record_events: bool = False
    stop_at_consensus: bool = False
    max_events: int = 50_000_000


def make_forward_plan(
    scheme: SeedScheme,
    top,
    model: int,
    horizon: float,
    speed: float = 0.0,
    density: float = 0.0,
    radius: Optional[int] = None,
    eta0=None,
    alpha: float = 0.0,
    zeta0=None,
    record_events: bool = False,
    stop_at_consensus: bool = False,
) -> ForwardPlan:
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    if model == MODEL_VOTER:
        ft = build_finite_tables(top)
        edge_rate = 0.0
    elif model == MODEL_STIRRING:
        ft = build_finite_tables(top)
        edge_rate = speed / lattice.regular_degree(top)
    elif model == MODEL_VMDYN:
        if radius is None:
            raise ValueError("the dynamical-percolation model needs a radius")
        if not 0.0 <= density <= 1.0:
            raise ValueError(f"density must lie in [0, 1], got {density}")
        ft = build_finite_tables(top, radius=radius)
        edge_rate = speed
    else:
        raise ValueError(f"unknown model code {model}")
    if eta0 is not None:
        eta0 = np.ascontiguousarray(np.asarray(eta0, dtype=np.int8))
        if eta0.shape != (ft.n_sites,):
            raise ValueError(f"eta0 must have one entry per site, got shape {eta0.shape}")
    elif not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if zeta0 is not None:
        zeta0 = np.ascontiguousarray(np.asarray(zeta0, dtype=np.int8))
        if zeta0.shape != (ft.n_edges,):
            raise ValueError(f"zeta0 must have one entry per edge, got shape {zeta0.shape}")
    return ForwardPlan(
        model=model,
        ft=ft,
        horizon=float(horizon),
        site_prefix=_site_prefixes(scheme, top, ft),
        edge_prefix=_edge_prefixes(scheme, top, ft, 1)[0],
        edge_rate=float(edge_rate),
        speed=float(speed),
        density=float(density),
        eta0=eta0,
        alpha=float(alpha),
        zeta0=zeta0,
        record_events=record_events,
        stop_at_consensus=stop_at_consensus,
    )


@dataclass(frozen=True)
class SetWalkPlan:
    """Plain walker systems: independent, coalescing, the containment-coupled
    pair of both, or the coalescing-stirring set chain."""

    mode: int
    space: int
    k: int
    init_pos: np.ndarray        # (k, dim) int64 or (k,) int32 site ids
    horizon: float
    walker_prefix: np.ndarray
    chain_prefix: int
    dim: int = 0
    nbr_off: Optional[np.ndarray] = None
    nbr_delta: Optional[np.ndarray] = None
    ft: Optional[FiniteTables] = None
    degree: int = 0
    speed: float = 0.0
    stop_when_single: bool = False
    stop_on_meet: bool = False
    ell_meet: int = 0
    ell_occ: int = -1
    max_events: int = 200_000_000


def make_set_walk_plan(
    scheme: SeedScheme,
    mode: int,
    positions: Sequence,
    horizon: float,
    top=None,
    dim: Optional[int] = None,
    speed: float = 0.0,
    labels: Optional[Sequence[tuple]] = None,
    stop_when_single: bool = False,
    stop_on_meet: bool = False,
    ell_meet: int = 0,
    ell_occ: int = -1,
) -> SetWalkPlan:
    if mode not in (MODE_INDEPENDENT, MODE_COALESCING, MODE_COUPLED, MODE_STIRRING_SET):
        raise ValueError(f"unknown walker mode {mode}")
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    k = len(positions)
    if k < 1:
        raise ValueError("need at least one walker")
    if labels is None:
        labels = [(i,) for i in range(k)]
    if len(labels) != k:
        raise ValueError("one label per walker required")
    if len(set(map(tuple, labels))) != k:
        raise ValueError("walker labels must be distinct")
    chain_prefix = int(scheme.entity_prefix(StreamKind.CHAIN, (0,)))
    if top is not None:
        ft = build_finite_tables(top)
        vid = {v: i for i, v in enumerate(ft.verts)}
        init = np.asarray([vid[tuple(p)] for p in positions], dtype=np.int32)
        degree = int(lattice.regular_degree(top)) if mode == MODE_STIRRING_SET else 0
        return SetWalkPlan(
            mode=mode,
            space=SPACE_FINITE,
            k=k,
            init_pos=init,
            horizon=float(horizon),
            walker_prefix=_walker_prefixes(scheme, labels),
            chain_prefix=chain_prefix,
            ft=ft,
            degree=degree,
            speed=float(speed),
            stop_when_single=stop_when_single,
            stop_on_meet=stop_on_meet,
            ell_meet=int(ell_meet),
            ell_occ=int(ell_occ),
        )
    if dim is None:
        raise ValueError("either a finite topology or a lattice dimension is required")
    lt = build_lattice_tables(dim, 1)
    init = np.asarray([tuple(p) for p in positions], dtype=np.int64).reshape(k, dim)
    return SetWalkPlan(
        mode=mode,
        space=SPACE_LATTICE,
        k=k,
        init_pos=init,
        horizon=float(horizon),
        walker_prefix=_walker_prefixes(scheme, labels),
        chain_prefix=chain_prefix,
        dim=dim,
        nbr_off=lt.nbr_off,
        nbr_delta=lt.nbr_delta,
        degree=2 * dim,
        speed=float(speed),
        stop_when_single=stop_when_single,
        stop_on_meet=stop_on_meet,
        ell_meet=int(ell_meet),
        ell_occ=int(ell_occ),
    )


@dataclass(frozen=True)
class EnvWalkPlan:
    """Walkers reading (and lazily revealing) dynamical-percolation
    environments: the dual chain, collision runs, and coupling runs."""

    space: int
    radius: int
    density: float
    speed: float
    k: int
    init_pos: np.ndarray
    env_of: np.ndarray          # (k,) int8
    n_envs: int
    horizon: float
    walker_prefix: np.ndarray
    edge_kind_prefix: int = 0                   # lattice mode
    edge_prefix: Optional[np.ndarray] = None    # finite mode, (n_envs, n_edges)
    dim: int = 0
    lt: Optional[LatticeTables] = None
    ft: Optional[FiniteTables] = None
    pin_env: Optional[np.ndarray] = None        # int8
    pin_key: Optional[np.ndarray] = None        # int64 packed key / edge id
    pin_state: Optional[np.ndarray] = None      # int8
    pin_owner: Optional[np.ndarray] = None      # uint8
    ell_pos: int = -1
    ell_f: int = -1
    ell_occ: int = -1
    break_radius: int = -1
    stop_on_pos_hit: bool = False
    stop_at_f_hit: bool = False
    stop_at_break: bool = False
    stop_when_single: bool = False
    record_regen: bool = False
    max_events: int = 200_000_000

    @property
    def track_proximity(self) -> bool:
        return self.k == 2 and (
            self.ell_pos >= 0 or self.ell_f >= 0 or self.ell_occ >= 0 or self.break_radius >= 0
        )


def make_env_walk_plan(
    scheme: SeedScheme,
    radius: int,
    density: float,
    speed: float,
    positions: Sequence,
    horizon: float,
    top=None,
    dim: Optional[int] = None,
    envs: Optional[Sequence[int]] = None,
    labels: Optional[Sequence[tuple]] = None,
    pins: Optional[Sequence[tuple]] = None,
    ell_pos: int = -1,
    ell_f: int = -1,
    ell_occ: int = -1,
    break_radius: int = -1,
    stop_on_pos_hit: bool = False,
    stop_at_f_hit: bool = False,
    stop_at_break: bool = False,
    stop_when_single: bool = False,
    record_regen: bool = False,
) -> EnvWalkPlan:
    """Build an environment-walker plan.

    ``pins`` pre-seeds revealed edges: an iterable of (env, edge, state,
    owner_mask) where ``edge`` is a canonical edge (finite mode) or an
    (axis, base-coords) pair (lattice mode).  Pinned edges start revealed
    in the forced state; their refresh clocks start fresh at time zero.
    """
    if not 0.0 <= density <= 1.0:
        raise ValueError(f"density must lie in [0, 1], got {density}")
    if speed < 0:
        raise ValueError(f"refresh speed must be >= 0, got {speed}")
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    k = len(positions)
    if k < 1:
        raise ValueError("need at least one walker")
    if envs is None:
        envs = [0] * k
    envs = [int(e) for e in envs]
    if len(envs) != k or min(envs) < 0:
        raise ValueError("one nonnegative environment id per walker required")
    n_envs = max(envs) + 1
    if labels is None:
        labels = [(i,) for i in range(k)]
    if len(labels) != k or len(set(map(tuple, labels))) != k:
        raise ValueError("distinct walker labels, one per walker, required")
    if k > 8:
        raise ValueError("owner masks support at most 8 walkers")
    pins = list(pins or [])
    pin_env = np.asarray([int(p[0]) for p in pins], dtype=np.int8)
    pin_state = np.asarray([int(p[2]) for p in pins], dtype=np.int8)
    pin_owner = np.asarray([int(p[3]) for p in pins], dtype=np.uint8)
    if pins and (pin_env.min() < 0 or pin_env.max() >= n_envs):
        raise ValueError("pinned edge environment out of range")
    common = dict(
        radius=int(radius),
        density=float(density),
        speed=float(speed),
        k=k,
        env_of=np.asarray(envs, dtype=np.int8),
        n_envs=n_envs,
        horizon=float(horizon),
        walker_prefix=_walker_prefixes(scheme, labels),
        pin_env=pin_env,
        pin_state=pin_state,
        pin_owner=pin_owner,
        ell_pos=int(ell_pos),
        ell_f=int(ell_f),
        ell_occ=int(ell_occ),
        break_radius=int(break_radius),
        stop_on_pos_hit=stop_on_pos_hit,
        stop_at_f_hit=stop_at_f_hit,
        stop_at_break=stop_at_break,
        stop_when_single=stop_when_single,
        record_regen=record_regen,
    )
    if top is not None:
        if max(ell_pos, ell_f, ell_occ, break_radius) >= 0:
            raise ValueError(
                "proximity functionals are defined for lattice runs only"
            )
        if record_regen:
            raise ValueError("regeneration recording is defined for lattice runs only")
        ft = build_finite_tables(top, radius=int(radius))
        vid = {v: i for i, v in enumerate(ft.verts)}
        eidx = {e: i for i, e in enumerate(ft.edge_pairs)}
        init = np.asarray([vid[tuple(p)] for p in positions], dtype=np.int32)
        pin_key = np.asarray(
            [eidx[lattice.canonical_edge(*p[1])] for p in pins], dtype=np.int64
        )
        return EnvWalkPlan(
            space=SPACE_FINITE,
            init_pos=init,
            edge_prefix=_edge_prefixes(scheme, top, ft, n_envs),
            ft=ft,
            pin_key=pin_key,
            **common,
        )
    if dim is None:
        raise ValueError("either a finite topology or a lattice dimension is required")
    lt = build_lattice_tables(dim, int(radius))
    init = np.asarray([tuple(p) for p in positions], dtype=np.int64).reshape(k, dim)
    bound = COORD_OFFSET - int(radius) - 2
    if np.any(np.abs(init) > bound - 64):
        raise ValueError(
            f"initial coordinates must stay well inside the packable range (|c| <= {bound - 64})"
        )
    pin_key = np.asarray(
        [pack_edge_key(p[1][0], pack_coords(p[1][1])) for p in pins], dtype=np.int64
    )
    kind_prefix = int(scheme.entity_prefix(StreamKind.EDGE, ()))
    return EnvWalkPlan(
        space=SPACE_LATTICE,
        init_pos=init,
        edge_kind_prefix=kind_prefix,
        dim=dim,
        lt=lt,
        pin_key=pin_key,
        **common,
    )


def decode_record_key(plan: EnvWalkPlan, key: int):
    """Decode a revealed-edge record key to (env, edge).

    Finite runs give the canonical edge; lattice runs give (axis, base
    coordinates).
    """
    key = int(key)
    if plan.space == SPACE_FINITE:
        env, eid = divmod(key, plan.ft.n_edges)
        return env, plan.ft.edge_pairs[eid]
    env = key >> 60
    axis, base = unpack_edge_key(key & ((1 << 60) - 1), plan.dim)
    return env, (axis, base)
