"""Dual walker systems: coalescing walks, the coalescing-stirring set chain,
environment-reading walks on dynamical percolation, the coalescing dual chain
with revealed knowledge, regeneration detection, and the tree branch measure.

Every system here runs on the lazy infinite lattice as naturally as on a
finite topology: edges are materialized from counter-based streams the first
time something looks at them, and a value, once drawn, is a pure function of
(seed, edge, update count), so it can never be resampled retroactively.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from . import lattice
from ._kernels import run_env_walkers, run_set_walkers, tables
from .dynamics import EdgeConfig, LazyEdgeConfig, edge_label
from .randomness import (
    InstructionManual,
    SeedScheme,
    Stream,
    StreamKind,
)
from .stats import wilson_interval

__all__ = [
    "WalkerSystem",
    "RevealedKnowledge",
    "DualChainState",
    "RegenerationRecord",
    "EnvironmentView",
    "EnvWalkTrajectory",
    "ConnectionRate",
    "BranchMeasure",
    "simulate_coalescing",
    "simulate_coalescing_stirring",
    "rw_flow",
    "simulate_walkers_single_env",
    "simulate_walkers_separate_env",
    "simulate_dual_chain",
    "connection_rate",
    "detect_regenerations",
    "tree_branch_measure",
    "write_events_jsonl",
    "write_regeneration_csv",
]

EXACT_PARTITION_CAP = 20  # unrevealed ball edges; 2^20 terms is the ceiling


# ---------------------------------------------------------------------------
# Domain types.
# ---------------------------------------------------------------------------


@dataclass
class WalkerSystem:
    """Labelled walkers with union-find coalescence bookkeeping.

    ``coalesced_into`` maps a dead label to the label it merged into; merges
    always survive on the smallest live index and are permanent.  Two live
    labels may share a position only in the independent (non-coalescing)
    regime.
    """

    labels: tuple
    positions: dict
    coalesced_into: dict = field(default_factory=dict)

    def root(self, label):
        while label in self.coalesced_into:
            label = self.coalesced_into[label]
        return label

    def live_labels(self) -> tuple:
        return tuple(l for l in self.labels if l not in self.coalesced_into)

    def set_view(self) -> frozenset:
        return frozenset(self.positions[l] for l in self.live_labels())

    def merge(self, a, b):
        """Merge the two walkers' classes; the smaller index survives."""
        ra, rb = self.root(a), self.root(b)
        if ra == rb:
            return ra
        keep, drop = (ra, rb) if ra < rb else (rb, ra)
        self.coalesced_into[drop] = keep
        return keep


@dataclass(frozen=True)
class RevealedKnowledge:
    """Edges currently known open and known closed; always disjoint."""

    open_set: frozenset
    closed_set: frozenset

    def __post_init__(self):
        overlap = self.open_set & self.closed_set
        if overlap:
            raise ValueError(
                f"an edge cannot be known open and closed: {sorted(overlap)}"
            )

    @staticmethod
    def empty() -> "RevealedKnowledge":
        return RevealedKnowledge(frozenset(), frozenset())

    def union(self, other: "RevealedKnowledge") -> "RevealedKnowledge":
        return RevealedKnowledge(
            self.open_set | other.open_set, self.closed_set | other.closed_set
        )

    def __len__(self):
        return len(self.open_set) + len(self.closed_set)


@dataclass(frozen=True)
class DualChainState:
    """Set view of the dual walkers plus the pooled revealed knowledge."""

    walkers: WalkerSystem
    knowledge: RevealedKnowledge
    clock: float

    def set_view(self) -> frozenset:
        return self.walkers.set_view()


@dataclass(frozen=True)
class RegenerationRecord:
    """Integer regeneration times of a two-walker separate-environment run.

    ``sigma`` lists the successive integers at which the pooled revealed sets
    are empty (sigma_0 = 0 is implicit and not stored).  Row n of the
    increment arrays covers the interval (sigma_{n-1}, sigma_n]: the time
    increment, the two walkers' displacements over it, and the total number
    of jump attempts (successful or not, both walkers pooled) inside it.  ``observed`` is False when the horizon was
    too short to see even sigma_1, in which case every array is empty.
    """

    sigma: np.ndarray
    delta_sigma: np.ndarray
    delta_x: np.ndarray
    delta_y: np.ndarray
    attempt_counts: np.ndarray
    observed: bool
    horizon: float


# ---------------------------------------------------------------------------
# Coalescing random walks and the coalescing-stirring set chain (plain
# walkers, no environment).
# ---------------------------------------------------------------------------


def _distinct_sites(sites) -> list:
    out = sorted(set(tuple(s) for s in sites))
    if not out:
        raise ValueError("the starting set must be nonempty")
    return out


def _set_walk_space(top) -> dict:
    if isinstance(top, lattice.InfiniteLattice):
        return {"dim": top.dim}
    if getattr(top, "finite", False):
        return {"top": top}
    raise ValueError(
        f"walker systems support finite topologies and the infinite "
        f"lattice, got {top.kind}"
    )


def _decode_position(plan, value):
    """Kernel position back to a vertex: finite runs store site ids."""
    if plan.space == tables.SPACE_FINITE:
        return plan.ft.verts[int(value)]
    return tuple(int(c) for c in value)


def simulate_coalescing(top, starts, horizon, seed):
    """Coalescing random walks: rate-1 uniform-neighbor jumps, walkers on a
    common site merge into the smallest label.

    Returns (final set of occupied sites, tuple of coalescence times).
    """
    sites = _distinct_sites(starts)
    if not float(horizon) >= 0.0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    plan = tables.make_set_walk_plan(
        SeedScheme(int(seed)),
        tables.MODE_COALESCING,
        sites,
        float(horizon),
        **_set_walk_space(top),
    )
    out = run_set_walkers(plan, replica=0)
    final = frozenset(
        _decode_position(plan, out["coal_pos"][i])
        for i in range(len(sites))
        if out["active"][i]
    )
    return final, tuple(float(t) for t in out["merge_time"])


def simulate_coalescing_stirring(top, starts, speed, horizon, seed):
    """Set-valued dual of the voter model with stirring on a regular graph.

    Each occupied site moves to a vacant neighbor at rate (speed+1)/degree
    per directed vacant edge and is removed at rate (number of occupied
    neighbors)/degree.  Returns (final set, tuple of removal events), each
    event being (time, removed site).
    """
    sites = _distinct_sites(starts)
    if speed < 0.0:
        raise ValueError(f"stirring speed must be >= 0, got {speed}")
    if not float(horizon) >= 0.0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    lattice.regular_degree(top)
    plan = tables.make_set_walk_plan(
        SeedScheme(int(seed)),
        tables.MODE_STIRRING_SET,
        sites,
        float(horizon),
        speed=float(speed),
        **_set_walk_space(top),
    )
    out = run_set_walkers(plan, replica=0)
    final = frozenset(
        _decode_position(plan, out["pos"][i])
        for i in range(len(sites))
        if out["active"][i]
    )
    events = tuple(
        (float(t), _decode_position(plan, out["pos"][d]))
        for t, d in zip(out["merge_time"], out["merge_dropped"])
    )
    return final, events


# ---------------------------------------------------------------------------
# Environment views and the random-walk flow.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnvironmentView:
    """Read-only view of one dynamical-percolation environment.

    ``state_at(edge, t)`` is a pure function of (seed, edge, t): it counts
    the edge's refresh times up to t from the edge's own stream and reads the
    value the last refresh wrote (or the initial value if none happened).
    Nothing is consumed, so the same view can be read any number of times, in
    any order, by any number of walkers, and always answers the same; that is
    what makes the flow property hold.

    ``initial`` fixes the time-zero values: an EdgeConfig, a LazyEdgeConfig,
    a plain edge-to-bit mapping (unlisted edges fall back to a Bernoulli
    (density) draw from the edge's own stream), or None for the stationary
    product law.
    """

    top: object
    seed: int
    density: float
    speed: float
    initial: object = None
    env: int = 0

    def _stream(self, edge) -> Stream:
        scheme = SeedScheme(int(self.seed))
        parts = lattice.edge_entity(self.top, edge, env=self.env)
        return Stream(scheme.key(StreamKind.EDGE, parts, replica=0))

    def _initial_value(self, edge, stream: Stream) -> int:
        init = self.initial
        if isinstance(init, EdgeConfig):
            return init.value(edge)
        if isinstance(init, LazyEdgeConfig):
            if edge in init.pinned:
                return int(init.pinned[edge])
            return 1 if stream.bernoulli_at(0, init.density) else 0
        if isinstance(init, Mapping):
            if edge in init:
                return int(init[edge])
        elif init is not None:
            raise ValueError(f"unsupported initial edge data {type(init).__name__}")
        return 1 if stream.bernoulli_at(0, self.density) else 0

    def state_at(self, edge, t: float) -> int:
        edge = lattice.canonical_edge(*edge)
        stream = self._stream(edge)
        if self.speed <= 0.0:
            return self._initial_value(edge, stream)
        done = 0
        t_next = stream.exponential_at(1, self.speed)
        while t_next <= t:
            done += 1
            t_next += stream.exponential_at(2 * done + 1, self.speed)
        if done == 0:
            return self._initial_value(edge, stream)
        return 1 if stream.bernoulli_at(2 * done, self.density) else 0


def rw_flow(view: EnvironmentView, manual: InstructionManual, initial_edges,
            start, horizon):
    """Drive one walker by its instruction manual through an environment view.

    At each manual time t with displacement m, the walker at w jumps to w+m
    exactly when w and w+m are connected by open edges inside the radius ball
    around w at that instant (the radius is the manual's).  The walk is a
    pure function of (view, manual, initial edges, start), so identical
    inputs give identical trajectories.

    Returns a list of (time, displacement, jumped, position after), starting
    with the (0.0, zero, False, start) entry.
    """
    if initial_edges is not None:
        view = replace(view, initial=initial_edges)
    radius = manual.radius
    pos = tuple(int(c) for c in start)
    zero = tuple(0 for _ in pos)
    path = [(0.0, zero, False, pos)]
    for t, move in zip(manual.times, manual.displacements):
        if t > horizon:
            break
        target = tuple(p + int(m) for p, m in zip(pos, move))
        zeta = {
            e: view.state_at(e, t)
            for e in lattice.ball_edges(view.top, pos, radius)
        }
        jumped = lattice.connected_in_ball(zeta, view.top, pos, target, radius)
        if jumped:
            pos = target
        path.append((float(t), tuple(int(m) for m in move), bool(jumped), pos))
    return path


# ---------------------------------------------------------------------------
# Environment-reading walker systems (shared or separate environments).
# ---------------------------------------------------------------------------


def _lattice_edge_from_axis_base(axis: int, base: tuple):
    unit = tuple(1 if i == axis else 0 for i in range(len(base)))
    other = tuple(b + u for b, u in zip(base, unit))
    return lattice.canonical_edge(tuple(base), other)


def _decoded_edge(plan, key):
    env, raw = tables.decode_record_key(plan, int(key))
    if plan.space == tables.SPACE_FINITE:
        return env, raw
    axis, base = raw
    return env, _lattice_edge_from_axis_base(axis, base)


@dataclass(frozen=True)
class EnvWalkTrajectory:
    """Snapshots of an environment-reading walker run.

    Per snapshot time: a WalkerSystem (positions plus coalescence state as of
    that time), one RevealedKnowledge per walker label, and the pooled
    knowledge.  With a single environment the pooled sets hold bare edges;
    with several environment copies they hold (environment, edge) pairs,
    since one edge label can carry different values in different copies.
    ``final`` carries the full-horizon kernel diagnostics (collision and
    proximity times, occupation time, regeneration checkpoints) for the
    downstream estimators.
    """

    top: object
    starts: tuple
    times: tuple
    walkers: tuple
    knowledge: tuple
    pooled: tuple
    environments: tuple
    horizon: float
    seed: int
    final: dict
    regen_recorded: bool = False


def _knowledge_from_run(plan, out):
    """Split the kernel's revealed records into per-walker and pooled sets.

    Pooled entries are bare edges for a single environment and
    (environment, edge) pairs otherwise; a walker reads exactly one
    environment, so its own sets always hold bare edges.
    """
    per = [[set(), set()] for _ in range(plan.k)]
    pooled_open, pooled_closed = set(), set()
    for key, state, owner in zip(out["rev_key"], out["rev_state"], out["rev_owner"]):
        env, edge = _decoded_edge(plan, key)
        bucket = 0 if state else 1
        tagged = edge if plan.n_envs == 1 else (int(env), edge)
        (pooled_open if state else pooled_closed).add(tagged)
        for i in range(plan.k):
            if owner & (1 << i):
                per[i][bucket].add(edge)
    per_rk = {
        i: RevealedKnowledge(frozenset(per[i][0]), frozenset(per[i][1]))
        for i in range(plan.k)
    }
    return per_rk, RevealedKnowledge(frozenset(pooled_open), frozenset(pooled_closed))


def _walker_system_from_run(plan, labels, out) -> WalkerSystem:
    ws = WalkerSystem(
        labels=tuple(labels),
        positions={
            l: _decode_position(plan, out["pos"][i]) for i, l in enumerate(labels)
        },
    )
    for survivor, dropped in zip(out["merge_survivor"], out["merge_dropped"]):
        if int(survivor) >= 0:
            ws.coalesced_into[labels[int(dropped)]] = labels[int(survivor)]
    return ws


def _initial_pins(top, initial_edges, owner_mask):
    """Kernel pins for deterministic initial edge values.

    Pinned edges start revealed in the forced state, owned by the walkers in
    ``owner_mask``, with fresh refresh clocks; the first refresh forgets both
    the forced value and the revealed status.
    """
    if initial_edges is None:
        return None
    if isinstance(initial_edges, LazyEdgeConfig):
        items = initial_edges.pinned.items()
    elif isinstance(initial_edges, Mapping):
        items = initial_edges.items()
    else:
        raise ValueError(
            "initial edges must be None, a LazyEdgeConfig, or an edge-to-bit "
            "mapping"
        )
    pins = []
    for edge, state in items:
        edge = lattice.canonical_edge(*edge)
        if isinstance(top, lattice.InfiniteLattice):
            axis, base = lattice.edge_axis_base(top, edge)
            pins.append((0, (axis, base), int(state), owner_mask))
        else:
            pins.append((0, edge, int(state), owner_mask))
    return pins


def _run_env_walk(top, starts, density, speed, radius, horizon, seed, envs,
                  snapshot_times=None, pins=None, record_regen=False,
                  ell_pos=-1):
    starts = [tuple(int(c) for c in s) for s in starts]
    horizon = float(horizon)
    if horizon < 0.0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    times = (horizon,) if snapshot_times is None else tuple(
        sorted(float(s) for s in snapshot_times)
    )
    if times and (times[0] < 0.0 or times[-1] > horizon):
        raise ValueError(f"snapshot times must lie in [0, horizon={horizon}]")
    scheme = SeedScheme(int(seed))
    space = (
        {"dim": top.dim}
        if isinstance(top, lattice.InfiniteLattice)
        else {"top": top}
    )
    labels = list(range(len(starts)))
    plan = tables.make_env_walk_plan(
        scheme,
        radius=int(radius),
        density=float(density),
        speed=float(speed),
        positions=starts,
        horizon=horizon,
        envs=list(envs),
        pins=pins,
        record_regen=record_regen,
        ell_pos=ell_pos,
        **space,
    )
    snaps_w, snaps_k, snaps_p = [], [], []
    final_out = None
    for s in times:
        plan_s = plan if s == horizon else replace(plan, horizon=s)
        out = run_env_walkers(plan_s, replica=0)
        per_rk, pool = _knowledge_from_run(plan, out)
        snaps_w.append(_walker_system_from_run(plan, labels, out))
        snaps_k.append(per_rk)
        snaps_p.append(pool)
        if s == horizon:
            final_out = out
    if final_out is None:
        final_out = run_env_walkers(plan, replica=0)
    traj = EnvWalkTrajectory(
        top=top,
        starts=tuple(starts),
        times=times,
        walkers=tuple(snaps_w),
        knowledge=tuple(snaps_k),
        pooled=tuple(snaps_p),
        environments=tuple(int(e) for e in envs),
        horizon=horizon,
        seed=int(seed),
        final=final_out,
        regen_recorded=bool(record_regen),
    )
    return traj, plan


def simulate_walkers_single_env(k, starts, initial_edges, density, speed,
                                radius, horizon, seed, snapshot_times=None,
                                top=None):
    """k walkers reading one shared environment.

    Every jump attempt reveals the full edge ball around the walker and
    classifies each edge open or closed; a refresh removes the edge from
    everyone's knowledge.  Walkers standing on a common site coalesce into
    the smaller label, matching the set-valued dual chain; the first-meeting
    time stays visible through the merge bookkeeping.

    ``initial_edges`` (None, LazyEdgeConfig, or edge-to-bit mapping) pins
    deterministic initial values on a finite edge set; everything else starts
    from the stationary product law.  Pinned edges count as revealed at time
    zero, known to every walker, so the initial knowledge is exactly the
    pinned set; the first refresh of each forgets it as usual.
    """
    starts = list(starts)
    if k != len(starts):
        raise ValueError(f"k={k} but {len(starts)} starting positions given")
    if isinstance(initial_edges, LazyEdgeConfig) and \
            initial_edges.density != density:
        raise ValueError(
            "the lazy edge configuration's density must match the run's"
        )
    top = top if top is not None else lattice.InfiniteLattice(len(tuple(starts[0])))
    traj, _ = _run_env_walk(
        top, starts, density, speed, radius, horizon, seed,
        envs=[0] * k,
        snapshot_times=snapshot_times,
        pins=_initial_pins(top, initial_edges, (1 << k) - 1),
    )
    return traj


def simulate_walkers_separate_env(k, starts, density, speed, radius, horizon,
                                  seed, snapshot_times=None,
                                  record_regen=False, track_meeting=False,
                                  top=None):
    """k walkers, each reading its own independent environment.

    Positions still live on one topology; only the percolation environments
    are independent copies, so walkers on a shared site never coalesce.
    With ``record_regen`` the run records every integer time at which the
    pooled revealed sets are empty, which is what ``detect_regenerations``
    consumes.  ``track_meeting`` (pairs only) records the first time the two
    positions coincide as ``final["tau_pos"]``.
    """
    starts = list(starts)
    if k != len(starts):
        raise ValueError(f"k={k} but {len(starts)} starting positions given")
    if track_meeting and k != 2:
        raise ValueError("meeting times are tracked for walker pairs only")
    top = top if top is not None else lattice.InfiniteLattice(len(tuple(starts[0])))
    if track_meeting and not isinstance(top, lattice.InfiniteLattice):
        raise ValueError("meeting times are tracked on the infinite lattice only")
    traj, _ = _run_env_walk(
        top, starts, density, speed, radius, horizon, seed,
        envs=list(range(k)),
        snapshot_times=snapshot_times,
        record_regen=record_regen,
        ell_pos=0 if track_meeting else -1,
    )
    return traj


# ---------------------------------------------------------------------------
# The coalescing dual chain with revealed knowledge.
# ---------------------------------------------------------------------------


def _check_initial_knowledge(open_edges, closed_edges):
    open_edges = frozenset(lattice.canonical_edge(*e) for e in open_edges)
    closed_edges = frozenset(lattice.canonical_edge(*e) for e in closed_edges)
    return RevealedKnowledge(open_edges, closed_edges)


def simulate_dual_chain(starts, open_edges, closed_edges, density, speed,
                        radius, horizon, seed, method="constructive",
                        snapshot_times=None, top=None):
    """The coalescing dual chain (walker set, known-open set, known-closed
    set) of the joint opinion/percolation process.

    The constructive method runs the shared-environment walker system with
    the environment pinned to the initial knowledge (open edges open, closed
    edges closed, with fresh refresh clocks) and the knowledge seeded as
    revealed; it works on the lazy infinite lattice.  The gillespie method
    samples the chain's rate table directly and exists as a small-case
    cross-check on finite topologies: a jump attempt draws a Bernoulli
    (density) completion of the unrevealed ball edges, the walker moves when
    the open part connects it to its target, and every revealed edge is
    dropped at the refresh rate.  It refuses a state with more than
    EXACT_PARTITION_CAP unrevealed ball edges in one attempt.

    Returns a list of DualChainState snapshots (default: horizon only).
    """
    starts = _distinct_sites(starts)
    knowledge0 = _check_initial_knowledge(open_edges, closed_edges)
    if method == "constructive":
        top = top if top is not None else lattice.InfiniteLattice(
            len(tuple(starts[0]))
        )
        mask_all = (1 << len(starts)) - 1
        forced = {e: 1 for e in sorted(knowledge0.open_set)}
        forced.update({e: 0 for e in sorted(knowledge0.closed_set)})
        pins = _initial_pins(top, forced, mask_all) or []
        traj, _ = _run_env_walk(
            top, starts, density, speed, radius, horizon, seed,
            envs=[0] * len(starts),
            snapshot_times=snapshot_times,
            pins=pins or None,
        )
        return [
            DualChainState(walkers=w, knowledge=p, clock=t)
            for t, w, p in zip(traj.times, traj.walkers, traj.pooled)
        ]
    if method == "gillespie":
        if top is None or not getattr(top, "finite", False):
            raise ValueError(
                "the gillespie method needs an explicit finite topology"
            )
        return _dual_chain_gillespie(
            top, starts, knowledge0, density, speed, radius, horizon, seed,
            snapshot_times,
        )
    raise ValueError(f"unknown method {method!r}")


def _dual_chain_gillespie(top, starts, knowledge0, density, speed, radius,
                          horizon, seed, snapshot_times):
    """Direct rate-table sampler for the dual chain on a finite topology.

    One event loop; snapshots are read off as the clock passes each requested
    time.  The chain state is (walker system, known-open, known-closed); the
    disjointness of the two knowledge sets is asserted after every event.
    """
    horizon = float(horizon)
    times = (horizon,) if snapshot_times is None else tuple(
        sorted(float(s) for s in snapshot_times)
    )
    if times and (times[0] < 0.0 or times[-1] > horizon):
        raise ValueError(f"snapshot times must lie in [0, horizon={horizon}]")
    stream = SeedScheme(int(seed)).stream(StreamKind.CHAIN, (1,), replica=0)
    labels = list(range(len(starts)))
    ws = WalkerSystem(labels=tuple(labels), positions=dict(zip(labels, starts)))
    open_set = set(knowledge0.open_set)
    closed_set = set(knowledge0.closed_set)
    marks_of = {}
    snapshots = []
    t = 0.0
    si = 0

    def emit_until(t_new):
        nonlocal si
        while si < len(times) and times[si] <= t_new:
            snapshots.append(
                DualChainState(
                    walkers=WalkerSystem(
                        tuple(labels),
                        dict(ws.positions),
                        dict(ws.coalesced_into),
                    ),
                    knowledge=RevealedKnowledge(
                        frozenset(open_set), frozenset(closed_set)
                    ),
                    clock=times[si],
                )
            )
            si += 1

    while True:
        live = ws.live_labels()
        revealed = len(open_set) + len(closed_set)
        total_rate = len(live) * 1.0 + speed * revealed
        if total_rate <= 0.0:
            break
        gap = stream.next_exponential(total_rate)
        if t + gap > horizon:
            break
        t += gap
        emit_until(t)
        u = stream.next_uniform() * total_rate
        if u < speed * revealed:
            pool = sorted(open_set) + sorted(closed_set)
            e = pool[stream.next_integer(len(pool))]
            open_set.discard(e)
            closed_set.discard(e)
        else:
            mover = live[stream.next_integer(len(live))]
            x = ws.positions[mover]
            if x not in marks_of:
                marks_of[x] = [
                    y for y in lattice.attempt_ball(top, x, radius) if y != x
                ]
            marks = marks_of[x]
            y = marks[stream.next_integer(len(marks))]
            ball = lattice.ball_edges(top, x, radius)
            unrevealed = [
                e for e in ball if e not in open_set and e not in closed_set
            ]
            if len(unrevealed) > EXACT_PARTITION_CAP:
                raise ValueError(
                    f"gillespie attempt would reveal {len(unrevealed)} edges "
                    f"at once (cap {EXACT_PARTITION_CAP}); use the "
                    f"constructive method"
                )
            for e in unrevealed:
                if stream.next_bernoulli(density):
                    open_set.add(e)
                else:
                    closed_set.add(e)
            zeta = {e: 1 for e in open_set}
            zeta.update({e: 0 for e in closed_set})
            if lattice.connected_in_ball(zeta, top, x, y, radius):
                occupied = {ws.positions[l]: l for l in ws.live_labels()}
                if y in occupied and occupied[y] != mover:
                    keep = ws.merge(mover, occupied[y])
                    ws.positions[keep] = y
                else:
                    ws.positions[mover] = y
        assert not (open_set & closed_set), "knowledge sets must stay disjoint"
    emit_until(horizon)
    return snapshots


# ---------------------------------------------------------------------------
# Connection rates.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConnectionRate:
    """Probability that a jump attempt finds its target connected."""

    value: float
    exact: bool
    ci_low: float
    ci_high: float
    n_samples: int


def connection_rate(top, x, y, open_edges, closed_edges, density, radius,
                    seed=0, n_samples=200_000) -> ConnectionRate:
    """Probability r that x connects to y inside its radius ball when the
    unrevealed ball edges are completed by independent Bernoulli(density)
    draws, the known-open edges by 1 and the known-closed by 0.

    Exact (the connecting completions' product-Bernoulli weights summed)
    when at most EXACT_PARTITION_CAP ball edges are unrevealed; a Monte
    Carlo frequency with a Wilson interval otherwise.  The complement rate
    is 1 - r by construction.
    """
    x = tuple(x)
    y = tuple(y)
    knowledge = _check_initial_knowledge(open_edges, closed_edges)
    marks = [v for v in lattice.l1_ball(top, x, radius) if v != x]
    if y not in marks:
        raise ValueError(
            f"{y} is not in the punctured radius-{radius} ball of {x}"
        )
    ball = lattice.ball_edges(top, x, radius)
    base = {}
    for e in ball:
        if e in knowledge.open_set:
            base[e] = 1
        elif e in knowledge.closed_set:
            base[e] = 0
    unrevealed = [e for e in ball if e not in base]
    if len(unrevealed) <= EXACT_PARTITION_CAP:
        total = 0.0
        for bits in itertools.product((0, 1), repeat=len(unrevealed)):
            zeta = dict(base)
            weight = 1.0
            for e, b in zip(unrevealed, bits):
                zeta[e] = b
                weight *= density if b else (1.0 - density)
            if weight and lattice.connected_in_ball(zeta, top, x, y, radius):
                total += weight
        return ConnectionRate(total, True, total, total, 0)
    stream = SeedScheme(int(seed)).stream(StreamKind.CHAIN, (2,), replica=0)
    hits = 0
    for _ in range(n_samples):
        zeta = dict(base)
        for e in unrevealed:
            zeta[e] = 1 if stream.next_bernoulli(density) else 0
        hits += lattice.connected_in_ball(zeta, top, x, y, radius)
    lo, hi = wilson_interval(hits, n_samples)
    return ConnectionRate(hits / n_samples, False, lo, hi, n_samples)


# ---------------------------------------------------------------------------
# Regeneration detection.
# ---------------------------------------------------------------------------


def detect_regenerations(trajectory: EnvWalkTrajectory, horizon=None,
                         ) -> RegenerationRecord:
    """Read the integer regeneration times off a two-walker run.

    sigma_n is the least integer above sigma_{n-1} at which the pooled
    revealed sets are empty (sigma_0 = 0).  The trajectory must come from
    ``simulate_walkers_separate_env(..., record_regen=True)``; the checks
    happen at integer times exactly, never as a continuous infimum.  A
    horizon shorter than the run's restricts the record to checkpoints up to
    it; a horizon too short to contain sigma_1 yields an empty record with
    ``observed`` False.
    """
    if not trajectory.regen_recorded:
        raise ValueError("the trajectory was not run with record_regen")
    if len(trajectory.starts) != 2:
        raise ValueError("regeneration records are defined for walker pairs")
    final = trajectory.final
    horizon = trajectory.horizon if horizon is None else float(horizon)
    keep = final["regen_m"] <= horizon
    sigma = np.asarray(final["regen_m"])[keep]
    if len(sigma) == 0:
        empty = np.zeros(0, dtype=np.int64)
        return RegenerationRecord(
            sigma=empty,
            delta_sigma=empty,
            delta_x=np.zeros((0, len(trajectory.starts[0])), dtype=np.int64),
            delta_y=np.zeros((0, len(trajectory.starts[0])), dtype=np.int64),
            attempt_counts=empty,
            observed=False,
            horizon=horizon,
        )
    pos = np.asarray(final["regen_pos"])[keep]
    att = np.asarray(final["regen_att"])[keep]
    base_pos = np.asarray(
        [list(trajectory.starts[0]), list(trajectory.starts[1])],
        dtype=np.int64,
    )
    prev_pos = np.concatenate([base_pos[None, :, :], pos[:-1]], axis=0)
    prev_att = np.concatenate(
        [np.zeros((1, 2), dtype=np.int64), att[:-1]], axis=0
    )
    prev_sigma = np.concatenate([[0], sigma[:-1]])
    return RegenerationRecord(
        sigma=sigma,
        delta_sigma=sigma - prev_sigma,
        delta_x=pos[:, 0, :] - prev_pos[:, 0, :],
        delta_y=pos[:, 1, :] - prev_pos[:, 1, :],
        attempt_counts=(att - prev_att).sum(axis=1),
        observed=True,
        horizon=horizon,
    )


# ---------------------------------------------------------------------------
# Branch measure on the three-regular tree.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BranchMeasure:
    """Truncated estimate of the probability that the tree walk settles in a
    branch.  The event is approximated by "inside the branch at every integer
    checkpoint of the tail window"; ``truncated`` flags that bias."""

    value: float
    ci_low: float
    ci_high: float
    n_replicas: int
    horizon: float
    tail_window: float
    truncated: bool = True


def _in_branch(vertex: tuple, branch: tuple) -> bool:
    return vertex[: len(branch)] == branch


def tree_branch_measure(start, branch, horizon, tail_window, seed,
                        n_replicas=2000) -> BranchMeasure:
    """Estimate the probability that the rate-1 walk on the 3-regular tree
    eventually stays inside the subtree rooted at ``branch``.

    The untruncatable event {walk in branch for all late times} is replaced
    by its finite-horizon proxy {walk in branch at every integer checkpoint
    in [horizon - tail_window, horizon]}, which upper-bounds nothing and
    lower-bounds nothing exactly; the bias is flagged, not corrected.  The
    degenerate whole-tree branch () gives 1 with no bias.
    """
    top = lattice.RegularTree(3)
    start = tuple(start)
    branch = tuple(branch)
    horizon = float(horizon)
    if not 0.0 < tail_window <= horizon:
        raise ValueError("need 0 < tail_window <= horizon")
    if branch == ():
        return BranchMeasure(1.0, 1.0, 1.0, 0, horizon, float(tail_window), False)
    scheme = SeedScheme(int(seed))
    checks = [
        float(m)
        for m in range(math.ceil(horizon - tail_window), math.floor(horizon) + 1)
    ]
    hits = 0
    for rep in range(n_replicas):
        stream = scheme.stream(StreamKind.WALKER, (0,), replica=rep)
        pos = start
        t = 0.0
        n = 1
        ok = True
        ci = 0
        while True:
            t += stream.exponential_at(2 * n - 1, 1.0)
            while ci < len(checks) and checks[ci] < t:
                if ok and not _in_branch(pos, branch):
                    ok = False
                ci += 1
            if t > horizon or not ok:
                break
            nbrs = lattice.neighbors(top, pos)
            pos = nbrs[stream.integer_at(2 * n, len(nbrs))]
            n += 1
        while ci < len(checks):
            if ok and not _in_branch(pos, branch):
                ok = False
            ci += 1
        hits += ok
    lo, hi = wilson_interval(hits, n_replicas)
    return BranchMeasure(
        hits / n_replicas, lo, hi, n_replicas, horizon, float(tail_window)
    )


# ---------------------------------------------------------------------------
# Exports.
# ---------------------------------------------------------------------------


def _open_for_write(target, newline=None):
    if isinstance(target, (str, bytes, os.PathLike)):
        return open(target, "w", newline=newline), True
    return target, False


def _pool_label(entry) -> str:
    """Label a pooled-knowledge entry, bare edge or (environment, edge)."""
    if isinstance(entry[0], int):
        return f"{entry[0]}:{edge_label(entry[1])}"
    return edge_label(entry)


def write_events_jsonl(trajectory, target) -> None:
    """Write a walker trajectory as JSON lines of (time, event kind, payload).

    Emits one ``snapshot`` line per recorded time (positions plus pooled
    knowledge) and one ``merge`` line per coalescence observed by the end.
    Accepts EnvWalkTrajectory or a list of DualChainState snapshots.
    """
    fp, own = _open_for_write(target)
    try:
        if isinstance(trajectory, EnvWalkTrajectory):
            rows = [
                (
                    t,
                    "snapshot",
                    {
                        "positions": {
                            str(l): list(ws.positions[l])
                            for l in ws.live_labels()
                        },
                        "open": sorted(_pool_label(e) for e in pool.open_set),
                        "closed": sorted(
                            _pool_label(e) for e in pool.closed_set
                        ),
                    },
                )
                for t, ws, pool in zip(
                    trajectory.times, trajectory.walkers, trajectory.pooled
                )
            ]
            final = trajectory.final
            for mt, ms, md in zip(
                final["merge_time"],
                final["merge_survivor"],
                final["merge_dropped"],
            ):
                rows.append(
                    (
                        float(mt),
                        "merge" if int(ms) >= 0 else "removal",
                        {"survivor": int(ms), "dropped": int(md)},
                    )
                )
        else:
            rows = [
                (
                    st.clock,
                    "snapshot",
                    {
                        "positions": {
                            str(l): list(st.walkers.positions[l])
                            for l in st.walkers.live_labels()
                        },
                        "open": sorted(edge_label(e) for e in st.knowledge.open_set),
                        "closed": sorted(
                            edge_label(e) for e in st.knowledge.closed_set
                        ),
                    },
                )
                for st in trajectory
            ]
        rows.sort(key=lambda r: (r[0], r[1]))
        for t, kind, payload in rows:
            fp.write(
                json.dumps(
                    {"time": t, "event": kind, "payload": payload},
                    sort_keys=True,
                    separators=(",", ":"),
                )
            )
            fp.write("\n")
    finally:
        if own:
            fp.close()


def write_regeneration_csv(record: RegenerationRecord, target) -> None:
    """CSV rows (n, sigma_n, delta_x, delta_y, attempts); displacements
    are JSON-encoded coordinate lists."""
    fp, own = _open_for_write(target, newline="")
    try:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(["n", "sigma", "delta_x", "delta_y", "attempts"])
        for n in range(len(record.sigma)):
            writer.writerow(
                [
                    n + 1,
                    int(record.sigma[n]),
                    json.dumps([int(c) for c in record.delta_x[n]]),
                    json.dumps([int(c) for c in record.delta_y[n]]),
                    int(record.attempt_counts[n]),
                ]
            )
    finally:
        if own:
            fp.close()
