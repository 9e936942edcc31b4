"""Forward simulation of the four site/edge processes on finite graphs.

Covers the nearest-neighbor and range-R voter models, the voter model with
stirring, dynamical percolation on the edges, and the joint process where
voter attempts succeed only when the chosen site is connected to the origin
of the attempt inside the percolation ball.  All runs are exact event-driven
simulations with counter-based randomness, so a trajectory is a deterministic
function of (topology, initial data, parameters, seed), and rerunning with a
shorter horizon reproduces a bit-identical prefix.

Infinite topologies are deliberately rejected here; infinite-volume questions
go through the dual walker systems instead.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, replace
from typing import Mapping, Optional

import numpy as np

from . import lattice
from ._kernels import run_forward, tables
from .randomness import SeedScheme, Stream, fold_step

__all__ = [
    "SiteConfig",
    "EdgeConfig",
    "LazyEdgeConfig",
    "JointState",
    "Trajectory",
    "simulate_voter",
    "simulate_stirring",
    "simulate_dynperc",
    "simulate_vmdyn",
    "consensus_time",
    "vertex_label",
    "edge_label",
    "write_snapshot_csv",
    "trajectory_as_dict",
    "write_trajectory_json",
]


# ---------------------------------------------------------------------------
# Configuration types.
# ---------------------------------------------------------------------------


def vertex_label(v) -> str:
    """Canonical string form of a vertex, used by CSV/JSON exports."""
    return json.dumps(list(v), separators=(",", ":"))


def edge_label(edge) -> str:
    u, v = edge
    return json.dumps([list(u), list(v)], separators=(",", ":"))


@dataclass(frozen=True)
class SiteConfig:
    """A total 0/1 opinion assignment over the vertices of a finite topology.

    ``values`` follows the canonical vertex order of ``lattice.vertices``.
    """

    top: object
    values: np.ndarray

    @staticmethod
    def constant(top, bit: int) -> "SiteConfig":
        verts = lattice.vertices(top)
        return SiteConfig(top, np.full(len(verts), int(bit), dtype=np.int8))

    @staticmethod
    def from_assignment(top, assignment: Mapping) -> "SiteConfig":
        verts = lattice.vertices(top)
        vals = np.empty(len(verts), dtype=np.int8)
        for i, v in enumerate(verts):
            vals[i] = int(assignment[v])
        return SiteConfig(top, vals)

    def value(self, v) -> int:
        return int(self.values[lattice.vertices(self.top).index(v)])

    def ones_count(self) -> int:
        return int(np.sum(self.values))

    def is_constant(self) -> bool:
        n1 = self.ones_count()
        return n1 == 0 or n1 == len(self.values)

    def as_dict(self) -> dict:
        verts = lattice.vertices(self.top)
        return {vertex_label(v): int(self.values[i]) for i, v in enumerate(verts)}


@dataclass(frozen=True)
class EdgeConfig:
    """A total open/closed assignment over the edges of a finite topology.

    ``values`` follows the canonical sorted edge order of ``lattice.edges``;
    1 means open.
    """

    top: object
    values: np.ndarray

    @staticmethod
    def constant(top, bit: int) -> "EdgeConfig":
        eds = lattice.edges(top)
        return EdgeConfig(top, np.full(len(eds), int(bit), dtype=np.int8))

    @staticmethod
    def from_assignment(top, assignment: Mapping) -> "EdgeConfig":
        eds = lattice.edges(top)
        vals = np.empty(len(eds), dtype=np.int8)
        for i, e in enumerate(eds):
            vals[i] = int(assignment[e])
        return EdgeConfig(top, vals)

    def value(self, edge) -> int:
        e = lattice.canonical_edge(*edge)
        return int(self.values[lattice.edges(self.top).index(e)])

    def open_fraction(self) -> float:
        return float(np.mean(self.values)) if len(self.values) else 0.0

    def as_dict(self) -> dict:
        eds = lattice.edges(self.top)
        return {edge_label(e): int(self.values[i]) for i, e in enumerate(eds)}


@dataclass(frozen=True)
class LazyEdgeConfig:
    """Partial edge configuration for infinite-volume walker systems.

    Edges in ``pinned`` start at the given deterministic value; every other
    edge starts from an independent Bernoulli(``density``) draw taken from its
    own counter-based stream the first time the edge is looked at.  Because
    the draw is addressed by (edge, update-count), a value, once materialized,
    is never resampled retroactively.
    """

    density: float
    pinned: Mapping = None

    def __post_init__(self):
        if not 0.0 <= self.density <= 1.0:
            raise ValueError(f"density must lie in [0, 1], got {self.density}")
        object.__setattr__(
            self,
            "pinned",
            {} if self.pinned is None else dict(self.pinned),
        )


@dataclass(frozen=True)
class JointState:
    """Sites and edges over one topology at a common time."""

    sites: SiteConfig
    edges: EdgeConfig
    clock: float

    def __post_init__(self):
        if self.sites.top != self.edges.top:
            raise ValueError("site and edge components must share one topology")


@dataclass(frozen=True)
class Trajectory:
    """Snapshots of one run at the requested times.

    ``states`` holds one entry per time in ``times``: a SiteConfig for the
    opinion models, an EdgeConfig for dynamical percolation, or a JointState
    for the joint process.  ``consensus`` is the exact first time the site
    configuration became constant (0.0 when it starts constant, ``math.inf``
    when consensus was not reached by the horizon); it is None for edge-only
    trajectories, where the notion does not apply.
    """

    model: str
    top: object
    times: tuple
    states: tuple
    horizon: float
    consensus: Optional[float]
    seed: int


TIMEOUT = math.inf


# ---------------------------------------------------------------------------
# Input validation and coercion.
# ---------------------------------------------------------------------------


def _require_finite(top):
    if not getattr(top, "finite", False):
        raise ValueError(
            f"forward simulation needs a finite topology, got {top.kind}"
        )
    if not lattice.vertices(top):
        raise ValueError("the topology has no vertices")


def _require_horizon(horizon: float) -> float:
    horizon = float(horizon)
    if not horizon > 0.0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    return horizon


def _check_ball_geometry(top, radius: int):
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    if isinstance(top, lattice.Torus) and top.side <= 2 * radius + 1:
        raise ValueError(
            f"ball geometry needs torus side > 2*radius + 1 "
            f"(side {top.side}, radius {radius}): otherwise the radius-"
            f"{radius} ball wraps around the torus"
        )


def _coerce_sites(top, initial):
    """Explicit opinions, or a float meaning a Bernoulli product start.

    Returns (values-or-None, alpha); a None first component tells the kernel
    to draw each site's initial opinion from that site's own stream, so the
    product law is part of the same deterministic seed scheme as the run.
    """
    if isinstance(initial, float):
        if not 0.0 <= initial <= 1.0:
            raise ValueError(f"initial opinion density must lie in [0, 1], got {initial}")
        return None, initial
    n = len(lattice.vertices(top))
    if isinstance(initial, SiteConfig):
        if initial.top != top:
            raise ValueError("initial opinions live on a different topology")
        vals = initial.values
    elif isinstance(initial, Mapping):
        vals = SiteConfig.from_assignment(top, initial).values
    else:
        vals = np.asarray(initial, dtype=np.int8)
    vals = np.ascontiguousarray(vals, dtype=np.int8)
    if vals.shape != (n,):
        raise ValueError(f"expected one opinion per vertex ({n}), got shape {vals.shape}")
    if not np.all((vals == 0) | (vals == 1)):
        raise ValueError("opinions must be 0 or 1")
    return vals, 0.0


def _coerce_edges(top, initial) -> np.ndarray:
    m = len(lattice.edges(top))
    if isinstance(initial, EdgeConfig):
        if initial.top != top:
            raise ValueError("initial edges live on a different topology")
        vals = initial.values
    elif isinstance(initial, Mapping):
        vals = EdgeConfig.from_assignment(top, initial).values
    else:
        vals = np.asarray(initial, dtype=np.int8)
    vals = np.ascontiguousarray(vals, dtype=np.int8)
    if vals.shape != (m,):
        raise ValueError(f"expected one value per edge ({m}), got shape {vals.shape}")
    if not np.all((vals == 0) | (vals == 1)):
        raise ValueError("edge values must be 0 (closed) or 1 (open)")
    return vals


def _snapshot_grid(horizon: float, snapshot_times) -> tuple:
    if snapshot_times is None:
        return (horizon,)
    times = sorted(float(s) for s in snapshot_times)
    if not times:
        raise ValueError("snapshot_times must name at least one time")
    if times[0] < 0.0 or times[-1] > horizon:
        raise ValueError(
            f"snapshot times must lie in [0, horizon={horizon}], got {times}"
        )
    if len(set(times)) != len(times):
        raise ValueError("snapshot times must be distinct")
    return tuple(times)


# ---------------------------------------------------------------------------
# Site-model drivers (voter, stirring, joint process).
# ---------------------------------------------------------------------------


def _run_site_model(model_name, top, plan, times, horizon, seed, make_state,
                    frozen_after_consensus):
    """Replay one plan to each requested time; harvest exact consensus time.

    Counter-based streams make runs to different horizons bit-identical on
    their common prefix, so replaying is exact, not approximate.  The first
    run stops at consensus; because consensus is absorbing, a model whose
    whole state is the opinions (``frozen_after_consensus``) can serve every
    later snapshot straight from that run instead of replaying past it.  The
    joint process cannot: its edges keep moving after the opinions freeze.
    """
    probe = run_forward(replace(plan, stop_at_consensus=True), replica=0)
    consensus = probe["consensus_time"]
    states = []
    for s in times:
        reusable = (consensus == math.inf and s == horizon) or (
            frozen_after_consensus and consensus <= s
        )
        out = probe if reusable else run_forward(replace(plan, horizon=s), replica=0)
        states.append(make_state(out, s))
    return Trajectory(
        model=model_name,
        top=top,
        times=times,
        states=tuple(states),
        horizon=horizon,
        consensus=consensus,
        seed=seed,
    )


def simulate_voter(top, initial, radius, horizon, seed, snapshot_times=None) -> Trajectory:
    """Voter model: each site at rate 1 copies a uniformly chosen site of its
    punctured ball of the given radius (radius 1 means a uniform neighbor).

    ``initial`` is a SiteConfig, a vertex-to-bit mapping, an array in
    canonical vertex order, or a float, which means every site starts from an
    independent Bernoulli draw with that density.  Returns snapshots at the
    requested times (default: the horizon only).
    """
    _require_finite(top)
    horizon = _require_horizon(horizon)
    eta0, alpha = _coerce_sites(top, initial)
    times = _snapshot_grid(horizon, snapshot_times)
    scheme = SeedScheme(int(seed))
    if radius == 1:
        plan = tables.make_forward_plan(
            scheme, top, tables.MODEL_VOTER, horizon, eta0=eta0, alpha=alpha
        )
    else:
        # Range-R copying is the joint process with a frozen all-open
        # environment: every attempt succeeds, the chosen site is uniform on
        # the punctured ball, and no edge stream is ever consumed.
        _check_ball_geometry(top, radius)
        plan = tables.make_forward_plan(
            scheme,
            top,
            tables.MODEL_VMDYN,
            horizon,
            speed=0.0,
            density=1.0,
            radius=radius,
            eta0=eta0,
            alpha=alpha,
            zeta0=np.ones(len(lattice.edges(top)), dtype=np.int8),
        )

    def make_state(out, s):
        return SiteConfig(top, out["eta"])

    return _run_site_model("voter", top, plan, times, horizon, int(seed),
                           make_state, frozen_after_consensus=True)


def simulate_stirring(top, initial, speed, horizon, seed, snapshot_times=None) -> Trajectory:
    """Voter model with stirring on a regular graph: voter copying at rate 1
    per site plus opinion swaps at rate speed/degree per edge."""
    _require_finite(top)
    lattice.regular_degree(top)
    horizon = _require_horizon(horizon)
    if speed < 0.0:
        raise ValueError(f"stirring speed must be >= 0, got {speed}")
    xi0, alpha = _coerce_sites(top, initial)
    times = _snapshot_grid(horizon, snapshot_times)
    scheme = SeedScheme(int(seed))
    plan = tables.make_forward_plan(
        scheme, top, tables.MODEL_STIRRING, horizon, speed=float(speed),
        eta0=xi0, alpha=alpha,
    )

    def make_state(out, s):
        return SiteConfig(top, out["eta"])

    return _run_site_model("stirring", top, plan, times, horizon, int(seed),
                           make_state, frozen_after_consensus=True)


def simulate_vmdyn(
    top, initial_sites, initial_edges, density, speed, radius, horizon, seed,
    snapshot_times=None,
) -> Trajectory:
    """Joint process: dynamical percolation on the edges (refresh rate
    ``speed``, open probability ``density``) with voter attempts that succeed
    only when the chosen site is connected to the updating site inside the
    radius-``radius`` percolation ball.

    ``initial_edges=None`` starts the environment from its stationary product
    law; the opinion side accepts the same forms as ``simulate_voter``."""
    _require_finite(top)
    _check_ball_geometry(top, radius)
    horizon = _require_horizon(horizon)
    if not 0.0 <= density <= 1.0:
        raise ValueError(f"density must lie in [0, 1], got {density}")
    if speed < 0.0:
        raise ValueError(f"refresh speed must be >= 0, got {speed}")
    eta0, alpha = _coerce_sites(top, initial_sites)
    zeta0 = None if initial_edges is None else _coerce_edges(top, initial_edges)
    times = _snapshot_grid(horizon, snapshot_times)
    scheme = SeedScheme(int(seed))
    plan = tables.make_forward_plan(
        scheme,
        top,
        tables.MODEL_VMDYN,
        horizon,
        speed=float(speed),
        density=float(density),
        radius=int(radius),
        eta0=eta0,
        alpha=alpha,
        zeta0=zeta0,
    )

    def make_state(out, s):
        return JointState(SiteConfig(top, out["eta"]), EdgeConfig(top, out["zeta"]), s)

    return _run_site_model("vmdyn", top, plan, times, horizon, int(seed),
                           make_state, frozen_after_consensus=False)


# ---------------------------------------------------------------------------
# Dynamical percolation alone: closed form per edge.
# ---------------------------------------------------------------------------


def simulate_dynperc(top, initial_edges, density, speed, horizon, seed,
                     snapshot_times=None) -> Trajectory:
    """Dynamical percolation on the edges of a finite topology.

    Each edge refreshes at rate ``speed`` to an independent Bernoulli
    (``density``) value.  Edges never interact, so each snapshot value is
    computed in closed form from the edge's own stream: count the refreshes
    up to the snapshot time and read the value written by the last one.  The
    streams are the same ones the joint process consumes, so the trajectory
    is bit-identical to the edge marginal of ``simulate_vmdyn`` run with the
    same seed.  ``initial_edges=None`` starts from the stationary product law.
    """
    _require_finite(top)
    horizon = _require_horizon(horizon)
    if not 0.0 <= density <= 1.0:
        raise ValueError(f"density must lie in [0, 1], got {density}")
    if not speed > 0.0:
        raise ValueError(f"refresh speed must be > 0, got {speed}")
    zeta0 = None if initial_edges is None else _coerce_edges(top, initial_edges)
    times = _snapshot_grid(horizon, snapshot_times)
    scheme = SeedScheme(int(seed))
    ft = tables.build_finite_tables(top)
    prefixes = tables._edge_prefixes(scheme, top, ft, 1)[0]
    m = ft.n_edges
    snap = np.empty((len(times), m), dtype=np.int8)
    for e in range(m):
        stream = Stream(fold_step(int(prefixes[e]), 0))
        t_next = stream.exponential_at(1, speed)
        done = 0
        for si, s in enumerate(times):
            while t_next <= s:
                done += 1
                t_next += stream.exponential_at(2 * done + 1, speed)
            if done == 0:
                snap[si, e] = (
                    zeta0[e]
                    if zeta0 is not None
                    else (1 if stream.bernoulli_at(0, density) else 0)
                )
            else:
                snap[si, e] = 1 if stream.bernoulli_at(2 * done, density) else 0
    states = tuple(EdgeConfig(top, snap[si].copy()) for si in range(len(times)))
    return Trajectory(
        model="dynperc",
        top=top,
        times=times,
        states=states,
        horizon=horizon,
        consensus=None,
        seed=int(seed),
    )


# ---------------------------------------------------------------------------
# Consensus time and exports.
# ---------------------------------------------------------------------------


def consensus_time(trajectory: Trajectory) -> float:
    """Exact first time the site configuration became constant.

    Returns 0.0 for a trajectory that started constant and ``math.inf`` as
    the timeout marker when consensus was not reached by the horizon.
    """
    if trajectory.consensus is None:
        raise ValueError(
            f"a {trajectory.model} trajectory has no site component, so "
            f"consensus is undefined"
        )
    return trajectory.consensus


def _state_items(state):
    if isinstance(state, JointState):
        return [("sites", state.sites.as_dict()), ("edges", state.edges.as_dict())]
    if isinstance(state, SiteConfig):
        return [("sites", state.as_dict())]
    return [("edges", state.as_dict())]


def write_snapshot_csv(state, target) -> None:
    """Write one snapshot as CSV rows (vertex, value) and/or (edge, value)."""
    own = isinstance(target, (str, bytes, os.PathLike))
    fp = open(target, "w", newline="") if own else target
    try:
        writer = csv.writer(fp)
        for kind, mapping in _state_items(state):
            writer.writerow(["vertex" if kind == "sites" else "edge", "value"])
            for label, value in mapping.items():
                writer.writerow([label, value])
    finally:
        if own:
            fp.close()


def trajectory_as_dict(trajectory: Trajectory) -> dict:
    """JSON-ready form of a trajectory (used by the report layer too)."""
    snapshots = []
    for s, state in zip(trajectory.times, trajectory.states):
        entry = {"time": s}
        entry.update(_state_items(state))
        snapshots.append(entry)
    out = {
        "model": trajectory.model,
        "topology": lattice.describe(trajectory.top),
        "horizon": trajectory.horizon,
        "seed": trajectory.seed,
        "snapshots": snapshots,
    }
    if trajectory.consensus is not None:
        out["consensus_time"] = (
            "timeout" if trajectory.consensus == math.inf else trajectory.consensus
        )
    return out


def write_trajectory_json(trajectory: Trajectory, target) -> None:
    own = isinstance(target, (str, bytes, os.PathLike))
    fp = open(target, "w") if own else target
    try:
        json.dump(trajectory_as_dict(trajectory), fp, indent=2, sort_keys=True)
        fp.write("\n")
    finally:
        if own:
            fp.close()
