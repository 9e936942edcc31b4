"""Exact couplings between walk systems and the break functionals they certify.

Three couplings live here.  The shared-draw coupling runs coalescing walkers
inside independent ones on the same jump clocks and neighbor picks, which
certifies containment and reads off the first collision time.  The stirring
and independent-walk set chains are coupled transition by transition: moves
to vacant sites carry identical rates and are shared, while at positive
refresh speed every edge inside the set feeds removal moves whose rates
disagree, so those fire unshared and break the coupling.  The exact total
rate of unshared moves is ``mismatch_mass``; its time integral along the
coupled stretch is the compensator of the break indicator, and
``martingale_identity_check`` verifies that balance empirically.  Finally,
a pair of environment-reading walkers in separate environments follows the
same law as a pair sharing one environment for as long as neither walker
comes near the other's revealed knowledge; ``couple_single_separate`` runs
the two regimes on literally the same draws until the pair statistic first
reaches twice the reveal radius, then continues each marginal honestly.

The proximity functionals for the separate-environment pair are estimated
by ``proximity_hit_probability`` (ever-close probability) and
``proximity_occupation_time`` (expected time spent close).  Both truncate
at the run horizon and are therefore lower bounds for the untruncated
functionals on transient topologies.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Mapping, Optional

from . import lattice, stats
from ._kernels import run_env_walkers, run_set_walkers, tables
from .duals import (
    EnvWalkTrajectory,
    RevealedKnowledge,
    WalkerSystem,
    _decode_position,
    _initial_pins,
    _knowledge_from_run,
    _open_for_write,
    _run_env_walk,
    _set_walk_space,
    simulate_walkers_separate_env,
)
from .randomness import SeedScheme, StreamKind, derive_key

__all__ = [
    "CoupledWalkRun",
    "FunctionalEstimate",
    "MartingaleCheck",
    "SingleSeparateCoupling",
    "StirringCouplingRun",
    "collision_probability",
    "couple_coalescing_independent",
    "couple_single_separate",
    "couple_stirring_independent",
    "internal_edge_count",
    "martingale_identity_check",
    "mismatch_mass",
    "proximity_hit_probability",
    "proximity_occupation_time",
    "write_functional_report",
]


def internal_edge_count(top, sites) -> int:
    """Number of edges of ``top`` with both endpoints in ``sites``."""
    sites = set(sites)
    seen = set()
    for x in sites:
        for y in lattice.neighbors(top, x):
            if y in sites:
                seen.add(lattice.canonical_edge(x, y))
    return len(seen)


def mismatch_mass(top, sites, speed) -> float:
    """Total rate of unshared moves from a coupled set state.

    Moves to vacant sites always share.  At ``speed`` zero the removal
    rates of the two chains agree as well and nothing can break; otherwise
    each occupied neighbor pair contributes one stirring-side removal at
    rate 1/degree per endpoint and one independent-side collapse at rate
    (1+speed)/degree per endpoint, none of which the other marginal can
    copy.
    """
    if speed == 0.0:
        return 0.0
    deg = lattice.regular_degree(top)
    return 2.0 * internal_edge_count(top, sites) * (2.0 + speed) / deg


@dataclass(frozen=True)
class FunctionalEstimate:
    """Monte Carlo estimate of a path functional, truncated at ``horizon``.

    ``exact`` marks degenerate inputs answered without sampling; the
    interval then collapses to the point value and ``n_samples`` is zero.
    """

    value: float
    ci_low: float
    ci_high: float
    se: float
    n_samples: int
    horizon: float
    exact: bool = False


@dataclass(frozen=True)
class CoupledWalkRun:
    """One run of coalescing walkers driven inside independent ones.

    Both systems read the same per-walker jump clocks and neighbor picks,
    so every live coalescing walker stands exactly where its independent
    copy stands; ``containment_ok`` certifies that the run observed no
    violation of that invariant.  ``first_collision`` is the first time two
    independent walkers share a site, which is also the first merge time of
    the coalescing system.
    """

    independent: dict
    coalescing: WalkerSystem
    first_collision: float
    merges: tuple
    containment_ok: bool
    horizon: float
    seed: int


def couple_coalescing_independent(top, starts, horizon, seed) -> CoupledWalkRun:
    """Run the shared-draw coupling of independent and coalescing walkers.

    Walkers are labelled by their index in ``starts`` and jump at rate one.
    The coalescing system reuses the independent system's draws, so merges
    happen exactly when independent copies collide and the live coalescing
    positions form a subset of the independent ones at every time.
    """
    sites = [tuple(int(c) for c in s) for s in starts]
    if len(set(sites)) != len(sites):
        raise ValueError("walker starting sites must be distinct")
    horizon = float(horizon)
    plan = tables.make_set_walk_plan(
        SeedScheme(int(seed)),
        tables.MODE_COUPLED,
        sites,
        horizon,
        **_set_walk_space(top),
    )
    out = run_set_walkers(plan, replica=0)
    labels = list(range(len(sites)))
    coal = WalkerSystem(
        labels=tuple(labels),
        positions={
            i: _decode_position(plan, out["coal_pos"][i]) for i in labels
        },
    )
    merges = []
    for t, s, d in zip(
        out["merge_time"], out["merge_survivor"], out["merge_dropped"]
    ):
        coal.coalesced_into[int(d)] = int(s)
        merges.append((float(t), int(s), int(d)))
    first = float(out["g_time"])
    return CoupledWalkRun(
        independent={
            i: _decode_position(plan, out["pos"][i]) for i in labels
        },
        coalescing=coal,
        first_collision=first if first <= horizon else math.inf,
        merges=tuple(merges),
        containment_ok=int(out["containment_violations"]) == 0,
        horizon=horizon,
        seed=int(seed),
    )


def collision_probability(top, starts, horizon, seed,
                          n_replicas=2000) -> FunctionalEstimate:
    """Estimate the probability that independent walkers collide in time.

    The walkers jump at rate one; for a system running at rate (1+speed)
    rescale the horizon by that factor instead.  The estimate is the
    probability of a collision by ``horizon``, a lower bound for the
    untruncated meeting probability.  A single walker cannot collide and
    duplicated starting sites already have; both cases come back exact.
    """
    if n_replicas < 1:
        raise ValueError(f"need at least one replica, got {n_replicas}")
    sites = [tuple(int(c) for c in s) for s in starts]
    horizon = float(horizon)
    if len(sites) == 1:
        return FunctionalEstimate(0.0, 0.0, 0.0, 0.0, 0, horizon, exact=True)
    if len(set(sites)) != len(sites):
        return FunctionalEstimate(1.0, 1.0, 1.0, 0.0, 0, horizon, exact=True)
    plan = tables.make_set_walk_plan(
        SeedScheme(int(seed)),
        tables.MODE_COUPLED,
        sites,
        horizon,
        stop_when_single=len(sites) == 2,
        **_set_walk_space(top),
    )
    hits = 0
    for r in range(n_replicas):
        if run_set_walkers(plan, replica=r)["g_time"] <= horizon:
            hits += 1
    est = stats.binomial_estimate(hits, n_replicas)
    return FunctionalEstimate(
        est.value, est.ci_low, est.ci_high, est.se, n_replicas, horizon
    )


def _set_moves(top, occupied):
    """Vacant-destination moves and per-site occupied-neighbor counts."""
    moves = []
    drops = []
    for x in sorted(occupied):
        n_occ = 0
        for y in lattice.neighbors(top, x):
            if y in occupied:
                n_occ += 1
            else:
                moves.append((x, y))
        if n_occ:
            drops.append((x, n_occ))
    return moves, drops


def _set_chain_segment(top, sites, move_rate, drop_rate, t0, horizon, stream,
                       track_phi=False, stop_at_drop=False):
    """Advance a set chain from ``t0`` to ``horizon`` or its first drop.

    Occupied sites jump to each vacant neighbor at ``move_rate`` and are
    dropped at ``drop_rate`` per occupied neighbor.  Returns the final set,
    the first drop time (infinite if none), the time integral of the
    internal-edge count over the traversed stretch, and the time reached.
    """
    a = set(sites)
    first_drop = math.inf
    edge_integral = 0.0
    t = float(t0)
    while True:
        moves, drops = _set_moves(top, a)
        two_phi = sum(n for _, n in drops)
        total = move_rate * len(moves) + drop_rate * two_phi
        if total <= 0.0:
            return frozenset(a), first_drop, edge_integral, horizon
        wait = stream.next_exponential(total)
        if track_phi:
            edge_integral += (two_phi / 2.0) * (min(t + wait, horizon) - t)
        if t + wait > horizon:
            return frozenset(a), first_drop, edge_integral, horizon
        t += wait
        pick = stream.next_uniform() * total
        acc = 0.0
        chosen = None
        for x, y in moves:
            acc += move_rate
            if pick < acc:
                chosen = ("move", x, y)
                break
        if chosen is None:
            for x, n in drops:
                acc += drop_rate * n
                if pick < acc:
                    chosen = ("drop", x)
                    break
        if chosen is None:
            chosen = ("drop", drops[-1][0]) if drops else (
                "move",
            ) + moves[-1]
        if chosen[0] == "move":
            a.remove(chosen[1])
            a.add(chosen[2])
        else:
            a.remove(chosen[1])
            if first_drop == math.inf:
                first_drop = t
            if stop_at_drop:
                return frozenset(a), first_drop, edge_integral, t


@dataclass(frozen=True)
class StirringCouplingRun:
    """One trajectory of the stirring / independent-walk set coupling.

    ``break_time`` is the first unshared move (infinite when the chains
    agree through the horizon).  ``edge_integral`` is the time integral of
    the internal-edge count over the coupled stretch; ``break_integral`` is
    the same integral weighted by the exact mismatch mass, which is the
    compensator of the break indicator,
    P(break by T) = E[break_integral at T].
    """

    stirring_final: frozenset
    independent_final: frozenset
    break_time: float
    break_integral: float
    edge_integral: float
    horizon: float
    speed: float
    seed: int
    replica: int


def couple_stirring_independent(top, starts, speed, horizon, seed,
                                replica=0) -> StirringCouplingRun:
    """Couple the stirring set chain with the independent-walk set chain.

    Both chains start from ``starts`` on a regular topology and share every
    move to a vacant neighbor, at rate (1+speed)/degree each.  At speed
    zero the removal rates agree too and the chains never separate.  At
    positive speed each occupied neighbor pair feeds unshared moves: the
    stirring chain removes an endpoint at rate 1/degree per occupied
    neighbor while the independent chain collapses it at (1+speed)/degree,
    and the first such move breaks the coupling, after which the two sets
    evolve independently to the horizon.
    """
    speed = float(speed)
    horizon = float(horizon)
    if speed < 0.0:
        raise ValueError(f"refresh speed must be >= 0, got {speed}")
    if horizon < 0.0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    sites = sorted(set(tuple(int(c) for c in s) for s in starts))
    if not sites:
        raise ValueError("need at least one starting site")
    deg = lattice.regular_degree(top)
    move_rate = (1.0 + speed) / deg
    stream = SeedScheme(int(seed)).stream(
        StreamKind.CHAIN, (3,), replica=int(replica)
    )
    a = set(sites)
    t = 0.0
    break_time = math.inf
    edge_integral = 0.0
    split_w = split_z = None
    while True:
        moves, drops = _set_moves(top, a)
        two_phi = sum(n for _, n in drops)
        drop_mass = (
            two_phi / deg if speed == 0.0 else two_phi * (2.0 + speed) / deg
        )
        total = move_rate * len(moves) + drop_mass
        if total <= 0.0:
            t = horizon
            break
        wait = stream.next_exponential(total)
        edge_integral += (two_phi / 2.0) * (min(t + wait, horizon) - t)
        if t + wait > horizon:
            t = horizon
            break
        t += wait
        pick = stream.next_uniform() * total
        acc = 0.0
        chosen = None
        for x, y in moves:
            acc += move_rate
            if pick < acc:
                chosen = ("shared", x, y)
                break
        if chosen is None and speed == 0.0:
            for x, n in drops:
                acc += n / deg
                if pick < acc:
                    chosen = ("drop", x)
                    break
        elif chosen is None:
            for x, n in drops:
                acc += n / deg
                if pick < acc:
                    chosen = ("stirring-only", x)
                    break
                acc += n * (1.0 + speed) / deg
                if pick < acc:
                    chosen = ("independent-only", x)
                    break
        if chosen is None:
            if drops:
                last = "drop" if speed == 0.0 else "independent-only"
                chosen = (last, drops[-1][0])
            else:
                chosen = ("shared",) + moves[-1]
        kind = chosen[0]
        if kind == "shared":
            a.remove(chosen[1])
            a.add(chosen[2])
        elif kind == "drop":
            a.remove(chosen[1])
        elif kind == "stirring-only":
            break_time = t
            split_w = set(a)
            split_w.remove(chosen[1])
            split_z = set(a)
            break
        else:
            break_time = t
            split_w = set(a)
            split_z = set(a)
            split_z.remove(chosen[1])
            break
    if break_time == math.inf:
        w_final = z_final = frozenset(a)
    else:
        w_final, _, _, _ = _set_chain_segment(
            top, split_w, move_rate, 1.0 / deg, break_time, horizon, stream
        )
        z_final, _, _, _ = _set_chain_segment(
            top, split_z, move_rate, (1.0 + speed) / deg, break_time,
            horizon, stream
        )
    factor = 0.0 if speed == 0.0 else 2.0 * (2.0 + speed) / deg
    return StirringCouplingRun(
        stirring_final=w_final,
        independent_final=z_final,
        break_time=break_time,
        break_integral=factor * edge_integral,
        edge_integral=edge_integral,
        horizon=horizon,
        speed=speed,
        seed=int(seed),
        replica=int(replica),
    )


_IDENTITY_KINDS = ("coupling", "collision", "coalescence")


@dataclass(frozen=True)
class MartingaleCheck:
    """Outcome of one first-event compensator identity check.

    ``difference`` is the paired per-replica mean of indicator minus
    compensator, whose exact expectation is zero; ``consistent`` grants it
    three standard errors.  For the coupling kind ``rhs_bound``
    additionally integrates the linear bound 3 (1+speed) per internal edge
    in place of the exact mismatch mass, and ``bound_holds`` says the hit
    probability stays below that with the same allowance.
    """

    kind: str
    lhs: stats.Estimate
    rhs: stats.Estimate
    difference: stats.Estimate
    consistent: bool
    rhs_bound: Optional[stats.Estimate]
    bound_holds: Optional[bool]
    degree: int
    speed: float
    horizon: float
    n_replicas: int


def martingale_identity_check(kind, top, starts, speed, horizon, seed,
                              n_replicas=800) -> MartingaleCheck:
    """Check a first-event probability against its exact compensator.

    Each supported event time has hazard proportional to the internal-edge
    count of the running set, so the probability of seeing the event by
    the horizon equals the expected hazard integral stopped there.  Both
    sides are estimated from the same replicas and compared through their
    paired difference.

    Kinds: ``coupling`` watches the first unshared move of the stirring /
    independent coupling, with the exact mismatch mass as hazard;
    ``collision`` watches the first collapse of the independent-walk set
    chain, hazard 2 (1+speed) per internal edge per degree; ``coalescence``
    watches the first merge of rate-one coalescing walkers, hazard 2 per
    internal edge per degree, with ``speed`` ignored.
    """
    if kind not in _IDENTITY_KINDS:
        raise ValueError(
            f"unknown identity kind {kind!r}, expected one of "
            f"{_IDENTITY_KINDS}"
        )
    if n_replicas < 1:
        raise ValueError(f"need at least one replica, got {n_replicas}")
    speed = float(speed)
    horizon = float(horizon)
    if speed < 0.0:
        raise ValueError(f"refresh speed must be >= 0, got {speed}")
    deg = lattice.regular_degree(top)
    scheme = SeedScheme(int(seed))
    hits = []
    integrals = []
    bounds = [] if kind == "coupling" else None
    for r in range(n_replicas):
        if kind == "coupling":
            run = couple_stirring_independent(
                top, starts, speed, horizon, seed, replica=r
            )
            hits.append(1.0 if run.break_time <= horizon else 0.0)
            integrals.append(run.break_integral)
            bounds.append(3.0 * (1.0 + speed) * run.edge_integral)
        else:
            drop_rate = (
                (1.0 + speed) / deg if kind == "collision" else 1.0 / deg
            )
            walk_speed = speed if kind == "collision" else 0.0
            stream = scheme.stream(StreamKind.CHAIN, (4,), replica=r)
            _, first_drop, edge_integral, _ = _set_chain_segment(
                top,
                [tuple(int(c) for c in s) for s in starts],
                (1.0 + walk_speed) / deg,
                drop_rate,
                0.0,
                horizon,
                stream,
                track_phi=True,
                stop_at_drop=True,
            )
            hits.append(1.0 if first_drop <= horizon else 0.0)
            integrals.append(2.0 * drop_rate * edge_integral)
    lhs = stats.binomial_estimate(int(sum(hits)), n_replicas)
    rhs = stats.mean_estimate(integrals)
    diff = stats.mean_estimate(
        [h - i for h, i in zip(hits, integrals)]
    )
    rhs_bound = stats.mean_estimate(bounds) if bounds is not None else None
    bound_holds = None
    if rhs_bound is not None:
        bound_holds = lhs.value <= rhs_bound.value + 3.0 * stats.pooled_se(
            lhs.se, rhs_bound.se
        )
    return MartingaleCheck(
        kind=kind,
        lhs=lhs,
        rhs=rhs,
        difference=diff,
        consistent=abs(diff.value) <= 3.0 * diff.se,
        rhs_bound=rhs_bound,
        bound_holds=bound_holds,
        degree=deg,
        speed=speed,
        horizon=horizon,
        n_replicas=n_replicas,
    )


def _proximity_plan(start_x, start_y, density, speed, radius, horizon, seed,
                    **flags):
    x = tuple(int(c) for c in start_x)
    y = tuple(int(c) for c in start_y)
    if len(x) != len(y) or not x:
        raise ValueError(
            "starting positions must be coordinate tuples of one dimension"
        )
    return tables.make_env_walk_plan(
        SeedScheme(int(seed)),
        radius=int(radius),
        density=float(density),
        speed=float(speed),
        positions=[x, y],
        horizon=float(horizon),
        dim=len(x),
        envs=[0, 1],
        **flags,
    )


def proximity_hit_probability(closeness, start_x, start_y, density, speed,
                              radius, horizon, seed,
                              n_replicas=400) -> FunctionalEstimate:
    """Estimate the ever-close probability of a separate-environment pair.

    Close means the pair statistic, the minimum of the position distance
    and of each walker's distance to the other's revealed edge set, is at
    most ``closeness``.  The estimate truncates at ``horizon`` and is a
    lower bound for the untruncated functional.
    """
    if closeness < 0:
        raise ValueError(f"closeness must be >= 0, got {closeness}")
    if n_replicas < 1:
        raise ValueError(f"need at least one replica, got {n_replicas}")
    plan = _proximity_plan(
        start_x, start_y, density, speed, radius, horizon, seed,
        ell_f=int(closeness), stop_at_f_hit=True,
    )
    horizon = float(horizon)
    hits = 0
    for r in range(n_replicas):
        if run_env_walkers(plan, replica=r)["tau_f"] <= horizon:
            hits += 1
    est = stats.binomial_estimate(hits, n_replicas)
    return FunctionalEstimate(
        est.value, est.ci_low, est.ci_high, est.se, n_replicas, horizon
    )


def proximity_occupation_time(closeness, start_x, start_y, density, speed,
                              radius, horizon, seed,
                              n_replicas=400) -> FunctionalEstimate:
    """Estimate the expected time a separate-environment pair spends close.

    Same pair statistic as ``proximity_hit_probability``; the functional is
    the time spent at or below ``closeness`` up to ``horizon``, again a
    lower bound for the untruncated expectation.  Comparisons against the
    hit probability should give the occupation run the longer horizon,
    since time spent close accrues only after the first visit.
    """
    if closeness < 0:
        raise ValueError(f"closeness must be >= 0, got {closeness}")
    if n_replicas < 1:
        raise ValueError(f"need at least one replica, got {n_replicas}")
    plan = _proximity_plan(
        start_x, start_y, density, speed, radius, horizon, seed,
        ell_occ=int(closeness),
    )
    occupations = [
        float(run_env_walkers(plan, replica=r)["occ_time"])
        for r in range(n_replicas)
    ]
    est = stats.mean_estimate(occupations)
    return FunctionalEstimate(
        est.value,
        max(0.0, est.ci_low),
        est.ci_high,
        est.se,
        n_replicas,
        float(horizon),
    )


@dataclass(frozen=True)
class SingleSeparateCoupling:
    """A walker pair run in both environment regimes on shared draws.

    While each walker stays farther than twice the reveal radius from both
    the other's position and the other's revealed edges, the shared and
    separate environment regimes have identical transition laws, so one
    run serves as both.  ``break_time`` is the first event at which the
    pair statistic reaches twice the reveal radius; ``break_positions``
    and ``break_knowledge`` hold the state just before that event, where
    the regimes are still interchangeable.  ``separate`` continues the
    same draws to the horizon and is the separate-environment marginal
    outright.  ``single_tail`` restarts the pair from the pre-break state
    in one shared environment with each walker's knowledge pinned; the
    refresh and jump clocks are memoryless, so prefix plus tail has the
    shared-environment law.  A run that never breaks leaves the tail empty
    and the two marginals literally equal.
    """

    break_time: float
    break_positions: Optional[tuple]
    break_knowledge: Optional[dict]
    separate: EnvWalkTrajectory
    single_tail: Optional[EnvWalkTrajectory]
    horizon: float
    seed: int


def couple_single_separate(start_x, start_y, density, speed, radius,
                           horizon, seed) -> SingleSeparateCoupling:
    """Couple the shared-environment pair law to the separate one.

    The starting positions must be farther apart than twice the reveal
    radius, otherwise the regimes can differ from the first move onward
    and there is nothing to couple.
    """
    x = tuple(int(c) for c in start_x)
    y = tuple(int(c) for c in start_y)
    if len(x) != len(y) or not x:
        raise ValueError(
            "starting positions must be coordinate tuples of one dimension"
        )
    gap = sum(abs(a - b) for a, b in zip(x, y))
    if gap <= 2 * int(radius):
        raise ValueError(
            "starting positions must be farther apart than twice the "
            f"reveal radius, got distance {gap} with radius {radius}"
        )
    horizon = float(horizon)
    plan = _proximity_plan(
        x, y, density, speed, radius, horizon, seed,
        break_radius=2 * int(radius), stop_at_break=True,
    )
    out = run_env_walkers(plan, replica=0)
    break_time = float(out["tau_break"])
    if break_time > horizon:
        separate = simulate_walkers_separate_env(
            2, [x, y], density, speed, radius, horizon, seed
        )
        return SingleSeparateCoupling(
            break_time=math.inf,
            break_positions=None,
            break_knowledge=None,
            separate=separate,
            single_tail=None,
            horizon=horizon,
            seed=int(seed),
        )
    pre_time = math.nextafter(break_time, 0.0)
    plan_pre = replace(plan, horizon=pre_time, stop_at_break=False)
    out_pre = run_env_walkers(plan_pre, replica=0)
    per_walker, _ = _knowledge_from_run(plan_pre, out_pre)
    positions = tuple(
        _decode_position(plan_pre, out_pre["pos"][i]) for i in range(2)
    )
    shared = (
        (per_walker[0].open_set | per_walker[0].closed_set)
        & (per_walker[1].open_set | per_walker[1].closed_set)
    )
    if shared:
        raise RuntimeError(
            "revealed sets overlap before the break, which the break "
            f"radius is supposed to exclude: {sorted(shared)[:4]}"
        )
    separate = simulate_walkers_separate_env(
        2, [x, y], density, speed, radius, horizon, seed,
        snapshot_times=(pre_time, horizon),
    )
    top = lattice.InfiniteLattice(len(x))
    pins = (
        _initial_pins(top, _edge_bits(per_walker[0]), 0b01) or []
    ) + (
        _initial_pins(top, _edge_bits(per_walker[1]), 0b10) or []
    )
    tail, _ = _run_env_walk(
        top,
        list(positions),
        density,
        speed,
        radius,
        horizon - pre_time,
        derive_key(int(seed), [51]),
        envs=[0, 0],
        pins=pins,
    )
    return SingleSeparateCoupling(
        break_time=break_time,
        break_positions=positions,
        break_knowledge={0: per_walker[0], 1: per_walker[1]},
        separate=separate,
        single_tail=tail,
        horizon=horizon,
        seed=int(seed),
    )


def _edge_bits(knowledge: RevealedKnowledge) -> dict:
    bits = {edge: 1 for edge in knowledge.open_set}
    bits.update({edge: 0 for edge in knowledge.closed_set})
    return bits


def write_functional_report(estimate: FunctionalEstimate, functional,
                            params: Mapping, target, seed=None) -> dict:
    """Write one functional estimate as a canonical JSON line.

    ``params`` is a JSON-ready mapping describing the inputs.  The payload
    carries the point estimate, its interval, the sample count and the
    truncation horizon, so downstream comparisons need no rerun.  Returns
    the payload.
    """
    payload = {
        "functional": str(functional),
        "params": dict(params),
        "estimate": estimate.value,
        "ci_low": estimate.ci_low,
        "ci_high": estimate.ci_high,
        "exact": estimate.exact,
        "n_samples": estimate.n_samples,
        "horizon": estimate.horizon,
        "seed": seed,
    }
    fp, own = _open_for_write(target)
    try:
        fp.write(json.dumps(payload, sort_keys=True,
                            separators=(",", ":")) + "\n")
    finally:
        if own:
            fp.close()
    return payload
