"""Exact finite-chain oracles via uniformization.

Everything here is built straight from the model definitions with dense
generator matrices and is deliberately independent of the simulation
kernels: the Monte Carlo machinery is validated against these numbers, never
the other way round.  State spaces are capped (default 4096 states); larger
systems must be handled statistically.

Uniformization computes exp(Qt) action on a distribution through the
Poissonized jump chain, truncating the Poisson series once its remaining
mass drops below ``rel_tol``; the result then carries a total-variation
error of at most rel_tol plus float noise, comfortably inside the 1e-8
tolerance the exact duality checks assert.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np
from scipy import stats as _sps

from . import lattice

__all__ = [
    "FiniteChain",
    "OracleSizeError",
    "build_chain",
    "distribution",
    "expectation",
    "probability",
    "voter_transition_fn",
    "stirring_transition_fn",
    "vmdyn_transition_fn",
    "coalescing_transition_fn",
    "stirring_set_transition_fn",
    "dual_chain_transition_fn",
    "exact_voter_duality",
    "exact_stirring_duality",
    "exact_vmdyn_duality",
    "MAX_ORACLE_STATES",
]

MAX_ORACLE_STATES = 4096


class OracleSizeError(ValueError):
    """Raised when a state-space closure exceeds the oracle cap."""


@dataclass(frozen=True)
class FiniteChain:
    """A finite-state CTMC: states in discovery order plus its generator."""

    states: tuple
    index: Mapping[Hashable, int]
    generator: np.ndarray

    def __len__(self) -> int:
        return len(self.states)


def build_chain(
    seeds: Iterable[Hashable],
    transition_fn: Callable[[Hashable], Iterable[tuple]],
    max_states: int = MAX_ORACLE_STATES,
) -> FiniteChain:
    """Close a set of seed states under a transition function.

    ``transition_fn(state)`` yields ``(rate, new_state)`` pairs; transitions
    back to the same state are ignored (they are invisible to a CTMC
    generator), parallel transitions to one target accumulate.
    """
    states: list = []
    index: dict = {}
    edges: list = []
    frontier: list = []
    for s in seeds:
        if s not in index:
            index[s] = len(states)
            states.append(s)
            frontier.append(s)
    while frontier:
        s = frontier.pop()
        i = index[s]
        for rate, t in transition_fn(s):
            if rate < 0:
                raise ValueError(f"negative rate {rate} out of state {s!r}")
            if rate == 0 or t == s:
                continue
            j = index.get(t)
            if j is None:
                if len(states) >= max_states:
                    raise OracleSizeError(
                        f"state space exceeds the oracle cap of {max_states} states"
                    )
                j = len(states)
                index[t] = j
                states.append(t)
                frontier.append(t)
            edges.append((i, j, rate))
    n = len(states)
    generator = np.zeros((n, n), dtype=np.float64)
    for i, j, rate in edges:
        generator[i, j] += rate
    np.fill_diagonal(generator, 0.0)
    np.fill_diagonal(generator, -generator.sum(axis=1))
    return FiniteChain(states=tuple(states), index=index, generator=generator)


def distribution(
    chain: FiniteChain,
    start,
    t: float,
    rel_tol: float = 1e-10,
) -> np.ndarray:
    """Distribution at time t from a start state (or a distribution dict)."""
    n = len(chain)
    p0 = np.zeros(n)
    if isinstance(start, dict):
        for s, w in start.items():
            p0[chain.index[s]] = w
        if not math.isclose(p0.sum(), 1.0, rel_tol=1e-9):
            raise ValueError("start distribution does not sum to one")
    else:
        p0[chain.index[start]] = 1.0
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    if t == 0:
        return p0
    rate_cap = float(np.max(-np.diag(chain.generator)))
    if rate_cap == 0.0:
        return p0
    q = rate_cap * t
    jump = np.eye(n) + chain.generator / rate_cap
    kmax = int(_sps.poisson.ppf(1.0 - rel_tol, q)) + 2
    weights = _sps.poisson.pmf(np.arange(kmax + 1), q)
    out = weights[0] * p0
    v = p0
    for k in range(1, kmax + 1):
        v = v @ jump
        out = out + weights[k] * v
    return out


def probability(chain: FiniteChain, dist: np.ndarray, predicate) -> float:
    """Total mass of states satisfying a predicate."""
    return float(sum(w for s, w in zip(chain.states, dist) if predicate(s)))


def expectation(chain: FiniteChain, dist: np.ndarray, f) -> float:
    return float(sum(w * f(s) for s, w in zip(chain.states, dist)))


# ---------------------------------------------------------------------------
# Forward processes. Site configurations are tuples over lattice.vertices
# order; edge configurations are tuples over lattice.edges order.
# ---------------------------------------------------------------------------


def voter_transition_fn(top) -> Callable:
    """Voter model: site x copies a uniform neighbor's opinion at rate 1."""
    verts = lattice.vertices(top)
    nbrs = {v: lattice.neighbors(top, v) for v in verts}
    pos = {v: i for i, v in enumerate(verts)}

    def fn(eta):
        out = []
        for x in verts:
            deg = len(nbrs[x])
            for y in nbrs[x]:
                if eta[pos[y]] != eta[pos[x]]:
                    new = list(eta)
                    new[pos[x]] = eta[pos[y]]
                    out.append((1.0 / deg, tuple(new)))
        return out

    return fn


def stirring_transition_fn(top, speed: float) -> Callable:
    """Voter copies at rate 1 plus opinion swaps at rate speed/d per edge."""
    d = lattice.regular_degree(top)
    verts = lattice.vertices(top)
    edge_list = lattice.edges(top)
    pos = {v: i for i, v in enumerate(verts)}
    voter = voter_transition_fn(top)

    def fn(eta):
        out = list(voter(eta))
        for u, v in edge_list:
            if eta[pos[u]] != eta[pos[v]]:
                new = list(eta)
                new[pos[u]], new[pos[v]] = new[pos[v]], new[pos[u]]
                out.append((speed / d, tuple(new)))
        return out

    return fn


def _marks(top, x, radius: int) -> list:
    return [y for y in lattice.attempt_ball(top, x, radius) if y != x]


def vmdyn_transition_fn(top, radius: int, density: float, speed: float) -> Callable:
    """Joint (opinions, environment) generator of the voter model on
    dynamical percolation: range-``radius`` copy attempts succeed only when
    source and target are connected by open edges inside the attempt ball;
    every edge refreshes at rate ``speed`` to open with probability
    ``density``.

    States are pairs (eta, zeta) of site and edge configurations.
    """
    verts = lattice.vertices(top)
    edge_list = lattice.edges(top)
    pos = {v: i for i, v in enumerate(verts)}
    epos = {e: i for i, e in enumerate(edge_list)}
    marks_of = {x: _marks(top, x, radius) for x in verts}

    def fn(state):
        eta, zeta = state
        zmap = {e: zeta[epos[e]] for e in edge_list}
        out = []
        for x in verts:
            marks = marks_of[x]
            for y in marks:
                if eta[pos[y]] == eta[pos[x]]:
                    continue
                if lattice.connected_in_ball(zmap, top, x, y, radius):
                    new = list(eta)
                    new[pos[x]] = eta[pos[y]]
                    out.append((1.0 / len(marks), (tuple(new), zeta)))
        for e in edge_list:
            i = epos[e]
            if zeta[i] == 0:
                new = list(zeta)
                new[i] = 1
                out.append((speed * density, (eta, tuple(new))))
            else:
                new = list(zeta)
                new[i] = 0
                out.append((speed * (1.0 - density), (eta, tuple(new))))
        return out

    return fn


# ---------------------------------------------------------------------------
# Dual walker systems. Set-valued states are frozensets of vertices.
# ---------------------------------------------------------------------------


def coalescing_transition_fn(top) -> Callable:
    """Coalescing random walks: each walker jumps at rate 1 to a uniform
    neighbor; landing on an occupied site merges the two walkers."""

    def fn(A):
        out = []
        for x in A:
            nbrs = lattice.neighbors(top, x)
            for y in nbrs:
                out.append((1.0 / len(nbrs), frozenset(A - {x} | {y})))
        return out

    return fn


def stirring_set_transition_fn(top, speed: float) -> Callable:
    """Coalescing-stirring set walkers: jump to a vacant neighbor at rate
    (speed+1)/d, get removed at rate 1/d per occupied neighbor."""
    d = lattice.regular_degree(top)

    def fn(A):
        out = []
        for x in A:
            for y in lattice.neighbors(top, x):
                if y in A:
                    out.append((1.0 / d, frozenset(A - {x})))
                else:
                    out.append(((speed + 1.0) / d, frozenset(A - {x} | {y})))
        return out

    return fn


def dual_chain_transition_fn(top, radius: int, density: float, speed: float) -> Callable:
    """The dual chain (C, E, F) of the voter model on dynamical percolation.

    C is the walker set, E the revealed-open and F the revealed-closed edge
    set.  Revealed edges refresh (and are forgotten) at rate ``speed``; a
    walker attempt at x with a uniform mark y reveals the whole attempt ball
    E1(x, radius) with Bernoulli(density) weights over the not-yet-revealed
    edges and moves x to y exactly when the revealed configuration connects
    them inside the ball.

    States are triples (C, E, F) of frozensets with E and F disjoint.
    """
    if not 0.0 < density < 1.0:
        raise ValueError(
            f"dual chain weights need density strictly inside (0,1), got {density}"
        )

    def fn(state):
        C, E, F = state
        out = []
        for e in E:
            out.append((speed, (C, E - {e}, F)))
        for e in F:
            out.append((speed, (C, E, F - {e})))
        for x in C:
            marks = _marks(top, x, radius)
            bedges = lattice.ball_edges(top, x, radius)
            unrevealed = [e for e in bedges if e not in E and e not in F]
            for y in marks:
                for opens in itertools.chain.from_iterable(
                    itertools.combinations(unrevealed, k)
                    for k in range(len(unrevealed) + 1)
                ):
                    open_set = set(opens)
                    weight = density ** len(open_set) * (1.0 - density) ** (
                        len(unrevealed) - len(open_set)
                    )
                    zmap = {
                        e: 1 if (e in E or e in open_set) else 0 for e in bedges
                    }
                    connected = lattice.connected_in_ball(zmap, top, x, y, radius)
                    newE = frozenset(E | open_set)
                    newF = frozenset(F | (set(unrevealed) - open_set))
                    newC = frozenset(C - {x} | {y}) if connected else C
                    out.append((weight / len(marks), (newC, newE, newF)))
        return out

    return fn


# ---------------------------------------------------------------------------
# Exact duality identities.
# ---------------------------------------------------------------------------


def _ones_on(eta, verts_index, A) -> bool:
    return all(eta[verts_index[x]] == 1 for x in A)


def exact_voter_duality(top, eta0, A, t: float) -> tuple:
    """Both sides of the voter duality, each to oracle precision.

    lhs = P(eta_t is all-ones on A) starting from eta0,
    rhs = P(eta0 is all-ones on A_t) for coalescing walkers started from A.
    """
    verts = lattice.vertices(top)
    vidx = {v: i for i, v in enumerate(verts)}
    A = frozenset(A)
    fwd = build_chain([tuple(eta0)], voter_transition_fn(top))
    lhs = probability(fwd, distribution(fwd, tuple(eta0), t), lambda s: _ones_on(s, vidx, A))
    if not A:
        return lhs, 1.0
    dual = build_chain([A], coalescing_transition_fn(top))
    rhs = probability(
        dual, distribution(dual, A, t), lambda S: _ones_on(tuple(eta0), vidx, S)
    )
    return lhs, rhs


def exact_stirring_duality(top, xi0, A, speed: float, t: float) -> tuple:
    """Both sides of the stirring-voter duality (set-walker dual)."""
    verts = lattice.vertices(top)
    vidx = {v: i for i, v in enumerate(verts)}
    A = frozenset(A)
    fwd = build_chain([tuple(xi0)], stirring_transition_fn(top, speed))
    lhs = probability(fwd, distribution(fwd, tuple(xi0), t), lambda s: _ones_on(s, vidx, A))
    if not A:
        return lhs, 1.0
    dual = build_chain([A], stirring_set_transition_fn(top, speed))
    rhs = probability(
        dual, distribution(dual, A, t), lambda S: _ones_on(tuple(xi0), vidx, S)
    )
    return lhs, rhs


def exact_vmdyn_duality(
    top,
    radius: int,
    density: float,
    speed: float,
    eta0,
    zeta0,
    C,
    E,
    F,
    t: float,
) -> tuple:
    """Both sides of the weighted duality for the voter model on dynamical
    percolation, for a fixed initial pair (eta0, zeta0).

    lhs = P(eta_t all-ones on C, zeta_t open on E and closed on F);
    rhs = density^|E| (1-density)^|F| times the dual-chain expectation of
    density^-|A_t| (1-density)^-|B_t| phi(C_t, eta0) psi(A_t, B_t, zeta0).
    """
    if not 0.0 < density < 1.0:
        raise ValueError(
            "the weighted duality degenerates at density 0 or 1; "
            "handle those boundary cases separately"
        )
    verts = lattice.vertices(top)
    edge_list = lattice.edges(top)
    vidx = {v: i for i, v in enumerate(verts)}
    eidx = {e: i for i, e in enumerate(edge_list)}
    C, E, F = frozenset(C), frozenset(map(tuple, E)), frozenset(map(tuple, F))
    if E & F:
        raise ValueError(f"revealed sets must be disjoint, got overlap {E & F}")

    fwd = build_chain(
        [(tuple(eta0), tuple(zeta0))], vmdyn_transition_fn(top, radius, density, speed)
    )

    def lhs_event(state) -> bool:
        eta, zeta = state
        return (
            all(eta[vidx[x]] == 1 for x in C)
            and all(zeta[eidx[e]] == 1 for e in E)
            and all(zeta[eidx[e]] == 0 for e in F)
        )

    lhs = probability(
        fwd, distribution(fwd, (tuple(eta0), tuple(zeta0)), t), lhs_event
    )

    dual = build_chain(
        [(C, E, F)], dual_chain_transition_fn(top, radius, density, speed)
    )

    def weight(state) -> float:
        Ct, At, Bt = state
        if not all(eta0[vidx[x]] == 1 for x in Ct):
            return 0.0
        if not all(zeta0[eidx[e]] == 1 for e in At):
            return 0.0
        if not all(zeta0[eidx[e]] == 0 for e in Bt):
            return 0.0
        return density ** (-len(At)) * (1.0 - density) ** (-len(Bt))

    prefactor = density ** len(E) * (1.0 - density) ** len(F)
    rhs = prefactor * expectation(dual, distribution(dual, (C, E, F), t), weight)
    return lhs, rhs
