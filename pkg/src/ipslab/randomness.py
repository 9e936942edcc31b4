"""Seed-deterministic Poisson event streams.

Every random draw in the package comes from a counter-based generator: a
64-bit key is folded from (master seed, stream kind, entity id parts...,
replica), and value number ``n`` of the stream is a SplitMix64-style
finalizer applied to ``key + (n+1)*PHI``.  Two consequences the rest of the
code relies on:

* streams are materialization-order independent: the n-th value of an edge's
  update stream is a pure function of the key and n, so it does not matter
  which other edges were touched first, and

* streams are extendable: regenerating with a longer horizon reproduces the
  shorter stream as a bit-identical prefix.

The counter layout is a frozen contract shared with the simulation kernels
(both the compiled and the pure-Python backend consume counters in exactly
this order):

* counter 0 is reserved for an initial value (Bernoulli initial opinion of a
  site, Bernoulli(p) initial state of an edge); streams that need no initial
  value simply never read it;
* event n (n = 1, 2, ...) reads its exponential gap from counter 2n-1 and
  its payload (displacement choice, refresh mark, neighbor choice) from
  counter 2n.

Floating-point note: uniforms and integer choices are pure integer
arithmetic and reproduce bit-for-bit everywhere; exponential gaps go through
``math.log1p``, which wraps the platform libm, so bit-identical replay is
guaranteed per platform (the same guarantee the compiled kernels give, since
they call the same libm).
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "StreamKind",
    "SeedScheme",
    "Stream",
    "InstructionManual",
    "EdgeUpdateStream",
    "manual_events",
    "edge_stream",
    "merged_queue",
    "splitmix_finalize",
    "derive_key",
    "fold_step",
    "zigzag",
    "uniform_from_bits",
    "integer_from_bits",
]

_MASK = 0xFFFFFFFFFFFFFFFF
PHI = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1E4357B7
_MIX_B = 0x94D049BB133111EB
_INV_2_53 = 1.0 / 9007199254740992.0  # 2^-53


def splitmix_finalize(z: int) -> int:
    """SplitMix64 finalizer: avalanche a 64-bit value."""
    z &= _MASK
    z ^= z >> 30
    z = (z * _MIX_A) & _MASK
    z ^= z >> 27
    z = (z * _MIX_B) & _MASK
    z ^= z >> 31
    return z


def fold_step(h: int, part: int) -> int:
    """Fold one key part into a running hash (order-sensitive)."""
    return splitmix_finalize(((h + PHI) & _MASK) ^ splitmix_finalize((part + PHI) & _MASK))


def derive_key(master_seed: int, parts: Sequence[int]) -> int:
    """Derive a substream key from the master seed and ordered integer parts."""
    h = splitmix_finalize((master_seed + PHI) & _MASK)
    for part in parts:
        h = fold_step(h, part & _MASK)
    return h


def zigzag(value: int) -> int:
    """Map a signed integer to an unsigned one (0,-1,1,-2,... -> 0,1,2,3,...)."""
    return (value << 1) if value >= 0 else ((-value << 1) - 1)


def uniform_from_bits(bits: int) -> float:
    """Uniform double in [0, 1) from 64 random bits (53-bit resolution)."""
    return (bits >> 11) * _INV_2_53


def integer_from_bits(bits: int, n: int) -> int:
    """Integer uniform on {0, ..., n-1} from 64 random bits.

    Fixed-point multiply on the top 53 bits; exact integer arithmetic, so the
    compiled kernels reproduce it without any float rounding concerns.
    """
    return ((bits >> 11) * n) >> 53


class StreamKind(IntEnum):
    """Stream-kind tags. The numeric values are part of the seed contract."""

    SITE = 1
    EDGE = 2
    WALKER = 3
    CHAIN = 4


class Stream:
    """A single substream: counter-addressed 64-bit values plus derived draws.

    Sequential use (``next_u64`` etc.) advances an internal counter; the
    counter-addressed accessors (``u64_at`` ...) do not touch it.
    """

    __slots__ = ("key", "counter")

    def __init__(self, key: int, counter: int = 0):
        self.key = key & _MASK
        self.counter = counter

    def u64_at(self, counter: int) -> int:
        return splitmix_finalize((self.key + ((counter + 1) * PHI)) & _MASK)

    def uniform_at(self, counter: int) -> float:
        return uniform_from_bits(self.u64_at(counter))

    def exponential_at(self, counter: int, rate: float) -> float:
        if rate <= 0.0:
            raise ValueError(f"exponential rate must be positive, got {rate}")
        return -math.log1p(-self.uniform_at(counter)) / rate

    def bernoulli_at(self, counter: int, p: float) -> bool:
        return self.uniform_at(counter) < p

    def integer_at(self, counter: int, n: int) -> int:
        return integer_from_bits(self.u64_at(counter), n)

    def next_u64(self) -> int:
        value = self.u64_at(self.counter)
        self.counter += 1
        return value

    def next_uniform(self) -> float:
        return uniform_from_bits(self.next_u64())

    def next_exponential(self, rate: float) -> float:
        if rate <= 0.0:
            raise ValueError(f"exponential rate must be positive, got {rate}")
        return -math.log1p(-self.next_uniform()) / rate

    def next_bernoulli(self, p: float) -> bool:
        return self.next_uniform() < p

    def next_integer(self, n: int) -> int:
        return integer_from_bits(self.next_u64(), n)


@dataclass(frozen=True)
class SeedScheme:
    """Immutable seed context mapping (kind, entity, replica) to substreams."""

    master_seed: int

    def key(self, kind: StreamKind, entity: Sequence[int], replica: int) -> int:
        parts = [int(kind)]
        parts.extend(int(p) for p in entity)
        parts.append(int(replica))
        return derive_key(self.master_seed, parts)

    def entity_prefix(self, kind: StreamKind, entity: Sequence[int]) -> int:
        """Key folded over everything except the replica index.

        The kernels fold the replica in themselves (one ``fold_step``), so a
        prefix can be computed once per entity and reused across replicas.
        """
        parts = [int(kind)]
        parts.extend(int(p) for p in entity)
        return derive_key(self.master_seed, parts)

    def stream(self, kind: StreamKind, entity: Sequence[int], replica: int = 0) -> Stream:
        return Stream(self.key(kind, entity, replica))


def vertex_entity_parts(coords: Sequence[int]) -> tuple:
    """Canonical entity id of a lattice-like vertex (zigzagged coordinates)."""
    return tuple(zigzag(int(c)) for c in coords)


def edge_entity_parts(axis: int, base_coords: Sequence[int], env: int = 0) -> tuple:
    """Canonical entity id of a lattice-like edge.

    The edge {x, x+e_axis} is identified by (environment index, axis, zigzag
    of the base endpoint x). The environment index distinguishes the two
    independent environments when walkers carry separate ones.
    """
    return (int(env), int(axis)) + tuple(zigzag(int(c)) for c in base_coords)


def label_entity_parts(label: Sequence[int]) -> tuple:
    """Canonical entity id of a tree vertex (length-prefixed path label)."""
    return (len(label),) + tuple(int(c) for c in label)


@dataclass(frozen=True)
class InstructionManual:
    """Attempt times and displacement marks for one walker.

    ``times`` are a rate-1 Poisson process on [0, horizon]; ``displacements``
    are i.i.d. uniform over the punctured L1 ball of the walker's range.
    """

    times: np.ndarray
    displacements: np.ndarray
    radius: int
    horizon: float
    rate: float = 1.0

    def __post_init__(self):
        if self.times.ndim != 1 or self.displacements.ndim != 2:
            raise ValueError("times must be 1-d and displacements 2-d")
        if len(self.times) != len(self.displacements):
            raise ValueError("times and displacements must have equal length")


@dataclass(frozen=True)
class EdgeUpdateStream:
    """Refresh times and Bernoulli(p) refresh marks for one edge.

    The mark is the state the edge takes at the refresh; refreshes to the
    current state are invisible, which is why the visible flip rates come out
    as speed*(1-density) for open->closed and speed*density for closed->open.
    """

    edge: object
    times: np.ndarray
    new_states: np.ndarray
    speed: float
    density: float
    horizon: float
    initial_state: int


def manual_events(
    scheme: SeedScheme,
    walker_id: int,
    radius: int,
    dim: int,
    horizon: float,
    replica: int = 0,
) -> InstructionManual:
    """Generate a walker's instruction manual up to ``horizon``.

    Extending the horizon reproduces the shorter manual as a bit-identical
    prefix, because event n always reads counters 2n-1 and 2n of the walker's
    substream.
    """
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    from . import lattice  # local import; lattice is dependency-free

    marks = lattice.punctured_ball_offsets(dim, radius)
    n_marks = len(marks)
    stream = Stream(scheme.key(StreamKind.WALKER, (int(walker_id),), replica))
    times = []
    picks = []
    t = 0.0
    n = 1
    while True:
        t += stream.exponential_at(2 * n - 1, 1.0)
        if t > horizon:
            break
        times.append(t)
        picks.append(stream.integer_at(2 * n, n_marks))
        n += 1
    disp = np.array([marks[i] for i in picks], dtype=np.int64).reshape(len(picks), dim)
    return InstructionManual(
        times=np.array(times, dtype=np.float64),
        displacements=disp,
        radius=radius,
        horizon=float(horizon),
    )


def edge_stream(
    scheme: SeedScheme,
    edge_parts: Sequence[int],
    density: float,
    speed: float,
    horizon: float,
    replica: int = 0,
) -> EdgeUpdateStream:
    """Generate one edge's refresh stream up to ``horizon``.

    ``edge_parts`` is the canonical entity id (see ``edge_entity_parts``).
    Counter 0 carries the stationary initial state Bernoulli(density);
    refresh n reads its gap from counter 2n-1 and its mark from counter 2n.
    """
    if not 0.0 <= density <= 1.0:
        raise ValueError(f"density must lie in [0,1], got {density}")
    if speed <= 0:
        raise ValueError(f"speed must be positive, got {speed}")
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    stream = Stream(scheme.key(StreamKind.EDGE, edge_parts, replica))
    initial_state = int(stream.bernoulli_at(0, density))
    times = []
    states = []
    t = 0.0
    n = 1
    while True:
        t += stream.exponential_at(2 * n - 1, speed)
        if t > horizon:
            break
        times.append(t)
        states.append(int(stream.bernoulli_at(2 * n, density)))
        n += 1
    return EdgeUpdateStream(
        edge=tuple(edge_parts),
        times=np.array(times, dtype=np.float64),
        new_states=np.array(states, dtype=np.uint8),
        speed=float(speed),
        density=float(density),
        horizon=float(horizon),
        initial_state=initial_state,
    )


def merged_queue(*streams) -> Iterator[tuple]:
    """Merge labelled event streams into one time-ordered iterator.

    Each stream is a triple ``(kind_tag, entity_id, events)`` where events is
    an iterable of ``(time, payload)``. Yields ``(time, kind_tag, entity_id,
    payload)`` tuples, ties broken by (time, kind tag, entity id); exact float
    ties have probability zero in law but the order is still deterministic.
    """

    def labelled(kind_tag, entity_id, events) -> Iterator[tuple]:
        for time, payload in events:
            yield (time, kind_tag, entity_id, payload)

    iters = [labelled(k, e, ev) for (k, e, ev) in streams]
    return heapq.merge(*iters, key=lambda item: (item[0], item[1], item[2]))
