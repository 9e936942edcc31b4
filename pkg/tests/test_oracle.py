"""Exact-oracle tests.

The uniformization engine is checked against closed forms and scipy's expm;
the model generators are checked against hand-derived marginals and, most
importantly, against each other through the exact duality identities on
small graphs.  These identities are the anchor for every Monte Carlo test
in the suite, so they get the tightest tolerances here.
"""

import math
import random

import numpy as np
import pytest
from scipy.linalg import expm

from ipslab import lattice, oracle

C3 = lattice.Torus(dim=1, side=3)
C4 = lattice.Torus(dim=1, side=4)
P3 = lattice.RegularTree(degree=2, depth=1)


def p3_vertices():
    return lattice.vertices(P3)


class TestUniformization:
    def test_two_state_closed_form(self):
        # rate a up, rate b down: P(state 1 at t) has the textbook form.
        a, b = 0.7, 1.9
        chain = oracle.build_chain(
            [0], lambda s: [(a, 1)] if s == 0 else [(b, 0)]
        )
        for t in (0.0, 0.3, 2.0, 17.0):
            dist = oracle.distribution(chain, 0, t)
            expected = a / (a + b) * (1.0 - math.exp(-(a + b) * t))
            # the Poisson series is truncated at relative mass 1e-10
            assert abs(dist[chain.index[1]] - expected) < 1e-9

    def test_matches_expm_on_voter_chain(self):
        chain = oracle.build_chain([(1, 0, 0)], oracle.voter_transition_fn(C3))
        t = 0.8
        p0 = np.zeros(len(chain))
        p0[chain.index[(1, 0, 0)]] = 1.0
        dense = p0 @ expm(chain.generator * t)
        ours = oracle.distribution(chain, (1, 0, 0), t)
        assert np.max(np.abs(dense - ours)) < 1e-10

    def test_matches_expm_on_dual_chain(self):
        fn = oracle.dual_chain_transition_fn(P3, radius=1, density=0.4, speed=1.0)
        start = (frozenset({()}), frozenset(), frozenset())
        chain = oracle.build_chain([start], fn)
        t = 0.6
        p0 = np.zeros(len(chain))
        p0[chain.index[start]] = 1.0
        dense = p0 @ expm(chain.generator * t)
        ours = oracle.distribution(chain, start, t)
        assert np.max(np.abs(dense - ours)) < 1e-10

    def test_time_zero_is_dirac(self):
        chain = oracle.build_chain([(0, 0, 1)], oracle.voter_transition_fn(C3))
        dist = oracle.distribution(chain, (0, 0, 1), 0.0)
        assert dist[chain.index[(0, 0, 1)]] == 1.0
        assert dist.sum() == 1.0

    def test_absorbing_chain_stays_put(self):
        chain = oracle.build_chain([(1, 1, 1)], oracle.voter_transition_fn(C3))
        assert len(chain) == 1
        dist = oracle.distribution(chain, (1, 1, 1), 5.0)
        assert dist[0] == 1.0

    def test_distribution_mass_is_preserved(self):
        fn = oracle.stirring_transition_fn(C4, speed=2.0)
        chain = oracle.build_chain([(1, 0, 1, 0)], fn)
        dist = oracle.distribution(chain, (1, 0, 1, 0), 3.0)
        assert abs(dist.sum() - 1.0) < 1e-9
        assert np.all(dist >= -1e-15)

    def test_mixture_start(self):
        chain = oracle.build_chain(
            [(1, 0, 0), (0, 1, 0)], oracle.voter_transition_fn(C3)
        )
        mix = {(1, 0, 0): 0.25, (0, 1, 0): 0.75}
        got = oracle.distribution(chain, mix, 0.5)
        want = 0.25 * oracle.distribution(chain, (1, 0, 0), 0.5)
        want = want + 0.75 * oracle.distribution(chain, (0, 1, 0), 0.5)
        assert np.max(np.abs(got - want)) < 1e-12

    def test_state_cap_enforced(self):
        with pytest.raises(oracle.OracleSizeError):
            oracle.build_chain(
                [(1, 0, 0)], oracle.voter_transition_fn(C3), max_states=3
            )

    def test_negative_time_rejected(self):
        chain = oracle.build_chain([(1, 1, 1)], oracle.voter_transition_fn(C3))
        with pytest.raises(ValueError):
            oracle.distribution(chain, (1, 1, 1), -0.1)


class TestGeneratorMarginals:
    def test_voter_preserves_site_marginals(self):
        # From a product-Bernoulli start every site marginal stays alpha.
        alpha = 0.3
        verts = lattice.vertices(C3)
        states = [tuple(bits) for bits in np.ndindex(2, 2, 2)]
        start = {
            s: math.prod(alpha if b else 1 - alpha for b in s) for s in states
        }
        chain = oracle.build_chain(states, oracle.voter_transition_fn(C3))
        dist = oracle.distribution(chain, start, 1.3)
        for i, _ in enumerate(verts):
            marginal = oracle.expectation(chain, dist, lambda s, i=i: s[i])
            assert abs(marginal - alpha) < 1e-9

    def test_stirring_at_zero_speed_matches_voter(self):
        xi0 = (1, 1, 0, 0)
        a = oracle.build_chain([xi0], oracle.voter_transition_fn(C4))
        b = oracle.build_chain([xi0], oracle.stirring_transition_fn(C4, 0.0))
        assert set(a.states) == set(b.states)
        da = oracle.distribution(a, xi0, 1.1)
        db = oracle.distribution(b, xi0, 1.1)
        for s in a.states:
            assert abs(da[a.index[s]] - db[b.index[s]]) < 1e-12

    def test_env_edge_marginal_closed_form(self):
        # Each edge refreshes independently: the open-marginal relaxes to the
        # density exponentially at the refresh rate.
        density, speed, t = 0.35, 1.7, 0.9
        fn = oracle.vmdyn_transition_fn(C3, radius=1, density=density, speed=speed)
        eta0 = (1, 0, 1)
        zeta0 = (1, 0, 0)
        chain = oracle.build_chain([(eta0, zeta0)], fn)
        dist = oracle.distribution(chain, (eta0, zeta0), t)
        for j, z0 in enumerate(zeta0):
            got = oracle.expectation(chain, dist, lambda s, j=j: s[1][j])
            want = density + (z0 - density) * math.exp(-speed * t)
            assert abs(got - want) < 1e-9

    def test_vmdyn_preserves_site_marginals(self):
        # Conditioned on any environment path the opinions follow a linear
        # copy dynamic, so product-Bernoulli opinion marginals stay put.
        alpha, density, speed = 0.6, 0.5, 1.0
        fn = oracle.vmdyn_transition_fn(P3, radius=1, density=density, speed=speed)
        zeta0 = (0, 1)
        etas = [tuple(bits) for bits in np.ndindex(2, 2, 2)]
        start = {
            (eta, zeta0): math.prod(alpha if b else 1 - alpha for b in eta)
            for eta in etas
        }
        chain = oracle.build_chain(list(start), fn)
        dist = oracle.distribution(chain, start, 0.8)
        for i in range(3):
            marginal = oracle.expectation(chain, dist, lambda s, i=i: s[0][i])
            assert abs(marginal - alpha) < 1e-9


class TestDualChains:
    def test_coalescing_pair_on_small_ring_absorbs(self):
        fn = oracle.coalescing_transition_fn(C3)
        start = frozenset({(0,), (1,)})
        chain = oracle.build_chain([start], fn)
        dist = oracle.distribution(chain, start, 50.0)
        merged = oracle.probability(chain, dist, lambda S: len(S) == 1)
        assert merged >= 0.999

    def test_stirring_set_at_zero_speed_is_coalescing_in_law(self):
        # With no stirring the set chain must have the coalescing-walk
        # one-particle law; for a singleton the two chains coincide exactly.
        start = frozenset({(0,)})
        a = oracle.build_chain([start], oracle.coalescing_transition_fn(C4))
        b = oracle.build_chain([start], oracle.stirring_set_transition_fn(C4, 0.0))
        assert set(a.states) == set(b.states)
        da = oracle.distribution(a, start, 2.0)
        db = oracle.distribution(b, start, 2.0)
        for s in a.states:
            assert abs(da[a.index[s]] - db[b.index[s]]) < 1e-12

    def test_stirring_set_shrinks_but_never_dies(self):
        # removal needs an occupied neighbor, so a nonempty set keeps at
        # least one walker forever; a pair does lose walkers though.
        fn = oracle.stirring_set_transition_fn(C3, speed=0.5)
        start = frozenset({(0,), (1,)})
        chain = oracle.build_chain([start], fn)
        assert all(len(S) >= 1 for S in chain.states)
        dist = oracle.distribution(chain, start, 10.0)
        shrunk = oracle.probability(chain, dist, lambda S: len(S) == 1)
        assert shrunk > 0.5

    def test_dual_chain_singleton_walker_never_branches(self):
        fn = oracle.dual_chain_transition_fn(C3, radius=1, density=0.5, speed=1.0)
        start = (frozenset({(0,)}), frozenset(), frozenset())
        chain = oracle.build_chain([start], fn)
        assert all(len(s[0]) == 1 for s in chain.states)
        # revealed-open and revealed-closed sets stay disjoint
        assert all(not (s[1] & s[2]) for s in chain.states)

    def test_dual_chain_rejects_degenerate_density(self):
        with pytest.raises(ValueError):
            oracle.dual_chain_transition_fn(C3, radius=1, density=0.0, speed=1.0)
        with pytest.raises(ValueError):
            oracle.dual_chain_transition_fn(C3, radius=1, density=1.0, speed=1.0)


class TestExactDuality:
    def test_voter_duality_on_small_ring(self):
        rng = random.Random(20240817)
        for _ in range(5):
            eta0 = tuple(rng.randint(0, 1) for _ in range(3))
            A = frozenset(
                v for v in lattice.vertices(C3) if rng.random() < 0.6
            ) or frozenset({(0,)})
            t = rng.uniform(0.0, 1.0)
            lhs, rhs = oracle.exact_voter_duality(C3, eta0, A, t)
            assert abs(lhs - rhs) <= 1e-10

    def test_voter_duality_empty_target_set(self):
        lhs, rhs = oracle.exact_voter_duality(C3, (0, 1, 0), frozenset(), 0.5)
        assert abs(lhs - 1.0) < 1e-9
        assert rhs == 1.0

    @pytest.mark.parametrize("speed", [0.5, 2.0])
    @pytest.mark.parametrize("top", [C3, C4], ids=["ring3", "ring4"])
    def test_stirring_duality(self, top, speed):
        rng = random.Random(hash((top.side, speed)) & 0xFFFF)
        n = top.side
        for _ in range(3):
            xi0 = tuple(rng.randint(0, 1) for _ in range(n))
            A = frozenset(
                v for v in lattice.vertices(top) if rng.random() < 0.5
            ) or frozenset({(1,)})
            t = rng.uniform(0.1, 1.0)
            lhs, rhs = oracle.exact_stirring_duality(top, xi0, A, speed, t)
            assert abs(lhs - rhs) <= 1e-9

    @pytest.mark.parametrize("density", [0.3, 0.6])
    def test_vmdyn_duality_on_path(self, density):
        rng = random.Random(7_001 + int(density * 10))
        verts = p3_vertices()
        edge_list = lattice.edges(P3)
        for _ in range(3):
            eta0 = tuple(rng.randint(0, 1) for _ in verts)
            zeta0 = tuple(rng.randint(0, 1) for _ in edge_list)
            C = frozenset(v for v in verts if rng.random() < 0.5) or frozenset(
                {verts[0]}
            )
            revealed = [e for e in edge_list if rng.random() < 0.5]
            split = rng.randint(0, len(revealed))
            E = frozenset(revealed[:split])
            F = frozenset(revealed[split:])
            t = rng.uniform(0.1, 1.0)
            lhs, rhs = oracle.exact_vmdyn_duality(
                P3, 1, density, 1.0, eta0, zeta0, C, E, F, t
            )
            assert abs(lhs - rhs) <= 1e-8

    def test_vmdyn_duality_on_small_ring_whole_graph_ball(self):
        # radius 1 on the 3-ring flattens the attempt ball onto the whole
        # graph, which exercises the wrap-around ball edges.
        eta0, zeta0 = (1, 0, 1), (0, 1, 1)
        C = frozenset({(0,), (2,)})
        E = frozenset({((1,), (2,))})
        F = frozenset()
        lhs, rhs = oracle.exact_vmdyn_duality(
            C3, 1, 0.45, 1.0, eta0, zeta0, C, E, F, 0.7
        )
        assert abs(lhs - rhs) <= 1e-8

    def test_vmdyn_duality_rejects_overlapping_reveals(self):
        e = lattice.edges(P3)[0]
        with pytest.raises(ValueError):
            oracle.exact_vmdyn_duality(
                P3, 1, 0.4, 1.0, (1, 1, 1), (1, 1), frozenset({()}),
                frozenset({e}), frozenset({e}), 0.5
            )

    def test_vmdyn_duality_rejects_degenerate_density(self):
        with pytest.raises(ValueError):
            oracle.exact_vmdyn_duality(
                P3, 1, 0.0, 1.0, (1, 1, 1), (1, 1), frozenset({()}),
                frozenset(), frozenset(), 0.5
            )
