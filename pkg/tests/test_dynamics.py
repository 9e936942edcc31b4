"""Forward-simulation layer: laws, invariants, snapshots, exports."""

import io
import json
import math

import numpy as np
import pytest

from ipslab import dynamics, lattice, oracle
from ipslab.dynamics import (
    EdgeConfig,
    JointState,
    SiteConfig,
    consensus_time,
    simulate_dynperc,
    simulate_stirring,
    simulate_vmdyn,
    simulate_voter,
)
from ipslab._kernels import run_forward, tables
from ipslab.randomness import SeedScheme
from ipslab.stats import chi_square_gof


def _chi_square_states(counts, chain, dist, n):
    observed = [counts.get(s, 0) for s in chain.states]
    assert n - sum(observed) == 0, "saw outcomes outside the oracle state space"
    _, _, p_value = chi_square_gof(observed, [n * p for p in dist])
    return p_value

C3 = lattice.Torus(1, 3)
C4 = lattice.Torus(1, 4)
C5 = lattice.Torus(1, 5)
C6 = lattice.Torus(1, 6)
C9 = lattice.Torus(1, 9)

P_FLOOR = 1e-3


class TestValidation:
    def test_infinite_topology_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            simulate_voter(lattice.InfiniteLattice(2), 0.5, 1, 1.0, 1)

    def test_nonpositive_horizon_rejected(self):
        for bad in (0.0, -2.0):
            with pytest.raises(ValueError, match="horizon"):
                simulate_voter(C4, [1, 0, 0, 0], 1, bad, 1)

    def test_stirring_needs_regular_topology(self):
        tree = lattice.RegularTree(3, depth=2)
        with pytest.raises(ValueError, match="regular"):
            simulate_stirring(tree, 0.5, 1.0, 1.0, 1)

    def test_dynperc_parameter_ranges(self):
        with pytest.raises(ValueError, match="density"):
            simulate_dynperc(C4, None, 1.5, 1.0, 1.0, 1)
        with pytest.raises(ValueError, match="speed"):
            simulate_dynperc(C4, None, 0.5, 0.0, 1.0, 1)

    def test_ball_geometry_constraint_on_torus(self):
        with pytest.raises(ValueError, match="ball geometry"):
            simulate_vmdyn(C5, 0.5, None, 0.5, 1.0, 2, 1.0, 1)
        with pytest.raises(ValueError, match="ball geometry"):
            simulate_voter(C3, 0.5, 2, 1.0, 1)

    def test_snapshot_grid_checks(self):
        with pytest.raises(ValueError, match="snapshot"):
            simulate_voter(C4, 0.5, 1, 1.0, 1, snapshot_times=[0.5, 2.0])
        with pytest.raises(ValueError, match="distinct"):
            simulate_voter(C4, 0.5, 1, 1.0, 1, snapshot_times=[0.5, 0.5])

    def test_bad_opinion_values_rejected(self):
        with pytest.raises(ValueError, match="0 or 1"):
            simulate_voter(C4, [2, 0, 0, 0], 1, 1.0, 1)


class TestConsensus:
    def test_constant_start_is_absorbing_and_time_zero(self):
        tr = simulate_voter(C4, [1, 1, 1, 1], 1, 6.0, 11, snapshot_times=[1.0, 6.0])
        assert all(s.ones_count() == 4 for s in tr.states)
        assert consensus_time(tr) == 0.0

    def test_vmdyn_consensus_absorbing_under_edge_churn(self):
        tr = simulate_vmdyn(C4, [0, 0, 0, 0], None, 0.5, 2.0, 1, 5.0, 3,
                            snapshot_times=[2.5, 5.0])
        assert all(st.sites.ones_count() == 0 for st in tr.states)
        assert tr.consensus == 0.0

    def test_single_flip_absorbs_like_exact_chain(self):
        # Consensus is absorbing, so {consensus by T} = {constant at T}; the
        # eight-state chain gives the exact probability of the latter.
        t_end = 10.0
        chain = oracle.build_chain([(1, 0, 0)], oracle.voter_transition_fn(C3))
        dist = oracle.distribution(chain, (1, 0, 0), t_end)
        p_abs = oracle.probability(chain, dist, lambda st: len(set(st)) == 1)
        n = 4000
        hits = 0
        for seed in range(n):
            tr = simulate_voter(C3, [1, 0, 0], 1, t_end, seed)
            hits += tr.consensus <= t_end
        se = math.sqrt(p_abs * (1 - p_abs) / n)
        assert abs(hits / n - p_abs) <= 4 * se

    def test_consensus_rejected_for_edge_trajectories(self):
        tr = simulate_dynperc(C4, None, 0.5, 1.0, 1.0, 1)
        with pytest.raises(ValueError, match="consensus"):
            consensus_time(tr)

    def test_mean_consensus_time_grows_with_cycle_length(self):
        means = []
        for side in (5, 9, 13):
            top = lattice.Torus(1, side)
            vals = []
            for seed in range(60):
                tr = simulate_voter(top, 0.5, 1, 5000.0, 90_000 + seed)
                if tr.consensus < math.inf:
                    vals.append(tr.consensus)
            assert len(vals) >= 58
            means.append(float(np.mean(vals)))
        assert means[0] < means[1] < means[2]

    def test_stirring_absorbs_with_and_without_swaps(self):
        for speed in (0.0, 4.0):
            for seed in range(25):
                tr = simulate_stirring(C9, 0.5, speed, 1000.0, 7_700 + seed)
                assert tr.consensus < math.inf


class TestVoterLaw:
    def test_one_site_marginal_of_product_start_stays_at_density(self):
        # Dual single walker: the one-site marginal is alpha at every time.
        alpha = 0.35
        t_end = 1.2
        n = 3000
        total = 0
        for seed in range(n):
            tr = simulate_voter(C4, alpha, 1, t_end, 40_000 + seed)
            total += int(tr.states[-1].values[1])
        se = math.sqrt(alpha * (1 - alpha) / n)
        assert abs(total / n - alpha) <= 3.5 * se

    def test_stirring_at_speed_zero_is_the_voter_model_bitwise(self):
        for seed in (5, 21):
            tv = simulate_voter(C6, [1, 0, 1, 0, 0, 1], 1, 3.0, seed,
                                snapshot_times=[1.0, 3.0])
            ts = simulate_stirring(C6, [1, 0, 1, 0, 0, 1], 0.0, 3.0, seed,
                                   snapshot_times=[1.0, 3.0])
            for a, b in zip(tv.states, ts.states):
                assert np.array_equal(a.values, b.values)

    def test_range_two_voter_is_vmdyn_with_full_density_bitwise(self):
        top = lattice.Torus(1, 8)
        eta0 = [1, 0, 0, 1, 1, 0, 1, 0]
        for seed in (2, 9):
            tv = simulate_voter(top, eta0, 2, 2.0, seed, snapshot_times=[0.9, 2.0])
            tj = simulate_vmdyn(top, eta0, None, 1.0, 3.0, 2, 2.0, seed,
                                snapshot_times=[0.9, 2.0])
            for a, b in zip(tv.states, tj.states):
                assert np.array_equal(a.values, b.sites.values)

    def test_snapshot_prefix_consistency(self):
        tr_long = simulate_voter(C5, 0.5, 1, 4.0, 77, snapshot_times=[1.5, 4.0])
        tr_short = simulate_voter(C5, 0.5, 1, 1.5, 77)
        assert np.array_equal(tr_long.states[0].values, tr_short.states[0].values)


class TestStirringLaw:
    def test_swaps_conserve_opinion_count(self):
        # Replay the run just before and just after each swap event; only
        # voter events may change the number of ones.
        scheme = SeedScheme(19)
        xi0 = np.array([1, 1, 0, 0], dtype=np.int8)
        plan = tables.make_forward_plan(
            scheme, C4, tables.MODEL_STIRRING, 0.8, speed=6.0, eta0=xi0,
            record_events=True,
        )
        events = run_forward(plan, replica=0)["events"]
        swaps = [t for t, kind, _ in events if kind == 2]
        assert swaps, "expected at least one swap at speed 6"
        eps = 1e-9
        for t in swaps:
            before = simulate_stirring(C4, xi0, 6.0, t - eps, 19)
            after = simulate_stirring(C4, xi0, 6.0, t + eps, 19)
            assert before.states[-1].ones_count() == after.states[-1].ones_count()

    def test_distribution_matches_exact_chain(self):
        t_end = 0.6
        speed = 1.5
        start = (1, 0, 0)
        chain = oracle.build_chain(
            [start], oracle.stirring_transition_fn(C3, speed)
        )
        dist = oracle.distribution(chain, start, t_end)
        counts = {}
        n = 20_000
        for seed in range(n):
            tr = simulate_stirring(C3, list(start), speed, t_end, 60_000 + seed)
            key = tuple(int(v) for v in tr.states[-1].values)
            counts[key] = counts.get(key, 0) + 1
        assert _chi_square_states(counts, chain, dist, n) > P_FLOOR


class TestDynamicalPercolation:
    def test_stationary_density_preserved(self):
        top = lattice.Torus(2, 10)
        tr = simulate_dynperc(top, None, 0.3, 1.0, 0.7, 13)
        m = len(lattice.edges(top))
        frac = tr.states[-1].open_fraction()
        se = math.sqrt(0.3 * 0.7 / m)
        assert abs(frac - 0.3) <= 3.5 * se

    def test_relaxation_from_all_closed(self):
        # Each edge is an independent two-state chain: P(open at t) is
        # density * (1 - exp(-speed * t)).
        top = lattice.Torus(2, 10)
        density, speed, t_end = 0.6, 1.3, 0.9
        tr = simulate_dynperc(top, EdgeConfig.constant(top, 0), density, speed,
                              t_end, 29)
        expect = density * (1.0 - math.exp(-speed * t_end))
        m = len(lattice.edges(top))
        se = math.sqrt(expect * (1 - expect) / m)
        assert abs(tr.states[-1].open_fraction() - expect) <= 3.5 * se

    def test_full_density_opens_every_refreshed_edge(self):
        tr = simulate_dynperc(C4, EdgeConfig.constant(C4, 0), 1.0, 1.0, 30.0, 5)
        assert tr.states[-1].open_fraction() == 1.0

    def test_edge_marginal_of_joint_process_is_bit_exact(self):
        # Environment autonomy: the joint simulation consumes the same edge
        # streams, so the marginal is equal as a trajectory, not just in law.
        times = [0.3, 1.7, 4.0]
        for zeta0 in (None, EdgeConfig.constant(C6, 0)):
            tj = simulate_vmdyn(C6, 0.5, zeta0, 0.4, 1.3, 1, 4.0, 31,
                                snapshot_times=times)
            te = simulate_dynperc(C6, zeta0, 0.4, 1.3, 4.0, 31,
                                  snapshot_times=times)
            for a, b in zip(tj.states, te.states):
                assert np.array_equal(a.edges.values, b.values)


class TestJointProcess:
    def test_closed_environment_freezes_opinions(self):
        eta0 = [1, 0, 1, 0, 0, 1]
        tr = simulate_vmdyn(C6, eta0, EdgeConfig.constant(C6, 0), 0.0, 2.0, 1,
                            5.0, 8, snapshot_times=[2.0, 5.0])
        for st in tr.states:
            assert np.array_equal(st.sites.values, np.array(eta0, dtype=np.int8))

    def test_distribution_matches_exact_chain(self):
        # Joint (opinions, edges) law on the three-path against the
        # uniformization oracle.
        tree = lattice.RegularTree(2, depth=1)
        density, speed, t_end = 0.4, 1.0, 0.9
        eta0 = (1, 0, 0)
        zeta0 = (0, 1)
        chain = oracle.build_chain(
            [(eta0, zeta0)], oracle.vmdyn_transition_fn(tree, 1, density, speed)
        )
        dist = oracle.distribution(chain, (eta0, zeta0), t_end)
        counts = {}
        n = 20_000
        for seed in range(n):
            tr = simulate_vmdyn(
                tree, list(eta0), list(zeta0), density, speed, 1, t_end,
                17_000 + seed,
            )
            st = tr.states[-1]
            key = (
                tuple(int(v) for v in st.sites.values),
                tuple(int(v) for v in st.edges.values),
            )
            counts[key] = counts.get(key, 0) + 1
        assert _chi_square_states(counts, chain, dist, n) > P_FLOOR


class TestExports:
    def test_csv_snapshot(self):
        tr = simulate_voter(C4, [1, 0, 0, 1], 1, 1.0, 3, snapshot_times=[0.0])
        buf = io.StringIO()
        dynamics.write_snapshot_csv(tr.states[0], buf)
        lines = buf.getvalue().strip().splitlines()
        assert lines[0] == "vertex,value"
        assert lines[1] == '"[0]",1' or lines[1] == "[0],1"

    def test_json_trajectory_roundtrip(self):
        tr = simulate_vmdyn(C4, [1, 1, 1, 1], None, 0.5, 1.0, 1, 2.0, 3)
        buf = io.StringIO()
        dynamics.write_trajectory_json(tr, buf)
        doc = json.loads(buf.getvalue())
        assert doc["model"] == "vmdyn"
        assert doc["consensus_time"] == 0.0
        assert doc["snapshots"][0]["time"] == 2.0
        assert set(doc["snapshots"][0]) == {"time", "sites", "edges"}

    def test_json_timeout_marker(self):
        tr = simulate_voter(lattice.Torus(1, 12), 0.5, 1, 0.001, 10)
        if tr.consensus == math.inf:
            doc = dynamics.trajectory_as_dict(tr)
            assert doc["consensus_time"] == "timeout"
