"""Pure-Python kernel backend.

These event loops are written deliberately in a C-like style: explicit
argmin scans, counter-addressed draws, no library RNG state, and fixed
arithmetic expression order.  The compiled backend mirrors them draw for
draw, so the two must stay byte-identical in outputs; any change here is a
change to the simulation's sampling contract.

Event selection is deterministic: per-entity next-event times are compared
as (time, stream kind, entity index) with stream kinds ordered as in
``randomness.StreamKind``.  Exact float ties are broken by that rule, never
by iteration accidents.
"""

from __future__ import annotations

import heapq
import math

import numpy as np

from ..randomness import (
    PHI,
    fold_step,
    integer_from_bits,
    splitmix_finalize,
    uniform_from_bits,
    zigzag,
)
from . import tables as T

_MASK = (1 << 64) - 1
_INF = math.inf
_BIG = 1 << 60  # larger than any reachable lattice distance


def _raw(key: int, counter: int) -> int:
    return splitmix_finalize((key + ((counter + 1) * PHI)) & _MASK)


def _unif(key: int, counter: int) -> float:
    return uniform_from_bits(_raw(key, counter))


def _expo(key: int, counter: int, rate: float) -> float:
    return -math.log1p(-_unif(key, counter)) / rate


def _bern(key: int, counter: int, p: float) -> bool:
    return _unif(key, counter) < p


def _pick(key: int, counter: int, n: int) -> int:
    return integer_from_bits(_raw(key, counter), n)


# ---------------------------------------------------------------------------
# K1: finite-topology forward simulation (voter / stirring / vmdyn).
# ---------------------------------------------------------------------------


def _ball_connected_finite(ft, zeta, site: int, target_local: int) -> bool:
    """BFS inside the attempt ball of ``site`` over open edges."""
    bp = int(ft.ball_ptr[site])
    size = int(ft.ball_ptr[site + 1]) - bp
    ep = int(ft.bedge_ptr[site])
    start = int(ft.center_local[site])
    visited = bytearray(size)
    visited[start] = 1
    stack = [start]
    badj_ptr, badj_vert, badj_edge = ft.badj_ptr, ft.badj_vert, ft.badj_edge
    bedge_idx = ft.bedge_idx
    while stack:
        u = stack.pop()
        for a in range(int(badj_ptr[bp + u]), int(badj_ptr[bp + u + 1])):
            v = int(badj_vert[a])
            if visited[v]:
                continue
            if zeta[int(bedge_idx[ep + int(badj_edge[a])])]:
                if v == target_local:
                    return True
                visited[v] = 1
                stack.append(v)
    return False


def run_forward(plan: T.ForwardPlan, replica: int) -> dict:
    ft = plan.ft
    n, m = ft.n_sites, ft.n_edges
    horizon = plan.horizon
    model = plan.model
    skey = [fold_step(int(plan.site_prefix[i]), replica) for i in range(n)]
    if plan.eta0 is not None:
        eta = plan.eta0.copy()
    else:
        eta = np.empty(n, dtype=np.int8)
        for i in range(n):
            eta[i] = 1 if _bern(skey[i], 0, plan.alpha) else 0
    has_edges = plan.edge_rate > 0.0
    ekey = [fold_step(int(plan.edge_prefix[e]), replica) for e in range(m)]
    if model == T.MODEL_VMDYN:
        if plan.zeta0 is not None:
            zeta = plan.zeta0.copy()
        else:
            zeta = np.empty(m, dtype=np.int8)
            for e in range(m):
                zeta[e] = 1 if _bern(ekey[e], 0, plan.density) else 0
    else:
        zeta = np.zeros(0, dtype=np.int8)
    site_cnt = [0] * n
    site_next = [_expo(skey[i], 1, 1.0) for i in range(n)]
    edge_cnt = [0] * m
    edge_next = [_expo(ekey[e], 1, plan.edge_rate) for e in range(m)] if has_edges else []
    nbr_ptr, nbr_idx = ft.nbr_ptr, ft.nbr_idx
    mark_ptr, mark_idx, mark_local = ft.mark_ptr, ft.mark_idx, ft.mark_local
    edge_u, edge_v = ft.edge_u, ft.edge_v
    events = [] if plan.record_events else None
    n_ones = int(np.sum(eta))
    cons_time = 0.0 if n_ones == 0 or n_ones == n else _INF
    t = 0.0
    n_ev = 0
    err = 0
    while not (plan.stop_at_consensus and cons_time < _INF):
        best_t = _INF
        best_kind = 0
        best_idx = -1
        for i in range(n):
            if site_next[i] < best_t:
                best_t = site_next[i]
                best_kind = 1
                best_idx = i
        if has_edges:
            for e in range(m):
                if edge_next[e] < best_t:
                    best_t = edge_next[e]
                    best_kind = 2
                    best_idx = e
        if best_t > horizon:
            break
        n_ev += 1
        if n_ev > plan.max_events:
            err = 1
            break
        t = best_t
        if best_kind == 1:
            i = best_idx
            cnt = site_cnt[i] + 1
            before = int(eta[i])
            if model == T.MODEL_VMDYN:
                mp = int(mark_ptr[i])
                nm = int(mark_ptr[i + 1]) - mp
                j = _pick(skey[i], 2 * cnt, nm)
                y = int(mark_idx[mp + j])
                if _ball_connected_finite(ft, zeta, i, int(mark_local[mp + j])):
                    eta[i] = eta[y]
            else:
                npt = int(nbr_ptr[i])
                deg = int(nbr_ptr[i + 1]) - npt
                j = _pick(skey[i], 2 * cnt, deg)
                y = int(nbr_idx[npt + j])
                eta[i] = eta[y]
            if int(eta[i]) != before:
                n_ones += int(eta[i]) - before
                if cons_time == _INF and (n_ones == 0 or n_ones == n):
                    cons_time = t
            site_cnt[i] = cnt
            site_next[i] = t + _expo(skey[i], 2 * cnt + 1, 1.0)
        else:
            e = best_idx
            cnt = edge_cnt[e] + 1
            if model == T.MODEL_STIRRING:
                u, v = int(edge_u[e]), int(edge_v[e])
                eta[u], eta[v] = eta[v], eta[u]
            else:
                zeta[e] = 1 if _bern(ekey[e], 2 * cnt, plan.density) else 0
            edge_cnt[e] = cnt
            edge_next[e] = t + _expo(ekey[e], 2 * cnt + 1, plan.edge_rate)
        if events is not None:
            events.append((t, best_kind, best_idx))
    return {
        "eta": eta,
        "zeta": zeta,
        "n_events": n_ev,
        "consensus_time": cons_time,
        "error": err,
        "events": events,
    }


# ---------------------------------------------------------------------------
# K2: plain walker systems.
# ---------------------------------------------------------------------------


def _l1(a, b) -> int:
    d = 0
    for x, y in zip(a, b):
        d += abs(x - y)
    return d


def run_set_walkers(plan: T.SetWalkPlan, replica: int) -> dict:
    if plan.mode == T.MODE_STIRRING_SET:
        return _run_stirring_set(plan, replica)
    return _run_flow_walkers(plan, replica)


def _run_flow_walkers(plan: T.SetWalkPlan, replica: int) -> dict:
    k = plan.k
    mode = plan.mode
    lattice_space = plan.space == T.SPACE_LATTICE
    horizon = plan.horizon
    if lattice_space:
        indep = [tuple(int(c) for c in plan.init_pos[i]) for i in range(k)]
        nbr = [tuple(int(c) for c in row) for row in plan.nbr_off]
        n_dirs = len(nbr)
    else:
        indep = [int(plan.init_pos[i]) for i in range(k)]
        nbr_ptr, nbr_idx = plan.ft.nbr_ptr, plan.ft.nbr_idx
    coal = list(indep)
    active = [True] * k
    n_active = k
    track_coal = mode in (T.MODE_COALESCING, T.MODE_COUPLED)
    wkey = [fold_step(int(plan.walker_prefix[i]), replica) for i in range(k)]
    cnt = [0] * k
    nxt = [_expo(wkey[i], 1, 1.0) for i in range(k)]
    tau_meet = _INF
    g_time = _INF
    single_time = _INF
    merges_t, merges_s, merges_d = [], [], []
    violations = 0
    occ = 0.0
    pd = _l1(indep[0], indep[1]) if (k == 2 and lattice_space) else (
        0 if k == 2 and indep[0] == indep[1] else _BIG
    )
    t = 0.0
    n_ev = 0
    err = 0
    stopped = False
    if k == 2 and mode == T.MODE_INDEPENDENT and pd <= plan.ell_meet:
        tau_meet = 0.0
        if plan.stop_on_meet:
            stopped = True
    while not stopped:
        best_t = _INF
        best_i = -1
        for i in range(k):
            if mode == T.MODE_COALESCING and not active[i]:
                continue
            if nxt[i] < best_t:
                best_t = nxt[i]
                best_i = i
        seg_end = best_t if best_t < horizon else horizon
        if k == 2 and plan.ell_occ >= 0 and pd <= plan.ell_occ:
            occ += seg_end - t
        if best_t > horizon:
            t = horizon
            break
        n_ev += 1
        if n_ev > plan.max_events:
            err = 1
            break
        t = best_t
        i = best_i
        c = cnt[i] + 1
        if lattice_space:
            j = _pick(wkey[i], 2 * c, n_dirs)
            off = nbr[j]
            if mode != T.MODE_COALESCING:
                indep[i] = tuple(a + b for a, b in zip(indep[i], off))
            if track_coal and active[i]:
                coal[i] = tuple(a + b for a, b in zip(coal[i], off))
        else:
            # The coupled pair shares the draw: representative and
            # independent copy sit on the same site, so one neighbor pick
            # serves both.
            p = indep[i] if mode != T.MODE_COALESCING else coal[i]
            base = int(nbr_ptr[p])
            deg = int(nbr_ptr[p + 1]) - base
            j = _pick(wkey[i], 2 * c, deg)
            y = int(nbr_idx[base + j])
            if mode != T.MODE_COALESCING:
                indep[i] = y
            if track_coal and active[i]:
                coal[i] = y
        cnt[i] = c
        nxt[i] = t + _expo(wkey[i], 2 * c + 1, 1.0)
        if track_coal and active[i]:
            for w in range(k):
                if w != i and active[w] and coal[w] == coal[i]:
                    s, d = (i, w) if i < w else (w, i)
                    active[d] = False
                    n_active -= 1
                    merges_t.append(t)
                    merges_s.append(s)
                    merges_d.append(d)
                    if g_time == _INF:
                        g_time = t
                    if n_active == 1:
                        single_time = t
                    break
        if mode == T.MODE_COUPLED:
            for w in range(k):
                if active[w] and coal[w] != indep[w]:
                    violations += 1
        if k == 2:
            ref = indep if mode != T.MODE_COALESCING else coal
            if mode == T.MODE_COALESCING and n_active == 1:
                pd = 0
            elif lattice_space:
                pd = _l1(ref[0], ref[1])
            else:
                pd = 0 if ref[0] == ref[1] else _BIG
            if mode == T.MODE_INDEPENDENT and pd <= plan.ell_meet and tau_meet == _INF:
                tau_meet = t
                if plan.stop_on_meet:
                    stopped = True
        if plan.stop_when_single and n_active == 1:
            stopped = True
    if lattice_space:
        pos_arr = np.asarray(indep if mode != T.MODE_COALESCING else coal, dtype=np.int64)
        coal_arr = np.asarray(coal, dtype=np.int64)
    else:
        pos_arr = np.asarray(indep if mode != T.MODE_COALESCING else coal, dtype=np.int32)
        coal_arr = np.asarray(coal, dtype=np.int32)
    return {
        "pos": pos_arr,
        "coal_pos": coal_arr,
        "active": np.asarray(active, dtype=np.uint8),
        "merge_time": np.asarray(merges_t, dtype=np.float64),
        "merge_survivor": np.asarray(merges_s, dtype=np.int32),
        "merge_dropped": np.asarray(merges_d, dtype=np.int32),
        "tau_meet": tau_meet,
        "g_time": g_time,
        "single_time": single_time,
        "containment_violations": violations,
        "occ_time": occ,
        "pd_final": int(pd) if k == 2 else -1,
        "n_events": n_ev,
        "error": err,
        "final_time": t,
    }


def _run_stirring_set(plan: T.SetWalkPlan, replica: int) -> dict:
    k = plan.k
    lattice_space = plan.space == T.SPACE_LATTICE
    horizon = plan.horizon
    d = plan.degree
    v_rate = (plan.speed + 1.0) / d
    o_rate = 1.0 / d
    if lattice_space:
        pos = [tuple(int(c) for c in plan.init_pos[i]) for i in range(k)]
        nbr = [tuple(int(c) for c in row) for row in plan.nbr_off]
        n_dirs = len(nbr)
    else:
        pos = [int(plan.init_pos[i]) for i in range(k)]
        nbr_ptr, nbr_idx = plan.ft.nbr_ptr, plan.ft.nbr_idx
    if len(set(pos)) != k:
        raise ValueError("stirring-set walkers must start on distinct sites")
    active = [True] * k
    n_active = k
    ckey = fold_step(plan.chain_prefix, replica)
    ctr = 0
    merges_t, merges_s, merges_d = [], [], []
    single_time = _INF
    occ = 0.0
    t = 0.0
    n_ev = 0
    err = 0

    def neighbors_of(p):
        if lattice_space:
            return [tuple(a + b for a, b in zip(p, off)) for off in nbr]
        base = int(nbr_ptr[p])
        return [int(nbr_idx[base + j]) for j in range(int(nbr_ptr[p + 1]) - base)]

    while True:
        order = sorted((w for w in range(k) if active[w]), key=lambda w: pos[w])
        occupied = {pos[w] for w in order}
        moves = []  # (walker, target or None for removal, weight)
        total = 0.0
        for w in order:
            for y in neighbors_of(pos[w]):
                if y in occupied:
                    wgt = o_rate
                    moves.append((w, None, wgt))
                else:
                    wgt = v_rate
                    moves.append((w, y, wgt))
                total = total + wgt
        if n_active == 1 and plan.stop_when_single:
            break
        gap = _expo(ckey, ctr, total)
        ctr += 1
        ev_t = t + gap
        seg_end = ev_t if ev_t < horizon else horizon
        if k == 2 and plan.ell_occ >= 0 and n_active == 2:
            w0, w1 = order[0], order[1]
            pd = _l1(pos[w0], pos[w1]) if lattice_space else (0 if pos[w0] == pos[w1] else _BIG)
            if pd <= plan.ell_occ:
                occ += seg_end - t
        if ev_t > horizon:
            t = horizon
            break
        n_ev += 1
        if n_ev > plan.max_events:
            err = 1
            break
        t = ev_t
        u = _unif(ckey, ctr)
        ctr += 1
        target = u * total
        acc = 0.0
        chosen = moves[-1]
        for mv in moves:
            acc = acc + mv[2]
            if target < acc:
                chosen = mv
                break
        w, y, _ = chosen
        if y is None:
            active[w] = False
            n_active -= 1
            merges_t.append(t)
            merges_s.append(-1)
            merges_d.append(w)
            if n_active == 1:
                single_time = t
        else:
            pos[w] = y
    if lattice_space:
        pos_arr = np.asarray(pos, dtype=np.int64)
    else:
        pos_arr = np.asarray(pos, dtype=np.int32)
    return {
        "pos": pos_arr,
        "coal_pos": pos_arr,
        "active": np.asarray(active, dtype=np.uint8),
        "merge_time": np.asarray(merges_t, dtype=np.float64),
        "merge_survivor": np.asarray(merges_s, dtype=np.int32),
        "merge_dropped": np.asarray(merges_d, dtype=np.int32),
        "tau_meet": _INF,
        "g_time": merges_t[0] if merges_t else _INF,
        "single_time": single_time,
        "containment_violations": 0,
        "occ_time": occ,
        "pd_final": -1,
        "n_events": n_ev,
        "error": err,
        "final_time": t,
    }


# ---------------------------------------------------------------------------
# K3: walkers in lazily revealed dynamical-percolation environments.
# ---------------------------------------------------------------------------


class _EdgeRec:
    """Knowledge record of one environment edge.

    ``j_done`` counts consumed refresh events of the edge's stream and
    ``t_next`` is the absolute time of refresh ``j_done + 1``; these persist
    across reveal/forget cycles, which is what makes re-reveals
    stream-faithful instead of resetting the refresh clock.
    """

    __slots__ = ("state", "owner", "j_done", "t_next", "skey")

    def __init__(self, state, owner, j_done, t_next, skey):
        self.state = state
        self.owner = owner
        self.j_done = j_done
        self.t_next = t_next
        self.skey = skey


def _lattice_edge_skey(kind_prefix: int, env: int, axis: int, base, replica: int) -> int:
    h = fold_step(kind_prefix, env)
    h = fold_step(h, axis)
    for c in base:
        h = fold_step(h, zigzag(c))
    return fold_step(h, replica)


def _edge_pos_dist(key: int, dim: int, p) -> int:
    axis, base = T.unpack_edge_key(key & ((1 << 60) - 1), dim)
    d0 = 0
    d1 = 0
    for a in range(dim):
        c = base[a]
        d0 += abs(c - p[a])
        d1 += abs(c + (1 if a == axis else 0) - p[a])
    return d0 if d0 < d1 else d1


def run_env_walkers(plan: T.EnvWalkPlan, replica: int) -> dict:
    k = plan.k
    lattice_space = plan.space == T.SPACE_LATTICE
    horizon = plan.horizon
    speed = plan.speed
    density = plan.density
    track = plan.track_proximity and lattice_space
    lt = plan.lt
    ft = plan.ft
    if lattice_space:
        pos = [tuple(int(c) for c in plan.init_pos[i]) for i in range(k)]
        dim = plan.dim
        n_ledges = lt.n_ledges
        ledge_axis = [int(a) for a in lt.ledge_axis]
        ledge_base_off = [tuple(int(c) for c in row) for row in lt.ledge_base_off]
        mark_off = [tuple(int(c) for c in row) for row in lt.mark_off]
        mark_local_lat = [int(v) for v in lt.mark_local]
        n_marks_lat = lt.n_marks
        center_local_lat = lt.center_local
        coord_bound = T.COORD_OFFSET - plan.radius - 2
    else:
        pos = [int(plan.init_pos[i]) for i in range(k)]
    env_of = [int(e) for e in plan.env_of]
    wkey = [fold_step(int(plan.walker_prefix[i]), replica) for i in range(k)]
    records: dict = {}
    heap: list = []
    seq = 0
    revealed_total = 0
    first_empty = _INF

    # pinned edges: forced state, fresh refresh clock, revealed at time zero
    for pi in range(len(plan.pin_key)):
        env = int(plan.pin_env[pi])
        if lattice_space:
            keyu = (env << 60) | int(plan.pin_key[pi])
            axis, base = T.unpack_edge_key(int(plan.pin_key[pi]), plan.dim)
            skey = _lattice_edge_skey(plan.edge_kind_prefix, env, axis, base, replica)
        else:
            keyu = env * ft.n_edges + int(plan.pin_key[pi])
            skey = fold_step(int(plan.edge_prefix[env, int(plan.pin_key[pi])]), replica)
        t_next = _expo(skey, 1, speed) if speed > 0.0 else _INF
        rec = _EdgeRec(int(plan.pin_state[pi]), int(plan.pin_owner[pi]), 0, t_next, skey)
        if keyu in records:
            raise ValueError("duplicate pinned edge")
        records[keyu] = rec
        if speed > 0.0:
            heapq.heappush(heap, (t_next, seq, keyu))
            seq += 1
        revealed_total += 1
    if revealed_total == 0:
        first_empty = 0.0

    active = [True] * k
    n_active = k
    wcnt = [0] * k
    wnext = [_expo(wkey[i], 1, 1.0) for i in range(k)]
    merges_t, merges_s, merges_d = [], [], []
    tau_pos = tau_f = tau_break = _INF
    occ = 0.0
    regen_m: list = []
    regen_pos: list = []
    regen_att: list = []
    m_next = 1
    n_ev = 0
    err = 0
    t = 0.0

    def pool_dist(j: int) -> int:
        """Distance from walker j's position to the other walker's pool."""
        other_bit = 1 << (1 - j)
        best = _BIG
        p = pos[j]
        for keyu, rec in records.items():
            if rec.owner & other_bit:
                d = _edge_pos_dist(keyu, dim, p)
                if d < best:
                    best = d
        return best

    if track:
        pd = _l1(pos[0], pos[1])
        dxp = [pool_dist(0), pool_dist(1)]
    else:
        pd = _BIG
        dxp = [_BIG, _BIG]
    cur_min3 = min(pd, dxp[0], dxp[1])

    stop = False

    def check_hits() -> bool:
        nonlocal tau_pos, tau_f, tau_break, cur_min3
        cur_min3 = min(pd, dxp[0], dxp[1])
        halt = False
        if plan.ell_pos >= 0 and pd <= plan.ell_pos and tau_pos == _INF:
            tau_pos = t
            if plan.stop_on_pos_hit:
                halt = True
        if plan.ell_f >= 0 and cur_min3 <= plan.ell_f and tau_f == _INF:
            tau_f = t
            if plan.stop_at_f_hit:
                halt = True
        if plan.break_radius >= 0 and cur_min3 <= plan.break_radius and tau_break == _INF:
            tau_break = t
            if plan.stop_at_break:
                halt = True
        return halt

    if track:
        stop = check_hits()

    while not stop:
        wbest_t = _INF
        wbest_i = -1
        for i in range(k):
            if active[i] and wnext[i] < wbest_t:
                wbest_t = wnext[i]
                wbest_i = i
        # exact ties go to the edge event: refresh streams carry the lower
        # stream-kind tag
        if heap and heap[0][0] <= wbest_t:
            ev_t = heap[0][0]
            is_edge = True
        else:
            ev_t = wbest_t
            is_edge = False
        seg_end = ev_t if ev_t < horizon else horizon
        if track and plan.ell_occ >= 0 and cur_min3 <= plan.ell_occ:
            occ += seg_end - t
        if plan.record_regen:
            while m_next <= seg_end:
                if revealed_total == 0:
                    regen_m.append(m_next)
                    regen_pos.append(list(pos))
                    regen_att.append(list(wcnt))
                m_next += 1
        if ev_t > horizon:
            t = horizon
            break
        n_ev += 1
        if n_ev > plan.max_events:
            err = 1
            break
        t = ev_t
        if is_edge:
            _, _, keyu = heapq.heappop(heap)
            rec = records[keyu]
            prev_owner = rec.owner
            rec.owner = 0
            revealed_total -= 1
            rec.j_done += 1
            rec.t_next = rec.t_next + _expo(rec.skey, 2 * rec.j_done + 1, speed)
            if revealed_total == 0 and first_empty == _INF:
                first_empty = t
            if track and prev_owner:
                if prev_owner & 1:
                    dxp[1] = pool_dist(1)
                if prev_owner & 2:
                    dxp[0] = pool_dist(0)
                cur_min3 = min(pd, dxp[0], dxp[1])
            continue
        i = wbest_i
        c = wcnt[i] + 1
        env = env_of[i]
        x = pos[i]
        if lattice_space:
            ball_state = bytearray(n_ledges)
            for le in range(n_ledges):
                off = ledge_base_off[le]
                base = tuple(x[a] + off[a] for a in range(dim))
                keyu = (env << 60) | T.pack_edge_key(ledge_axis[le], T.pack_coords(base))
                rec = records.get(keyu)
                if rec is None:
                    skey = _lattice_edge_skey(
                        plan.edge_kind_prefix, env, ledge_axis[le], base, replica
                    )
                    t_next = _expo(skey, 1, speed) if speed > 0.0 else _INF
                    rec = _EdgeRec(0, 0, 0, t_next, skey)
                    records[keyu] = rec
                if rec.owner == 0:
                    while rec.t_next <= t:
                        rec.j_done += 1
                        rec.t_next = rec.t_next + _expo(rec.skey, 2 * rec.j_done + 1, speed)
                    rec.state = 1 if _bern(rec.skey, 2 * rec.j_done, density) else 0
                    rec.owner = 1 << i
                    if speed > 0.0:
                        heapq.heappush(heap, (rec.t_next, seq, keyu))
                        seq += 1
                    revealed_total += 1
                    if track:
                        other = 1 - i
                        d = _edge_pos_dist(keyu, dim, pos[other])
                        if d < dxp[other]:
                            dxp[other] = d
                elif not (rec.owner & (1 << i)):
                    rec.owner |= 1 << i
                    if track:
                        other = 1 - i
                        d = _edge_pos_dist(keyu, dim, pos[other])
                        if d < dxp[other]:
                            dxp[other] = d
                ball_state[le] = rec.state
            j = _pick(wkey[i], 2 * c, n_marks_lat)
            y_local = mark_local_lat[j]
            connected = _lattice_ball_bfs(lt, ball_state, center_local_lat, y_local)
            if connected:
                moff = mark_off[j]
                y = tuple(x[a] + moff[a] for a in range(dim))
                pos[i] = y
                for a in range(dim):
                    if y[a] > coord_bound or y[a] < -coord_bound:
                        err = 2
                        stop = True
                for w in range(k):
                    if w != i and active[w] and env_of[w] == env and pos[w] == y:
                        s, dd = (i, w) if i < w else (w, i)
                        active[dd] = False
                        n_active -= 1
                        merges_t.append(t)
                        merges_s.append(s)
                        merges_d.append(dd)
                        break
                if track:
                    pd = _l1(pos[0], pos[1])
                    dxp[i] = pool_dist(i)
        else:
            mp = int(ft.mark_ptr[x])
            nm = int(ft.mark_ptr[x + 1]) - mp
            ep = int(ft.bedge_ptr[x])
            n_bedges = int(ft.bedge_ptr[x + 1]) - ep
            ball_state = bytearray(n_bedges)
            for le in range(n_bedges):
                eid = int(ft.bedge_idx[ep + le])
                keyu = env * ft.n_edges + eid
                rec = records.get(keyu)
                if rec is None:
                    skey = fold_step(int(plan.edge_prefix[env, eid]), replica)
                    t_next = _expo(skey, 1, speed) if speed > 0.0 else _INF
                    rec = _EdgeRec(0, 0, 0, t_next, skey)
                    records[keyu] = rec
                if rec.owner == 0:
                    while rec.t_next <= t:
                        rec.j_done += 1
                        rec.t_next = rec.t_next + _expo(rec.skey, 2 * rec.j_done + 1, speed)
                    rec.state = 1 if _bern(rec.skey, 2 * rec.j_done, density) else 0
                    rec.owner = 1 << i
                    if speed > 0.0:
                        heapq.heappush(heap, (rec.t_next, seq, keyu))
                        seq += 1
                    revealed_total += 1
                elif not (rec.owner & (1 << i)):
                    rec.owner |= 1 << i
                ball_state[le] = rec.state
            j = _pick(wkey[i], 2 * c, nm)
            y = int(ft.mark_idx[mp + j])
            if _finite_ball_bfs(ft, ball_state, x, int(ft.mark_local[mp + j])):
                pos[i] = y
                for w in range(k):
                    if w != i and active[w] and env_of[w] == env and pos[w] == y:
                        s, dd = (i, w) if i < w else (w, i)
                        active[dd] = False
                        n_active -= 1
                        merges_t.append(t)
                        merges_s.append(s)
                        merges_d.append(dd)
                        break
        wcnt[i] = c
        wnext[i] = t + _expo(wkey[i], 2 * c + 1, 1.0)
        if track:
            if check_hits():
                stop = True
        if plan.stop_when_single and n_active == 1:
            stop = True

    rev_items = sorted(
        (keyu, rec) for keyu, rec in records.items() if rec.owner != 0
    )
    if lattice_space:
        pos_arr = np.asarray(pos, dtype=np.int64)
        regen_arr = (
            np.asarray(regen_pos, dtype=np.int64).reshape(len(regen_m), k, plan.dim)
            if regen_m
            else np.zeros((0, k, plan.dim), dtype=np.int64)
        )
    else:
        pos_arr = np.asarray(pos, dtype=np.int32)
        regen_arr = np.zeros((0, k, 1), dtype=np.int64)
    return {
        "pos": pos_arr,
        "active": np.asarray(active, dtype=np.uint8),
        "merge_time": np.asarray(merges_t, dtype=np.float64),
        "merge_survivor": np.asarray(merges_s, dtype=np.int32),
        "merge_dropped": np.asarray(merges_d, dtype=np.int32),
        "rev_key": np.asarray([it[0] for it in rev_items], dtype=np.int64),
        "rev_state": np.asarray([it[1].state for it in rev_items], dtype=np.int8),
        "rev_owner": np.asarray([it[1].owner for it in rev_items], dtype=np.uint8),
        "tau_pos": tau_pos,
        "tau_f": tau_f,
        "tau_break": tau_break,
        "occ_time": occ,
        "min3_final": int(cur_min3) if track else -1,
        "pd_final": int(pd) if track else -1,
        "first_empty": first_empty,
        "regen_m": np.asarray(regen_m, dtype=np.int64),
        "regen_pos": regen_arr,
        "regen_att": (
            np.asarray(regen_att, dtype=np.int64).reshape(len(regen_m), k)
            if regen_m
            else np.zeros((0, k), dtype=np.int64)
        ),
        "n_events": n_ev,
        "error": err,
        "final_time": t,
    }


def _lattice_ball_bfs(lt, ball_state, start_local: int, target_local: int) -> bool:
    visited = bytearray(lt.n_ball)
    visited[start_local] = 1
    stack = [start_local]
    ladj_ptr, ladj_vert, ladj_edge = lt.ladj_ptr, lt.ladj_vert, lt.ladj_edge
    while stack:
        u = stack.pop()
        for a in range(int(ladj_ptr[u]), int(ladj_ptr[u + 1])):
            v = int(ladj_vert[a])
            if visited[v]:
                continue
            if ball_state[int(ladj_edge[a])]:
                if v == target_local:
                    return True
                visited[v] = 1
                stack.append(v)
    return False


def _finite_ball_bfs(ft, ball_state, site: int, target_local: int) -> bool:
    bp = int(ft.ball_ptr[site])
    size = int(ft.ball_ptr[site + 1]) - bp
    start = int(ft.center_local[site])
    visited = bytearray(size)
    visited[start] = 1
    stack = [start]
    badj_ptr, badj_vert, badj_edge = ft.badj_ptr, ft.badj_vert, ft.badj_edge
    while stack:
        u = stack.pop()
        for a in range(int(badj_ptr[bp + u]), int(badj_ptr[bp + u + 1])):
            v = int(badj_vert[a])
            if visited[v]:
                continue
            if ball_state[int(badj_edge[a])]:
                if v == target_local:
                    return True
                visited[v] = 1
                stack.append(v)
    return False
