"""Independent reference computations for the test suite.

The KKT branch oracle solves a leader's problem by enumerating active-set
patterns of the followers' KKT system directly, with no big-M caps and no
reuse of the package's encoding assembly: rows are rebuilt here from the raw
model data.  Agreement between this oracle, the mixed-integer encoding, and
the branch-and-bound solver is the core correctness evidence.

Multipliers here are unbounded, so agreement with the capped encoding is
only expected when true multipliers sit far below the caps; the instance
generator keeps its data O(1) for that reason.
"""

from itertools import product

import numpy as np

from lfnash.model import MODE_GNE, HierarchicalGame
from lfnash.qp import solve_qp


def kkt_branch_optimum(game: HierarchicalGame, i: int = 0, x_opponents=None):
    """(optimal value, minimizing (x, y) point, status) for leader i.

    Enumerates every complementarity pattern of the followers' KKT system:
    each private row is either active (multiplier free >= 0) or slack
    (multiplier pinned to 0), likewise each shared row per multiplier copy.
    Each pattern yields a convex QP over (x, y, lam, delta); the best value
    across patterns is the leader's true optimum.
    """
    ld = game.leaders[i]
    n = ld.n
    M = ld.M
    p_list = ld.p_list
    p_tot = ld.p_total
    d = ld.d
    n_copies = M if game.mode == MODE_GNE else 1

    # materialized private rows: D rows, then finite lb rows, then finite ub
    priv_meta = []
    for nu, f in enumerate(ld.followers):
        lo, hi = f.box()
        priv_meta.append((np.where(np.isfinite(lo))[0], np.where(np.isfinite(hi))[0]))
    R_counts = [ld.followers[nu].cons.r + priv_meta[nu][0].size + priv_meta[nu][1].size
                for nu in range(M)]

    # flat layout: x | y (stacked) | lam_0.. | delta_0..
    off_y = n
    offs_y = np.cumsum([0] + p_list) + off_y
    off_lam = off_y + p_tot
    offs_lam = np.cumsum([0] + R_counts) + off_lam
    off_delta = off_lam + sum(R_counts)
    n_flat = off_delta + n_copies * d

    def y_idx(nu):
        return np.arange(offs_y[nu], offs_y[nu + 1])

    def lam_idx(nu):
        return np.arange(offs_lam[nu], offs_lam[nu + 1])

    def delta_idx(k):
        return np.arange(off_delta + k * d, off_delta + (k + 1) * d)

    # private feasibility rows (A v >= b) and their coefficient vectors
    priv_rows = []  # per follower: list of (row, rhs)
    for nu, f in enumerate(ld.followers):
        cons = f.cons
        lo, hi = f.box()
        lb_i, ub_i = priv_meta[nu]
        rows = []
        for j in range(cons.r):
            row = np.zeros(n_flat)
            row[y_idx(nu)] = cons.D_own[j]
            row[:n] = cons.A[j]
            for mu, D in cons.D_cross.items():
                if mu != nu:
                    row[y_idx(mu)] += D[j]
            rows.append((row, float(cons.e[j])))
        for j in lb_i:
            row = np.zeros(n_flat)
            row[y_idx(nu)[j]] = 1.0
            rows.append((row, float(lo[j])))
        for j in ub_i:
            row = np.zeros(n_flat)
            row[y_idx(nu)[j]] = -1.0
            rows.append((row, float(-hi[j])))
        priv_rows.append(rows)

    shared_rows = []
    if M and d:
        cons0 = ld.followers[0].cons
        for j in range(d):
            row = np.zeros(n_flat)
            row[:n] = cons0.B[j]
            for mu, Em in enumerate(cons0.E):
                row[y_idx(mu)] = Em[j]
            shared_rows.append((row, float(cons0.c[j])))

    # stationarity equalities, fixed across patterns
    stat_rows, stat_rhs = [], []
    for nu, f in enumerate(ld.followers):
        cons, cost = f.cons, f.cost
        lb_i, ub_i = priv_meta[nu]
        copy = nu if game.mode == MODE_GNE else 0
        Dmat = np.vstack([cons.D_own,
                          np.eye(f.p)[lb_i] if lb_i.size else np.zeros((0, f.p)),
                          -np.eye(f.p)[ub_i] if ub_i.size else np.zeros((0, f.p))])
        for rr in range(f.p):
            row = np.zeros(n_flat)
            row[y_idx(nu)] = cost.Q[rr]
            row[:n] = cost.R[rr]
            for mu, S in cost.S.items():
                if mu != nu:
                    row[y_idx(mu)] += S[rr]
            row[lam_idx(nu)] = -Dmat[:, rr]
            if d:
                row[delta_idx(copy)] = -cons.E[nu][:, rr]
            stat_rows.append(row)
            stat_rhs.append(-float(cost.q[rr]))

    # leader's own feasibility, fixed across patterns
    own_rows, own_rhs = [], []
    for j in range(ld.G.shape[0]):
        row = np.zeros(n_flat)
        row[:n] = ld.G[j]
        own_rows.append(row)
        own_rhs.append(-float(ld.g0[j]))

    lb = np.full(n_flat, -np.inf)
    ub = np.full(n_flat, np.inf)
    lb[:n] = ld.x_lb
    ub[:n] = ld.x_ub
    lb[off_lam:off_delta] = 0.0
    lb[off_delta:] = 0.0

    # objective over (x, y): own-restricted cost_g plus cost_h
    if x_opponents is None:
        x_opponents = np.zeros(game.n_total)
    own = game.x_indices(i)
    opp = np.setdiff1d(np.arange(game.n_total), own)
    g_own = ld.cost_g.restrict(own, opp, np.asarray(x_opponents, dtype=float)[opp])
    quad = g_own.embed(np.arange(n), n_flat) + ld.cost_h.embed(np.arange(n + p_tot), n_flat)

    n_priv_bits = sum(R_counts)
    n_bits = n_priv_bits + n_copies * d
    best_val, best_xy = np.inf, None
    for bits in product((0, 1), repeat=n_bits):
        A_eq = list(stat_rows)
        b_eq = list(stat_rhs)
        A_in = list(own_rows)
        b_in = list(own_rhs)
        at = 0
        for nu in range(M):
            for j, (row, rhs) in enumerate(priv_rows[nu]):
                lam_j = lam_idx(nu)[j]
                pin = np.zeros(n_flat)
                pin[lam_j] = 1.0
                if bits[at]:
                    A_eq.append(row)
                    b_eq.append(rhs)
                else:
                    A_eq.append(pin)
                    b_eq.append(0.0)
                    A_in.append(row)
                    b_in.append(rhs)
                at += 1
        for k in range(n_copies):
            for j, (row, rhs) in enumerate(shared_rows):
                pin = np.zeros(n_flat)
                pin[delta_idx(k)[j]] = 1.0
                if bits[at]:
                    A_eq.append(row)
                    b_eq.append(rhs)
                else:
                    A_eq.append(pin)
                    b_eq.append(0.0)
                    if k == 0:
                        A_in.append(row)
                        b_in.append(rhs)
                at += 1
        res = solve_qp(quad.Q, quad.b,
                       A_eq=np.array(A_eq), b_eq=np.array(b_eq),
                       A_in=np.array(A_in) if A_in else None,
                       b_in=np.array(b_in) if b_in else None,
                       lb=lb, ub=ub)
        if res.status != "optimal":
            continue
        val = res.value + quad.c
        if val < best_val - 1e-12:
            best_val = val
            best_xy = res.x[:n + p_tot].copy()
    if best_xy is None:
        return np.inf, None, "infeasible"
    return float(best_val), best_xy, "optimal"


def compensation_level(two_a, offsets, cap, target):
    """Smallest t with sum_nu clip((t - offsets[nu]) / two_a[nu], 0, cap) = target.

    Aggregate supply is piecewise linear and nondecreasing in t; scan its
    breakpoints and interpolate inside the first segment that covers target.
    """
    two_a = np.asarray(two_a, dtype=float)
    offsets = np.asarray(offsets, dtype=float)

    def supply(t):
        return float(np.sum(np.clip((t - offsets) / two_a, 0.0, cap)))

    if target <= 0.0:
        return float(np.min(offsets)) if offsets.size else 0.0
    pts = np.unique(np.concatenate([offsets, offsets + two_a * cap]))
    for a, b in zip(pts[:-1], pts[1:]):
        if supply(b) >= target - 1e-12:
            sa = supply(a)
            interior = (offsets < b) & (a < offsets + two_a * cap)
            slope = float(np.sum(1.0 / two_a[interior]))
            if slope <= 0.0:
                return float(b)
            return float(a + (target - sa) / slope)
    raise ValueError("aggregate capacity below target")


def ridehail_equilibrium(params):
    """Closed-form equilibrium of the sampled desk model.

    Valid whenever working pays less than the outside option at every wage
    the boxes allow (w + B < Q throughout): revenue is strictly increasing
    in own prices and the wage bill strictly increasing in wages, so prices
    sit at their caps and wages on the floor, and each platform's drivers
    jointly serve exactly the demand quota, priced by the smallest shared
    multiplier that draws that many hours.

    Returns (x_star, y_star, delta_star) with shapes (N, 2H), (N, M, H),
    and (N, H).
    """
    N, M, H = params.N, params.M, params.H
    A = params.A
    assert np.all(params.w_bar + params.B.max(axis=1) < params.Q), \
        "oracle precondition: no wage in the box makes work self-supporting"
    x_star = np.concatenate(
        [np.tile(params.p_cap, (N, 1)), np.tile(params.w_lb, (N, H))], axis=1)
    y_star = np.zeros((N, M, H))
    delta_star = np.zeros((N, H))
    for i in range(N):
        for h in range(H):
            off = params.Q[h] - params.w_lb - params.B[i, :, h]
            two_a = 2.0 * A[i, :, h]
            t = compensation_level(two_a, off, params.C[h], params.d_min[i, h])
            delta_star[i, h] = t
            y_star[i, :, h] = np.clip((t - off) / two_a, 0.0, params.C[h])
    return x_star, y_star, delta_star
