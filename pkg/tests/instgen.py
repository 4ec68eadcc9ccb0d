"""Random instance generators used across the test suite.

All generators are deterministic in their seed.  Sizes are kept small enough
that the KKT branch oracle (exponential in constraint rows) stays fast, and
all data is O(1) so that true multipliers sit far below the default caps.
"""

import numpy as np

from lfnash.miqp import PlainProgram
from lfnash.model import (
    Follower,
    FollowerConstraints,
    FollowerCost,
    HierarchicalGame,
    LeaderSpec,
)
from lfnash.quadform import QuadForm


def tiny_instance(seed: int, mode: str = "variational") -> HierarchicalGame:
    """Single-leader game small enough for exhaustive KKT branching.

    M <= 3 followers with 1..2 variables each, 1..2 private rows, at most one
    shared row: at most 8 complementarity bits.  Constraint right-hand sides
    are anchored at an interior reference point so the follower system is
    feasible at x = 0, and leader costs are strictly convex so every
    branch-and-bound leaf has a unique minimizer.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 3))
    M = int(rng.integers(1, 4))
    p_list = [int(rng.integers(1, 3)) for _ in range(M)]
    d = int(rng.integers(0, 2))

    y_ref = [rng.uniform(-0.5, 0.5, size=p) for p in p_list]

    if d:
        B = rng.uniform(-0.3, 0.3, size=(d, n))
        E = [rng.uniform(-1.0, 1.0, size=(d, pm)) for pm in p_list]
        c = sum(E[mu] @ y_ref[mu] for mu in range(M)) - rng.uniform(0.2, 1.0, size=d)
    else:
        B = np.zeros((0, n))
        E = [np.zeros((0, pm)) for pm in p_list]
        c = np.zeros(0)

    followers = []
    for nu in range(M):
        p = p_list[nu]
        L = rng.uniform(-1.0, 1.0, size=(p, p))
        Q = L @ L.T + (0.5 + rng.uniform(0.0, 0.5)) * np.eye(p)
        R = rng.uniform(-1.0, 1.0, size=(p, n))
        q = rng.uniform(-1.0, 1.0, size=p)
        S = {}
        if M > 1 and rng.uniform() < 0.5:
            mu = int(rng.integers(0, M))
            if mu != nu:
                S[mu] = rng.uniform(-0.3, 0.3, size=(p, p_list[mu]))
        r = int(rng.integers(1, 3))
        D_own = rng.uniform(-1.0, 1.0, size=(r, p))
        A = rng.uniform(-0.5, 0.5, size=(r, n))
        e = D_own @ y_ref[nu] - rng.uniform(0.0, 0.8, size=r)
        followers.append(Follower(
            cost=FollowerCost(Q=Q, R=R, q=q, S=S),
            cons=FollowerConstraints(D_own=D_own, A=A, e=e, D_cross={},
                                     B=B, E=E, c=c),
        ))

    p_tot = sum(p_list)
    xt = rng.uniform(-0.5, 0.5, size=n)
    yt = rng.uniform(-0.5, 0.5, size=p_tot)
    C = rng.uniform(-0.4, 0.4, size=(n + p_tot, n + p_tot))
    H = C.T @ C + np.eye(n + p_tot)
    target = np.concatenate([xt, yt])
    cost_full = QuadForm(2.0 * H, -2.0 * H @ target, float(target @ H @ target))

    leader = LeaderSpec(
        n=n,
        G=np.zeros((0, n)),
        g0=np.zeros(0),
        x_lb=-np.ones(n),
        x_ub=np.ones(n),
        cost_g=QuadForm(np.zeros((n, n)), np.zeros(n), 0.0),
        cost_h=cost_full,
        followers=followers,
    )
    game = HierarchicalGame(
        leaders=[leader],
        mode=mode,
        potential_W=QuadForm(np.zeros((n, n)), np.zeros(n), 0.0),
        metadata={"name": f"tiny-{seed}"},
    )
    return game


def random_miqp(seed: int):
    """Small mixed-binary program with a convex continuous part.

    Returns (program, quad, groups) where groups is None: the objective is
    convex so decomposition keeps it whole and every leaf is exact.
    """
    rng = np.random.default_rng(seed)
    n_c = int(rng.integers(1, 5))
    n_b = int(rng.integers(1, 4))
    n = n_c + n_b
    L = rng.uniform(-1.0, 1.0, size=(n, n))
    Q = L @ L.T + (0.3 + rng.uniform(0.0, 0.7)) * np.eye(n)
    target = rng.uniform(-1.0, 1.5, size=n)
    quad = QuadForm(2.0 * Q, -2.0 * Q @ target, float(target @ Q @ target))

    lb = np.full(n, -2.0)
    ub = np.full(n, 2.0)
    bin_idx = list(range(n_c, n))
    for j in bin_idx:
        lb[j], ub[j] = 0.0, 1.0

    rows = int(rng.integers(0, 3))
    if rows:
        A_in = rng.uniform(-1.0, 1.0, size=(rows, n))
        ref = np.zeros(n)
        ref[bin_idx] = rng.integers(0, 2, size=n_b)
        b_in = A_in @ ref - rng.uniform(0.1, 1.0, size=rows)
    else:
        A_in, b_in = None, None

    prog = PlainProgram.build(n, A_in=A_in, b_in=b_in, lb=lb, ub=ub,
                              binary_idx=bin_idx)
    return prog, quad, None


def random_bilinear_miqp(seed: int):
    """Mixed-binary program with a bipartite bilinear objective.

    Returns (program, quad, groups): the quadratic carries cross terms
    between the two groups, all boxes finite, at most 2 cross pairs, so
    enumeration's alternating-descent leaf solver is exact up to multistart
    and branch-and-bound must deploy McCormick envelopes.
    """
    rng = np.random.default_rng(seed)
    n_left = int(rng.integers(1, 3))
    n_right = int(rng.integers(1, 3))
    n_b = int(rng.integers(0, 3))
    n = n_left + n_right + n_b
    left = list(range(n_left))
    right = list(range(n_left, n_left + n_right))

    diag = rng.uniform(0.4, 1.5, size=n)
    Q = np.diag(diag)
    # cross terms only between the groups
    n_pairs = int(rng.integers(1, 3))
    for _ in range(n_pairs):
        a = int(rng.choice(left))
        b = int(rng.choice(right))
        w = rng.uniform(-1.2, 1.2)
        Q[a, b] += w / 2.0
        Q[b, a] += w / 2.0
    q = rng.uniform(-1.0, 1.0, size=n)
    quad = QuadForm(2.0 * Q, q, float(rng.uniform(-1.0, 1.0)))

    lb = np.full(n, -1.5)
    ub = np.full(n, 1.5)
    bin_idx = list(range(n_left + n_right, n))
    for j in bin_idx:
        lb[j], ub[j] = 0.0, 1.0

    prog = PlainProgram.build(n, lb=lb, ub=ub, binary_idx=bin_idx,
                              groups=(left, right))
    return prog, quad, (left, right)
