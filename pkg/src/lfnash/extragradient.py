"""Two-layer extragradient baseline.

The naive decomposition alternates two inner loops: an extragradient pass
on the leaders' game with the followers frozen, then an extragradient pass
on each leader's follower game with the leaders frozen.  Neither layer sees
the other's reaction, so the alternation has no potential to descend and
can oscillate; its failure on coupled instances is the point of carrying
it.  Projections are Euclidean, onto each leader's own polyhedron in the
upper layer and onto the followers' joint polyhedron (shared rows included,
one multiplier copy: variational play) in the lower layer.
"""

import time
from dataclasses import dataclass

import numpy as np

from .errors import SolverError
from .gauss_seidel import SweepRecord, Trajectory, _potential_or_nan
from .model import HierarchicalGame, LeaderBlock, MODE_GNE
from .qp import project_polyhedron


@dataclass
class EgConfig:
    step: float = 0.01
    inner_iters: int = 200
    outer_iters: int = 100
    stop_eps: float = 1e-6

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.inner_iters < 0 or self.outer_iters < 0:
            raise ValueError("iteration budgets must be nonnegative")


def _leader_pseudogradient(game: HierarchicalGame, x_all, y_frozen):
    """Per-leader gradients of F_i in the leader's own decision."""
    grads = []
    for i, ld in enumerate(game.leaders):
        own = game.x_indices(i)
        u = np.concatenate([x_all[own], y_frozen[i]])
        g = ld.cost_g.grad(x_all)[own] + ld.cost_h.grad(u)[:ld.n]
        grads.append(g)
    return grads


def _project_leader(game: HierarchicalGame, i: int, point):
    ld = game.leaders[i]
    return project_polyhedron(point, A_in=ld.G, b_in=-ld.g0,
                              lb=ld.x_lb, ub=ld.x_ub)


def leaders_eg_step(game: HierarchicalGame, x_all, y_frozen, alpha: float):
    """One extragradient step of every leader, followers frozen.

    Predictor: xb_i = proj(x_i - alpha * V_i(x)); corrector evaluates the
    pseudogradient at the predictor profile and steps from the original x.
    """
    x_all = np.asarray(x_all, dtype=float)
    V = _leader_pseudogradient(game, x_all, y_frozen)
    x_bar = x_all.copy()
    for i in range(game.N):
        own = game.x_indices(i)
        x_bar[own] = _project_leader(game, i, x_all[own] - alpha * V[i])
    V_bar = _leader_pseudogradient(game, x_bar, y_frozen)
    x_new = x_all.copy()
    for i in range(game.N):
        own = game.x_indices(i)
        x_new[own] = _project_leader(game, i, x_all[own] - alpha * V_bar[i])
    return x_new


def _follower_pseudogradient(game: HierarchicalGame, i: int, x_i, y_list):
    return np.concatenate([
        game.follower_gradient(i, nu, x_i, y_list)
        for nu in range(game.leaders[i].M)]) if game.leaders[i].M else np.zeros(0)


def _project_followers(game: HierarchicalGame, i: int, x_i, point):
    A, b, lo, hi = game.joint_follower_rows(i, x_i)
    return project_polyhedron(point, A_in=A, b_in=b, lb=lo, ub=hi)


def followers_eg_step(game: HierarchicalGame, i: int, x_i, y_list, alpha: float):
    """One extragradient step of leader i's follower game, leaders frozen.

    The joint projection onto the shared polyhedron makes the fixed points
    variational equilibria of the followers' game.
    """
    ld = game.leaders[i]
    y_stack = np.concatenate([np.asarray(v, float) for v in y_list]) if ld.M else np.zeros(0)
    if not ld.M:
        return []
    V = _follower_pseudogradient(game, i, x_i, y_list)
    y_bar = _project_followers(game, i, x_i, y_stack - alpha * V)
    V_bar = _follower_pseudogradient(game, i, x_i, ld.y_split(y_bar))
    y_new = _project_followers(game, i, x_i, y_stack - alpha * V_bar)
    return ld.y_split(y_new)


def _neutral_start(game: HierarchicalGame):
    """Box midpoints projected onto each X_i; followers at the projection of
    zero onto their joint polyhedron.  Deliberately not a solved state: the
    baseline's own dynamics must do the work."""
    x_all = np.zeros(game.n_total)
    for i, ld in enumerate(game.leaders):
        lo = np.where(np.isfinite(ld.x_lb), ld.x_lb, -1.0)
        hi = np.where(np.isfinite(ld.x_ub), ld.x_ub, 1.0)
        x_all[game.x_indices(i)] = _project_leader(game, i, 0.5 * (lo + hi))
    y = []
    for i, ld in enumerate(game.leaders):
        if ld.M:
            y.append(ld.y_split(_project_followers(game, i, x_all[game.x_indices(i)],
                                                   np.zeros(ld.p_total))))
        else:
            y.append([])
    return x_all, y


def _as_blocks(game: HierarchicalGame, x_all, y):
    """Package the two-layer state as LeaderBlocks with zero multipliers.

    The baseline carries no duals or binaries; zeros of the right shapes keep
    the state interchangeable with the sweep solver's outputs."""
    n_copies = (lambda M: M) if game.mode == MODE_GNE else (lambda M: 1)
    blocks = []
    for i, ld in enumerate(game.leaders):
        lam = []
        for f in ld.followers:
            lo, hi = f.box()
            rows = f.cons.r + int(np.isfinite(lo).sum()) + int(np.isfinite(hi).sum())
            lam.append(np.zeros(rows))
        k = n_copies(ld.M)
        blocks.append(LeaderBlock(
            x=x_all[game.x_indices(i)],
            y=tuple(np.asarray(v, float) for v in y[i]),
            lam=tuple(lam),
            delta=tuple(np.zeros(ld.d) for _ in range(k)),
            s=tuple(np.zeros(l.shape[0]) for l in lam),
            t=tuple(np.zeros(ld.d) for _ in range(k))))
    return blocks


def run_baseline(game: HierarchicalGame, cfg: EgConfig = None):
    """Alternate the two inner loops until the outer state stops moving.

    Returns (blocks, Trajectory, status) in the sweep solver's schema, with
    algo tagged "eg" and the proximal-weight column held at zero.  The
    cost-to-move is the squared Euclidean displacement of the worst leader's
    (x, y) slice over one outer iteration.
    """
    cfg = cfg or EgConfig()
    x_all, y = _neutral_start(game)
    traj = Trajectory(algo="eg")
    status = "sweep_limit"
    for k in range(1, cfg.outer_iters + 1):
        t0 = time.perf_counter()
        x_prev, y_prev = x_all.copy(), [list(map(np.copy, yi)) for yi in y]
        for _ in range(cfg.inner_iters):
            x_all = leaders_eg_step(game, x_all, [np.concatenate(yi) if yi else np.zeros(0)
                                                  for yi in y], cfg.step)
        for i in range(game.N):
            xi = x_all[game.x_indices(i)]
            for _ in range(cfg.inner_iters):
                y[i] = followers_eg_step(game, i, xi, y[i], cfg.step)
        elapsed = time.perf_counter() - t0
        d = 0.0
        for i in range(game.N):
            own = game.x_indices(i)
            di = float(np.sum((x_all[own] - x_prev[own]) ** 2))
            for a, b in zip(y[i], y_prev[i]):
                di += float(np.sum((np.asarray(a) - np.asarray(b)) ** 2))
            d = max(d, di)
        blocks = _as_blocks(game, x_all, y)
        costs = tuple(game.joint_cost(i, blocks) for i in range(game.N))
        traj.records.append(SweepRecord(
            sweep=k, potential=_potential_or_nan(game, blocks),
            cost_to_move=d, tau=0.0, costs=costs,
            time_s=elapsed, leader_times=(elapsed,) * game.N))
        if d <= cfg.stop_eps:
            status = "converged"
            break
    return _as_blocks(game, x_all, y), traj, status
