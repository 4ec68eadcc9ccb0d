"""Ride-hailing market instances: platforms lead, drivers follow.

Each of N platforms sets a price p and a wage w per area h; its M drivers
respond with per-area service levels y.  A driver's utility in an area is
(w + B - Q) y - A y^2 with A = C / (s beta): distance s and the scale beta
shrink the quadratic capacity term, Q is a congestion-like penalty, and B a
linear preference.  Served rides are capped per driver at the area's
customer mass C, and a shared constraint forces each platform's drivers to
jointly cover a minimum number of rides d_min per area.

Demand uses frozen market shares.  The natural share factor
C^h K^{i,h} / (p_bar sum_j K^{j,h}) contains every platform's realized
availability K in the denominator, which makes demand rational in the
followers' decisions and destroys the separable structure the sweep solver
relies on.  Shares are therefore frozen at reference availabilities K_hat
(uniform by default: K_hat = M for every platform), giving

    d^{i,h} = sigma^{i,h} (p_bar - p_cap^h + theta/(N-1) sum_{j!=i} p^{j,h})

which is linear in opponent prices and independent of the platform's own
price and availability.  With uniform shares the price game is an exact
potential game; per-platform shares break the symmetry, so build_potential
refuses that mode.  This substitution is the module's one documented
modeling liberty.
"""

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import repeat
from typing import Optional

import numpy as np

from .errors import InvalidModelError
from .extragradient import EgConfig, run_baseline
from .gauss_seidel import PgsConfig, run_escalating, verify_equilibrium
from .model import Follower, FollowerConstraints, FollowerCost, HierarchicalGame, LeaderSpec
from .quadform import QuadForm

SHARE_MODES = ("frozen-uniform", "frozen-per-platform")


@dataclass
class RidehailParams:
    """Market data for one instance; shapes follow (platform, driver, area)."""

    N: int
    M: int
    H: int
    p_bar: float              # global maximum service price
    p_cap: np.ndarray         # (H,) per-area price caps
    w_lb: float               # wage floor
    w_bar: np.ndarray         # (N, H) per-platform wage caps
    theta_bar: float          # substitutability in [0, 1]
    C: np.ndarray             # (H,) customer mass per area
    B: np.ndarray             # (N, M, H) linear driver preferences
    s: np.ndarray             # (N, M, H) driver-area distances
    beta: float               # scale of the capacity term
    Q: np.ndarray             # (H,) congestion coefficients
    d_min: np.ndarray         # (N, H) minimum rides per platform and area
    share_mode: str = "frozen-uniform"
    K_hat: Optional[np.ndarray] = None   # (N, H) reference availabilities
    big_m: float = 200.0
    omega: float = 0.1
    seed: Optional[int] = None

    def __post_init__(self):
        for name in ("p_cap", "w_bar", "C", "B", "s", "Q", "d_min"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.K_hat is None:
            self.K_hat = np.full((self.N, self.H), float(self.M))
        else:
            self.K_hat = np.asarray(self.K_hat, dtype=float)
        if self.share_mode not in SHARE_MODES:
            raise InvalidModelError(f"share_mode must be one of {SHARE_MODES}")

    @property
    def A(self) -> np.ndarray:
        """Quadratic capacity coefficients, (N, M, H), strictly positive."""
        return self.C[None, None, :] / (self.s * self.beta)

    def shares(self) -> np.ndarray:
        """sigma^{i,h}: frozen market-share factors, (N, H)."""
        denom = self.p_bar * self.K_hat.sum(axis=0)   # (H,)
        return self.C[None, :] * self.K_hat / denom[None, :]

    def check(self) -> None:
        if np.any(self.w_bar < self.w_lb):
            raise InvalidModelError("wage cap below the wage floor")
        if not self.p_bar > self.p_cap.max():
            raise InvalidModelError("p_bar must exceed every area price cap")
        if not 0.0 <= self.theta_bar <= 1.0:
            raise InvalidModelError("theta_bar must lie in [0, 1]")
        if np.any(self.C <= 0) or np.any(self.Q <= 0):
            raise InvalidModelError("C and Q must be positive")
        if np.any(self.A <= 0):
            raise InvalidModelError("capacity coefficients must be positive")
        if np.any(self.d_min > self.C[None, :]):
            raise InvalidModelError("minimum rides exceed the customer mass")
        if np.any(self.d_min > self.M * self.C[None, :]):
            raise InvalidModelError("minimum rides exceed total driver capacity")


def sample_params(N: int, M: int, H: int, seed: int) -> RidehailParams:
    """Draw one instance; deterministic in (N, M, H, seed).

    Intervals: area price caps U(16, 30), wage caps U(20, 28), customer
    mass U(50, 100), preferences U(6, 15), distances U(50, 5000) meters,
    capacity scale U(0.001, 0.1), congestion U(70, 150).  Fixed values:
    global price cap 32, wage floor 12, substitutability 0.9, minimum rides
    at 20% of the customer mass, dual caps 200, sweep scaling 0.1.
    """
    if N <= 0 or M <= 0 or H <= 0:
        raise InvalidModelError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    p_cap = rng.uniform(16.0, 30.0, size=H)
    w_bar = rng.uniform(20.0, 28.0, size=(N, H))
    C = rng.uniform(50.0, 100.0, size=H)
    B = rng.uniform(6.0, 15.0, size=(N, M, H))
    s = rng.uniform(50.0, 5000.0, size=(N, M, H))
    beta = float(rng.uniform(0.001, 0.1))
    Q = rng.uniform(70.0, 150.0, size=H)
    params = RidehailParams(
        N=N, M=M, H=H, p_bar=32.0, p_cap=p_cap, w_lb=12.0, w_bar=w_bar,
        theta_bar=0.9, C=C, B=B, s=s, beta=beta, Q=Q,
        d_min=np.tile(0.2 * C, (N, 1)), seed=seed)
    params.check()
    return params


def demand(params: RidehailParams, i: int, h: int, p_opponents) -> float:
    """Frozen-share demand for platform i in area h.

    p_opponents lists the other platforms' prices in area h (any order);
    with a single platform the substitutability term is zero.
    """
    sigma = params.shares()[i, h]
    p_opponents = np.asarray(p_opponents, dtype=float)
    if params.N > 1:
        cross = params.theta_bar / (params.N - 1) * float(p_opponents.sum())
    else:
        cross = 0.0
    return float(sigma * (params.p_bar - params.p_cap[h] + cross))


def build_potential(params: RidehailParams) -> QuadForm:
    """Exact potential of the price game over the stacked leader decisions.

    W(x) = -sum_h sigma^h [ (p_bar - p_cap^h) sum_i p^{i,h}
                            + theta/(N-1) sum_{i<j} p^{i,h} p^{j,h} ],
    which satisfies Delta W = Delta g^i for unilateral price changes.  Only
    uniform shares admit this form: per-platform shares would need an
    asymmetric cross coefficient, so that mode is refused.
    """
    if params.share_mode != "frozen-uniform":
        raise InvalidModelError(
            "exact potential requires frozen-uniform shares; "
            f"got share_mode={params.share_mode!r}")
    sigma = params.shares()[0]    # (H,), identical across platforms
    N, H = params.N, params.H
    n_total = N * 2 * H
    Qm = np.zeros((n_total, n_total))
    b = np.zeros(n_total)

    def p_idx(i, h):
        return i * 2 * H + h

    for h in range(H):
        for i in range(N):
            b[p_idx(i, h)] = -sigma[h] * (params.p_bar - params.p_cap[h])
        if N > 1:
            coef = -sigma[h] * params.theta_bar / (N - 1)
            for i in range(N):
                for j in range(i + 1, N):
                    Qm[p_idx(i, h), p_idx(j, h)] = coef
                    Qm[p_idx(j, h), p_idx(i, h)] = coef
    return QuadForm(Qm, b, 0.0)


def build_game(params: RidehailParams) -> HierarchicalGame:
    """Assemble the hierarchical game.

    Per platform i: x^i stacks prices then wages, boxed [0, p_cap] and
    [w_lb, w_bar].  Driver nu minimizes sum_h [A y^2 + (Q - w - B) y] with
    per-area boxes [0, C] and the platform's shared coverage rows
    sum_nu y_(nu,h) >= d_min.  Leader cost splits into the price part
    g^i = -sum_h p d (quadratic across leaders through opponent prices) and
    the wage bill h^i = sum_h w K, bilinear within the leader's own block.
    """
    params.check()
    N, M, H = params.N, params.M, params.H
    sigma = params.shares()
    A = params.A
    n = 2 * H
    n_total = N * n

    def p_idx(i, h):
        return i * n + h

    leaders = []
    for i in range(N):
        followers = []
        for nu in range(M):
            cost = FollowerCost(
                Q=np.diag(2.0 * A[i, nu]),
                q=params.Q - params.B[i, nu],
                R=np.hstack([np.zeros((H, H)), -np.eye(H)]))
            cons = FollowerConstraints(
                D_own=np.zeros((0, H)), A=np.zeros((0, n)), e=np.zeros(0),
                B=np.zeros((H, n)), E=tuple(np.eye(H) for _ in range(M)),
                c=params.d_min[i].copy())
            followers.append(Follower(cost=cost, cons=cons,
                                      y_lb=np.zeros(H), y_ub=params.C.copy()))

        # g^i over the stacked leader profile: -sum_h p^{i,h} d^{i,h}
        Qg = np.zeros((n_total, n_total))
        bg = np.zeros(n_total)
        for h in range(H):
            bg[p_idx(i, h)] = -sigma[i, h] * (params.p_bar - params.p_cap[h])
            if N > 1:
                coef = -sigma[i, h] * params.theta_bar / (N - 1)
                for j in range(N):
                    if j != i:
                        Qg[p_idx(i, h), p_idx(j, h)] += coef
                        Qg[p_idx(j, h), p_idx(i, h)] += coef
        cost_g = QuadForm(Qg, bg, 0.0)

        # h^i over (x^i, y^i): the wage bill sum_h w^{i,h} K^{i,h}
        dim_h = n + M * H
        Qh = np.zeros((dim_h, dim_h))
        for h in range(H):
            for nu in range(M):
                a = H + h                  # wage coordinate
                b = n + nu * H + h         # driver-service coordinate
                Qh[a, b] += 1.0
                Qh[b, a] += 1.0
        cost_h = QuadForm(Qh, np.zeros(dim_h), 0.0)

        leaders.append(LeaderSpec(
            n=n, G=np.zeros((0, n)), g0=np.zeros(0),
            x_lb=np.concatenate([np.zeros(H), np.full(H, params.w_lb)]),
            x_ub=np.concatenate([params.p_cap, params.w_bar[i]]),
            cost_g=cost_g, cost_h=cost_h, followers=tuple(followers)))

    potential = build_potential(params) if params.share_mode == "frozen-uniform" else None
    meta = {"name": f"ridehail-N{N}-M{M}-H{H}", "kind": "ridehail"}
    if params.seed is not None:
        meta["seed"] = int(params.seed)
    return HierarchicalGame(leaders=leaders, potential_W=potential,
                            mode="variational", metadata=meta)


@dataclass(frozen=True)
class MetricsReport:
    profits: tuple            # per platform, -F^i
    revenue: tuple            # per platform, sum_h p d
    wage_bill: tuple          # per platform, sum_h w K
    satisfaction: tuple       # per platform: tuple over areas, percent of C


def metrics(params: RidehailParams, blocks) -> MetricsReport:
    """Table of market outcomes at a population state."""
    N, H = params.N, params.H
    prices = np.array([blocks[i].x[:H] for i in range(N)])
    profits, revenue, wages, sat = [], [], [], []
    for i in range(N):
        rev = 0.0
        for h in range(H):
            opp = np.delete(prices[:, h], i)
            rev += prices[i, h] * demand(params, i, h, opp)
        w = blocks[i].x[H:]
        K = np.sum([blocks[i].y[nu] for nu in range(params.M)], axis=0)
        bill = float(w @ K)
        revenue.append(rev)
        wages.append(bill)
        profits.append(rev - bill)
        sat.append(tuple(100.0 * K[h] / params.C[h] for h in range(H)))
    return MetricsReport(profits=tuple(profits), revenue=tuple(revenue),
                         wage_bill=tuple(wages), satisfaction=tuple(sat))


def params_to_dict(params: RidehailParams) -> dict:
    return {
        "kind": "ridehail-params",
        "N": params.N, "M": params.M, "H": params.H,
        "p_bar": params.p_bar, "p_cap": params.p_cap.tolist(),
        "w_lb": params.w_lb, "w_bar": params.w_bar.tolist(),
        "theta_bar": params.theta_bar, "C": params.C.tolist(),
        "B": params.B.tolist(), "s": params.s.tolist(),
        "beta": params.beta, "Q": params.Q.tolist(),
        "d_min": params.d_min.tolist(), "share_mode": params.share_mode,
        "K_hat": params.K_hat.tolist(), "big_m": params.big_m,
        "omega": params.omega, "seed": params.seed,
    }


def params_from_dict(data: dict) -> RidehailParams:
    if data.get("kind") != "ridehail-params":
        raise InvalidModelError("not a ridehail parameter document")
    fields_ = {k: v for k, v in data.items() if k != "kind"}
    return RidehailParams(**fields_)


@dataclass
class InstanceRow:
    seed: int
    algo: str
    status: str
    sweeps: int
    final_d: float
    escalations: int
    flag_count: int
    certified: bool
    mean_profit: float
    min_satisfaction: float
    max_satisfaction: float
    time_s: float
    error: str = ""


@dataclass
class BatchReport:
    rows: list
    algo: str

    @property
    def converged_fraction(self) -> float:
        done = [r for r in self.rows if not r.error]
        if not done:
            return 0.0
        return sum(r.status == "converged" for r in done) / len(self.rows)

    def aggregate(self) -> dict:
        ok = [r for r in self.rows if not r.error and r.status == "converged"]
        def stats(vals):
            vals = list(vals)
            if not vals:
                return {"mean": float("nan"), "min": float("nan"), "max": float("nan")}
            return {"mean": float(np.mean(vals)), "min": float(np.min(vals)),
                    "max": float(np.max(vals))}
        return {
            "algo": self.algo,
            "instances": len(self.rows),
            "converged_fraction": self.converged_fraction,
            "sweeps": stats(r.sweeps for r in ok),
            "profit": stats(r.mean_profit for r in ok),
            "satisfaction_min": stats(r.min_satisfaction for r in ok),
            "time_s": stats(r.time_s for r in ok),
            "flagged_instances": sum(1 for r in self.rows if r.flag_count or r.escalations),
        }


def _run_one(seed: int, scale: tuple, algo: str, pgs_cfg: PgsConfig,
             eg_cfg: EgConfig, out_dir, verify_tol: float):
    """Solve one sampled instance; never raises (errors land in the row)."""
    N, M, H = scale
    t0 = time.perf_counter()
    try:
        params = sample_params(N, M, H, seed)
        game = build_game(params)
        if algo == "pgs":
            res = run_escalating(game, pgs_cfg)
            blocks, traj, status = res.blocks, res.trajectory, res.status
            escal, flags = res.attempts - 1, len(res.flags)
            certified = False
            if status == "converged":
                rep = verify_equilibrium(game, blocks, tol=verify_tol,
                                         policy=res.policy, solver=pgs_cfg.solver)
                certified = rep.certified
        elif algo == "eg":
            blocks, traj, status = run_baseline(game, eg_cfg)
            escal, flags, certified = 0, 0, False
        else:
            raise ValueError(f"unknown algo {algo!r}")
        mets = metrics(params, blocks)
        sat = [v for row in mets.satisfaction for v in row]
        row = InstanceRow(
            seed=seed, algo=algo, status=status, sweeps=len(traj),
            final_d=traj.records[-1].cost_to_move if traj.records else float("nan"),
            escalations=escal, flag_count=flags, certified=certified,
            mean_profit=float(np.mean(mets.profits)),
            min_satisfaction=float(min(sat)), max_satisfaction=float(max(sat)),
            time_s=time.perf_counter() - t0)
        if out_dir is not None:
            traj.write_csv(f"{out_dir}/trajectory_seed{seed}_{algo}.csv")
        return row
    except Exception as exc:   # per-instance failures are data, not crashes
        return InstanceRow(seed=seed, algo=algo, status="error", sweeps=0,
                           final_d=float("nan"), escalations=0, flag_count=0,
                           certified=False, mean_profit=float("nan"),
                           min_satisfaction=float("nan"),
                           max_satisfaction=float("nan"),
                           time_s=time.perf_counter() - t0,
                           error=f"{type(exc).__name__}: {exc}")


def run_batch(n_instances: int, base_seed: int, scale: tuple, algo: str = "pgs",
              pgs_cfg: PgsConfig = None, eg_cfg: EgConfig = None,
              out_dir=None, jobs: int = 1, verify_tol: float = 1e-5) -> BatchReport:
    """Sample and solve n_instances games at the given (N, M, H) scale.

    Per-instance trajectories are written when out_dir is given, along with
    an aggregate CSV; failures are recorded in their rows rather than
    aborting the batch.  jobs > 1 distributes instances across processes.
    """
    pgs_cfg = pgs_cfg or PgsConfig(stop_eps=1e-4, max_sweeps=30)
    eg_cfg = eg_cfg or EgConfig(stop_eps=1e-4)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    seeds = [base_seed + k for k in range(n_instances)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_one, seeds, repeat(scale), repeat(algo),
                                 repeat(pgs_cfg), repeat(eg_cfg),
                                 repeat(out_dir), repeat(verify_tol)))
    else:
        rows = [_run_one(sd, scale, algo, pgs_cfg, eg_cfg, out_dir, verify_tol)
                for sd in seeds]
    report = BatchReport(rows=rows, algo=algo)
    if out_dir is not None:
        path = f"{out_dir}/batch_{algo}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["seed", "algo", "status", "sweeps", "final_d",
                             "escalations", "flag_count", "certified",
                             "mean_profit", "min_satisfaction",
                             "max_satisfaction", "time_s", "error"])
            for r in rows:
                writer.writerow([r.seed, r.algo, r.status, r.sweeps, repr(r.final_d),
                                 r.escalations, r.flag_count, r.certified,
                                 repr(r.mean_profit), repr(r.min_satisfaction),
                                 repr(r.max_satisfaction), repr(r.time_s), r.error])
    return report
