"""Proximal best-response dynamics over the leaders' mixed-integer game.

Each sweep visits the leaders in index order.  Leader i minimizes its own
cost against the opponents' latest blocks plus a proximal term
tau * rho(z_i - w_i) centered at its own current block, solved as a
mixed-integer program over its single-level encoding.  Because the game
carries an exact potential, every exact best response with the proximal
term decreases the potential, and the sweep map converges to a fixed point
that is simultaneously a mixed-integer Nash point and (by construction of
the encodings) a leader-follower equilibrium.

The proximal weight follows tau' = max(omega * tau, min(tau, d)) where d is
the cost-to-move of the last sweep: tau never increases, never drops below
an omega fraction per sweep, and collapses toward the observed step size.

Two intra-cost regularization choices are supported.  "squared-euclidean"
uses rho(v) = ||v||^2, keeping subproblems quadratic.  "euclidean-approx"
reports rho(v) = ||v|| in the cost-to-move but still solves quadratic
subproblems, rescaling the proximal weight by the previous step length so
the quadratic penalty matches the linear one at that scale; the substitution
avoids second-order-cone machinery and is documented as a deviation.
"""

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .encoding import BigMPolicy, MIEncoding, audit_point, build_encoding
from .errors import SolverError, TrajectoryError
from .miqp import PlainProgram, SolveReport, SolverConfig, decompose_objective, solve
from .model import HierarchicalGame, LeaderBlock

ICRF_KINDS = ("squared-euclidean", "euclidean-approx")

# floor for the previous-step length used to rescale the proximal weight in
# euclidean-approx mode; prevents blowup as steps vanish
_APPROX_STEP_FLOOR = 1e-3


@dataclass
class PgsConfig:
    """Sweep-loop settings.

    seed randomizes only the initial state (opponent profile drawn uniformly
    in the leader boxes instead of zeros); the sweeps themselves are
    deterministic.
    """

    tau0: float = 1.0
    omega: float = 0.1
    icrf: str = "squared-euclidean"
    stop_eps: float = 1e-6
    max_sweeps: int = 100
    seed: Optional[int] = None
    solver: SolverConfig = None
    policy: BigMPolicy = None

    def __post_init__(self):
        if self.tau0 <= 0:
            raise ValueError("tau0 must be positive")
        if not 0.0 < self.omega < 1.0:
            raise ValueError("omega must lie in (0, 1)")
        if self.stop_eps < 0:
            raise ValueError("stop_eps must be nonnegative")
        if self.icrf not in ICRF_KINDS:
            raise ValueError(f"icrf must be one of {ICRF_KINDS}, got {self.icrf!r}")
        if self.solver is None:
            self.solver = SolverConfig()
        if self.policy is None:
            self.policy = BigMPolicy()


@dataclass(frozen=True)
class SweepRecord:
    sweep: int                # 1-based sweep counter
    potential: float          # potential at the state this sweep produced
    cost_to_move: float       # d_rho between the pre- and post-sweep states
    tau: float                # proximal weight used during this sweep
    costs: tuple              # per-leader cost at the post-sweep state
    time_s: float             # summed best-response wall time
    leader_times: tuple


@dataclass
class Trajectory:
    """Per-sweep log of one run, with the two monotonicity laws checkable."""

    algo: str
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def check(self, n_leaders: int, gap_tol: float, omega: float = None) -> None:
        """Raise TrajectoryError unless descent and the tau law hold.

        Descent allows N * gap_tol slack per sweep (each of the N best
        responses is only optimal up to the solver's gap tolerance).  The
        tau law checks omega * tau_k <= tau_{k+1} <= tau_k when omega is
        given, plain monotonicity otherwise.  Records with NaN potential
        (games without a potential function) skip the descent check.
        """
        slack = n_leaders * gap_tol
        for a, b in zip(self.records, self.records[1:]):
            if np.isfinite(a.potential) and np.isfinite(b.potential):
                if b.potential > a.potential + slack:
                    raise TrajectoryError(
                        f"potential rose from {a.potential!r} to {b.potential!r} "
                        f"at sweep {b.sweep} (allowed slack {slack!r})")
            if b.tau > a.tau + 1e-15:
                raise TrajectoryError(
                    f"tau rose from {a.tau!r} to {b.tau!r} at sweep {b.sweep}")
            if omega is not None and b.tau < omega * a.tau - 1e-15:
                raise TrajectoryError(
                    f"tau fell below omega * tau ({omega * a.tau!r}) at sweep {b.sweep}")

    def write_csv(self, path, manifest: str = "") -> None:
        n = max((len(r.costs) for r in self.records), default=0)
        cols = ["sweep", "potential", "cost_to_move", "tau"]
        cols += [f"J_{i + 1}" for i in range(n)]
        cols += ["time_s"]
        lines = []
        head = f"# algo={self.algo}"
        if manifest:
            head = f"# manifest={manifest} algo={self.algo}"
        lines.append(head)
        lines.append(",".join(cols))
        for r in self.records:
            row = [str(r.sweep), repr(r.potential), repr(r.cost_to_move), repr(r.tau)]
            row += [repr(c) for c in r.costs]
            row += [repr(r.time_s)]
            lines.append(",".join(row))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def icrf_eval(kind: str, dz) -> float:
    """Intra-cost regularization of a displacement vector."""
    dz = np.asarray(dz, dtype=float)
    sq = float(dz @ dz)
    if kind == "squared-euclidean":
        return sq
    if kind == "euclidean-approx":
        return float(np.sqrt(sq))
    raise ValueError(f"unknown icrf kind {kind!r}")


def _block_move(kind: str, new: LeaderBlock, old: LeaderBlock) -> float:
    sq = new.diff_sqnorm(old)
    return sq if kind == "squared-euclidean" else float(np.sqrt(sq))


def cost_to_move(z_next, z_prev, kind: str = "squared-euclidean") -> float:
    """d_rho: the largest single-leader regularization over the move."""
    if len(z_next) != len(z_prev):
        raise ValueError("population states have different leader counts")
    if not z_next:
        return 0.0
    return max(_block_move(kind, a, b) for a, b in zip(z_next, z_prev))


def tau_update(tau: float, omega: float, d: float) -> float:
    """max(omega * tau, min(tau, d)): nonincreasing, floored at omega * tau."""
    return max(omega * tau, min(tau, d))


def _encodings(game: HierarchicalGame, policy: BigMPolicy):
    return [build_encoding(game, i, policy=policy) for i in range(game.N)]


def _program_for(enc: MIEncoding):
    # leader objectives may couple own x with own y (bilinear revenue and
    # wage-bill terms); advertising the x/non-x split keeps decomposition
    # bipartite so both solver paths stay exact
    left = list(map(int, enc.var_map["x"]))
    right = [j for j in range(enc.n_vars) if j not in set(left)]
    return PlainProgram.build(
        enc.n_vars, A_eq=enc.A_eq, b_eq=enc.b_eq, A_in=enc.A_in, b_in=enc.b_in,
        lb=enc.lb, ub=enc.ub, binary_idx=enc.binary_idx, groups=(left, right))


def _solve_leader(enc, prog, objective, solver_cfg, warm=None) -> SolveReport:
    spec = decompose_objective(objective, prog.bilinear_groups)
    cfg = replace(solver_cfg, warm_start=warm)
    return solve(prog, spec, cfg)


def initial_state(game: HierarchicalGame, policy: BigMPolicy = None,
                  solver: SolverConfig = None, seed: Optional[int] = None):
    """Feasible starting blocks: one exact solve per leader, in index order.

    Opponent decisions are taken as zero (or drawn uniformly in the leader
    boxes when seed is given); each leader's block is a global minimizer of
    its own encoding at that frozen profile, so the state is feasible
    blockwise by construction.
    """
    policy = policy or BigMPolicy()
    solver = solver or SolverConfig()
    x_profile = np.zeros(game.n_total)
    if seed is not None:
        rng = np.random.default_rng(seed)
        for i, ld in enumerate(game.leaders):
            lo = np.where(np.isfinite(ld.x_lb), ld.x_lb, -1.0)
            hi = np.where(np.isfinite(ld.x_ub), ld.x_ub, 1.0)
            x_profile[game.x_indices(i)] = rng.uniform(lo, hi)
    blocks, encs, progs = [], [], []
    for i in range(game.N):
        enc = build_encoding(game, i, policy=policy)
        prog = _program_for(enc)
        rep = _solve_leader(enc, prog, enc.objective_for(x_profile), solver)
        if rep.status != "optimal":
            raise SolverError(
                f"leader {i}: initial subproblem ended {rep.status}; "
                "cannot build a feasible starting state")
        blocks.append(enc.extract_block(rep.incumbent))
        encs.append(enc)
        progs.append(prog)
    return blocks, encs, progs


def proximal_best_response(game: HierarchicalGame, i: int, blocks, tau: float,
                           cfg: PgsConfig = None, enc: MIEncoding = None,
                           prog: PlainProgram = None, prox_scale: float = 1.0):
    """Global minimizer of leader i's cost plus tau * rho(. - own block).

    blocks is the current population state; the proximal center is leader
    i's own block in it.  Returns (LeaderBlock, SolveReport).
    """
    cfg = cfg or PgsConfig()
    enc = enc or build_encoding(game, i, policy=cfg.policy)
    prog = prog or _program_for(enc)
    x_profile = game.x_stack(blocks)
    center = enc.block_to_flat(blocks[i])
    if tau > 0:
        objective = enc.proximal_objective(x_profile, tau * prox_scale, center)
    else:
        objective = enc.objective_for(x_profile)
    rep = _solve_leader(enc, prog, objective, cfg.solver, warm=center)
    if rep.status != "optimal":
        raise SolverError(f"leader {i}: proximal subproblem ended {rep.status}")
    return enc.extract_block(rep.incumbent), rep


def sweep(game: HierarchicalGame, encs, progs, blocks, tau: float,
          cfg: PgsConfig, prox_scales=None):
    """One ordered round of proximal best responses.

    Returns (new_blocks, hat_states, reports, leader_times).  hat_states
    lists the intermediate populations: hat_states[0] is the input state and
    hat_states[N] the output, with hat_states[i] differing from its
    predecessor only in block i-1.
    """
    state = list(blocks)
    hats = [tuple(state)]
    reports, times = [], []
    for i in range(game.N):
        scale = 1.0 if prox_scales is None else prox_scales[i]
        t0 = time.perf_counter()
        blk, rep = proximal_best_response(game, i, state, tau, cfg,
                                          enc=encs[i], prog=progs[i],
                                          prox_scale=scale)
        times.append(time.perf_counter() - t0)
        state[i] = blk
        hats.append(tuple(state))
        reports.append(rep)
    return state, hats, reports, times


def _potential_or_nan(game: HierarchicalGame, blocks) -> float:
    if game.potential_W is None:
        return float("nan")
    return game.potential(blocks)


def run(game: HierarchicalGame, cfg: PgsConfig = None):
    """Iterate sweeps until the cost-to-move drops below stop_eps.

    Returns (blocks, Trajectory, status) with status "converged" or
    "sweep_limit".  An exact fixed point (no block changed at all) also
    counts as converged, so stop_eps = 0 terminates.
    """
    cfg = cfg or PgsConfig()
    blocks, encs, progs = initial_state(game, cfg.policy, cfg.solver, cfg.seed)
    traj = Trajectory(algo="pgs")
    tau = cfg.tau0
    # per-leader proximal rescale for euclidean-approx: 1 / previous step
    scales = [1.0] * game.N
    status = "sweep_limit"
    for k in range(1, cfg.max_sweeps + 1):
        new_blocks, hats, reports, times = sweep(
            game, encs, progs, blocks, tau, cfg,
            prox_scales=scales if cfg.icrf == "euclidean-approx" else None)
        assert all(a is b for a, b in zip(hats[0], blocks))
        assert all(a is b for a, b in zip(hats[-1], new_blocks))
        d = cost_to_move(new_blocks, blocks, cfg.icrf)
        if cfg.icrf == "euclidean-approx":
            scales = [1.0 / max(_block_move(cfg.icrf, a, b), _APPROX_STEP_FLOOR)
                      for a, b in zip(new_blocks, blocks)]
        moved = any(a.diff_sqnorm(b) > 0.0 for a, b in zip(new_blocks, blocks))
        blocks = new_blocks
        costs = tuple(game.joint_cost(i, blocks) for i in range(game.N))
        traj.records.append(SweepRecord(
            sweep=k, potential=_potential_or_nan(game, blocks),
            cost_to_move=d, tau=tau, costs=costs,
            time_s=float(sum(times)), leader_times=tuple(times)))
        tau = tau_update(tau, cfg.omega, d)
        if d <= cfg.stop_eps or not moved:
            status = "converged"
            break
    return blocks, traj, status


@dataclass(frozen=True)
class VerificationReport:
    improvements: tuple       # per-leader J(current) - J(best response)
    certified: bool           # all improvements <= tol
    flags: tuple              # big-M audit findings on the supplied state
    tol: float


def verify_equilibrium(game: HierarchicalGame, blocks, tol: float = 1e-5,
                       policy: BigMPolicy = None,
                       solver: SolverConfig = None) -> VerificationReport:
    """One ordered round of exact (tau = 0) best responses.

    Each leader's improvement is measured at its turn, with earlier leaders
    already moved; a state is certified when no leader can improve by more
    than tol.  The supplied blocks are also audited against the big-M caps,
    and any near-cap multiplier or slack is reported as a flag.
    """
    policy = policy or BigMPolicy()
    solver = solver or SolverConfig()
    state = list(blocks)
    improvements, flags = [], []
    for i in range(game.N):
        enc = build_encoding(game, i, policy=policy)
        prog = _program_for(enc)
        audit = audit_point(enc, enc.block_to_flat(blocks[i]))
        flags.extend(f"leader {i}: {msg}" for msg in audit.flags)
        current_cost = game.joint_cost(i, state)
        rep = _solve_leader(enc, prog, enc.objective_for(game.x_stack(state)),
                            solver, warm=enc.block_to_flat(state[i]))
        if rep.status != "optimal":
            raise SolverError(f"leader {i}: verification subproblem ended {rep.status}")
        improvements.append(current_cost - rep.value)
        state[i] = enc.extract_block(rep.incumbent)
    certified = all(imp <= tol for imp in improvements)
    return VerificationReport(improvements=tuple(improvements),
                              certified=certified, flags=tuple(flags), tol=tol)


@dataclass(frozen=True)
class EscalationResult:
    blocks: tuple
    trajectory: Trajectory
    status: str
    policy: BigMPolicy
    flags: tuple              # audit findings at the final policy
    attempts: int             # number of cap policies tried


def run_escalating(game: HierarchicalGame, cfg: PgsConfig = None,
                   max_doublings: int = 8) -> EscalationResult:
    """run() under automatic big-M escalation.

    A run whose final state trips the cap audit (or whose subproblems turn
    infeasible because the caps cut off every KKT certificate) is repeated
    with the caps doubled, up to max_doublings times.  The final attempt's
    outcome is returned either way; flags stay nonempty only when even the
    largest caps were insufficient.
    """
    cfg = cfg or PgsConfig()
    policy = cfg.policy
    attempts = 0
    last = None
    while True:
        attempts += 1
        attempt_cfg = replace(cfg, policy=policy)
        try:
            blocks, traj, status = run(game, attempt_cfg)
        except SolverError:
            if attempts > max_doublings:
                raise
            policy = policy.scaled(2.0)
            continue
        flags = []
        for i in range(game.N):
            enc = build_encoding(game, i, policy=policy)
            audit = audit_point(enc, enc.block_to_flat(blocks[i]))
            flags.extend(f"leader {i}: {msg}" for msg in audit.flags)
        last = EscalationResult(blocks=tuple(blocks), trajectory=traj,
                                status=status, policy=policy,
                                flags=tuple(flags), attempts=attempts)
        if not flags or attempts > max_doublings:
            return last
        policy = policy.scaled(2.0)
