"""Game data model: leaders, followers, costs, and feasibility structure.

A hierarchical game has N leaders.  Leader i controls x_i inside a polyhedron
{x : G x + g0 >= 0, x_lb <= x <= x_ub} and pays

    F_i = cost_g(x_1, ..., x_N) + cost_h(x_i, y_i),

where y_i stacks the decisions of leader i's M_i followers.  Follower nu of
leader i solves a convex quadratic program parameterized by x_i and the other
followers' decisions,

    min_y  1/2 y'Q y + (q + R x_i + sum_mu S[mu] y_mu)' y + c0
    s.t.   D_own y + A x_i + sum_mu D_cross[mu] y_mu - e >= 0      (private)
           B x_i + sum_mu E[mu] y_mu - c >= 0                      (shared)

with the shared rows common to all followers of the same leader.  The sign
convention is fixed once here: every constraint row is written as
"expression >= 0" and its slack is the left-hand side.

When the leaders' costs decompose against a common function W of the joint
leader profile (cost_g_i - W independent of x_i for every i), W plus the sum
of the cost_h terms is an exact potential for the one-shot game among leaders;
`HierarchicalGame.potential` evaluates it and `validate_game` spot-checks the
defining identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .quadform import QuadForm, _frozen

MODE_VARIATIONAL = "variational"
MODE_GNE = "gne"
MODES = (MODE_VARIATIONAL, MODE_GNE)


@dataclass(frozen=True)
class FollowerCost:
    """Quadratic follower objective 1/2 y'Qy + (q + Rx + sum S[mu] y_mu)'y + c0.

    Q must be positive semidefinite (followers solve convex programs).  S maps
    an opponent-follower index mu to the (p_self x p_mu) coupling matrix;
    absent keys mean zero coupling.
    """

    Q: np.ndarray
    q: np.ndarray
    R: np.ndarray
    S: dict = field(default_factory=dict)
    c0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "Q", _frozen(0.5 * (np.atleast_2d(self.Q) + np.atleast_2d(self.Q).T)))
        object.__setattr__(self, "q", _frozen(self.q))
        object.__setattr__(self, "R", _frozen(np.atleast_2d(self.R)))
        object.__setattr__(self, "S", {int(k): _frozen(v) for k, v in self.S.items()})
        object.__setattr__(self, "c0", float(self.c0))

    @property
    def p(self) -> int:
        return self.q.shape[0]

    def linear_term(self, x: np.ndarray, y_all: list, self_idx: int) -> np.ndarray:
        """The y-linear coefficient q + Rx + sum_{mu != self} S[mu] y_mu."""
        lin = self.q + self.R @ x
        for mu, S in self.S.items():
            if mu != self_idx:
                lin = lin + S @ y_all[mu]
        return lin

    def grad(self, x: np.ndarray, y_all: list, self_idx: int) -> np.ndarray:
        return self.Q @ y_all[self_idx] + self.linear_term(x, y_all, self_idx)

    def value(self, x: np.ndarray, y_all: list, self_idx: int) -> float:
        y = y_all[self_idx]
        return float(0.5 * y @ self.Q @ y + self.linear_term(x, y_all, self_idx) @ y + self.c0)


@dataclass(frozen=True)
class FollowerConstraints:
    """Private and shared constraint rows of one follower.

    Private rows (r of them):  D_own y + A x + sum_mu D_cross[mu] y_mu >= e.
    Shared rows (d of them):   B x + sum_mu E[mu] y_mu >= c, with E listing one
    matrix per follower of the same leader.  Shared data is stored on every
    follower and must agree across them (validate_game checks).
    """

    D_own: np.ndarray
    A: np.ndarray
    e: np.ndarray
    B: np.ndarray
    E: tuple
    c: np.ndarray
    D_cross: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "D_own", _frozen(np.atleast_2d(self.D_own)))
        object.__setattr__(self, "A", _frozen(np.atleast_2d(self.A)))
        object.__setattr__(self, "e", _frozen(self.e))
        object.__setattr__(self, "B", _frozen(np.atleast_2d(self.B)))
        object.__setattr__(self, "E", tuple(_frozen(Em) for Em in self.E))
        object.__setattr__(self, "c", _frozen(self.c))
        object.__setattr__(self, "D_cross", {int(k): _frozen(v) for k, v in self.D_cross.items()})

    @property
    def r(self) -> int:
        return self.e.shape[0]

    @property
    def d(self) -> int:
        return self.c.shape[0]

    def private_slack(self, x: np.ndarray, y_all: list, self_idx: int) -> np.ndarray:
        s = self.D_own @ y_all[self_idx] + self.A @ x - self.e
        for mu, D in self.D_cross.items():
            if mu != self_idx:
                s = s + D @ y_all[mu]
        return s

    def shared_slack(self, x: np.ndarray, y_all: list) -> np.ndarray:
        s = self.B @ x - self.c
        for mu, Em in enumerate(self.E):
            s = s + Em @ y_all[mu]
        return s


@dataclass(frozen=True)
class Follower:
    """One follower: cost, constraints, and optional box bounds on y.

    Boxes are advisory data for the solver (branching intervals, bilinear
    envelopes); feasibility itself is carried entirely by the constraint rows.
    """

    cost: FollowerCost
    cons: FollowerConstraints
    y_lb: Optional[np.ndarray] = None
    y_ub: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.y_lb is not None:
            object.__setattr__(self, "y_lb", _frozen(self.y_lb))
        if self.y_ub is not None:
            object.__setattr__(self, "y_ub", _frozen(self.y_ub))

    @property
    def p(self) -> int:
        return self.cost.p

    def box(self) -> tuple:
        lo = self.y_lb if self.y_lb is not None else np.full(self.p, -np.inf)
        hi = self.y_ub if self.y_ub is not None else np.full(self.p, np.inf)
        return lo, hi


@dataclass(frozen=True)
class LeaderSpec:
    """One leader: own feasible set, cost pieces, and follower list.

    cost_g is a quadratic form over the *stacked* leader profile (dimension
    sum_j n_j); cost_h is a quadratic form over (x_i, y_i) stacked (dimension
    n + sum_nu p_nu).  The additive split cost_g + cost_h is load-bearing: the
    potential machinery and the single-leader subproblems both rely on it.
    """

    n: int
    G: np.ndarray
    g0: np.ndarray
    x_lb: np.ndarray
    x_ub: np.ndarray
    cost_g: QuadForm
    cost_h: QuadForm
    followers: tuple

    def __post_init__(self):
        object.__setattr__(self, "G", _frozen(np.atleast_2d(self.G) if np.size(self.G) else np.zeros((0, self.n))))
        object.__setattr__(self, "g0", _frozen(np.atleast_1d(self.g0) if np.size(self.g0) else np.zeros(0)))
        object.__setattr__(self, "x_lb", _frozen(self.x_lb))
        object.__setattr__(self, "x_ub", _frozen(self.x_ub))
        object.__setattr__(self, "followers", tuple(self.followers))

    @property
    def M(self) -> int:
        return len(self.followers)

    @property
    def p_list(self) -> list:
        return [f.p for f in self.followers]

    @property
    def p_total(self) -> int:
        return sum(self.p_list)

    @property
    def d(self) -> int:
        return self.followers[0].cons.d if self.followers else 0

    def y_split(self, y_stacked: np.ndarray) -> list:
        out, at = [], 0
        for p in self.p_list:
            out.append(y_stacked[at:at + p])
            at += p
        return out


@dataclass
class ValidationReport:
    issues: list

    @property
    def ok(self) -> bool:
        return not self.issues


@dataclass(frozen=True)
class LeaderBlock:
    """One leader's slice of a joint strategy profile.

    Fields mirror the single-level encoding variables: own decision x, follower
    decisions y (list per follower), private multipliers lam (list per
    follower), shared multipliers delta (one vector in variational mode, one
    per follower in GNE mode), and the complementarity binaries s / t aligned
    with lam / delta.
    """

    x: np.ndarray
    y: tuple
    lam: tuple
    delta: tuple
    s: tuple
    t: tuple

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(self.x))
        object.__setattr__(self, "y", tuple(_frozen(v) for v in self.y))
        object.__setattr__(self, "lam", tuple(_frozen(v) for v in self.lam))
        object.__setattr__(self, "delta", tuple(_frozen(v) for v in self.delta))
        object.__setattr__(self, "s", tuple(_frozen(v) for v in self.s))
        object.__setattr__(self, "t", tuple(_frozen(v) for v in self.t))

    @property
    def y_stacked(self) -> np.ndarray:
        return np.concatenate(self.y) if self.y else np.zeros(0)

    def diff_sqnorm(self, other: "LeaderBlock") -> float:
        """Squared Euclidean distance over all fields (binaries included as
        their 0/1 values, so a flipped binary contributes 1)."""
        tot = float(np.sum((self.x - other.x) ** 2))
        for a, b in ((self.y, other.y), (self.lam, other.lam), (self.delta, other.delta),
                     (self.s, other.s), (self.t, other.t)):
            for u, v in zip(a, b):
                tot += float(np.sum((u - v) ** 2))
        return tot


@dataclass(frozen=True)
class HierarchicalGame:
    """The full multi-leader multi-follower game.

    mode selects which shared-constraint multipliers the single-level
    encodings carry: "variational" keeps a single copy per leader (variational
    equilibria of the followers' game), "gne" keeps one copy per follower.
    """

    leaders: tuple
    potential_W: Optional[QuadForm] = None
    mode: str = MODE_VARIATIONAL
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "leaders", tuple(self.leaders))
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def N(self) -> int:
        return len(self.leaders)

    @property
    def n_total(self) -> int:
        return sum(l.n for l in self.leaders)

    def x_offset(self, i: int) -> int:
        return sum(l.n for l in self.leaders[:i])

    def x_stack(self, blocks) -> np.ndarray:
        return np.concatenate([b.x for b in blocks])

    def x_indices(self, i: int) -> np.ndarray:
        off = self.x_offset(i)
        return np.arange(off, off + self.leaders[i].n)

    # ---- follower-level evaluation ------------------------------------

    def follower_gradient(self, i: int, nu: int, x_i, y_all) -> np.ndarray:
        """Gradient of follower nu's cost in its own decision."""
        return self.leaders[i].followers[nu].cost.grad(np.asarray(x_i, float), [np.asarray(v, float) for v in y_all], nu)

    def follower_cost(self, i: int, nu: int, x_i, y_all) -> float:
        return self.leaders[i].followers[nu].cost.value(np.asarray(x_i, float), [np.asarray(v, float) for v in y_all], nu)

    def follower_rows(self, i: int, nu: int, x_i, y_all) -> tuple:
        """Constraint rows over y_nu with everything else frozen.

        Returns (A, b, lb, ub) for {y : A y >= b, lb <= y <= ub}: the private
        rows, then the shared rows, then the follower's box.
        """
        ld = self.leaders[i]
        f = ld.followers[nu]
        x_i = np.asarray(x_i, float)
        y_all = [np.asarray(v, float) for v in y_all]
        cons = f.cons
        b_priv = cons.e - cons.A @ x_i
        for mu, D in cons.D_cross.items():
            if mu != nu:
                b_priv = b_priv - D @ y_all[mu]
        b_shared = cons.c - cons.B @ x_i
        for mu, Em in enumerate(cons.E):
            if mu != nu:
                b_shared = b_shared - Em @ y_all[mu]
        A = np.vstack([cons.D_own, cons.E[nu]])
        b = np.concatenate([b_priv, b_shared])
        lo, hi = f.box()
        return A, b, lo, hi

    def joint_follower_rows(self, i: int, x_i) -> tuple:
        """All follower constraints of leader i over the stacked y_i.

        Returns (A, b, lb, ub): private rows for each follower in order, then
        the shared rows once, then the stacked boxes.
        """
        ld = self.leaders[i]
        x_i = np.asarray(x_i, float)
        p_tot = ld.p_total
        offs = np.cumsum([0] + ld.p_list)
        rows, rhs = [], []
        for nu, f in enumerate(ld.followers):
            cons = f.cons
            blocks = np.zeros((cons.r, p_tot))
            blocks[:, offs[nu]:offs[nu + 1]] = cons.D_own
            for mu, D in cons.D_cross.items():
                if mu != nu:
                    blocks[:, offs[mu]:offs[mu + 1]] += D
            rows.append(blocks)
            rhs.append(cons.e - cons.A @ x_i)
        if ld.followers and ld.d > 0:
            cons0 = ld.followers[0].cons
            shared = np.zeros((cons0.d, p_tot))
            for mu, Em in enumerate(cons0.E):
                shared[:, offs[mu]:offs[mu + 1]] = Em
            rows.append(shared)
            rhs.append(cons0.c - cons0.B @ x_i)
        A = np.vstack(rows) if rows else np.zeros((0, p_tot))
        b = np.concatenate(rhs) if rhs else np.zeros(0)
        lo = np.concatenate([f.box()[0] for f in ld.followers]) if ld.followers else np.zeros(0)
        hi = np.concatenate([f.box()[1] for f in ld.followers]) if ld.followers else np.zeros(0)
        return A, b, lo, hi

    def follower_best_response(self, i: int, nu: int, x_i, y_all):
        """Exact best response of one follower against frozen opponents.

        Solves the follower's convex QP; raises InfeasibleRegionError or
        UnboundedObjectiveError when the parameterized problem is bad.
        Used as the ground-truth oracle behind the equilibrium encodings.
        """
        from . import qp
        from .errors import InfeasibleRegionError, UnboundedObjectiveError

        ld = self.leaders[i]
        f = ld.followers[nu]
        x_i = np.asarray(x_i, float)
        y_all = [np.asarray(v, float) for v in y_all]
        A, b, lo, hi = self.follower_rows(i, nu, x_i, y_all)
        lin = f.cost.linear_term(x_i, y_all, nu)
        res = qp.solve_qp(f.cost.Q, lin, A_in=A, b_in=b, lb=lo, ub=hi)
        if res.status == "infeasible":
            raise InfeasibleRegionError(f"follower {nu} of leader {i}: empty feasible set at this x")
        if res.status == "unbounded":
            raise UnboundedObjectiveError(f"follower {nu} of leader {i}: objective unbounded below")
        return res.x

    # ---- leader-level evaluation --------------------------------------

    def leader_cost(self, i: int, x_stacked, y_i_stacked) -> float:
        """F_i = cost_g(all leaders' x) + cost_h(own x, own followers' y)."""
        ld = self.leaders[i]
        x_stacked = np.asarray(x_stacked, float)
        xi = x_stacked[self.x_indices(i)]
        u = np.concatenate([xi, np.asarray(y_i_stacked, float)])
        return ld.cost_g.value(x_stacked) + ld.cost_h.value(u)

    def joint_cost(self, i: int, blocks) -> float:
        return self.leader_cost(i, self.x_stack(blocks), blocks[i].y_stacked)

    def potential(self, blocks) -> float:
        """W(x) + sum_i cost_h_i(x_i, y_i); requires potential_W."""
        if self.potential_W is None:
            raise ValueError("game has no potential function; construct one or supply potential_W")
        x = self.x_stack(blocks)
        tot = self.potential_W.value(x)
        for i, ld in enumerate(self.leaders):
            u = np.concatenate([blocks[i].x, blocks[i].y_stacked])
            tot += ld.cost_h.value(u)
        return tot


def validate_game(g: HierarchicalGame) -> ValidationReport:
    """Structural checks: dimensions, PSD follower Hessians, shared-row
    consistency across followers, separable cost shapes, and (when a
    potential is present) the exact-potential identity on sampled deviations.
    """
    issues = []
    n_total = g.n_total
    for i, ld in enumerate(g.leaders):
        tag = f"leader {i}"
        if ld.G.shape[1] != ld.n and ld.G.shape[0] > 0:
            issues.append(f"{tag}: G has {ld.G.shape[1]} columns, expected {ld.n}")
        if ld.G.shape[0] != ld.g0.shape[0]:
            issues.append(f"{tag}: G rows and g0 length differ")
        if ld.x_lb.shape != (ld.n,) or ld.x_ub.shape != (ld.n,):
            issues.append(f"{tag}: x bounds must have shape ({ld.n},)")
        elif np.any(ld.x_lb > ld.x_ub):
            issues.append(f"{tag}: x_lb exceeds x_ub")
        if ld.cost_g.dim != n_total:
            issues.append(f"{tag}: cost_g dimension {ld.cost_g.dim} != stacked leader dimension {n_total}")
        if ld.cost_h.dim != ld.n + ld.p_total:
            issues.append(f"{tag}: cost_h dimension {ld.cost_h.dim} != n + p ({ld.n + ld.p_total})")
        ref = ld.followers[0].cons if ld.followers else None
        for nu, f in enumerate(ld.followers):
            ftag = f"{tag}, follower {nu}"
            cost, cons = f.cost, f.cons
            p = cost.p
            if cost.Q.shape != (p, p):
                issues.append(f"{ftag}: Q shape {cost.Q.shape} inconsistent with q")
            else:
                w = np.linalg.eigvalsh(cost.Q)
                if w[0] < -1e-9 * max(1.0, abs(w[-1])):
                    issues.append(f"{ftag}: Q is not positive semidefinite (min eig {w[0]:.3e})")
            if cost.R.shape != (p, ld.n):
                issues.append(f"{ftag}: R shape {cost.R.shape}, expected ({p}, {ld.n})")
            for mu, S in cost.S.items():
                if mu >= ld.M or S.shape != (p, ld.followers[mu].p):
                    issues.append(f"{ftag}: S[{mu}] has bad shape or index")
            r = cons.r
            if cons.D_own.shape != (r, p):
                issues.append(f"{ftag}: D_own shape {cons.D_own.shape}, expected ({r}, {p})")
            if cons.A.shape != (r, ld.n):
                issues.append(f"{ftag}: A shape {cons.A.shape}, expected ({r}, {ld.n})")
            for mu, D in cons.D_cross.items():
                if mu >= ld.M or D.shape != (r, ld.followers[mu].p):
                    issues.append(f"{ftag}: D_cross[{mu}] has bad shape or index")
            if len(cons.E) != ld.M:
                issues.append(f"{ftag}: E must list one matrix per follower ({ld.M}), got {len(cons.E)}")
            else:
                for mu, Em in enumerate(cons.E):
                    if Em.shape != (cons.d, ld.followers[mu].p):
                        issues.append(f"{ftag}: E[{mu}] shape {Em.shape}, expected ({cons.d}, {ld.followers[mu].p})")
            if cons.B.shape != (cons.d, ld.n):
                issues.append(f"{ftag}: B shape {cons.B.shape}, expected ({cons.d}, {ld.n})")
            if ref is not None and nu > 0:
                same = (cons.d == ref.d and cons.B.shape == ref.B.shape and np.array_equal(cons.B, ref.B)
                        and np.array_equal(cons.c, ref.c)
                        and all(np.array_equal(a, b) for a, b in zip(cons.E, ref.E)))
                if not same:
                    issues.append(f"{ftag}: shared rows (B, E, c) differ from follower 0's copy")
    if g.potential_W is not None:
        if g.potential_W.dim != n_total:
            issues.append(f"potential_W dimension {g.potential_W.dim} != {n_total}")
        else:
            bad = _potential_identity_violation(g)
            if bad > 1e-8:
                issues.append(f"potential identity violated on sampled deviations (relative error {bad:.3e})")
    return ValidationReport(issues)


def _random_blocks(g: HierarchicalGame, rng) -> list:
    blocks = []
    for ld in g.leaders:
        lo = np.where(np.isfinite(ld.x_lb), ld.x_lb, -1.0)
        hi = np.where(np.isfinite(ld.x_ub), ld.x_ub, 1.0)
        x = rng.uniform(lo, np.maximum(lo, hi))
        ys = []
        for f in ld.followers:
            flo, fhi = f.box()
            flo = np.where(np.isfinite(flo), flo, -1.0)
            fhi = np.where(np.isfinite(fhi), fhi, 1.0)
            ys.append(rng.uniform(flo, np.maximum(flo, fhi)))
        blocks.append(LeaderBlock(
            x=x, y=tuple(ys),
            lam=tuple(np.zeros(f.cons.r) for f in ld.followers),
            delta=(np.zeros(ld.d),), s=tuple(np.zeros(f.cons.r) for f in ld.followers),
            t=(np.zeros(ld.d),)))
    return blocks


def _potential_identity_violation(g: HierarchicalGame, n_samples: int = 20, seed: int = 0) -> float:
    """Worst relative |dP - dF_i| over sampled unilateral block replacements."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_samples):
        base = _random_blocks(g, rng)
        i = int(rng.integers(g.N))
        trial = list(base)
        trial[i] = _random_blocks(g, rng)[i]
        dP = g.potential(trial) - g.potential(base)
        dJ = g.joint_cost(i, trial) - g.joint_cost(i, base)
        worst = max(worst, abs(dP - dJ) / (1.0 + abs(dJ)))
    return worst
