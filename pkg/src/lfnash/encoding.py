"""Single-level encoding of one leader's problem over its followers' KKT system.

A leader anticipates its followers' equilibrium.  For affine-quadratic
followers that equilibrium is exactly characterized by the followers' joint
KKT system: stationarity, primal feasibility, nonnegative multipliers, and
complementarity.  Complementarity pairs 0 <= slack (.) multiplier >= 0 are
switched by binaries: slack <= (1 - s) * cap_slack and multiplier <= s *
cap_dual.  The result is a mixed-integer program whose feasible set, within
the big-M caps, is the leader's true single-level feasible region.

Variable layout of the flat vector (all index ranges in var_map):

    x | y_0 .. y_{M-1} | lam_0 .. lam_{M-1} | delta_0 [.. delta_{M-1}] |
    s_0 .. s_{M-1} | t_0 [.. t_{M-1}]

"variational" mode keeps a single shared-multiplier copy delta_0/t_0 for the
shared rows (the followers' variational equilibria); "gne" mode keeps one
copy per follower.  lam_nu covers the follower's materialized private rows:
its D rows first, then finite lower-bound rows, then finite upper-bound rows
(box bounds on y are ordinary constraints to the followers, so they carry
multipliers like any other private row).

Multiplier caps default to a flat constant; slack caps are computed from the
variable boxes by interval arithmetic, falling back to the dual cap when a
row involves unbounded variables.  `audit_point` flags solutions that press
against either cap, which means the caps may have cut off true solutions and
the caller should re-solve with larger ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EncodingError
from .model import MODE_GNE, HierarchicalGame, LeaderBlock
from .quadform import QuadForm


@dataclass(frozen=True)
class BigMPolicy:
    """Caps for the complementarity switches.

    dual_cap bounds every multiplier (lambda and delta).  Slack caps come
    from interval arithmetic over the variable boxes; rows whose slack has no
    finite box-implied bound fall back to max(dual_cap, slack_floor).
    scale > 1 inflates a policy for re-solves after an audit flag.
    """

    dual_cap: float = 200.0
    slack_floor: float = 1.0

    def __post_init__(self):
        if self.dual_cap <= 0:
            raise EncodingError(f"dual cap must be positive, got {self.dual_cap}")

    def scaled(self, factor: float) -> "BigMPolicy":
        return BigMPolicy(dual_cap=self.dual_cap * factor, slack_floor=self.slack_floor)


def _interval_max(row: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> float:
    """Upper bound of row @ v over the box [lo, hi] (+inf when unbounded)."""
    nz = row != 0.0
    r = row[nz]
    hi_part = np.where(r > 0, r * hi[nz], r * lo[nz])
    return float(np.sum(hi_part, initial=0.0))


@dataclass
class AuditReport:
    flags: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.flags


@dataclass
class KKTResidual:
    stationarity_inf: float
    primal_inf: float
    dual_inf: float
    compl_inf: float

    def max(self) -> float:
        return max(self.stationarity_inf, self.primal_inf, self.dual_inf, self.compl_inf)


class MIEncoding:
    """One leader's mixed-integer program and its variable bookkeeping.

    Rows never depend on the opponents; only the objective's linear term
    does, so a single encoding is reused across sweeps via objective_for.
    """

    def __init__(self, game: HierarchicalGame, i: int, policy: BigMPolicy = None):
        policy = policy or BigMPolicy()
        ld = game.leaders[i]
        self.game = game
        self.leader = i
        self.mode = game.mode
        self.policy = policy
        M = ld.M
        n_copies = M if game.mode == MODE_GNE else 1
        self.n_copies = n_copies

        # materialized private rows per follower: D rows, then finite lb rows,
        # then finite ub rows; each row is (coeff over y_nu, coeff over x,
        # cross coeffs, rhs) kept abstract via builder closures below
        self._priv_rows = []
        for nu, f in enumerate(ld.followers):
            lo, hi = f.box()
            lb_idx = np.where(np.isfinite(lo))[0]
            ub_idx = np.where(np.isfinite(hi))[0]
            self._priv_rows.append((lb_idx, ub_idx))

        # ---- variable layout -------------------------------------------
        vm = {}
        at = 0

        def claim(name, size):
            nonlocal at
            vm[name] = np.arange(at, at + size)
            at += size

        claim("x", ld.n)
        for nu, f in enumerate(ld.followers):
            claim(f"y_{nu}", f.p)
        for nu, f in enumerate(ld.followers):
            claim(f"lam_{nu}", self.n_private_rows(nu))
        for k in range(n_copies):
            claim(f"delta_{k}", ld.d)
        for nu, f in enumerate(ld.followers):
            claim(f"s_{nu}", self.n_private_rows(nu))
        for k in range(n_copies):
            claim(f"t_{k}", ld.d)
        self.var_map = vm
        self.n_vars = at
        self.binary_idx = np.concatenate(
            [vm[f"s_{nu}"] for nu in range(M)] + [vm[f"t_{k}"] for k in range(n_copies)]
        ) if at else np.zeros(0, dtype=int)

        # ---- variable boxes --------------------------------------------
        lb = np.full(at, -np.inf)
        ub = np.full(at, np.inf)
        lb[vm["x"]] = ld.x_lb
        ub[vm["x"]] = ld.x_ub
        for nu, f in enumerate(ld.followers):
            lo, hi = f.box()
            lb[vm[f"y_{nu}"]] = lo
            ub[vm[f"y_{nu}"]] = hi
            lb[vm[f"lam_{nu}"]] = 0.0
            ub[vm[f"lam_{nu}"]] = policy.dual_cap
            lb[vm[f"s_{nu}"]] = 0.0
            ub[vm[f"s_{nu}"]] = 1.0
        for k in range(n_copies):
            lb[vm[f"delta_{k}"]] = 0.0
            ub[vm[f"delta_{k}"]] = policy.dual_cap
            lb[vm[f"t_{k}"]] = 0.0
            ub[vm[f"t_{k}"]] = 1.0
        self.lb = lb
        self.ub = ub

        # ---- feasibility rows (A v >= b) --------------------------------
        rows, rhs = [], []

        def add(row, b):
            rows.append(row)
            rhs.append(b)

        # leader's own rows G x + g0 >= 0
        for j in range(ld.G.shape[0]):
            row = np.zeros(at)
            row[vm["x"]] = ld.G[j]
            add(row, -ld.g0[j])

        # private feasibility rows per follower, then their slack caps are
        # assembled later from these same coefficient vectors
        priv_feas = []  # (nu, local_index, row, rhs)
        for nu, f in enumerate(ld.followers):
            cons = f.cons
            lo, hi = f.box()
            lb_idx, ub_idx = self._priv_rows[nu]
            local = 0
            for j in range(cons.r):
                row = np.zeros(at)
                row[vm[f"y_{nu}"]] = cons.D_own[j]
                row[vm["x"]] = cons.A[j]
                for mu, D in cons.D_cross.items():
                    if mu != nu:
                        row[vm[f"y_{mu}"]] += D[j]
                priv_feas.append((nu, local, row, float(cons.e[j])))
                local += 1
            for j in lb_idx:
                row = np.zeros(at)
                row[vm[f"y_{nu}"][j]] = 1.0
                priv_feas.append((nu, local, row, float(lo[j])))
                local += 1
            for j in ub_idx:
                row = np.zeros(at)
                row[vm[f"y_{nu}"][j]] = -1.0
                priv_feas.append((nu, local, row, float(-hi[j])))
                local += 1
        for _, _, row, b in priv_feas:
            add(row, b)

        # shared feasibility rows, once
        shared_feas = []
        if ld.M and ld.d:
            cons0 = ld.followers[0].cons
            for j in range(ld.d):
                row = np.zeros(at)
                row[vm["x"]] = cons0.B[j]
                for mu, Em in enumerate(cons0.E):
                    row[vm[f"y_{mu}"]] = Em[j]
                shared_feas.append((j, row, float(cons0.c[j])))
                add(row, float(cons0.c[j]))

        # slack caps by interval arithmetic over the boxes (slack = row@v - b);
        # a finite interval bound certifies the cap can never cut the row's
        # true slack range, so only fallback caps are audit-relevant
        def slack_cap(row, b):
            u = _interval_max(row, lb, ub) - b
            if not np.isfinite(u):
                return max(policy.dual_cap, policy.slack_floor), True
            return max(u, policy.slack_floor), False

        self.cap_slack_s = []
        self.cap_slack_fallback_s = []
        for nu, f in enumerate(ld.followers):
            pairs = [slack_cap(row, b) for (n2, _, row, b) in priv_feas if n2 == nu]
            self.cap_slack_s.append(np.array([c for c, _ in pairs]))
            self.cap_slack_fallback_s.append(np.array([fb for _, fb in pairs], dtype=bool))
        pairs_t = [slack_cap(row, b) for (_, row, b) in shared_feas]
        self.cap_slack_t = np.array([c for c, _ in pairs_t])
        self.cap_slack_fallback_t = np.array([fb for _, fb in pairs_t], dtype=bool)

        # complementarity caps: slack <= (1-s)*cap_slack as
        # -row@v - cap*s >= -cap - b, and multiplier <= s*dual_cap
        for nu, f in enumerate(ld.followers):
            caps = self.cap_slack_s[nu]
            own = [(loc, row, b) for (n2, loc, row, b) in priv_feas if n2 == nu]
            for loc, row, b in own:
                cap = caps[loc]
                crow = -row.copy()
                crow[vm[f"s_{nu}"][loc]] = -cap
                add(crow, -cap - b)
            for loc in range(len(own)):
                crow = np.zeros(at)
                crow[vm[f"lam_{nu}"][loc]] = -1.0
                crow[vm[f"s_{nu}"][loc]] = policy.dual_cap
                add(crow, 0.0)
        for k in range(n_copies):
            for j, row, b in shared_feas:
                cap = self.cap_slack_t[j]
                crow = -row.copy()
                crow[vm[f"t_{k}"][j]] = -cap
                add(crow, -cap - b)
            for j in range(ld.d):
                crow = np.zeros(at)
                crow[vm[f"delta_{k}"][j]] = -1.0
                crow[vm[f"t_{k}"][j]] = policy.dual_cap
                add(crow, 0.0)

        self.A_in = np.array(rows).reshape(len(rows), at) if rows else np.zeros((0, at))
        self.b_in = np.array(rhs)

        # ---- stationarity rows (A v = b) ---------------------------------
        eq_rows, eq_rhs = [], []
        for nu, f in enumerate(ld.followers):
            cons, cost = f.cons, f.cost
            lo, hi = f.box()
            lb_idx, ub_idx = self._priv_rows[nu]
            # gradient rows: Q y + R x + sum S y_mu + q
            #   - D_mat' lam - E_nu' delta = 0
            copy = nu if game.mode == MODE_GNE else 0
            for rloc in range(f.p):
                row = np.zeros(at)
                row[vm[f"y_{nu}"]] = cost.Q[rloc]
                row[vm["x"]] = cost.R[rloc]
                for mu, S in cost.S.items():
                    if mu != nu:
                        row[vm[f"y_{mu}"]] += S[rloc]
                # materialized D matrix transpose applied to lam
                row[vm[f"lam_{nu}"][:cons.r]] = -cons.D_own[:, rloc]
                base = cons.r
                for kk, j in enumerate(lb_idx):
                    if j == rloc:
                        row[vm[f"lam_{nu}"][base + kk]] = -1.0
                base += lb_idx.size
                for kk, j in enumerate(ub_idx):
                    if j == rloc:
                        row[vm[f"lam_{nu}"][base + kk]] = 1.0
                if ld.d:
                    row[vm[f"delta_{copy}"]] = -cons.E[nu][:, rloc]
                eq_rows.append(row)
                eq_rhs.append(-float(cost.q[rloc]))
        self.A_eq = np.array(eq_rows).reshape(len(eq_rows), at) if eq_rows else np.zeros((0, at))
        self.b_eq = np.array(eq_rhs)

        self.bigM_s = tuple(np.full(self.n_private_rows(nu), policy.dual_cap) for nu in range(M))
        self.bigM_t = tuple(np.full(ld.d, policy.dual_cap) for _ in range(n_copies))

        # objective quadratic pieces that never change: own-x curvature of
        # cost_g and all of cost_h, embedded into the flat space
        own_idx = game.x_indices(i)
        all_idx = np.arange(game.n_total)
        opp_idx = np.setdiff1d(all_idx, own_idx)
        self._own_idx = own_idx
        self._opp_idx = opp_idx
        xy_idx = np.concatenate([vm["x"]] + [vm[f"y_{nu}"] for nu in range(M)]) if M else vm["x"]
        self._h_embedded = ld.cost_h.embed(xy_idx, at)

    # ---- layout helpers --------------------------------------------------

    def n_private_rows(self, nu: int) -> int:
        f = self.game.leaders[self.leader].followers[nu]
        lb_idx, ub_idx = self._priv_rows[nu]
        return f.cons.r + lb_idx.size + ub_idx.size

    def private_slack_rows(self, nu: int):
        """(row index array into A_in) of follower nu's feasibility rows."""
        ld = self.game.leaders[self.leader]
        at = ld.G.shape[0]
        for mu in range(nu):
            at += self.n_private_rows(mu)
        return np.arange(at, at + self.n_private_rows(nu))

    def shared_slack_rows(self):
        ld = self.game.leaders[self.leader]
        at = ld.G.shape[0] + sum(self.n_private_rows(nu) for nu in range(ld.M))
        return np.arange(at, at + ld.d)

    # ---- objective --------------------------------------------------------

    def objective_for(self, x_stacked=None) -> QuadForm:
        """J_i over the flat vector with opponents frozen at x_stacked.

        Auxiliary variables (multipliers, binaries) are cost-free; opponents
        enter only through linear and constant terms.
        """
        g = self.game
        ld = g.leaders[self.leader]
        if x_stacked is None:
            x_stacked = np.zeros(g.n_total)
        x_stacked = np.asarray(x_stacked, dtype=float)
        g_own = ld.cost_g.restrict(self._own_idx, self._opp_idx, x_stacked[self._opp_idx])
        return g_own.embed(self.var_map["x"], self.n_vars) + self._h_embedded

    def proximal_objective(self, x_stacked, tau: float, center: np.ndarray) -> QuadForm:
        """objective_for plus tau * squared distance to a center block."""
        base = self.objective_for(x_stacked)
        if tau == 0.0:
            return base
        center = np.asarray(center, dtype=float)
        prox = QuadForm(Q=2.0 * tau * np.eye(self.n_vars), b=-2.0 * tau * center,
                        c=tau * float(center @ center))
        return base + prox

    # ---- block packing ----------------------------------------------------

    def extract_block(self, v: np.ndarray) -> LeaderBlock:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n_vars,):
            raise EncodingError(f"flat vector has shape {v.shape}, expected ({self.n_vars},)")
        ld = self.game.leaders[self.leader]
        vm = self.var_map
        return LeaderBlock(
            x=v[vm["x"]],
            y=tuple(v[vm[f"y_{nu}"]] for nu in range(ld.M)),
            lam=tuple(v[vm[f"lam_{nu}"]] for nu in range(ld.M)),
            delta=tuple(v[vm[f"delta_{k}"]] for k in range(self.n_copies)),
            s=tuple(np.round(v[vm[f"s_{nu}"]]) + 0.0 for nu in range(ld.M)),
            t=tuple(np.round(v[vm[f"t_{k}"]]) + 0.0 for k in range(self.n_copies)))

    def block_to_flat(self, b: LeaderBlock) -> np.ndarray:
        ld = self.game.leaders[self.leader]
        vm = self.var_map
        v = np.zeros(self.n_vars)
        v[vm["x"]] = b.x
        for nu in range(ld.M):
            v[vm[f"y_{nu}"]] = b.y[nu]
            v[vm[f"lam_{nu}"]] = b.lam[nu]
            v[vm[f"s_{nu}"]] = b.s[nu]
        for k in range(self.n_copies):
            v[vm[f"delta_{k}"]] = b.delta[k]
            v[vm[f"t_{k}"]] = b.t[k]
        return v

    def violation(self, v: np.ndarray) -> float:
        """Max constraint violation of a flat vector (rows, boxes, equalities)."""
        v = np.asarray(v, dtype=float)
        out = 0.0
        if self.A_eq.shape[0]:
            out = max(out, float(np.max(np.abs(self.A_eq @ v - self.b_eq))))
        if self.A_in.shape[0]:
            out = max(out, float(np.max(self.b_in - self.A_in @ v, initial=0.0)))
        fin = np.isfinite(self.lb)
        if np.any(fin):
            out = max(out, float(np.max((self.lb - v)[fin], initial=0.0)))
        fin = np.isfinite(self.ub)
        if np.any(fin):
            out = max(out, float(np.max((v - self.ub)[fin], initial=0.0)))
        return out


def build_encoding(game: HierarchicalGame, i: int, x_opponents=None,
                   policy: BigMPolicy = None) -> MIEncoding:
    """Encoding of leader i's single-level problem; see MIEncoding.

    x_opponents (a stacked leader profile; own entries ignored) pre-bakes the
    objective.  Rows are opponent-independent, so the same encoding is reused
    with fresh objectives across sweeps.
    """
    enc = MIEncoding(game, i, policy=policy)
    enc.objective = enc.objective_for(x_opponents)
    return enc


def kkt_residual(game: HierarchicalGame, i: int, x_i, y_all, lam_all, delta) -> KKTResidual:
    """Residuals of the followers' joint KKT system at a candidate point.

    lam_all lists one multiplier vector per follower over its materialized
    private rows (D rows, then finite lower-bound rows, then finite
    upper-bound rows).  delta is a single vector in variational mode or one
    per follower in gne mode (a single vector is broadcast to all followers).
    A point with all residuals ~0 certifies y_all as a followers' equilibrium
    for this leader's decision.
    """
    ld = game.leaders[i]
    x_i = np.asarray(x_i, dtype=float)
    y_all = [np.asarray(v, dtype=float) for v in y_all]
    lam_all = [np.asarray(v, dtype=float) for v in lam_all]
    if isinstance(delta, (list, tuple)):
        deltas = [np.asarray(d, dtype=float) for d in delta]
        if len(deltas) == 1:
            deltas = deltas * ld.M
    else:
        deltas = [np.asarray(delta, dtype=float)] * ld.M

    stat = primal = dual = compl = 0.0
    shared = ld.followers[0].cons.shared_slack(x_i, y_all) if ld.M and ld.d else np.zeros(0)
    if shared.size:
        primal = max(primal, float(np.max(-shared, initial=0.0)))
    for nu, f in enumerate(ld.followers):
        cons = f.cons
        lo, hi = f.box()
        lb_idx = np.where(np.isfinite(lo))[0]
        ub_idx = np.where(np.isfinite(hi))[0]
        slack = np.concatenate([
            cons.private_slack(x_i, y_all, nu),
            (y_all[nu] - lo)[lb_idx],
            (hi - y_all[nu])[ub_idx]])
        lam = lam_all[nu]
        if lam.shape[0] != slack.shape[0]:
            raise EncodingError(
                f"follower {nu}: lam has {lam.shape[0]} entries, expected {slack.shape[0]} "
                "(D rows, then finite lower bounds, then finite upper bounds)")
        grad = f.cost.grad(x_i, y_all, nu)
        Dmat = np.vstack([cons.D_own,
                          np.eye(f.p)[lb_idx] if lb_idx.size else np.zeros((0, f.p)),
                          -np.eye(f.p)[ub_idx] if ub_idx.size else np.zeros((0, f.p))])
        resid = grad - Dmat.T @ lam
        if ld.d:
            resid = resid - cons.E[nu].T @ deltas[nu]
        stat = max(stat, float(np.max(np.abs(resid), initial=0.0)))
        primal = max(primal, float(np.max(-slack, initial=0.0)))
        dual = max(dual, float(np.max(-lam, initial=0.0)))
        compl = max(compl, float(np.max(np.abs(lam * slack), initial=0.0)))
        if ld.d:
            dual = max(dual, float(np.max(-deltas[nu], initial=0.0)))
            compl = max(compl, float(np.max(np.abs(deltas[nu] * shared), initial=0.0)))
    return KKTResidual(stationarity_inf=stat, primal_inf=primal, dual_inf=dual, compl_inf=compl)


def audit_point(enc: MIEncoding, v: np.ndarray, margin: float = 0.01) -> AuditReport:
    """Flag multipliers or switched-off slacks within `margin` of their caps.

    A flagged point means the caps may be binding where they should be
    vacuous: the true solution set may extend past them, and the caller
    should re-solve with a larger policy.
    """
    v = np.asarray(v, dtype=float)
    ld = enc.game.leaders[enc.leader]
    vm = enc.var_map
    report = AuditReport()
    for nu in range(ld.M):
        lam = v[vm[f"lam_{nu}"]]
        cap = enc.bigM_s[nu]
        for j in np.where(lam >= (1 - margin) * cap)[0]:
            report.flags.append(
                f"follower {nu} multiplier {j} at {lam[j]:.6g} vs cap {cap[j]:.6g}")
        srows = enc.private_slack_rows(nu)
        slack = enc.A_in[srows] @ v - enc.b_in[srows]
        s_bin = v[vm[f"s_{nu}"]]
        caps = enc.cap_slack_s[nu]
        # interval-certified caps bound the slack by construction; only the
        # dual-cap fallbacks can actually truncate
        fb = enc.cap_slack_fallback_s[nu]
        for j in np.where(fb & (s_bin < 0.5) & (slack >= (1 - margin) * caps))[0]:
            report.flags.append(
                f"follower {nu} private slack {j} at {slack[j]:.6g} vs cap {caps[j]:.6g}")
    trows = enc.shared_slack_rows()
    shared_slack = enc.A_in[trows] @ v - enc.b_in[trows] if trows.size else np.zeros(0)
    for k in range(enc.n_copies):
        delta = v[vm[f"delta_{k}"]]
        cap = enc.bigM_t[k]
        for j in np.where(delta >= (1 - margin) * cap)[0]:
            report.flags.append(
                f"shared multiplier copy {k} entry {j} at {delta[j]:.6g} vs cap {cap[j]:.6g}")
        t_bin = v[vm[f"t_{k}"]]
        for j in np.where(enc.cap_slack_fallback_t & (t_bin < 0.5)
                          & (shared_slack >= (1 - margin) * enc.cap_slack_t))[0]:
            report.flags.append(
                f"shared slack {j} at {shared_slack[j]:.6g} vs cap {enc.cap_slack_t[j]:.6g} (copy {k})")
    return report


def export_lp_text(enc: MIEncoding, objective: QuadForm, path) -> None:
    """Write the encoding as a plain LP-format text file (debug aid).

    Quadratic objective terms go into the [ .. ]/2 block; binaries are listed
    in the General/Binary section.  Intended for eyeballing and for feeding
    external solvers by hand, not for round-tripping.
    """
    names = [f"v{j}" for j in range(enc.n_vars)]

    def lincomb(coeffs, idx=None):
        terms = []
        it = enumerate(coeffs) if idx is None else zip(idx, coeffs)
        for j, cval in it:
            if cval != 0.0:
                terms.append(f"{'+' if cval >= 0 else '-'} {abs(cval):.17g} {names[j]}")
        return " ".join(terms) if terms else "0"

    lines = ["Minimize", " obj: " + lincomb(objective.b)]
    quad = []
    Q = objective.Q
    for a in range(enc.n_vars):
        if Q[a, a] != 0.0:
            quad.append(f"{'+' if Q[a, a] >= 0 else '-'} {abs(Q[a, a]):.17g} {names[a]} ^ 2")
        for b in range(a + 1, enc.n_vars):
            if Q[a, b] != 0.0:
                w = 2 * Q[a, b]
                quad.append(f"{'+' if w >= 0 else '-'} {abs(w):.17g} {names[a]} * {names[b]}")
    if quad:
        lines[-1] += " + [ " + " ".join(quad) + " ] / 2"
    lines.append("Subject To")
    for r in range(enc.A_eq.shape[0]):
        lines.append(f" e{r}: " + lincomb(enc.A_eq[r]) + f" = {enc.b_eq[r]:.17g}")
    for r in range(enc.A_in.shape[0]):
        lines.append(f" i{r}: " + lincomb(enc.A_in[r]) + f" >= {enc.b_in[r]:.17g}")
    lines.append("Bounds")
    for j in range(enc.n_vars):
        lo = "-inf" if not np.isfinite(enc.lb[j]) else f"{enc.lb[j]:.17g}"
        hi = "+inf" if not np.isfinite(enc.ub[j]) else f"{enc.ub[j]:.17g}"
        lines.append(f" {lo} <= {names[j]} <= {hi}")
    lines.append("Binary")
    lines.append(" " + " ".join(names[j] for j in enc.binary_idx))
    lines.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
