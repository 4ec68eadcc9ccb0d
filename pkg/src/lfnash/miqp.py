"""Mixed-integer QP solver: branch-and-bound over binaries with McCormick
relaxations for box-bounded bilinear objective terms.

Scope is desk scale: tens of continuous variables, up to ~20 binaries, dense
linear algebra throughout.  Guarantees, not speed, are the point — every
report is deterministic given identical inputs and config (wall_time being
the one physical exception), lower bounds are monotone over the tree, and a
status of "optimal" certifies global optimality within gap_tol.

The solver consumes any program object with attributes n_vars, A_eq, b_eq,
A_in, b_in, lb, ub, binary_idx (the single-level leader encodings satisfy
this; PlainProgram wraps bare arrays for standalone use).  Objectives arrive
as a QuadForm and are decomposed into a convex part plus bilinear pairs; a
program may advertise index groups whose cross terms are the intended
bilinear structure via a `bilinear_groups` attribute.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import EncodingError, SolverError
from .qp import solve_qp
from .quadform import QuadForm

_PSD_TOL = 1e-9
_INT_TOL = 1e-6


@dataclass(frozen=True)
class PlainProgram:
    """Bare constraint data in the shape solve() expects."""

    n_vars: int
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_in: np.ndarray
    b_in: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    binary_idx: np.ndarray
    bilinear_groups: Optional[tuple] = None

    @staticmethod
    def build(n, A_eq=None, b_eq=None, A_in=None, b_in=None, lb=None, ub=None,
              binary_idx=(), groups=None) -> "PlainProgram":
        def m(a, cols):
            return np.zeros((0, cols)) if a is None else np.atleast_2d(np.asarray(a, dtype=float))

        A_eq = m(A_eq, n)
        A_in = m(A_in, n)
        return PlainProgram(
            n_vars=n, A_eq=A_eq,
            b_eq=np.zeros(A_eq.shape[0]) if b_eq is None else np.asarray(b_eq, dtype=float),
            A_in=A_in,
            b_in=np.zeros(A_in.shape[0]) if b_in is None else np.asarray(b_in, dtype=float),
            lb=np.full(n, -np.inf) if lb is None else np.asarray(lb, dtype=float),
            ub=np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float),
            binary_idx=np.asarray(binary_idx, dtype=int),
            bilinear_groups=groups)


@dataclass(frozen=True)
class ObjectiveSpec:
    """Convex quadratic part plus bilinear pair terms coef * v[a] * v[b]."""

    quad: QuadForm
    pairs: tuple = ()

    def true_value(self, v: np.ndarray) -> float:
        out = self.quad.value(v)
        for coef, a, b in self.pairs:
            out += coef * v[a] * v[b]
        return float(out)


@dataclass
class SolverConfig:
    feas_tol: float = 1e-7
    gap_tol: float = 1e-6          # absolute bound gap certifying optimality
    node_limit: int = 50000
    rel_gap_limit: Optional[float] = None
    warm_start: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.feas_tol <= 0 or self.gap_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class SolveReport:
    status: str                    # optimal | infeasible | gap_limit | node_limit
    incumbent: Optional[np.ndarray]
    value: float
    gap: float
    nodes: int
    wall_time: float
    heuristic_leaves: int = 0


def decompose_objective(quad: QuadForm, groups=None) -> ObjectiveSpec:
    """Split a quadratic into a PSD QuadForm plus bilinear pairs.

    Order of attempts: (1) already PSD; (2) strip cross entries between the
    two index groups (the advertised bilinear structure) and re-check;
    (3) strip every remaining off-diagonal entry and negative diagonal into
    pairs, leaving a nonnegative diagonal.  The result always satisfies
    spec.true_value == quad.value pointwise.
    """
    Q = quad.Q
    n = quad.dim
    w = np.linalg.eigvalsh(Q) if n else np.zeros(1)
    if n == 0 or w[0] >= -_PSD_TOL * max(1.0, abs(w[-1])):
        return ObjectiveSpec(quad=quad)

    pairs = {}
    Qr = Q.copy()
    if groups is not None:
        ga, gb = (np.asarray(g, dtype=int) for g in groups)
        for a in ga:
            for b in gb:
                if Qr[a, b] != 0.0:
                    # 1/2 v'Qv counts (a,b) and (b,a): coefficient is Q[a,b]
                    pairs[(min(a, b), max(a, b))] = pairs.get((min(a, b), max(a, b)), 0.0) + Qr[a, b]
                    Qr[a, b] = 0.0
                    Qr[b, a] = 0.0
        w = np.linalg.eigvalsh(Qr)
        if w[0] >= -_PSD_TOL * max(1.0, abs(w[-1])):
            out = tuple((c, a, b) for (a, b), c in sorted(pairs.items()) if c != 0.0)
            return ObjectiveSpec(quad=QuadForm(Q=Qr, b=quad.b, c=quad.c), pairs=out)

    # general fallback: keep only the nonnegative diagonal
    for a in range(n):
        for b in range(a + 1, n):
            if Qr[a, b] != 0.0:
                pairs[(a, b)] = pairs.get((a, b), 0.0) + Qr[a, b]
                Qr[a, b] = 0.0
                Qr[b, a] = 0.0
    diag = np.diag(Qr).copy()
    for a in np.where(diag < 0)[0]:
        pairs[(a, a)] = pairs.get((a, a), 0.0) + diag[a] / 2.0
        diag[a] = 0.0
    out = tuple((c, a, b) for (a, b), c in sorted(pairs.items()) if c != 0.0)
    return ObjectiveSpec(quad=QuadForm(Q=np.diag(diag), b=quad.b, c=quad.c), pairs=out)


def mccormick_rows(a: int, b: int, u: int, n_ext: int, lo: np.ndarray, hi: np.ndarray):
    """Envelope rows (A v >= rhs) linking u to the product v[a] * v[b].

    Four rows over a finite box; for a square term (a == b) the two lower
    tangents plus the secant upper bound.  Every returned row is valid for
    the true product, so adding them never cuts a feasible point.
    """
    la, ha, lb_, hb = lo[a], hi[a], lo[b], hi[b]
    if not (np.isfinite(la) and np.isfinite(ha) and np.isfinite(lb_) and np.isfinite(hb)):
        raise EncodingError(
            f"bilinear term on variables ({a}, {b}) requires finite boxes on both")
    rows, rhs = [], []

    def add(coeff_a, coeff_b, coeff_u, r):
        row = np.zeros(n_ext)
        row[a] += coeff_a
        row[b] += coeff_b
        row[u] += coeff_u
        rows.append(row)
        rhs.append(r)

    if a == b:
        add(-2 * la, 0.0, 1.0, -la * la)      # u >= 2 la v - la^2
        add(-2 * ha, 0.0, 1.0, -ha * ha)      # u >= 2 ha v - ha^2
        add(la + ha, 0.0, -1.0, la * ha)      # u <= (la+ha) v - la ha
    else:
        add(-lb_, -la, 1.0, -la * lb_)        # u >= lb v_a + la v_b - la lb
        add(-hb, -ha, 1.0, -ha * hb)          # u >= hb v_a + ha v_b - ha hb
        add(hb, la, -1.0, la * hb)            # u <= hb v_a + la v_b - la hb
        add(lb_, ha, -1.0, ha * lb_)          # u <= lb v_a + ha v_b - ha lb
    return np.array(rows), np.array(rhs)


def _u_box(a, b, lo, hi):
    corners = [lo[a] * lo[b], lo[a] * hi[b], hi[a] * lo[b], hi[a] * hi[b]]
    if a == b:
        lo_u = 0.0 if lo[a] < 0 < hi[a] else min(lo[a] ** 2, hi[a] ** 2)
        return lo_u, max(lo[a] ** 2, hi[a] ** 2)
    return min(corners), max(corners)


def _as_spec(prog, objective) -> ObjectiveSpec:
    if isinstance(objective, ObjectiveSpec):
        return objective
    groups = getattr(prog, "bilinear_groups", None)
    return decompose_objective(objective, groups=groups)


def _node_relaxation(prog, spec, pins, lo, hi, x0, feas_tol):
    """Solve the continuous relaxation of one node.

    Returns (status, point over original vars, value).  The extended vector
    appends one u variable per bilinear pair, linked by McCormick rows built
    from this node's boxes.
    """
    n = prog.n_vars
    K = len(spec.pairs)
    n_ext = n + K
    P = np.zeros((n_ext, n_ext))
    P[:n, :n] = spec.quad.Q
    q = np.zeros(n_ext)
    q[:n] = spec.quad.b
    lo_ext = np.concatenate([lo, np.zeros(K)])
    hi_ext = np.concatenate([hi, np.zeros(K)])
    rows = [np.hstack([prog.A_in, np.zeros((prog.A_in.shape[0], K))])] if prog.A_in.shape[0] else []
    rhs = [prog.b_in] if prog.A_in.shape[0] else []
    for k, (coef, a, b) in enumerate(spec.pairs):
        q[n + k] = coef
        lo_ext[n + k], hi_ext[n + k] = _u_box(a, b, lo, hi)
        mr, mb = mccormick_rows(a, b, n + k, n_ext, lo, hi)
        rows.append(mr)
        rhs.append(mb)
    A_in = np.vstack(rows) if rows else np.zeros((0, n_ext))
    b_in = np.concatenate(rhs) if rhs else np.zeros(0)

    n_pin = len(pins)
    A_eq = np.zeros((prog.A_eq.shape[0] + n_pin, n_ext))
    A_eq[:prog.A_eq.shape[0], :n] = prog.A_eq
    b_eq = np.zeros(prog.A_eq.shape[0] + n_pin)
    b_eq[:prog.A_eq.shape[0]] = prog.b_eq
    for k, (j, val) in enumerate(pins):
        A_eq[prog.A_eq.shape[0] + k, j] = 1.0
        b_eq[prog.A_eq.shape[0] + k] = float(val)

    x_init = None
    if x0 is not None:
        x_init = np.zeros(n_ext)
        x_init[:n] = np.minimum(np.maximum(x0, lo), hi)
        for k, (coef, a, b) in enumerate(spec.pairs):
            x_init[n + k] = np.clip(x_init[a] * x_init[b], lo_ext[n + k], hi_ext[n + k])
    res = solve_qp(P, q, A_eq=A_eq, b_eq=b_eq, A_in=A_in, b_in=b_in,
                   lb=lo_ext, ub=hi_ext, x0=x_init)
    if res.status == "infeasible":
        return "infeasible", None, np.inf
    if res.status == "unbounded":
        return "unbounded", None, -np.inf
    # solve_qp omits the constant term; the relaxation value restores it
    return "optimal", res.x[:n], float(res.value + spec.quad.c)


def solve(prog, objective, cfg: SolverConfig = None) -> SolveReport:
    """Global minimization of the objective over the program's mixed-binary set.

    Branch-and-bound: best-bound node selection; branch on the most
    fractional binary (ties to the lowest index), then on the widest box
    among bilinear-pair variables (spatial branching, split at the relaxation
    point clamped into the middle of the box).  An integral relaxation point
    is always evaluated with the true objective as an incumbent candidate,
    so McCormick looseness never produces a wrong value, only extra nodes.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    spec = _as_spec(prog, objective)
    n = prog.n_vars
    bidx = np.asarray(prog.binary_idx, dtype=int)

    inc = None
    inc_val = np.inf
    if cfg.warm_start is not None:
        v0 = np.asarray(cfg.warm_start, dtype=float)
        if v0.shape == (n,) and _program_violation(prog, v0) <= 10 * cfg.feas_tol and (
                bidx.size == 0 or np.max(np.abs(v0[bidx] - np.round(v0[bidx])), initial=0.0) <= _INT_TOL):
            inc = v0.copy()
            if bidx.size:
                inc[bidx] = np.round(inc[bidx])
            inc_val = spec.true_value(inc)

    heap = []
    seq = 0
    heapq.heappush(heap, (-np.inf, seq, (), prog.lb.copy(), prog.ub.copy(), None))
    nodes = 0
    best_bound = -np.inf

    def finish(status):
        if inc is None and status == "optimal":
            return SolveReport(status="infeasible", incumbent=None, value=np.inf, gap=np.inf,
                               nodes=nodes, wall_time=time.perf_counter() - t0)
        lb_now = min(best_bound if heap else inc_val, inc_val)
        gap = (inc_val - lb_now) / max(1.0, abs(inc_val)) if inc is not None else np.inf
        return SolveReport(status=status, incumbent=inc, value=inc_val, gap=max(gap, 0.0),
                           nodes=nodes, wall_time=time.perf_counter() - t0)

    while heap:
        bound, _, pins, lo, hi, warm = heapq.heappop(heap)
        best_bound = bound
        if inc is not None and bound >= inc_val - cfg.gap_tol:
            return finish("optimal")
        if nodes >= cfg.node_limit:
            return finish("node_limit")
        nodes += 1
        status, v, val = _node_relaxation(prog, spec, pins, lo, hi, warm, cfg.feas_tol)
        if status == "infeasible":
            continue
        if status == "unbounded":
            raise SolverError(
                "node relaxation unbounded below; add box bounds to the objective variables")
        node_bound = max(val, bound)
        if inc is not None and node_bound >= inc_val - cfg.gap_tol:
            continue

        frac = np.abs(v[bidx] - np.round(v[bidx])) if bidx.size else np.zeros(0)
        if frac.size and np.max(frac) > _INT_TOL:
            j = bidx[int(np.argmax(frac))]  # argmax returns the lowest index on ties
            for val_pin in (0.0, 1.0):
                seq += 1
                heapq.heappush(heap, (node_bound, seq,
                                      pins + ((int(j), val_pin),), lo, hi, v))
            continue

        # binaries integral: evaluate a true-objective incumbent.  Binaries
        # that settled at integers on their own (not pinned by branching) are
        # only integral within tolerance, so re-solve with them pinned to get
        # an exactly feasible point.
        pinned_set = {j for j, _ in pins}
        loose = [j for j in bidx if j not in pinned_set]
        if loose:
            pins_full = pins + tuple((int(j), float(np.round(v[j]))) for j in loose)
            st2, v2, _ = _node_relaxation(prog, spec, pins_full, lo, hi, v, cfg.feas_tol)
            if st2 != "optimal":
                # rounding chose an infeasible pattern; branch on the first
                # loose binary instead of discarding the region
                j = int(loose[0])
                for val_pin in (0.0, 1.0):
                    seq += 1
                    heapq.heappush(heap, (node_bound, seq,
                                          pins + ((j, val_pin),), lo, hi, v))
                continue
            cand = v2
        else:
            cand = v
        if bidx.size:
            # pinned by equality rows, so coordinates sit within solver
            # roundoff of integers; store them exactly integral
            cand = cand.copy()
            cand[bidx] = np.round(cand[bidx]) + 0.0
        true_val = spec.true_value(cand)
        if true_val < inc_val - 1e-12:
            inc, inc_val = cand, true_val
        if node_bound >= inc_val - cfg.gap_tol:
            continue
        # McCormick gap remains: spatial branch on the widest pair variable
        pair_vars = sorted({idx for _, a, b in spec.pairs for idx in (a, b)})
        widths = np.array([hi[j] - lo[j] for j in pair_vars])
        if not len(pair_vars) or np.max(widths) <= 1e-9:
            # nothing to branch on; the bound cannot improve further
            continue
        j = pair_vars[int(np.argmax(widths))]
        w = hi[j] - lo[j]
        split = float(np.clip(v[j], lo[j] + 0.2 * w, hi[j] - 0.2 * w))
        for side in (0, 1):
            lo2, hi2 = lo.copy(), hi.copy()
            if side == 0:
                hi2[j] = split
            else:
                lo2[j] = split
            seq += 1
            heapq.heappush(heap, (node_bound, seq, pins, lo2, hi2, v))
        if cfg.rel_gap_limit is not None and inc is not None:
            rel = (inc_val - node_bound) / max(1.0, abs(inc_val))
            if rel <= cfg.rel_gap_limit:
                best_bound = node_bound
                return finish("gap_limit")

    best_bound = inc_val
    return finish("optimal")


def _program_violation(prog, v) -> float:
    out = 0.0
    if prog.A_eq.shape[0]:
        out = max(out, float(np.max(np.abs(prog.A_eq @ v - prog.b_eq))))
    if prog.A_in.shape[0]:
        out = max(out, float(np.max(prog.b_in - prog.A_in @ v, initial=0.0)))
    fin = np.isfinite(prog.lb)
    if np.any(fin):
        out = max(out, float(np.max((prog.lb - v)[fin], initial=0.0)))
    fin = np.isfinite(prog.ub)
    if np.any(fin):
        out = max(out, float(np.max((v - prog.ub)[fin], initial=0.0)))
    return out


def solve_by_enumeration(prog, objective, cfg: SolverConfig = None,
                         max_binaries: int = 20) -> SolveReport:
    """Exhaustive reference solve: fix every binary pattern, solve each leaf.

    Convex leaves (no bilinear pairs) are solved exactly.  Leaves with pairs
    are attacked by 64-start alternating minimization when the pairs are
    bipartite (no variable on both sides), else by seeded projected gradient
    descent; such leaves are counted in heuristic_leaves and their values are
    upper bounds, not certificates.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    spec = _as_spec(prog, objective)
    bidx = np.asarray(prog.binary_idx, dtype=int)
    if bidx.size > max_binaries:
        raise EncodingError(
            f"{bidx.size} binaries exceed the enumeration limit of {max_binaries}")

    best = None
    best_val = np.inf
    heuristic = 0
    n_pat = 1 << bidx.size
    for pattern in range(n_pat):
        pins = tuple((int(bidx[k]), float((pattern >> k) & 1)) for k in range(bidx.size))
        if spec.pairs:
            val, v, used_heur = _bilinear_leaf(prog, spec, pins, pattern, cfg)
            heuristic += used_heur
        else:
            status, v, val = _node_relaxation(prog, spec, pins, prog.lb, prog.ub, None, cfg.feas_tol)
            if status == "unbounded":
                raise SolverError(
                    "leaf objective unbounded below; add box bounds to the objective variables")
            if status != "optimal":
                continue
        if v is not None and val < best_val:
            best, best_val = v.copy(), val
            if bidx.size:
                best[bidx] = np.round(best[bidx])
    if best is None:
        return SolveReport(status="infeasible", incumbent=None, value=np.inf, gap=np.inf,
                           nodes=n_pat, wall_time=time.perf_counter() - t0,
                           heuristic_leaves=heuristic)
    return SolveReport(status="optimal", incumbent=best, value=float(best_val), gap=0.0,
                       nodes=n_pat, wall_time=time.perf_counter() - t0,
                       heuristic_leaves=heuristic)


def _leaf_feasible_point(prog, pins, lo, hi):
    """A feasible point of one leaf, or None."""
    n = prog.n_vars
    A_eq = np.vstack([prog.A_eq] + [np.eye(n)[j:j + 1] for j, _ in pins]) if pins else prog.A_eq
    b_eq = np.concatenate([prog.b_eq, np.array([val for _, val in pins])]) if pins else prog.b_eq
    res = solve_qp(np.eye(n) * 0.0, np.zeros(n), A_eq=A_eq, b_eq=b_eq,
                   A_in=prog.A_in, b_in=prog.b_in, lb=lo, ub=hi)
    if res.status != "optimal":
        return None
    return res.x


def _bilinear_leaf(prog, spec, pins, pattern, cfg, n_starts: int = 64):
    """Best found value on a pinned leaf with bilinear objective terms."""
    n = prog.n_vars
    feas = _leaf_feasible_point(prog, pins, prog.lb, prog.ub)
    if feas is None:
        return np.inf, None, 0
    left = {a for _, a, b in spec.pairs}
    right = {b for _, a, b in spec.pairs}
    bipartite = not (left & right)

    lo = np.where(np.isfinite(prog.lb), prog.lb, -1e3)
    hi = np.where(np.isfinite(prog.ub), prog.ub, 1e3)
    best_v, best_val = None, np.inf
    for s in range(n_starts):
        if s == 0:
            start = feas
        else:
            rng = np.random.default_rng([pattern, s])
            start = lo + rng.random(n) * (hi - lo)
        if bipartite:
            v, val = _alternating_descent(prog, spec, pins, start)
        else:
            v, val = _projected_gradient(prog, spec, pins, start)
        if v is not None and val < best_val:
            best_v, best_val = v, val
    return best_val, best_v, 1


def _alternating_descent(prog, spec, pins, start, max_rounds: int = 50):
    """Alternate exact QPs, pinning one side of every bilinear pair at a time.

    With one side frozen the remaining objective is convex quadratic (the
    PSD part plus linear contributions from the frozen factors), so each
    half-step is a global QP solve and the value sequence is nonincreasing.
    """
    n = prog.n_vars
    left = sorted({a for _, a, b in spec.pairs})
    right = sorted({b for _, a, b in spec.pairs})
    v = start.copy()
    val = np.inf
    for _ in range(max_rounds):
        improved = False
        for frozen in (left, right):
            A_eq_extra = [np.eye(n)[j:j + 1] for j, _ in pins] + [np.eye(n)[j:j + 1] for j in frozen]
            b_eq_extra = [np.array([pv for _, pv in pins]).reshape(-1)] if pins else []
            b_eq_extra.append(v[frozen])
            A_eq = np.vstack([prog.A_eq] + A_eq_extra) if A_eq_extra else prog.A_eq
            b_eq = np.concatenate([prog.b_eq] + b_eq_extra)
            # linearize pairs at the frozen side
            q_lin = spec.quad.b.copy()
            const = 0.0
            Q = spec.quad.Q.copy()
            for coef, a, b in spec.pairs:
                if a in frozen and b in frozen:
                    const += coef * v[a] * v[b]
                elif a in frozen:
                    q_lin[b] += coef * v[a]
                elif b in frozen:
                    q_lin[a] += coef * v[b]
                else:
                    raise SolverError("pair escapes the bipartite split")
            res = solve_qp(Q, q_lin, A_eq=A_eq, b_eq=b_eq, A_in=prog.A_in, b_in=prog.b_in,
                           lb=prog.lb, ub=prog.ub, x0=v)
            if res.status != "optimal":
                return None, np.inf
            v = res.x
            new_val = spec.true_value(v)
            if new_val < val - 1e-11:
                improved = True
            val = new_val
        if not improved:
            break
    return v, val


def _projected_gradient(prog, spec, pins, start, iters: int = 400):
    """Fallback local search when pairs share variables: projected gradient
    with a fixed diminishing step, projecting onto the leaf polyhedron."""
    from .qp import project_polyhedron

    n = prog.n_vars
    A_eq = np.vstack([prog.A_eq] + [np.eye(n)[j:j + 1] for j, _ in pins]) if pins else prog.A_eq
    b_eq = np.concatenate([prog.b_eq, np.array([pv for _, pv in pins])]) if pins else prog.b_eq

    def grad(v):
        g = spec.quad.grad(v)
        for coef, a, b in spec.pairs:
            g[a] += coef * v[b]
            g[b] += coef * v[a]
        return g

    try:
        v = project_polyhedron(start, A_in=prog.A_in, b_in=prog.b_in, A_eq=A_eq, b_eq=b_eq,
                               lb=prog.lb, ub=prog.ub)
    except Exception:
        return None, np.inf
    val = spec.true_value(v)
    for k in range(iters):
        step = 0.5 / (1 + 0.05 * k)
        try:
            v2 = project_polyhedron(v - step * grad(v), A_in=prog.A_in, b_in=prog.b_in,
                                    A_eq=A_eq, b_eq=b_eq, lb=prog.lb, ub=prog.ub)
        except Exception:
            break
        val2 = spec.true_value(v2)
        if val2 <= val - 1e-12:
            v, val = v2, val2
        else:
            break
    return v, val
