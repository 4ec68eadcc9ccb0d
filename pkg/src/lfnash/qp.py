"""Convex QP front-end: feasibility phase, kernel dispatch, KKT certification.

solve_qp is the single continuous-optimization entry point for the package:
follower best responses, branch-and-bound node relaxations, enumeration
leaves, and Euclidean projections all come through here.  It normalizes rows,
finds a feasible point with an elastic phase-1 (solved by the same kernel),
runs the active-set kernel, and certifies the answer by its KKT residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InfeasibleRegionError, SolverError

FEAS_TOL = 1e-8
KKT_TOL = 1e-8


@dataclass
class QPResult:
    x: np.ndarray
    value: float
    status: str                 # "optimal" | "infeasible" | "unbounded"
    lam_eq: np.ndarray          # multipliers on the supplied equality rows
    lam_in: np.ndarray          # multipliers on the supplied inequality rows
    lam_lb: np.ndarray
    lam_ub: np.ndarray
    kkt: float                  # max KKT residual (stationarity/feas/comp/sign)
    iters: int
    infeas: float = 0.0         # certificate: least achievable violation when infeasible


def _clean(arr, shape):
    if arr is None:
        return np.zeros(shape)
    out = np.asarray(arr, dtype=float)
    return out.reshape(shape) if out.shape != tuple(shape) else out


def solve_qp(P, q, A_eq=None, b_eq=None, A_in=None, b_in=None, lb=None, ub=None,
             x0=None, tol=1e-9) -> QPResult:
    """Minimize 1/2 x'Px + q'x over {A_eq x = b_eq, A_in x >= b_in, lb <= x <= ub}.

    P must be positive semidefinite.  Returns a QPResult whose kkt field
    certifies the answer; infeasible/unbounded problems are reported in
    status, never raised.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    n = q.shape[0]
    P = _clean(P, (n, n))
    P = 0.5 * (P + P.T)
    A_eq = _clean(A_eq, (0, n) if A_eq is None else (np.atleast_2d(A_eq).shape[0], n))
    b_eq = _clean(b_eq, (A_eq.shape[0],))
    A_in = _clean(A_in, (0, n) if A_in is None else (np.atleast_2d(A_in).shape[0], n))
    b_in = _clean(b_in, (A_in.shape[0],))
    lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, dtype=float)
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)

    res = QPResult(x=np.zeros(n), value=np.nan, status="optimal",
                   lam_eq=np.zeros(A_eq.shape[0]), lam_in=np.zeros(A_in.shape[0]),
                   lam_lb=np.zeros(n), lam_ub=np.zeros(n), kkt=np.inf, iters=0)

    # box rows appended after the user's inequality rows
    lb_idx = np.where(np.isfinite(lb))[0]
    ub_idx = np.where(np.isfinite(ub))[0]
    box_rows = np.zeros((lb_idx.size + ub_idx.size, n))
    box_rhs = np.zeros(lb_idx.size + ub_idx.size)
    for k, j in enumerate(lb_idx):
        box_rows[k, j] = 1.0
        box_rhs[k] = lb[j]
    for k, j in enumerate(ub_idx):
        box_rows[lb_idx.size + k, j] = -1.0
        box_rhs[lb_idx.size + k] = -ub[j]
    A_all = np.vstack([A_in, box_rows])
    b_all = np.concatenate([b_in, box_rhs])

    # normalize rows to unit max-norm; zero rows either vanish or prove infeasibility
    if A_all.shape[0]:
        norms_in = np.max(np.abs(A_all), axis=1)
        keep_in = norms_in > 1e-14
        if np.any(b_all[~keep_in] > tol):
            res.status = "infeasible"
            res.infeas = float(np.max(b_all[~keep_in]))
            return res
        Ain_n = A_all[keep_in] / norms_in[keep_in, None]
        bin_n = b_all[keep_in] / norms_in[keep_in]
        in_map = np.where(keep_in)[0]
        in_scale = norms_in[keep_in]
    else:
        Ain_n = A_all
        bin_n = b_all
        in_map = np.arange(0)
        in_scale = np.ones(0)

    if A_eq.shape[0]:
        norms_eq = np.max(np.abs(A_eq), axis=1)
        keep_eq = norms_eq > 1e-14
        if np.any(np.abs(b_eq[~keep_eq]) > tol):
            res.status = "infeasible"
            res.infeas = float(np.max(np.abs(b_eq[~keep_eq])))
            return res
        Aeq_n = A_eq[keep_eq] / norms_eq[keep_eq, None]
        beq_n = b_eq[keep_eq] / norms_eq[keep_eq]
        eq_map = np.where(keep_eq)[0]
        eq_scale = norms_eq[keep_eq]
    else:
        Aeq_n = A_eq
        beq_n = b_eq
        eq_map = np.arange(0)
        eq_scale = np.ones(0)

    # rank-filter the equality rows (the kernel requires independence);
    # consistency of dropped rows is certified by the final residual check
    if Aeq_n.shape[0]:
        from scipy.linalg import qr as sqr

        Rq = sqr(Aeq_n.T, mode="r", pivoting=True)
        Rm, piv = Rq[0], Rq[1]
        diag = np.abs(np.diag(Rm))
        rank = int(np.sum(diag > 1e-12 * max(1.0, diag[0] if diag.size else 1.0)))
        eq_keep = np.sort(piv[:rank])
        Aeq_k = Aeq_n[eq_keep]
        beq_k = beq_n[eq_keep]
    else:
        eq_keep = np.arange(0)
        Aeq_k = Aeq_n
        beq_k = beq_n

    x_start = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    x_start = np.minimum(np.maximum(x_start, np.where(np.isfinite(lb), lb, -np.inf)),
                         np.where(np.isfinite(ub), ub, np.inf))

    def violation(x):
        v = 0.0
        if Aeq_n.shape[0]:
            v = max(v, float(np.max(np.abs(Aeq_n @ x - beq_n))))
        if Ain_n.shape[0]:
            v = max(v, float(np.max(bin_n - Ain_n @ x, initial=0.0)))
        return v

    if violation(x_start) > FEAS_TOL:
        x_start, ok, worst = _phase1(Aeq_n, beq_n, Ain_n, bin_n, x_start, tol)
        if not ok:
            res.status = "infeasible"
            res.infeas = worst
            return res

    rows = np.vstack([Aeq_k, Ain_n]) if (Aeq_k.shape[0] or Ain_n.shape[0]) else np.zeros((0, n))
    rhs = np.concatenate([beq_k, bin_n])
    x, lam, status, iters = _kernels.active_set_qp(P, q, rows, rhs, Aeq_k.shape[0], x_start, tol=tol)
    res.iters = iters
    if status == _kernels.UNBOUNDED:
        res.status = "unbounded"
        res.x = x
        return res
    if status == _kernels.MAXITER:
        raise SolverError("active-set kernel stalled (iteration limit)")

    # un-normalize multipliers back onto the caller's rows
    mu_eq_n = lam[:Aeq_k.shape[0]]
    lam_in_n = lam[Aeq_k.shape[0]:]
    res.lam_eq = np.zeros(A_eq.shape[0])
    if eq_keep.size:
        res.lam_eq[eq_map[eq_keep]] = mu_eq_n / eq_scale[eq_keep]
    lam_all = np.zeros(A_all.shape[0])
    if in_map.size:
        lam_all[in_map] = lam_in_n / in_scale
    res.lam_in = lam_all[:A_in.shape[0]]
    res.lam_lb = np.zeros(n)
    res.lam_ub = np.zeros(n)
    res.lam_lb[lb_idx] = lam_all[A_in.shape[0]:A_in.shape[0] + lb_idx.size]
    res.lam_ub[ub_idx] = lam_all[A_in.shape[0] + lb_idx.size:]

    res.x = x
    res.value = float(0.5 * x @ P @ x + q @ x)
    res.kkt = kkt_residual_qp(P, q, A_eq, b_eq, A_in, b_in, lb, ub,
                              x, res.lam_eq, res.lam_in, res.lam_lb, res.lam_ub)
    return res


def _phase1(A_eq, b_eq, A_in, b_in, x_init, tol):
    """Elastic feasibility problem min 1/2||xi||^2, solved by the kernel.

    Every equality row gets an elastic variable (which also makes the equality
    block trivially independent); inequality rows violated at x_init get one.
    Returns (x_feasible, ok, worst_violation).
    """
    n = x_init.shape[0]
    me = A_eq.shape[0]

    def worst_at(xv):
        w = 0.0
        if A_eq.shape[0]:
            w = max(w, float(np.max(np.abs(A_eq @ xv - b_eq))))
        if A_in.shape[0]:
            w = max(w, float(np.max(b_in - A_in @ xv, initial=0.0)))
        return w

    def polish(xv):
        # The elastic objective is quadratic in the violation, so the
        # kernel's stopping test resolves feasibility only to about
        # sqrt(eps); minimum-norm corrections onto the violated rows close
        # that gap, and recover a usable point when the kernel stalls.
        worst = worst_at(xv)
        for _ in range(3):
            if worst <= FEAS_TOL:
                break
            blocks_a = [A_eq] if A_eq.shape[0] else []
            blocks_r = [b_eq - A_eq @ xv] if A_eq.shape[0] else []
            if A_in.shape[0]:
                bad_now = np.where(b_in - A_in @ xv > 0.0)[0]
                if bad_now.size:
                    blocks_a.append(A_in[bad_now])
                    blocks_r.append(b_in[bad_now] - A_in[bad_now] @ xv)
            if not blocks_a:
                break
            dx = np.linalg.lstsq(np.vstack(blocks_a), np.concatenate(blocks_r),
                                 rcond=None)[0]
            xv = xv + dx
            worst = worst_at(xv)
        return xv, worst

    def attempt(x_from):
        viol = b_in - A_in @ x_from if A_in.shape[0] else np.zeros(0)
        bad = np.where(viol > 1e-10)[0]
        n_xi = me + bad.size
        if n_xi == 0:
            return x_from, _kernels.OPTIMAL

        n1 = n + n_xi
        P1 = np.zeros((n1, n1))
        P1[n:, n:] = np.eye(n_xi)
        q1 = np.zeros(n1)

        Ae = np.zeros((me, n1))
        Ae[:, :n] = A_eq
        Ae[:, n:n + me] = np.eye(me)
        rows = [Ae]
        rhs = [b_eq]

        Ai = np.zeros((A_in.shape[0] + bad.size, n1))
        bi = np.zeros(A_in.shape[0] + bad.size)
        Ai[:A_in.shape[0], :n] = A_in
        bi[:A_in.shape[0]] = b_in
        for k, j in enumerate(bad):
            Ai[j, n + me + k] = 1.0            # a'x + xi_j >= b
            Ai[A_in.shape[0] + k, n + me + k] = 1.0   # xi_j >= 0
        rows.append(Ai)
        rhs.append(bi)

        A1 = np.vstack(rows)
        b1 = np.concatenate(rhs)
        x1 = np.zeros(n1)
        x1[:n] = x_from
        x1[n:n + me] = b_eq - A_eq @ x_from
        x1[n + me:] = viol[bad] + 1.0

        x1, _, status, _ = _kernels.active_set_qp(P1, q1, A1, b1, me, x1, tol=tol)
        return x1[:n], status

    x, status = attempt(x_init)
    x, worst = polish(x)
    if worst > FEAS_TOL and status != _kernels.OPTIMAL:
        # stalled short of an answer: one restart from the polished point,
        # with a fresh working set and fresh elastics
        x, status = attempt(x)
        x, worst = polish(x)
        if worst > FEAS_TOL and status != _kernels.OPTIMAL:
            raise SolverError("phase-1 feasibility subproblem did not solve")
    return x, worst <= FEAS_TOL, worst


def kkt_residual_qp(P, q, A_eq, b_eq, A_in, b_in, lb, ub, x, lam_eq, lam_in, lam_lb, lam_ub) -> float:
    """Max-norm KKT residual of a candidate primal-dual pair."""
    g = P @ x + q
    if A_eq.shape[0]:
        g = g - A_eq.T @ lam_eq
    if A_in.shape[0]:
        g = g - A_in.T @ lam_in
    g = g - lam_lb + lam_ub
    stat = float(np.max(np.abs(g), initial=0.0))

    feas = 0.0
    comp = 0.0
    sign = 0.0
    if A_eq.shape[0]:
        feas = max(feas, float(np.max(np.abs(A_eq @ x - b_eq))))
    if A_in.shape[0]:
        r = A_in @ x - b_in
        feas = max(feas, float(np.max(-r, initial=0.0)))
        comp = max(comp, float(np.max(np.abs(lam_in * r), initial=0.0)))
        sign = max(sign, float(np.max(-lam_in, initial=0.0)))
    fin = np.isfinite(lb)
    if np.any(fin):
        r = (x - lb)[fin]
        feas = max(feas, float(np.max(-r, initial=0.0)))
        comp = max(comp, float(np.max(np.abs(lam_lb[fin] * r), initial=0.0)))
        sign = max(sign, float(np.max(-lam_lb, initial=0.0)))
    fin = np.isfinite(ub)
    if np.any(fin):
        r = (ub - x)[fin]
        feas = max(feas, float(np.max(-r, initial=0.0)))
        comp = max(comp, float(np.max(np.abs(lam_ub[fin] * r), initial=0.0)))
        sign = max(sign, float(np.max(-lam_ub, initial=0.0)))
    return max(stat, feas, comp, sign)


def project_polyhedron(point, A_in=None, b_in=None, A_eq=None, b_eq=None, lb=None, ub=None) -> np.ndarray:
    """Euclidean projection of `point` onto the given polyhedron.

    Boxes-only regions short-circuit to a clip.  Raises
    InfeasibleRegionError when the region is empty, SolverError when the
    projection cannot be certified to KKT residual 1e-8.
    """
    point = np.asarray(point, dtype=float)
    n = point.shape[0]
    no_rows = (A_in is None or np.size(A_in) == 0) and (A_eq is None or np.size(A_eq) == 0)
    if no_rows:
        lo = np.full(n, -np.inf) if lb is None else np.asarray(lb, dtype=float)
        hi = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)
        if np.any(lo > hi):
            raise InfeasibleRegionError("empty box")
        return np.minimum(np.maximum(point, lo), hi)
    res = solve_qp(np.eye(n), -point, A_eq=A_eq, b_eq=b_eq, A_in=A_in, b_in=b_in,
                   lb=lb, ub=ub, x0=point)
    if res.status == "infeasible":
        raise InfeasibleRegionError(f"projection target region is empty (violation {res.infeas:.3e})")
    if res.status != "optimal" or res.kkt > 10 * KKT_TOL:
        raise SolverError(f"projection failed to certify (kkt {res.kkt:.3e})")
    return res.x
