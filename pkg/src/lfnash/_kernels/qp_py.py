"""Pure-NumPy active-set kernel for convex quadratic programs.

Solves   min 1/2 x'Px + q'x   s.t.  A[:n_eq] x = b[:n_eq],  A[n_eq:] x >= b[n_eq:]

with P symmetric positive semidefinite (possibly singular, so linear programs
are covered) given a feasible starting point.  Null-space primal active-set
iteration: each step factors the working-set rows by QR, minimizes the model
on the current face through an eigendecomposition of the reduced Hessian, and
either drops a wrong-signed multiplier or walks to the nearest blocking row.
Singular reduced Hessians yield simplex-like unbounded-model steps, which is
what makes the LP/degenerate cases work without regularization.

The compiled twin in _active_set.pyx mirrors this routine operation for
operation; keep the two in sync.
"""

import numpy as np
from scipy.linalg import solve_triangular

OPTIMAL = 0
UNBOUNDED = 1
MAXITER = 2

_EIG_THR = 1e-11


def active_set_qp(P, q, A, b, n_eq, x0, tol=1e-9, max_iter=0):
    """Returns (x, lam, status, iters); lam has one entry per row of A.

    Preconditions (the qp front-end establishes them): rows of A scaled to
    unit max-norm, the first n_eq rows linearly independent, x0 feasible
    within ~1e-9.  Multiplier sign convention: P x + q = A' lam at the
    optimum with lam >= 0 on inequality rows.
    """
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    x = np.array(x0, dtype=float)
    n = x.shape[0]
    m = A.shape[0]
    if max_iter <= 0:
        max_iter = 100 + 20 * (n + m)

    in_w = np.zeros(m, dtype=bool)
    in_w[:n_eq] = True
    order = list(range(n_eq))
    is_ineq = np.arange(m) >= n_eq

    lam = np.zeros(m)
    bland = False
    zero_steps = 0
    iters = 0

    while iters < max_iter:
        iters += 1
        w = len(order)
        g = P @ x + q
        scale = max(1.0, float(np.max(np.abs(g))) if n else 1.0)

        if w:
            idx = np.array(order)
            Qf, R = np.linalg.qr(A[idx].T, mode="complete")
            Z = Qf[:, w:]
        else:
            idx = np.zeros(0, dtype=int)
            Qf = np.eye(n)
            Z = Qf
        gz = Z.T @ g if Z.shape[1] else np.zeros(0)

        stationary = not gz.size or float(np.max(np.abs(gz))) <= tol * scale
        p_dir = None
        infinite = False
        if not stationary:
            Hr = Z.T @ P @ Z
            evals, evecs = np.linalg.eigh(Hr)
            thr = _EIG_THR * max(1.0, float(np.max(np.abs(evals))))
            pos = evals > thr
            gn = evecs[:, ~pos].T @ gz
            if gn.size and float(np.max(np.abs(gn))) > tol * scale:
                # model decreases linearly forever along this face direction
                p_dir = Z @ (-(evecs[:, ~pos] @ gn))
                infinite = True
            else:
                gp = evecs[:, pos].T @ gz
                p_dir = Z @ (-(evecs[:, pos] @ (gp / evals[pos])))
                if float(np.max(np.abs(p_dir))) <= tol * max(1.0, float(np.max(np.abs(x)))):
                    stationary = True

        if stationary:
            if w:
                mu = solve_triangular(R[:w, :], Qf[:, :w].T @ g, lower=False)
            else:
                mu = np.zeros(0)
            neg = [k for k in range(w) if order[k] >= n_eq and mu[k] < -tol * scale]
            if not neg:
                lam[:] = 0.0
                if w:
                    lam[idx] = mu
                return x, lam, OPTIMAL, iters
            if bland:
                drop = min(neg, key=lambda k: order[k])
            else:
                drop = min(neg, key=lambda k: (mu[k], order[k]))
            in_w[order[drop]] = False
            del order[drop]
            continue

        # ratio test over non-working inequality rows moving against us
        Ap = A @ p_dir
        eps_dir = 1e-12 * max(1.0, float(np.max(np.abs(p_dir))))
        cand = (~in_w) & is_ineq & (Ap < -eps_dir)
        cidx = np.where(cand)[0]
        if cidx.size:
            resid = np.maximum(A[cidx] @ x - b[cidx], 0.0)
            ratios = resid / (-Ap[cidx])
            k = np.lexsort((cidx, ratios))[0]
            alpha_block = float(ratios[k])
            j_block = int(cidx[k])
        else:
            alpha_block = np.inf
            j_block = -1

        if infinite:
            if j_block < 0:
                return x, lam, UNBOUNDED, iters
            alpha = alpha_block
            x = x + alpha * p_dir
            in_w[j_block] = True
            order.append(j_block)
        elif alpha_block >= 1.0 - 1e-12:
            alpha = 1.0
            x = x + p_dir
        else:
            alpha = alpha_block
            x = x + alpha * p_dir
            in_w[j_block] = True
            order.append(j_block)

        if alpha <= 1e-13:
            zero_steps += 1
            if zero_steps > 2 * (m + 1):
                bland = True
            if zero_steps > 4 * (m + 1) + 50:
                break
        else:
            zero_steps = 0
            bland = False

    return x, lam, MAXITER, iters
