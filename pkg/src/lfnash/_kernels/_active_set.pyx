# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled active-set kernel; the operation-for-operation twin of qp_py.

Same null-space iteration, same tolerances, same tie-breaking.  Dense
algebra goes through the LAPACK routines NumPy and SciPy dispatch to
(dgeqrf/dorgqr, dsyevd, dtrtrs), so the two backends agree to rounding;
the surrounding bookkeeping runs as plain C loops.  Keep qp_py.py in sync
with any change here.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, fabs
from scipy.linalg.cython_blas cimport dgemm, dgemv
from scipy.linalg.cython_lapack cimport dgeqrf, dorgqr, dsyevd, dtrtrs

cnp.import_array()

OPTIMAL = 0
UNBOUNDED = 1
MAXITER = 2

cdef double _EIG_THR = 1e-11


cdef double _absmax(double[::1] v, Py_ssize_t k) nogil:
    cdef Py_ssize_t i
    cdef double m = 0.0
    for i in range(k):
        if fabs(v[i]) > m:
            m = fabs(v[i])
    return m


def active_set_qp(P, q, A, b, n_eq, x0, tol=1e-9, max_iter=0):
    """Returns (x, lam, status, iters); lam has one entry per row of A.

    Same contract as the NumPy twin: rows of A scaled to unit max-norm, the
    first n_eq rows independent, x0 feasible within ~1e-9, and P x + q =
    A' lam with lam >= 0 on inequality rows at the reported optimum.
    """
    cdef cnp.ndarray[double, ndim=2] P_ = np.ascontiguousarray(P, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] q_ = np.ascontiguousarray(q, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] A_ = np.ascontiguousarray(A, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] b_ = np.ascontiguousarray(b, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] x_ = np.array(x0, dtype=np.float64)

    cdef Py_ssize_t n = x_.shape[0]
    cdef Py_ssize_t m = A_.shape[0]
    cdef int neq = int(n_eq)
    cdef double tol_ = float(tol)
    cdef long max_it = int(max_iter)
    if max_it <= 0:
        max_it = 100 + 20 * (n + m)

    cdef double[:, ::1] Pv = P_
    cdef double[::1] qv = q_
    cdef double[:, ::1] Av = A_
    cdef double[::1] bv = b_
    cdef double[::1] xv = x_

    # working set: membership flags plus insertion order
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] in_w_ = np.zeros(max(m, 1), dtype=np.uint8)
    cdef cnp.uint8_t[::1] in_w = in_w_
    cdef cnp.ndarray[long, ndim=1] order_ = np.empty(m if m else 1, dtype=np.int64)
    cdef long[::1] order = order_
    cdef Py_ssize_t w = 0
    cdef Py_ssize_t i, j, k, r, c
    for i in range(neq):
        in_w[i] = True
        order[i] = i
        w += 1

    cdef cnp.ndarray[double, ndim=1] lam_ = np.zeros(m if m else 1, dtype=np.float64)
    cdef double[::1] lam = lam_

    # Fortran-ordered scratch for LAPACK: M holds A[order].T, overwritten by
    # the QR factorization; Qf the complete orthogonal factor; Hr the reduced
    # Hessian; work arrays sized once at the top
    cdef cnp.ndarray[double, ndim=2] M_ = np.empty((n, max(n, 1)), order="F")
    cdef cnp.ndarray[double, ndim=2] Qf_ = np.empty((n, max(n, 1)), order="F")
    cdef cnp.ndarray[double, ndim=2] R_ = np.empty((max(n, 1), max(n, 1)), order="F")
    cdef cnp.ndarray[double, ndim=2] Hr_ = np.empty((max(n, 1), max(n, 1)), order="F")
    cdef cnp.ndarray[double, ndim=2] PZ_ = np.empty((max(n, 1), max(n, 1)), order="F")
    cdef cnp.ndarray[double, ndim=2] Evec_ = np.empty((max(n, 1), max(n, 1)), order="F")
    cdef double[::1, :] Mv = M_
    cdef double[::1, :] Qfv = Qf_
    cdef double[::1, :] Rv = R_
    cdef double[::1, :] Hrv = Hr_
    cdef double[::1, :] PZv = PZ_
    cdef double[::1, :] Evv = Evec_

    cdef cnp.ndarray[double, ndim=1] tau_ = np.empty(max(n, 1))
    cdef cnp.ndarray[double, ndim=1] g_ = np.empty(max(n, 1))
    cdef cnp.ndarray[double, ndim=1] gz_ = np.empty(max(n, 1))
    cdef cnp.ndarray[double, ndim=1] evals_ = np.empty(max(n, 1))
    cdef cnp.ndarray[double, ndim=1] coef_ = np.empty(max(n, 1))
    cdef cnp.ndarray[double, ndim=1] pz_ = np.empty(max(n, 1))
    cdef cnp.ndarray[double, ndim=1] pdir_ = np.empty(max(n, 1))
    cdef cnp.ndarray[double, ndim=1] mu_ = np.empty(max(n, 1))
    cdef double[::1] tau = tau_
    cdef double[::1] g = g_
    cdef double[::1] gz = gz_
    cdef double[::1] evals = evals_
    cdef double[::1] coef = coef_
    cdef double[::1] pz = pz_
    cdef double[::1] pdir = pdir_
    cdef double[::1] mu = mu_

    # LAPACK workspace: generous fixed sizes beat per-call queries here
    cdef int lwork = int(64 * max(n, 1) + 1)
    cdef int liwork = int(5 * max(n, 1) + 3 + 8)
    cdef cnp.ndarray[double, ndim=1] work_ = np.empty(max(lwork, 1 + 6 * n + 2 * n * n + 1))
    cdef cnp.ndarray[int, ndim=1] iwork_ = np.empty(max(liwork, 8), dtype=np.intc)
    cdef double[::1] work = work_
    cdef int[::1] iwork = iwork_
    cdef int lwork_d = <int> work.shape[0]
    cdef int liwork_d = <int> iwork.shape[0]

    cdef int info, nn = <int> n, one = 1, ww, nz_i
    cdef double done = 1.0, dzero = 0.0
    cdef long iters = 0, zero_steps = 0
    cdef bint bland = False, stationary, infinite
    cdef Py_ssize_t nz, n_pos, n_neg, drop, j_block
    cdef double scale, thr, emax, val, alpha, alpha_block, eps_dir, resid
    cdef double best_ratio, gmax, pmax, xmax, mu_min
    cdef long row, drop_row

    while iters < max_it:
        iters += 1

        # g = P x + q
        for i in range(n):
            g[i] = qv[i]
        if n:
            dgemv(b"N", &nn, &nn, &done, &Pv[0, 0], &nn, &xv[0], &one,
                  &done, &g[0], &one)
            # row-major symmetric P: op N over the C buffer is P', but P = P'
        scale = _absmax(g, n) if n else 1.0
        if scale < 1.0:
            scale = 1.0

        ww = <int> w
        if w:
            # columns of M are the working rows of A; complete QR
            for j in range(w):
                row = order[j]
                for i in range(n):
                    Mv[i, j] = Av[row, i]
            dgeqrf(&nn, &ww, &Mv[0, 0], &nn, &tau[0], &work[0], &lwork_d, &info)
            if info != 0:
                raise np.linalg.LinAlgError("QR factorization failed")
            for j in range(w):
                for i in range(n):
                    Rv[i, j] = Mv[i, j] if i <= j else 0.0
            for j in range(w):
                for i in range(n):
                    Qfv[i, j] = Mv[i, j]
            dorgqr(&nn, &nn, &ww, &Qfv[0, 0], &nn, &tau[0], &work[0],
                   &lwork_d, &info)
            if info != 0:
                raise np.linalg.LinAlgError("orthogonal factor generation failed")
        else:
            for j in range(n):
                for i in range(n):
                    Qfv[i, j] = 1.0 if i == j else 0.0
        nz = n - w
        nz_i = <int> nz

        # gz = Z' g with Z = Qf[:, w:]
        for j in range(nz):
            val = 0.0
            for i in range(n):
                val += Qfv[i, w + j] * g[i]
            gz[j] = val

        stationary = True
        if nz:
            gmax = _absmax(gz, nz)
            stationary = gmax <= tol_ * scale
        infinite = False
        if not stationary:
            # Hr = Z' P Z via PZ = P Z (row-major P as transposed F-array)
            dgemm(b"T", b"N", &nn, &nz_i, &nn, &done, &Pv[0, 0], &nn,
                  &Qfv[0, w], &nn, &dzero, &PZv[0, 0], &nn)
            dgemm(b"T", b"N", &nz_i, &nz_i, &nn, &done, &Qfv[0, w], &nn,
                  &PZv[0, 0], &nn, &dzero, &Hrv[0, 0], &nn)
            for j in range(nz):
                for i in range(nz):
                    Evv[i, j] = Hrv[i, j]
            dsyevd(b"V", b"L", &nz_i, &Evv[0, 0], &nn, &evals[0], &work[0],
                   &lwork_d, &iwork[0], &liwork_d, &info)
            if info != 0:
                raise np.linalg.LinAlgError("eigendecomposition failed")
            emax = _absmax(evals, nz)
            thr = _EIG_THR * (emax if emax > 1.0 else 1.0)

            # project the reduced gradient on the flat directions first
            n_neg = 0
            val = 0.0
            for j in range(nz):
                if evals[j] <= thr:
                    coef[n_neg] = 0.0
                    for i in range(nz):
                        coef[n_neg] += Evv[i, j] * gz[i]
                    if fabs(coef[n_neg]) > val:
                        val = fabs(coef[n_neg])
                    n_neg += 1
            if n_neg and val > tol_ * scale:
                infinite = True
                for i in range(nz):
                    pz[i] = 0.0
                k = 0
                for j in range(nz):
                    if evals[j] <= thr:
                        for i in range(nz):
                            pz[i] -= Evv[i, j] * coef[k]
                        k += 1
            else:
                for i in range(nz):
                    pz[i] = 0.0
                for j in range(nz):
                    if evals[j] > thr:
                        val = 0.0
                        for i in range(nz):
                            val += Evv[i, j] * gz[i]
                        val /= evals[j]
                        for i in range(nz):
                            pz[i] -= Evv[i, j] * val
            # p = Z pz
            for i in range(n):
                val = 0.0
                for j in range(nz):
                    val += Qfv[i, w + j] * pz[j]
                pdir[i] = val
            if not infinite:
                pmax = _absmax(pdir, n)
                xmax = _absmax(xv, n)
                if xmax < 1.0:
                    xmax = 1.0
                if pmax <= tol_ * xmax:
                    stationary = True

        if stationary:
            if w:
                # mu solves R[:w,:w] mu = Qf[:, :w]' g
                for j in range(w):
                    val = 0.0
                    for i in range(n):
                        val += Qfv[i, j] * g[i]
                    mu[j] = val
                dtrtrs(b"U", b"N", b"N", &ww, &one, &Rv[0, 0], &nn,
                       &mu[0], &ww, &info)
                if info != 0:
                    raise np.linalg.LinAlgError("triangular solve failed")
            drop = -1
            if bland:
                drop_row = -1
                for k in range(w):
                    if order[k] >= neq and mu[k] < -tol_ * scale:
                        if drop_row < 0 or order[k] < drop_row:
                            drop_row = order[k]
                            drop = k
            else:
                mu_min = 0.0
                drop_row = -1
                for k in range(w):
                    if order[k] >= neq and mu[k] < -tol_ * scale:
                        if (drop < 0 or mu[k] < mu_min
                                or (mu[k] == mu_min and order[k] < drop_row)):
                            mu_min = mu[k]
                            drop_row = order[k]
                            drop = k
            if drop < 0:
                for i in range(m):
                    lam[i] = 0.0
                for k in range(w):
                    lam[order[k]] = mu[k]
                return x_, lam_[:m], OPTIMAL, int(iters)
            in_w[order[drop]] = False
            for k in range(drop, w - 1):
                order[k] = order[k + 1]
            w -= 1
            continue

        # ratio test over non-working inequality rows moving against us
        pmax = _absmax(pdir, n)
        eps_dir = 1e-12 * (pmax if pmax > 1.0 else 1.0)
        alpha_block = INFINITY
        best_ratio = INFINITY
        j_block = -1
        for r in range(neq, m):
            if in_w[r]:
                continue
            val = 0.0
            for i in range(n):
                val += Av[r, i] * pdir[i]
            if val < -eps_dir:
                resid = 0.0
                for i in range(n):
                    resid += Av[r, i] * xv[i]
                resid -= bv[r]
                if resid < 0.0:
                    resid = 0.0
                resid = resid / (-val)
                if resid < best_ratio:
                    best_ratio = resid
                    j_block = r
        alpha_block = best_ratio

        if infinite:
            if j_block < 0:
                return x_, lam_[:m], UNBOUNDED, int(iters)
            alpha = alpha_block
            for i in range(n):
                xv[i] += alpha * pdir[i]
            in_w[j_block] = True
            order[w] = j_block
            w += 1
        elif alpha_block >= 1.0 - 1e-12:
            alpha = 1.0
            for i in range(n):
                xv[i] += pdir[i]
        else:
            alpha = alpha_block
            for i in range(n):
                xv[i] += alpha * pdir[i]
            in_w[j_block] = True
            order[w] = j_block
            w += 1

        if alpha <= 1e-13:
            zero_steps += 1
            if zero_steps > 2 * (m + 1):
                bland = True
            if zero_steps > 4 * (m + 1) + 50:
                break
        else:
            zero_steps = 0
            bland = False

    return x_, lam_[:m], MAXITER, int(iters)
