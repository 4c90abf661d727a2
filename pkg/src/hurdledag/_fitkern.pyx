# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled fitting kernels; mirrors _fitkern_py exactly (same algorithms,
same stopping rules) with loop-level implementations that avoid temporary
allocations in the hot per-(node, parent-set) fitting path."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log, log1p, sqrt

from scipy.linalg.cython_lapack cimport dposv

cnp.import_array()

BACKEND = "cython"

DEF LOG2PI = 1.8378770664093453


cdef inline double _softplus(double x) nogil:
    if x > 0.0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


cdef inline double _sigmoid(double x) nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef double _logistic_nll_c(double[:, ::1] X, double[::1] z, double[::1] w, double ridge) nogil:
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1], i, j
    cdef double acc = 0.0, eta, pen = 0.0
    for i in range(n):
        eta = 0.0
        for j in range(p):
            eta += X[i, j] * w[j]
        acc += _softplus(eta) - z[i] * eta
    for j in range(1, p):
        pen += w[j] * w[j]
    return acc + 0.5 * ridge * pen


cdef int _solve_spd(double[:, ::1] H, double[::1] rhs, double[::1] out, double[:, ::1] scratch) nogil:
    """Solve H x = rhs for symmetric positive definite H via LAPACK dposv.

    H is copied into scratch (dposv overwrites); returns LAPACK info.
    """
    cdef int n = <int>H.shape[0], nrhs = 1, info = 0
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(n):
            scratch[i, j] = H[i, j]
        out[i] = rhs[i]
    dposv("L", &n, &nrhs, &scratch[0, 0], &n, &out[0], &n, &info)
    return info


def logistic_irls(X, z, double ridge=1e-4, double tol=1e-8, int max_iter=100, w0=None):
    """Minimize sum softplus(Xw) - z'Xw + ridge/2 |w[1:]|^2 by damped Newton.

    Returns (w, unpenalized_nll, converged, iterations).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    z = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[:, ::1] Xv = X
    cdef double[::1] zv = z
    cdef Py_ssize_t n = Xv.shape[0], p = Xv.shape[1], i, j, l
    w_arr = np.zeros(p) if w0 is None else np.array(w0, dtype=np.float64)
    cdef double[::1] w = w_arr
    grad_arr = np.empty(p)
    cdef double[::1] grad = grad_arr
    cdef double[::1] step = np.empty(p)
    cdef double[::1] cand = np.empty(p)
    cdef double[:, ::1] H = np.empty((p, p))
    cdef double[:, ::1] scratch = np.empty((p, p))
    cdef double nll, eta, s, wgt, gmax, gd, t, cand_nll, improvement, jitter
    cdef int it = 0, ls, info
    cdef bint converged = False

    nll = _logistic_nll_c(Xv, zv, w, ridge)
    while it < max_iter:
        for j in range(p):
            grad[j] = 0.0
            for l in range(p):
                H[j, l] = 0.0
        for i in range(n):
            eta = 0.0
            for j in range(p):
                eta += Xv[i, j] * w[j]
            s = _sigmoid(eta)
            wgt = s * (1.0 - s)
            for j in range(p):
                grad[j] += Xv[i, j] * (s - zv[i])
                for l in range(j, p):
                    H[j, l] += wgt * Xv[i, j] * Xv[i, l]
        for j in range(1, p):
            grad[j] += ridge * w[j]
            H[j, j] += ridge
        for j in range(p):
            for l in range(j + 1, p):
                H[l, j] = H[j, l]
        gmax = 0.0
        for j in range(p):
            if fabs(grad[j]) > gmax:
                gmax = fabs(grad[j])
        if gmax <= tol:
            converged = True
            break
        it += 1
        for j in range(p):
            step[j] = -grad[j]
        info = _solve_spd(H, grad, step, scratch)
        if info == 0:
            for j in range(p):
                step[j] = -step[j]
        else:
            jitter = 0.0
            for j in range(p):
                jitter += H[j, j]
            jitter = 1e-8 * jitter / p
            for j in range(p):
                H[j, j] += jitter
            info = _solve_spd(H, grad, step, scratch)
            for j in range(p):
                step[j] = -step[j]
        gd = 0.0
        for j in range(p):
            gd += grad[j] * step[j]
        t = 1.0
        cand_nll = nll
        for ls in range(60):
            for j in range(p):
                cand[j] = w[j] + t * step[j]
            cand_nll = _logistic_nll_c(Xv, zv, cand, ridge)
            if cand_nll <= nll + 1e-4 * t * gd or cand_nll <= nll:
                break
            t *= 0.5
        for j in range(p):
            w[j] = w[j] + t * step[j]
        improvement = nll - cand_nll
        nll = cand_nll
        if improvement <= 1e-15 * (1.0 + fabs(nll)):
            break
    if not converged:
        gmax = 0.0
        for j in range(p):
            grad[j] = ridge * w[j] if j > 0 else 0.0
        for i in range(n):
            eta = 0.0
            for j in range(p):
                eta += Xv[i, j] * w[j]
            s = _sigmoid(eta)
            for j in range(p):
                grad[j] += Xv[i, j] * (s - zv[i])
        for j in range(p):
            if fabs(grad[j]) > gmax:
                gmax = fabs(grad[j])
        converged = gmax <= tol
    cdef double raw = 0.0
    for i in range(n):
        eta = 0.0
        for j in range(p):
            eta += Xv[i, j] * w[j]
        raw += _softplus(eta) - zv[i] * eta
    return w_arr, raw, bool(converged), it


def canonical_nll(X, y, z, a, b, double tau):
    """Canonical Hurdle NLL: sum softplus(eta) - z*alpha - beta*y + k*y^2/2."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] Xv = X
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef double[::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0], p = Xv.shape[1], i, j
    cdef double k = exp(tau), acc = 0.0, alpha, beta, eta, half = 0.5 * (LOG2PI - tau)
    for i in range(n):
        alpha = 0.0
        beta = 0.0
        for j in range(p):
            alpha += Xv[i, j] * av[j]
            beta += Xv[i, j] * bv[j]
        eta = alpha + beta * beta / (2.0 * k) + half
        acc += _softplus(eta) - zv[i] * alpha - beta * yv[i] + 0.5 * k * yv[i] * yv[i]
    return acc


def canonical_objective(X, y, z, a, b, double tau):
    """NLL, gradient, Hessian in theta = (a, b, tau); k = exp(tau)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[:, ::1] Xv = X
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef double[::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0], p = Xv.shape[1], q = 2 * p + 1, i, j, l
    grad_arr = np.zeros(q)
    H_arr = np.zeros((q, q))
    u_arr = np.empty(q)
    cdef double[::1] grad = grad_arr
    cdef double[:, ::1] H = H_arr
    cdef double[::1] u = u_arr
    cdef double k = exp(tau), half = 0.5 * (LOG2PI - tau)
    cdef double nll = 0.0, alpha, beta, eta, s, w1, gt, bk, y2
    for i in range(n):
        alpha = 0.0
        beta = 0.0
        for j in range(p):
            alpha += Xv[i, j] * av[j]
            beta += Xv[i, j] * bv[j]
        bk = beta / k
        gt = -beta * bk / 2.0 - 0.5
        eta = alpha + beta * bk / 2.0 + half
        s = _sigmoid(eta)
        w1 = s * (1.0 - s)
        y2 = yv[i] * yv[i]
        nll += _softplus(eta) - zv[i] * alpha - beta * yv[i] + 0.5 * k * y2
        for j in range(p):
            u[j] = Xv[i, j]
            u[p + j] = Xv[i, j] * bk
        u[2 * p] = gt
        for j in range(p):
            grad[j] += Xv[i, j] * (s - zv[i])
            grad[p + j] += Xv[i, j] * (s * bk - yv[i])
        grad[2 * p] += s * gt + 0.5 * k * y2
        for j in range(q):
            for l in range(j, q):
                H[j, l] += w1 * u[j] * u[l]
        # curvature of eta: d2/db db' = xx'/k, d2/db dtau = -(beta/k) x, d2/dtau2 = beta^2/(2k)
        for j in range(p):
            for l in range(j, p):
                H[p + j, p + l] += s * Xv[i, j] * Xv[i, l] / k
            H[p + j, 2 * p] += -s * bk * Xv[i, j]
        H[2 * p, 2 * p] += s * beta * bk / 2.0 + 0.5 * k * y2
    for j in range(q):
        for l in range(j + 1, q):
            H[l, j] = H[j, l]
    return nll, grad_arr, H_arr
