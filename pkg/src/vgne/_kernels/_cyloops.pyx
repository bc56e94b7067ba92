# Compiled twins of the runners in pyloops.py: same signatures, same
# status codes, iterates updated in place.  Kept free of the numpy C-API;
# everything goes through typed memoryviews.

import numpy as np

from libc.math cimport isfinite, sqrt

STATUS_CONVERGED = 0
STATUS_BUDGET = 1
STATUS_NONFINITE = 2


def pfb_run(double[::1] x, double[::1] lam, const double[::1] q, const double[:, ::1] c,
            const double[:, ::1] dmat, const double[:, ::1] A, const double[::1] b,
            const double[::1] alpha_vec, double gamma, const double[::1] lo, const double[::1] hi,
            Py_ssize_t max_steps, double tol):
    cdef Py_ssize_t N = dmat.shape[0]
    cdef Py_ssize_t n = dmat.shape[1]
    cdef Py_ssize_t m = A.shape[0]
    cdef Py_ssize_t nN = N * n
    cdef Py_ssize_t step = 0, i, j, k, t, u
    cdef double res = float("nan")
    cdef double acc, val, rk, adx, lnk, dlk, quad, lk, invN = 1.0 / N

    buf = np.empty(2 * n + nN + nN + m, dtype=np.float64)
    cdef double[::1] s = buf[:n]
    cdef double[::1] cs = buf[n:2 * n]
    cdef double[::1] g = buf[2 * n:2 * n + nN]
    cdef double[::1] xn = buf[2 * n + nN:2 * n + 2 * nN]
    cdef double[::1] ln = buf[2 * n + 2 * nN:]

    while step < max_steps:
        step += 1
        # average of the agent blocks
        for t in range(n):
            s[t] = 0.0
        for i in range(N):
            for t in range(n):
                s[t] += x[i * n + t]
        for t in range(n):
            s[t] *= invN
        for t in range(n):
            acc = 0.0
            for u in range(n):
                acc += c[t, u] * s[u]
            cs[t] = acc
        # stacked gradient: q_i x_i + c s + (c' x_i)/N + d_i
        for i in range(N):
            for t in range(n):
                acc = 0.0
                for u in range(n):
                    acc += c[u, t] * x[i * n + u]
                g[i * n + t] = q[i] * x[i * n + t] + cs[t] + acc * invN + dmat[i, t]
        for k in range(m):
            lk = lam[k]
            if lk != 0.0:
                for j in range(nN):
                    g[j] += A[k, j] * lk
        # projected primal update
        quad = 0.0
        for j in range(nN):
            val = x[j] - alpha_vec[j] * g[j]
            if val < lo[j]:
                val = lo[j]
            elif val > hi[j]:
                val = hi[j]
            xn[j] = val
            val -= x[j]
            quad += val * val / alpha_vec[j]
        # reflected dual update and metric-weighted residual
        for k in range(m):
            rk = -b[k]
            adx = 0.0
            for j in range(nN):
                rk += A[k, j] * (2.0 * xn[j] - x[j])
                adx += A[k, j] * (xn[j] - x[j])
            lnk = lam[k] + gamma * rk
            if lnk < 0.0:
                lnk = 0.0
            ln[k] = lnk
            dlk = lnk - lam[k]
            quad += dlk * dlk / gamma - 2.0 * dlk * adx
        for j in range(nN):
            x[j] = xn[j]
        for k in range(m):
            lam[k] = ln[k]
        if not isfinite(quad):
            return step, quad, 2
        res = sqrt(quad) if quad > 0.0 else 0.0
        if res <= tol:
            return step, res, 0
    return step, res, 1


def consensus_run(double[::1] x, double[::1] v, const double[::1] q, const double[:, ::1] c,
                  const double[:, ::1] dmat, double alpha, const double[::1] lo, const double[::1] hi,
                  const Py_ssize_t[::1] indptr, const Py_ssize_t[::1] indices, const double[::1] inv_sizes,
                  bint chain_term, Py_ssize_t max_steps, double tol):
    cdef Py_ssize_t N = dmat.shape[0]
    cdef Py_ssize_t n = dmat.shape[1]
    cdef Py_ssize_t nN = N * n
    cdef Py_ssize_t step = 0, i, j, t, u, p
    cdef double res = float("nan")
    cdef double acc, val, quad

    buf = np.empty(3 * nN, dtype=np.float64)
    cdef double[::1] sig = buf[:nN]
    cdef double[::1] g = buf[nN:2 * nN]
    cdef double[::1] xn = buf[2 * nN:]

    while step < max_steps:
        step += 1
        # closed-neighborhood averages of the estimates
        for i in range(N):
            for t in range(n):
                acc = 0.0
                for p in range(indptr[i], indptr[i + 1]):
                    acc += v[indices[p] * n + t]
                sig[i * n + t] = acc * inv_sizes[i]
        # gradient at the local estimates
        for i in range(N):
            for t in range(n):
                acc = 0.0
                for u in range(n):
                    acc += c[t, u] * sig[i * n + u]
                val = q[i] * x[i * n + t] + acc + dmat[i, t]
                if chain_term:
                    acc = 0.0
                    for u in range(n):
                        acc += c[u, t] * x[i * n + u]
                    val += acc / N
                g[i * n + t] = val
        quad = 0.0
        for j in range(nN):
            val = x[j] - alpha * g[j]
            if val < lo[j]:
                val = lo[j]
            elif val > hi[j]:
                val = hi[j]
            xn[j] = val
            val -= x[j]
            quad += val * val
            # estimate update: sig + (xn - x); reuse val = xn - x
            acc = sig[j] + val - v[j]
            quad += acc * acc
            sig[j] = sig[j] + val
        for j in range(nN):
            x[j] = xn[j]
            v[j] = sig[j]
        if not isfinite(quad):
            return step, quad, 2
        res = sqrt(quad) if quad > 0.0 else 0.0
        if res <= tol:
            return step, res, 0
    return step, res, 1
