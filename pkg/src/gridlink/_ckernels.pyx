# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; same contract as ``gridlink._pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, isfinite
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef double CORR_EPS = 1e-6
cdef double COS_EPS = 1e-12
cdef double SUM_TOL = 1e-14
cdef double LABEL_MARGIN = 1e-12

CONVERGED = 0
MAX_ITERS = 1
NONFINITE = 2


def bfs_capped(const cnp.int64_t[:] indptr, const cnp.int64_t[:] indices, Py_ssize_t source, Py_ssize_t cap):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    dist_arr = np.full(n, -1, dtype=np.int64)
    cdef cnp.int64_t[:] dist = dist_arr
    cdef cnp.int64_t* queue = <cnp.int64_t*> malloc(max(n, 1) * sizeof(cnp.int64_t))
    cdef Py_ssize_t head = 0, tail = 0, k
    cdef cnp.int64_t u, w, du
    if queue == NULL:
        raise MemoryError()
    with nogil:
        dist[source] = 0
        queue[tail] = source
        tail += 1
        while head < tail:
            u = queue[head]
            head += 1
            du = dist[u]
            if du >= cap:
                continue
            for k in range(indptr[u], indptr[u + 1]):
                w = indices[k]
                if dist[w] < 0:
                    dist[w] = du + 1
                    queue[tail] = w
                    tail += 1
    free(queue)
    return dist_arr


cdef double _accum_row(const double* z, const double* zc, double nz, double nzc,
                       const double[:, :] Y, Py_ssize_t row, int kind, double sign,
                       double* grad, Py_ssize_t A) noexcept nogil:
    """Add ``sign * d sim(z, Y[row]) / dz`` to ``grad``; return ``sim(z, Y[row])``."""
    cdef Py_ssize_t a
    cdef double val = 0.0, ny, dot, c, ym, nyc, r, denom
    if kind == 0 or kind == 2:
        ny = 0.0
        dot = 0.0
        for a in range(A):
            ny += Y[row, a] * Y[row, a]
            dot += z[a] * Y[row, a]
        ny = sqrt(ny)
        if nz >= COS_EPS and ny >= COS_EPS:
            denom = nz * ny
            c = dot / denom
            val += c
            for a in range(A):
                grad[a] += sign * (Y[row, a] / denom - c * z[a] / (nz * nz))
    if kind == 0 or kind == 1:
        ym = 0.0
        for a in range(A):
            ym += Y[row, a]
        ym /= A
        nyc = 0.0
        dot = 0.0
        for a in range(A):
            nyc += (Y[row, a] - ym) * (Y[row, a] - ym)
            dot += zc[a] * (Y[row, a] - ym)
        nyc = sqrt(nyc)
        if nzc >= CORR_EPS and nyc >= CORR_EPS:
            denom = nzc * nyc
            r = dot / denom
            val += r
            for a in range(A):
                grad[a] += sign * ((Y[row, a] - ym) / denom - r * zc[a] / (nzc * nzc))
    return val


cdef double _gap(const double* z, const double[:, :] P, const double[:, :] Q, double q_const,
                 int kind, double* grad, double* zc, Py_ssize_t A) noexcept nogil:
    cdef Py_ssize_t a, j
    cdef double nz = 0.0, zm = 0.0, nzc = 0.0, total = 0.0
    for a in range(A):
        grad[a] = 0.0
        nz += z[a] * z[a]
        zm += z[a]
    nz = sqrt(nz)
    zm /= A
    for a in range(A):
        zc[a] = z[a] - zm
        nzc += zc[a] * zc[a]
    nzc = sqrt(nzc)
    for j in range(P.shape[0]):
        total += _accum_row(z, zc, nz, nzc, P, j, kind, 1.0, grad, A)
    for j in range(Q.shape[0]):
        total -= _accum_row(z, zc, nz, nzc, Q, j, kind, -1.0, grad, A)
    return total - q_const


cdef void _constraint_check(double* s, const double[:] v, double theta, bint l1,
                            Py_ssize_t label, Py_ssize_t A) noexcept nogil:
    cdef Py_ssize_t a, rnd, nfree
    cdef double mean = 0.0, r, norm, gap, avg, d, lo, hi, m
    for a in range(A):
        mean += s[a]
    mean /= A
    for a in range(A):
        s[a] -= mean
        lo = -v[a]
        hi = 1.0 - v[a]
        if s[a] < lo:
            s[a] = lo
        elif s[a] > hi:
            s[a] = hi
    for rnd in range(A):
        r = 0.0
        for a in range(A):
            r += s[a]
        if fabs(r) <= SUM_TOL:
            break
        nfree = 0
        for a in range(A):
            if (r > 0 and s[a] > -v[a]) or (r < 0 and s[a] < 1.0 - v[a]):
                nfree += 1
        if nfree == 0:
            break
        m = r / nfree
        for a in range(A):
            if (r > 0 and s[a] > -v[a]) or (r < 0 and s[a] < 1.0 - v[a]):
                s[a] -= m
                lo = -v[a]
                hi = 1.0 - v[a]
                if s[a] < lo:
                    s[a] = lo
                elif s[a] > hi:
                    s[a] = hi

    norm = 0.0
    if l1:
        for a in range(A):
            norm += fabs(s[a])
    else:
        for a in range(A):
            norm += s[a] * s[a]
        norm = sqrt(norm)
    if norm > theta:
        for a in range(A):
            s[a] = s[a] * (theta / norm) if theta > 0 else 0.0

    for a in range(A):
        if a == label:
            continue
        gap = (v[label] + s[label]) - (v[a] + s[a])
        if gap <= 0:
            avg = 0.5 * (v[label] + s[label] + v[a] + s[a])
            d = -0.5 * gap + min(LABEL_MARGIN, 0.5 * avg)
            s[a] -= d
            s[label] += d


def constraint_check(s, const double[:] v, double theta, bint l1, Py_ssize_t label):
    out = np.array(s, dtype=np.float64)
    cdef double[:] o = out
    with nogil:
        _constraint_check(&o[0], v, theta, l1, label, o.shape[0])
    return out


def gap_value_grad(const double[:] z, const double[:, :] P, const double[:, :] Q, double q_const, int kind):
    cdef Py_ssize_t A = z.shape[0]
    grad_arr = np.zeros(A)
    zc_arr = np.empty(A)
    zz_arr = np.array(z, dtype=np.float64)
    cdef double[:] grad = grad_arr, zc = zc_arr, zz = zz_arr
    cdef double val
    with nogil:
        val = _gap(&zz[0], P, Q, q_const, kind, &grad[0], &zc[0], A)
    return val, grad_arr


def solve_node(const double[:] v, const double[:, :] P, const double[:, :] Q, double q_const, int kind,
               double theta, double alpha, double beta, double eps, Py_ssize_t max_iters, bint l1):
    cdef Py_ssize_t A = v.shape[0]
    cdef Py_ssize_t a, k, C = 0, iters = 0
    cdef int status = 1
    cdef double mu = 0.0, nu = 0.0, d, d0, best_d, ns, norm, step, tot, sgn
    s_arr = np.zeros(A)
    best_arr = np.zeros(A)
    lam_arr = np.zeros(A)
    work = np.zeros((5, A))
    cdef double[:] s = s_arr, best = best_arr, lam = lam_arr
    cdef double[:] g = work[0], grad = work[1], snew = work[2], z = work[3], zc = work[4]
    for a in range(A):
        if v[a] > v[C]:
            C = a
    with nogil:
        for a in range(A):
            z[a] = v[a]
        d = _gap(&z[0], P, Q, q_const, kind, &g[0], &zc[0], A)
        d0 = d
        best_d = d
        if theta <= 0:
            status = 0
        else:
            for k in range(max_iters):
                if not isfinite(d):
                    status = 2
                    break
                for a in range(A):
                    if not isfinite(g[a]):
                        status = 2
                if status == 2:
                    break
                tot = 0.0
                for a in range(A):
                    grad[a] = g[a] + mu
                    if a != C:
                        grad[a] += lam[a]
                        tot += lam[a]
                grad[C] -= tot
                if l1:
                    for a in range(A):
                        sgn = 1.0 if s[a] > 0 else (-1.0 if s[a] < 0 else 0.0)
                        grad[a] += nu * sgn
                else:
                    ns = 0.0
                    for a in range(A):
                        ns += s[a] * s[a]
                    ns = sqrt(ns)
                    if ns > 0:
                        for a in range(A):
                            grad[a] += nu * s[a] / ns
                for a in range(A):
                    snew[a] = s[a] - alpha * grad[a]
                # multipliers see the unprojected step; the projected one is feasible by construction
                norm = 0.0
                tot = 0.0
                for a in range(A):
                    if a != C:
                        lam[a] = lam[a] + beta * (v[a] + snew[a] - v[C] - snew[C])
                        if lam[a] < 0:
                            lam[a] = 0.0
                    if l1:
                        norm += fabs(snew[a])
                    else:
                        norm += snew[a] * snew[a]
                    tot += snew[a]
                if not l1:
                    norm = sqrt(norm)
                nu = nu + beta * (norm - theta)
                if nu < 0:
                    nu = 0.0
                mu = mu + beta * tot
                _constraint_check(&snew[0], v, theta, l1, C, A)
                step = 0.0
                for a in range(A):
                    step += (snew[a] - s[a]) * (snew[a] - s[a])
                step = sqrt(step)
                for a in range(A):
                    s[a] = snew[a]
                    z[a] = v[a] + s[a]
                iters = k + 1
                d = _gap(&z[0], P, Q, q_const, kind, &g[0], &zc[0], A)
                if d < best_d:
                    best_d = d
                    for a in range(A):
                        best[a] = s[a]
                if step < eps:
                    status = 0
                    break
    if status == 2:
        return np.zeros(A), d0, d0, iters, lam_arr, mu, nu, status
    return best_arr, d0, best_d, iters, lam_arr, mu, nu, status
