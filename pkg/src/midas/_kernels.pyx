# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; same contracts as ``midas._kernels_py``."""
import numpy as np

from libc.math cimport erf, exp, sqrt, fabs, isnan, INFINITY, NAN

cdef int MAXK = 64

cdef int FIT_OK = 0
cdef int FIT_NO_EVENTS = 1
cdef int FIT_DIVERGED = 2
cdef double LAMBDA_MAX = 1e16
cdef double INV_SQRT2 = 0.70710678118654752440
cdef double INV_SQRTPI = 0.56418958354775628695


def cumulative_counts(segments, levels, double timestep):
    cdef double[:, ::1] seg = np.ascontiguousarray(segments, dtype=np.float64)
    cdef double[::1] lv = np.ascontiguousarray(levels, dtype=np.float64)
    cdef Py_ssize_t n = seg.shape[0], L = seg.shape[1], K = lv.shape[0]
    out_arr = np.empty((n, K))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef long count
    for i in range(n):
        for k in range(K):
            count = 0
            for j in range(L):
                if seg[i, j] > lv[k]:
                    count += 1
            out[i, k] = count * timestep
    return out_arr


cdef double _cost(const double* lv, const double* d, Py_ssize_t K,
                  double a, double mu, double sigma) nogil:
    cdef double s2 = sigma * sqrt(2.0)
    cdef double total = 0.0, f
    cdef Py_ssize_t k
    for k in range(K):
        f = 0.5 * a * (1.0 - erf((lv[k] - mu) / s2))
        total += (f - d[k]) * (f - d[k])
    return total


cdef bint _solve3(double m[3][3], double b[3], double x[3]) nogil:
    cdef int col, r, c, piv
    cdef double f, acc, tmp
    for col in range(3):
        piv = col
        for r in range(col + 1, 3):
            if fabs(m[r][col]) > fabs(m[piv][col]):
                piv = r
        if m[piv][col] == 0.0:
            return False
        if piv != col:
            for c in range(3):
                tmp = m[col][c]
                m[col][c] = m[piv][c]
                m[piv][c] = tmp
            tmp = b[col]
            b[col] = b[piv]
            b[piv] = tmp
        for r in range(col + 1, 3):
            f = m[r][col] / m[col][col]
            for c in range(col, 3):
                m[r][c] -= f * m[col][c]
            b[r] -= f * b[col]
    for r in range(2, -1, -1):
        acc = b[r]
        for c in range(r + 1, 3):
            acc -= m[r][c] * x[c]
        x[r] = acc / m[r][r]
    return True


cdef int _fit_one(const double* lv, const double* d, Py_ssize_t K, int max_iter,
                  double xtol, double fixed_a, double* out, double* resid, int* iters) nogil:
    cdef Py_ssize_t k
    cdef int npos = 0, p, q, it = 0, status
    cdef double a, mu, sigma, half, d0, d1, cost, lam, tcost
    cdef double ta, tmu, tsig, z, gz, r, snorm, pnorm, erfz
    cdef double jtj[3][3]
    cdef double m[3][3]
    cdef double g[3]
    cdef double rhs[3]
    cdef double step[3]
    cdef double j[3]
    cdef bint ok
    cdef bint free_a = isnan(fixed_a)

    for k in range(K):
        if d[k] > 0.0:
            npos += 1
    if npos < 3:
        out[0] = NAN
        out[1] = NAN
        out[2] = NAN
        resid[0] = NAN
        iters[0] = 0
        return FIT_NO_EVENTS

    if free_a:
        a = d[0]
        for k in range(1, K):
            if d[k] > a:
                a = d[k]
    else:
        a = fixed_a
    half = 0.5 * a
    mu = lv[K - 1]
    for k in range(1, K):
        if d[k] <= half:
            d0 = d[k - 1]
            d1 = d[k]
            if d0 != d1:
                mu = lv[k - 1] + (d0 - half) / (d0 - d1) * (lv[k] - lv[k - 1])
            else:
                mu = lv[k]
            break
    sigma = 0.25 * (lv[K - 1] - lv[0])

    cost = _cost(lv, d, K, a, mu, sigma)
    lam = 1e-3
    status = FIT_DIVERGED
    while it < max_iter:
        it += 1
        if cost == 0.0:
            status = FIT_OK
            break
        for p in range(3):
            g[p] = 0.0
            for q in range(3):
                jtj[p][q] = 0.0
        for k in range(K):
            z = (lv[k] - mu) * INV_SQRT2 / sigma
            gz = exp(-z * z)
            erfz = erf(z)
            r = 0.5 * a * (1.0 - erfz) - d[k]
            j[0] = 0.5 * (1.0 - erfz)
            j[1] = a * gz * INV_SQRTPI * INV_SQRT2 / sigma
            j[2] = a * gz * z * INV_SQRTPI / sigma
            for p in range(3):
                g[p] += j[p] * r
                for q in range(3):
                    jtj[p][q] += j[p] * j[q]
        for p in range(3):
            for q in range(3):
                m[p][q] = jtj[p][q]
            m[p][p] += lam * (jtj[p][p] if jtj[p][p] > 1e-300 else 1e-300)
            rhs[p] = -g[p]
        if not free_a:
            for q in range(3):
                m[0][q] = 0.0
                m[q][0] = 0.0
            m[0][0] = 1.0
            rhs[0] = 0.0
        ok = _solve3(m, rhs, step)
        tcost = INFINITY
        if ok:
            ta = a + step[0]
            tmu = mu + step[1]
            tsig = sigma + step[2]
            if tsig > 0.0:
                tcost = _cost(lv, d, K, ta, tmu, tsig)
        if tcost < cost:
            snorm = sqrt(step[0] * step[0] + step[1] * step[1] + step[2] * step[2])
            pnorm = sqrt(a * a + mu * mu + sigma * sigma)
            a = ta
            mu = tmu
            sigma = tsig
            cost = tcost
            lam = lam * 0.1
            if lam < 1e-12:
                lam = 1e-12
            if snorm <= xtol * (pnorm + xtol):
                status = FIT_OK
                break
        else:
            lam *= 10.0
            if lam > LAMBDA_MAX:
                status = FIT_OK
                break
    out[0] = a
    out[1] = mu
    out[2] = sigma
    resid[0] = sqrt(cost)
    iters[0] = it
    return status


def fit_cdf_batch(levels, dwell, int max_iter=200, double xtol=1e-8, double fixed_amplitude=NAN):
    cdef double[::1] lv = np.ascontiguousarray(levels, dtype=np.float64)
    cdef double[:, ::1] dw = np.ascontiguousarray(dwell, dtype=np.float64)
    cdef Py_ssize_t n = dw.shape[0], K = dw.shape[1], i
    if K > MAXK:
        raise ValueError(f"at most {MAXK} threshold levels supported")
    params_arr = np.empty((n, 3))
    resid_arr = np.empty(n)
    status_arr = np.empty(n, dtype=np.int8)
    iters_arr = np.empty(n, dtype=np.int32)
    cdef double[:, ::1] params = params_arr
    cdef double[::1] resid = resid_arr
    cdef signed char[::1] status = status_arr
    cdef int[::1] iters = iters_arr
    cdef int it
    if n == 0:
        return params_arr, resid_arr, status_arr, iters_arr
    with nogil:
        for i in range(n):
            status[i] = <signed char>_fit_one(&lv[0], &dw[i, 0], K, max_iter, xtol, fixed_amplitude,
                                              &params[i, 0], &resid[i], &it)
            iters[i] = it
    return params_arr, resid_arr, status_arr, iters_arr


def spirit_track(samples, basis, energy, double forgetting):
    cdef double[:, ::1] xs = np.ascontiguousarray(samples, dtype=np.float64)
    # basis is stored transposed (k, d) so each direction is contiguous
    wt_arr = np.ascontiguousarray(np.asarray(basis, dtype=np.float64).T)
    en_arr = np.array(energy, dtype=np.float64)
    cdef double[:, ::1] wt = wt_arr
    cdef double[::1] en = en_arr
    cdef Py_ssize_t T = xs.shape[0], dim = wt.shape[1], K = wt.shape[0]
    hidden_arr = np.empty((T, K))
    cdef double[:, ::1] hidden = hidden_arr
    x_arr = np.empty(dim)
    cdef double[::1] x = x_arr
    cdef Py_ssize_t t, i, jj, c
    cdef double y, coef, dot, nrm
    with nogil:
        for t in range(T):
            for c in range(dim):
                x[c] = xs[t, c]
            for i in range(K):
                y = 0.0
                for c in range(dim):
                    y += wt[i, c] * x[c]
                hidden[t, i] = y
                en[i] = forgetting * en[i] + y * y
                if y != 0.0:
                    coef = y / en[i]
                    for c in range(dim):
                        wt[i, c] += coef * (x[c] - y * wt[i, c])
                    for c in range(dim):
                        x[c] -= y * wt[i, c]
            for i in range(K):
                for jj in range(i):
                    dot = 0.0
                    for c in range(dim):
                        dot += wt[jj, c] * wt[i, c]
                    for c in range(dim):
                        wt[i, c] -= dot * wt[jj, c]
                nrm = 0.0
                for c in range(dim):
                    nrm += wt[i, c] * wt[i, c]
                nrm = sqrt(nrm)
                for c in range(dim):
                    wt[i, c] /= nrm
    return np.ascontiguousarray(wt_arr.T), en_arr, hidden_arr
