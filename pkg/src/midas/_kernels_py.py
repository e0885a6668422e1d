"""Pure-Python kernels.

Reference implementations of the hot loops. ``midas._kernels`` (Cython) mirrors
these operation for operation; ``midas._backend`` picks one at import time.
"""
import math

import numpy as np

FIT_OK = 0
FIT_NO_EVENTS = 1
FIT_DIVERGED = 2

_LAMBDA_MAX = 1e16


def cumulative_counts(segments, levels, timestep):
    """Time each row of ``segments`` spends strictly above each level.

    Parameters
    ----------
    segments : ndarray, shape (n, L)
    levels : ndarray, shape (K,)
    timestep : float

    Returns
    -------
    ndarray, shape (n, K)
    """
    segments = np.asarray(segments, dtype=np.float64)
    levels = np.asarray(levels, dtype=np.float64)
    out = np.empty((segments.shape[0], levels.shape[0]))
    for k, level in enumerate(levels):
        out[:, k] = np.count_nonzero(segments > level, axis=1) * timestep
    return out


def _model(levels, a, mu, sigma):
    s2 = sigma * math.sqrt(2.0)
    return [0.5 * a * (1.0 - math.erf((e - mu) / s2)) for e in levels]


def _cost(levels, dwell, a, mu, sigma):
    total = 0.0
    for f, d in zip(_model(levels, a, mu, sigma), dwell):
        total += (f - d) * (f - d)
    return total


def _solve3(m, b):
    # Gaussian elimination with partial pivoting on a 3x3 system
    m = [row[:] for row in m]
    b = b[:]
    for col in range(3):
        piv = max(range(col, 3), key=lambda r: abs(m[r][col]))
        if m[piv][col] == 0.0:
            return None
        if piv != col:
            m[col], m[piv] = m[piv], m[col]
            b[col], b[piv] = b[piv], b[col]
        for r in range(col + 1, 3):
            f = m[r][col] / m[col][col]
            for c in range(col, 3):
                m[r][c] -= f * m[col][c]
            b[r] -= f * b[col]
    x = [0.0, 0.0, 0.0]
    for r in (2, 1, 0):
        acc = b[r]
        for c in range(r + 1, 3):
            acc -= m[r][c] * x[c]
        x[r] = acc / m[r][r]
    return x


def initial_guess(levels, dwell, fixed_amplitude=math.nan):
    a = max(dwell) if math.isnan(fixed_amplitude) else fixed_amplitude
    half = 0.5 * a
    mu = levels[-1]
    for k in range(1, len(levels)):
        if dwell[k] <= half:
            d0, d1 = dwell[k - 1], dwell[k]
            if d0 != d1:
                mu = levels[k - 1] + (d0 - half) / (d0 - d1) * (levels[k] - levels[k - 1])
            else:
                mu = levels[k]
            break
    sigma = 0.25 * (levels[-1] - levels[0])
    return a, mu, sigma


def fit_one(levels, dwell, max_iter=200, xtol=1e-8, fixed_amplitude=math.nan):
    """Levenberg-Marquardt fit of the Gaussian survival curve to one dwell curve.

    A finite ``fixed_amplitude`` pins ``A`` and fits only ``(mu, sigma)``.
    Returns ``((A, mu, sigma), residual_norm, status, iterations)``.
    """
    free_a = math.isnan(fixed_amplitude)
    levels = [float(v) for v in levels]
    dwell = [float(v) for v in dwell]
    if sum(1 for v in dwell if v > 0.0) < 3:
        return (math.nan, math.nan, math.nan), math.nan, FIT_NO_EVENTS, 0

    a, mu, sigma = initial_guess(levels, dwell, fixed_amplitude)
    cost = _cost(levels, dwell, a, mu, sigma)
    lam = 1e-3
    status = FIT_DIVERGED
    it = 0
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    inv_sqrtpi = 1.0 / math.sqrt(math.pi)
    while it < max_iter:
        it += 1
        if cost == 0.0:
            status = FIT_OK
            break
        jtj = [[0.0] * 3 for _ in range(3)]
        g = [0.0, 0.0, 0.0]
        for e, d in zip(levels, dwell):
            z = (e - mu) * inv_sqrt2 / sigma
            gz = math.exp(-z * z)
            r = 0.5 * a * (1.0 - math.erf(z)) - d
            j = (
                0.5 * (1.0 - math.erf(z)),
                a * gz * inv_sqrtpi * inv_sqrt2 / sigma,
                a * gz * z * inv_sqrtpi / sigma,
            )
            for p in range(3):
                g[p] += j[p] * r
                for q in range(3):
                    jtj[p][q] += j[p] * j[q]
        m = [row[:] for row in jtj]
        for p in range(3):
            m[p][p] += lam * max(jtj[p][p], 1e-300)
        rhs = [-v for v in g]
        if not free_a:
            m[0] = [1.0, 0.0, 0.0]
            m[1][0] = m[2][0] = 0.0
            rhs[0] = 0.0
        step = _solve3(m, rhs)
        if step is not None:
            ta, tmu, tsig = a + step[0], mu + step[1], sigma + step[2]
            tcost = _cost(levels, dwell, ta, tmu, tsig) if tsig > 0.0 else math.inf
        else:
            tcost = math.inf
        if tcost < cost:
            snorm = math.sqrt(step[0] ** 2 + step[1] ** 2 + step[2] ** 2)
            pnorm = math.sqrt(a * a + mu * mu + sigma * sigma)
            a, mu, sigma, cost = ta, tmu, tsig, tcost
            lam = max(lam * 0.1, 1e-12)
            if snorm <= xtol * (pnorm + xtol):
                status = FIT_OK
                break
        else:
            lam *= 10.0
            if lam > _LAMBDA_MAX:
                status = FIT_OK
                break
    return (a, mu, sigma), math.sqrt(cost), status, it


def fit_cdf_batch(levels, dwell, max_iter=200, xtol=1e-8, fixed_amplitude=math.nan):
    """Fit every row of ``dwell`` (shape (n, K)); see :func:`fit_one`."""
    dwell = np.asarray(dwell, dtype=np.float64)
    n = dwell.shape[0]
    params = np.empty((n, 3))
    resid = np.empty(n)
    status = np.empty(n, dtype=np.int8)
    iters = np.empty(n, dtype=np.int32)
    lv = [float(v) for v in levels]
    for i in range(n):
        p, r, s, k = fit_one(lv, dwell[i], max_iter, xtol, fixed_amplitude)
        params[i] = p
        resid[i] = r
        status[i] = s
        iters[i] = k
    return params, resid, status, iters


def spirit_track(samples, basis, energy, forgetting):
    """Run the SPIRIT/PAST recursion over ``samples`` (shape (T, d)).

    Returns updated copies of ``basis`` (d, k) and ``energy`` (k,) together with
    the per-step hidden variables (T, k) computed before each update.
    """
    x_all = np.asarray(samples, dtype=np.float64)
    w = np.array(basis, dtype=np.float64, order="F")
    en = np.array(energy, dtype=np.float64)
    k = w.shape[1]
    hidden = np.empty((x_all.shape[0], k))
    for t in range(x_all.shape[0]):
        x = x_all[t].copy()
        for i in range(k):
            wi = w[:, i]
            y = float(wi @ x)
            hidden[t, i] = y
            en[i] = forgetting * en[i] + y * y
            if y != 0.0:
                wi += (y / en[i]) * (x - y * wi)
                x -= y * wi
        for i in range(k):
            v = w[:, i]
            for j in range(i):
                v -= float(w[:, j] @ v) * w[:, j]
            v /= math.sqrt(float(v @ v))
    return np.ascontiguousarray(w), en, hidden
