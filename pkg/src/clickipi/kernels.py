"""Numeric hot loops with a numba path and a pure-numpy path.

Both paths of the window edit distance perform the same floating point
operations cell by cell, so their outputs are bit-identical. The Cox kernels
agree to rounding only (different summation order).
"""

from __future__ import annotations

import numpy as np

from ._jit import USE_NUMBA, njit

# --------------------------------------------------------------------------
# windowed weighted edit distance
# --------------------------------------------------------------------------


def _window_rows_loops(stream, patterns, lengths, w_del, w_ins, w_sub):
    n = stream.shape[0]
    n_pat = patterns.shape[0]
    out = np.empty((n_pat, n + 1))
    prev = np.empty(n + 1)
    cur = np.empty(n + 1)
    for p in range(n_pat):
        m = lengths[p]
        for j in range(n + 1):
            prev[j] = 0.0
        for i in range(1, m + 1):
            tok = patterns[p, i - 1]
            cur[0] = prev[0] + w_ins
            for j in range(1, n + 1):
                if stream[j - 1] == tok:
                    best = prev[j - 1] + 0.0
                else:
                    best = prev[j - 1] + w_sub
                dele = cur[j - 1] + w_del
                if dele < best:
                    best = dele
                ins = prev[j] + w_ins
                if ins < best:
                    best = ins
                cur[j] = best
            for j in range(n + 1):
                prev[j] = cur[j]
        for j in range(n + 1):
            out[p, j] = prev[j]
    return out


_window_rows_numba = njit(_window_rows_loops)


def _window_rows_numpy(stream, patterns, lengths, w_del, w_ins, w_sub):
    n = stream.shape[0]
    n_pat, m_max = patterns.shape
    out = np.zeros((n_pat, n + 1))
    prev = np.zeros((n_pat, n + 1))
    for i in range(1, m_max + 1):
        tok = patterns[:, i - 1]
        diag = prev[:, :-1] + np.where(stream[None, :] == tok[:, None], 0.0, w_sub)
        base = np.minimum(diag, prev[:, 1:] + w_ins)
        cur = np.empty_like(prev)
        cur[:, 0] = prev[:, 0] + w_ins
        for j in range(1, n + 1):
            cur[:, j] = np.minimum(base[:, j - 1], cur[:, j - 1] + w_del)
        done = lengths == i
        out[done] = cur[done]
        prev = cur
    return out


def window_last_rows(stream, patterns, lengths, w_del, w_ins, w_sub, *, use_numba=None):
    """Final DP row of every pattern against ``stream``.

    ``out[p, j]`` is the cheapest cost of turning some window of ``stream``
    ending at position ``j`` into pattern ``p``. The window distance is the
    row minimum; the distance for the prefix ``stream[:j]`` is the running
    minimum up to ``j``.

    ``stream`` is an int array of token codes, ``patterns`` an int matrix
    padded with -1, ``lengths`` the true pattern lengths (all >= 1).
    """
    stream = np.ascontiguousarray(stream, dtype=np.int64)
    patterns = np.ascontiguousarray(patterns, dtype=np.int64)
    lengths = np.ascontiguousarray(lengths, dtype=np.int64)
    if use_numba is None:
        use_numba = USE_NUMBA
    fn = _window_rows_numba if use_numba else _window_rows_numpy
    return fn(stream, patterns, lengths, float(w_del), float(w_ins), float(w_sub))


def window_distances(stream, patterns, lengths, w_del, w_ins, w_sub, *, use_numba=None):
    rows = window_last_rows(stream, patterns, lengths, w_del, w_ins, w_sub, use_numba=use_numba)
    return rows.min(axis=1)


# --------------------------------------------------------------------------
# Cox partial likelihood (Breslow ties, counting-process intervals)
# --------------------------------------------------------------------------


def _cox_loops(X, start, stop, event, times, beta):
    n, p = X.shape
    eta = np.empty(n)
    for i in range(n):
        s = 0.0
        for k in range(p):
            s += X[i, k] * beta[k]
        eta[i] = s
    shift = eta.max() if n > 0 else 0.0
    risk = np.exp(eta - shift)
    loglik = 0.0
    grad = np.zeros(p)
    hess = np.zeros((p, p))
    s1 = np.empty(p)
    s2 = np.empty((p, p))
    sx = np.empty(p)
    for t_idx in range(times.shape[0]):
        t = times[t_idx]
        s0 = 0.0
        for k in range(p):
            s1[k] = 0.0
            sx[k] = 0.0
            for l in range(p):
                s2[k, l] = 0.0
        d = 0.0
        eta_d = 0.0
        for i in range(n):
            if start[i] < t and t <= stop[i]:
                r = risk[i]
                s0 += r
                for k in range(p):
                    s1[k] += r * X[i, k]
                    for l in range(p):
                        s2[k, l] += r * X[i, k] * X[i, l]
                if event[i] != 0 and stop[i] == t:
                    d += 1.0
                    eta_d += eta[i]
                    for k in range(p):
                        sx[k] += X[i, k]
        loglik += eta_d - d * (np.log(s0) + shift)
        for k in range(p):
            grad[k] += sx[k] - d * s1[k] / s0
            for l in range(p):
                hess[k, l] -= d * (s2[k, l] / s0 - s1[k] * s1[l] / (s0 * s0))
    return loglik, grad, hess


_cox_numba = njit(_cox_loops)


def _cox_numpy(X, start, stop, event, times, beta):
    n, p = X.shape
    eta = X @ beta
    shift = eta.max() if n else 0.0
    r_all = np.exp(eta - shift)
    loglik = 0.0
    grad = np.zeros(p)
    hess = np.zeros((p, p))
    for t in times:
        at_risk = (start < t) & (t <= stop)
        r = r_all[at_risk]
        Xr = X[at_risk]
        s0 = r.sum()
        s1 = r @ Xr
        s2 = (Xr * r[:, None]).T @ Xr
        dead = at_risk & (event != 0) & (stop == t)
        d = float(dead.sum())
        loglik += eta[dead].sum() - d * (np.log(s0) + shift)
        grad += X[dead].sum(axis=0) - d * s1 / s0
        hess -= d * (s2 / s0 - np.outer(s1, s1) / s0**2)
    return loglik, grad, hess


def cox_loglik_grad_hess(X, start, stop, event, beta, *, use_numba=None):
    """Breslow log partial likelihood, its gradient and Hessian at ``beta``.

    A record ``i`` is at risk at event time ``t`` when ``start[i] < t <= stop[i]``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    start = np.ascontiguousarray(start, dtype=np.float64)
    stop = np.ascontiguousarray(stop, dtype=np.float64)
    event = np.ascontiguousarray(event, dtype=np.int64)
    beta = np.ascontiguousarray(beta, dtype=np.float64)
    times = np.unique(stop[event != 0])
    if use_numba is None:
        use_numba = USE_NUMBA
    fn = _cox_numba if use_numba else _cox_numpy
    loglik, grad, hess = fn(X, start, stop, event, times, beta)
    return float(loglik), np.asarray(grad), np.asarray(hess)
