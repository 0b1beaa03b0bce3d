"""Compiled inner loops for sifting."""

import numba
import numpy as np


@numba.njit(cache=True)
def extrema(x):
    """Interior maxima/minima indices; flat runs count once, at their midpoint."""
    n = x.size
    imax = np.empty(n, np.int64)
    imin = np.empty(n, np.int64)
    nmax = 0
    nmin = 0
    if n < 3:
        return imax[:0], imin[:0]
    # previous run: start index, direction of the step into it
    prev_dir = 0
    run_start = 0
    for i in range(1, n):
        if x[i] == x[i - 1]:
            continue
        d = 1 if x[i] > x[i - 1] else -1
        # run [run_start, i-1] just ended
        if prev_dir == 1 and d == -1:
            imax[nmax] = (run_start + i - 1) // 2
            nmax += 1
        elif prev_dir == -1 and d == 1:
            imin[nmin] = (run_start + i - 1) // 2
            nmin += 1
        prev_dir = d
        run_start = i
    return imax[:nmax], imin[:nmin]


@numba.njit(cache=True)
def zero_crossings(x):
    count = 0
    prev = 0.0
    for v in x:
        if v == 0.0:
            continue
        if prev != 0.0 and (v > 0.0) != (prev > 0.0):
            count += 1
        prev = v
    return count


@numba.njit(cache=True)
def spline_grid(pos, val, n):
    """Natural cubic spline through (pos, val), evaluated at 0..n-1.

    ``pos`` must be strictly increasing with at least three knots.
    """
    k = pos.size
    h = np.empty(k - 1)
    s = np.empty(k - 1)
    for j in range(k - 1):
        h[j] = pos[j + 1] - pos[j]
        s[j] = (val[j + 1] - val[j]) / h[j]
    # Thomas algorithm for the interior second derivatives
    m = np.zeros(k)
    nk = k - 2
    cp = np.empty(nk)
    dp = np.empty(nk)
    for j in range(nk):
        a = h[j]
        b = 2.0 * (h[j] + h[j + 1])
        c = h[j + 1]
        d = 6.0 * (s[j + 1] - s[j])
        if j > 0:
            den = b - a * cp[j - 1]
            cp[j] = c / den
            dp[j] = (d - a * dp[j - 1]) / den
        else:
            cp[j] = c / b
            dp[j] = d / b
    for j in range(nk - 1, -1, -1):
        m[j + 1] = dp[j] - (cp[j] * m[j + 2] if j < nk - 1 else 0.0)

    out = np.empty(n)
    j = 0
    for t in range(n):
        while j < k - 2 and pos[j + 1] <= t:
            j += 1
        b = t - pos[j]
        c1 = s[j] - h[j] * (2.0 * m[j] + m[j + 1]) / 6.0
        c2 = 0.5 * m[j]
        c3 = (m[j + 1] - m[j]) / (6.0 * h[j])
        out[t] = ((c3 * b + c2) * b + c1) * b + val[j]
    return out
