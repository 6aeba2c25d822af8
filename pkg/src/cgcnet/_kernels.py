"""
Hot numeric kernels.

Every kernel exists twice: a vectorised numpy version (``*_numpy``) and a
loop version compiled with ``numba.njit`` (``*_numba``). The public name is
bound to the numba version unless the environment variable
``CGCNET_DISABLE_NUMBA`` is set to a non-empty value other than ``0``, or
numba cannot be imported.
"""

from __future__ import annotations

import itertools
import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

_flag = os.environ.get("CGCNET_DISABLE_NUMBA", "")
USE_NUMBA = numba is not None and _flag in ("", "0")


def _njit(fn):
    if numba is None:  # pragma: no cover
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# causal order search ---------------------------------------------------------

def best_order_numpy(b2: np.ndarray) -> np.ndarray:
    """
    Exhaustive search for the permutation minimising the squared mass above
    the diagonal of ``b2[p][:, p]`` (``b2`` holds squared coefficients).

    Ties resolve to the lexicographically first permutation.
    """
    k = b2.shape[0]
    perms = np.array(list(itertools.permutations(range(k))), dtype=np.int64)
    cost = np.zeros(len(perms))
    for i in range(k):
        for j in range(i + 1, k):
            cost += b2[perms[:, i], perms[:, j]]
    return perms[int(np.argmin(cost))].copy()


@_njit
def best_order_numba(b2):
    k = b2.shape[0]
    perm = np.arange(k)
    best = perm.copy()
    best_cost = np.inf
    while True:
        cost = 0.0
        for i in range(k):
            for j in range(i + 1, k):
                cost += b2[perm[i], perm[j]]
        if cost < best_cost:
            best_cost = cost
            best[:] = perm
        # next lexicographic permutation
        i = k - 2
        while i >= 0 and perm[i] >= perm[i + 1]:
            i -= 1
        if i < 0:
            break
        j = k - 1
        while perm[j] <= perm[i]:
            j -= 1
        perm[i], perm[j] = perm[j], perm[i]
        perm[i + 1:] = perm[i + 1:][::-1].copy()
    return best


# FastICA one-unit fixed-point update ----------------------------------------

def ica_update_numpy(w: np.ndarray, z: np.ndarray) -> np.ndarray:
    """One tanh-contrast fixed-point step for a single unmixing row.

    ``z`` is whitened data of shape (k, n).
    """
    g = np.tanh(w @ z)
    g_prime = 1.0 - g * g
    return (z @ g) / z.shape[1] - g_prime.mean() * w


@_njit
def ica_update_numba(w, z):
    k, n = z.shape
    u = np.zeros(n)
    for r in range(k):
        for s in range(n):
            u[s] += w[r] * z[r, s]
    gp_mean = 0.0
    for s in range(n):
        u[s] = math.tanh(u[s])
        gp_mean += 1.0 - u[s] * u[s]
    gp_mean /= n
    out = np.empty(k)
    for r in range(k):
        acc = 0.0
        for s in range(n):
            acc += z[r, s] * u[s]
        out[r] = acc / n - gp_mean * w[r]
    return out


# covariate balance term -------------------------------------------------------

def balance_numpy(x, t, g, lo=0.01, hi=0.99):
    """
    Squared gap between inverse-propensity weighted covariate means of the
    treated and control arms, with its gradient w.r.t. the raw propensities.

    Returns ``(value, grad_g)``. Propensities outside ``[lo, hi]`` are
    clipped and receive zero gradient.
    """
    gc = np.clip(g, lo, hi)
    w1 = t / gc
    w0 = (1.0 - t) / (1.0 - gc)
    s1, s0 = w1.sum(), w0.sum()
    a = w1 @ x / s1
    b = w0 @ x / s0
    d = a - b
    value = float(d @ d)
    dl_dw1 = 2.0 * ((x - a) @ d) / s1
    dl_dw0 = -2.0 * ((x - b) @ d) / s0
    grad = dl_dw1 * (-t / gc**2) + dl_dw0 * ((1.0 - t) / (1.0 - gc) ** 2)
    grad = np.where((g >= lo) & (g <= hi), grad, 0.0)
    return value, grad


@_njit
def _balance_numba(x, t, g, lo, hi):
    n, d = x.shape
    gc = np.empty(n)
    w1 = np.empty(n)
    w0 = np.empty(n)
    s1 = 0.0
    s0 = 0.0
    for i in range(n):
        gc[i] = min(max(g[i], lo), hi)
        w1[i] = t[i] / gc[i]
        w0[i] = (1.0 - t[i]) / (1.0 - gc[i])
        s1 += w1[i]
        s0 += w0[i]
    a = np.zeros(d)
    b = np.zeros(d)
    for i in range(n):
        for j in range(d):
            a[j] += w1[i] * x[i, j]
            b[j] += w0[i] * x[i, j]
    value = 0.0
    diff = np.empty(d)
    for j in range(d):
        a[j] /= s1
        b[j] /= s0
        diff[j] = a[j] - b[j]
        value += diff[j] * diff[j]
    grad = np.zeros(n)
    for i in range(n):
        if g[i] < lo or g[i] > hi:
            continue
        p1 = 0.0
        p0 = 0.0
        for j in range(d):
            p1 += (x[i, j] - a[j]) * diff[j]
            p0 += (x[i, j] - b[j]) * diff[j]
        dl_dw1 = 2.0 * p1 / s1
        dl_dw0 = -2.0 * p0 / s0
        grad[i] = dl_dw1 * (-t[i] / (gc[i] * gc[i])) + dl_dw0 * (
            (1.0 - t[i]) / ((1.0 - gc[i]) * (1.0 - gc[i]))
        )
    return value, grad


def balance_numba(x, t, g, lo=0.01, hi=0.99):
    value, grad = _balance_numba(
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(t, dtype=np.float64),
        np.ascontiguousarray(g, dtype=np.float64),
        float(lo),
        float(hi),
    )
    return float(value), grad


if USE_NUMBA:
    best_order = best_order_numba
    ica_update = ica_update_numba
    balance = balance_numba
else:
    best_order = best_order_numpy
    ica_update = ica_update_numpy
    balance = balance_numpy
