"""Hot numeric kernels.

Each kernel exists in two interchangeable implementations: a numba
``@njit`` version and a pure numpy fallback.  The active backend is
chosen at import time; set ``QGAUSS_NUMBA=0`` to force the numpy path
(useful on machines without a working compiler toolchain, and for the
parity checks in the test suite).  ``benchmarks/bench_kernels.py``
times the two side by side.

All kernels are deterministic and single-threaded; callers own any
parallel orchestration so that results never depend on thread count.
"""

from __future__ import annotations

import os

import numpy as np

_WANT_NUMBA = os.environ.get("QGAUSS_NUMBA", "1") != "0"

try:  # pragma: no cover - exercised implicitly by backend selection
    if not _WANT_NUMBA:
        raise ImportError("numba disabled via QGAUSS_NUMBA=0")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    njit = None
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"


# -- numpy fallbacks --------------------------------------------------------

def sup_norms_np(block):
    """Row-wise max-abs of a 2-d array."""
    if block.shape[1] == 0:
        return np.zeros(block.shape[0])
    return np.max(np.abs(block), axis=1)


def lp_norms_np(block, weights, p):
    """Row-wise weighted l^p norm: (sum_j w_j |x_j|^p)^(1/p)."""
    a = np.abs(block)
    if p == 1.0:
        s = a @ weights
    elif p == 2.0:
        s = (a * a) @ weights
    else:
        s = (a ** p) @ weights
    return s ** (1.0 / p)


def isotonic_nondecreasing_np(y, w):
    """Weighted least-squares projection onto nondecreasing sequences.

    Classic pool-adjacent-violators; returns the fitted values.
    """
    n = len(y)
    level = np.asarray(y, dtype=np.float64).copy()
    weight = np.asarray(w, dtype=np.float64).copy()
    count = np.ones(n, dtype=np.int64)
    m = 0  # number of pooled blocks kept so far
    for i in range(n):
        level[m] = y[i]
        weight[m] = w[i]
        count[m] = 1
        m += 1
        while m > 1 and level[m - 2] > level[m - 1]:
            tot = weight[m - 2] + weight[m - 1]
            level[m - 2] = (weight[m - 2] * level[m - 2]
                            + weight[m - 1] * level[m - 1]) / tot
            weight[m - 2] = tot
            count[m - 2] += count[m - 1]
            m -= 1
    out = np.empty(n)
    pos = 0
    for j in range(m):
        out[pos:pos + count[j]] = level[j]
        pos += count[j]
    return out


def greedy_net_sup_np(paths, delta):
    """First-fit greedy delta-net in the sup metric.

    Scans rows in order; a row joins the earliest existing net point
    within ``delta``, else becomes a new net point.  Returns
    ``(assign, net_indices, dist)`` where ``assign[i]`` indexes into
    ``net_indices`` and ``dist[i]`` is the sup distance to the chosen
    net point.
    """
    k = paths.shape[0]
    assign = np.full(k, -1, dtype=np.int64)
    dist = np.zeros(k)
    net = []
    remaining = np.arange(k)
    while remaining.size:
        c = remaining[0]
        net.append(c)
        d = np.max(np.abs(paths[remaining] - paths[c]), axis=1)
        near = d <= delta
        idx = remaining[near]
        assign[idx] = len(net) - 1
        dist[idx] = d[near]
        remaining = remaining[~near]
    return assign, np.asarray(net, dtype=np.int64), dist


def greedy_net_lp_np(paths, weights, p, delta):
    """First-fit greedy delta-net in a weighted l^p metric."""
    k = paths.shape[0]
    assign = np.full(k, -1, dtype=np.int64)
    dist = np.zeros(k)
    net = []
    remaining = np.arange(k)
    while remaining.size:
        c = remaining[0]
        net.append(c)
        d = lp_norms_np(paths[remaining] - paths[c], weights, p)
        near = d <= delta
        idx = remaining[near]
        assign[idx] = len(net) - 1
        dist[idx] = d[near]
        remaining = remaining[~near]
    return assign, np.asarray(net, dtype=np.int64), dist


# -- numba versions ---------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def sup_norms_nb(block):  # pragma: no cover - compiled
        k, g = block.shape
        out = np.zeros(k)
        for i in range(k):
            m = 0.0
            for j in range(g):
                v = abs(block[i, j])
                if v > m:
                    m = v
            out[i] = m
        return out

    @njit(cache=True)
    def lp_norms_nb(block, weights, p):  # pragma: no cover - compiled
        k, g = block.shape
        out = np.empty(k)
        for i in range(k):
            s = 0.0
            if p == 1.0:
                for j in range(g):
                    s += weights[j] * abs(block[i, j])
            elif p == 2.0:
                for j in range(g):
                    s += weights[j] * block[i, j] * block[i, j]
            else:
                for j in range(g):
                    s += weights[j] * abs(block[i, j]) ** p
            out[i] = s ** (1.0 / p)
        return out

    @njit(cache=True)
    def isotonic_nondecreasing_nb(y, w):  # pragma: no cover - compiled
        n = len(y)
        level = np.empty(n)
        weight = np.empty(n)
        count = np.empty(n, dtype=np.int64)
        m = 0
        for i in range(n):
            level[m] = y[i]
            weight[m] = w[i]
            count[m] = 1
            m += 1
            while m > 1 and level[m - 2] > level[m - 1]:
                tot = weight[m - 2] + weight[m - 1]
                level[m - 2] = (weight[m - 2] * level[m - 2]
                                + weight[m - 1] * level[m - 1]) / tot
                weight[m - 2] = tot
                count[m - 2] += count[m - 1]
                m -= 1
        out = np.empty(n)
        pos = 0
        for j in range(m):
            for _ in range(count[j]):
                out[pos] = level[j]
                pos += 1
        return out

    @njit(cache=True)
    def greedy_net_sup_nb(paths, delta):  # pragma: no cover - compiled
        k, g = paths.shape
        assign = np.full(k, -1, dtype=np.int64)
        dist = np.zeros(k)
        net = np.empty(k, dtype=np.int64)
        nn = 0
        for i in range(k):
            hit = -1
            hd = 0.0
            for j in range(nn):
                q = net[j]
                m = 0.0
                ok = True
                for t in range(g):
                    v = abs(paths[i, t] - paths[q, t])
                    if v > m:
                        m = v
                        if m > delta:
                            ok = False
                            break
                if ok:
                    hit = j
                    hd = m
                    break
            if hit >= 0:
                assign[i] = hit
                dist[i] = hd
            else:
                net[nn] = i
                assign[i] = nn
                dist[i] = 0.0
                nn += 1
        return assign, net[:nn].copy(), dist

    @njit(cache=True)
    def greedy_net_lp_nb(paths, weights, p, delta):  # pragma: no cover
        k, g = paths.shape
        assign = np.full(k, -1, dtype=np.int64)
        dist = np.zeros(k)
        net = np.empty(k, dtype=np.int64)
        nn = 0
        cap = delta ** p
        for i in range(k):
            hit = -1
            hd = 0.0
            for j in range(nn):
                q = net[j]
                s = 0.0
                ok = True
                for t in range(g):
                    v = abs(paths[i, t] - paths[q, t])
                    if p == 2.0:
                        s += weights[t] * v * v
                    elif p == 1.0:
                        s += weights[t] * v
                    else:
                        s += weights[t] * v ** p
                    if s > cap:
                        ok = False
                        break
                if ok:
                    hit = j
                    hd = s ** (1.0 / p)
                    break
            if hit >= 0:
                assign[i] = hit
                dist[i] = hd
            else:
                net[nn] = i
                assign[i] = nn
                dist[i] = 0.0
                nn += 1
        return assign, net[:nn].copy(), dist

    sup_norms = sup_norms_nb
    lp_norms = lp_norms_nb
    isotonic_nondecreasing = isotonic_nondecreasing_nb
    greedy_net_sup = greedy_net_sup_nb
    greedy_net_lp = greedy_net_lp_nb
else:  # pragma: no cover - depends on environment
    sup_norms = sup_norms_np
    lp_norms = lp_norms_np
    isotonic_nondecreasing = isotonic_nondecreasing_np
    greedy_net_sup = greedy_net_sup_np
    greedy_net_lp = greedy_net_lp_np
