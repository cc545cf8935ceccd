"""Compiled shortest-path and curve kernels.

Every kernel here works on plain numpy arrays so it can be jitted with numba.
Edge weights between particles are always produced by :func:`power_weight`,
which keeps the dense and the sparse searches bit-compatible: the same path
yields the same floating point cost whichever kernel found it.
"""

import numpy as np
from numba import njit

INF = np.inf


@njit(cache=True, inline="always")
def power_weight(sq, alpha):
    # sq is a squared Euclidean gap
    if alpha == 2.0:
        return sq
    if alpha == 1.0:
        return np.sqrt(sq)
    return sq ** (0.5 * alpha)


@njit(cache=True)
def _sqdist(points, i, j):
    s = 0.0
    for c in range(points.shape[1]):
        t = points[i, c] - points[j, c]
        s += t * t
    return s


# -- binary heap keyed by (distance, node) ---------------------------------


@njit(cache=True, inline="always")
def _less(hk, hn, a, b):
    return hk[a] < hk[b] or (hk[a] == hk[b] and hn[a] < hn[b])


@njit(cache=True)
def _push(hk, hn, size, key, node):
    i = size
    hk[i] = key
    hn[i] = node
    while i > 0:
        p = (i - 1) >> 1
        if _less(hk, hn, i, p):
            hk[i], hk[p] = hk[p], hk[i]
            hn[i], hn[p] = hn[p], hn[i]
            i = p
        else:
            break
    return size + 1


@njit(cache=True)
def _pop(hk, hn, size):
    key = hk[0]
    node = hn[0]
    size -= 1
    hk[0] = hk[size]
    hn[0] = hn[size]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= size:
            break
        c = left
        if left + 1 < size and _less(hk, hn, left + 1, left):
            c = left + 1
        if _less(hk, hn, c, i):
            hk[i], hk[c] = hk[c], hk[i]
            hn[i], hn[c] = hn[c], hn[i]
            i = c
        else:
            break
    return key, node, size


@njit(cache=True, nogil=True)
def dijkstra_csr(indptr, indices, weights, source, target, limit):
    """Single-source shortest paths on a CSR digraph.

    Stops when ``target`` (if >= 0) is settled or when the smallest tentative
    distance reaches ``limit``. Nodes that were not settled keep ``inf``.
    Predecessors change only on strict improvement.
    """
    n = indptr.shape[0] - 1
    dist = np.full(n, INF)
    pred = np.full(n, -1, dtype=np.int64)
    done = np.zeros(n, dtype=np.bool_)
    cap = indices.shape[0] + 1
    hk = np.empty(cap, dtype=np.float64)
    hn = np.empty(cap, dtype=np.int64)
    tent = np.full(n, INF)
    tent[source] = 0.0
    size = _push(hk, hn, 0, 0.0, source)
    while size > 0:
        d, u, size = _pop(hk, hn, size)
        if done[u] or d > tent[u]:
            continue
        if d >= limit:
            break
        done[u] = True
        dist[u] = d
        if u == target:
            break
        for e in range(indptr[u], indptr[u + 1]):
            v = indices[e]
            if done[v]:
                continue
            nd = d + weights[e]
            if nd < tent[v]:
                tent[v] = nd
                pred[v] = u
                size = _push(hk, hn, size, nd, v)
    return dist, pred


@njit(cache=True, nogil=True)
def dijkstra_dense(points, alpha, source, target, limit):
    """Single-source shortest paths on the complete power-weighted graph.

    Array-based O(n^2) selection; weights are computed on the fly. Ties in
    the selection go to the lowest index, relaxations scan by index.
    """
    n = points.shape[0]
    dist = np.full(n, INF)
    pred = np.full(n, -1, dtype=np.int64)
    tent = np.full(n, INF)
    done = np.zeros(n, dtype=np.bool_)
    tent[source] = 0.0
    for _ in range(n):
        u = -1
        best = INF
        for v in range(n):
            if not done[v] and tent[v] < best:
                best = tent[v]
                u = v
        if u < 0 or best >= limit:
            break
        done[u] = True
        dist[u] = best
        if u == target:
            break
        for v in range(n):
            if done[v]:
                continue
            nd = best + power_weight(_sqdist(points, u, v), alpha)
            if nd < tent[v]:
                tent[v] = nd
                pred[v] = u
    return dist, pred


@njit(cache=True, nogil=True)
def knn_weights(points, nbrs, alpha):
    n, k = nbrs.shape
    w = np.empty((n, k))
    for i in range(n):
        for j in range(k):
            w[i, j] = power_weight(_sqdist(points, i, nbrs[i, j]), alpha)
    return w


@njit(cache=True)
def path_cost(points, path, alpha):
    # accumulated in path order, as the searches do
    c = 0.0
    for j in range(path.shape[0] - 1):
        c += power_weight(_sqdist(points, path[j], path[j + 1]), alpha)
    return c


@njit(cache=True)
def discrete_frechet(P, Q):
    p = P.shape[0]
    q = Q.shape[0]
    ca = np.empty((p, q))
    for i in range(p):
        for j in range(q):
            s = 0.0
            for c in range(P.shape[1]):
                t = P[i, c] - Q[j, c]
                s += t * t
            d = np.sqrt(s)
            if i == 0 and j == 0:
                ca[i, j] = d
            elif i == 0:
                ca[i, j] = max(ca[i, j - 1], d)
            elif j == 0:
                ca[i, j] = max(ca[i - 1, j], d)
            else:
                ca[i, j] = max(min(ca[i - 1, j], ca[i, j - 1], ca[i - 1, j - 1]), d)
    return ca[p - 1, q - 1]
