"""Independent reference implementations used as test oracles.

None of these call into the package's shortest-path, kNN or sampling code.
"""

import math

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.sparse.csgraph import dijkstra as cs_dijkstra
from scipy.stats import norm


def complete_weights(points, alpha):
    P = np.asarray(points, dtype=np.float64)
    diff = P[:, None, :] - P[None, :, :]
    return np.sqrt((diff ** 2).sum(-1)) ** alpha


def floyd_warshall(W):
    D = np.array(W, dtype=np.float64, copy=True)
    np.fill_diagonal(D, 0.0)
    for k in range(D.shape[0]):
        D = np.minimum(D, D[:, k, None] + D[None, k, :])
    return D


def fermat_fw(points, alpha):
    return floyd_warshall(complete_weights(points, alpha))


def brute_nearest(points, x):
    P = np.asarray(points, dtype=np.float64)
    d = np.sqrt(((P - x) ** 2).sum(1))
    keys = [d] + [P[:, c] for c in range(P.shape[1])]
    order = sorted(range(len(P)), key=lambda i: tuple(float(k[i]) for k in keys) + (i,))
    return order[0]


def brute_knn(points, i, k):
    P = np.asarray(points, dtype=np.float64)
    d = np.sqrt(((P - P[i]) ** 2).sum(1))
    cand = [j for j in range(len(P)) if j != i]
    cand.sort(key=lambda j: (float(d[j]),) + tuple(float(v) for v in P[j]) + (j,))
    return cand[:k]


def knn_csgraph_distances(points, neighbors, alpha, sources):
    """Directed kNN shortest paths via scipy.sparse.csgraph."""
    from scipy.sparse import csr_matrix

    P = np.asarray(points, dtype=np.float64)
    n, k = neighbors.shape
    rows = np.repeat(np.arange(n), k)
    cols = neighbors.reshape(-1)
    w = np.sqrt(((P[rows] - P[cols]) ** 2).sum(1)) ** alpha
    # csgraph treats explicit zeros as missing edges; duplicates are not expected here
    G = csr_matrix((w, (rows, cols)), shape=(n, n))
    return cs_dijkstra(G, directed=True, indices=sources)


def snell_two_media(x, y, a, b, beta, split=0.5, axis=1):
    """Cheapest one-crossing path between media a (below split) and b (above).

    Brute force over the crossing coordinate: golden-section/Brent on the
    convex 1-D objective, refined by a dense scan.
    """
    x, y = np.asarray(x, float), np.asarray(y, float)
    other = 1 - axis
    wa, wb = a ** -beta, b ** -beta
    if (x[axis] - split) * (y[axis] - split) > 0:
        raise ValueError("points must lie in different media")
    lo_pt, hi_pt = (x, y) if x[axis] < split else (y, x)

    def cost(t):
        c = np.empty(2)
        c[axis] = split
        c[other] = t
        return wa * np.linalg.norm(c - lo_pt) + wb * np.linalg.norm(hi_pt - c)

    lo, hi = sorted([x[other], y[other]])
    grid = np.linspace(lo - 1, hi + 1, 20001)
    vals = np.array([cost(t) for t in grid])
    t0 = grid[int(np.argmin(vals))]
    res = minimize_scalar(cost, bounds=(t0 - 1e-3, t0 + 1e-3), method="bounded",
                          options={"xatol": 1e-12})
    return float(min(res.fun, vals.min()))


def mixture_cdf(t, lower=-5.0, upper=15.0, means=(0.0, 10.0), variances=(1.0, 2.0),
                weights=(0.5, 0.5)):
    def raw(s):
        return sum(w * norm.cdf(s, m, math.sqrt(v)) for w, m, v in zip(weights, means, variances))

    return (raw(np.asarray(t)) - raw(lower)) / (raw(upper) - raw(lower))


def polyline_min_distance(a, b):
    """Hausdorff-style lower bound helper: max over a of distance to the vertex set of b."""
    A, B = np.asarray(a), np.asarray(b)
    return float(np.sqrt(((A[:, None] - B[None]) ** 2).sum(-1)).min(1).max())
