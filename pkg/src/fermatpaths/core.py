"""Sample Fermat distances on point clouds.

The exact distance runs Dijkstra on the complete graph with weights
``|q_i - q_j| ** alpha``; the restricted distance only follows directed
k-nearest-neighbour edges. Query points that are not particles are replaced
by their Voronoi anchors.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._kernels import dijkstra_csr, dijkstra_dense, knn_weights
from .geometry import FermatPath, GeometryError, PointCloud, SpatialIndex

MAX_ALPHA = 64.0


class FermatError(ValueError):
    pass


class Unreachable(RuntimeError):
    """The target particle cannot be reached along the allowed edges."""

    def __init__(self, source, target):
        super().__init__(f"particle {target} is unreachable from particle {source}")
        self.source = source
        self.target = target


def check_alpha(alpha) -> float:
    alpha = float(alpha)
    if not 1.0 <= alpha <= MAX_ALPHA:
        raise FermatError(f"alpha must lie in [1, {MAX_ALPHA:g}], got {alpha}")
    return alpha


def beta_for(alpha: float, dim: int) -> float:
    """Scaling exponent (alpha - 1) / d for intrinsic dimension ``d``."""
    return (check_alpha(alpha) - 1.0) / dim


@dataclass(frozen=True, eq=False)
class KnnGraph:
    """Directed kNN graph; row ``i`` lists the neighbours of particle ``i`` nearest first.

    With ``undirected=True`` the CSR view also contains every reversed edge
    (union symmetrisation); ``neighbors``/``weights`` keep the directed table.
    """

    neighbors: np.ndarray
    weights: np.ndarray
    alpha: float
    undirected: bool = False

    @property
    def n(self) -> int:
        return self.neighbors.shape[0]

    @property
    def k(self) -> int:
        return self.neighbors.shape[1]

    def csr(self):
        cached = self.__dict__.get("_csr")
        if cached is not None:
            return cached
        n, k = self.neighbors.shape
        src = np.repeat(np.arange(n, dtype=np.int64), k)
        dst = self.neighbors.reshape(-1).astype(np.int64)
        w = self.weights.reshape(-1)
        if self.undirected:
            src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
            w = np.concatenate([w, w])
            key = src * n + dst
            _, first = np.unique(key, return_index=True)
            src, dst, w = src[first], dst[first], w[first]
        # stable: keeps the nearest-first order within each row
        order = np.argsort(src, kind="stable")
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
        out = (indptr, np.ascontiguousarray(dst[order]), np.ascontiguousarray(w[order]))
        object.__setattr__(self, "_csr", out)
        return out

    def restrict(self, k: int) -> "KnnGraph":
        """The graph keeping only the ``k`` nearest neighbours of each particle."""
        if not 1 <= k <= self.k:
            raise FermatError(f"cannot restrict a {self.k}-NN graph to k={k}")
        return KnnGraph(self.neighbors[:, :k], self.weights[:, :k], self.alpha, self.undirected)


def build_knn_graph(cloud: PointCloud, k: int, alpha: float, undirected: bool = False,
                    index: SpatialIndex | None = None) -> KnnGraph:
    alpha = check_alpha(alpha)
    n = len(cloud)
    k = min(int(k), n - 1)
    if k < 1:
        raise FermatError("a kNN graph needs at least two particles")
    index = index if index is not None else SpatialIndex(cloud)
    nbrs = index.knn_all(k).astype(np.int64)
    w = knn_weights(cloud.points, nbrs, alpha)
    if not np.all(np.isfinite(w)):
        raise FermatError("non-finite edge weight; alpha too large for these coordinates")
    nbrs.setflags(write=False)
    w.setflags(write=False)
    return KnnGraph(nbrs, w, alpha, undirected)


@dataclass(frozen=True)
class DistanceResult:
    distance: float
    path: FermatPath
    scaled: float | None = None

    def with_scale(self, n: float, beta: float) -> "DistanceResult":
        return DistanceResult(self.distance, self.path, float(n) ** beta * self.distance)


@dataclass(frozen=True)
class LandmarkBounds:
    lower: float
    upper: float


class PathStats(NamedTuple):
    arc_length: float
    hop_count: int
    max_gap: float


def _trace(pred, source, target):
    path = [target]
    while path[-1] != source:
        path.append(int(pred[path[-1]]))
    return path[::-1]


def _anchors(cloud, x, y, index):
    index = index if index is not None else SpatialIndex(cloud)
    x = cloud.check_point(x)
    y = cloud.check_point(y)
    return index.nearest(x), index.nearest(y)


def exact_from(cloud: PointCloud, alpha: float, source: int, target: int = -1,
               limit: float = np.inf):
    """Distances and predecessors from particle ``source`` on the complete graph."""
    return dijkstra_dense(cloud.points, check_alpha(alpha), int(source), int(target), float(limit))


def restricted_from(graph: KnnGraph, source: int, target: int = -1, limit: float = np.inf):
    indptr, indices, weights = graph.csr()
    return dijkstra_csr(indptr, indices, weights, int(source), int(target), float(limit))


def exact_distance(cloud: PointCloud, alpha: float, x, y,
                   index: SpatialIndex | None = None) -> DistanceResult:
    """Sample Fermat distance between query points ``x`` and ``y``.

    Both points are anchored to their nearest particles; coinciding anchors
    give distance 0 and a one-particle path.
    """
    alpha = check_alpha(alpha)
    if len(cloud) == 0:
        raise GeometryError("empty cloud")
    a, b = _anchors(cloud, x, y, index)
    if a == b:
        return DistanceResult(0.0, FermatPath.from_indices(cloud, [a], alpha))
    dist, pred = exact_from(cloud, alpha, a, b)
    path = FermatPath.from_indices(cloud, _trace(pred, a, b), alpha)
    return DistanceResult(float(dist[b]), path)


def restricted_distance(graph: KnnGraph, cloud: PointCloud, alpha: float, x, y,
                        index: SpatialIndex | None = None) -> DistanceResult:
    """Shortest path using only kNN edges; raises :class:`Unreachable` when cut off."""
    alpha = check_alpha(alpha)
    if graph.alpha != alpha:
        raise FermatError(f"graph was built for alpha={graph.alpha}, queried with {alpha}")
    if graph.n != len(cloud):
        raise FermatError("graph and cloud sizes differ")
    a, b = _anchors(cloud, x, y, index)
    if a == b:
        return DistanceResult(0.0, FermatPath.from_indices(cloud, [a], alpha))
    dist, pred = restricted_from(graph, a, b)
    if not np.isfinite(dist[b]):
        raise Unreachable(a, b)
    path = FermatPath.from_indices(cloud, _trace(pred, a, b), alpha)
    return DistanceResult(float(dist[b]), path)


def _symmetrize(D, policy):
    if policy == "none":
        return D
    if policy == "min":
        return np.minimum(D, D.T)
    if policy == "max":
        return np.maximum(D, D.T)
    raise FermatError(f"unknown symmetrization policy {policy!r}")


def _rows(fn, sources, workers):
    if workers is None or workers <= 1 or len(sources) < 2:
        return [fn(s) for s in sources]
    # kernels run without the GIL; map() keeps row order independent of scheduling
    with ThreadPoolExecutor(workers) as ex:
        return list(ex.map(fn, sources))


def all_pairs_restricted(graph: KnnGraph, cloud: PointCloud, alpha: float,
                         symmetrize: str = "none", workers: int | None = None) -> np.ndarray:
    """n x n restricted distances, ``inf`` where unreachable."""
    alpha = check_alpha(alpha)
    if graph.alpha != alpha or graph.n != len(cloud):
        raise FermatError("graph does not match cloud/alpha")
    rows = _rows(lambda s: restricted_from(graph, s)[0], range(graph.n), workers)
    return _symmetrize(np.vstack(rows), symmetrize)


def distances_from_sources(cloud: PointCloud, alpha: float, sources,
                           graph: KnnGraph | None = None) -> np.ndarray:
    """Matrix of shape (n, len(sources)): column j holds distances from ``sources[j]``.

    Uses the exact complete graph unless a kNN ``graph`` is given (which
    should then be undirected so the result is a metric).
    """
    alpha = check_alpha(alpha)
    cols = []
    for s in sources:
        d = (restricted_from(graph, s) if graph is not None else exact_from(cloud, alpha, s))[0]
        cols.append(d)
    return np.column_stack(cols) if cols else np.empty((len(cloud), 0))


def landmark_bounds(dist_to_landmarks, i: int, j: int) -> LandmarkBounds:
    """Triangle-inequality bounds on D(i, j) from distances to landmarks."""
    L = np.asarray(dist_to_landmarks, dtype=np.float64)
    if L.ndim != 2 or L.shape[1] == 0:
        raise FermatError("at least one landmark is required")
    di, dj = L[i], L[j]
    lower = float(np.max(np.abs(di - dj)))
    upper = float(np.min(di + dj))
    # both bounds can be tight at once; keep rounding from inverting them
    return LandmarkBounds(min(lower, upper), upper)


def fermat_ball(cloud: PointCloud, alpha: float, x, t: float,
                index: SpatialIndex | None = None, graph: KnnGraph | None = None) -> np.ndarray:
    """Sorted indices of particles at distance ``< t`` from the anchor of ``x``."""
    if not t > 0:
        raise FermatError("ball radius t must be positive")
    alpha = check_alpha(alpha)
    index = index if index is not None else SpatialIndex(cloud)
    a = index.nearest(cloud.check_point(x))
    if graph is not None:
        dist, _ = restricted_from(graph, a, limit=t)
    else:
        dist, _ = exact_from(cloud, alpha, a, limit=t)
    return np.flatnonzero(dist < t)


def path_statistics(path: FermatPath, cloud: PointCloud) -> PathStats:
    poly = path.polyline(cloud)
    if len(poly) < 2:
        return PathStats(0.0, 0, 0.0)
    gaps = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    return PathStats(float(gaps.sum()), len(poly) - 1, float(gaps.max()))
