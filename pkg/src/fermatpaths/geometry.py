"""Point clouds, exact nearest-neighbour queries and the curve metric.

Neighbour orderings are total: by Euclidean distance, then lexicographically
by coordinates, then by particle index. The kd-tree only proposes candidates;
the final ordering is always decided on recomputed distances, so results are
identical to a brute-force scan.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from ._kernels import discrete_frechet, path_cost

BRUTE_FORCE_DIM = 16


class GeometryError(ValueError):
    """Invalid geometric input (empty cloud, dimension mismatch, bad k)."""


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Immutable set of particles in R^D. Row ``i`` is particle ``i``."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[1] < 1:
            raise GeometryError("points must form an (n, D) array with D >= 1")
        if not np.all(np.isfinite(pts)):
            raise GeometryError("points must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def ambient_dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.shape[0] != self.ambient_dim:
            raise GeometryError(
                f"query has dimension {x.shape[0]}, cloud has {self.ambient_dim}")
        return x

    def scaled(self, c: float) -> "PointCloud":
        return PointCloud(self.points * c)


def load_cloud_csv(path) -> PointCloud:
    """Read a headerless CSV, one particle per row; D comes from the first row."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if rows and len(row) != len(rows[0]):
                raise GeometryError(
                    f"{path}: row {lineno} has {len(row)} columns, expected {len(rows[0])}")
            rows.append([float(v) for v in row])
    if not rows:
        raise GeometryError(f"{path}: no points")
    return PointCloud(np.array(rows))


def save_cloud_csv(cloud: PointCloud, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for p in cloud.points:
            w.writerow([repr(float(v)) for v in p])


def _order(points, cand, d):
    """Sort candidate rows by (distance, coordinates..., index)."""
    keys = [cand]
    for c in range(points.shape[1] - 1, -1, -1):
        keys.append(points[cand, c])
    keys.append(d)
    return np.lexsort(keys, axis=-1)


class SpatialIndex:
    """Exact k-nearest-neighbour index over a :class:`PointCloud`.

    Candidates come from a kd-tree (brute force above 16 dimensions) and are
    re-ranked on exactly recomputed distances with the total tie-break order.
    Read-only after construction.
    """

    def __init__(self, cloud: PointCloud):
        if len(cloud) == 0:
            raise GeometryError("cannot index an empty cloud")
        self.cloud = cloud
        self.points = cloud.points
        self._tree = cKDTree(self.points) if cloud.ambient_dim <= BRUTE_FORCE_DIM else None

    def __len__(self):
        return self.points.shape[0]

    def _dist(self, x, idx):
        diff = self.points[idx] - x[..., None, :] if idx.ndim == 2 else self.points[idx] - x
        return np.sqrt(np.einsum("...j,...j->...", diff, diff))

    def _ranked(self, x, m, exclude):
        """Indices of the ``m`` first particles for query ``x`` in the total order."""
        n = len(self)
        want = min(n, m + (1 if exclude is not None else 0))
        if self._tree is None or want == n:
            cand = np.arange(n)
        else:
            extra = want + 4
            while True:
                extra = min(extra, n)
                _, cand = self._tree.query(x, k=extra)
                cand = np.atleast_1d(cand)
                if extra == n:
                    break
                d = self._dist(x, cand)
                r = np.sort(d)[want - 1]
                # complete if nothing outside the candidates can tie with rank `want`
                if self._tree.query_ball_point(x, r * (1 + 1e-9) + 1e-300,
                                               return_length=True) <= extra:
                    break
                extra *= 2
        if exclude is not None:
            cand = cand[cand != exclude]
        d = self._dist(x, cand)
        o = _order(self.points, cand, d)
        return cand[o][:m]

    def nearest(self, x) -> int:
        x = self.cloud.check_point(x)
        return int(self._ranked(x, 1, None)[0])

    def knn(self, i: int, k: int) -> np.ndarray:
        n = len(self)
        if not 1 <= k <= n - 1:
            raise GeometryError(f"k must satisfy 1 <= k <= n-1 = {n - 1}, got {k}")
        return self._ranked(self.points[i], k, int(i))

    def knn_all(self, k: int) -> np.ndarray:
        """Neighbour table of shape (n, k); row i excludes particle i."""
        n = len(self)
        if not 1 <= k <= n - 1:
            raise GeometryError(f"k must satisfy 1 <= k <= n-1 = {n - 1}, got {k}")
        if self._tree is None or k + 1 >= n:
            return np.stack([self.knn(i, k) for i in range(n)])
        m = min(n, k + 3)
        _, cand = self._tree.query(self.points, k=m)
        d = self._dist(self.points, cand)
        own = cand == np.arange(n)[:, None]
        d_sorted = np.sort(np.where(own, np.inf, d), axis=1)
        kth = d_sorted[:, k - 1]
        # rows whose k-th distance might tie with a particle outside the candidates
        outer = d.max(axis=1)
        suspect = (outer <= kth * (1 + 1e-9) + 1e-300) | ~own.any(axis=1)
        cand = np.where(own, n, cand)
        d = np.where(own, np.inf, d)
        padded = np.vstack([self.points, np.full((1, self.points.shape[1]), np.inf)])
        o = _order(padded, cand, d)
        out = np.take_along_axis(cand, o, axis=1)[:, :k]
        for i in np.flatnonzero(suspect):
            out[i] = self.knn(i, k)
        return out


def build_index(cloud: PointCloud) -> SpatialIndex:
    return SpatialIndex(cloud)


def voronoi_anchor(cloud: PointCloud, x, index: SpatialIndex | None = None) -> int:
    """Index of the particle closest to ``x`` (ties: coordinates, then index)."""
    index = index if index is not None else SpatialIndex(cloud)
    return index.nearest(x)


def knn(cloud: PointCloud, q_index: int, k: int, index: SpatialIndex | None = None) -> np.ndarray:
    index = index if index is not None else SpatialIndex(cloud)
    return index.knn(q_index, k)


@dataclass(frozen=True)
class FermatPath:
    """Ordered particle indices of a path with its power cost and arc length."""

    particle_indices: tuple
    cost: float
    arc_length: float
    alpha: float = field(default=1.0, compare=False)

    @classmethod
    def from_indices(cls, cloud: PointCloud, indices, alpha: float) -> "FermatPath":
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size == 0:
            raise GeometryError("a path needs at least one particle")
        if np.any(idx[1:] == idx[:-1]):
            raise GeometryError("consecutive repeated particle in path")
        cost = float(path_cost(cloud.points, idx, float(alpha)))
        arc = float(path_cost(cloud.points, idx, 1.0))
        return cls(tuple(int(i) for i in idx), cost, arc, float(alpha))

    def __len__(self):
        return len(self.particle_indices)

    def polyline(self, cloud: PointCloud) -> np.ndarray:
        return cloud.points[list(self.particle_indices)]


def _walk(poly, m):
    seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    t = s[-1] * (np.arange(m) / (m - 1))
    return np.column_stack([np.interp(t, s, poly[:, c]) for c in range(poly.shape[1])])


def resample_polyline(poly, m: int) -> np.ndarray:
    """``m`` points spaced uniformly in arc length along ``poly``.

    The first half is measured from the start, the second half from the end,
    so resampling a reversed polyline gives exactly the reversed samples.
    """
    poly = np.asarray(poly, dtype=np.float64)
    if poly.ndim == 1:
        poly = poly.reshape(-1, 1)
    if poly.shape[0] == 0:
        raise GeometryError("empty polyline")
    if poly.shape[0] == 1:
        return np.repeat(poly, m, axis=0)
    fwd = _walk(poly, m)
    bwd = _walk(poly[::-1], m)[::-1]
    out = np.empty_like(fwd)
    half = m // 2
    out[:half] = fwd[:half]
    out[m - half:] = bwd[m - half:]
    if m % 2:
        out[half] = 0.5 * (fwd[half] + bwd[half])
    return out


def curve_distance(gamma1, gamma2, resolution: int = 256) -> float:
    """Distance between two polygonal curves, minimised over orientation.

    Discrete Frechet distance of arc-length-uniform resamplings, taking the
    better of the two relative orientations. Symmetric by construction.
    """
    if resolution < 2:
        raise GeometryError("resolution must be >= 2")
    a = resample_polyline(gamma1, resolution)
    b = resample_polyline(gamma2, resolution)
    if a.shape[1] != b.shape[1]:
        raise GeometryError("polylines live in different dimensions")
    # min/max selections over the same gap values: exact under swapping a, b
    forward = discrete_frechet(a, b)
    backward = discrete_frechet(a, b[::-1].copy())
    return float(min(forward, backward))
