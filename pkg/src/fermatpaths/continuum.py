"""Lattice oracle for the macroscopic Fermat distance.

The domain's bounding box is covered by a regular grid of spacing ``h``; every
pair of in-domain nodes whose integer offset has Chebyshev norm at most ``r``
is joined when the segment between them stays in the domain. The edge weight
is a trapezoidal estimate of the line integral of ``f ** -beta`` along the
segment, and distances are shortest paths on that graph. Metrication error
shrinks with ``r`` and discretisation error with ``h``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import cKDTree

from ._kernels import dijkstra_csr
from .sampling import DensityField, DomainSpec

NODE_CAP = 4_000_000
QUAD_INTERVALS = 8
SEGMENT_CHECKS = 8
CSR_MAGIC = b"FERMATG1"


class OracleError(ValueError):
    pass


class OracleUnreachable(RuntimeError):
    pass


@dataclass(frozen=True)
class Beta:
    value: float

    def __post_init__(self):
        if not self.value >= 0:
            raise OracleError("beta must be nonnegative")

    @classmethod
    def from_alpha(cls, alpha: float, dim: int) -> "Beta":
        return cls((float(alpha) - 1.0) / dim)


def stencil(dim: int, radius: int) -> np.ndarray:
    """Offsets with Chebyshev norm in [1, radius], one of each +/- pair."""
    offs = []
    for o in itertools.product(range(-radius, radius + 1), repeat=dim):
        if any(o) and o > tuple(-c for c in o):
            offs.append(o)
    return np.array(offs, dtype=np.int64)


def _closed_inside(domain: DomainSpec, x):
    lo, hi = np.asarray(domain.lower), np.asarray(domain.upper)
    eps = 1e-12 * np.maximum(1.0, np.abs(hi - lo))
    box = np.all((x >= lo - eps) & (x <= hi + eps), axis=1)
    out = np.zeros(len(x), dtype=bool)
    if box.any():
        out[box] = np.asarray(domain.contains(x[box]), dtype=bool)
    return out


@dataclass(eq=False)
class GridOracle:
    """Weighted lattice graph over the in-domain grid nodes.

    ``node_ids`` maps graph node -> flat lattice index; ``coords`` are the
    node positions. The CSR arrays hold each undirected edge in both rows.
    """

    lower: np.ndarray
    h: float
    shape: tuple
    node_ids: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    beta: float
    radius: int
    header: dict = field(default_factory=dict)
    domain: DomainSpec | None = None

    def __post_init__(self):
        self.coords = self._lattice_coords(self.node_ids)
        self._lookup = None
        self._tree = None

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    def _lattice_coords(self, flat):
        idx = np.column_stack(np.unravel_index(flat, self.shape)) if len(flat) else \
            np.empty((0, len(self.shape)), dtype=np.int64)
        return self.lower + self.h * idx

    def _node_of_flat(self):
        if self._lookup is None:
            lut = np.full(int(np.prod(self.shape)), -1, dtype=np.int64)
            lut[self.node_ids] = np.arange(self.n_nodes)
            self._lookup = lut
        return self._lookup

    def snap(self, x) -> int:
        """Nearest in-domain node to ``x``."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.shape[0] != self.dim:
            raise OracleError(f"point has dimension {x.shape[0]}, oracle has {self.dim}")
        if self.domain is not None and not _closed_inside(self.domain, x[None])[0]:
            raise OracleError(f"point {x.tolist()} lies outside the domain")
        if self._tree is None:
            self._tree = cKDTree(self.coords)
        d, i = self._tree.query(x)
        if d > self.h * np.sqrt(self.dim):
            raise OracleError(f"point {x.tolist()} is not covered by any in-domain grid cell")
        return int(i)

    def field_from(self, source: int, target: int = -1, limit: float = np.inf):
        return dijkstra_csr(self.indptr, self.indices, self.weights, int(source), int(target),
                            float(limit))

    def distance_field(self, x) -> np.ndarray:
        """Oracle distance from the snap node of ``x`` to every node."""
        return self.field_from(self.snap(x))[0]

    def interpolate(self, values, points) -> np.ndarray:
        """Multilinear interpolation of a node field, nearest node where cells are incomplete."""
        full = np.full(int(np.prod(self.shape)), np.nan)
        full[self.node_ids] = values
        full = full.reshape(self.shape)
        axes = [self.lower[c] + self.h * np.arange(self.shape[c]) for c in range(self.dim)]
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = RegularGridInterpolator(axes, full, bounds_error=False, fill_value=np.nan)(pts)
        bad = ~np.isfinite(out)
        if bad.any():
            if self._tree is None:
                self._tree = cKDTree(self.coords)
            _, i = self._tree.query(pts[bad])
            out[bad] = np.asarray(values)[i]
        return out

    def save(self, path) -> None:
        """``path`` gets the JSON header, ``path.csr`` the binary adjacency."""
        path = Path(path)
        head = dict(self.header, beta=self.beta, h=self.h, r=self.radius,
                    lower=self.lower.tolist(), shape=list(self.shape),
                    n_nodes=int(self.n_nodes), n_edges=int(len(self.indices)))
        path.write_text(json.dumps(head, indent=2, sort_keys=True))
        with open(path.with_name(path.name + ".csr"), "wb") as fh:
            fh.write(CSR_MAGIC)
            fh.write(np.array([self.n_nodes, len(self.indices)], dtype="<u8").tobytes())
            for arr, dt in ((self.node_ids, "<i8"), (self.indptr, "<i8"),
                            (self.indices, "<i8"), (self.weights, "<f8")):
                fh.write(np.ascontiguousarray(arr, dtype=dt).tobytes())

    @classmethod
    def load(cls, path, domain: DomainSpec | None = None) -> "GridOracle":
        path = Path(path)
        head = json.loads(path.read_text())
        raw = path.with_name(path.name + ".csr").read_bytes()
        if raw[:8] != CSR_MAGIC:
            raise OracleError(f"{path}.csr is not an oracle adjacency file")
        n, m = np.frombuffer(raw, dtype="<u8", count=2, offset=8)
        off = 24
        parts = []
        for count, dt in ((n, "<i8"), (n + 1, "<i8"), (m, "<i8"), (m, "<f8")):
            parts.append(np.frombuffer(raw, dtype=dt, count=int(count), offset=off).copy())
            off += 8 * int(count)
        node_ids, indptr, indices, weights = parts
        return cls(np.asarray(head["lower"]), float(head["h"]), tuple(head["shape"]), node_ids,
                   indptr, indices, weights, float(head["beta"]), int(head["r"]), head, domain)


@dataclass(frozen=True)
class ContinuumResult:
    distance: float
    geodesic: np.ndarray
    grid_spacing: float
    stencil_radius: int


def build_grid_oracle(domain: DomainSpec, density: DensityField, beta, h: float,
                      r: int = 4, node_cap: int = NODE_CAP) -> GridOracle:
    beta = beta.value if isinstance(beta, Beta) else Beta(float(beta)).value
    if not h > 0:
        raise OracleError("grid spacing h must be positive")
    if int(r) < 1:
        raise OracleError("stencil radius r must be >= 1")
    r = int(r)
    lo = np.asarray(domain.lower, dtype=np.float64)
    hi = np.asarray(domain.upper, dtype=np.float64)
    shape = tuple(int(np.floor((b - a) / h + 1e-9)) + 1 for a, b in zip(lo, hi))
    total = int(np.prod(shape))
    if total > node_cap:
        raise OracleError(f"grid would have {total} nodes (cap {node_cap}); use a larger h")
    dim = len(shape)
    grid_idx = np.indices(shape).reshape(dim, -1).T
    pts = lo + h * grid_idx
    mask = _closed_inside(domain, pts)
    node_ids = np.flatnonzero(mask)
    lut = np.full(total, -1, dtype=np.int64)
    lut[node_ids] = np.arange(len(node_ids))
    # f^-beta at the in-domain nodes, reused as the edge end values
    g_node = np.ones(len(node_ids)) if beta == 0 else density(pts[node_ids]) ** -beta

    src_all, dst_all, w_all = [], [], []
    shape_arr = np.array(shape)
    sub = np.arange(1, QUAD_INTERVALS) / QUAD_INTERVALS
    checks = np.arange(1, SEGMENT_CHECKS + 1) / (SEGMENT_CHECKS + 1)
    tw = np.full(QUAD_INTERVALS + 1, 1.0)
    tw[0] = tw[-1] = 0.5
    for off in stencil(dim, r):
        a_idx = grid_idx[node_ids]
        b_idx = a_idx + off
        ok = np.all((b_idx >= 0) & (b_idx < shape_arr), axis=1)
        a_nodes = np.flatnonzero(ok)
        b_flat = np.ravel_multi_index(b_idx[ok].T, shape)
        b_nodes = lut[b_flat]
        keep = b_nodes >= 0
        a_nodes, b_nodes = a_nodes[keep], b_nodes[keep]
        if not len(a_nodes):
            continue
        pa = pts[node_ids[a_nodes]]
        step = h * off
        for c in checks:
            inside = _closed_inside(domain, pa + c * step)
            a_nodes, b_nodes, pa = a_nodes[inside], b_nodes[inside], pa[inside]
        length = h * float(np.sqrt(np.dot(off, off)))
        if beta == 0:
            w = np.full(len(a_nodes), length)
        else:
            vals = [g_node[a_nodes]]
            for s in sub:
                vals.append(density(pa + s * step) ** -beta)
            vals.append(g_node[b_nodes])
            w = length * (np.tensordot(tw, np.stack(vals), axes=1) / QUAD_INTERVALS)
        src_all += [a_nodes, b_nodes]
        dst_all += [b_nodes, a_nodes]
        w_all += [w, w]
    n = len(node_ids)
    if src_all:
        src = np.concatenate(src_all)
        dst = np.concatenate(dst_all)
        w = np.concatenate(w_all)
    else:
        src = dst = np.empty(0, dtype=np.int64)
        w = np.empty(0)
    order = np.lexsort((dst, src))
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    header = {"domain": {"type": domain.name, **domain.params},
              "density": density.spec() if hasattr(density, "spec") else {"type": "custom"}}
    return GridOracle(lo, float(h), shape, node_ids, indptr, dst[order].astype(np.int64),
                      w[order].astype(np.float64), float(beta), r, header, domain)


def _route(oracle: GridOracle, x, y):
    a, b = oracle.snap(x), oracle.snap(y)
    # always search from the smaller node id so d(x, y) == d(y, x) bit for bit
    s, t = (a, b) if a <= b else (b, a)
    dist, pred = oracle.field_from(s, t)
    if not np.isfinite(dist[t]):
        raise OracleUnreachable(f"grid nodes {s} and {t} lie in different components")
    nodes = [t]
    while nodes[-1] != s:
        nodes.append(int(pred[nodes[-1]]))
    nodes = nodes[::-1]
    if s != a:
        nodes = nodes[::-1]
    return float(dist[t]), np.asarray(nodes, dtype=np.int64)


def continuum_distance(oracle: GridOracle, x, y) -> ContinuumResult:
    d, nodes = _route(oracle, x, y)
    return ContinuumResult(d, oracle.coords[nodes], oracle.h, oracle.radius)


def continuum_geodesic(oracle: GridOracle, x, y) -> np.ndarray:
    return continuum_distance(oracle, x, y).geodesic


def continuum_ball(oracle: GridOracle, x, t: float) -> np.ndarray:
    """Graph node ids at oracle distance ``< t`` from the snap node of ``x``."""
    if not t > 0:
        raise OracleError("ball radius t must be positive")
    dist, _ = oracle.field_from(oracle.snap(x), limit=t)
    return np.flatnonzero(dist < t)


def write_points_csv(points, path) -> None:
    np.savetxt(path, np.atleast_2d(points), delimiter=",", fmt="%.17g")


def write_svg(path, polylines=(), point_sets=(), box=((0.0, 0.0), (1.0, 1.0)), size=480) -> None:
    """Static 2-D picture: polylines as strokes, point sets as dots."""
    (x0, y0), (x1, y1) = box
    sx = size / (x1 - x0)
    sy = size / (y1 - y0)

    def tx(p):
        return (p[0] - x0) * sx, size - (p[1] - y0) * sy

    palette = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"]
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'<rect width="{size}" height="{size}" fill="white" stroke="black"/>']
    for j, pts in enumerate(point_sets):
        col = palette[j % len(palette)]
        for p in np.atleast_2d(pts):
            cx, cy = tx(p)
            out.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="1.2" fill="{col}"/>')
    for j, poly in enumerate(polylines):
        col = palette[(j + 1) % len(palette)]
        coords = " ".join("%.2f,%.2f" % tx(p) for p in np.atleast_2d(poly))
        out.append(f'<polyline points="{coords}" fill="none" stroke="{col}" stroke-width="1.5"/>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
