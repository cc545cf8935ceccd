"""Monte Carlo experiments on scaled sample Fermat distances.

Each experiment is a grid of independent tasks keyed by ``(n, replicate)``.
A task draws its own random stream from ``(seed, scenario, n, replicate)``,
so tables are identical for any worker count; set ``FERMAT_WORKERS`` to run
tasks in a process pool.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import __version__
from .catalog import CatalogError, make_density, make_domain, make_manifold
from .continuum import Beta, build_grid_oracle, continuum_ball, continuum_distance
from .core import (build_knn_graph, check_alpha, exact_distance, exact_from, path_statistics,
                   restricted_distance, restricted_from)
from .geometry import PointCloud, SpatialIndex, curve_distance, resample_polyline
from .io import table_columns, write_table
from .sampling import rng_stream, sample_iid, sample_manifold, sample_poisson


class ConfigError(ValueError):
    """Malformed experiment configuration; ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class ShapeError(ValueError):
    pass


SHAPE_MARGIN = 1.25


@dataclass
class ExperimentConfig:
    scenario: str = "convergence"
    density: dict = field(default_factory=lambda: {"type": "uniform"})
    domain: dict | None = None
    manifold: dict | None = None
    alpha: float = 2.0
    dim: int = 2
    schedule: list = field(default_factory=lambda: [1e3, 4e3, 1.6e4, 6.4e4])
    reps: int = 16
    seed: int = 0
    queries: list = field(default_factory=lambda: [[[0.2, 0.5], [0.8, 0.5]]])
    out: str | None = None
    process: str = "poisson"
    method: str = "auto"
    knn_c: float = 10.0
    exact_max: int = 4000
    oracle_h: float = 0.005
    oracle_r: int = 4
    resolution: int = 256
    center: list | None = None
    t: float | None = None
    mu_hat: float | None = None
    mu_reps: int | None = None
    k_grid: list | None = None
    sources: int = 10
    targets: int = 10
    epsilon: float = 0.01
    workers: int | None = None

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_dict(cls, data: dict, **overrides) -> "ExperimentConfig":
        data = dict(data or {})
        data.update({k: v for k, v in overrides.items() if v is not None})
        names = {f.name: f for f in dataclasses.fields(cls)}
        for key in data:
            if key not in names:
                raise ConfigError("unknown configuration field", field=key)
        return cls(**data)

    @classmethod
    def from_json(cls, text_or_path, **overrides) -> "ExperimentConfig":
        p = Path(str(text_or_path))
        try:
            text = p.read_text() if p.exists() else str(text_or_path)
        except OSError:
            text = str(text_or_path)
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON ({e.msg})", field="config") from None
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a JSON object", field="config")
        return cls.from_dict(data, **overrides)

    def validate(self) -> None:
        def num(name, cast=float):
            try:
                setattr(self, name, cast(getattr(self, name)))
            except (TypeError, ValueError):
                raise ConfigError("must be a number", field=name) from None

        num("alpha")
        num("dim", int)
        num("reps", int)
        num("seed", int)
        num("knn_c")
        num("oracle_h")
        num("oracle_r", int)
        num("epsilon")
        if not self.alpha >= 1:
            raise ConfigError("alpha must be >= 1", field="alpha")
        if self.dim < 1:
            raise ConfigError("dim must be >= 1", field="dim")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1", field="reps")
        try:
            sched = [float(v) for v in self.schedule]
        except (TypeError, ValueError):
            raise ConfigError("must be a list of numbers", field="schedule") from None
        if not sched or any(b <= a for a, b in zip(sched, sched[1:])) or sched[0] <= 0:
            raise ConfigError("must be positive and strictly increasing", field="schedule")
        self.schedule = sched
        if self.method not in ("auto", "exact", "knn"):
            raise ConfigError("must be one of auto, exact, knn", field="method")
        if self.process not in ("poisson", "iid"):
            raise ConfigError("must be poisson or iid", field="process")
        for name in ("density", "domain", "manifold"):
            v = getattr(self, name)
            if v is not None and not isinstance(v, dict):
                raise ConfigError("must be a JSON object", field=name)
        try:
            q = np.asarray(self.queries, dtype=np.float64)
        except (TypeError, ValueError):
            raise ConfigError("must be a list of [x, y] point pairs", field="queries") from None
        if q.ndim != 3 or q.shape[1] != 2:
            raise ConfigError("must be a list of [x, y] point pairs", field="queries")
        if not 0 < self.epsilon < 1:
            raise ConfigError("must lie in (0, 1)", field="epsilon")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def beta(self) -> float:
        return (self.alpha - 1.0) / self.dim


@dataclass
class ConvergenceRecord:
    query: int
    n: float
    replicate: int
    scaled_distance: float
    oracle_distance: float
    ratio: float
    arc_length: float
    max_gap: float
    hop_count: int
    wall_time: float = field(default=0.0, metadata={"volatile": True})


@dataclass
class ExperimentResult:
    name: str
    records: list
    summary: list
    meta: dict
    record_columns: list
    summary_columns: list

    def write(self, out_dir) -> list:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        meta = {k: v for k, v in self.meta.items() if k != "timing"}
        a = out_dir / f"{self.name}.csv"
        b = out_dir / f"{self.name}_summary.csv"
        write_table(a, self.name, self.records, self.record_columns,
                    dict(meta, timing=self.meta.get("timing", {})))
        write_table(b, f"{self.name}_summary", self.summary, self.summary_columns, meta)
        return [a, b]

    def summary_at(self, key, value, **match):
        for row in self.summary:
            if row[key] == value and all(row.get(k) == v for k, v in match.items()):
                return row
        raise KeyError(value)


# -- shared helpers --------------------------------------------------------


def worker_count(cfg: ExperimentConfig | None = None) -> int:
    env = os.environ.get("FERMAT_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError("FERMAT_WORKERS must be an integer", field="FERMAT_WORKERS") from None
    if cfg is not None and cfg.workers:
        return max(1, int(cfg.workers))
    return 1


def _map(fn, tasks, workers):
    tasks = list(tasks)
    if workers <= 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(workers) as ex:
        return list(ex.map(fn, tasks, chunksize=1))


def _quantiles(v):
    v = np.asarray(v, dtype=np.float64)
    q25, med, q75 = np.percentile(v, [25, 50, 75])
    return float(q25), float(med), float(q75)


def knn_k(n_points: int, c: float) -> int:
    return max(1, min(n_points - 1, int(math.ceil(c * math.log(max(n_points, 2))))))


def sample_distance(cloud: PointCloud, alpha: float, x, y, cfg: ExperimentConfig,
                    index: SpatialIndex | None = None):
    """Distance by the configured method; returns (DistanceResult, method, k)."""
    index = index if index is not None else SpatialIndex(cloud)
    n = len(cloud)
    use_exact = cfg.method == "exact" or (cfg.method == "auto" and n <= cfg.exact_max)
    if use_exact:
        return exact_distance(cloud, alpha, x, y, index=index), "exact", n - 1
    k = knn_k(n, cfg.knn_c)
    g = build_knn_graph(cloud, k, alpha, index=index)
    return restricted_distance(g, cloud, alpha, x, y, index=index), "knn", k


def _draw(cfg: ExperimentConfig, n: float, rep: int, tag: str):
    dom = make_domain(cfg.domain, cfg.dim)
    dens = make_density(cfg.density, dom, cfg.dim)
    key = (cfg.scenario, tag, float(n), int(rep))
    if cfg.process == "iid":
        return sample_iid(dom, dens, int(round(n)), cfg.seed, tag=key).cloud
    return sample_poisson(dom, dens, n, cfg.seed, tag=key).cloud


def _oracle(cfg: ExperimentConfig, beta: float | None = None, domain=None, density=None):
    dom = domain if domain is not None else make_domain(cfg.domain, cfg.dim)
    dens = density if density is not None else make_density(cfg.density, dom, cfg.dim)
    b = cfg.beta if beta is None else beta
    return build_grid_oracle(dom, dens, Beta(b), cfg.oracle_h, cfg.oracle_r)


def _meta(cfg: ExperimentConfig, **extra) -> dict:
    return {"config": cfg.to_dict(), "seed": cfg.seed, "library_version": __version__, **extra}


# -- mu --------------------------------------------------------------------


def _mu_task(args):
    cfg, n, rep, x, y = args
    t0 = time.perf_counter()
    dom = make_domain({"type": "box", "lower": [0.0] * cfg.dim, "upper": [1.0] * cfg.dim})
    cloud = sample_poisson(dom, make_density({"type": "uniform"}, dom), n, cfg.seed,
                           tag=("mu", float(n), int(rep), tuple(x), tuple(y))).cloud
    res, method, k = sample_distance(cloud, cfg.alpha, x, y, cfg)
    ratio = n ** cfg.beta * res.distance / float(np.linalg.norm(np.subtract(x, y)))
    return {"n": n, "replicate": rep, "mu": ratio, "points": len(cloud), "method": method,
            "k": k, "wall_time": time.perf_counter() - t0}


def estimate_mu(alpha: float, d: int, schedule, reps: int, seed: int, x=None, y=None,
                method: str = "auto", knn_c: float = 10.0, workers: int | None = None
                ) -> ExperimentResult:
    """Ratio ``n^beta D(x, y) / |x - y|`` for uniform Poisson clouds on [0,1]^d."""
    alpha = check_alpha(alpha)
    x = [0.2] + [0.5] * (d - 1) if x is None else list(map(float, x))
    y = [0.8] + [0.5] * (d - 1) if y is None else list(map(float, y))
    if np.linalg.norm(np.subtract(x, y)) < 0.5:
        raise ConfigError("query points must be at least 0.5 apart", field="queries")
    cfg = ExperimentConfig(scenario="mu", alpha=alpha, dim=d, schedule=list(schedule), reps=reps,
                           seed=seed, queries=[[x, y]], method=method, knn_c=knn_c,
                           workers=workers)
    tasks = [(cfg, n, r, x, y) for n in cfg.schedule for r in range(cfg.reps)]
    rows = _map(_mu_task, tasks, worker_count(cfg))
    summary = []
    for n in cfg.schedule:
        v = [r["mu"] for r in rows if r["n"] == n]
        q25, med, q75 = _quantiles(v)
        summary.append({"n": n, "mu_hat": float(np.mean(v)), "median": med, "q25": q25,
                        "q75": q75, "iqr": q75 - q25, "dispersion": (q75 - q25) / med,
                        "reps": len(v)})
    timing = {f"{r['n']:g}/{r['replicate']}": r["wall_time"] for r in rows}
    meta = _meta(cfg, beta=cfg.beta, timing=timing,
                 methods=sorted({(r["n"], r["method"], r["k"]) for r in rows}))
    return ExperimentResult("mu", rows, summary, meta,
                            ["n", "replicate", "mu", "points", "method", "k"],
                            ["n", "mu_hat", "median", "q25", "q75", "iqr", "dispersion", "reps"])


# -- consistency -----------------------------------------------------------


def _conv_task(args):
    cfg, n, rep, queries = args
    t0 = time.perf_counter()
    cloud = _draw(cfg, n, rep, "convergence")
    index = SpatialIndex(cloud)
    out = []
    for qi, (x, y) in enumerate(queries):
        res, method, k = sample_distance(cloud, cfg.alpha, x, y, cfg, index)
        st = path_statistics(res.path, cloud)
        out.append({"query": qi, "distance": res.distance, "arc_length": st.arc_length,
                    "max_gap": st.max_gap, "hop_count": st.hop_count, "method": method, "k": k,
                    "points": len(cloud)})
    return n, rep, out, time.perf_counter() - t0


def _ratio_summary(records, key="ratio", group=("query", "n")):
    summary = []
    keys = sorted({tuple(getattr(r, g) for g in group) for r in records})
    for kv in keys:
        v = [getattr(r, key) for r in records if tuple(getattr(r, g) for g in group) == kv]
        q25, med, q75 = _quantiles(v)
        summary.append({**dict(zip(group, kv)), "median": med, "q25": q25, "q75": q75,
                        "dispersion": (q75 - q25) / med, "mean": float(np.mean(v)),
                        "reps": len(v)})
    return summary


def run_convergence(config: ExperimentConfig) -> ExperimentResult:
    """Scaled sample distance against the continuum oracle, per n and replicate."""
    cfg = config
    try:
        oracle = _oracle(cfg)
        truth = [continuum_distance(oracle, x, y).distance for x, y in cfg.queries]
    except (CatalogError, ValueError, RuntimeError) as e:
        raise ConfigError(f"continuum oracle unavailable: {e}", field="density") from e
    tasks = [(cfg, n, r, cfg.queries) for n in cfg.schedule for r in range(cfg.reps)]
    results = _map(_conv_task, tasks, worker_count(cfg))
    records, timing, methods = [], {}, set()
    for n, rep, out, wall in results:
        timing[f"{n:g}/{rep}"] = wall
        for o in out:
            scaled = n ** cfg.beta * o["distance"]
            records.append(ConvergenceRecord(o["query"], n, rep, scaled, truth[o["query"]],
                                             scaled / truth[o["query"]], o["arc_length"],
                                             o["max_gap"], o["hop_count"], wall))
            methods.add((n, o["method"], o["k"]))
    records.sort(key=lambda r: (r.query, r.n, r.replicate))
    meta = _meta(cfg, beta=cfg.beta, oracle_distances=truth, timing=timing,
                 methods=sorted(methods), oracle={"h": cfg.oracle_h, "r": cfg.oracle_r})
    return ExperimentResult("convergence", records, _ratio_summary(records), meta,
                            table_columns(ConvergenceRecord),
                            ["query", "n", "median", "q25", "q75", "dispersion", "mean", "reps"])


# -- geodesics -------------------------------------------------------------


def _geo_task(args):
    cfg, n, rep, x, y = args
    t0 = time.perf_counter()
    cloud = _draw(cfg, n, rep, "geodesic")
    res, method, k = sample_distance(cloud, cfg.alpha, x, y, cfg)
    st = path_statistics(res.path, cloud)
    return {"n": n, "replicate": rep, "polyline": res.path.polyline(cloud), "arc_length":
            st.arc_length, "max_gap": st.max_gap, "hop_count": st.hop_count, "method": method,
            "k": k, "wall_time": time.perf_counter() - t0}


def signed_deviation(poly, x, y, toward, resolution=256) -> float:
    """Mean offset of ``poly`` from the chord x->y, positive on the side of ``toward``."""
    x, y, toward = (np.asarray(v, dtype=np.float64) for v in (x, y, toward))
    e = (y - x) / np.linalg.norm(y - x)
    side = (toward - x) - np.dot(toward - x, e) * e
    nrm = np.linalg.norm(side)
    if nrm == 0:
        raise ValueError("reference point lies on the chord")
    side = side / nrm
    pts = resample_polyline(poly, resolution)
    return float(np.mean((pts - x) @ side))


def run_geodesic_convergence(config: ExperimentConfig) -> ExperimentResult:
    """Curve distance between sample geodesics and the oracle geodesic, per n."""
    cfg = config
    x, y = (np.asarray(p, dtype=np.float64) for p in cfg.queries[0])
    oracle = _oracle(cfg)
    ref = continuum_distance(oracle, x, y)
    if cfg.density.get("type") == "gauss_bump":
        toward = np.asarray(cfg.density.get("center", [0.5] * cfg.dim), dtype=np.float64)
    else:
        mid = ref.geodesic[len(ref.geodesic) // 2]
        e = y - x
        off = (mid - x) - np.dot(mid - x, e) / np.dot(e, e) * e
        if np.linalg.norm(off) > 0:
            toward = mid
        else:
            # straight reference geodesic: measure deviation along a fixed normal
            normal = np.zeros_like(e)
            normal[0], normal[1] = -e[1], e[0]
            toward = x + normal
    tasks = [(cfg, n, r, x, y) for n in cfg.schedule for r in range(cfg.reps)]
    rows = _map(_geo_task, tasks, worker_count(cfg))
    records = []
    for r in rows:
        records.append({"n": r["n"], "replicate": r["replicate"],
                        "curve_distance": curve_distance(r["polyline"], ref.geodesic,
                                                         cfg.resolution),
                        "signed_deviation": signed_deviation(r["polyline"], x, y, toward),
                        "arc_length": r["arc_length"], "max_gap": r["max_gap"],
                        "hop_count": r["hop_count"]})
    summary = []
    ell = None
    for n in cfg.schedule:
        sel = [r for r in records if r["n"] == n]
        arcs = [r["arc_length"] for r in sel]
        if ell is None:
            ell = 2 * max(arcs)
        summary.append({"n": n,
                        "median_curve_distance": float(np.median([r["curve_distance"] for r in sel])),
                        "max_arc_length": max(arcs), "arc_bound": ell,
                        "frac_toward": float(np.mean([r["signed_deviation"] > 0 for r in sel])),
                        "median_deviation": float(np.median([r["signed_deviation"] for r in sel]))})
    meta = _meta(cfg, beta=cfg.beta, oracle_distance=ref.distance,
                 oracle_deviation=signed_deviation(ref.geodesic, x, y, toward),
                 timing={f"{r['n']:g}/{r['replicate']}": r["wall_time"] for r in rows},
                 methods=sorted({(r["n"], r["method"], r["k"]) for r in rows}))
    return ExperimentResult("geodesic", records, summary, meta,
                            ["n", "replicate", "curve_distance", "signed_deviation", "arc_length",
                             "max_gap", "hop_count"],
                            ["n", "median_curve_distance", "max_arc_length", "arc_bound",
                             "frac_toward", "median_deviation"])


# -- shape -----------------------------------------------------------------


def _shape_task(args):
    cfg, n, rep, center, t = args
    t0 = time.perf_counter()
    cloud = _draw(cfg, n, rep, "shape")
    index = SpatialIndex(cloud)
    a = index.nearest(center)
    limit = t / n ** cfg.beta
    if cfg.method == "exact" or (cfg.method == "auto" and len(cloud) <= cfg.exact_max):
        dist, _ = exact_from(cloud, cfg.alpha, a, limit=limit)
    else:
        g = build_knn_graph(cloud, knn_k(len(cloud), cfg.knn_c), cfg.alpha, index=index)
        dist, _ = restricted_from(g, a, limit=limit)
    return {"n": n, "replicate": rep, "points": cloud.points, "scaled": n ** cfg.beta * dist,
            "wall_time": time.perf_counter() - t0}


def _boundary_nodes(oracle):
    full = np.zeros(oracle.shape, dtype=bool)
    full.reshape(-1)[oracle.node_ids] = True
    inner = full.copy()
    for ax in range(full.ndim):
        for s in (1, -1):
            shifted = np.roll(full, s, axis=ax)
            edge = [slice(None)] * full.ndim
            edge[ax] = 0 if s == 1 else -1
            shifted[tuple(edge)] = False
            inner &= shifted
    flat = np.flatnonzero((full & ~inner).reshape(-1))
    return np.searchsorted(oracle.node_ids, flat)


def directional_speed(points, scaled, center, direction, t, cone_deg=15.0) -> float:
    """Euclidean growth per unit of scaled distance inside a cone around ``direction``."""
    v = points - center
    r = np.linalg.norm(v, axis=1)
    u = np.asarray(direction, dtype=np.float64)
    u = u / np.linalg.norm(u)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = (v @ u) / r
    sel = (cos >= np.cos(np.radians(cone_deg))) & (scaled >= 0.25 * t) & (scaled < t)
    if sel.sum() < 3:
        return float("nan")
    slope = np.polyfit(scaled[sel], r[sel], 1)[0]
    return float(slope)


def run_shape(config: ExperimentConfig) -> ExperimentResult:
    """Smallest epsilon for which the ball sandwich surrogate holds, per n."""
    cfg = config
    dom = make_domain(cfg.domain, cfg.dim)
    dens = make_density(cfg.density, dom, cfg.dim)
    center = np.asarray(cfg.center if cfg.center is not None else
                        (np.asarray(dom.lower) + np.asarray(dom.upper)) / 2, dtype=np.float64)
    mu = cfg.mu_hat
    mu_source = "config"
    if mu is None:
        est = estimate_mu(cfg.alpha, cfg.dim, [cfg.schedule[-1]], cfg.mu_reps or cfg.reps,
                          cfg.seed, method=cfg.method, knn_c=cfg.knn_c, workers=cfg.workers)
        mu = est.summary[0]["median"]
        mu_source = f"estimate_mu at n={cfg.schedule[-1]:g}"
    oracle = build_grid_oracle(dom, dens, Beta(cfg.beta), cfg.oracle_h, cfg.oracle_r)
    field_ = oracle.distance_field(center)
    bnd = _boundary_nodes(oracle)
    reach = field_[bnd].min() if len(bnd) else np.inf
    # default: 90% of the largest radius whose outer ball keeps a 25% margin to the boundary
    t = float(cfg.t) if cfg.t is not None else 0.9 * mu * reach / SHAPE_MARGIN
    if not np.isfinite(t) or t <= 0:
        raise ShapeError("cannot choose a ball radius; set t explicitly")
    if reach < SHAPE_MARGIN * t / mu:
        raise ShapeError("outer continuum ball reaches the domain boundary; use a smaller t")
    axis = None
    if dens.name == "two_value":
        axis = int(dens.params["axis"])
        a_val, b_val = dens.params["a"], dens.params["b"]
        expected = (b_val / a_val) ** cfg.beta
    else:
        axis = cfg.dim - 1
        expected = 1.0
    e = np.zeros(cfg.dim)
    e[axis] = 1.0
    # continuum asymmetry along the axis: extents of the ball at radius t / mu
    ball = oracle.coords[continuum_ball(oracle, center, t / mu)]
    off = ball - center
    perp = np.linalg.norm(off - np.outer(off @ e, e), axis=1)
    band = perp <= oracle.h * 0.5 + 1e-12
    cont_ratio = float((off[band] @ e).max() / -(off[band] @ e).min())

    tasks = [(cfg, n, r, center, t) for n in cfg.schedule for r in range(cfg.reps)]
    rows = _map(_shape_task, tasks, worker_count(cfg))
    records = []
    for r in rows:
        pts, scaled = r["points"], r["scaled"]
        in_ball = scaled < t
        cont = oracle.interpolate(field_, pts[in_ball]) / t
        eps_out = float(cont.max() - 1.0 / mu) if len(cont) else 0.0
        _, anchor = cKDTree(pts).query(oracle.coords)
        miss = ~in_ball[anchor]
        eps_in = float(1.0 / mu - field_[miss].min() / t) if miss.any() else 0.0
        up = directional_speed(pts, scaled, center, e, t)
        down = directional_speed(pts, scaled, center, -e, t)
        records.append({"n": r["n"], "replicate": r["replicate"],
                        "epsilon": max(0.0, eps_out, eps_in), "epsilon_outer": eps_out,
                        "epsilon_inner": eps_in, "ball_size": int(in_ball.sum()),
                        "axis_ratio": up / down})
    summary = []
    for n in cfg.schedule:
        sel = [r for r in records if r["n"] == n]
        summary.append({"n": n, "median_epsilon": float(np.median([r["epsilon"] for r in sel])),
                        "median_axis_ratio": float(np.median([r["axis_ratio"] for r in sel])),
                        "expected_axis_ratio": expected, "continuum_axis_ratio": cont_ratio})
    meta = _meta(cfg, beta=cfg.beta, mu_hat=mu, mu_source=mu_source, t=t,
                 surrogate="inner inclusion tested on grid nodes through their nearest particle; "
                           "outer inclusion tested on sample-ball particles",
                 timing={f"{r['n']:g}/{r['replicate']}": r["wall_time"] for r in rows})
    return ExperimentResult("shape", records, summary, meta,
                            ["n", "replicate", "epsilon", "epsilon_outer", "epsilon_inner",
                             "ball_size", "axis_ratio"],
                            ["n", "median_epsilon", "median_axis_ratio", "expected_axis_ratio",
                             "continuum_axis_ratio"])


# -- k-nearest-neighbour sufficiency ---------------------------------------


def default_k_grid(n_points: int) -> list:
    top = int(math.ceil(15 * math.log(n_points)))
    grid = sorted(set([1, 2, 3, 4, 5, 6, 7, 8, 10, 12, 14, 16, 20, 24, 28, 32, 40, 48, 64, 80,
                       96, 128, top]))
    return [k for k in grid if k <= min(top, n_points - 1)]


def _knn_task(args):
    cfg, n, rep = args
    t0 = time.perf_counter()
    cloud = _draw(cfg, n, rep, "knn")
    N = len(cloud)
    rng = rng_stream(cfg.seed, cfg.scenario, "pairs", float(n), int(rep))
    picks = rng.choice(N, size=cfg.sources + cfg.targets, replace=False)
    src, tgt = picks[: cfg.sources], picks[cfg.sources:]
    exact = np.stack([exact_from(cloud, cfg.alpha, s)[0][tgt] for s in src])
    grid = [k for k in (cfg.k_grid or default_k_grid(N)) if k <= N - 1]
    full = build_knn_graph(cloud, max(grid), cfg.alpha)
    per_k = []
    for k in grid:
        g = full.restrict(k)
        dk = np.stack([restricted_from(g, s)[0][tgt] for s in src])
        per_k.append(dk)
    return {"n": n, "replicate": rep, "grid": grid, "exact": exact, "restricted": per_k,
            "points": N, "wall_time": time.perf_counter() - t0}


def run_knn_sufficiency(config: ExperimentConfig) -> ExperimentResult:
    """Fraction of query pairs whose k-restricted distance equals the exact one."""
    cfg = config
    tasks = [(cfg, n, r) for n in cfg.schedule for r in range(cfg.reps)]
    rows = _map(_knn_task, tasks, worker_count(cfg))
    records, summary, monotone_all = [], [], True
    for n in cfg.schedule:
        sel = [r for r in rows if r["n"] == n]
        grid = sorted(set.intersection(*(set(r["grid"]) for r in sel)))
        agree = {k: [] for k in grid}
        for r in sel:
            dks = [r["restricted"][r["grid"].index(k)] for k in grid]
            for j in range(1, len(dks)):
                # fewer edges can only lengthen paths
                if np.any(dks[j] > dks[j - 1] * (1 + 1e-12)):
                    monotone_all = False
            for k, dk in zip(grid, dks):
                agree[k].append(np.isclose(dk, r["exact"], rtol=1e-12, atol=0.0).reshape(-1))
        fracs = []
        for k in grid:
            a = np.concatenate(agree[k])
            fracs.append(float(a.mean()))
            records.append({"n": n, "k": k, "agreement": float(a.mean()), "pairs": int(a.size),
                            "log_n_over_eps": math.log(n / cfg.epsilon)})
        ok = [k for k, f in zip(grid, fracs) if f >= 1 - cfg.epsilon]
        monotone = all(b >= a for a, b in zip(fracs, fracs[1:]))
        monotone_all &= monotone
        summary.append({"n": n, "k_star": ok[0] if ok else -1, "k_max": grid[-1],
                        "log_n_over_eps": math.log(n / cfg.epsilon),
                        "monotone": int(monotone)})
    xs = np.array([s["log_n_over_eps"] for s in summary if s["k_star"] > 0])
    ks = np.array([s["k_star"] for s in summary if s["k_star"] > 0], dtype=np.float64)
    if len(xs) >= 2:
        c_hat, d_hat = np.polyfit(xs, ks, 1)
    elif len(xs) == 1:
        c_hat, d_hat = ks[0] / xs[0], 0.0
    else:
        c_hat = d_hat = float("nan")
    for s in summary:
        s["c_hat"] = float(c_hat)
        s["d_hat"] = float(d_hat)
    meta = _meta(cfg, pathwise_monotone=bool(monotone_all),
                 timing={f"{r['n']:g}/{r['replicate']}": r["wall_time"] for r in rows})
    return ExperimentResult("knn", records, summary, meta,
                            ["n", "k", "agreement", "pairs", "log_n_over_eps"],
                            ["n", "k_star", "k_max", "log_n_over_eps", "monotone", "c_hat",
                             "d_hat"])


# -- manifolds -------------------------------------------------------------


def _manifold_parts(cfg):
    man = make_manifold(cfg.manifold)
    dom = man.parameter_domain
    spec = dict(cfg.density or {"type": "uniform"})
    if spec["type"] == "uniform" and "value" not in spec:
        # i.i.d. sampling needs a probability density on the parameter domain
        spec["value"] = 1.0 / dom.volume
    dens = make_density(spec, dom, man.intrinsic_dim)
    return man, dom, dens


def _manifold_task(args):
    cfg, n, rep, queries = args
    t0 = time.perf_counter()
    man, dom, dens = _manifold_parts(cfg)
    batch = sample_manifold(man, dens, int(round(n)), cfg.seed, tag=("manifold", float(n), rep))
    cloud = batch.cloud
    index = SpatialIndex(cloud)
    out = []
    for x, y in queries:
        xa, ya = man.chart(np.atleast_2d(x))[0], man.chart(np.atleast_2d(y))[0]
        res, method, k = sample_distance(cloud, cfg.alpha, xa, ya, cfg, index)
        st = path_statistics(res.path, cloud)
        out.append((res.distance, st, method, k))
    return n, rep, out, time.perf_counter() - t0


def run_manifold(config: ExperimentConfig) -> ExperimentResult:
    """Scaled distances on an embedded manifold with intrinsic and ambient exponents."""
    cfg = config
    man, dom, dens = _manifold_parts(cfg)
    man.check_isometry()
    d, D = man.intrinsic_dim, man.ambient_dim
    beta = (cfg.alpha - 1) / d
    beta_amb = (cfg.alpha - 1) / D
    o_in = build_grid_oracle(dom, dens, Beta(beta), cfg.oracle_h, cfg.oracle_r)
    o_amb = build_grid_oracle(dom, dens, Beta(beta_amb), cfg.oracle_h, cfg.oracle_r)
    truth = [continuum_distance(o_in, x, y).distance for x, y in cfg.queries]
    truth_amb = [continuum_distance(o_amb, x, y).distance for x, y in cfg.queries]
    tasks = [(cfg, n, r, cfg.queries) for n in cfg.schedule for r in range(cfg.reps)]
    results = _map(_manifold_task, tasks, worker_count(cfg))
    records, timing, methods = [], {}, set()
    for n, rep, out, wall in results:
        timing[f"{n:g}/{rep}"] = wall
        for qi, (dist, st, method, k) in enumerate(out):
            records.append({"query": qi, "n": n, "replicate": rep,
                            "scaled_distance": n ** beta * dist, "oracle_distance": truth[qi],
                            "ratio": n ** beta * dist / truth[qi],
                            "ratio_ambient_beta": n ** beta_amb * dist / truth_amb[qi],
                            "arc_length": st.arc_length, "max_gap": st.max_gap,
                            "hop_count": st.hop_count})
            methods.add((n, method, k))
    records.sort(key=lambda r: (r["query"], r["n"], r["replicate"]))
    summary = []
    for qi in range(len(cfg.queries)):
        for n in cfg.schedule:
            sel = [r for r in records if r["query"] == qi and r["n"] == n]
            summary.append({"query": qi, "n": n,
                            "median_ratio": float(np.median([r["ratio"] for r in sel])),
                            "median_ratio_ambient_beta":
                                float(np.median([r["ratio_ambient_beta"] for r in sel]))})
    meta = _meta(cfg, beta=beta, beta_ambient=beta_amb, manifold=man.name,
                 manifold_params=man.params, oracle_distances=truth,
                 oracle_distances_ambient_beta=truth_amb, timing=timing, methods=sorted(methods))
    return ExperimentResult("manifold", records, summary, meta,
                            ["query", "n", "replicate", "scaled_distance", "oracle_distance",
                             "ratio", "ratio_ambient_beta", "arc_length", "max_gap", "hop_count"],
                            ["query", "n", "median_ratio", "median_ratio_ambient_beta"])
