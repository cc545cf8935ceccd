"""Command line interface: ``fermat <command> [options]``.

Every command accepts ``--seed``, ``--out`` and ``--config``; the config is a
JSON object (inline or a file path) whose keys fill options not given on the
command line. Exit status: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .catalog import make_density, make_domain, make_manifold
from .continuum import (Beta, GridOracle, OracleUnreachable, build_grid_oracle, continuum_ball,
                        continuum_distance, write_points_csv, write_svg)
from .core import (Unreachable, all_pairs_restricted, build_knn_graph, check_alpha,
                   distances_from_sources, exact_distance, exact_from, fermat_ball,
                   landmark_bounds, path_statistics, restricted_distance)
from .experiments import (ConfigError, ExperimentConfig, estimate_mu, run_convergence,
                          run_geodesic_convergence, run_knn_sufficiency, run_manifold, run_shape)
from .geometry import SpatialIndex, load_cloud_csv
from .io import write_band_svg, write_matrix_bin, write_matrix_csv, write_table
from .sampling import rng_stream, sample_iid, sample_manifold, sample_poisson

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3


def _point(text):
    if isinstance(text, (list, tuple, np.ndarray)):
        return np.asarray(text, dtype=np.float64)
    try:
        return np.array([float(v) for v in str(text).split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad point {text!r}; use comma separated numbers")


def _floats(text):
    if isinstance(text, (list, tuple, np.ndarray)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad list {text!r}; use comma separated numbers")


def _json_obj(text):
    if isinstance(text, dict):
        return text
    try:
        v = json.loads(text)
    except json.JSONDecodeError as e:
        raise argparse.ArgumentTypeError(f"invalid JSON ({e.msg})")
    if not isinstance(v, dict):
        raise argparse.ArgumentTypeError("expected a JSON object")
    return v


def _load_config(text):
    if text is None:
        return {}
    p = Path(text)
    raw = p.read_text() if p.exists() else text
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON ({e.msg})", field="config") from None
    if not isinstance(cfg, dict):
        raise ConfigError("must be a JSON object", field="config")
    return cfg


def _common(p):
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None, help="JSON object or path to a JSON file")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fermat", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw a point cloud")
    _common(p)
    p.add_argument("--n", type=float)
    p.add_argument("--process", choices=["poisson", "iid"])
    p.add_argument("--dim", type=int)
    p.add_argument("--domain", type=_json_obj)
    p.add_argument("--density", type=_json_obj)
    p.add_argument("--manifold", type=_json_obj)

    def cloud_cmd(name, help_):
        q = sub.add_parser(name, help=help_)
        _common(q)
        q.add_argument("--cloud")
        q.add_argument("--alpha", type=float)
        return q

    p = cloud_cmd("dist", "exact sample Fermat distance")
    p.add_argument("--x", type=_point)
    p.add_argument("--y", type=_point)
    p.add_argument("--beta", type=float, help="report n^beta * D with n = cloud size")

    p = cloud_cmd("knn-dist", "kNN-restricted distance")
    p.add_argument("--x", type=_point)
    p.add_argument("--y", type=_point)
    p.add_argument("--k", type=int)
    p.add_argument("--undirected", action="store_true", default=None)

    p = cloud_cmd("all-pairs", "full distance matrix")
    p.add_argument("--k", type=int, help="restrict to k nearest neighbours (default: exact)")
    p.add_argument("--undirected", action="store_true", default=None)
    p.add_argument("--symmetrize", choices=["none", "min", "max"])
    p.add_argument("--format", choices=["csv", "bin"])

    p = cloud_cmd("landmarks", "landmark lower/upper bounds on random pairs")
    p.add_argument("--landmarks", type=int)
    p.add_argument("--pairs", type=int)
    p.add_argument("--k", type=int, help="use an undirected kNN graph instead of the exact graph")
    p.add_argument("--check", action="store_true", default=None, help="also report exact values")

    p = cloud_cmd("ball", "particles with distance < t from x")
    p.add_argument("--x", type=_point)
    p.add_argument("--t", type=float)
    p.add_argument("--k", type=int)

    po = sub.add_parser("oracle", help="continuum oracle").add_subparsers(dest="action",
                                                                          required=True)
    p = po.add_parser("build")
    _common(p)
    p.add_argument("--domain", type=_json_obj)
    p.add_argument("--density", type=_json_obj)
    p.add_argument("--dim", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--h", type=float)
    p.add_argument("--r", type=int)
    for act in ("dist", "geodesic", "ball"):
        p = po.add_parser(act)
        _common(p)
        p.add_argument("--oracle")
        p.add_argument("--x", type=_point)
        if act == "ball":
            p.add_argument("--t", type=float)
        else:
            p.add_argument("--y", type=_point)
        if act != "dist":
            p.add_argument("--svg")

    pe = sub.add_parser("experiment", help="Monte Carlo experiments").add_subparsers(
        dest="action", required=True)
    for act in ("mu", "convergence", "geodesic", "shape", "knn", "manifold"):
        p = pe.add_parser(act)
        _common(p)
        p.add_argument("--alpha", type=float)
        p.add_argument("--dim", type=int)
        p.add_argument("--schedule", type=_floats)
        p.add_argument("--reps", type=int)
        p.add_argument("--density", type=_json_obj)
        p.add_argument("--domain", type=_json_obj)
        p.add_argument("--method", choices=["auto", "exact", "knn"])
        if act == "manifold":
            p.add_argument("--manifold", type=_json_obj)
        if act == "shape":
            p.add_argument("--t", type=float)
            p.add_argument("--mu-hat", dest="mu_hat", type=float)
            p.add_argument("--center", type=_floats)
        if act == "knn":
            p.add_argument("--k-grid", dest="k_grid", type=lambda s: [int(v) for v in _floats(s)])
            p.add_argument("--epsilon", type=float)
        if act == "mu":
            p.add_argument("--x", type=_floats)
            p.add_argument("--y", type=_floats)
    return ap


_RESERVED = {"command", "action", "config"}


def _merge(args, defaults: dict) -> argparse.Namespace:
    """Fill unset options from ``--config``, then from ``defaults``."""
    cfg = _load_config(args.config)
    known = set(vars(args)) - _RESERVED
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest not in known:
            raise ConfigError("unknown option for this command", field=key)
        if getattr(args, dest) is None:
            setattr(args, dest, value)
    for key, value in defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    return args


def _need(args, *names):
    for n in names:
        if getattr(args, n, None) is None:
            raise ConfigError("required option missing", field=n)


def _emit(obj, out=None):
    text = json.dumps(obj, indent=2, sort_keys=True, default=float)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def _cloud(args):
    _need(args, "cloud")
    return load_cloud_csv(args.cloud)


# -- commands --------------------------------------------------------------


def cmd_sample(args):
    args = _merge(args, {"seed": 0, "process": "poisson", "dim": 2})
    _need(args, "n", "out")
    if args.manifold is not None:
        man = make_manifold(args.manifold)
        dens = make_density(args.density or {"type": "uniform",
                                             "value": 1.0 / man.parameter_domain.volume},
                            man.parameter_domain, man.intrinsic_dim)
        batch = sample_manifold(man, dens, int(round(args.n)), args.seed)
    else:
        dom = make_domain(args.domain, args.dim)
        dens = make_density(args.density, dom, args.dim)
        fn = sample_iid if args.process == "iid" else sample_poisson
        n = int(round(args.n)) if args.process == "iid" else args.n
        batch = fn(dom, dens, n, args.seed)
    batch.save(args.out)
    print(json.dumps({"points": len(batch.cloud), "out": args.out}))


def cmd_dist(args):
    args = _merge(args, {"alpha": 2.0})
    _need(args, "x", "y")
    cloud = _cloud(args)
    res = exact_distance(cloud, args.alpha, _point(args.x), _point(args.y))
    st = path_statistics(res.path, cloud)
    obj = {"distance": res.distance, "path": list(res.path.particle_indices),
           "arc_length": st.arc_length, "hop_count": st.hop_count, "max_gap": st.max_gap}
    if args.beta is not None:
        obj["scaled"] = len(cloud) ** args.beta * res.distance
    _emit(obj, args.out)


def cmd_knn_dist(args):
    args = _merge(args, {"alpha": 2.0, "undirected": False})
    _need(args, "x", "y", "k")
    cloud = _cloud(args)
    index = SpatialIndex(cloud)
    g = build_knn_graph(cloud, args.k, args.alpha, bool(args.undirected), index)
    res = restricted_distance(g, cloud, args.alpha, _point(args.x), _point(args.y), index)
    _emit({"distance": res.distance, "path": list(res.path.particle_indices), "k": g.k},
          args.out)


def cmd_all_pairs(args):
    args = _merge(args, {"alpha": 2.0, "symmetrize": "none", "format": "csv",
                         "undirected": False})
    _need(args, "out")
    cloud = _cloud(args)
    if args.k is not None:
        g = build_knn_graph(cloud, args.k, args.alpha, bool(args.undirected))
        D = all_pairs_restricted(g, cloud, args.alpha, args.symmetrize)
    else:
        alpha = check_alpha(args.alpha)
        D = np.vstack([exact_from(cloud, alpha, s)[0] for s in range(len(cloud))])
    (write_matrix_bin if args.format == "bin" else write_matrix_csv)(D, args.out)
    print(json.dumps({"n": len(cloud), "out": args.out}))


def cmd_landmarks(args):
    args = _merge(args, {"alpha": 2.0, "seed": 0, "landmarks": 8, "pairs": 100,
                         "check": False})
    cloud = _cloud(args)
    n = len(cloud)
    rng = rng_stream(args.seed, "landmarks")
    lm = rng.choice(n, size=min(args.landmarks, n), replace=False)
    graph = build_knn_graph(cloud, args.k, args.alpha, undirected=True) if args.k else None
    L = distances_from_sources(cloud, args.alpha, lm, graph)
    rows = []
    for _ in range(args.pairs):
        i, j = (int(v) for v in rng.choice(n, size=2, replace=False))
        b = landmark_bounds(L, i, j)
        row = {"i": i, "j": j, "lower": b.lower, "upper": b.upper}
        if args.check:
            row["exact"] = float(exact_from(cloud, args.alpha, i, j)[0][j])
        rows.append(row)
    cols = ["i", "j", "lower", "upper"] + (["exact"] if args.check else [])
    if args.out:
        write_table(args.out, "landmarks", rows, cols,
                    {"landmarks": lm.tolist(), "alpha": args.alpha, "seed": args.seed,
                     "k": args.k})
    report = {"pairs": len(rows), "landmarks": lm.tolist()}
    if args.check:
        # with --k the bounds refer to the kNN metric, so exact values may fall outside
        report["outside_bounds"] = sum(not (r["lower"] <= r["exact"] * (1 + 1e-12) and
                                            r["exact"] <= r["upper"] * (1 + 1e-12)) for r in rows)
    print(json.dumps(report))


def cmd_ball(args):
    args = _merge(args, {"alpha": 2.0})
    _need(args, "x", "t")
    cloud = _cloud(args)
    index = SpatialIndex(cloud)
    g = build_knn_graph(cloud, args.k, args.alpha, index=index) if args.k else None
    idx = fermat_ball(cloud, args.alpha, _point(args.x), args.t, index, g)
    _emit({"size": int(len(idx)), "indices": idx.tolist()}, args.out)


def _load_oracle(path):
    head = json.loads(Path(path).read_text())
    dim = len(head["shape"])
    return GridOracle.load(path, make_domain(head["domain"], dim))


def cmd_oracle(args):
    if args.action == "build":
        args = _merge(args, {"dim": 2, "h": 0.005, "r": 4})
        _need(args, "out")
        dom = make_domain(args.domain, args.dim)
        dens = make_density(args.density, dom, args.dim)
        if args.beta is None:
            _need(args, "alpha")
            beta = Beta.from_alpha(args.alpha, dom.dim)
        else:
            beta = Beta(args.beta)
        o = build_grid_oracle(dom, dens, beta, args.h, args.r)
        o.save(args.out)
        print(json.dumps({"nodes": int(o.n_nodes), "edges": int(len(o.indices)),
                          "beta": o.beta, "out": args.out}))
        return
    args = _merge(args, {})
    _need(args, "oracle", "x")
    o = _load_oracle(args.oracle)
    x = _point(args.x)
    if args.action == "ball":
        _need(args, "t")
        ids = continuum_ball(o, x, args.t)
        pts = o.coords[ids]
        if args.out:
            write_points_csv(pts, args.out)
        if getattr(args, "svg", None) and o.dim == 2:
            write_svg(args.svg, point_sets=[pts], box=(o.domain.lower, o.domain.upper))
        print(json.dumps({"nodes": int(len(ids))}))
        return
    _need(args, "y")
    res = continuum_distance(o, x, _point(args.y))
    if args.action == "dist":
        _emit({"distance": res.distance, "h": res.grid_spacing, "r": res.stencil_radius},
              args.out)
        return
    if args.out:
        write_points_csv(res.geodesic, args.out)
    if getattr(args, "svg", None) and o.dim == 2:
        write_svg(args.svg, polylines=[res.geodesic], box=(o.domain.lower, o.domain.upper))
    print(json.dumps({"distance": res.distance, "vertices": int(len(res.geodesic))}))


_EXPERIMENTS = {"convergence": run_convergence, "geodesic": run_geodesic_convergence,
                "shape": run_shape, "knn": run_knn_sufficiency, "manifold": run_manifold}


def cmd_experiment(args):
    cfg = _load_config(args.config)
    over = {k: v for k, v in vars(args).items() if k not in _RESERVED and v is not None}
    if args.action == "mu":
        cfg = {**cfg, **over}
        known = {"alpha", "dim", "schedule", "reps", "seed", "x", "y", "method", "knn_c", "out",
                 "workers", "density", "domain"}
        for key in cfg:
            if key not in known:
                raise ConfigError("unknown option for experiment mu", field=key)
        if cfg.get("density") not in (None, {"type": "uniform"}) or cfg.get("domain"):
            raise ConfigError("mu is defined for the uniform density on the unit box",
                              field="density")
        base = ExperimentConfig(scenario="mu", alpha=cfg.get("alpha", 2.0),
                                dim=cfg.get("dim", 2),
                                schedule=cfg.get("schedule", [1e3, 4e3, 1.6e4, 6.4e4]),
                                reps=cfg.get("reps", 16), seed=cfg.get("seed", 0),
                                method=cfg.get("method", "auto"), knn_c=cfg.get("knn_c", 10.0))
        res = estimate_mu(base.alpha, base.dim, base.schedule, base.reps, base.seed,
                          cfg.get("x"), cfg.get("y"), base.method, base.knn_c,
                          cfg.get("workers"))
    else:
        over.setdefault("scenario", args.action)
        if args.action == "manifold" and "density" not in cfg and "density" not in over:
            over["density"] = None
        res = _EXPERIMENTS[args.action](ExperimentConfig.from_dict(cfg, **over))
    out = Path(args.out or cfg.get("out") or f"results/{args.action}")
    files = res.write(out)
    _plot(res, out)
    print(json.dumps({"outputs": [str(f) for f in files], "summary": res.summary},
                     default=float))


def _plot(res, out):
    s = res.summary
    if res.name in ("mu", "convergence"):
        key = "median"
        lo, hi = "q25", "q75"
    elif res.name == "manifold":
        key, lo, hi = "median_ratio", "median_ratio", "median_ratio"
    elif res.name == "geodesic":
        key, lo, hi = ("median_curve_distance",) * 3
    elif res.name == "shape":
        key, lo, hi = ("median_epsilon",) * 3
    else:
        return
    rows = [r for r in s if r.get("query", 0) == 0]
    write_band_svg(out / f"{res.name}.svg", [r["n"] for r in rows], [r[key] for r in rows],
                   [r[lo] for r in rows], [r[hi] for r in rows], ylabel=key)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    handler = {"sample": cmd_sample, "dist": cmd_dist, "knn-dist": cmd_knn_dist,
               "all-pairs": cmd_all_pairs, "landmarks": cmd_landmarks, "ball": cmd_ball,
               "oracle": cmd_oracle, "experiment": cmd_experiment}[args.command]
    try:
        handler(args)
    except (Unreachable, OracleUnreachable, ArithmeticError, FloatingPointError,
            np.linalg.LinAlgError) as e:
        print(f"fermat: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, TypeError, KeyError, OSError, argparse.ArgumentTypeError) as e:
        print(f"fermat: error: {e}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
