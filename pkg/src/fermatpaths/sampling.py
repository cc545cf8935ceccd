"""Random inputs: Poisson processes by thinning, i.i.d. rejection samples and
samples pushed onto isometrically embedded manifolds.

All randomness flows through :func:`rng_stream`, a Philox generator keyed by
``(seed, tag...)``. Two calls with the same key produce the same stream no
matter which process or thread makes them.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np

from .geometry import PointCloud, load_cloud_csv, save_cloud_csv


class SamplingError(ValueError):
    pass


def rng_stream(seed: int, *tags) -> np.random.Generator:
    """Independent Philox stream for ``seed`` and an arbitrary tag tuple."""
    digest = hashlib.blake2b(repr(tags).encode(), digest_size=16).digest()
    words = np.frombuffer(digest, dtype=np.uint32).tolist()
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *words])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class DomainSpec:
    """Open set S given by a bounding box and a vectorised membership test."""

    lower: np.ndarray
    upper: np.ndarray
    contains: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def volume(self) -> float:
        return float(np.prod(np.asarray(self.upper) - np.asarray(self.lower)))

    def inside(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        box = np.all((x > self.lower) & (x < self.upper), axis=1)
        return box & np.asarray(self.contains(x), dtype=bool)


@dataclass(frozen=True)
class DensityField:
    """Positive intensity on a domain with known bounds ``lower <= f <= upper``."""

    evaluate: Callable[[np.ndarray], np.ndarray]
    lower: float
    upper: float
    domain: DomainSpec
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lower > 0:
            raise SamplingError("density lower bound m_f must be positive")
        if self.upper < self.lower:
            raise SamplingError("density upper bound below lower bound")

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.asarray(self.evaluate(x), dtype=np.float64).reshape(x.shape[0])

    def scaled(self, c: float) -> "DensityField":
        f = self.evaluate
        return DensityField(lambda x: c * f(x), c * self.lower, c * self.upper, self.domain,
                            f"{self.name}*{c!r}", dict(self.params, scale=c))

    def spec(self) -> dict:
        return {"type": self.name, **self.params}


@dataclass(frozen=True)
class ManifoldSpec:
    """Isometric chart ``phi`` from a parameter domain in R^d into R^D."""

    intrinsic_dim: int
    ambient_dim: int
    chart: Callable[[np.ndarray], np.ndarray]
    parameter_domain: DomainSpec
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def jacobian(self, z, h: float = 1e-6) -> np.ndarray:
        """Central finite-difference Jacobians, shape (m, D, d)."""
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        cols = []
        for j in range(self.intrinsic_dim):
            e = np.zeros(self.intrinsic_dim)
            e[j] = h
            cols.append((self.chart(z + e) - self.chart(z - e)) / (2 * h))
        return np.stack(cols, axis=-1)

    def isometry_defect(self, m: int = 100, seed: int = 0) -> float:
        """Max entry of |J^T J - I| over ``m`` random interior parameter points."""
        rng = rng_stream(seed, "isometry", self.name)
        dom = self.parameter_domain
        lo, hi = np.asarray(dom.lower), np.asarray(dom.upper)
        z = lo + (hi - lo) * (0.05 + 0.9 * rng.random((m, self.intrinsic_dim)))
        J = self.jacobian(z)
        G = np.einsum("mki,mkj->mij", J, J)
        return float(np.abs(G - np.eye(self.intrinsic_dim)).max())

    def check_isometry(self, tol: float = 1e-6, m: int = 100, seed: int = 0) -> None:
        defect = self.isometry_defect(m, seed)
        if not defect < tol:
            raise SamplingError(f"chart {self.name!r} is not isometric: |J^T J - I| = {defect:.3g}")


class Provenance(str, Enum):
    POISSON_HOMOGENEOUS = "PoissonHomogeneous"
    POISSON_INHOMOGENEOUS = "PoissonInhomogeneous"
    IID_DENSITY = "IidDensity"
    IID_MANIFOLD = "IidManifold"


@dataclass(frozen=True, eq=False)
class SampleBatch:
    cloud: PointCloud
    n_target: float
    seed: int
    provenance: Provenance
    parameters: np.ndarray | None = None  # chart preimages for manifold samples
    meta: dict = field(default_factory=dict)

    def save(self, path) -> None:
        """Write ``path`` (CSV points) and ``path.json`` (seed, provenance, meta)."""
        path = Path(path)
        save_cloud_csv(self.cloud, path)
        side = {"seed": int(self.seed), "n_target": self.n_target,
                "provenance": self.provenance.value, **self.meta}
        if self.parameters is not None:
            side["parameters"] = self.parameters.tolist()
        path.with_name(path.name + ".json").write_text(json.dumps(side, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "SampleBatch":
        path = Path(path)
        side = json.loads(path.with_name(path.name + ".json").read_text())
        params = side.pop("parameters", None)
        return cls(load_cloud_csv(path), side.pop("n_target"), side.pop("seed"),
                   Provenance(side.pop("provenance")),
                   None if params is None else np.asarray(params, dtype=np.float64), side)


def _box(domain: DomainSpec):
    return np.asarray(domain.lower, dtype=np.float64), np.asarray(domain.upper, dtype=np.float64)


def sample_poisson(domain: DomainSpec, intensity: DensityField, n: float, seed: int,
                   tag=()) -> SampleBatch:
    """Poisson process on ``domain`` with intensity ``n * f``, by thinning.

    A homogeneous process with intensity ``n * M_f`` on the bounding box is
    drawn first; each point survives with probability ``f(x) / M_f`` if it
    lies in the domain.
    """
    if not n > 0:
        raise SamplingError("intensity multiplier n must be positive")
    rng = rng_stream(seed, "poisson", *tag)
    lo, hi = _box(domain)
    count = rng.poisson(n * intensity.upper * domain.volume)
    x = lo + (hi - lo) * rng.random((count, len(lo)))
    u = rng.random(count)
    inside = domain.inside(x)
    f = np.zeros(count)
    f[inside] = intensity(x[inside])
    if np.any(f > intensity.upper * (1 + 1e-12)):
        raise SamplingError(f"density exceeds its declared upper bound M_f={intensity.upper}")
    keep = inside & (u * intensity.upper < f)
    homogeneous = intensity.lower == intensity.upper
    prov = Provenance.POISSON_HOMOGENEOUS if homogeneous else Provenance.POISSON_INHOMOGENEOUS
    return SampleBatch(PointCloud(x[keep].reshape(-1, len(lo))), float(n), seed, prov,
                       meta={"density": intensity.spec(), "tag": list(tag)})


def check_normalised(density: DensityField, rtol: float = 0.02, cells: int = 200_000) -> float:
    """Midpoint-rule integral of ``density`` over its domain (d <= 3); warns when far from 1."""
    dom = density.domain
    if dom.dim > 3:
        return float("nan")
    lo, hi = _box(dom)
    per = max(2, int(round(cells ** (1.0 / dom.dim))))
    axes = [l + (h - l) * (np.arange(per) + 0.5) / per for l, h in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dom.dim)
    vals = np.where(dom.inside(grid), density(grid), 0.0)
    total = float(vals.mean() * dom.volume)
    if abs(total - 1.0) > rtol:
        warnings.warn(f"density {density.name!r} integrates to {total:.4g}, not 1", stacklevel=2)
    return total


def sample_iid(domain: DomainSpec, density: DensityField, n: int, seed: int, tag=(),
               min_acceptance: float = 1e-6, window: int = 10_000_000) -> SampleBatch:
    """Exactly ``n`` i.i.d. points from ``density`` by rejection under ``M_f``."""
    n = int(n)
    if n < 1:
        raise SamplingError("n must be a positive integer")
    rng = rng_stream(seed, "iid", *tag)
    lo, hi = _box(domain)
    out = []
    got = 0
    proposed = accepted_in_window = proposed_in_window = 0
    while got < n:
        chunk = max(1024, 2 * (n - got))
        x = lo + (hi - lo) * rng.random((chunk, len(lo)))
        u = rng.random(chunk)
        inside = domain.inside(x)
        f = np.zeros(chunk)
        f[inside] = density(x[inside])
        if np.any(f > density.upper * (1 + 1e-12)):
            raise SamplingError(f"density exceeds its declared upper bound M_f={density.upper}")
        acc = x[inside & (u * density.upper < f)]
        out.append(acc[: n - got])
        got += min(len(acc), n - got)
        proposed += chunk
        proposed_in_window += chunk
        accepted_in_window += len(acc)
        if proposed_in_window >= window:
            if accepted_in_window < min_acceptance * proposed_in_window:
                raise SamplingError("rejection acceptance rate below threshold; envelope too loose")
            proposed_in_window = accepted_in_window = 0
    pts = np.concatenate(out, axis=0)
    return SampleBatch(PointCloud(pts), n, seed, Provenance.IID_DENSITY,
                       meta={"density": density.spec(), "tag": list(tag)})


def sample_manifold(manifold: ManifoldSpec, density_on_chart: DensityField, n: int, seed: int,
                    tag=()) -> SampleBatch:
    """i.i.d. parameter points mapped through the chart into R^D."""
    base = sample_iid(manifold.parameter_domain, density_on_chart, n, seed, tag=tag)
    z = base.cloud.points
    x = np.asarray(manifold.chart(z), dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise SamplingError(f"chart {manifold.name!r} produced non-finite coordinates")
    return SampleBatch(PointCloud(x), n, seed, Provenance.IID_MANIFOLD, parameters=z.copy(),
                       meta={"density": density_on_chart.spec(), "manifold": manifold.name,
                             "manifold_params": manifold.params, "tag": list(tag)})
