"""Named domains, densities and manifolds, constructible from JSON objects.

Every entry has a closed-form or oracle-computable continuum answer, which is
what the experiments need. Example density spec::

    {"type": "gauss_bump", "center": [0.5, 0.5], "sigma": 0.15, "floor": 0.2}
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from .sampling import DensityField, DomainSpec, ManifoldSpec, SamplingError


class CatalogError(SamplingError):
    """Unknown catalog entry or malformed parameter object; ``field`` names the culprit."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


def _param(spec, key, default=None, required=False):
    if key in spec:
        return spec[key]
    if required:
        raise CatalogError(f"missing parameter {key!r}", field=key)
    return default


def _vector(spec, key, dim=None, default=None):
    v = _param(spec, key, default, required=default is None)
    try:
        arr = np.asarray(v, dtype=np.float64).reshape(-1)
    except (TypeError, ValueError):
        raise CatalogError(f"parameter {key!r} must be a list of numbers", field=key) from None
    if dim is not None and arr.shape[0] != dim:
        raise CatalogError(f"parameter {key!r} must have length {dim}", field=key)
    return arr


def _number(spec, key, default=None, positive=False):
    v = _param(spec, key, default, required=default is None)
    try:
        v = float(v)
    except (TypeError, ValueError):
        raise CatalogError(f"parameter {key!r} must be a number", field=key) from None
    if positive and not v > 0:
        raise CatalogError(f"parameter {key!r} must be positive", field=key)
    return v


def _everywhere(x):
    return np.ones(len(x), dtype=bool)


# -- domains ---------------------------------------------------------------


def box(lower, upper) -> DomainSpec:
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    if lower.shape != upper.shape or np.any(upper <= lower):
        raise CatalogError("box needs lower < upper componentwise", field="upper")
    return DomainSpec(lower, upper, _everywhere, "box",
                      {"lower": lower.tolist(), "upper": upper.tolist()})


def unit_box(dim: int) -> DomainSpec:
    return box(np.zeros(dim), np.ones(dim))


def disk(center, radius) -> DomainSpec:
    center = np.asarray(center, dtype=np.float64)
    radius = float(radius)

    def contains(x):
        return np.sum((x - center) ** 2, axis=1) < radius * radius

    return DomainSpec(center - radius, center + radius, contains, "disk",
                      {"center": center.tolist(), "radius": radius})


def make_domain(spec: dict | None, dim: int = 2) -> DomainSpec:
    spec = spec or {"type": "box"}
    kind = spec.get("type", "box")
    if kind == "box":
        lower = _vector(spec, "lower", default=np.zeros(dim))
        upper = _vector(spec, "upper", len(lower), default=np.ones(len(lower)))
        return box(lower, upper)
    if kind == "disk":
        return disk(_vector(spec, "center"), _number(spec, "radius", positive=True))
    raise CatalogError(f"unknown domain type {kind!r}", field="type")


# -- densities -------------------------------------------------------------


def uniform(domain: DomainSpec, value: float = 1.0) -> DensityField:
    value = float(value)

    def f(x):
        return np.full(len(x), value)

    return DensityField(f, value, value, domain, "uniform", {"value": value})


def two_value(domain: DomainSpec, a: float = 1.0, b: float = 4.0, axis: int = 1,
              split: float = 0.5) -> DensityField:
    """``a`` where ``x[axis] < split`` and ``b`` elsewhere."""

    def f(x):
        return np.where(x[:, axis] < split, a, b)

    return DensityField(f, min(a, b), max(a, b), domain, "two_value",
                        {"a": a, "b": b, "axis": axis, "split": split})


def gauss_bump(domain: DomainSpec, center=(0.5, 0.5), sigma: float = 0.15,
               floor: float = 0.2, height: float = 1.0) -> DensityField:
    """``floor + height * exp(-|x - center|^2 / (2 sigma^2))``."""
    center = np.asarray(center, dtype=np.float64)

    def f(x):
        return floor + height * np.exp(-np.sum((x - center) ** 2, axis=1) / (2 * sigma * sigma))

    return DensityField(f, floor, floor + height, domain, "gauss_bump",
                        {"center": center.tolist(), "sigma": sigma, "floor": floor,
                         "height": height})


def gauss_mixture_1d(lower: float = -5.0, upper: float = 15.0, means=(0.0, 10.0),
                     variances=(1.0, 2.0), weights=(0.5, 0.5)) -> DensityField:
    """Gaussian mixture truncated to ``[lower, upper]`` and renormalised."""
    means = np.asarray(means, dtype=np.float64)
    sd = np.sqrt(np.asarray(variances, dtype=np.float64))
    w = np.asarray(weights, dtype=np.float64)
    w = w / w.sum()

    def raw_cdf(t):
        t = np.asarray(t, dtype=np.float64)[..., None]
        return np.sum(w * 0.5 * (1 + erf((t - means) / (sd * np.sqrt(2)))), axis=-1)

    mass = float(raw_cdf(upper) - raw_cdf(lower))

    def f(x):
        t = x[:, 0][:, None]
        pdf = np.sum(w * np.exp(-0.5 * ((t - means) / sd) ** 2) / (sd * np.sqrt(2 * np.pi)), axis=1)
        return pdf / mass

    grid = np.linspace(lower, upper, 20001)
    vals = f(grid[:, None])
    dens = DensityField(f, float(vals.min()), float(vals.max()) * 1.001,
                        box([lower], [upper]), "gauss_mixture_1d",
                        {"lower": lower, "upper": upper, "means": means.tolist(),
                         "variances": (sd ** 2).tolist(), "weights": w.tolist()})
    object.__setattr__(dens, "cdf", lambda t: (raw_cdf(t) - raw_cdf(lower)) / mass)
    return dens


def make_density(spec: dict | None, domain: DomainSpec | None = None, dim: int = 2) -> DensityField:
    spec = dict(spec or {"type": "uniform"})
    kind = spec.get("type", "uniform")
    if kind == "gauss_mixture_1d":
        return gauss_mixture_1d(_number(spec, "lower", -5.0), _number(spec, "upper", 15.0),
                                _param(spec, "means", (0.0, 10.0)),
                                _param(spec, "variances", (1.0, 2.0)),
                                _param(spec, "weights", (0.5, 0.5)))
    if domain is None:
        domain = make_domain(spec.get("domain"), dim)
    if kind == "uniform":
        return uniform(domain, _number(spec, "value", 1.0, positive=True))
    if kind == "two_value":
        axis = int(_number(spec, "axis", 1))
        if not 0 <= axis < domain.dim:
            raise CatalogError("axis out of range", field="axis")
        return two_value(domain, _number(spec, "a", 1.0, positive=True),
                         _number(spec, "b", 4.0, positive=True), axis,
                         _number(spec, "split", 0.5))
    if kind == "gauss_bump":
        return gauss_bump(domain, _vector(spec, "center", domain.dim, default=[0.5] * domain.dim),
                          _number(spec, "sigma", 0.15, positive=True),
                          _number(spec, "floor", 0.2, positive=True),
                          _number(spec, "height", 1.0, positive=True))
    raise CatalogError(f"unknown density type {kind!r}", field="type")


# -- manifolds -------------------------------------------------------------


def rotated_plane(angles=(0.3, -0.7, 1.1)) -> ManifoldSpec:
    """[0,1]^2 placed in R^3 by a fixed rotation."""
    a, b, c = angles
    rx = np.array([[1, 0, 0], [0, np.cos(a), -np.sin(a)], [0, np.sin(a), np.cos(a)]])
    ry = np.array([[np.cos(b), 0, np.sin(b)], [0, 1, 0], [-np.sin(b), 0, np.cos(b)]])
    rz = np.array([[np.cos(c), -np.sin(c), 0], [np.sin(c), np.cos(c), 0], [0, 0, 1]])
    R = rz @ ry @ rx

    def chart(z):
        z = np.atleast_2d(z)
        return np.column_stack([z, np.zeros(len(z))]) @ R.T

    return ManifoldSpec(2, 3, chart, unit_box(2), "rotated_plane", {"angles": list(angles)})


def identity_manifold(dim: int) -> ManifoldSpec:
    return ManifoldSpec(dim, dim, lambda z: np.array(np.atleast_2d(z), dtype=np.float64),
                        unit_box(dim), "identity", {"dim": dim})


class _Spiral:
    """Archimedean spiral r = pitch * theta parametrised by arc length."""

    def __init__(self, pitch, theta0):
        self.b = pitch
        self.theta0 = theta0
        self.s0 = self._s(theta0)

    def _s(self, theta):
        b = self.b
        r = b * theta
        root = np.sqrt(r * r + b * b)
        return (r * root + b * b * np.arcsinh(r / b)) / (2 * b)

    def arc(self, theta):
        return self._s(theta) - self.s0

    def theta(self, u):
        u = np.asarray(u, dtype=np.float64)
        b = self.b
        # start from the large-radius asymptote s ~ b theta^2 / 2
        th = np.sqrt(self.theta0 ** 2 + 2 * u / b)
        for _ in range(60):
            step = (self.arc(th) - u) / (b * np.sqrt(th * th + 1))
            th = th - step
            if np.all(np.abs(step) <= 1e-15 * np.maximum(1.0, np.abs(th))):
                break
        return th


def swiss_roll(turns: float = 1.0, pitch: float = 0.08, theta0: float = np.pi,
               width: float = 1.0) -> ManifoldSpec:
    """Unit-speed Swiss roll ``(r cos t, v, r sin t)`` with ``r = pitch * t``.

    The first parameter is arc length along the spiral, so the chart is an
    isometry of ``[0, L] x [0, width]``.
    """
    spiral = _Spiral(pitch, theta0)
    length = float(spiral.arc(theta0 + 2 * np.pi * turns))

    def chart(z):
        z = np.atleast_2d(z)
        th = spiral.theta(z[:, 0])
        r = pitch * th
        return np.column_stack([r * np.cos(th), z[:, 1], r * np.sin(th)])

    dom = box([0.0, 0.0], [length, width])
    return ManifoldSpec(2, 3, chart, dom, "swiss_roll",
                        {"turns": turns, "pitch": pitch, "theta0": theta0, "width": width,
                         "length": length})


def make_manifold(spec: dict | None) -> ManifoldSpec:
    spec = spec or {"type": "swiss_roll"}
    kind = spec.get("type", "swiss_roll")
    if kind == "swiss_roll":
        return swiss_roll(_number(spec, "turns", 1.0, positive=True),
                          _number(spec, "pitch", 0.08, positive=True),
                          _number(spec, "theta0", float(np.pi), positive=True),
                          _number(spec, "width", 1.0, positive=True))
    if kind == "rotated_plane":
        return rotated_plane(tuple(_vector(spec, "angles", 3, default=[0.3, -0.7, 1.1])))
    if kind == "identity":
        return identity_manifold(int(_number(spec, "dim", 2, positive=True)))
    raise CatalogError(f"unknown manifold type {kind!r}", field="type")
