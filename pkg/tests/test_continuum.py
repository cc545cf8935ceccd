import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fermatpaths.catalog import disk, gauss_bump, two_value, uniform, unit_box
from fermatpaths.continuum import (Beta, GridOracle, OracleError, OracleUnreachable,
                                   build_grid_oracle, continuum_ball, continuum_distance,
                                   continuum_geodesic, stencil, write_svg)
from fermatpaths.sampling import DomainSpec

from oracles import snell_two_media

BOX = unit_box(2)


@pytest.fixture(scope="module")
def flat():
    return build_grid_oracle(BOX, uniform(BOX, 2.0), Beta(0.5), 1 / 100)


@pytest.fixture(scope="module")
def media():
    return build_grid_oracle(BOX, two_value(BOX, 1.0, 4.0), Beta(0.5), 1 / 100)


def _edge(o, u, v):
    s, e = o.indptr[u], o.indptr[u + 1]
    hit = np.flatnonzero(o.indices[s:e] == v)
    return float(o.weights[s + hit[0]])


def _node(o, p):
    return o.snap(p)


def test_beta_from_alpha():
    assert Beta.from_alpha(3.0, 2).value == 1.0
    assert Beta.from_alpha(2.0, 3).value == pytest.approx(1 / 3)
    with pytest.raises(Exception):
        Beta(-0.1)


def test_stencil_counts():
    assert len(stencil(2, 1)) == 4  # half of the 8 king moves
    assert len(stencil(2, 3)) == 24
    assert len(stencil(3, 1)) == 13


def test_diagonal_edge_weight(flat):
    o = build_grid_oracle(BOX, uniform(BOX, 1.0), Beta(0.7), 0.1)
    w = _edge(o, _node(o, [0, 0]), _node(o, [0.1, 0.1]))
    assert w == pytest.approx(np.sqrt(2) * 0.1, rel=1e-12)


def test_constant_density_weights_are_scaled_lengths(flat):
    u = _node(flat, [0.5, 0.5])
    for e in range(flat.indptr[u], flat.indptr[u + 1]):
        v = flat.indices[e]
        length = np.linalg.norm(flat.coords[v] - flat.coords[u])
        assert flat.weights[e] == pytest.approx(2.0 ** -0.5 * length, rel=1e-12)


def test_weights_are_symmetric(media):
    rng = np.random.default_rng(0)
    for u in rng.choice(media.n_nodes, 30, replace=False):
        for e in range(media.indptr[u], media.indptr[u + 1]):
            assert _edge(media, media.indices[e], u) == media.weights[e]


def test_beta_zero_ignores_density():
    a = build_grid_oracle(BOX, two_value(BOX), Beta(0.0), 0.05)
    b = build_grid_oracle(BOX, gauss_bump(BOX), Beta(0.0), 0.05)
    assert np.array_equal(a.weights, b.weights)
    d = continuum_distance(a, [0.1, 0.2], [0.9, 0.7]).distance
    assert d == pytest.approx(np.hypot(0.8, 0.5), rel=0.01)


def test_constant_region_edge(media):
    w = _edge(media, _node(media, [0.25, 0.25]), _node(media, [0.26, 0.25]))
    assert w == pytest.approx(0.01, rel=1e-12)


def test_constant_density_distance(flat):
    x, y = [0.1, 0.2], [0.85, 0.6]
    d = continuum_distance(flat, x, y).distance
    assert d == pytest.approx(2.0 ** -0.5 * np.hypot(0.75, 0.4), rel=0.01)


def test_distance_equals_sum_of_edges(media):
    r = continuum_distance(media, [0.2, 0.25], [0.8, 0.75])
    nodes = [media.snap(p) for p in r.geodesic]
    total = 0.0
    for u, v in zip(nodes, nodes[1:]):
        total += _edge(media, u, v)
    assert total == pytest.approx(r.distance, rel=1e-12)
    assert r.grid_spacing == media.h and r.stencil_radius == media.radius


def test_snell_refraction(media):
    x, y = [0.2, 0.2], [0.8, 0.8]
    ref = snell_two_media(x, y, 1.0, 4.0, 0.5)
    assert continuum_distance(media, x, y).distance == pytest.approx(ref, rel=0.01)


def test_straight_geodesic_within_one_cell(flat):
    x, y = np.array([0.1, 0.3]), np.array([0.9, 0.7])
    g = continuum_geodesic(flat, x, y)
    e = (y - x) / np.linalg.norm(y - x)
    off = (g - x) - np.outer((g - x) @ e, e)
    assert np.max(np.linalg.norm(off, axis=1)) <= flat.h * np.sqrt(2)


def test_geodesic_bends_toward_bump():
    dens = gauss_bump(BOX, [0.5, 0.6])
    x, y = np.array([0.1, 0.3]), np.array([0.9, 0.3])
    o = build_grid_oracle(BOX, dens, Beta(1.0), 0.01)
    fine = build_grid_oracle(BOX, dens, Beta(1.0), 0.005)
    dev = continuum_geodesic(o, x, y)[:, 1].max() - 0.3
    dev_fine = continuum_geodesic(fine, x, y)[:, 1].max() - 0.3
    assert dev > 2 * o.h
    assert dev == pytest.approx(dev_fine, abs=2 * o.h)


def test_ball_constant_density_is_a_disk(flat):
    x = np.array([0.5, 0.5])
    t = 0.2
    ids = continuum_ball(flat, x, t)
    r = np.linalg.norm(flat.coords[ids] - x, axis=1)
    # radius t * f^beta = t * sqrt(2)
    R = t * np.sqrt(2.0)
    assert r.max() <= R * 1.01
    all_r = np.linalg.norm(flat.coords - x, axis=1)
    assert set(np.flatnonzero(all_r < R * 0.99)) <= set(ids.tolist())


def test_ball_tiny_radius(flat):
    ids = continuum_ball(flat, [0.5, 0.5], 1e-9)
    assert ids.tolist() == [flat.snap([0.5, 0.5])]
    with pytest.raises(OracleError):
        continuum_ball(flat, [0.5, 0.5], 0.0)


def test_ball_two_media_radius_ratio(media):
    x = np.array([0.5, 0.5])
    ids = continuum_ball(media, x, 0.1)
    off = media.coords[ids] - x
    axis = off[np.abs(off[:, 0]) < 1e-9, 1]
    up, down = axis.max(), -axis.min()
    # radius t * f^beta in each medium
    assert up / down == pytest.approx(2.0, rel=0.03)


def test_scaling_law(media):
    scaled = build_grid_oracle(BOX, two_value(BOX, 1.0, 4.0).scaled(9.0), Beta(0.5), 1 / 100)
    for x, y in (([0.1, 0.1], [0.9, 0.8]), ([0.3, 0.7], [0.6, 0.2])):
        a = continuum_distance(media, x, y).distance
        b = continuum_distance(scaled, x, y).distance
        assert b == pytest.approx(a * 9.0 ** -0.5, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.01, 0.99), min_size=6, max_size=6))
def test_symmetry_and_triangle(media, c):
    x, y, z = np.array(c).reshape(3, 2)
    dxy = continuum_distance(media, x, y).distance
    assert dxy == continuum_distance(media, y, x).distance
    dxz = continuum_distance(media, x, z).distance
    dzy = continuum_distance(media, z, y).distance
    assert dxy <= dxz + dzy + 1e-12


def test_refinement_is_monotone():
    dens = two_value(BOX, 1.0, 4.0)
    x, y = [0.2, 0.2], [0.8, 0.8]
    vals = [continuum_distance(build_grid_oracle(BOX, dens, Beta(0.5), h), x, y).distance
            for h in (1 / 50, 1 / 100, 1 / 200)]
    steps = np.diff(vals)
    assert np.all(np.abs(steps) < 0.01 * vals[-1])
    assert abs(steps[1]) < abs(steps[0])


def test_segments_leaving_the_domain_are_dropped():
    d = disk([0.5, 0.5], 0.45)
    o = build_grid_oracle(d, uniform(d), Beta(0.5), 0.02)
    for u in range(0, o.n_nodes, 37):
        for e in range(o.indptr[u], o.indptr[u + 1]):
            mid = 0.5 * (o.coords[u] + o.coords[o.indices[e]])
            assert np.linalg.norm(mid - 0.5) <= 0.45 + 1e-12


def test_node_cap():
    with pytest.raises(OracleError, match="larger h"):
        build_grid_oracle(BOX, uniform(BOX), Beta(0.5), 1e-3, node_cap=1000)


def test_outside_point_and_disconnected_domain():
    with pytest.raises(OracleError):
        continuum_distance(build_grid_oracle(BOX, uniform(BOX), Beta(0.5), 0.1), [1.5, 0.5],
                           [0.5, 0.5])
    two = DomainSpec(np.zeros(2), np.ones(2), lambda x: np.abs(x[:, 0] - 0.5) > 0.2, "split")
    o = build_grid_oracle(two, uniform(two), Beta(0.5), 0.05, r=1)
    with pytest.raises(OracleUnreachable):
        continuum_distance(o, [0.1, 0.5], [0.9, 0.5])


def test_persistence_round_trip(tmp_path, media):
    media.save(tmp_path / "o.json")
    back = GridOracle.load(tmp_path / "o.json", BOX)
    assert np.array_equal(back.weights, media.weights)
    assert back.header["density"]["type"] == "two_value"
    x, y = [0.2, 0.3], [0.7, 0.9]
    assert continuum_distance(back, x, y).distance == continuum_distance(media, x, y).distance


def test_svg_export(tmp_path, flat):
    g = continuum_geodesic(flat, [0.1, 0.1], [0.9, 0.9])
    write_svg(tmp_path / "g.svg", polylines=[g], point_sets=[g[::5]])
    text = (tmp_path / "g.svg").read_text()
    assert text.startswith("<svg") and "<polyline" in text
