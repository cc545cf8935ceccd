import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fermatpaths.geometry import (FermatPath, GeometryError, PointCloud, SpatialIndex, build_index,
                                  curve_distance, knn, load_cloud_csv, resample_polyline,
                                  save_cloud_csv, voronoi_anchor)

from oracles import brute_knn, brute_nearest


def cloud(pts):
    return PointCloud(np.asarray(pts, dtype=float))


# -- PointCloud ------------------------------------------------------------


def test_cloud_is_read_only_and_keeps_order():
    raw = np.array([[0.3, 0.1], [0.0, 0.0], [0.2, 0.9]])
    c = PointCloud(raw)
    raw[0, 0] = 99.0
    assert c.points[0, 0] == 0.3
    with pytest.raises(ValueError):
        c.points[0, 0] = 1.0
    assert len(c) == 3 and c.ambient_dim == 2


def test_cloud_rejects_non_finite():
    with pytest.raises(GeometryError):
        PointCloud([[0.0, np.nan]])


def test_one_dimensional_input_is_a_column():
    assert cloud([0.0, 1.0, 3.0]).ambient_dim == 1


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    c = cloud(rng.random((17, 3)))
    save_cloud_csv(c, tmp_path / "c.csv")
    back = load_cloud_csv(tmp_path / "c.csv")
    assert np.array_equal(back.points, c.points)


def test_csv_rejects_ragged_rows(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("0.1,0.2\n0.3\n")
    with pytest.raises(GeometryError):
        load_cloud_csv(p)


# -- index and anchors -----------------------------------------------------


def test_empty_cloud_cannot_be_indexed():
    with pytest.raises(GeometryError):
        build_index(PointCloud(np.empty((0, 2))))


def test_single_point_cloud_anchor():
    c = cloud([[0.3, 0.7]])
    assert voronoi_anchor(c, [5.0, -2.0]) == 0


def test_strictly_closer_point_wins():
    assert voronoi_anchor(cloud([[0, 0], [1, 0]]), [0.4, 0]) == 0
    assert voronoi_anchor(cloud([[0, 0], [2, 0]]), [0.1, 0]) == 0


def test_anchor_of_a_particle_is_itself():
    c = cloud([[0.5, 0.5], [0.1, 0.2], [0.9, 0.3]])
    assert voronoi_anchor(c, [0.1, 0.2]) == 1


def test_equidistant_anchor_uses_lexicographic_order():
    assert voronoi_anchor(cloud([[0, 0], [2, 0]]), [1, 0]) == 0
    assert voronoi_anchor(cloud([[2, 0], [0, 0]]), [1, 0]) == 1


def test_duplicate_points_are_ordered_by_index():
    c = cloud([[1.0, 1.0], [0.0, 0.0], [0.0, 0.0]])
    assert voronoi_anchor(c, [0.0, 0.0]) == 1
    assert knn(c, 1, 1).tolist() == [2]


def test_anchor_dimension_mismatch():
    with pytest.raises(GeometryError):
        voronoi_anchor(cloud([[0, 0]]), [0.0, 0.0, 0.0])


def test_index_matches_brute_force_2d():
    rng = np.random.default_rng(1)
    pts = rng.random((100, 2))
    c = cloud(pts)
    idx = SpatialIndex(c)
    for q in rng.random((50, 2)):
        assert idx.nearest(q) == brute_nearest(pts, q)
    for i in rng.choice(100, 50, replace=False):
        assert idx.knn(i, 5).tolist() == brute_knn(pts, i, 5)


def test_knn_all_matches_brute_force_3d():
    rng = np.random.default_rng(2)
    pts = rng.random((200, 3))
    table = SpatialIndex(cloud(pts)).knn_all(10)
    for i in range(200):
        assert table[i].tolist() == brute_knn(pts, i, 10)


def test_knn_with_lattice_ties_matches_brute_force():
    g = np.array([[i, j] for i in range(6) for j in range(6)], dtype=float)
    table = SpatialIndex(cloud(g)).knn_all(8)
    for i in range(len(g)):
        assert table[i].tolist() == brute_knn(g, i, 8)


def test_high_dimensional_brute_force_path():
    rng = np.random.default_rng(3)
    pts = rng.random((60, 20))
    idx = SpatialIndex(cloud(pts))
    for i in range(0, 60, 7):
        assert idx.knn(i, 6).tolist() == brute_knn(pts, i, 6)
    q = rng.random(20)
    assert idx.nearest(q) == brute_nearest(pts, q)


def test_collinear_knn():
    c = cloud([0.0, 1.0, 3.0])
    assert knn(c, 0, 2).tolist() == [1, 2]


def test_knn_k_equal_n_minus_one_is_full_sort():
    c = cloud([0.0, 5.0, 1.0, 2.5, -1.2])
    assert knn(c, 0, 4).tolist() == [2, 4, 3, 1]


@pytest.mark.parametrize("k", [0, 5, 9])
def test_knn_rejects_bad_k(k):
    c = cloud([0.0, 1.0, 3.0, 4.0, 7.0])
    with pytest.raises(GeometryError):
        knn(c, 0, k)


@settings(max_examples=40, deadline=None)
@given(st.integers(5, 60), st.integers(0, 10_000), st.integers(1, 3))
def test_knn_prefix_and_nesting(n, seed, d):
    rng = np.random.default_rng(seed)
    pts = np.round(rng.random((n, d)), 2)  # coarse grid forces ties
    idx = SpatialIndex(cloud(pts))
    i = int(rng.integers(n))
    prev = None
    for k in range(1, n):
        nb = idx.knn(i, k)
        dist = np.linalg.norm(pts[nb] - pts[i], axis=1)
        assert np.all(np.diff(dist) >= 0)
        if prev is not None:
            assert nb[:-1].tolist() == prev.tolist()
        prev = nb


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 80), st.integers(0, 10_000))
def test_anchor_is_minimal(n, seed):
    rng = np.random.default_rng(seed)
    pts = rng.random((n, 2))
    x = rng.random(2) * 1.4 - 0.2
    a = voronoi_anchor(cloud(pts), x)
    d = np.linalg.norm(pts - x, axis=1)
    assert d[a] <= d.min() * (1 + 1e-15)


# -- paths -----------------------------------------------------------------


def test_path_cost_and_arc_length():
    c = cloud([0.0, 0.5, 1.0])
    p = FermatPath.from_indices(c, [0, 1, 2], 2.0)
    assert p.cost == 0.5 and p.arc_length == 1.0


def test_path_rejects_repeats_and_empty():
    c = cloud([0.0, 0.5])
    with pytest.raises(GeometryError):
        FermatPath.from_indices(c, [0, 0, 1], 2.0)
    with pytest.raises(GeometryError):
        FermatPath.from_indices(c, [], 2.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 30), st.integers(0, 10_000), st.floats(1.0, 6.0))
def test_path_invariants(k, seed, alpha):
    rng = np.random.default_rng(seed)
    pts = rng.random((40, 3))
    idx = rng.choice(40, size=k, replace=False)
    p = FermatPath.from_indices(cloud(pts), idx, alpha)
    gaps = np.linalg.norm(np.diff(pts[idx], axis=0), axis=1)
    assert p.cost == pytest.approx(np.sum(gaps ** alpha), rel=1e-12)
    assert p.arc_length >= np.linalg.norm(pts[idx[-1]] - pts[idx[0]]) * (1 - 1e-12)


# -- curve metric ----------------------------------------------------------


def test_identical_curves_have_distance_zero():
    g = np.array([[0, 0], [0.3, 0.5], [1, 0.2]])
    assert curve_distance(g, g) == 0.0


def test_parallel_segments():
    assert curve_distance([[0, 0], [1, 0]], [[0, 1], [1, 1]]) == pytest.approx(1.0, abs=1e-15)


def test_reversed_segment_is_the_same_curve():
    assert curve_distance([[0, 0], [1, 0]], [[1, 0], [0, 0]]) == 0.0


def test_reversed_polyline_exactly_zero():
    rng = np.random.default_rng(5)
    g = rng.random((13, 2))
    assert curve_distance(g, g[::-1]) == 0.0


def test_resampling_is_uniform_in_arc_length():
    r = resample_polyline(np.array([[0, 0], [1, 0], [1, 1]]), 5)
    assert np.allclose(r, [[0, 0], [0.5, 0], [1, 0], [1, 0.5], [1, 1]])


def test_curve_distance_errors():
    with pytest.raises(GeometryError):
        curve_distance(np.empty((0, 2)), [[0, 0]])
    with pytest.raises(GeometryError):
        curve_distance([[0, 0]], [[1, 1]], resolution=1)


def test_single_vertex_curves():
    assert curve_distance([[0, 0]], [[3, 4]]) == pytest.approx(5.0)


def _random_curve(rng):
    return rng.random((int(rng.integers(1, 8)), 2))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_curve_distance_symmetry_and_triangle(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (_random_curve(rng) for _ in range(3))
    ab, ba = curve_distance(a, b, 64), curve_distance(b, a, 64)
    assert ab == ba
    assert curve_distance(a, c, 64) <= ab + curve_distance(b, c, 64) + 1e-12


def test_curve_distance_resolution_convergence():
    # quarter circle vs its chord, true Frechet distance is the sagitta 1 - 1/sqrt(2)
    t = np.linspace(0, np.pi / 2, 400)
    arc = np.column_stack([np.cos(t), np.sin(t)])
    chord = np.array([[1.0, 0.0], [0.0, 1.0]])
    vals = [curve_distance(arc, chord, m) for m in (16, 64, 256)]
    target = 1 - 1 / np.sqrt(2)
    assert abs(vals[-1] - target) < 0.01
    assert abs(vals[-1] - target) <= abs(vals[0] - target) + 1e-12
