import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentmol.analysis import (
    build_knn,
    dirichlet_energy,
    fit_metrics,
    landscape_slice,
    local_pearson,
    random_plane,
    read_metrics,
    write_landscape,
    write_metrics,
)
from latentmol.errors import DegenerateSet, DimMismatch, TooFewPoints


def quadratic_form(graph, y):
    return float(y @ (graph.laplacian().toarray() @ y)) / len(y)


def brute_knn(points, k):
    d = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(-1))
    out = []
    for i in range(len(points)):
        cand = [j for j in range(len(points)) if j != i]
        cand.sort(key=lambda j: (d[i, j], j))
        out.append(cand[:k])
    return np.array(out)


def test_constant_signal_has_zero_energy():
    g = build_knn(np.random.default_rng(0).normal(size=(30, 3)), k=4)
    assert dirichlet_energy(g, np.full(30, 2.5)) == 0.0


def test_two_node_case():
    g = build_knn(np.array([[0.0], [1.0]]), k=1)
    assert dirichlet_energy(g, np.array([0.0, 1.0])) == 0.5


def test_energy_scales_quadratically():
    rng = np.random.default_rng(1)
    g = build_knn(rng.normal(size=(40, 2)), k=3)
    y = rng.normal(size=40)
    assert dirichlet_energy(g, 3 * y) == pytest.approx(9 * dirichlet_energy(g, y), rel=1e-12)


def test_collinear_points():
    g = build_knn(np.array([[0.0], [1.0], [3.0]]), k=1)
    assert g.neighbors[:, 0].tolist() == [1, 0, 1]
    assert sorted(map(tuple, np.argwhere(g.adjacency.toarray()))) == [(0, 1), (1, 0), (1, 2), (2, 1)]


def test_exact_ties_go_to_lower_index():
    g = build_knn(np.array([[0.0], [-1.0], [1.0], [5.0]]), k=1)
    assert g.neighbors[0, 0] == 1


def test_full_k_gives_complete_graph():
    g = build_knn(np.random.default_rng(2).normal(size=(7, 3)), k=6)
    assert (g.adjacency.toarray() == 1 - np.eye(7)).all()


def test_too_few_points_and_shapes():
    with pytest.raises(TooFewPoints):
        build_knn(np.zeros((3, 2)), k=3)
    g = build_knn(np.random.default_rng(0).normal(size=(5, 2)), k=2)
    with pytest.raises(DimMismatch):
        dirichlet_energy(g, np.zeros(4))


@pytest.mark.parametrize("n", [10, 97, 500])
def test_knn_matches_brute_force(n):
    pts = np.random.default_rng(n).normal(size=(n, 4))
    np.testing.assert_array_equal(build_knn(pts, k=5).neighbors, brute_knn(pts, 5))


def test_knn_with_duplicate_points_matches_brute_force():
    rng = np.random.default_rng(3)
    pts = np.round(rng.normal(size=(60, 2)), 1)
    pts[10:20] = pts[0]
    np.testing.assert_array_equal(build_knn(pts, k=4).neighbors, brute_knn(pts, 4))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_laplacian_properties(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 60))
    k = int(rng.integers(1, min(n - 1, 8) + 1))
    g = build_knn(rng.normal(size=(n, int(rng.integers(1, 5)))), k)
    y = rng.normal(size=n)
    lam = dirichlet_energy(g, y)
    assert lam >= 0
    assert abs(lam - quadratic_form(g, y)) <= 1e-6 * max(1.0, lam)
    assert np.linalg.eigvalsh(g.laplacian().toarray()).min() > -1e-9
    assert (g.adjacency != g.adjacency.T).nnz == 0


def test_permutation_equivariance():
    rng = np.random.default_rng(4)
    pts, y = rng.normal(size=(50, 3)), rng.normal(size=50)
    perm = rng.permutation(50)
    a = dirichlet_energy(build_knn(pts, 5), y)
    b = dirichlet_energy(build_knn(pts[perm], 5), y[perm])
    assert a == pytest.approx(b, rel=1e-12)


def test_local_pearson_extremes():
    rng = np.random.default_rng(5)
    g = build_knn(rng.normal(size=(40, 2)), k=5)
    a = rng.normal(size=40)
    assert local_pearson(g, a, 2 * a + 1).mean == pytest.approx(1.0)
    assert local_pearson(g, a, -a).mean == pytest.approx(-1.0)


def test_local_pearson_skips_flat_neighbourhoods():
    g = build_knn(np.arange(12, dtype=float)[:, None], k=2)
    a = np.where(np.arange(12) < 6, 0.0, np.arange(12.0))
    res = local_pearson(g, a, a)
    assert res.skipped > 0 and res.used + res.skipped == 12
    with pytest.raises(DegenerateSet):
        local_pearson(g, np.ones(12), np.arange(12.0))


def test_fit_metrics_fields(tmp_path):
    rng = np.random.default_rng(6)
    anchors = rng.normal(size=(30, 3))
    actual = anchors[:, 0]
    m = fit_metrics(anchors, actual + 0.1, actual, k=4)
    assert m.mse == pytest.approx(0.01)
    assert m.local_pearson == pytest.approx(1.0)
    write_metrics(tmp_path / "m.txt", m.as_dict())
    back = read_metrics(tmp_path / "m.txt")
    assert float(back["dirichlet_energy"]) == m.dirichlet and back["k"] == "4"


def test_random_plane_is_orthonormal():
    u, v = random_plane(3, 16)
    assert u @ u == pytest.approx(1.0) and v @ v == pytest.approx(1.0) and abs(u @ v) < 1e-12
    u2, _ = random_plane(3, 16)
    np.testing.assert_array_equal(u, u2)


def test_landscape_grid(tmp_path):
    center = np.arange(4.0)
    calls = []

    def f(z):
        calls.append(len(z))
        return ((z - center) ** 2).sum(axis=1)

    ls = landscape_slice(f, center, extent=1.0, resolution=2)
    assert calls == [4]
    np.testing.assert_allclose(ls.values, [[2.0, 2.0], [2.0, 2.0]])
    odd = landscape_slice(f, center, extent=2.0, resolution=5)
    assert odd.values[2, 2] == pytest.approx(0.0)
    write_landscape(tmp_path / "l.csv", odd)
    lines = (tmp_path / "l.csv").read_text().splitlines()
    assert lines[0] == "u,v,objective" and len(lines) == 26
    with pytest.raises(DimMismatch):
        landscape_slice(f, center, resolution=1)
