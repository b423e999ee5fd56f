"""Latent-space quality metrics: smoothness over a KNN graph, surrogate fit, 2-D slices."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from latentmol.errors import DegenerateSet, DimMismatch, TooFewPoints
from latentmol.tensor.rng import normal


@dataclass
class KnnGraph:
    points: np.ndarray
    k: int
    neighbors: np.ndarray  # (N, k) directed nearest neighbours, nearest first
    adjacency: sparse.csr_matrix  # union-symmetrised 0/1

    @property
    def degree(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel()

    def laplacian(self) -> sparse.csr_matrix:
        return (sparse.diags(self.degree) - self.adjacency).tocsr()

    def __len__(self) -> int:
        return len(self.points)


def _distances(points: np.ndarray, i: int, candidates: np.ndarray) -> np.ndarray:
    diff = points[candidates] - points[i]
    return np.sqrt((diff * diff).sum(axis=1))


def build_knn(points, k: int = 5) -> KnnGraph:
    """Each point linked to its ``k`` nearest others (ties to the lower index), then symmetrised."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise DimMismatch(f"points must be (N, d), got {points.shape}")
    n = len(points)
    if k < 1 or n < k + 1:
        raise TooFewPoints(f"need at least k + 1 = {k + 1} points, got {n}")
    tree = cKDTree(points)
    dist, _ = tree.query(points, k=k + 1)
    radius = dist[:, -1]
    neighbors = np.zeros((n, k), dtype=np.int64)
    for i in range(n):
        # every point within the k-th distance, so ties can be ordered by index
        cand = np.array(tree.query_ball_point(points[i], radius[i] * (1 + 1e-9) + 1e-12), dtype=np.int64)
        cand = cand[cand != i]
        d = _distances(points, i, cand)
        order = np.lexsort((cand, d))
        neighbors[i] = cand[order[:k]]
    rows = np.repeat(np.arange(n), k)
    a = sparse.coo_matrix((np.ones(n * k), (rows, neighbors.ravel())), shape=(n, n)).tocsr()
    a = ((a + a.T) > 0).astype(np.float64).tocsr()
    return KnnGraph(points, k, neighbors, a)


def dirichlet_energy(graph: KnnGraph, y) -> float:
    """``y^T (D - A) y / N``, summed edge by edge so constant signals give exactly 0."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (len(graph),):
        raise DimMismatch(f"signal of shape {y.shape} for a graph of {len(graph)} nodes")
    a = sparse.triu(graph.adjacency, k=1).tocoo()
    diff = y[a.row] - y[a.col]
    return float((a.data * diff * diff).sum()) / len(graph)


@dataclass(frozen=True)
class LocalCorrelation:
    mean: float
    used: int
    skipped: int


def local_pearson(graph: KnnGraph, a, b) -> LocalCorrelation:
    """Pearson correlation of ``a`` and ``b`` over each anchor and its ``k`` nearest neighbours, averaged.

    Neighbourhoods where either signal is constant are skipped and counted.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != (len(graph),) or b.shape != (len(graph),):
        raise DimMismatch("signals must have one value per node")
    values = []
    for i in range(len(graph)):
        idx = np.concatenate([[i], graph.neighbors[i]])
        x, y = a[idx] - a[idx].mean(), b[idx] - b[idx].mean()
        sx, sy = np.sqrt((x * x).sum()), np.sqrt((y * y).sum())
        if sx <= 1e-12 * max(1.0, np.abs(a[idx]).max()) or sy <= 1e-12 * max(1.0, np.abs(b[idx]).max()):
            continue
        values.append(float((x * y).sum() / (sx * sy)))
    skipped = len(graph) - len(values)
    if not values:
        raise DegenerateSet("every neighbourhood has zero variance")
    return LocalCorrelation(float(np.mean(values)), len(values), skipped)


@dataclass(frozen=True)
class FitMetrics:
    n: int
    k: int
    mse: float
    local_pearson: float
    pearson_used: int
    pearson_skipped: int
    dirichlet: float

    def as_dict(self) -> dict[str, float | int]:
        return {
            "n": self.n,
            "k": self.k,
            "mse": self.mse,
            "local_pearson": self.local_pearson,
            "local_pearson_anchors": self.pearson_used,
            "local_pearson_skipped": self.pearson_skipped,
            "dirichlet_energy": self.dirichlet,
        }


def fit_metrics(anchors: np.ndarray, predicted, actual, k: int = 5) -> FitMetrics:
    """Surrogate-vs-oracle agreement and oracle smoothness over latent anchors."""
    predicted = np.asarray(predicted, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if predicted.shape != actual.shape or predicted.shape != (len(anchors),):
        raise DimMismatch("need one predicted and one actual value per anchor")
    graph = build_knn(anchors, k)
    corr = local_pearson(graph, predicted, actual)
    return FitMetrics(
        n=len(anchors),
        k=k,
        mse=float(np.mean((predicted - actual) ** 2)),
        local_pearson=corr.mean,
        pearson_used=corr.used,
        pearson_skipped=corr.skipped,
        dirichlet=dirichlet_energy(graph, actual),
    )


def surrogate_fit_metrics(model, surrogate, objective, ids: np.ndarray, oracle_objective, k: int = 5) -> FitMetrics:
    """Encode the evaluation set to its means and compare surrogate to oracle objective there."""
    mu = model.encode(ids)[0].data.astype(np.float64)
    coef = objective.coefficients(surrogate.names)
    predicted = surrogate.predict_numpy(mu) @ coef
    return fit_metrics(mu, predicted, oracle_objective, k)


def random_plane(seed: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Two orthonormal directions from Gram-Schmidt on Gaussian draws."""
    g = normal(seed, (2, dim), "landscape").astype(np.float64)
    u = g[0] / np.linalg.norm(g[0])
    v = g[1] - (g[1] @ u) * u
    v /= np.linalg.norm(v)
    return u, v


@dataclass
class Landscape:
    u: np.ndarray
    v: np.ndarray
    coords: np.ndarray  # offsets along each direction
    values: np.ndarray  # (resolution, resolution), [i, j] at (coords[i], coords[j])

    def rows(self):
        for i, a in enumerate(self.coords):
            for j, b in enumerate(self.coords):
                yield float(a), float(b), float(self.values[i, j])


def landscape_slice(
    evaluate: Callable[[np.ndarray], np.ndarray],
    center,
    extent: float = 3.0,
    resolution: int = 21,
    seed: int = 0,
) -> Landscape:
    """Evaluate ``evaluate`` on a square grid in a random plane through ``center``."""
    if resolution < 2:
        raise DimMismatch("resolution must be at least 2")
    center = np.asarray(center, dtype=np.float64)
    u, v = random_plane(seed, len(center))
    coords = np.linspace(-extent, extent, resolution)
    a, b = np.meshgrid(coords, coords, indexing="ij")
    z = center[None, :] + a.reshape(-1, 1) * u[None, :] + b.reshape(-1, 1) * v[None, :]
    values = np.asarray(evaluate(z), dtype=np.float64).reshape(resolution, resolution)
    return Landscape(u, v, coords, values)


def write_landscape(path: str | Path, landscape: Landscape) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["u", "v", "objective"])
        for a, b, val in landscape.rows():
            w.writerow([repr(a), repr(b), repr(val)])


def write_metrics(path: str | Path, metrics: Mapping[str, object]) -> None:
    Path(path).write_text("".join(f"{k}={v}\n" for k, v in metrics.items()))


def read_metrics(path: str | Path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            k, _, v = line.partition("=")
            out[k] = v
    return out
