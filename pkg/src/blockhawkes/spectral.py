"""Regularized spectral embedding and clustering of directed adjacency data.

The embedding follows the co-clustering construction for directed graphs:
scale the adjacency by regularized out/in degrees, take the top-K singular
triples, stack left and right singular vectors into N x 2K rows, and
row-normalize. Clustering is k-means with deterministic seeded restarts.
Dense LAPACK SVD is used throughout; the node counts this package targets
(hundreds to a few thousand) stay comfortably inside dense range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ClassAssignment

_ZERO_ROW_TOL = 1e-10


@dataclass
class SpectralEmbedding:
    """Row-normalized [U, V] coordinates plus the singular values used.

    `zero_rows` lists nodes whose raw embedding row had (numerically) zero
    norm; their coordinates are left at zero instead of being normalized.
    """

    coords: np.ndarray
    singular_values: np.ndarray
    zero_rows: np.ndarray
    tau: float
    scaled: bool


def _as_matrix(adjacency) -> np.ndarray:
    matrix = np.asarray(adjacency, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {matrix.shape}")
    return matrix


def _default_tau(matrix: np.ndarray) -> float:
    # average degree: edges per node
    return float(matrix.sum() / matrix.shape[0])


def regularized_laplacian(adjacency, tau: float | None = None) -> np.ndarray:
    """``(O + tau I)^(-1/2) A (P + tau I)^(-1/2)`` with out/in degree
    matrices O and P. `tau` defaults to the average degree."""
    matrix = _as_matrix(adjacency)
    if tau is None:
        tau = _default_tau(matrix)
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    out_reg = matrix.sum(axis=1) + tau
    in_reg = matrix.sum(axis=0) + tau
    if np.any(out_reg == 0) or np.any(in_reg == 0):
        raise ValueError(
            "zero regularized degree: pass a positive tau for graphs with "
            "isolated nodes or empty rows/columns"
        )
    return matrix / np.sqrt(out_reg)[:, None] / np.sqrt(in_reg)[None, :]


def singular_value_profile(
    adjacency, top: int | None = None, tau: float | None = None
) -> np.ndarray:
    """Leading singular values of the regularized Laplacian, descending.

    Diagnostic for choosing the number of classes: block structure shows up
    as a gap after the K-th value. No automatic elbow selection is done.
    """
    lap = regularized_laplacian(adjacency, tau=tau)
    sigma = np.linalg.svd(lap, compute_uv=False)
    if top is not None:
        if not 1 <= top <= sigma.shape[0]:
            raise ValueError(f"top must be in [1, {sigma.shape[0]}]")
        sigma = sigma[:top]
    return sigma


def spectral_embedding(
    adjacency,
    num_classes: int,
    tau: float | None = None,
    scale_by_singular: bool = False,
) -> SpectralEmbedding:
    """Top-`num_classes` singular embedding of the regularized Laplacian."""
    matrix = _as_matrix(adjacency)
    n = matrix.shape[0]
    if not 1 <= num_classes <= n:
        raise ValueError(f"num_classes must be in [1, {n}]")
    if tau is None:
        tau = _default_tau(matrix)
    lap = regularized_laplacian(matrix, tau=tau)
    u, sigma, vh = np.linalg.svd(lap, full_matrices=False)
    k = num_classes
    left = u[:, :k]
    right = vh[:k].T
    if scale_by_singular:
        root = np.sqrt(sigma[:k])
        left = left * root[None, :]
        right = right * root[None, :]
    coords = np.hstack([left, right])
    norms = np.linalg.norm(coords, axis=1)
    zero_rows = np.flatnonzero(norms < _ZERO_ROW_TOL)
    safe = norms.copy()
    safe[safe < _ZERO_ROW_TOL] = 1.0
    coords = coords / safe[:, None]
    coords[zero_rows] = 0.0
    return SpectralEmbedding(coords, sigma[:k].copy(), zero_rows, float(tau),
                             bool(scale_by_singular))


def _kmeans_pp_init(points: np.ndarray, k: int, rng) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centers[0] = points[first]
    dist2 = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = dist2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=dist2 / total))
        centers[j] = points[idx]
        dist2 = np.minimum(dist2, ((points - centers[j]) ** 2).sum(axis=1))
    return centers


def _assign(points, centers):
    """Nearest-centroid labels; ties go to the lowest centroid index."""
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1), d2


def _kmeans_once(points, k, centers, max_iter, tol):
    n = points.shape[0]
    inertia = np.inf
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        labels, d2 = _assign(points, centers)
        new_inertia = float(d2[np.arange(n), labels].sum())
        for j in range(k):
            member = labels == j
            if member.any():
                centers[j] = points[member].mean(axis=0)
            else:
                # re-seed an emptied cluster at the worst-fit point
                worst = int(d2[np.arange(n), labels].argmax())
                centers[j] = points[worst]
        if inertia - new_inertia <= tol * max(abs(inertia), 1e-300):
            inertia = new_inertia
            break
        inertia = new_inertia
    labels, d2 = _assign(points, centers)
    inertia = float(d2[np.arange(points.shape[0]), labels].sum())
    return labels, centers, inertia


def _kmeans(
    points: np.ndarray,
    k: int,
    rng,
    restarts: int = 20,
    max_iter: int = 300,
    tol: float = 1e-9,
    init_centers: np.ndarray | None = None,
):
    """Seeded k-means with k-means++ restarts; ties to lowest centroid index."""
    points = np.asarray(points, dtype=np.float64)
    if points.shape[0] < k:
        raise ValueError(f"need at least {k} points, got {points.shape[0]}")
    best = None
    for _ in range(restarts):
        if init_centers is not None:
            centers = np.array(init_centers, dtype=np.float64, copy=True)
        else:
            centers = _kmeans_pp_init(points, k, rng)
        labels, centers, inertia = _kmeans_once(points, k, centers, max_iter, tol)
        if best is None or inertia < best[2]:
            best = (labels, centers, inertia)
    return best


def spectral_cluster(
    adjacency,
    num_classes: int,
    rng,
    *,
    tau: float | None = None,
    scale_by_singular: bool = False,
    restarts: int = 20,
) -> tuple[ClassAssignment, SpectralEmbedding]:
    """Cluster nodes by k-means on the spectral embedding rows.

    `rng` (seed or Generator) only drives the k-means restarts; the
    embedding itself is deterministic. Returns the hard assignment together
    with the embedding so callers can reuse it (e.g. for soft
    initialization).
    """
    embedding = spectral_embedding(adjacency, num_classes, tau=tau,
                                   scale_by_singular=scale_by_singular)
    gen = np.random.default_rng(rng)
    labels, _, _ = _kmeans(embedding.coords, num_classes, gen,
                           restarts=restarts)
    return ClassAssignment(labels, num_classes), embedding


def soft_assignment(embedding: SpectralEmbedding, num_classes: int) -> np.ndarray:
    """Map embedding rows onto the probability simplex for soft starts.

    Takes the first `num_classes` coordinates (the left-singular half),
    clamps negatives to zero, adds a 1e-6 floor, and renormalizes each row.
    """
    coords = embedding.coords[:, :num_classes]
    clipped = np.clip(coords, 0.0, None) + 1e-6
    return clipped / clipped.sum(axis=1, keepdims=True)
