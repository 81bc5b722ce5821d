from __future__ import annotations

import logging

import numpy as np
import numpy.typing as npt
from scipy.spatial import distance

from .matkernels import DenseMatrix, DimensionMismatch, SymMatrix, symmetrize

logger = logging.getLogger("graphs")


class EmptyClass(ValueError): ...


class DegenerateBandwidth(ArithmeticError): ...


def pairwise_distances(points: DenseMatrix) -> SymMatrix:
    """Euclidean distances between the columns of `points`."""
    n = points.shape[1]
    if n < 2:
        return np.zeros((n, n))
    dist = distance.squareform(distance.pdist(points.T))
    if not np.all(np.isfinite(dist)):
        raise DegenerateBandwidth("Non-finite pairwise distances")
    return dist


def nearest_neighbors(dist: SymMatrix, knn: int, candidates: npt.NDArray[np.bool_] | None = None) -> npt.NDArray[np.intp]:
    """Row-wise indices of the knn closest candidates, self excluded, ties to the smaller index."""
    masked = dist.copy()
    np.fill_diagonal(masked, np.inf)
    if candidates is not None:
        masked[~candidates] = np.inf
    return np.argsort(masked, axis=1, kind="stable")[:, :knn]


def union_adjacency(neighbors: npt.NDArray[np.intp], n: int, valid: npt.NDArray[np.bool_] | None = None) -> npt.NDArray[np.bool_]:
    mask = np.zeros((n, n), dtype=bool)
    rows = np.repeat(np.arange(n), neighbors.shape[1])
    cols = neighbors.ravel()
    if valid is not None:
        keep = valid[rows, cols]
        rows, cols = rows[keep], cols[keep]
    mask[rows, cols] = True
    mask |= mask.T
    np.fill_diagonal(mask, False)
    return mask


def laplacian(w: npt.ArrayLike) -> SymMatrix:
    weights = symmetrize(w)
    return np.diag(weights.sum(axis=1)) - weights


def knn_heat_graph(points: DenseMatrix, knn: int, sigma: float) -> SymMatrix:
    """Union k-NN graph over the columns of `points` with weights exp(-d^2 / sigma^2)."""
    n = points.shape[1]
    if knn < 1 or knn > n - 1:
        raise ValueError(f"knn = {knn} needs between 1 and {n - 1} neighbors for {n} samples")
    dist = pairwise_distances(points)
    mask = union_adjacency(nearest_neighbors(dist, knn), n)
    edge = dist[mask]
    if sigma <= 0 and np.any(edge > 0):
        raise DegenerateBandwidth(f"Heat kernel bandwidth {sigma} is not positive")
    w = np.zeros((n, n))
    # coincident points get weight exp(0) = 1 whatever the bandwidth
    w[mask] = np.where(edge > 0, np.exp(-(edge * edge) / (sigma * sigma if sigma > 0 else 1.0)), 1.0)
    return w


def _class_masks(classes: npt.NDArray[np.int64]) -> tuple[npt.NDArray[np.bool_], npt.NDArray[np.float64]]:
    m = classes.shape[0]
    if m == 0:
        raise EmptyClass("No labeled samples")
    same = classes[:, None] == classes[None, :]
    sizes = same.sum(axis=1).astype(np.float64)
    return same, sizes


def lda_graphs(classes: npt.ArrayLike) -> tuple[SymMatrix, SymMatrix]:
    labels = np.asarray(classes).ravel()
    same, sizes = _class_masks(labels)
    m = labels.shape[0]
    w_within = np.where(same, 1.0 / sizes[:, None], 0.0)
    w_between = np.full((m, m), 1.0 / m) - w_within
    return w_within, w_between


def _local_scales(dist: SymMatrix, same: npt.NDArray[np.bool_], knn: int) -> npt.NDArray[np.float64]:
    m = dist.shape[0]
    scales = np.ones(m)
    for i in range(m):
        mates = np.flatnonzero(same[i])
        mates = mates[mates != i]
        if mates.size == 0:
            continue
        d = np.sort(dist[i, mates], kind="stable")
        scale = d[min(knn, d.size) - 1]
        if scale == 0:
            positive = d[d > 0]
            scale = positive[0] if positive.size else 1.0
        scales[i] = scale
    return scales


def lfda_graphs(points: DenseMatrix, classes: npt.ArrayLike, knn: int) -> tuple[SymMatrix, SymMatrix]:
    """Local Fisher graphs with locally scaled affinities exp(-d_ij^2 / (s_i s_j)).

    The scale s_i is the distance from sample i to its knn-th nearest
    same-class neighbor.
    """
    labels = np.asarray(classes).ravel()
    if points.shape[1] != labels.shape[0]:
        raise DimensionMismatch(f"{points.shape[1]} samples but {labels.shape[0]} labels")
    if knn < 1:
        raise ValueError(f"knn must be positive, got {knn}")
    same, sizes = _class_masks(labels)
    m = labels.shape[0]
    dist = pairwise_distances(points)
    scales = _local_scales(dist, same, knn)
    affinity = np.where(same, np.exp(-(dist * dist) / np.outer(scales, scales)), 0.0)
    w_within = affinity / sizes[:, None]
    w_between = np.where(same, affinity * (1.0 / m - 1.0 / sizes[:, None]), 1.0 / m)
    return symmetrize(w_within), symmetrize(w_between)


def mfa_graphs(points: DenseMatrix, classes: npt.ArrayLike, k1: int, k2: int) -> tuple[SymMatrix, SymMatrix]:
    """Marginal Fisher graphs: 0/1 intrinsic within-class k1-NN and penalty graph.

    The penalty graph joins, for every class, the k2 closest pairs between
    that class and the rest.
    """
    labels = np.asarray(classes).ravel()
    if points.shape[1] != labels.shape[0]:
        raise DimensionMismatch(f"{points.shape[1]} samples but {labels.shape[0]} labels")
    if k1 < 1 or k2 < 1:
        raise ValueError(f"k1 and k2 must be positive, got {k1} and {k2}")
    same, _ = _class_masks(labels)
    m = labels.shape[0]
    dist = pairwise_distances(points)

    within = union_adjacency(nearest_neighbors(dist, min(k1, m - 1), candidates=same), m, valid=same)

    between = np.zeros((m, m), dtype=bool)
    for c in np.unique(labels):
        inside = np.flatnonzero(labels == c)
        outside = np.flatnonzero(labels != c)
        if outside.size == 0:
            continue
        block = dist[np.ix_(inside, outside)]
        # lexsort keys: last is primary; ties fall back to (i, j)
        ii, jj = np.meshgrid(inside, outside, indexing="ij")
        order = np.lexsort((jj.ravel(), ii.ravel(), block.ravel()))[:k2]
        between[ii.ravel()[order], jj.ravel()[order]] = True
    between |= between.T
    return within.astype(np.float64), between.astype(np.float64)


def scatter_matrices(points: DenseMatrix, w_within: SymMatrix, w_between: SymMatrix, m: int | None = None) -> tuple[SymMatrix, SymMatrix]:
    n = points.shape[1]
    if w_within.shape != (n, n) or w_between.shape != (n, n):
        raise DimensionMismatch(f"Graphs of shapes {w_within.shape}, {w_between.shape} for {n} samples")
    count = n if m is None else m
    if count < 1:
        raise DimensionMismatch(f"Sample count {count} must be positive")
    s_within = points @ laplacian(w_within) @ points.T / count
    s_between = points @ laplacian(w_between) @ points.T / count
    return symmetrize(s_within), symmetrize(s_between)
