"""Neighborhood models on shrunk Pearson correlation.

Similarities are computed over co-rated entries only (pairwise-complete
Pearson) and damped by co-count: sim *= n / (n + shrinkage).  Pairs with
fewer than two co-ratings or zero variance are undefined and excluded from
neighbor lists.  Full anchor x anchor similarity matrices are kept in
memory, so this is for datasets with at most a few thousand users/items.
"""

from __future__ import annotations

import numpy as np

from helltrust.datasets import RatingDataset
from helltrust.models.base import Predictor

_VAR_EPS = 1e-12


def pcc_similarity(a: np.ndarray, b: np.ndarray, shrinkage: int) -> float:
    """Shrunk Pearson correlation of two aligned co-rated rating vectors.

    Returns NaN (the undefined marker) when fewer than 2 co-ratings or
    either side has zero variance.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = a.shape[0]
    if n < 2:
        return float("nan")
    da = a - a.mean()
    db = b - b.mean()
    var_a = float(np.dot(da, da))
    var_b = float(np.dot(db, db))
    if var_a <= _VAR_EPS or var_b <= _VAR_EPS:
        return float("nan")
    raw = float(np.dot(da, db)) / np.sqrt(var_a * var_b)
    return raw * n / (n + shrinkage)


def _pcc_matrix(x_csr, shrinkage: int) -> np.ndarray:
    """All-pairs shrunk Pearson over co-rated entries, NaN where undefined.

    For anchors a, b with co-rated set C:
      corr = (n*Sxy - Sx*Sy) / sqrt((n*Sxx - Sx^2)(n*Syy - Sy^2))
    with every sum restricted to C; all five sums come from sparse products.
    """
    x = x_csr.astype(np.float64)
    pattern = x.copy()
    pattern.data = np.ones_like(pattern.data)
    n = (pattern @ pattern.T).toarray()
    sxy = (x @ x.T).toarray()
    sx = (x @ pattern.T).toarray()  # sx[a, b] = sum of a's ratings over C(a, b)
    sxx = (x.multiply(x) @ pattern.T).toarray()
    cov = n * sxy - sx * sx.T
    var_a = np.maximum(n * sxx - sx * sx, 0.0)
    var_b = var_a.T
    with np.errstate(invalid="ignore", divide="ignore"):
        sim = cov / np.sqrt(var_a * var_b)
        sim *= n / (n + shrinkage)
    sim[(n < 2) | (var_a <= _VAR_EPS) | (var_b <= _VAR_EPS)] = np.nan
    np.fill_diagonal(sim, np.nan)
    return sim


class SimilarityTable:
    """Per-anchor top-k (neighbor, similarity) pairs, strongest first."""

    def __init__(self, sims: np.ndarray, k: int):
        self.k = k
        self.rows: list[list[tuple[int, float]]] = []
        for a in range(sims.shape[0]):
            row = sims[a]
            defined = np.flatnonzero(~np.isnan(row))
            top = defined[np.argsort(-row[defined], kind="stable")][:k]
            self.rows.append([(int(b), float(row[b])) for b in top])

    def __getitem__(self, anchor: int) -> list[tuple[int, float]]:
        return self.rows[anchor]

    def __len__(self) -> int:
        return len(self.rows)


class KNNModel(Predictor):
    """Mean-centered weighted prediction over the top-k neighbors that rated
    the target; falls back to the anchor mean, then the global mean."""

    def __init__(self, mode: str, sims: np.ndarray, neighbors: int,
                 anchor_means: np.ndarray, anchor_counts: np.ndarray,
                 rated_by, rated_values, global_mean: float, scale: tuple[float, float]):
        self.mode = mode
        self.sims = sims
        self.neighbors = neighbors
        self.anchor_means = anchor_means
        self.anchor_counts = anchor_counts
        self.rated_by = rated_by          # per target: anchor indices that rated it
        self.rated_values = rated_values  # per target: the matching ratings
        self.global_mean = global_mean
        self.scale_min, self.scale_max = scale

    def table(self) -> SimilarityTable:
        return SimilarityTable(self.sims, self.neighbors)

    def _anchor_target(self, u: int, j: int) -> tuple[int, int]:
        return (u, j) if self.mode == "user" else (j, u)

    def _anchor_mean(self, anchor: int) -> float:
        if 0 <= anchor < len(self.anchor_means) and self.anchor_counts[anchor] > 0:
            return float(self.anchor_means[anchor])
        return self.global_mean

    def _score(self, u: int, j: int) -> float:
        anchor, target = self._anchor_target(u, j)
        if not (0 <= anchor < self.sims.shape[0]) or not (0 <= target < len(self.rated_by)):
            return self._anchor_mean(anchor)
        cands = self.rated_by[target]
        if cands.shape[0] == 0:
            return self._anchor_mean(anchor)
        sims = self.sims[anchor, cands]
        defined = ~np.isnan(sims)
        if not np.any(defined):
            return self._anchor_mean(anchor)
        cands = cands[defined]
        vals = self.rated_values[target][defined]
        sims = sims[defined]
        if cands.shape[0] > self.neighbors:
            top = np.argsort(-sims, kind="stable")[: self.neighbors]
            cands, vals, sims = cands[top], vals[top], sims[top]
        denom = float(np.abs(sims).sum())
        if denom == 0.0:
            return self._anchor_mean(anchor)
        centered = vals - self.anchor_means[cands]
        return self._anchor_mean(anchor) + float(np.dot(sims, centered)) / denom


def train_knn(train: RatingDataset, mode: str, neighbors: int = 50,
              shrinkage: int = 30) -> KNNModel:
    """User-user or item-item kNN with shrunk Pearson similarities."""
    if mode not in ("user", "item"):
        raise ValueError(f"mode must be 'user' or 'item', got {mode!r}")
    if train.n_ratings == 0:
        raise ValueError("empty training set")
    csr = train.to_csr()
    anchor_matrix = csr if mode == "user" else csr.T.tocsr()
    sims = _pcc_matrix(anchor_matrix, shrinkage)
    # Anchor means over their own ratings; target-indexed lists of raters.
    target_matrix = anchor_matrix.T.tocsr()
    anchor_counts = np.diff(anchor_matrix.indptr)
    sums = np.asarray(anchor_matrix.sum(axis=1)).ravel()
    anchor_means = np.divide(sums, anchor_counts, out=np.zeros_like(sums),
                             where=anchor_counts > 0)
    rated_by = []
    rated_values = []
    for t in range(target_matrix.shape[0]):
        sl = slice(target_matrix.indptr[t], target_matrix.indptr[t + 1])
        rated_by.append(target_matrix.indices[sl].astype(np.int64))
        rated_values.append(target_matrix.data[sl].copy())
    return KNNModel(
        mode=mode,
        sims=sims,
        neighbors=neighbors,
        anchor_means=anchor_means,
        anchor_counts=anchor_counts,
        rated_by=rated_by,
        rated_values=rated_values,
        global_mean=float(np.mean(train.ratings)),
        scale=(train.scale_min, train.scale_max),
    )
