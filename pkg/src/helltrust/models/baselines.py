"""Mean predictors and weighted SlopeOne."""

from __future__ import annotations

import numpy as np

from helltrust.datasets import RatingDataset
from helltrust.models.base import Predictor

MEAN_KINDS = ("global", "user", "item")


class MeanModel(Predictor):
    def __init__(self, kind: str, global_mean: float, means: np.ndarray | None,
                 counts: np.ndarray | None, scale: tuple[float, float]):
        self.kind = kind
        self.global_mean = global_mean
        self.means = means
        self.counts = counts
        self.scale_min, self.scale_max = scale

    def _score(self, u: int, j: int) -> float:
        if self.kind == "global":
            return self.global_mean
        idx = u if self.kind == "user" else j
        if self.means is None or not (0 <= idx < len(self.means)) or self.counts[idx] == 0:
            return self.global_mean
        return float(self.means[idx])

    def predict_many(self, users, items):
        if self.kind == "global":
            raw = np.full(len(users), self.global_mean)
        else:
            idx = np.asarray(users if self.kind == "user" else items)
            valid = (idx >= 0) & (idx < len(self.means)) & (self.counts[np.clip(idx, 0, len(self.means) - 1)] > 0)
            raw = np.where(valid, self.means[np.clip(idx, 0, len(self.means) - 1)], self.global_mean)
        return np.clip(raw, self.scale_min, self.scale_max)


def _grouped_means(keys: np.ndarray, values: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    counts = np.bincount(keys, minlength=n)
    sums = np.bincount(keys, weights=values, minlength=n)
    means = np.divide(sums, counts, out=np.zeros(n), where=counts > 0)
    return means, counts


def train_mean_model(train: RatingDataset, kind: str) -> MeanModel:
    """Global, per-user, or per-item mean predictor (fallback: global mean)."""
    if kind not in MEAN_KINDS:
        raise ValueError(f"unknown mean kind {kind!r}; expected one of {MEAN_KINDS}")
    if train.n_ratings == 0:
        raise ValueError("empty training set")
    mu = float(np.mean(train.ratings))
    scale = (train.scale_min, train.scale_max)
    if kind == "global":
        return MeanModel(kind, mu, None, None, scale)
    if kind == "user":
        means, counts = _grouped_means(train.users, train.ratings, train.n_users)
    else:
        means, counts = _grouped_means(train.items, train.ratings, train.n_items)
    return MeanModel(kind, mu, means, counts, scale)


class SlopeOneModel(Predictor):
    """Weighted SlopeOne over item-item average rating deviations.

    dev[j, i] is the mean of (r_uj - r_ui) over users who rated both; a
    prediction for (u, j) averages dev[j, i] + r_ui over the items u rated,
    weighted by the co-rating counts.  Holds dense item x item matrices, so
    it is meant for datasets with at most a few thousand items.
    """

    def __init__(self, dev: np.ndarray, co_counts: np.ndarray, user_items, user_ratings,
                 user_means: np.ndarray, user_counts: np.ndarray, global_mean: float,
                 scale: tuple[float, float]):
        self.dev = dev
        self.co_counts = co_counts
        self.user_items = user_items
        self.user_ratings = user_ratings
        self.user_means = user_means
        self.user_counts = user_counts
        self.global_mean = global_mean
        self.scale_min, self.scale_max = scale

    def _fallback(self, u: int) -> float:
        if 0 <= u < len(self.user_means) and self.user_counts[u] > 0:
            return float(self.user_means[u])
        return self.global_mean

    def _score(self, u: int, j: int) -> float:
        if not (0 <= u < len(self.user_items)) or not (0 <= j < self.dev.shape[0]):
            return self._fallback(u)
        rated = self.user_items[u]
        if rated.shape[0] == 0:
            return self._fallback(u)
        keep = rated != j
        rated = rated[keep]
        ratings = self.user_ratings[u][keep]
        weights = self.co_counts[j, rated]
        mask = weights > 0
        if not np.any(mask):
            return self._fallback(u)
        w = weights[mask]
        contrib = self.dev[j, rated[mask]] + ratings[mask]
        return float(np.dot(w, contrib) / w.sum())


def train_slope_one(train: RatingDataset) -> SlopeOneModel:
    if train.n_ratings == 0:
        raise ValueError("empty training set")
    # Shift stored values positive so sparse products can't drop a rating
    # equal to 0; the shift cancels inside the pairwise differences.
    shift = 1.0 - train.scale_min
    x = train.to_csr()
    x.data = x.data + shift
    b = train.pattern_csr()
    co = (b.T @ b).toarray()
    s = (x.T @ b).toarray()  # s[j, i] = sum of shifted r_uj over co-raters of (i, j)
    with np.errstate(invalid="ignore", divide="ignore"):
        dev = np.where(co > 0, (s - s.T) / np.maximum(co, 1), 0.0)
    np.fill_diagonal(dev, 0.0)
    user_means, user_counts = _grouped_means(train.users, train.ratings, train.n_users)
    user_items = []
    user_ratings = []
    csr = train.to_csr()
    for u in range(train.n_users):
        sl = slice(csr.indptr[u], csr.indptr[u + 1])
        user_items.append(csr.indices[sl].astype(np.int64))
        user_ratings.append(csr.data[sl].copy())
    return SlopeOneModel(
        dev=dev,
        co_counts=co,
        user_items=user_items,
        user_ratings=user_ratings,
        user_means=user_means,
        user_counts=user_counts,
        global_mean=float(np.mean(train.ratings)),
        scale=(train.scale_min, train.scale_max),
    )
