"""Rating and trust file parsing, dense id remapping, stats, and k-fold splits.

File conventions: UTF-8 text, one record per line, fields separated by
whitespace or commas, lines starting with '#' ignored.  Rating lines are
``user item rating [extra...]``; trust lines are ``truster trustee [weight]``.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, TextIO

import numpy as np
import scipy.sparse as sp

_FIELD_SPLIT = re.compile(r"[,\s]+")


class ParseError(ValueError):
    """Malformed or out-of-contract input line; carries the line number."""


class RatingRecord(NamedTuple):
    user: int
    item: int
    rating: float


@dataclass
class Stats:
    n_users: int
    n_items: int
    rating_count: int
    density: float
    mean_rating: float


def _open_source(source) -> TextIO:
    if isinstance(source, (str, bytes)):
        return open(source, "r", encoding="utf-8")
    if isinstance(source, io.TextIOBase) or hasattr(source, "readline"):
        return source
    raise TypeError(f"unsupported source type: {type(source)!r}")


def _iter_fields(source) -> Iterator[tuple[int, list[str]]]:
    """Yield (line_number, fields) for non-empty, non-comment lines."""
    close = isinstance(source, (str, bytes))
    fh = _open_source(source)
    try:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, _FIELD_SPLIT.split(line)
    finally:
        if close:
            fh.close()


class RatingDataset:
    """Remapped user-item-rating triples plus inverted indexes.

    User and item ids are dense 0-based indices assigned in order of first
    appearance in the input.  Built datasets are immutable by convention and
    safe to share across concurrent readers.
    """

    def __init__(
        self,
        users: np.ndarray,
        items: np.ndarray,
        ratings: np.ndarray,
        n_users: int,
        n_items: int,
        scale_min: float,
        scale_max: float,
        user_raw_ids: list[str],
        item_raw_ids: list[str],
        duplicate_count: int = 0,
        name: str = "",
    ):
        self.users = np.ascontiguousarray(users, dtype=np.int32)
        self.items = np.ascontiguousarray(items, dtype=np.int32)
        self.ratings = np.ascontiguousarray(ratings, dtype=np.float64)
        self.n_users = int(n_users)
        self.n_items = int(n_items)
        self.scale_min = float(scale_min)
        self.scale_max = float(scale_max)
        self.user_raw_ids = user_raw_ids
        self.item_raw_ids = item_raw_ids
        self.duplicate_count = int(duplicate_count)
        self.name = name
        self.user_items: list[np.ndarray] = _invert(self.users, self.items, self.n_users)
        self.item_users: list[np.ndarray] = _invert(self.items, self.users, self.n_items)

    @property
    def n_ratings(self) -> int:
        return self.users.shape[0]

    def records(self) -> Iterator[RatingRecord]:
        for u, i, r in zip(self.users, self.items, self.ratings):
            yield RatingRecord(int(u), int(i), float(r))

    def subset(self, indices: np.ndarray, name: str | None = None) -> "RatingDataset":
        """Dataset restricted to the given record indices, same id namespace."""
        idx = np.asarray(indices)
        return RatingDataset(
            self.users[idx],
            self.items[idx],
            self.ratings[idx],
            self.n_users,
            self.n_items,
            self.scale_min,
            self.scale_max,
            self.user_raw_ids,
            self.item_raw_ids,
            duplicate_count=0,
            name=self.name if name is None else name,
        )

    def to_csr(self) -> sp.csr_matrix:
        """Users x items sparse matrix of ratings."""
        return sp.csr_matrix(
            (self.ratings, (self.users, self.items)), shape=(self.n_users, self.n_items)
        )

    def pattern_csr(self) -> sp.csr_matrix:
        """Users x items 0/1 matrix marking rated pairs."""
        data = np.ones(self.n_ratings, dtype=np.float64)
        return sp.csr_matrix(
            (data, (self.users, self.items)), shape=(self.n_users, self.n_items)
        )


def _invert(keys: np.ndarray, values: np.ndarray, n_keys: int) -> list[np.ndarray]:
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    sorted_vals = values[order]
    bounds = np.searchsorted(sorted_keys, np.arange(n_keys + 1))
    return [sorted_vals[bounds[k] : bounds[k + 1]] for k in range(n_keys)]


def parse_ratings(source, scale_min: float, scale_max: float, name: str = "") -> RatingDataset:
    """Parse rating triples, remap ids, and build the inverted indexes.

    Duplicate (user, item) lines keep the last value; the count is recorded
    on the returned dataset.  Ratings outside [scale_min, scale_max] are
    rejected with a ParseError naming the line.
    """
    if scale_min >= scale_max:
        raise ValueError(f"invalid rating scale [{scale_min}, {scale_max}]")
    user_map: dict[str, int] = {}
    item_map: dict[str, int] = {}
    cell_value: dict[tuple[int, int], float] = {}
    duplicates = 0
    for lineno, fields in _iter_fields(source):
        if len(fields) < 3:
            raise ParseError(f"line {lineno}: expected 'user item rating', got {len(fields)} fields")
        raw_u, raw_i, raw_r = fields[0], fields[1], fields[2]
        try:
            rating = float(raw_r)
        except ValueError:
            raise ParseError(f"line {lineno}: rating {raw_r!r} is not a number") from None
        if not (scale_min <= rating <= scale_max):
            raise ParseError(
                f"line {lineno}: rating {rating} outside scale [{scale_min}, {scale_max}]"
            )
        u = user_map.setdefault(raw_u, len(user_map))
        i = item_map.setdefault(raw_i, len(item_map))
        if (u, i) in cell_value:
            duplicates += 1
        cell_value[(u, i)] = rating
    if not cell_value:
        raise ParseError("empty input: no rating lines found")
    n = len(cell_value)
    users = np.empty(n, dtype=np.int32)
    items = np.empty(n, dtype=np.int32)
    ratings = np.empty(n, dtype=np.float64)
    for pos, ((u, i), r) in enumerate(cell_value.items()):
        users[pos], items[pos], ratings[pos] = u, i, r
    return RatingDataset(
        users,
        items,
        ratings,
        n_users=len(user_map),
        n_items=len(item_map),
        scale_min=scale_min,
        scale_max=scale_max,
        user_raw_ids=list(user_map),
        item_raw_ids=list(item_map),
        duplicate_count=duplicates,
        name=name,
    )


@dataclass
class TrustEdgeList:
    """Directed user-user trust edges over a rating dataset's user namespace.

    Edges are stored sorted by (truster, trustee).  ``out_indptr`` gives CSR
    slices by truster, so ``trustees[out_indptr[u]:out_indptr[u+1]]`` is T_u.
    """

    trusters: np.ndarray
    trustees: np.ndarray
    weights: np.ndarray
    n_users: int
    dropped_unknown: int = 0
    dropped_self: int = 0
    dropped_duplicate: int = 0
    out_indptr: np.ndarray = field(init=False, repr=False)
    in_degree: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.trusters.shape[0]:
            ids = np.concatenate([self.trusters, self.trustees])
            if ids.min() < 0 or ids.max() >= self.n_users:
                raise ValueError(
                    f"trust edge user id outside [0, {self.n_users})"
                )
        order = np.lexsort((self.trustees, self.trusters))
        self.trusters = np.ascontiguousarray(self.trusters[order], dtype=np.int32)
        self.trustees = np.ascontiguousarray(self.trustees[order], dtype=np.int32)
        self.weights = np.ascontiguousarray(self.weights[order], dtype=np.float64)
        counts = np.bincount(self.trusters, minlength=self.n_users)
        self.out_indptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
        self.in_degree = np.bincount(self.trustees, minlength=self.n_users).astype(np.int64)

    @property
    def n_edges(self) -> int:
        return self.trusters.shape[0]

    @property
    def out_degree(self) -> np.ndarray:
        return np.diff(self.out_indptr)

    def out_neighbors(self, u: int) -> np.ndarray:
        return self.trustees[self.out_indptr[u] : self.out_indptr[u + 1]]

    def is_symmetric(self) -> bool:
        fwd = set(zip(self.trusters.tolist(), self.trustees.tolist()))
        return all((v, u) in fwd for (u, v) in fwd)

    def write(self, path, user_raw_ids: list[str] | None = None) -> None:
        """Write as trust-file lines ``truster trustee weight``, sorted.

        With ``user_raw_ids`` the original id tokens are emitted, so the file
        re-parses against the same rating dataset unchanged.
        """
        def label(idx: int) -> str:
            return user_raw_ids[idx] if user_raw_ids is not None else str(idx)

        with open(path, "w", encoding="utf-8") as fh:
            for u, v, w in zip(self.trusters, self.trustees, self.weights):
                fh.write(f"{label(int(u))} {label(int(v))} {w:g}\n")

    @classmethod
    def empty(cls, n_users: int) -> "TrustEdgeList":
        z = np.zeros(0, dtype=np.int32)
        return cls(z, z.copy(), np.zeros(0, dtype=np.float64), n_users)


def parse_trust(source, ds: RatingDataset) -> TrustEdgeList:
    """Parse trust pairs/triples in the rating dataset's user-id namespace.

    Self-loops, duplicate (truster, trustee) pairs (last weight kept), and
    edges naming users absent from the rating data are dropped; each category
    is counted on the result.
    """
    user_map = {raw: idx for idx, raw in enumerate(ds.user_raw_ids)}
    edge_weight: dict[tuple[int, int], float] = {}
    dropped_unknown = dropped_self = dropped_duplicate = 0
    for lineno, fields in _iter_fields(source):
        if len(fields) < 2:
            raise ParseError(f"line {lineno}: expected 'truster trustee [weight]'")
        raw_u, raw_v = fields[0], fields[1]
        weight = 1.0
        if len(fields) >= 3:
            try:
                weight = float(fields[2])
            except ValueError:
                raise ParseError(f"line {lineno}: weight {fields[2]!r} is not a number") from None
        if raw_u not in user_map or raw_v not in user_map:
            dropped_unknown += 1
            continue
        u, v = user_map[raw_u], user_map[raw_v]
        if u == v:
            dropped_self += 1
            continue
        if (u, v) in edge_weight:
            dropped_duplicate += 1
        edge_weight[(u, v)] = weight
    n = len(edge_weight)
    trusters = np.empty(n, dtype=np.int32)
    trustees = np.empty(n, dtype=np.int32)
    weights = np.empty(n, dtype=np.float64)
    for pos, ((u, v), w) in enumerate(edge_weight.items()):
        trusters[pos], trustees[pos], weights[pos] = u, v, w
    return TrustEdgeList(
        trusters,
        trustees,
        weights,
        n_users=ds.n_users,
        dropped_unknown=dropped_unknown,
        dropped_self=dropped_self,
        dropped_duplicate=dropped_duplicate,
    )


def dataset_stats(ds: RatingDataset) -> Stats:
    if ds.n_ratings == 0:
        raise ValueError("empty dataset")
    return Stats(
        n_users=ds.n_users,
        n_items=ds.n_items,
        rating_count=ds.n_ratings,
        density=ds.n_ratings / (ds.n_users * ds.n_items),
        mean_rating=float(np.mean(ds.ratings)),
    )


@dataclass
class FoldAssignment:
    """Per-record fold ids for k-fold cross-validation."""

    k: int
    assignment: np.ndarray
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != fold)


def kfold_split(ds: RatingDataset, k: int, seed: int) -> FoldAssignment:
    """Seeded uniform partition of records into k folds of near-equal size."""
    n = ds.n_ratings
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of records ({n})")
    rng = np.random.default_rng(seed)
    assignment = np.empty(n, dtype=np.int32)
    assignment[rng.permutation(n)] = np.arange(n) % k
    return FoldAssignment(k=k, assignment=assignment, seed=seed)
