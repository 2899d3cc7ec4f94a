"""Latent-factor models trained by SGD: plain MF, biased MF, implicit
feedback (y factors), and the trust-regularized extension (w factors).

Prediction for the full model:

    r_hat(u, j) = mu + b_u + b_j
                  + q_j . (p_u + |I_u|^-1/2 sum_{i in I_u} y_i
                               + |T_u|^-1/2 sum_{v in T_u} w_v)

The loss adds a trust reconstruction term (reg_social / 2) * sum over edges
(w_v . p_u - t_uv)^2 and degree-weighted L2 pulls: popular users and items
(large |I_u|, |U_j|, |T_v+|) are penalized less, cold ones more.  Empty
index sets contribute weight 0 everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from helltrust.datasets import RatingDataset, TrustEdgeList
from helltrust.models.base import Predictor
from helltrust.models import _kernels

VARIANTS = ("regsvd", "biasedmf", "svdpp", "trustsvd")

_DUMP_VERSION = 1


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or parameter."""

    def __init__(self, epoch: int, detail: str = ""):
        self.epoch = epoch
        super().__init__(f"training diverged at epoch {epoch}{': ' + detail if detail else ''}")


@dataclass(frozen=True)
class HyperParams:
    factors: int = 5
    max_iter: int = 100
    learn_rate: float = 0.01
    reg: float = 0.1
    reg_social: float = 0.5
    seed: int = 0
    init_std: float = 0.1

    def __post_init__(self):
        if self.factors < 1:
            raise ValueError(f"factors must be >= 1, got {self.factors}")
        if self.max_iter < 0:
            raise ValueError(f"max_iter must be >= 0, got {self.max_iter}")
        if self.learn_rate <= 0:
            raise ValueError(f"learn_rate must be > 0, got {self.learn_rate}")
        if self.reg < 0 or self.reg_social < 0:
            raise ValueError("regularization strengths must be >= 0")


def _inv_sqrt_counts(counts: np.ndarray) -> np.ndarray:
    out = np.zeros(counts.shape[0])
    nz = counts > 0
    out[nz] = 1.0 / np.sqrt(counts[nz])
    return out


def _user_item_csr(ds: RatingDataset) -> tuple[np.ndarray, np.ndarray]:
    """CSR (indptr, items) of each user's rated items, ascending."""
    csr = ds.pattern_csr()
    csr.sort_indices()
    return csr.indptr.astype(np.int64), csr.indices.astype(np.int32)


def _segment_sums(values: np.ndarray, members: np.ndarray, indptr: np.ndarray,
                  weighted: bool = False) -> np.ndarray:
    """Per-segment sums of ``values[members]``, optionally |segment|^-1/2 scaled."""
    n = indptr.shape[0] - 1
    counts = np.diff(indptr)
    sums = np.zeros((n, values.shape[1]))
    if members.shape[0]:
        rows = np.repeat(np.arange(n), counts)
        np.add.at(sums, rows, values[members])
    if weighted:
        sums *= _inv_sqrt_counts(counts)[:, None]
    return sums


class FactorModel(Predictor):
    """Trained latent factors plus biases; immutable once finalized."""

    def __init__(self, variant: str, hp: HyperParams, global_mean: float,
                 bu: np.ndarray, bj: np.ndarray, p: np.ndarray, q: np.ndarray,
                 y: np.ndarray | None, w: np.ndarray | None,
                 ui_indptr: np.ndarray, ui_items: np.ndarray,
                 t_indptr: np.ndarray, t_trustees: np.ndarray,
                 user_seen: np.ndarray, item_seen: np.ndarray,
                 scale: tuple[float, float]):
        self.variant = variant
        self.hp = hp
        self.global_mean = global_mean
        self.bu = bu
        self.bj = bj
        self.p = p
        self.q = q
        self.y = y
        self.w = w
        self.ui_indptr = ui_indptr
        self.ui_items = ui_items
        self.t_indptr = t_indptr
        self.t_trustees = t_trustees
        self.user_seen = user_seen
        self.item_seen = item_seen
        self.scale_min, self.scale_max = scale
        self.p_eff = self._compose_effective_p()

    def _compose_effective_p(self) -> np.ndarray:
        """p_u plus the normalized implicit-feedback and trustee sums."""
        p_eff = self.p.copy()
        if self.y is not None:
            p_eff += _segment_sums(self.y, self.ui_items, self.ui_indptr, weighted=True)
        if self.w is not None:
            p_eff += _segment_sums(self.w, self.t_trustees, self.t_indptr, weighted=True)
        return p_eff

    def _score(self, u: int, j: int) -> float:
        n, m = self.p.shape[0], self.q.shape[0]
        u_ok = 0 <= u < n and self.user_seen[u]
        j_ok = 0 <= j < m and self.item_seen[j]
        if self.variant == "regsvd":
            if u_ok and j_ok:
                return float(np.dot(self.p_eff[u], self.q[j]))
            return self.global_mean
        score = self.global_mean
        if 0 <= u < n:
            score += self.bu[u]
        if 0 <= j < m:
            score += self.bj[j]
        if u_ok and j_ok:
            score += float(np.dot(self.p_eff[u], self.q[j]))
        return score

    def predict_many(self, users, items):
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        n, m = self.p.shape[0], self.q.shape[0]
        u_in = (users >= 0) & (users < n)
        j_in = (items >= 0) & (items < m)
        uc = np.clip(users, 0, n - 1)
        jc = np.clip(items, 0, m - 1)
        both = u_in & j_in & self.user_seen[uc] & self.item_seen[jc]
        dot = np.einsum("ij,ij->i", self.p_eff[uc], self.q[jc])
        if self.variant == "regsvd":
            raw = np.where(both, dot, self.global_mean)
        else:
            raw = np.full(users.shape[0], self.global_mean)
            raw += np.where(u_in, self.bu[uc], 0.0)
            raw += np.where(j_in, self.bj[jc], 0.0)
            raw += np.where(both, dot, 0.0)
        return np.clip(raw, self.scale_min, self.scale_max)

    def save(self, path) -> None:
        """Versioned dump of dimensions, hyperparameters, and all arrays."""
        arrays = {
            "version": np.array([_DUMP_VERSION]),
            "variant": np.array([self.variant]),
            "hp": np.array([self.hp.factors, self.hp.max_iter, self.hp.learn_rate,
                            self.hp.reg, self.hp.reg_social, self.hp.seed,
                            self.hp.init_std]),
            "global_mean": np.array([self.global_mean]),
            "scale": np.array([self.scale_min, self.scale_max]),
            "bu": self.bu, "bj": self.bj, "p": self.p, "q": self.q,
            "ui_indptr": self.ui_indptr, "ui_items": self.ui_items,
            "t_indptr": self.t_indptr, "t_trustees": self.t_trustees,
            "user_seen": self.user_seen, "item_seen": self.item_seen,
        }
        if self.y is not None:
            arrays["y"] = self.y
        if self.w is not None:
            arrays["w"] = self.w
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path) -> "FactorModel":
        with np.load(path, allow_pickle=False) as data:
            version = int(data["version"][0])
            if version != _DUMP_VERSION:
                raise ValueError(f"unsupported model dump version {version}")
            hp_vals = data["hp"]
            hp = HyperParams(
                factors=int(hp_vals[0]), max_iter=int(hp_vals[1]),
                learn_rate=float(hp_vals[2]), reg=float(hp_vals[3]),
                reg_social=float(hp_vals[4]), seed=int(hp_vals[5]),
                init_std=float(hp_vals[6]),
            )
            return cls(
                variant=str(data["variant"][0]),
                hp=hp,
                global_mean=float(data["global_mean"][0]),
                bu=data["bu"], bj=data["bj"], p=data["p"], q=data["q"],
                y=data["y"] if "y" in data else None,
                w=data["w"] if "w" in data else None,
                ui_indptr=data["ui_indptr"], ui_items=data["ui_items"],
                t_indptr=data["t_indptr"], t_trustees=data["t_trustees"],
                user_seen=data["user_seen"], item_seen=data["item_seen"],
                scale=(float(data["scale"][0]), float(data["scale"][1])),
            )


def _init_factors(rng: np.ndarray, shape: tuple[int, int], std: float) -> np.ndarray:
    return rng.normal(0.0, std, size=shape)


def _check_finite(epoch: int, sq_sum: float, *arrays) -> None:
    if not np.isfinite(sq_sum):
        raise DivergenceError(epoch, "non-finite training loss")
    for arr in arrays:
        if arr is not None and not np.all(np.isfinite(arr)):
            raise DivergenceError(epoch, "non-finite parameter")


def train_latent_factor(train: RatingDataset, hp: HyperParams,
                        variant: str) -> FactorModel:
    """SGD training of regsvd / biasedmf / svdpp on the rating entries.

    regsvd predicts the bare factor product; biasedmf adds the mean and
    biases; svdpp additionally folds rated-item factors into the user
    vector and switches to degree-weighted regularization (matching the
    trust model with no edges).
    """
    if variant == "trustsvd":
        return train_trust_svd(train, TrustEdgeList.empty(train.n_users), hp)
    if variant not in ("regsvd", "biasedmf", "svdpp"):
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if train.n_ratings == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(hp.seed)
    n, m = train.n_users, train.n_items
    p = _init_factors(rng, (n, hp.factors), hp.init_std)
    q = _init_factors(rng, (m, hp.factors), hp.init_std)
    y = _init_factors(rng, (m, hp.factors), hp.init_std) if variant == "svdpp" else None
    bu = np.zeros(n)
    bj = np.zeros(m)
    mu = float(np.mean(train.ratings))
    ui_indptr, ui_items = _user_item_csr(train)
    u_w = _inv_sqrt_counts(np.diff(ui_indptr))
    i_w = _inv_sqrt_counts(np.bincount(train.items, minlength=m))
    for epoch in range(hp.max_iter):
        order = rng.permutation(train.n_ratings)
        if variant == "svdpp":
            sq = _kernels.epoch_implicit(train.users, train.items, train.ratings,
                                         order, p, q, y, bu, bj, mu, hp.learn_rate,
                                         hp.reg, ui_indptr, ui_items, u_w, i_w)
        else:
            sq = _kernels.epoch_mf(train.users, train.items, train.ratings, order,
                                   p, q, bu, bj, mu, hp.learn_rate, hp.reg,
                                   variant == "biasedmf")
        _check_finite(epoch, sq, p, q, y, bu, bj)
    empty = TrustEdgeList.empty(n)
    return FactorModel(
        variant=variant, hp=hp, global_mean=mu,
        bu=bu, bj=bj, p=p, q=q, y=y, w=None,
        ui_indptr=ui_indptr, ui_items=ui_items,
        t_indptr=empty.out_indptr, t_trustees=empty.trustees,
        user_seen=np.diff(ui_indptr) > 0,
        item_seen=np.bincount(train.items, minlength=m) > 0,
        scale=(train.scale_min, train.scale_max),
    )


def train_trust_svd(train: RatingDataset, trust: TrustEdgeList,
                    hp: HyperParams) -> FactorModel:
    """SGD jointly over rating entries and trust edges.

    Fed an extracted edge list this is the implicit-trust model; fed a
    parsed explicit edge list it is the explicit-trust model; fed an empty
    list (with reg_social = 0) it reduces to svdpp.
    """
    if train.n_ratings == 0:
        raise ValueError("empty training set")
    if trust.n_users != train.n_users:
        raise ValueError(
            f"trust edge list covers {trust.n_users} users, dataset has {train.n_users}"
        )
    if trust.n_edges and (trust.trustees.max() >= train.n_users or trust.trustees.min() < 0):
        raise ValueError("trust edge references a user outside the dataset")
    rng = np.random.default_rng(hp.seed)
    n, m = train.n_users, train.n_items
    p = _init_factors(rng, (n, hp.factors), hp.init_std)
    q = _init_factors(rng, (m, hp.factors), hp.init_std)
    y = _init_factors(rng, (m, hp.factors), hp.init_std)
    w = _init_factors(rng, (n, hp.factors), hp.init_std)
    bu = np.zeros(n)
    bj = np.zeros(m)
    mu = float(np.mean(train.ratings))
    ui_indptr, ui_items = _user_item_csr(train)
    u_w = _inv_sqrt_counts(np.diff(ui_indptr))
    i_w = _inv_sqrt_counts(np.bincount(train.items, minlength=m))
    tu_w = _inv_sqrt_counts(trust.out_degree)
    tv_w = _inv_sqrt_counts(trust.in_degree)
    seen = np.full(n, -1, dtype=np.int64)
    for epoch in range(hp.max_iter):
        order = rng.permutation(train.n_ratings)
        sq = _kernels.epoch_trust(train.users, train.items, train.ratings, order,
                                  p, q, y, w, bu, bj, mu, hp.learn_rate, hp.reg,
                                  hp.reg_social, ui_indptr, ui_items, u_w, i_w,
                                  trust.out_indptr, trust.trustees, trust.weights,
                                  tu_w, tv_w, seen, epoch)
        _check_finite(epoch, sq, p, q, y, w, bu, bj)
    return FactorModel(
        variant="trustsvd", hp=hp, global_mean=mu,
        bu=bu, bj=bj, p=p, q=q, y=y, w=w,
        ui_indptr=ui_indptr, ui_items=ui_items,
        t_indptr=trust.out_indptr, t_trustees=trust.trustees,
        user_seen=np.diff(ui_indptr) > 0,
        item_seen=np.bincount(train.items, minlength=m) > 0,
        scale=(train.scale_min, train.scale_max),
    )


# --- Full-batch reference objective (used by tests and diagnostics) -------

def trust_loss(p, q, y, w, bu, bj, mu, train: RatingDataset,
               trust: TrustEdgeList, reg: float, reg_social: float) -> float:
    """Total trust-model objective evaluated on the full batch."""
    ui_indptr, ui_items = _user_item_csr(train)
    u_w = _inv_sqrt_counts(np.diff(ui_indptr))
    i_counts = np.bincount(train.items, minlength=train.n_items)
    i_w = _inv_sqrt_counts(i_counts)
    tu_w = _inv_sqrt_counts(trust.out_degree)
    tv_w = _inv_sqrt_counts(trust.in_degree)
    p_eff = _effective_p(p, y, w, ui_indptr, ui_items, u_w, trust, tu_w)
    preds = mu + bu[train.users] + bj[train.items] + np.einsum(
        "ij,ij->i", p_eff[train.users], q[train.items])
    err = preds - train.ratings
    loss = 0.5 * np.dot(err, err)
    if trust.n_edges:
        t_hat = np.einsum("ij,ij->i", w[trust.trustees], p[trust.trusters])
        t_err = t_hat - trust.weights
        loss += 0.5 * reg_social * np.dot(t_err, t_err)
    loss += 0.5 * reg * np.sum((u_w + reg_social * tu_w) * np.sum(p * p, axis=1))
    loss += 0.5 * reg * np.sum(i_w * np.sum(q * q, axis=1))
    loss += 0.5 * reg * np.sum(i_w * np.sum(y * y, axis=1))
    loss += 0.5 * reg * np.sum(tv_w * np.sum(w * w, axis=1))
    loss += 0.5 * reg * np.sum(u_w * bu * bu)
    loss += 0.5 * reg * np.sum(i_w * bj * bj)
    return float(loss)


def trust_gradients(p, q, y, w, bu, bj, mu, train: RatingDataset,
                    trust: TrustEdgeList, reg: float, reg_social: float):
    """Analytic full-batch gradients of ``trust_loss`` for every parameter."""
    n, m = train.n_users, train.n_items
    ui_indptr, ui_items = _user_item_csr(train)
    u_w = _inv_sqrt_counts(np.diff(ui_indptr))
    i_w = _inv_sqrt_counts(np.bincount(train.items, minlength=m))
    tu_w = _inv_sqrt_counts(trust.out_degree)
    tv_w = _inv_sqrt_counts(trust.in_degree)
    p_eff = _effective_p(p, y, w, ui_indptr, ui_items, u_w, trust, tu_w)
    preds = mu + bu[train.users] + bj[train.items] + np.einsum(
        "ij,ij->i", p_eff[train.users], q[train.items])
    err = preds - train.ratings

    g_bu = np.bincount(train.users, weights=err, minlength=n) + reg * u_w * bu
    g_bj = np.bincount(train.items, weights=err, minlength=m) + reg * i_w * bj
    eq = err[:, None] * q[train.items]
    g_p = np.zeros_like(p)
    np.add.at(g_p, train.users, eq)
    g_q = err[:, None] * p_eff[train.users]
    gq = np.zeros_like(q)
    np.add.at(gq, train.items, g_q)
    gq += reg * i_w[:, None] * q
    # y_i gathers u_w[u] * err * q_j over every rating of every user that
    # rated i; equivalently scatter (u_w[u] * err)[r] * q_j over I_u.
    g_y = np.zeros_like(y)
    per_user_eq = np.zeros_like(p)
    np.add.at(per_user_eq, train.users, (u_w[train.users] * err)[:, None] * q[train.items])
    rows = np.repeat(np.arange(n), np.diff(ui_indptr))
    np.add.at(g_y, ui_items, per_user_eq[rows])
    g_y += reg * i_w[:, None] * y
    g_w = np.zeros_like(w)
    if trust.n_edges:
        t_hat = np.einsum("ij,ij->i", w[trust.trustees], p[trust.trusters])
        t_err = (t_hat - trust.weights) * reg_social
        np.add.at(g_w, trust.trustees, t_err[:, None] * p[trust.trusters])
        np.add.at(g_p, trust.trusters, t_err[:, None] * w[trust.trustees])
    g_w += reg * tv_w[:, None] * w
    g_p += reg * ((u_w + reg_social * tu_w)[:, None]) * p
    return g_p, gq, g_y, g_w, g_bu, g_bj


def _effective_p(p, y, w, ui_indptr, ui_items, u_w, trust, tu_w):
    p_eff = p + u_w[:, None] * _segment_sums(y, ui_items, ui_indptr)
    if trust.n_edges:
        p_eff += tu_w[:, None] * _segment_sums(w, trust.trustees, trust.out_indptr)
    return p_eff
