"""Implicit trust extraction from the bipartite rating graph.

Each user gets a neighbor-degree profile: a histogram of the degrees of the
items they rated.  Profiles are normalized to probability vectors and
compared with the Hellinger distance d = sqrt(sum_i (sqrt(p_i) - sqrt(q_i))^2),
which lies in [0, sqrt(2)].  A global edge threshold is derived from a target
social-graph density by fitting a normal distribution to sampled pairwise
distances; every user pair at distance <= threshold becomes a reciprocal
trust edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from helltrust.datasets import RatingDataset, TrustEdgeList

SQRT2 = math.sqrt(2.0)


class ExtractionError(RuntimeError):
    """Trust extraction cannot proceed (degenerate fit, bad density target)."""


class DegenerateFitError(ExtractionError):
    """All sampled distances identical; no spread to place a threshold on."""


@dataclass
class DegreeProfile:
    """Histogram of item degrees among one user's rated items.

    ``counts[d-1]`` is the number of the user's items whose training degree
    is d; the vector is trimmed at the user's own maximum item degree.
    Users with no training ratings get an empty vector and are unusable.
    """

    user: int
    counts: np.ndarray

    @property
    def usable(self) -> bool:
        return self.counts.shape[0] > 0

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def build_degree_profiles(ds: RatingDataset) -> list[DegreeProfile]:
    """One profile per user, from the supplied (training) records only."""
    item_degree = np.array([len(us) for us in ds.item_users], dtype=np.int64)
    profiles = []
    for u in range(ds.n_users):
        rated = ds.user_items[u]
        if rated.shape[0] == 0:
            profiles.append(DegreeProfile(u, np.zeros(0, dtype=np.int64)))
            continue
        degs = item_degree[rated]
        counts = np.bincount(degs)[1:]  # bin d-1 <- degree d; degree 0 impossible here
        profiles.append(DegreeProfile(u, counts.astype(np.int64)))
    return profiles


def hellinger_distance(x: DegreeProfile, y: DegreeProfile) -> float:
    """Distance between two users' normalized degree profiles, in [0, sqrt(2)]."""
    if not x.usable or not y.usable:
        raise ValueError("cannot compute a distance for a user with no ratings")
    width = max(x.counts.shape[0], y.counts.shape[0])
    p = np.zeros(width)
    q = np.zeros(width)
    p[: x.counts.shape[0]] = x.counts / x.counts.sum()
    q[: y.counts.shape[0]] = y.counts / y.counts.sum()
    return float(np.sqrt(np.sum((np.sqrt(p) - np.sqrt(q)) ** 2)))


@dataclass
class ProfilePack:
    """CSR packing of all profiles for the numba pair kernels.

    ``bins[indptr[u]:indptr[u+1]]`` holds the ascending degree bins with
    nonzero counts for user u and ``sqmass`` the square roots of the
    corresponding normalized masses.
    """

    indptr: np.ndarray
    bins: np.ndarray
    sqmass: np.ndarray
    usable: np.ndarray

    @classmethod
    def from_profiles(cls, profiles: list[DegreeProfile]) -> "ProfilePack":
        indptr = np.zeros(len(profiles) + 1, dtype=np.int64)
        bins_parts = []
        mass_parts = []
        usable = np.zeros(len(profiles), dtype=np.bool_)
        for u, prof in enumerate(profiles):
            nz = np.flatnonzero(prof.counts)
            indptr[u + 1] = indptr[u] + nz.shape[0]
            if nz.shape[0]:
                usable[u] = True
                bins_parts.append(nz.astype(np.int32))
                mass_parts.append(np.sqrt(prof.counts[nz] / prof.counts.sum()))
        bins = np.concatenate(bins_parts) if bins_parts else np.zeros(0, dtype=np.int32)
        sqmass = np.concatenate(mass_parts) if mass_parts else np.zeros(0)
        return cls(indptr=indptr, bins=bins, sqmass=sqmass, usable=usable)


@njit(cache=True)
def _merge_distance(bins, sqmass, a0, a1, b0, b1):
    # Walk the union of the two ascending bin lists; absent bins contribute
    # their counterpart's full mass, matching the zero-padded dense formula.
    acc = 0.0
    i, j = a0, b0
    while i < a1 and j < b1:
        ba, bb = bins[i], bins[j]
        if ba == bb:
            diff = sqmass[i] - sqmass[j]
            acc += diff * diff
            i += 1
            j += 1
        elif ba < bb:
            acc += sqmass[i] * sqmass[i]
            i += 1
        else:
            acc += sqmass[j] * sqmass[j]
            j += 1
    while i < a1:
        acc += sqmass[i] * sqmass[i]
        i += 1
    while j < b1:
        acc += sqmass[j] * sqmass[j]
        j += 1
    return math.sqrt(acc)


@njit(cache=True)
def _pair_distances(indptr, bins, sqmass, us, vs, out):
    for k in range(us.shape[0]):
        u, v = us[k], vs[k]
        out[k] = _merge_distance(bins, sqmass, indptr[u], indptr[u + 1], indptr[v], indptr[v + 1])


@njit(cache=True)
def _count_edges(indptr, bins, sqmass, users, threshold):
    n = users.shape[0]
    total = 0
    for a in range(n):
        u = users[a]
        u0, u1 = indptr[u], indptr[u + 1]
        for b in range(a + 1, n):
            v = users[b]
            d = _merge_distance(bins, sqmass, u0, u1, indptr[v], indptr[v + 1])
            if d <= threshold:
                total += 1
    return total


@njit(cache=True)
def _fill_edges(indptr, bins, sqmass, users, threshold, out_u, out_v):
    n = users.shape[0]
    pos = 0
    for a in range(n):
        u = users[a]
        u0, u1 = indptr[u], indptr[u + 1]
        for b in range(a + 1, n):
            v = users[b]
            d = _merge_distance(bins, sqmass, u0, u1, indptr[v], indptr[v + 1])
            if d <= threshold:
                out_u[pos] = u
                out_v[pos] = v
                pos += 1
    return pos


def _decode_pair(codes: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Map pair codes in [0, n*(n-1)/2) to unordered index pairs (i < j)."""
    codes = np.asarray(codes, dtype=np.int64)

    def row_start(row):
        return row * n - (row * (row + 1)) // 2

    # Row i starts at offset i*n - i*(i+1)/2 in the flattened upper triangle.
    i = np.floor((2 * n - 1 - np.sqrt((2.0 * n - 1) ** 2 - 8.0 * codes)) / 2).astype(np.int64)
    # The float sqrt can land one row off at exact boundaries; nudge back.
    i = np.where(codes < row_start(i), i - 1, i)
    i = np.where(codes >= row_start(i + 1), i + 1, i)
    j = codes - row_start(i) + i + 1
    return i, j


def sample_distances(profiles: list[DegreeProfile], n: int, seed: int) -> np.ndarray:
    """Distances of n uniformly sampled unordered pairs of usable users."""
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    pack = ProfilePack.from_profiles(profiles)
    usable_users = np.flatnonzero(pack.usable).astype(np.int32)
    m = usable_users.shape[0]
    if m < 2:
        raise ExtractionError("fewer than 2 users have a usable degree profile")
    n_pairs = m * (m - 1) // 2
    rng = np.random.default_rng(seed)
    codes = rng.integers(0, n_pairs, size=n)
    ii, jj = _decode_pair(codes, m)
    us = usable_users[ii]
    vs = usable_users[jj]
    out = np.empty(n)
    _pair_distances(pack.indptr, pack.bins, pack.sqmass, us, vs, out)
    return out


@dataclass
class NormalFit:
    """Normal distribution fitted to sampled distances by maximum likelihood."""

    mu_hat: float
    sigma_hat: float
    sample_size: int

    @property
    def degenerate(self) -> bool:
        return self.sigma_hat == 0.0


def fit_normal_mle(samples) -> NormalFit:
    """Sample mean and the sqrt of the divide-by-n variance."""
    data = np.asarray(samples, dtype=np.float64)
    if data.shape[0] < 2:
        raise ValueError(f"need at least 2 samples, got {data.shape[0]}")
    mu = float(np.mean(data))
    sigma = float(np.sqrt(np.mean((data - mu) ** 2)))
    return NormalFit(mu_hat=mu, sigma_hat=sigma, sample_size=data.shape[0])


def normal_cdf(z: float) -> float:
    """Standard normal CDF via erfc (accurate in both tails)."""
    return 0.5 * math.erfc(-z / SQRT2)


# Rational approximation coefficients for the normal quantile (Acklam).
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)


def inverse_normal_cdf(p: float) -> float:
    """Standard normal quantile: the z with normal_cdf(z) = p.

    Rational approximation refined with one Halley step against erfc;
    accurate to well below 1e-9 over p in [1e-10, 1 - 1e-10].
    """
    if not (0.0 < p < 1.0):
        raise ValueError(f"p must lie strictly inside (0, 1), got {p}")
    p_low, p_high = 0.02425, 1 - 0.02425
    if p < p_low:
        q = math.sqrt(-2 * math.log(p))
        z = ((((( _C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            (((( _D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    elif p <= p_high:
        q = p - 0.5
        r = q * q
        z = ((((( _A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            ((((( _B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1)
    else:
        q = math.sqrt(-2 * math.log1p(-p))
        z = -((((( _C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            (((( _D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1)
    # One Halley refinement against the erfc-based CDF.
    err = normal_cdf(z) - p
    u = err * math.sqrt(2 * math.pi) * math.exp(z * z / 2)
    z -= u / (1 + z * u / 2)
    return z


@dataclass
class ThresholdSpec:
    """Edge threshold derived from a target mean degree of the social graph."""

    expected_degree: float
    other_side_count: int
    alpha: float
    threshold: float


def compute_threshold(fit: NormalFit, expected_degree: float, m: int) -> ThresholdSpec:
    """Threshold T with P(distance <= T) = expected_degree / m under the fit."""
    if fit.degenerate:
        raise DegenerateFitError(
            "distance distribution is degenerate (sigma = 0); cannot place a threshold"
        )
    alpha = expected_degree / m
    if not (0.0 < alpha < 1.0):
        raise ExtractionError(
            f"target density alpha = {expected_degree}/{m} = {alpha:.6g} outside (0, 1)"
        )
    t = fit.mu_hat + fit.sigma_hat * inverse_normal_cdf(alpha)
    return ThresholdSpec(
        expected_degree=expected_degree, other_side_count=m, alpha=alpha, threshold=t
    )


def extract_trust_edges(profiles: list[DegreeProfile], threshold: float) -> TrustEdgeList:
    """Reciprocal edges for every usable pair at distance <= threshold."""
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    pack = ProfilePack.from_profiles(profiles)
    users = np.flatnonzero(pack.usable).astype(np.int32)
    n_hits = _count_edges(pack.indptr, pack.bins, pack.sqmass, users, threshold)
    out_u = np.empty(n_hits, dtype=np.int32)
    out_v = np.empty(n_hits, dtype=np.int32)
    _fill_edges(pack.indptr, pack.bins, pack.sqmass, users, threshold, out_u, out_v)
    trusters = np.concatenate([out_u, out_v])
    trustees = np.concatenate([out_v, out_u])
    weights = np.ones(2 * n_hits, dtype=np.float64)
    return TrustEdgeList(trusters, trustees, weights, n_users=len(profiles))


def extract_trust(
    ds: RatingDataset,
    expected_degree: float,
    sample_size: int | None = None,
    seed: int = 0,
) -> tuple[TrustEdgeList, dict]:
    """Full pipeline: profiles -> sampled distances -> fit -> threshold -> edges.

    Returns the symmetric edge list plus a diagnostics dict (mu, sigma, alpha,
    T, edge and pair counts, mean degree).  Distances, the fit, and the edges
    all come from the supplied dataset only, so feeding a training fold keeps
    held-out ratings out of the graph.
    """
    profiles = build_degree_profiles(ds)
    n_usable = sum(1 for p in profiles if p.usable)
    n_pairs = n_usable * (n_usable - 1) // 2
    if sample_size is None:
        sample_size = min(n_pairs, 1_000_000)
    sample_size = max(int(sample_size), 2)
    distances = sample_distances(profiles, sample_size, seed)
    fit = fit_normal_mle(distances)
    spec = compute_threshold(fit, expected_degree, ds.n_items)
    edges = extract_trust_edges(profiles, spec.threshold)
    pairs = edges.n_edges // 2
    diagnostics = {
        "mu": fit.mu_hat,
        "sigma": fit.sigma_hat,
        "alpha": spec.alpha,
        "T": spec.threshold,
        "edges": edges.n_edges,
        "mean_degree": 2.0 * pairs / ds.n_users if ds.n_users else 0.0,
        "usable_users": n_usable,
        "sample_size": sample_size,
    }
    return edges, diagnostics


def format_diagnostics(diag: dict) -> str:
    return (
        f"mu={diag['mu']:.6g} sigma={diag['sigma']:.6g} alpha={diag['alpha']:.6g} "
        f"T={diag['T']:.6g} edges={diag['edges']} mean_degree={diag['mean_degree']:.6g}"
    )
