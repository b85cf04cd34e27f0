"""Exact k-nearest-neighbour search, kernel density and representative selection."""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy.special import logsumexp

from .ers import SuperpixelMap

_BLOCK_ENTRIES = 8_000_000


@numba.njit(cache=True)
def _select_rows(X, G, sq, row0, k, slack, out_ids, out_d):
    """Exact top-k per row of a block; ``G`` holds centred inner products."""
    n = G.shape[1]
    b = X.shape[1]
    sq_max = 0.0
    for j in range(n):
        sq_max = max(sq_max, sq[j])
    best = np.empty(k)
    cand = np.empty(n, dtype=np.int64)
    for r in range(G.shape[0]):
        i = row0 + r
        # k-th smallest screening value, self excluded
        for q in range(k):
            best[q] = np.inf
        for j in range(n):
            if j == i:
                continue
            v = sq[i] + sq[j] - 2.0 * G[r, j]
            if v < best[k - 1]:
                q = k - 1
                while q > 0 and best[q - 1] > v:
                    best[q] = best[q - 1]
                    q -= 1
                best[q] = v
        cut = best[k - 1] + slack * (sq[i] + sq_max) + 1e-300
        m = 0
        for j in range(n):
            if j != i and sq[i] + sq[j] - 2.0 * G[r, j] <= cut:
                cand[m] = j
                m += 1
        exact = np.empty(m)
        for c in range(m):
            j = cand[c]
            s = 0.0
            for t in range(b):
                d = X[i, t] - X[j, t]
                s += d * d
            exact[c] = s
        # stable order by (distance, index); cand is already index-sorted
        order = np.argsort(exact, kind="mergesort")
        for q in range(k):
            out_ids[i, q] = cand[order[q]]
            out_d[i, q] = np.sqrt(exact[order[q]])


def knn_index(pixels: np.ndarray, k_n: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact Euclidean k-NN table (self excluded, ties to the smaller index).

    Distances are screened with a BLAS product on mean-centred data and then
    recomputed directly for every candidate within rounding tolerance of the
    k-th value, so the returned order is exact.
    """
    X = np.ascontiguousarray(pixels, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if not 1 <= k_n < n:
        raise ValueError(f"k_n must lie in [1, {n - 1}], got {k_n}")
    Xc = X - X.mean(axis=0)
    sq = np.einsum("ij,ij->i", Xc, Xc)
    slack = 8.0 * (X.shape[1] + 2) * np.finfo(float).eps
    ids = np.empty((n, k_n), dtype=np.int64)
    dists = np.empty((n, k_n))
    block = max(1, _BLOCK_ENTRIES // n)
    for row0 in range(0, n, block):
        G = Xc[row0:row0 + block] @ Xc.T
        _select_rows(X, G, sq, row0, k_n, slack, ids, dists)
    return ids, dists


@dataclass(frozen=True)
class DensityField:
    zeta: np.ndarray
    log_raw: np.ndarray  # log of the unnormalised kernel sums
    knn_ids: np.ndarray
    knn_dists: np.ndarray
    sigma0: float

    @property
    def k_n(self) -> int:
        return self.knn_ids.shape[1]

    @property
    def raw(self) -> np.ndarray:
        return np.exp(self.log_raw)


def kde(knn_ids: np.ndarray, knn_dists: np.ndarray, sigma0: float) -> DensityField:
    """``zeta(x) ~ sum over the k_n nearest y of exp(-|x - y|^2 / sigma0^2)``, normalised to sum 1.

    Sums are taken in log space so that tiny kernels do not collapse to zero;
    values that still underflow after normalisation are floored at the
    smallest normal double.
    """
    if not sigma0 > 0:
        raise ValueError(f"sigma0 must be positive, got {sigma0}")
    log_raw = logsumexp(-(knn_dists**2) / sigma0**2, axis=1)
    zeta = np.exp(log_raw - logsumexp(log_raw))
    zeta = np.maximum(zeta, np.finfo(float).tiny)
    return DensityField(zeta, log_raw, knn_ids, knn_dists, float(sigma0))


def sigma0_grid(knn_dists: np.ndarray, percentiles=(10, 20, 30, 40, 50, 60, 70, 80, 90)) -> list[float]:
    return [sigma0_at_percentile(knn_dists, p) for p in percentiles]


def sigma0_at_percentile(knn_dists: np.ndarray, percentile: float) -> float:
    """Percentile of the pooled k-NN distances; zero distances are skipped if needed."""
    pool = np.asarray(knn_dists).ravel()
    value = float(np.percentile(pool, percentile))
    if value > 0:
        return value
    positive = pool[pool > 0]
    return float(np.percentile(positive, percentile)) if positive.size else 1.0


@dataclass(frozen=True)
class RepresentativeSet:
    ids: np.ndarray  # pixel indices, ascending
    owner: np.ndarray  # superpixel id of each selected pixel
    k: int


def select_representatives(density: DensityField | np.ndarray, sp: SuperpixelMap, k: int) -> RepresentativeSet:
    """Keep the ``k`` highest-density pixels of every superpixel."""
    if k < 1:
        raise ValueError("k must be >= 1")
    zeta = density.zeta if isinstance(density, DensityField) else np.asarray(density)
    assign = sp.assignment
    if zeta.size != assign.size:
        raise ValueError("density and superpixel map cover different pixel sets")
    idx = np.arange(assign.size)
    order = np.lexsort((idx, -zeta, assign))
    grouped = assign[order]
    starts = np.searchsorted(grouped, grouped, side="left")
    rank = np.arange(order.size) - starts
    chosen = np.sort(order[rank < k])
    return RepresentativeSet(chosen, assign[chosen], int(k))
