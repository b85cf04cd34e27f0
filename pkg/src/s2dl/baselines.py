"""Reference clusterers: K-means with farthest-point seeding and density peaks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .density import kde, knn_index, sigma0_at_percentile
from .modes import peak_distances, propagate, seed_labels, select_modes
from .nearest import sqdist


@dataclass(frozen=True)
class BaselineConfig:
    method: str = "kmeans"
    K: int = 2
    seed: int = 0
    k_n: int = 20
    sigma0: float | None = None
    sigma0_percentile: float = 50.0
    max_iter: int = 300
    n_init: int = 10

    def __post_init__(self):
        if self.method not in ("kmeans", "dpc"):
            raise ValueError(f"unknown baseline {self.method!r}")
        if self.K < 1:
            raise ValueError("K must be >= 1")


@dataclass
class KMeansResult:
    labels: np.ndarray  # 1..K
    centers: np.ndarray
    objective_history: list[float] = field(default_factory=list)
    n_iter: int = 0


def _assign(X, centers):
    d2 = (np.einsum("ij,ij->i", centers, centers)[None, :] - 2.0 * X @ centers.T)
    return np.argmin(d2, axis=1)


def _costs(X, centers, assign):
    diff = X - centers[assign]
    return np.einsum("ij,ij->i", diff, diff)


def farthest_point_seeds(X: np.ndarray, K: int, first: int) -> np.ndarray:
    """Start at pixel ``first``, then repeatedly add the pixel farthest from the chosen set."""
    chosen = [int(first)]
    near = sqdist(X, None, np.arange(X.shape[0]), chosen[0])
    for _ in range(1, K):
        nxt = int(np.argmax(near))
        chosen.append(nxt)
        near = np.minimum(near, sqdist(X, None, np.arange(X.shape[0]), nxt))
    return np.asarray(chosen)


def _lloyd(X: np.ndarray, centers: np.ndarray, max_iter: int) -> KMeansResult:
    """Lloyd iterations until the assignment stops changing.

    A pixel only switches cluster when its new centre is strictly closer, so
    the assignment reaches an exact fixpoint. Empty clusters are re-seeded at
    the pixel currently farthest from its centre.
    """
    K = centers.shape[0]
    assign = _assign(X, centers)
    history = [float(_costs(X, centers, assign).sum())]
    it = 0
    for it in range(1, max_iter + 1):
        counts = np.bincount(assign, minlength=K)
        sums = np.zeros_like(centers)
        np.add.at(sums, assign, X)
        full = counts > 0
        centers = centers.copy()
        centers[full] = sums[full] / counts[full, None]
        for c in np.flatnonzero(~full):
            worst = int(np.argmax(_costs(X, centers, assign)))
            centers[c] = X[worst]
            assign[worst] = c
        proposal = _assign(X, centers)
        better = _costs(X, centers, proposal) < _costs(X, centers, assign)
        new_assign = np.where(better, proposal, assign)
        history.append(float(_costs(X, centers, new_assign).sum()))
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    return KMeansResult(assign + 1, centers, history, it)


@numba.njit(cache=True)
def _hartigan_pass(X, assign, centers, counts):
    """One sweep of single-pixel transfers that strictly lower the objective.

    Moving pixel ``x`` from cluster ``a`` to ``b`` changes the objective by
    ``n_b/(n_b+1) |x - c_b|^2 - n_a/(n_a-1) |x - c_a|^2``; centres are
    updated in place after each move. Returns the number of moves.
    """
    n, dims = X.shape
    K = centers.shape[0]
    moves = 0
    for i in range(n):
        a = assign[i]
        if counts[a] <= 1:
            continue
        da = 0.0
        for d in range(dims):
            diff = X[i, d] - centers[a, d]
            da += diff * diff
        remove = counts[a] / (counts[a] - 1.0) * da
        best_b = -1
        best_add = remove * (1.0 - 1e-12)
        for b in range(K):
            if b == a:
                continue
            db = 0.0
            for d in range(dims):
                diff = X[i, d] - centers[b, d]
                db += diff * diff
            add = counts[b] / (counts[b] + 1.0) * db
            if add < best_add:
                best_add = add
                best_b = b
        if best_b >= 0:
            b = best_b
            for d in range(dims):
                centers[a, d] = (centers[a, d] * counts[a] - X[i, d]) / (counts[a] - 1.0)
                centers[b, d] = (centers[b, d] * counts[b] + X[i, d]) / (counts[b] + 1.0)
            counts[a] -= 1
            counts[b] += 1
            assign[i] = b
            moves += 1
    return moves


def _hartigan(X: np.ndarray, res: KMeansResult, max_passes: int) -> KMeansResult:
    """Refine a Lloyd fixpoint until no single-pixel transfer lowers the objective."""
    K = res.centers.shape[0]
    assign = res.labels - 1
    history = list(res.objective_history)
    for _ in range(max_passes):
        counts = np.bincount(assign, minlength=K).astype(np.float64)
        centers = res.centers.copy()
        full = counts > 0
        sums = np.zeros_like(centers)
        np.add.at(sums, assign, X)
        centers[full] = sums[full] / counts[full, None]
        if _hartigan_pass(X, assign, centers, counts) == 0:
            break
        # exact centres again before scoring the pass
        counts = np.bincount(assign, minlength=K)
        sums = np.zeros_like(centers)
        np.add.at(sums, assign, X)
        full = counts > 0
        centers[full] = sums[full] / counts[full, None]
        history.append(float(_costs(X, centers, assign).sum()))
        res = KMeansResult(assign + 1, centers, history, res.n_iter)
    return KMeansResult(assign + 1, res.centers, history, res.n_iter)


_EXACT_1D_MAX = 4096


@numba.njit(cache=True)
def _segment_dp(v, K):
    """Optimal split of sorted values ``v`` into K contiguous runs; returns run starts."""
    n = v.shape[0]
    s1 = np.zeros(n + 1)
    s2 = np.zeros(n + 1)
    for i in range(n):
        s1[i + 1] = s1[i] + v[i]
        s2[i + 1] = s2[i] + v[i] * v[i]
    cost = np.full((K + 1, n + 1), np.inf)
    back = np.zeros((K + 1, n + 1), dtype=np.int64)
    cost[0, 0] = 0.0
    for k in range(1, K + 1):
        for j in range(k, n + 1):
            for i in range(k - 1, j):
                if cost[k - 1, i] == np.inf:
                    continue
                m = j - i
                mu = s1[j] - s1[i]
                sse = max((s2[j] - s2[i]) - mu * mu / m, 0.0)
                c = cost[k - 1, i] + sse
                if c < cost[k, j]:
                    cost[k, j] = c
                    back[k, j] = i
    starts = np.zeros(K, dtype=np.int64)
    j = n
    for k in range(K, 0, -1):
        starts[k - 1] = back[k, j]
        j = back[k, j]
    return starts


def _exact_1d(X: np.ndarray, K: int) -> KMeansResult:
    order = np.argsort(X[:, 0], kind="stable")
    starts = _segment_dp(X[order, 0], K)
    run = np.searchsorted(starts, np.arange(X.shape[0]), side="right") - 1
    assign = np.empty(X.shape[0], dtype=np.int64)
    assign[order] = run
    centers = np.array([X[assign == c].mean(0) for c in range(K)])
    return KMeansResult(assign + 1, centers, [float(_costs(X, centers, assign).sum())], 0)


def kmeans(pixels: np.ndarray, K: int, seed: int = 0, max_iter: int = 300, n_init: int = 10) -> KMeansResult:
    """Best of ``n_init`` Lloyd runs, each from farthest-point seeds and refined by Hartigan transfers.

    The runs start from distinct first pixels drawn with ``seed``, so the
    result is deterministic; ties in the final objective go to the earlier run.
    Single-band inputs of modest size also get the exact contiguous split
    (optimal 1-D clusters are intervals), kept when strictly better.
    """
    X = np.asarray(pixels, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if not 1 <= K <= n:
        raise ValueError(f"K must lie in [1, {n}]")
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    firsts = np.random.default_rng(seed).choice(n, size=min(n_init, n), replace=False)
    best = None
    for first in firsts:
        res = _lloyd(X, X[farthest_point_seeds(X, K, first)].copy(), max_iter)
        res = _hartigan(X, res, max_iter)
        if best is None or res.objective_history[-1] < best.objective_history[-1]:
            best = res
    if X.shape[1] == 1 and n <= _EXACT_1D_MAX:
        exact = _exact_1d(X, K)
        if exact.objective_history[-1] < best.objective_history[-1] * (1 - 1e-12):
            best = exact
    return best


def dpc(pixels: np.ndarray, K: int, k_n: int = 20, sigma0: float | None = None,
        sigma0_percentile: float = 50.0) -> np.ndarray:
    """Density peaks in Euclidean space: modes maximise density times peak distance."""
    X = np.asarray(pixels, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if not 1 <= K <= n:
        raise ValueError(f"K must lie in [1, {n}]")
    k_n = min(k_n, n - 1)
    if k_n >= 1:
        ids, dists = knn_index(X, k_n)
        if sigma0 is None:
            sigma0 = sigma0_at_percentile(dists, sigma0_percentile)
        rho = kde(ids, dists, sigma0).zeta
    else:
        rho = np.ones(n)
    delta = peak_distances(X, None, rho)
    modes = select_modes(delta, rho, K).modes
    return propagate(seed_labels(n, modes), X, None, rho)


def run_baseline(pixels: np.ndarray, config: BaselineConfig) -> np.ndarray:
    if config.method == "kmeans":
        return kmeans(pixels, config.K, config.seed, config.max_iter, config.n_init).labels
    return dpc(pixels, config.K, config.k_n, config.sigma0, config.sigma0_percentile)
