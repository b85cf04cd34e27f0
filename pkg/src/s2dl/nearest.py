"""Exact nearest-neighbour queries under a diagonal-weighted Euclidean metric.

``d(i, j)^2 = sum_k w_k (X_ik - X_jk)^2``. Candidates are screened with a
matrix product and every pair within rounding tolerance of the row minimum is
recomputed from the definition, so ties resolve exactly by index.
"""
from __future__ import annotations

import numpy as np

_BLOCK_ENTRIES = 4_000_000


def _prep(X, w):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    w = np.ones(X.shape[1]) if w is None else np.asarray(w, dtype=np.float64)
    Y = X * np.sqrt(w)
    sq = np.einsum("ij,ij->i", Y, Y)
    slack = 8.0 * (X.shape[1] + 2) * np.finfo(float).eps
    return X, w, Y, sq, slack


def sqdist(X: np.ndarray, w: np.ndarray | None, i, j) -> np.ndarray:
    """Exact weighted squared distance between rows ``i`` and ``j`` (broadcasting)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    diff = X[i] - X[j]
    if w is None:
        return np.sum(diff * diff, axis=-1)
    return np.sum(np.asarray(w) * diff * diff, axis=-1)


def _pair_sqdist(X, w, rows, cols):
    """``sqdist`` over many pairs, chunked to bound the temporary ``pairs x dims`` array."""
    step = max(1, _BLOCK_ENTRIES // max(X.shape[1], 1))
    if rows.size <= step:
        return sqdist(X, w, rows, cols)
    return np.concatenate([sqdist(X, w, rows[s:s + step], cols[s:s + step])
                           for s in range(0, rows.size, step)])


def _refine(X, w, rows, cols, keys):
    """Per-key lexicographic minimum of ``(d^2, col)`` over candidate pairs."""
    d2 = _pair_sqdist(X, w, rows, cols)
    rows = keys
    order = np.lexsort((cols, d2, rows))
    rows_o = rows[order]
    first = np.ones(order.size, dtype=bool)
    first[1:] = rows_o[1:] != rows_o[:-1]
    pick = order[first]
    return rows[pick], cols[pick], d2[pick]


def nearest_higher(X: np.ndarray, w: np.ndarray | None, zeta: np.ndarray, strict: bool,
                   subset: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """For every query row, the nearest row of higher density.

    Admissible targets are ``zeta[y] > zeta[x]`` when ``strict`` and
    ``zeta[y] >= zeta[x], y != x`` otherwise. Returns ``(dist, index)`` per
    query row, with ``inf`` / ``-1`` when nothing is admissible. ``subset``
    restricts the query rows (targets always range over all rows).
    """
    X, w, Y, sq, slack = _prep(X, w)
    zeta = np.asarray(zeta, dtype=np.float64)
    n = X.shape[0]
    queries = np.arange(n) if subset is None else np.asarray(subset, dtype=np.int64)
    dist = np.full(queries.size, np.inf)
    idx = np.full(queries.size, -1, dtype=np.int64)
    sq_max = sq.max() if n else 0.0
    block = max(1, _BLOCK_ENTRIES // max(n, 1))
    for s in range(0, queries.size, block):
        q = queries[s:s + block]
        approx = sq[q, None] + sq[None, :] - 2.0 * (Y[q] @ Y.T)
        if strict:
            adm = zeta[None, :] > zeta[q, None]
        else:
            adm = zeta[None, :] >= zeta[q, None]
            adm[np.arange(q.size), q] = False
        approx[~adm] = np.inf
        low = approx.min(axis=1)
        ok = np.isfinite(low)
        if not ok.any():
            continue
        tol = slack * (sq[q] + sq_max) + 1e-300
        cand = adm & (approx <= (low + tol)[:, None])
        r_loc, cols = np.nonzero(cand)
        r_pick, picked, d2 = _refine(X, w, q[r_loc], cols, r_loc)
        pos = s + r_pick
        dist[pos] = np.sqrt(d2)
        idx[pos] = picked
    return dist, idx


def farthest(X: np.ndarray, w: np.ndarray | None, i: int) -> float:
    """``max_y d(i, y)`` computed from the definition."""
    X = np.asarray(X, dtype=np.float64)
    return float(np.sqrt(np.max(sqdist(X, w, np.arange(X.shape[0]), i))))


def closest_pair(X: np.ndarray, a: np.ndarray, b: np.ndarray, w: np.ndarray | None = None
                 ) -> tuple[float, int, int]:
    """Minimum of ``(d(u, v), u, v)`` over ``u`` in ``a``, ``v`` in ``b`` (row indices of X)."""
    X, w, Y, sq, slack = _prep(X, w)
    a = np.sort(np.asarray(a, dtype=np.int64))
    b = np.sort(np.asarray(b, dtype=np.int64))
    if a.size == 0 or b.size == 0:
        raise ValueError("closest_pair needs two non-empty sets")
    best = (np.inf, -1, -1)
    sq_max = max(sq[a].max(), sq[b].max())
    block = max(1, _BLOCK_ENTRIES // b.size)
    # first pass: global screening minimum
    low = np.inf
    for s in range(0, a.size, block):
        u = a[s:s + block]
        approx = sq[u, None] + sq[None, b] - 2.0 * (Y[u] @ Y[b].T)
        low = min(low, float(approx.min()))
    cut = low + slack * 2.0 * sq_max + 1e-300
    for s in range(0, a.size, block):
        u = a[s:s + block]
        approx = sq[u, None] + sq[None, b] - 2.0 * (Y[u] @ Y[b].T)
        r, c = np.nonzero(approx <= cut)
        if r.size == 0:
            continue
        uu, vv = u[r], b[c]
        d2 = _pair_sqdist(X, w, uu, vv)
        k = np.lexsort((vv, uu, d2))[0]
        cand = (float(d2[k]), int(uu[k]), int(vv[k]))
        if cand < best:
            best = cand
    return float(np.sqrt(best[0])), best[1], best[2]
