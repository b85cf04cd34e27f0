"""Spatially restricted kNN graph, its lazy random walk and diffusion geometry."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .nearest import closest_pair, sqdist

# matrices up to this size are diagonalised densely
_DENSE_LIMIT = 600
TAU = 1e-5


@dataclass(frozen=True)
class SpatialKnnGraph:
    node_ids: np.ndarray  # pixel indices of the nodes
    W: sparse.csr_matrix  # symmetric 0/1 adjacency, empty diagonal
    R: int
    k_n: int
    bridge_edges: list[tuple[int, int]] = field(default_factory=list)  # node positions

    @property
    def n_nodes(self) -> int:
        return self.W.shape[0]

    def is_connected(self) -> bool:
        return csgraph.connected_components(self.W, directed=False)[0] == 1


def _window_candidates(coords, shape, R):
    """Node positions inside each node's ``(2R+1) x (2R+1)`` window, self excluded."""
    h, w = shape
    at = np.full((h, w), -1, dtype=np.int64)
    at[coords[:, 0], coords[:, 1]] = np.arange(coords.shape[0])
    out = []
    for i, (r, c) in enumerate(coords):
        block = at[max(0, r - R):r + R + 1, max(0, c - R):c + R + 1]
        cand = np.sort(block[block >= 0])
        out.append(cand[cand != i])
    return out


def build_spatial_knn(node_ids: np.ndarray, spectra: np.ndarray, shape: tuple[int, int],
                      k_n: int, R: int) -> SpatialKnnGraph:
    """Connect every node to its ``k_n`` spectrally nearest window neighbours.

    Directed choices are symmetrised by union. Stray components are then
    joined to the rest one bridge edge at a time (their spectrally closest
    cross pair) until the graph is connected.
    """
    node_ids = np.asarray(node_ids, dtype=np.int64)
    X = np.asarray(spectra, dtype=np.float64)
    n = node_ids.size
    if n <= 1:
        raise ValueError("the graph needs at least two nodes")
    if X.shape[0] != n:
        raise ValueError("one spectrum per node is required")
    if k_n < 1 or R < 1:
        raise ValueError("k_n and R must be >= 1")
    coords = np.stack(np.divmod(node_ids, shape[1]), axis=1)
    rows, cols = [], []
    for i, cand in enumerate(_window_candidates(coords, shape, R)):
        if cand.size == 0:
            continue
        d2 = sqdist(X, None, cand, i)
        keep = cand[np.lexsort((cand, d2))[:k_n]]
        rows.append(np.full(keep.size, i))
        cols.append(keep)
    r = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    c = np.concatenate(cols) if cols else np.empty(0, dtype=np.int64)
    A = sparse.coo_matrix((np.ones(r.size), (r, c)), shape=(n, n)).tocsr()
    A = ((A + A.T) > 0).astype(np.float64).tocsr()

    bridges = []
    while True:
        ncomp, comp = csgraph.connected_components(A, directed=False)
        if ncomp == 1:
            break
        sizes = np.bincount(comp)
        main = int(np.argmax(sizes))
        new = []
        for k in range(ncomp):
            if k == main:
                continue
            inside = np.flatnonzero(comp == k)
            outside = np.flatnonzero(comp != k)
            _, u, v = closest_pair(X, inside, outside)
            new.append((min(u, v), max(u, v)))
        new = sorted(set(new))
        bridges.extend(new)
        br, bc = np.array(new).T
        B = sparse.coo_matrix((np.ones(2 * br.size), (np.r_[br, bc], np.r_[bc, br])), shape=(n, n))
        A = ((A + B) > 0).astype(np.float64).tocsr()
    A.sort_indices()
    return SpatialKnnGraph(node_ids, A, int(R), int(k_n), bridges)


@dataclass(frozen=True)
class MarkovChain:
    P: sparse.csr_matrix
    pi: np.ndarray
    degrees: np.ndarray  # of W + I
    eigenvalues: np.ndarray  # sorted by decreasing magnitude, eigenvalues[0] = 1
    eigenvectors: np.ndarray  # n x L, columns psi_k with sum_i pi_i psi_k(i)^2 = 1

    @property
    def L(self) -> int:
        return self.eigenvalues.size

    @property
    def n_nodes(self) -> int:
        return self.pi.size


def _sign_fix(V):
    for k in range(V.shape[1]):
        col = V[:, k]
        if col[np.argmax(np.abs(col))] < 0:
            col *= -1
    return V


def markov_chain(graph: SpatialKnnGraph | sparse.spmatrix, L: int | None = None,
                 tol: float = 1e-10, maxiter: int | None = None) -> MarkovChain:
    """Lazy walk ``P = D^-1 (W + I)`` with its top ``L`` eigenpairs by magnitude.

    Eigenpairs come from the symmetric matrix ``D^-1/2 (W + I) D^-1/2``;
    right eigenvectors of ``P`` follow by rescaling with ``D^-1/2``.
    """
    W = graph.W if isinstance(graph, SpatialKnnGraph) else sparse.csr_matrix(graph)
    n = W.shape[0]
    L = n if L is None else int(L)
    if not 1 <= L <= n:
        raise ValueError(f"L must lie in [1, {n}], got {L}")
    if csgraph.connected_components(W, directed=False)[0] != 1:
        raise ValueError("the graph must be connected")
    Wp = (W + sparse.identity(n, format="csr")).tocsr()
    d = np.asarray(Wp.sum(axis=1)).ravel()
    vol = d.sum()
    P = sparse.diags(1.0 / d) @ Wp
    pi = d / vol
    dh = 1.0 / np.sqrt(d)
    S = sparse.diags(dh) @ Wp @ sparse.diags(dh)

    if n <= _DENSE_LIMIT or L >= n - 1:
        vals, vecs = np.linalg.eigh(S.toarray())
    else:
        v0 = np.sqrt(d / vol)
        try:
            vals, vecs = eigsh(S, k=L, which="LM", tol=tol, v0=v0,
                               maxiter=maxiter if maxiter is not None else 10 * n)
        except ArpackNoConvergence as exc:
            raise RuntimeError(f"eigensolver did not converge for L={L}, n={n}") from exc
    order = np.lexsort((-vals, -np.abs(vals)))[:L]
    vals = vals[order].copy()
    psi = vecs[:, order] * (dh * math.sqrt(vol))[:, None]
    # the top pair is known in closed form for a connected lazy walk
    vals[0] = 1.0
    psi[:, 0] = 1.0
    psi = _sign_fix(psi)
    return MarkovChain(P.tocsr(), pi, d, vals, psi)


def diffusion_weights(chain: MarkovChain, t: float) -> np.ndarray:
    """Per-coordinate weights ``|lambda_k|^(2t)`` (with ``0^0 = 1``)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return np.abs(chain.eigenvalues) ** (2.0 * t)


def diffusion_embedding(chain: MarkovChain, t: float) -> np.ndarray:
    return chain.eigenvectors * np.abs(chain.eigenvalues) ** float(t)


def diffusion_distance(chain: MarkovChain, i, j, t: float) -> np.ndarray | float:
    """``D_t(i, j) = sqrt(sum_k |lambda_k|^(2t) (psi_k(i) - psi_k(j))^2)``."""
    d = np.sqrt(sqdist(chain.eigenvectors, diffusion_weights(chain, t), i, j))
    return float(d) if np.ndim(d) == 0 else d


def time_horizon(chain: MarkovChain | None = None, lambda2: float | None = None,
                 min_pi: float | None = None, rule: str = "bounded") -> int:
    """Dyadic horizon ``T``; the time grid stops at ``2^T``.

    ``rule="bounded"`` solves ``|lambda_2|^t <= TAU * min(pi) / 2``, which
    guarantees every diffusion distance at ``t = 2^T`` is at most ``TAU``.
    ``rule="literal"`` uses ``|lambda_2|^t <= 2 TAU / min(pi)``, which is
    undefined (and returns 0) once ``min(pi) <= 2 TAU``.
    """
    if chain is not None:
        lambda2 = abs(chain.eigenvalues[1]) if chain.L > 1 else 0.0
        min_pi = float(chain.pi.min())
    lambda2 = abs(float(lambda2))
    if lambda2 >= 1.0:
        raise ValueError("|lambda_2| must be < 1")
    if lambda2 == 0.0:
        return 0
    if rule == "bounded":
        target = TAU * min_pi / 2.0
    elif rule == "literal":
        target = 2.0 * TAU / min_pi
    else:
        raise ValueError(f"unknown rule {rule!r}")
    if target >= 1.0:
        return 0
    inner = math.log(target) / math.log(lambda2)
    return max(0, math.ceil(math.log2(inner))) if inner > 1.0 else 0


def time_grid(T: int) -> list[int]:
    """``[0, 1, 2, 4, ..., 2^T]``."""
    return [0] + [2**j for j in range(T + 1)]


def dump_graph(graph: SpatialKnnGraph, path, chain: MarkovChain | None = None) -> None:
    """Edge list ``i,j,w`` (node positions, ``i < j``) preceded by ``#`` metadata lines."""
    U = sparse.triu(graph.W, k=1).tocoo()
    order = np.lexsort((U.col, U.row))
    meta = [f"# R = {graph.R}", f"# k_n = {graph.k_n}", f"# n_nodes = {graph.n_nodes}",
            f"# bridges = {graph.bridge_edges}", "# self_loops = added (W + I)"]
    if chain is not None:
        meta.append("# spectrum = [" + ", ".join(f"{v:.12g}" for v in chain.eigenvalues) + "]")
    lines = meta + ["i,j,w"] + [f"{U.row[k]},{U.col[k]},{U.data[k]:g}" for k in order]
    Path(path).write_text("\n".join(lines) + "\n")
