"""Density-peak mode selection, backbone seeding, label propagation and voting.

The core routines work on any diagonal-weighted Euclidean metric so the
diffusion pipeline and the spectral density-peaks baseline share them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density import RepresentativeSet
from .diffusion import MarkovChain, SpatialKnnGraph, diffusion_weights
from .ers import SuperpixelMap
from .nearest import farthest, nearest_higher, sqdist


@dataclass(frozen=True)
class ModeDiagnostics:
    d_t: np.ndarray
    delta_t: np.ndarray
    modes: np.ndarray  # node positions, rank order (label k+1 for modes[k])

    @property
    def n_modes(self) -> int:
        return self.modes.size


def density_argmax(zeta: np.ndarray) -> int:
    return int(np.argmax(zeta))  # first maximum, i.e. smallest index on ties


def peak_distances(X: np.ndarray, w: np.ndarray | None, zeta: np.ndarray) -> np.ndarray:
    """Distance to the nearest node of no lower density; the densest node gets its farthest distance."""
    zeta = np.asarray(zeta, dtype=np.float64)
    d, _ = nearest_higher(X, w, zeta, strict=False)
    top = density_argmax(zeta)
    d[top] = farthest(X, w, top)
    return d


def dt_scores(chain: MarkovChain, zeta_s: np.ndarray, t: float) -> np.ndarray:
    if np.size(zeta_s) != chain.n_nodes:
        raise ValueError("densities and chain cover different node sets")
    return peak_distances(chain.eigenvectors, diffusion_weights(chain, t), zeta_s)


def select_modes(d_t: np.ndarray, zeta: np.ndarray, K: int) -> ModeDiagnostics:
    """Top-``K`` nodes by ``d_t * zeta`` (ties to the smaller index)."""
    d_t = np.asarray(d_t, dtype=np.float64)
    zeta = np.asarray(zeta, dtype=np.float64)
    if K < 1:
        raise ValueError("K must be >= 1")
    if K > d_t.size:
        raise ValueError(f"K={K} exceeds the {d_t.size} available nodes")
    delta = d_t * zeta
    order = np.lexsort((np.arange(delta.size), -delta))
    return ModeDiagnostics(d_t, delta, order[:K].copy())


def seed_labels(n: int, modes: np.ndarray) -> np.ndarray:
    labels = np.zeros(n, dtype=np.int64)
    labels[modes] = np.arange(1, len(modes) + 1)
    return labels


def label_backbones(modes: np.ndarray, graph: SpatialKnnGraph, spectra: np.ndarray, k_n: int | None = None,
                    labels: np.ndarray | None = None) -> np.ndarray:
    """Give each mode's ``k_n`` spectrally nearest graph neighbours the mode's label.

    Modes are processed in rank order, so a higher-ranked mode keeps any
    node it claimed first.
    """
    k_n = graph.k_n if k_n is None else int(k_n)
    W = graph.W.tocsr()
    if labels is None:
        labels = seed_labels(W.shape[0], modes)
    else:
        labels = np.asarray(labels, dtype=np.int64).copy()
    for m in modes:
        nbrs = W.indices[W.indptr[m]:W.indptr[m + 1]]
        nbrs = nbrs[nbrs != m]
        d2 = sqdist(spectra, None, nbrs, m)
        chosen = nbrs[np.lexsort((nbrs, d2))[:k_n]]
        free = chosen[labels[chosen] == 0]
        labels[free] = labels[m]
    return labels


def propagate(partial: np.ndarray, X: np.ndarray, w: np.ndarray | None, zeta: np.ndarray) -> np.ndarray:
    """Label unlabeled nodes in order of decreasing density.

    Each takes the label of its nearest labeled node with density at least
    its own; ties go to the smaller distance, then the smaller index.
    """
    labels = np.asarray(partial, dtype=np.int64).copy()
    zeta = np.asarray(zeta, dtype=np.float64)
    n = labels.size
    top = density_argmax(zeta)
    if labels[top] == 0:
        raise ValueError("the density maximiser must be labeled before propagation")
    todo = np.flatnonzero(labels == 0)
    if todo.size == 0:
        return labels
    up_d, up_i = nearest_higher(X, w, zeta, strict=True, subset=todo)
    best_d2 = np.full(n, np.inf)
    best_i = np.full(n, -1, dtype=np.int64)
    best_d2[todo] = up_d**2
    best_i[todo] = up_i
    # exact squared distances for the strict-higher candidates
    has = best_i[todo] >= 0
    best_d2[todo[has]] = sqdist(X, w, todo[has], best_i[todo[has]])

    _, group, counts = np.unique(zeta, return_inverse=True, return_counts=True)
    order = np.lexsort((np.arange(n), -zeta))
    for x in order:
        if labels[x]:
            continue
        cand_d2, cand_i = best_d2[x], best_i[x]
        if counts[group[x]] > 1:
            ties = np.flatnonzero((group == group[x]) & (labels > 0))
            if ties.size:
                d2 = sqdist(X, w, ties, x)
                k = np.lexsort((ties, d2))[0]
                if (d2[k], ties[k]) < (cand_d2, cand_i if cand_i >= 0 else n):
                    cand_d2, cand_i = d2[k], ties[k]
        if cand_i < 0:
            raise AssertionError(f"node {x} has no labeled node of equal or higher density")
        labels[x] = labels[cand_i]
    return labels


def propagate_labels(partial: np.ndarray, chain: MarkovChain, zeta_s: np.ndarray, t: float) -> np.ndarray:
    return propagate(partial, chain.eigenvectors, diffusion_weights(chain, t), zeta_s)


def majority_vote(rep_labels: np.ndarray, reps: RepresentativeSet, sp: SuperpixelMap) -> np.ndarray:
    """Spread the modal representative label over each superpixel (ties to the smaller label)."""
    rep_labels = np.asarray(rep_labels, dtype=np.int64)
    n_sp = sp.n_superpixels
    K = int(rep_labels.max())
    votes = np.zeros((n_sp + 1, K + 1), dtype=np.int64)
    np.add.at(votes, (reps.owner, rep_labels), 1)
    missing = np.flatnonzero(votes[1:].sum(axis=1) == 0)
    if missing.size:
        raise ValueError(f"superpixel {int(missing[0]) + 1} has no representatives")
    winner = np.argmax(votes[:, 1:], axis=1) + 1
    return winner[sp.assignment]
