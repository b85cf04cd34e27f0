"""Cluster-to-class alignment and accuracy metrics (OA, AA, Cohen's kappa)."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import linear_sum_assignment

from .cube import GroundTruth


@dataclass(frozen=True)
class ConfusionMatrix:
    """Pixel counts, rows = predicted clusters, columns = ground-truth classes.

    After alignment the matrix is square and row ``c`` holds the cluster
    matched to class ``c``; padded rows/columns carry label 0.
    """

    counts: np.ndarray
    row_labels: np.ndarray | None = None
    col_labels: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or np.any(c < 0):
            raise ValueError("counts must be a non-negative 2-D matrix")
        object.__setattr__(self, "counts", c)
        if self.row_labels is None:
            object.__setattr__(self, "row_labels", np.arange(1, c.shape[0] + 1))
        if self.col_labels is None:
            object.__setattr__(self, "col_labels", np.arange(1, c.shape[1] + 1))

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class MetricsReport:
    oa: float
    aa: float
    kappa: float
    producers: np.ndarray  # per ground-truth class; nan for empty classes
    alignment: dict = field(default_factory=dict)  # predicted label -> class label
    runtime_s: float = 0.0

    @property
    def objective(self) -> float:
        return self.oa + self.aa + self.kappa

    def as_dict(self) -> dict:
        return {"OA": self.oa, "AA": self.aa, "kappa": self.kappa, "runtime_s": self.runtime_s}


def count_matrix(pred: np.ndarray, gt: GroundTruth | np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Raw counts over pixels whose ground truth is non-zero."""
    truth = gt.labels if isinstance(gt, GroundTruth) else np.asarray(gt).reshape(-1)
    pred = np.asarray(pred).reshape(-1)
    if pred.size != truth.size:
        raise ValueError(f"prediction has {pred.size} pixels, ground truth {truth.size}")
    mask = truth > 0
    if not mask.any():
        raise ValueError("ground truth has no labeled pixels")
    p, t = pred[mask], truth[mask]
    rows, r_idx = np.unique(p, return_inverse=True)
    cols, c_idx = np.unique(t, return_inverse=True)
    counts = np.zeros((rows.size, cols.size), dtype=np.int64)
    np.add.at(counts, (r_idx, c_idx), 1)
    return counts, rows, cols


def _solve(weights: np.ndarray, allowed: np.ndarray) -> tuple[float, np.ndarray]:
    """Maximum-weight perfect matching restricted to ``allowed`` entries."""
    cost = np.where(allowed, -weights.astype(np.float64), np.inf)
    r, c = linear_sum_assignment(cost)
    match = np.empty(weights.shape[0], dtype=np.int64)
    match[r] = c
    return float(weights[r, c].sum()), match


def _optimal_edges(weights: np.ndarray, allowed: np.ndarray) -> np.ndarray:
    """Entries that lie on at least one optimal matching within ``allowed``."""
    best, _ = _solve(weights, allowed)
    m = weights.shape[0]
    keep = np.zeros_like(allowed)
    for r, c in zip(*np.nonzero(allowed)):
        rows = np.r_[0:r, r + 1:m]
        cols = np.r_[0:c, c + 1:m]
        sub = allowed[np.ix_(rows, cols)]
        if m > 1 and not sub.any(axis=1).all():
            continue
        try:
            rest = _solve(weights[np.ix_(rows, cols)], sub)[0] if m > 1 else 0.0
        except ValueError:  # no perfect matching once (r, c) is forced
            continue
        keep[r, c] = weights[r, c] + rest == best
    return keep


def best_assignment(counts: np.ndarray) -> np.ndarray:
    """Row-to-column permutation of a square count matrix maximising the matched total.

    Ties between optimal matchings are broken by the metrics themselves, so
    the result does not depend on how rows are numbered: first the smallest
    chance agreement (largest kappa), then the largest average accuracy.
    """
    counts = np.asarray(counts, dtype=np.int64)
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
        raise ValueError("best_assignment needs a square matrix")
    allowed = np.ones(counts.shape, dtype=bool)
    allowed = _optimal_edges(counts, allowed)
    # integer chance-agreement terms; exact in double precision for any image size
    chance = np.outer(counts.sum(axis=1), counts.sum(axis=0))
    allowed = _optimal_edges(-chance, allowed)
    col = counts.sum(axis=0)
    producer = np.divide(counts, col, out=np.zeros(counts.shape), where=col > 0)
    return _solve(producer, allowed)[1]


def align_labels(pred: np.ndarray, gt: GroundTruth | np.ndarray) -> tuple[dict, ConfusionMatrix]:
    """Match predicted clusters to classes one-to-one, maximising agreement."""
    counts, rows, cols = count_matrix(pred, gt)
    m = max(counts.shape)
    square = np.zeros((m, m), dtype=np.int64)
    square[:counts.shape[0], :counts.shape[1]] = counts
    match = best_assignment(square)  # row -> column, a permutation
    aligned = np.zeros_like(square)
    aligned[match] = square
    row_labels = np.zeros(m, dtype=np.int64)
    row_labels[match[:rows.size]] = rows
    col_labels = np.zeros(m, dtype=np.int64)
    col_labels[:cols.size] = cols
    alignment = {int(rows[r]): int(cols[match[r]]) for r in range(rows.size) if match[r] < cols.size}
    return alignment, ConfusionMatrix(aligned, row_labels, col_labels)


def metrics(conf: ConfusionMatrix | np.ndarray, runtime_s: float = 0.0, alignment: dict | None = None) -> MetricsReport:
    """OA, producer's accuracies, AA and kappa from an aligned count matrix."""
    if not isinstance(conf, ConfusionMatrix):
        conf = ConfusionMatrix(np.asarray(conf))
    c = conf.counts.astype(np.float64)
    total = c.sum()
    if total <= 0:
        raise ValueError("confusion matrix is empty")
    k = min(c.shape)
    diag = np.diag(c)[:k]
    row_tot = c.sum(axis=1)[:k]
    col_tot = c.sum(axis=0)
    oa = diag.sum() / total
    # producer's accuracy per real ground-truth column
    real = conf.col_labels > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        prod_all = np.where(col_tot > 0, np.pad(diag, (0, c.shape[1] - k)) / col_tot, np.nan)
    producers = prod_all[real]
    # exact rational mean, rounded once, so tied matchings report identical AA
    diag_real = np.pad(diag, (0, c.shape[1] - k))[real]
    ratios = [Fraction(int(d), int(t)) for d, t in zip(diag_real, col_tot[real]) if t > 0]
    aa = float(sum(ratios) / len(ratios)) if ratios else 0.0
    p_e = float(np.sum(row_tot * col_tot[:k]) / total**2)
    if 1.0 - p_e == 0.0:
        kappa = 1.0 if oa == 1.0 else 0.0
    else:
        kappa = (oa - p_e) / (1.0 - p_e)
    return MetricsReport(float(oa), aa, float(kappa), producers, dict(alignment or {}), float(runtime_s))


def evaluate(pred: np.ndarray, gt: GroundTruth | np.ndarray, runtime_s: float = 0.0) -> MetricsReport:
    alignment, conf = align_labels(pred, gt)
    return metrics(conf, runtime_s, alignment)
