"""Hyperspectral cube data model, PCA projection and synthetic scenes.

Pixels are addressed by a row-major linear index ``i = row * width + col``;
every module in the package shares this convention.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class HsiCube:
    """A ``height x width x bands`` reflectance cube."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3:
            raise ValueError(f"cube must be 3-D (height, width, bands), got shape {v.shape}")
        if min(v.shape) < 1:
            raise ValueError(f"cube dimensions must be positive, got {v.shape}")
        if not np.all(np.isfinite(v)):
            bad = int(np.flatnonzero(~np.isfinite(v.reshape(-1)))[0])
            raise ValueError(f"cube contains a non-finite value at flat index {bad}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def bands(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape[:2]

    @property
    def n_pixels(self) -> int:
        return self.height * self.width

    def pixels(self) -> np.ndarray:
        """``N x B`` view of the spectra in row-major pixel order."""
        return self.values.reshape(self.n_pixels, self.bands)

    def coords(self) -> np.ndarray:
        """``N x 2`` integer (row, col) coordinates."""
        return pixel_coords(self.shape)


def pixel_coords(shape: tuple[int, int]) -> np.ndarray:
    rows, cols = np.divmod(np.arange(shape[0] * shape[1]), shape[1])
    return np.stack([rows, cols], axis=1)


@dataclass(frozen=True)
class GroundTruth:
    """Per-pixel class labels; 0 marks unlabeled/background pixels."""

    labels: np.ndarray
    shape: tuple[int, int]

    def __post_init__(self):
        lab = np.asarray(self.labels).reshape(-1)
        if not np.issubdtype(lab.dtype, np.integer):
            if not np.all(np.equal(np.mod(lab, 1), 0)):
                raise ValueError("labels must be integers")
            lab = lab.astype(np.int64)
        lab = lab.astype(np.int64)
        if lab.size != self.shape[0] * self.shape[1]:
            raise ValueError(f"{lab.size} labels do not fit a {self.shape[0]}x{self.shape[1]} image")
        if lab.size and lab.min() < 0:
            raise ValueError("labels must be non-negative")
        present = np.unique(lab[lab > 0])
        if present.size and present.size != present[-1]:
            missing = sorted(set(range(1, int(present[-1]) + 1)) - set(present.tolist()))
            raise ValueError(f"classes {missing} have no pixels; labels must cover 1..K")
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) if self.labels.size else 0


@dataclass(frozen=True)
class PcaProjection:
    components: np.ndarray  # n_components x B, orthonormal rows
    mean: np.ndarray  # B
    projected: np.ndarray  # N x n_components
    eigenvalues: np.ndarray  # descending


def pca_project(cube: HsiCube, n_components: int = 3) -> PcaProjection:
    """Project mean-centred pixels onto the top principal axes of the band covariance.

    Each component is sign-normalised so that its entry of largest magnitude
    is positive, which makes the projection reproducible.
    """
    X = cube.pixels()
    n, b = X.shape
    if n < 2:
        raise ValueError("PCA needs at least two pixels")
    if b < n_components:
        raise ValueError(f"cannot take {n_components} components from {b} bands")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(-evals, kind="stable")
    evals = evals[order]
    evecs = evecs[:, order]
    tol = max(evals[0], 0.0) * b * np.finfo(float).eps
    if evals[n_components - 1] <= tol:
        rank = int(np.sum(evals > tol))
        raise ValueError(f"covariance has rank {rank} < {n_components} requested components")
    comps = evecs[:, :n_components].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    projected = Xc @ comps.T
    return PcaProjection(comps, mean, projected, evals[:n_components].copy())


@dataclass(frozen=True)
class Patch:
    """Axis-aligned rectangle ``[row0, row1) x [col0, col1)`` with a mean spectrum."""

    row0: int
    row1: int
    col0: int
    col1: int
    spectrum: Sequence[float] = field(default_factory=tuple)


def synth_cube(
    seed: int,
    patches: Sequence[Patch],
    noise_sigma: float,
    shape: tuple[int, int] | None = None,
) -> tuple[HsiCube, GroundTruth]:
    """Piecewise-constant scene plus i.i.d. Gaussian noise.

    Patch ``p`` (0-based) becomes ground-truth class ``p + 1``. The patches
    must tile the lattice exactly.
    """
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    if not patches:
        raise ValueError("need at least one patch")
    if shape is None:
        shape = (max(p.row1 for p in patches), max(p.col1 for p in patches))
    h, w = shape
    spectra = [np.asarray(p.spectrum, dtype=np.float64) for p in patches]
    bands = spectra[0].size
    if bands < 1 or any(s.size != bands for s in spectra):
        raise ValueError("every patch needs a spectrum of the same positive length")
    if len({s.tobytes() for s in spectra}) != len(spectra):
        raise ValueError("patch mean spectra must be distinct")

    gt = np.zeros((h, w), dtype=np.int64)
    for k, p in enumerate(patches, start=1):
        if not (0 <= p.row0 < p.row1 <= h and 0 <= p.col0 < p.col1 <= w):
            raise ValueError(f"patch {k} lies outside the {h}x{w} lattice")
        region = gt[p.row0:p.row1, p.col0:p.col1]
        if np.any(region):
            raise ValueError(f"patch {k} overlaps patch {int(region.max())}")
        region[...] = k
    if np.any(gt == 0):
        raise ValueError("patches do not cover the whole lattice")

    means = np.stack(spectra)[gt - 1]
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(means.shape) * noise_sigma
    return HsiCube(means + noise), GroundTruth(gt.reshape(-1), (h, w))


def grid_patches(
    shape: tuple[int, int],
    grid: tuple[int, int],
    bands: int,
    seed: int = 0,
    separation: float = 1.0,
) -> list[Patch]:
    """Tile ``shape`` with a ``grid[0] x grid[1]`` array of patches.

    Mean spectra are drawn uniformly from ``[0, separation * 10)`` per band,
    so distinct patches are far apart relative to unit noise.
    """
    h, w = shape
    gr, gc = grid
    row_edges = np.linspace(0, h, gr + 1).round().astype(int)
    col_edges = np.linspace(0, w, gc + 1).round().astype(int)
    rng = np.random.default_rng(seed)
    out = []
    for a in range(gr):
        for b in range(gc):
            spec = rng.uniform(0.0, 10.0 * separation, size=bands)
            out.append(Patch(int(row_edges[a]), int(row_edges[a + 1]),
                             int(col_edges[b]), int(col_edges[b + 1]), tuple(spec)))
    return out
