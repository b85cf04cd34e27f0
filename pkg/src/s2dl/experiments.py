"""Benchmark scenes and the configurations used by the experiment scripts.

Benchmark cubes are read from ``$S2DL_DATA_DIR`` (default ``./data``) as the
usual MATLAB files, e.g. ``SalinasA_corrected.mat`` / ``SalinasA_gt.mat``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from .cube import GroundTruth, HsiCube, grid_patches, synth_cube
from .io import load_cube, load_labels
from .pipeline import S2DLConfig


@dataclass(frozen=True)
class Benchmark:
    name: str
    cube_file: str
    cube_key: str
    gt_file: str
    gt_key: str


BENCHMARKS = {
    "salinasA": Benchmark("Salinas A", "SalinasA_corrected.mat", "salinasA_corrected",
                          "SalinasA_gt.mat", "salinasA_gt"),
    "indian_pines": Benchmark("Indian Pines", "Indian_pines_corrected.mat", "indian_pines_corrected",
                              "Indian_pines_gt.mat", "indian_pines_gt"),
    "salinas": Benchmark("Salinas", "Salinas_corrected.mat", "salinas_corrected",
                         "Salinas_gt.mat", "salinas_gt"),
}


def data_dir() -> Path:
    return Path(os.environ.get("S2DL_DATA_DIR", Path(__file__).resolve().parents[2] / "data"))


def _find(directory: Path, name: str) -> Path | None:
    for candidate in directory.iterdir() if directory.is_dir() else []:
        if candidate.name.lower() == name.lower():
            return candidate
    return None


def load_benchmark(key: str) -> tuple[HsiCube, GroundTruth]:
    """Load a benchmark scene; raises FileNotFoundError naming the expected files."""
    bench = BENCHMARKS[key]
    root = data_dir()
    cube_path, gt_path = _find(root, bench.cube_file), _find(root, bench.gt_file)
    if cube_path is None or gt_path is None:
        raise FileNotFoundError(f"{bench.name} needs {bench.cube_file} and {bench.gt_file} in {root} "
                                "(set S2DL_DATA_DIR)")
    cube = load_cube(cube_path, format="mat", key=_key(cube_path, bench.cube_key))
    gt = load_labels(gt_path, shape=cube.shape, key=_key(gt_path, bench.gt_key))
    return cube, gt


def _key(path, preferred):
    from scipy.io import whosmat
    names = [n for n, _, _ in whosmat(path)]
    return preferred if preferred in names else (names[0] if len(names) == 1 else preferred)


def benchmark_available(key: str) -> bool:
    try:
        bench = BENCHMARKS[key]
        root = data_dir()
        return _find(root, bench.cube_file) is not None and _find(root, bench.gt_file) is not None
    except OSError:
        return False


def separable_synthetic(shape=(86, 83), grid=(2, 3), bands=30, noise=1.0, seed=0):
    """Patchwork scene whose classes are far apart relative to the noise."""
    return synth_cube(seed, grid_patches(shape, grid, bands, seed=seed), noise)


def salinas_scale_synthetic(seed: int = 7):
    """512 x 217 x 204 stand-in for the full Salinas scene with 16 patch classes."""
    return synth_cube(seed, grid_patches((512, 217), (4, 4), 204, seed=seed), 1.0)


# Tuned single-run configuration for the full-scene scale check. The window
# must hold enough nodes per class: at ~4.5% node density an R = 10 window
# sees about 20 nodes and the graph turns into a spatial mesh. t sits inside
# the plateau (8 .. 32768) of a full-grid scan on the synthetic stand-in.
SCALE_CONFIG = S2DLConfig(n_superpixels=1000, k=5, k_n=20, sigma0_percentile=50, radius=30, t=64)
