"""Superpixel and spatially regularised diffusion clustering of hyperspectral images."""

__version__ = "0.1.0"

from .cube import GroundTruth, HsiCube, PcaProjection, pca_project, synth_cube
from .metrics import MetricsReport, align_labels, evaluate, metrics
from .pipeline import ClusterMap, S2DLConfig, run_s2dl

__all__ = [
    "GroundTruth", "HsiCube", "PcaProjection", "pca_project", "synth_cube",
    "MetricsReport", "align_labels", "evaluate", "metrics",
    "ClusterMap", "S2DLConfig", "run_s2dl",
]
