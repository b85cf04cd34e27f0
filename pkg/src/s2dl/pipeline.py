"""End-to-end superpixel and diffusion clustering pipeline.

Stages: PCA -> superpixels -> density -> representatives -> spatial graph ->
Markov chain -> modes -> backbones -> propagation -> superpixel voting.
"""
from __future__ import annotations

import dataclasses
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .cube import GroundTruth, HsiCube, pca_project
from .density import DensityField, RepresentativeSet, kde, knn_index, select_representatives, sigma0_at_percentile
from .diffusion import MarkovChain, SpatialKnnGraph, build_spatial_knn, markov_chain, time_grid, time_horizon
from .ers import SuperpixelMap, balancing_alpha, build_lattice, lazy_greedy
from .metrics import MetricsReport, evaluate
from .modes import ModeDiagnostics, dt_scores, label_backbones, majority_vote, propagate_labels, seed_labels, select_modes


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage


@contextmanager
def _stage(name: str, timings: dict):
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc
    finally:
        timings[name] = timings.get(name, 0.0) + time.perf_counter() - start


@dataclass(frozen=True)
class S2DLConfig:
    n_superpixels: int = 1000
    k: int = 5  # representatives per superpixel
    k_n: int = 20
    sigma0: float | None = None  # None: take sigma0_percentile of the k-NN distances
    sigma0_percentile: float = 50.0
    radius: int = 10
    n_clusters: int | None = None  # None: number of ground-truth classes
    t: float | str = "auto"
    alpha: float | None = None  # None: balancing_alpha default
    n_eigs: int | None = None  # None: min(|X_s| - 1, 10 K)
    use_lbb: bool = True
    ers_sigma: float = 5.0
    ers_rescale: bool = True
    horizon_rule: str = "bounded"

    def validate(self) -> "S2DLConfig":
        checks = [
            (self.n_superpixels >= 1, "n_superpixels must be >= 1"),
            (self.k >= 1, "k must be >= 1"),
            (self.k_n >= 1, "k_n must be >= 1"),
            (self.sigma0 is None or self.sigma0 > 0, "sigma0 must be positive"),
            (0 <= self.sigma0_percentile <= 100, "sigma0_percentile must lie in [0, 100]"),
            (self.radius >= 1, "radius must be >= 1"),
            (self.n_clusters is None or self.n_clusters >= 1, "n_clusters must be >= 1"),
            (self.t == "auto" or (not isinstance(self.t, str) and self.t >= 0), "t must be >= 0 or 'auto'"),
            (self.alpha is None or self.alpha > 0, "alpha must be positive"),
            (self.n_eigs is None or self.n_eigs >= 2, "n_eigs must be >= 2"),
            (self.ers_sigma > 0, "ers_sigma must be positive"),
            (self.horizon_rule in ("bounded", "literal"), "horizon_rule must be 'bounded' or 'literal'"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)
        return self

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "S2DLConfig":
        return dataclasses.replace(self, **changes)


def ers_features(cube: HsiCube, rescale: bool = True) -> np.ndarray:
    """First three principal components, optionally mapped jointly onto ``[0, 255]``.

    Cubes whose covariance has rank below three keep only the components
    it supports; a constant cube yields all-zero features.
    """
    proj = np.zeros((cube.n_pixels, 1))
    for n in range(min(3, cube.bands), 0, -1):
        try:
            proj = pca_project(cube, n).projected
            break
        except ValueError:
            continue
    if not rescale:
        return proj
    lo, hi = proj.min(), proj.max()
    return (proj - lo) * (255.0 / (hi - lo)) if hi > lo else np.zeros_like(proj)


def segment(cube: HsiCube, n_superpixels: int, alpha: float | None = None, sigma: float = 5.0,
            rescale: bool = True) -> SuperpixelMap:
    graph = build_lattice(ers_features(cube, rescale), cube.shape, sigma=sigma)
    if alpha is None:
        alpha = balancing_alpha(graph, n_superpixels)
    forest = lazy_greedy(graph, n_superpixels, alpha)
    return SuperpixelMap(forest.components.labels(), cube.shape)


@dataclass
class Prepared:
    """Stage outputs up to and including the Markov chain."""

    cube: HsiCube
    config: S2DLConfig
    superpixels: SuperpixelMap
    density: DensityField
    reps: RepresentativeSet
    graph: SpatialKnnGraph
    chain: MarkovChain
    timings: dict = field(default_factory=dict)

    @property
    def zeta_s(self) -> np.ndarray:
        return self.density.zeta[self.reps.ids]

    def horizon(self) -> int:
        return time_horizon(self.chain, rule=self.config.horizon_rule)

    def t_grid(self) -> list[int]:
        return time_grid(self.horizon())


class StageCache:
    """Reusable expensive stages keyed by the parameters they depend on."""

    def __init__(self):
        self.superpixels: dict = {}
        self.knn: tuple[int, np.ndarray, np.ndarray] | None = None

    def get_superpixels(self, cube, config, timings):
        key = (config.n_superpixels, config.alpha, config.ers_sigma, config.ers_rescale)
        if key not in self.superpixels:
            with _stage("superpixels", timings):
                self.superpixels[key] = segment(cube, config.n_superpixels, config.alpha,
                                                config.ers_sigma, config.ers_rescale)
        return self.superpixels[key]

    def get_knn(self, cube, k_n, timings):
        # rows are sorted by (distance, index), so a wider table can be sliced exactly
        if self.knn is None or self.knn[0] < k_n:
            with _stage("knn", timings):
                ids, d = knn_index(cube.pixels(), k_n)
            self.knn = (k_n, ids, d)
        return self.knn[1][:, :k_n], self.knn[2][:, :k_n]


def prepare(cube: HsiCube, config: S2DLConfig, n_clusters: int, cache: StageCache | None = None) -> Prepared:
    config.validate()
    cache = cache or StageCache()
    timings: dict = {}
    sp = cache.get_superpixels(cube, config, timings)
    ids, dists = cache.get_knn(cube, config.k_n, timings)
    with _stage("density", timings):
        sigma0 = config.sigma0 if config.sigma0 is not None else sigma0_at_percentile(dists, config.sigma0_percentile)
        dens = kde(ids, dists, sigma0)
        reps = select_representatives(dens, sp, config.k)
    with _stage("graph", timings):
        graph = build_spatial_knn(reps.ids, cube.pixels()[reps.ids], cube.shape, config.k_n, config.radius)
    with _stage("eigen", timings):
        n = reps.ids.size
        L = config.n_eigs if config.n_eigs is not None else 10 * n_clusters
        chain = markov_chain(graph, max(2, min(n - 1, L)))
    return Prepared(cube, config, sp, dens, reps, graph, chain, timings)


@dataclass(frozen=True)
class ClusterMap:
    labels: np.ndarray  # length N, values 1..K
    shape: tuple[int, int]
    rep_ids: np.ndarray
    rep_labels: np.ndarray
    modes: np.ndarray  # pixel ids in rank order
    t: float
    config: dict
    timings: dict = field(default_factory=dict)
    diagnostics: ModeDiagnostics | None = None
    superpixels: np.ndarray | None = None
    metrics: MetricsReport | None = None
    t_scores: dict = field(default_factory=dict)  # t -> OA + AA + kappa when t was tuned

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max())

    def metadata(self) -> dict:
        meta = {f"config.{k}": v for k, v in self.config.items()}
        meta["t"] = self.t
        meta["modes"] = " ".join(str(int(m)) for m in self.modes)
        meta["self_loops"] = "added (W + I)"
        if self.metrics is not None:
            meta.update({"OA": f"{self.metrics.oa:.6f}", "AA": f"{self.metrics.aa:.6f}",
                         "kappa": f"{self.metrics.kappa:.6f}"})
        return meta


def cluster_at(prep: Prepared, n_clusters: int, t: float, use_lbb: bool | None = None) -> ClusterMap:
    """Modes, backbones, propagation and voting on a prepared chain at time ``t``."""
    use_lbb = prep.config.use_lbb if use_lbb is None else use_lbb
    timings = dict(prep.timings)
    zeta_s = prep.zeta_s
    with _stage("modes", timings):
        diag = select_modes(dt_scores(prep.chain, zeta_s, t), zeta_s, n_clusters)
        partial = seed_labels(zeta_s.size, diag.modes)
        if use_lbb:
            partial = label_backbones(diag.modes, prep.graph, prep.cube.pixels()[prep.reps.ids],
                                      prep.config.k_n, partial)
    with _stage("propagation", timings):
        rep_labels = propagate_labels(partial, prep.chain, zeta_s, t)
    with _stage("voting", timings):
        labels = majority_vote(rep_labels, prep.reps, prep.superpixels)
    config = prep.config.replace(n_clusters=n_clusters, use_lbb=use_lbb).as_dict()
    return ClusterMap(labels, prep.cube.shape, prep.reps.ids, rep_labels, prep.reps.ids[diag.modes],
                      t, config, timings, diag, prep.superpixels.assignment)


def run_s2dl(cube: HsiCube, config: S2DLConfig, ground_truth: GroundTruth | None = None,
             cache: StageCache | None = None) -> ClusterMap:
    """Run the full pipeline; ``t="auto"`` scans the dyadic time grid against ground truth."""
    config.validate()
    start = time.perf_counter()
    K = config.n_clusters
    if K is None:
        if ground_truth is None:
            raise ValueError("n_clusters is required without ground truth")
        K = ground_truth.n_classes
    if config.t == "auto" and ground_truth is None:
        raise ValueError("t='auto' selects t against ground truth; supply labels or a numeric t")
    prep = prepare(cube, config, K, cache)
    if prep.reps.ids.size < K:
        raise StageError("modes", ValueError(f"only {prep.reps.ids.size} representatives for K={K}"))
    ts = prep.t_grid() if config.t == "auto" else [float(config.t)]
    best, scores = None, {}
    for t in ts:
        cm = cluster_at(prep, K, t)
        report = evaluate(cm.labels, ground_truth) if ground_truth is not None else None
        score = report.objective if report is not None else 0.0
        scores[t] = score
        if best is None or score > best[0]:
            best = (score, cm, report)
    _, cm, report = best
    runtime = time.perf_counter() - start
    timings = dict(cm.timings)
    timings["total"] = runtime
    if report is not None:
        report = dataclasses.replace(report, runtime_s=runtime)
    config_echo = dict(cm.config, t=config.t)
    return dataclasses.replace(cm, timings=timings, metrics=report, t_scores=scores, config=config_echo)


def save_cluster_map(cm: ClusterMap, outdir, stem: str = "clusters") -> dict:
    """Write labels (CSV, PGM), a PPM rendering, metadata and, separately, timings."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    meta = cm.metadata()
    paths = {
        "csv": out / f"{stem}.csv",
        "pgm": out / f"{stem}.pgm",
        "ppm": out / f"{stem}.ppm",
        "meta": out / f"{stem}.meta.txt",
        "timings": out / f"{stem}.timings.txt",
    }
    io.save_label_csv(cm.labels, cm.shape, paths["csv"], meta)
    io.save_pgm(cm.labels, cm.shape, paths["pgm"], meta)
    io.render_ppm(cm.labels, cm.shape, paths["ppm"], meta)
    lines = [f"{k} = {v}" for k, v in meta.items()]
    lines.append("rep_labels = " + " ".join(str(int(v)) for v in cm.rep_labels))
    if cm.t_scores:
        lines.append("t_scores = " + ", ".join(f"{t}:{s:.6f}" for t, s in cm.t_scores.items()))
    io.write_text_atomic(paths["meta"], "\n".join(lines) + "\n")
    io.write_text_atomic(paths["timings"], "\n".join(f"{k} = {v:.6f}" for k, v in cm.timings.items()) + "\n")
    return paths
