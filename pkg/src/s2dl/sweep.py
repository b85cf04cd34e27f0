"""Grid search over pipeline hyperparameters, scored by OA + AA + kappa."""
from __future__ import annotations

import csv
import hashlib
import io as _io
import itertools
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cube import GroundTruth, HsiCube
from .metrics import evaluate
from .pipeline import S2DLConfig, StageCache, cluster_at, prepare

log = logging.getLogger(__name__)

FIELDS = ["n_superpixels", "k", "k_n", "sigma0_percentile", "radius", "alpha", "t",
          "OA", "AA", "kappa", "objective", "runtime_s", "error"]


@dataclass(frozen=True)
class SweepGrid:
    n_superpixels: tuple = tuple(range(100, 1501, 100))
    k: tuple = (1, 2, 3, 4, 5, 6)
    k_n: tuple = (10, 20, 30, 40, 50)
    sigma0_percentile: tuple = (10, 20, 30, 40, 50, 60, 70, 80, 90)
    radius: tuple = tuple(range(1, 31))
    alpha: tuple = (None,)
    t: tuple | str = "auto"  # "auto": the dyadic grid derived from each graph

    def points(self) -> list[dict]:
        """Grid points without ``t``, ordered so points sharing superpixels are adjacent."""
        axes = ("n_superpixels", "alpha", "k_n", "sigma0_percentile", "k", "radius")
        values = [getattr(self, a) for a in axes]
        if not all(len(v) for v in values):
            raise ValueError("every sweep axis needs at least one value")
        return [dict(zip(axes, combo)) for combo in itertools.product(*values)]

    def __len__(self) -> int:
        return len(self.points())


COARSE_GRID = SweepGrid(n_superpixels=(500, 1000), k=(3, 5), k_n=(10, 30, 50),
                        sigma0_percentile=(30, 50, 70), radius=(5, 10, 15))


@dataclass
class SweepResult:
    rows: list[dict]
    best: dict | None
    base: S2DLConfig = field(default_factory=S2DLConfig)

    def best_config(self) -> S2DLConfig | None:
        if self.best is None:
            return None
        keys = ("n_superpixels", "k", "k_n", "sigma0_percentile", "radius", "alpha", "t")
        return self.base.replace(**{k: self.best[k] for k in keys})

    def table_csv(self) -> str:
        buf = _io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: _fmt(row.get(k)) for k in FIELDS})
        return buf.getvalue()

    def best_block(self, dataset: str = "dataset") -> str:
        if self.best is None:
            return f"{dataset}: no successful run\n"
        b = self.best
        cfg = ", ".join(f"{k}={b[k]}" for k in ("n_superpixels", "k", "k_n", "sigma0_percentile",
                                                 "radius", "alpha", "t"))
        lines = [f"{dataset:<12}| Metric | S2DL", f"{'':<12}| OA     | {b['OA']:.3f}",
                 f"{'':<12}| AA     | {b['AA']:.3f}", f"{'':<12}| kappa  | {b['kappa']:.3f}",
                 f"{'':<12}| RT     | {b['runtime_s']:.2f}", f"config: {cfg}"]
        return "\n".join(lines) + "\n"


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}" if np.isfinite(v) else str(v)
    return v


def config_hash(point: dict, base: S2DLConfig, fingerprint: str) -> str:
    payload = json.dumps({"point": point, "base": base.as_dict(), "data": fingerprint},
                         sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:20]


def data_fingerprint(cube: HsiCube, gt: GroundTruth) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(cube.values).tobytes())
    h.update(np.ascontiguousarray(gt.labels).tobytes())
    return h.hexdigest()[:20]


def evaluate_point(cube, gt, point: dict, base: S2DLConfig, t_values, cache: StageCache | None = None) -> list[dict]:
    """All rows (one per ``t``) for one grid point; failures become ``-inf`` rows."""
    config = base.replace(**point, t="auto")
    K = base.n_clusters if base.n_clusters is not None else gt.n_classes
    start = time.perf_counter()
    try:
        prep = prepare(cube, config, K, cache)
        setup = time.perf_counter() - start
        ts = prep.t_grid() if t_values == "auto" else list(t_values)
        rows = []
        for t in ts:
            t0 = time.perf_counter()
            cm = cluster_at(prep, K, t)
            rep = evaluate(cm.labels, gt)
            rows.append(dict(point, t=t, OA=rep.oa, AA=rep.aa, kappa=rep.kappa, objective=rep.objective,
                             runtime_s=setup + time.perf_counter() - t0, error=None))
        return rows
    except Exception as exc:  # a failed point never aborts the sweep
        log.warning("sweep point %s failed: %s", point, exc)
        return [dict(point, t=None, OA=float("nan"), AA=float("nan"), kappa=float("nan"),
                     objective=float("-inf"), runtime_s=time.perf_counter() - start, error=str(exc))]


def _evaluate_group(args):
    cube, gt, points, base, t_values = args
    cache = StageCache()
    return [evaluate_point(cube, gt, p, base, t_values, cache) for p in points]


def _load_cache(path):
    store = {}
    if path is not None and Path(path).exists():
        for line in Path(path).read_text().splitlines():
            if line.strip():
                rec = json.loads(line)
                store[rec["key"]] = rec["rows"]
    return store


def _restore(rows):
    for r in rows:
        for k in ("OA", "AA", "kappa", "objective"):
            r[k] = float(r[k])
    return rows


def sweep(cube: HsiCube, gt: GroundTruth, grid: SweepGrid, base: S2DLConfig | None = None,
          cache_path=None, workers: int = 1) -> SweepResult:
    """Evaluate every grid point and return the rows plus the best-scoring one.

    Results are appended to ``cache_path`` (JSON lines keyed by a config
    hash) by this process only, so an interrupted sweep resumes where it
    stopped. Ties on the objective go to the earliest row in grid order.
    """
    base = (base or S2DLConfig()).validate()
    points = grid.points()
    fingerprint = data_fingerprint(cube, gt)
    keys = [config_hash(dict(p, t=grid.t), base, fingerprint) for p in points]
    store = _load_cache(cache_path)
    todo = [i for i, key in enumerate(keys) if key not in store]

    # keep points that share superpixels in one task so the stage cache is reused
    groups: dict = {}
    for i in todo:
        groups.setdefault((points[i]["n_superpixels"], points[i]["alpha"]), []).append(i)
    tasks = [(cube, gt, [points[i] for i in idx], base, grid.t) for idx in groups.values()]
    index_lists = list(groups.values())

    def record(idx, results):
        for i, rows in zip(idx, results):
            store[keys[i]] = rows
            if cache_path is not None:
                with open(cache_path, "a") as fh:
                    fh.write(json.dumps({"key": keys[i], "rows": rows}, default=_json_default) + "\n")

    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for idx, results in zip(index_lists, pool.map(_evaluate_group, tasks)):
                record(idx, results)
    else:
        for idx, task in zip(index_lists, tasks):
            record(idx, _evaluate_group(task))

    rows = [r for key in keys for r in _restore([dict(x) for x in store[key]])]
    best = None
    for r in rows:
        if best is None or r["objective"] > best["objective"]:
            best = r
    if best is not None and not np.isfinite(best["objective"]):
        best = None
    return SweepResult(rows, best, base)


def _json_default(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    raise TypeError(type(v))
