"""Command-line interface: ``python -m s2dl <command> ...``.

Exit status is 0 on success, 2 for usage errors (bad flags or values) and 1
for runtime failures such as unreadable inputs.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path


from . import __version__, io
from .baselines import dpc, kmeans
from .cube import grid_patches, synth_cube
from .metrics import evaluate
from .pipeline import S2DLConfig, StageError, run_s2dl, save_cluster_map, segment
from .sweep import COARSE_GRID, SweepGrid, sweep

log = logging.getLogger("s2dl")


class UsageError(Exception):
    pass


# option dest -> (type, default); shared by flags and config files
PIPELINE_OPTIONS = {
    "superpixels": (int, 1000),
    "k": (int, 5),
    "kn": (int, 20),
    "sigma0": (float, None),
    "sigma0_percentile": (float, 50.0),
    "radius": (int, 10),
    "clusters": (int, None),
    "t": (str, "auto"),
    "alpha": (str, "auto"),
    "eigs": (int, None),
    "lbb": (lambda s: str(s).lower() in ("1", "true", "yes", "on"), True),
    "ers_sigma": (float, 5.0),
    "ers_rescale": (lambda s: str(s).lower() in ("1", "true", "yes", "on"), True),
    "horizon_rule": (str, "bounded"),
    "seed": (int, 0),
}


def read_config_file(path) -> dict:
    """Flat ``key = value`` text; ``#`` starts a comment. Dashes in keys are read as underscores."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in PIPELINE_OPTIONS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def resolve_options(args) -> dict:
    """Flags override config-file keys, which override defaults."""
    from_file = read_config_file(args.config) if getattr(args, "config", None) else {}
    opts = {}
    for key, (conv, default) in PIPELINE_OPTIONS.items():
        flag = getattr(args, key, None)
        if flag is not None:
            opts[key] = flag
        elif key in from_file:
            try:
                opts[key] = conv(from_file[key])
            except ValueError:
                raise UsageError(f"config key {key!r}: bad value {from_file[key]!r}") from None
        else:
            opts[key] = default
    return opts


def build_config(opts: dict) -> S2DLConfig:
    t = opts["t"]
    if t != "auto":
        try:
            t = float(t)
        except ValueError:
            raise UsageError(f"--t must be a number or 'auto', got {t!r}") from None
    alpha = opts["alpha"]
    if alpha in (None, "auto"):
        alpha = None
    else:
        try:
            alpha = float(alpha)
        except ValueError:
            raise UsageError(f"--alpha must be a number or 'auto', got {alpha!r}") from None
    cfg = S2DLConfig(n_superpixels=opts["superpixels"], k=opts["k"], k_n=opts["kn"], sigma0=opts["sigma0"],
                     sigma0_percentile=opts["sigma0_percentile"], radius=opts["radius"],
                     n_clusters=opts["clusters"], t=t, alpha=alpha, n_eigs=opts["eigs"],
                     use_lbb=opts["lbb"], ers_sigma=opts["ers_sigma"], ers_rescale=opts["ers_rescale"],
                     horizon_rule=opts["horizon_rule"])
    try:
        return cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _add_cube_args(p):
    p.add_argument("--cube", required=True, help="cube file (raw-bsq, csv or mat)")
    p.add_argument("--format", choices=["raw-bsq", "csv", "mat"], help="override format detection")
    p.add_argument("--key", help="variable name inside a .mat cube")


def _add_pipeline_args(p):
    p.add_argument("--config", help="flat 'key = value' file; flags take precedence")
    p.add_argument("--superpixels", type=int, help="number of superpixels N_s")
    p.add_argument("--k", type=int, help="representatives per superpixel")
    p.add_argument("--kn", type=int, help="nearest neighbours for density and graph")
    p.add_argument("--sigma0", type=float, help="kernel bandwidth (default: percentile of kNN distances)")
    p.add_argument("--sigma0-percentile", dest="sigma0_percentile", type=float)
    p.add_argument("--radius", type=int, help="spatial window radius R")
    p.add_argument("--clusters", type=int, help="number of clusters K")
    p.add_argument("--t", help="diffusion time or 'auto' (needs --labels)")
    p.add_argument("--alpha", help="superpixel balance weight or 'auto'")
    p.add_argument("--eigs", type=int, help="retained eigenpairs L")
    p.add_argument("--no-lbb", dest="lbb", action="store_const", const=False, help="skip backbone seeding")
    p.add_argument("--ers-sigma", dest="ers_sigma", type=float)
    p.add_argument("--horizon-rule", dest="horizon_rule", choices=["bounded", "literal"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="s2dl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"s2dl {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="superpixel segmentation")
    _add_cube_args(p)
    p.add_argument("--superpixels", type=int, required=True)
    p.add_argument("--alpha", help="balance weight or 'auto'")
    p.add_argument("--ers-sigma", dest="ers_sigma", type=float, default=5.0)
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--stem", default="superpixels")

    p = sub.add_parser("cluster", help="run the clustering pipeline")
    _add_cube_args(p)
    _add_pipeline_args(p)
    p.add_argument("--labels", help="ground-truth label map (enables metrics and t=auto)")
    p.add_argument("--labels-key", help="variable name inside a .mat label file")
    p.add_argument("--out", default="out")
    p.add_argument("--stem", default="clusters")

    p = sub.add_parser("baseline", help="K-means or density-peaks reference clustering")
    _add_cube_args(p)
    p.add_argument("--method", choices=["kmeans", "dpc"], required=True)
    p.add_argument("--clusters", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kn", type=int, default=20)
    p.add_argument("--sigma0", type=float)
    p.add_argument("--out", default="out")
    p.add_argument("--stem", default=None)

    p = sub.add_parser("eval", help="score saved label maps against ground truth")
    p.add_argument("--labels", required=True)
    p.add_argument("--labels-key")
    p.add_argument("--pred", action="append", required=True, help="predicted map; repeat for several arms")
    p.add_argument("--name", action="append", help="arm name per --pred")
    p.add_argument("--out", help="write the report here as well")

    p = sub.add_parser("sweep", help="grid search scored by OA + AA + kappa")
    _add_cube_args(p)
    p.add_argument("--labels", required=True)
    p.add_argument("--labels-key")
    p.add_argument("--grid", choices=["coarse", "full"], default="coarse")
    for axis in ("superpixels", "k", "kn", "radius"):
        p.add_argument(f"--{axis}-list", dest=f"{axis}_list", type=int, nargs="+")
    p.add_argument("--percentile-list", dest="percentile_list", type=float, nargs="+")
    p.add_argument("--clusters", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--cache", help="JSON-lines result cache (resumable)")
    p.add_argument("--dataset", default="dataset", help="name used in the best-config block")
    p.add_argument("--out", default="out")

    p = sub.add_parser("render", help="colour a label map as PPM")
    p.add_argument("--map", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="write a synthetic patchwork cube and its labels")
    p.add_argument("--shape", type=int, nargs=2, default=[40, 40], metavar=("H", "W"))
    p.add_argument("--grid", type=int, nargs=2, default=[1, 2], metavar=("ROWS", "COLS"))
    p.add_argument("--bands", type=int, default=10)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cube-out", required=True)
    p.add_argument("--labels-out", required=True)
    return parser


def _load_gt(args, shape):
    return io.load_labels(args.labels, shape=shape, key=args.labels_key)


def cmd_segment(args) -> int:
    if args.superpixels < 1:
        raise UsageError("--superpixels must be >= 1")
    alpha = None if args.alpha in (None, "auto") else float(args.alpha)
    cube = io.load_cube(args.cube, args.format, args.key)
    if args.superpixels > cube.n_pixels:
        raise UsageError(f"--superpixels exceeds the {cube.n_pixels} pixels")
    sp = segment(cube, args.superpixels, alpha, args.ers_sigma)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"command": "segment", "cube": args.cube, "superpixels": args.superpixels,
            "alpha": args.alpha or "auto", "ers_sigma": args.ers_sigma}
    io.save_pgm(sp.assignment, sp.shape, out / f"{args.stem}.pgm", meta)
    io.save_label_csv(sp.assignment, sp.shape, out / f"{args.stem}.csv", meta)
    print(f"{sp.n_superpixels} superpixels -> {out / args.stem}.{{pgm,csv}}")
    return 0


def cmd_cluster(args) -> int:
    config = build_config(resolve_options(args))
    if config.t == "auto" and not args.labels:
        raise UsageError("--t auto needs --labels; pass a numeric --t otherwise")
    if config.n_clusters is None and not args.labels:
        raise UsageError("--clusters is required without --labels")
    cube = io.load_cube(args.cube, args.format, args.key)
    gt = _load_gt(args, cube.shape) if args.labels else None
    cm = run_s2dl(cube, config, gt)
    save_cluster_map(cm, args.out, args.stem)
    print(f"clusters={cm.n_clusters} t={cm.t:g} -> {Path(args.out) / args.stem}.{{csv,pgm,ppm}}")
    if cm.metrics is not None:
        m = cm.metrics
        print(f"OA={m.oa:.4f} AA={m.aa:.4f} kappa={m.kappa:.4f} runtime={m.runtime_s:.2f}s")
    return 0


def cmd_baseline(args) -> int:
    cube = io.load_cube(args.cube, args.format, args.key)
    if not 1 <= args.clusters <= cube.n_pixels:
        raise UsageError("--clusters out of range")
    X = cube.pixels()
    if args.method == "kmeans":
        labels = kmeans(X, args.clusters, args.seed).labels
    else:
        labels = dpc(X, args.clusters, args.kn, args.sigma0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = args.stem or args.method
    meta = {"command": "baseline", "method": args.method, "clusters": args.clusters, "seed": args.seed,
            "kn": args.kn, "sigma0": args.sigma0}
    io.save_label_csv(labels, cube.shape, out / f"{stem}.csv", meta)
    print(f"{args.method} -> {out / stem}.csv")
    return 0


def cmd_eval(args) -> int:
    names = args.name or []
    if names and len(names) != len(args.pred):
        raise UsageError("give one --name per --pred")
    truth = io.read_label_map(args.labels, key=args.labels_key)
    gt = io.load_labels(args.labels, key=args.labels_key)
    lines = ["arm,OA,AA,kappa"]
    for i, path in enumerate(args.pred):
        pred = io.read_label_map(path)
        if pred.shape != truth.shape:
            raise io.LoadError(f"{path}: map is {pred.shape}, ground truth is {truth.shape}")
        m = evaluate(pred.reshape(-1), gt)
        name = names[i] if names else Path(path).stem
        lines.append(f"{name},{m.oa:.6f},{m.aa:.6f},{m.kappa:.6f}")
    report = "\n".join(lines) + "\n"
    sys.stdout.write(report)
    if args.out:
        io.write_text_atomic(args.out, report)
    return 0


def cmd_sweep(args) -> int:
    grid = COARSE_GRID if args.grid == "coarse" else SweepGrid()
    overrides = {"n_superpixels": args.superpixels_list, "k": args.k_list, "k_n": args.kn_list,
                 "radius": args.radius_list, "sigma0_percentile": args.percentile_list}
    grid = SweepGrid(**{**grid.__dict__, **{k: tuple(v) for k, v in overrides.items() if v}})
    cube = io.load_cube(args.cube, args.format, args.key)
    gt = _load_gt(args, cube.shape)
    result = sweep(cube, gt, grid, S2DLConfig(n_clusters=args.clusters), args.cache, args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_text_atomic(out / "sweep.csv", result.table_csv())
    block = result.best_block(args.dataset)
    io.write_text_atomic(out / "best.txt", block)
    sys.stdout.write(block)
    return 0 if result.best is not None else 1


def cmd_render(args) -> int:
    grid = io.read_label_map(args.map)
    io.render_ppm(grid.reshape(-1), grid.shape, args.out, {"source": args.map})
    print(f"rendered {args.map} -> {args.out}")
    return 0


def cmd_synth(args) -> int:
    if min(args.shape) < 1 or min(args.grid) < 1 or args.bands < 1 or args.noise < 0:
        raise UsageError("shape, grid and bands must be positive and noise >= 0")
    if args.grid[0] > args.shape[0] or args.grid[1] > args.shape[1]:
        raise UsageError("grid is finer than the image")
    patches = grid_patches(tuple(args.shape), tuple(args.grid), args.bands, seed=args.seed)
    cube, gt = synth_cube(args.seed, patches, args.noise, tuple(args.shape))
    io.save_cube(cube, args.cube_out)
    io.save_label_csv(gt.labels, gt.shape, args.labels_out,
                      {"seed": args.seed, "noise": args.noise, "grid": f"{args.grid[0]}x{args.grid[1]}"})
    print(f"wrote {args.cube_out} and {args.labels_out}")
    return 0


COMMANDS = {"segment": cmd_segment, "cluster": cmd_cluster, "baseline": cmd_baseline, "eval": cmd_eval,
            "sweep": cmd_sweep, "render": cmd_render, "synth": cmd_synth}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"s2dl {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, io.LoadError, StageError, ValueError, RuntimeError) as exc:
        print(f"s2dl {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
