"""Coarse-grid sweep on the benchmark scenes found under $S2DL_DATA_DIR.

Writes one table and one best-config block per scene into --out.
"""
import argparse
import os
from pathlib import Path

from s2dl.experiments import BENCHMARKS, benchmark_available, load_benchmark
from s2dl.pipeline import S2DLConfig
from s2dl.sweep import COARSE_GRID, sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenes", nargs="+", default=["salinasA", "indian_pines"], choices=sorted(BENCHMARKS))
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for key in args.scenes:
        if not benchmark_available(key):
            print(f"{key}: data not found, skipped")
            continue
        cube, gt = load_benchmark(key)
        res = sweep(cube, gt, COARSE_GRID, S2DLConfig(), workers=args.workers,
                    cache_path=args.out / f"{key}_cache.jsonl")
        (args.out / f"{key}_sweep.csv").write_text(res.table_csv())
        block = res.best_block(BENCHMARKS[key].name)
        (args.out / f"{key}_best.txt").write_text(block + "\n")
        print(block)


if __name__ == "__main__":
    main()
