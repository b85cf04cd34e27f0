"""Single tuned run on the full Salinas scene, or its 512 x 217 synthetic stand-in."""
import time

from s2dl.experiments import SCALE_CONFIG, benchmark_available, load_benchmark, salinas_scale_synthetic
from s2dl.pipeline import run_s2dl


def main():
    cube, gt = load_benchmark("salinas") if benchmark_available("salinas") else salinas_scale_synthetic()
    start = time.perf_counter()
    cm = run_s2dl(cube, SCALE_CONFIG, gt)
    print(f"OA={cm.metrics.oa:.4f} AA={cm.metrics.aa:.4f} kappa={cm.metrics.kappa:.4f} "
          f"runtime={time.perf_counter() - start:.1f}s")
    print(" ".join(f"{k}={v:.1f}" for k, v in cm.timings.items()))


if __name__ == "__main__":
    main()
