"""Run one configuration with and without the local backbone and report both arms."""
import argparse

from s2dl import io
from s2dl.pipeline import S2DLConfig, run_s2dl


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cube", required=True)
    ap.add_argument("--labels", required=True)
    ap.add_argument("--key", help="variable name inside a .mat cube")
    ap.add_argument("--labels-key", help="variable name inside a .mat label file")
    ap.add_argument("--superpixels", type=int, default=1000)
    ap.add_argument("--k", type=int, default=5)
    ap.add_argument("--kn", type=int, default=20)
    ap.add_argument("--radius", type=int, default=10)
    ap.add_argument("--sigma0-percentile", type=float, default=50.0)
    args = ap.parse_args()
    cube = io.load_cube(args.cube, key=args.key)
    gt = io.load_labels(args.labels, key=args.labels_key)
    base = S2DLConfig(n_superpixels=args.superpixels, k=args.k, k_n=args.kn, radius=args.radius,
                      sigma0_percentile=args.sigma0_percentile)
    print("arm,OA,AA,kappa,t")
    for name, flag in (("lbb", True), ("no-lbb", False)):
        m = run_s2dl(cube, base.replace(use_lbb=flag), gt)
        print(f"{name},{m.metrics.oa:.4f},{m.metrics.aa:.4f},{m.metrics.kappa:.4f},{m.t:g}")


if __name__ == "__main__":
    main()
