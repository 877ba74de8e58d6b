"""Weak and strong fits on a synthetic survey with planted weights.

Pass two CSV paths (group file, model file) to run on real data instead.
"""

import sys

import numpy as np

from marketalign.empirical import load_dataset, planted_dataset, transfer_curve, weak_curve


def main(argv):
    if len(argv) == 2:
        ds = load_dataset(*argv)
    else:
        ds, planted = planted_dataset(np.random.default_rng(0), n_questions=40, n_models=4, n_groups=3, noise=0.05)
        print("planted weights:\n", np.round(planted, 3))
    rows, _ = weak_curve(ds)
    print("K  held-out RMSE  best single  equal weights")
    for r in rows:
        print(f"{r['K']}  {r['epsilon_proxy_rmse']:.4f}         {r['best_single_rmse']:.4f}       {r['equal_weight_rmse']:.4f}")
    rows, _ = transfer_curve(ds, samples=32)
    for r in rows:
        print(f"K={r['K']}: worst transfer factor {r['worst_transfer']:.3g}, mean {r['mean_transfer']:.3g}")


if __name__ == "__main__":
    main(sys.argv[1:])
