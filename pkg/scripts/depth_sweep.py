"""10-fold cross-validated accuracy of DNN 1..5 layers on one synthetic task.

    python3 scripts/depth_sweep.py --task fraud_like --samples 2000 --epochs 20
"""

import argparse
import time

from deepnet.data import TASKS, SyntheticSpec, generate
from deepnet.model import build_topology
from deepnet.training import TrainConfig, cross_validate


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--task", choices=TASKS, default="fraud_like")
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--depths", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    args = p.parse_args()

    data = generate(SyntheticSpec(args.task, args.samples, seed=args.seed))
    cfg = TrainConfig(args.epochs, args.lr, 64, seed=args.seed)
    print(f"{'topology':<14} {'mean':>7} {'std':>7} {'min':>7} {'max':>7} {'seconds':>8}")
    for depth in args.depths:
        t0 = time.perf_counter()
        res = cross_validate(lambda s: build_topology(depth, data.n_features, data.num_classes, seed=s),
                             data, args.folds, cfg)
        label = f"DNN {depth} layer" + ("s" if depth > 1 else "")
        print(f"{label:<14} {res.mean_accuracy:>7.4f} {res.std_accuracy:>7.4f} {min(res.accuracies):>7.4f} "
              f"{max(res.accuracies):>7.4f} {time.perf_counter() - t0:>8.1f}")


if __name__ == "__main__":
    main()
