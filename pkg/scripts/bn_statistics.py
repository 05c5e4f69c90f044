"""Held-out accuracy with moving-average versus population batch-norm statistics.

Trains the same network twice on one split, once keeping the exponential
moving averages (momentum 0.99) and once replacing them with training-set
averages after the last epoch.

    python3 scripts/bn_statistics.py --task fraud_like --samples 2000 --epochs 20
"""

import argparse

from deepnet.data import TASKS, SyntheticSpec, generate_split
from deepnet.model import build_topology
from deepnet.training import TrainConfig, evaluate, fit


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--task", choices=TASKS, default="fraud_like")
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--depth", type=int, default=5)
    p.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    args = p.parse_args()

    print(f"{'seed':>4} {'moving avg':>11} {'population':>11}")
    for seed in args.seeds:
        train, test = generate_split(SyntheticSpec(args.task, args.samples, seed=seed))
        accs = []
        for population in (False, True):
            net = build_topology(args.depth, train.n_features, train.num_classes, seed=seed)
            fit(net, train, TrainConfig(args.epochs, 0.1, 64, seed=seed, population_stats=population))
            accs.append(evaluate(net, test).accuracy)
        print(f"{seed:>4} {accs[0]:>11.4f} {accs[1]:>11.4f}")


if __name__ == "__main__":
    main()
