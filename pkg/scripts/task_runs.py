"""Train the five-block network on each synthetic task and report test metrics.

    python3 scripts/task_runs.py --epochs 100 --seed 7
"""

import argparse
import time

from deepnet.data import TASKS, SyntheticSpec, generate_split
from deepnet.model import build_topology
from deepnet.training import TrainConfig, evaluate, fit

SAMPLES = {"malware_like": 2000, "incident_like": 2000, "fraud_like": 5000}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--tasks", nargs="+", default=list(TASKS), choices=TASKS)
    args = p.parse_args()

    print(f"{'task':<14} {'n':>5} {'accuracy':>9} {'precision':>9} {'recall':>9} {'f1':>9} {'seconds':>8}")
    for task in args.tasks:
        t0 = time.perf_counter()
        train, test = generate_split(SyntheticSpec(task, SAMPLES[task], seed=args.seed))
        net = build_topology(5, train.n_features, train.num_classes, seed=args.seed)
        fit(net, train, TrainConfig(args.epochs, args.lr, args.batch_size, seed=args.seed))
        s = evaluate(net, test).summary()
        print(f"{task:<14} {SAMPLES[task]:>5} {s['accuracy']:>9.4f} {s['precision']:>9.4f} {s['recall']:>9.4f} "
              f"{s['f1']:>9.4f} {time.perf_counter() - t0:>8.1f}")


if __name__ == "__main__":
    main()
