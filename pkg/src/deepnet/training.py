"""Losses, plain SGD, the training loop, stratified k-fold CV and sweeps."""

from __future__ import annotations

import logging
import statistics
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from deepnet.data import Dataset
from deepnet.errors import DataError, DivergenceError, ShapeError, StratificationError
from deepnet.metrics import MetricsReport, confusion, report
from deepnet.model import (
    BINARY_CROSS_ENTROPY,
    CATEGORICAL_CROSS_ENTROPY,
    DEEPNET_WIDTHS,
    NetworkConfig,
    Sequential,
    build_network,
)
from deepnet.layers import BatchNormLayer
from deepnet.numerics import Matrix, col_stats, derive, shuffled_indices

log = logging.getLogger(__name__)

PROB_EPS = 1e-7

UNITS_GRID = (128, 256, 384, 512, 640, 768, 896, 1024)
LR_GRID = (0.01, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5)
DEPTH_GRID = (1, 2, 3, 4, 5)
DEFAULT_GRIDS = {"units": UNITS_GRID, "learning_rate": LR_GRID, "depth": DEPTH_GRID}
# epochs per sweep point when not given: 200 for the width search, 500 otherwise
DEFAULT_SWEEP_EPOCHS = {"units": 200, "learning_rate": 500, "depth": 500}


# ---------------------------------------------------------------------------
# losses


def _column(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return a.reshape(-1, 1) if a.ndim <= 1 else a


def bce_loss(pd, ed) -> float:
    """Mean binary cross-entropy with predictions clipped to [1e-7, 1-1e-7]."""
    pd, ed = _column(pd), _column(ed)
    if pd.shape != ed.shape or pd.shape[1] != 1:
        raise ShapeError(f"binary cross-entropy needs matching (N, 1) inputs, got {pd.shape} and {ed.shape}")
    if not np.all((ed == 0) | (ed == 1)):
        raise DataError("binary cross-entropy labels must be 0 or 1")
    p = np.clip(pd, PROB_EPS, 1.0 - PROB_EPS)
    return float(-np.mean(ed * np.log(p) + (1.0 - ed) * np.log(1.0 - p)))


def cce_loss(pd, ed) -> float:
    """Mean over samples of -sum(true * log(predicted)).

    Rows are renormalized to sum to one, then clipped to [1e-7, 1-1e-7].
    Clipping last keeps a one-hot prediction's loss at -log(1-1e-7).
    """
    pd, ed = np.asarray(pd, dtype=np.float64), np.asarray(ed, dtype=np.float64)
    if pd.ndim != 2 or pd.shape != ed.shape or pd.shape[1] < 2:
        raise ShapeError(f"categorical cross-entropy needs matching (N, k>=2) inputs, got {pd.shape} and {ed.shape}")
    if not (np.all((ed == 0) | (ed == 1)) and np.all(ed.sum(axis=1) == 1)):
        raise DataError("categorical cross-entropy targets must be one-hot rows")
    p = pd / pd.sum(axis=1, keepdims=True)
    p = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    return float(-np.mean(np.sum(ed * np.log(p), axis=1)))


def loss_value(kind: str, pd, ed) -> float:
    if kind == BINARY_CROSS_ENTROPY:
        return bce_loss(pd, ed)
    if kind == CATEGORICAL_CROSS_ENTROPY:
        return cce_loss(pd, ed)
    raise ValueError(f"unknown loss {kind!r}")


def output_gradient(kind: str, pd, ed) -> Matrix:
    """Gradient of the mean loss w.r.t. the head's pre-activation logits.

    Sigmoid + binary cross-entropy and softmax + categorical cross-entropy
    both reduce to (pd - ed) / N.
    """
    if kind not in (BINARY_CROSS_ENTROPY, CATEGORICAL_CROSS_ENTROPY):
        raise ValueError(f"unknown loss {kind!r}")
    pd = _column(pd) if kind == BINARY_CROSS_ENTROPY else np.asarray(pd, dtype=np.float64)
    ed = _column(ed) if kind == BINARY_CROSS_ENTROPY else np.asarray(ed, dtype=np.float64)
    if pd.shape != ed.shape:
        raise ShapeError(f"predictions {pd.shape} and targets {ed.shape} differ in shape")
    return (pd - ed) / pd.shape[0]


def targets(labels: np.ndarray, num_classes: int) -> Matrix:
    """Label ids to head targets: a 0/1 column for two classes, one-hot otherwise."""
    labels = np.asarray(labels, dtype=np.int64)
    if num_classes == 2:
        return labels.astype(np.float64).reshape(-1, 1)
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def loss_kind_for(net: Sequential) -> str:
    return BINARY_CROSS_ENTROPY if net.output_dim == 1 else CATEGORICAL_CROSS_ENTROPY


# ---------------------------------------------------------------------------
# optimizer


def sgd_step(net: Sequential, gradients: Sequence[dict[str, np.ndarray]], learning_rate: float) -> None:
    """theta <- theta - lr * grad for every trainable parameter, in place."""
    if len(gradients) != len(net.layers):
        raise ValueError(f"{len(gradients)} gradient sets for {len(net.layers)} layers")
    for layer, grads in zip(net.layers, gradients):
        params = layer.params()
        if grads.keys() != params.keys():
            raise ValueError(f"gradient keys {sorted(grads)} do not match parameters {sorted(params)}")
        for name, p in params.items():
            p -= learning_rate * grads[name]


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainConfig:
    epochs: int = 500
    learning_rate: float = 0.1
    batch_size: int = 64
    seed: int = 0
    shuffle: bool = True
    # replace the moving-average batch-norm statistics with population
    # statistics once training ends (see population_batchnorm_stats)
    population_stats: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2 for batch normalization, got {self.batch_size}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_loss: list[float | None] = field(default_factory=list)
    val_acc: list[float | None] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.train_loss)

    def rows(self) -> list[tuple]:
        return [(e + 1, self.train_loss[e], self.train_acc[e], self.val_loss[e], self.val_acc[e])
                for e in range(len(self))]


def predict_proba(net: Sequential, x: Matrix, chunk: int = 4096) -> Matrix:
    """Eval-mode forward pass in chunks."""
    x = np.asarray(x, dtype=np.float64)
    parts = [net.forward(x[i:i + chunk], "eval") for i in range(0, x.shape[0], chunk)]
    return np.vstack(parts) if parts else np.zeros((0, net.output_dim))


def decide(probs: Matrix) -> np.ndarray:
    """Class decisions: p >= 0.5 for a sigmoid head, first argmax for softmax."""
    if probs.shape[1] == 1:
        return (probs[:, 0] >= 0.5).astype(np.int64)
    return np.argmax(probs, axis=1).astype(np.int64)


def predict(net: Sequential, x: Matrix) -> np.ndarray:
    return decide(predict_proba(net, x))


def _check_compatible(net: Sequential, dataset: Dataset) -> None:
    if dataset.n_features != net.input_dim:
        raise DataError(f"dataset has {dataset.n_features} features, network expects {net.input_dim}")
    k = dataset.num_classes
    want = 1 if k == 2 else k
    if net.output_dim != want:
        raise DataError(f"dataset has {k} classes, network head has {net.output_dim} outputs")


def evaluate(net: Sequential, dataset: Dataset) -> MetricsReport:
    _check_compatible(net, dataset)
    pred = predict(net, dataset.features)
    return report(confusion(dataset.labels, pred, dataset.num_classes), dataset.class_names)


def fit(net: Sequential, dataset: Dataset, config: TrainConfig, validation: Dataset | None = None,
        on_epoch: Callable[[int, TrainHistory], None] | None = None) -> TrainHistory:
    """Mini-batch SGD for ``config.epochs`` epochs.

    Each epoch shuffles (seeded), walks mini-batches of ``batch_size`` and
    drops a trailing batch smaller than 2. Reported train loss/accuracy are
    sample-weighted averages over the train-mode batches of the epoch.
    """
    _check_compatible(net, dataset)
    if validation is not None:
        _check_compatible(net, validation)
    n = dataset.n_samples
    if n < 2:
        raise DataError("training needs at least 2 samples")
    kind = loss_kind_for(net)
    y_all = targets(dataset.labels, dataset.num_classes)
    y_val = targets(validation.labels, validation.num_classes) if validation is not None else None
    shuffle_rng = derive(config.seed, 2)
    net.rng = derive(config.seed, 3)
    history = TrainHistory()
    net.train()
    try:
        for epoch in range(1, config.epochs + 1):
            order = shuffled_indices(shuffle_rng, n) if config.shuffle else np.arange(n)
            loss_sum = 0.0
            correct = 0
            seen = 0
            for start in range(0, n, config.batch_size):
                idx = order[start:start + config.batch_size]
                if idx.shape[0] < 2:
                    continue
                xb, yb = dataset.features[idx], y_all[idx]
                out = net.forward(xb, "train")
                loss = loss_value(kind, out, yb)
                if not np.isfinite(loss):
                    raise DivergenceError(epoch, loss)
                loss_sum += loss * idx.shape[0]
                correct += int(np.sum(decide(out) == dataset.labels[idx]))
                seen += idx.shape[0]
                grads = net.backward(output_gradient(kind, out, yb))
                sgd_step(net, grads, config.learning_rate)
            history.train_loss.append(loss_sum / seen)
            history.train_acc.append(correct / seen)
            if validation is not None:
                probs = predict_proba(net, validation.features)
                history.val_loss.append(loss_value(kind, probs, y_val))
                history.val_acc.append(float(np.mean(decide(probs) == validation.labels)))
            else:
                history.val_loss.append(None)
                history.val_acc.append(None)
            if on_epoch is not None:
                on_epoch(epoch, history)
    finally:
        net.clear_caches()
        net.eval()
    if config.population_stats and config.epochs > 0:
        population_batchnorm_stats(net, dataset.features, config.batch_size)
    return history


def population_batchnorm_stats(net: Sequential, features: Matrix, batch_size: int) -> None:
    """Set every batch norm's inference statistics to training-set averages.

    For each batch-norm layer in order, the (frozen, eval-mode) network below
    it is run over consecutive mini-batches of ``features``; the layer's
    running mean and variance become the averages of the per-batch means and
    biased variances. Batches smaller than 2 are skipped, as in training.
    """
    x = np.asarray(features, dtype=np.float64)
    n = x.shape[0]
    starts = [s for s in range(0, n, batch_size) if min(batch_size, n - s) >= 2]
    if not starts:
        return
    for layer in net.layers:
        if isinstance(layer, BatchNormLayer):
            means, variances = zip(*(col_stats(x[s:s + batch_size]) for s in starts))
            layer.running_mean = np.mean(means, axis=0)
            layer.running_var = np.mean(variances, axis=0)
        x = layer.forward(x, training=False)


# ---------------------------------------------------------------------------
# cross-validation


@dataclass
class FoldPlan:
    k: int
    folds: list[np.ndarray]

    def train_indices(self, i: int) -> np.ndarray:
        return np.sort(np.concatenate([f for j, f in enumerate(self.folds) if j != i]))


def kfold_split(labels, k: int, seed: int = 0) -> FoldPlan:
    """Seeded stratified k-fold partition.

    Each class is shuffled and dealt round-robin into the folds; the dealing
    position carries over from one class to the next so that fold sizes also
    differ by at most one.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    classes, counts = np.unique(labels, return_counts=True)
    small = [(c.item(), int(m)) for c, m in zip(classes, counts) if m < k]
    if small:
        raise StratificationError(f"classes with fewer than k={k} members: {small}")
    rng = derive(seed, 23)
    assigned: list[list[int]] = [[] for _ in range(k)]
    pos = 0
    for c in classes:
        members = np.flatnonzero(labels == c)
        members = members[shuffled_indices(rng, members.shape[0])]
        for m in members:
            assigned[pos % k].append(int(m))
            pos += 1
    return FoldPlan(k, [np.array(sorted(f), dtype=np.int64) for f in assigned])


def stream_seed(master: int, *keys: int) -> int:
    """A 32-bit seed derived from (master, *keys), for per-fold/per-trial networks."""
    return int(np.random.SeedSequence([int(master), *map(int, keys)]).generate_state(1)[0])


@dataclass
class CVResult:
    fold_reports: list[MetricsReport]
    plan: FoldPlan

    @property
    def accuracies(self) -> list[float]:
        return [r.accuracy for r in self.fold_reports]

    @property
    def mean_accuracy(self) -> float:
        return float(statistics.fmean(self.accuracies))

    @property
    def std_accuracy(self) -> float:
        """Sample standard deviation across folds."""
        a = self.accuracies
        return float(statistics.stdev(a)) if len(a) > 1 else 0.0

    def mean_summary(self, average: str = "macro") -> dict[str, float]:
        keys = ("accuracy", "precision", "recall", "f1")
        summaries = [r.summary(average) for r in self.fold_reports]
        return {k: float(statistics.fmean(s[k] for s in summaries)) for k in keys}


def cross_validate(config_builder: Callable[[int], Sequential], dataset: Dataset, k: int,
                   train_config: TrainConfig) -> CVResult:
    """Stratified k-fold CV.

    ``config_builder(seed)`` returns a fresh network; fold ``i`` gets a seed
    stream derived from ``(train_config.seed, i)``.
    """
    plan = kfold_split(dataset.labels, k, train_config.seed)
    reports = []
    for i, held_out in enumerate(plan.folds):
        fold_seed = stream_seed(train_config.seed, 1000 + i)
        net = config_builder(fold_seed)
        cfg = TrainConfig(**{**train_config.to_dict(), "seed": fold_seed})
        fit(net, dataset.subset(plan.train_indices(i)), cfg)
        reports.append(evaluate(net, dataset.subset(held_out)))
        log.info("fold %d/%d accuracy %.4f", i + 1, k, reports[-1].accuracy)
    return CVResult(reports, plan)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepSpec:
    axis: str
    values: tuple | None = None
    trials: int = 2
    epochs: int | None = None
    folds: int = 10
    # held fixed while the other axis varies
    units: int = 1024
    depth: int = 1
    learning_rate: float = 0.1
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        aliases = {"lr": "learning_rate"}
        self.axis = aliases.get(self.axis, self.axis)
        if self.axis not in DEFAULT_GRIDS:
            raise ValueError(f"axis must be one of units, learning_rate (lr), depth; got {self.axis!r}")
        if self.values is None:
            self.values = DEFAULT_GRIDS[self.axis]
        if self.epochs is None:
            self.epochs = DEFAULT_SWEEP_EPOCHS[self.axis]
        self.values = tuple(self.values)
        if not self.values:
            raise ValueError("sweep grid is empty")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for v in self.values:
            if self.axis == "units" and (int(v) != v or v < 1):
                raise ValueError(f"unit counts must be positive integers, got {v}")
            if self.axis == "depth" and not (int(v) == v and 1 <= v <= len(DEEPNET_WIDTHS)):
                raise ValueError(f"depth must be in 1..{len(DEEPNET_WIDTHS)}, got {v}")
            if self.axis == "learning_rate" and not v > 0:
                raise ValueError(f"learning rates must be positive, got {v}")


@dataclass
class SweepRow:
    value: float
    trial_accuracies: list[float]
    mean_accuracy: float
    rank: int = 0
    best: bool = False


@dataclass
class SweepResult:
    axis: str
    rows: list[SweepRow]

    def ranked(self) -> list[SweepRow]:
        return sorted(self.rows, key=lambda r: r.rank)

    @property
    def best(self) -> SweepRow:
        return next(r for r in self.rows if r.best)


def trial_seed(master: int, trial: int) -> int:
    """Trial 0 reuses the master seed, so a one-trial sweep equals plain CV."""
    return master if trial == 0 else stream_seed(master, 2000 + trial)


def point_setup(spec: SweepSpec, value, num_classes: int, input_dim: int):
    """(network builder, learning rate) for one grid point."""
    hidden: tuple[int, ...]
    lr = spec.learning_rate
    if spec.axis == "units":
        hidden = (int(value),) * spec.depth
    elif spec.axis == "depth":
        hidden = DEEPNET_WIDTHS[: int(value)]
    else:
        hidden = (spec.units,) * spec.depth
        lr = float(value)

    def builder(seed: int) -> Sequential:
        return build_network(NetworkConfig(input_dim, num_classes, hidden, seed=seed))

    return builder, lr


def sweep(spec: SweepSpec, dataset: Dataset, on_result: Callable[[float, int, float], None] | None = None) -> SweepResult:
    rows = []
    for value in spec.values:
        builder, lr = point_setup(spec, value, dataset.num_classes, dataset.n_features)
        accs = []
        for t in range(spec.trials):
            cfg = TrainConfig(spec.epochs, lr, spec.batch_size, trial_seed(spec.seed, t))
            acc = cross_validate(builder, dataset, spec.folds, cfg).mean_accuracy
            accs.append(acc)
            if on_result is not None:
                on_result(value, t, acc)
        rows.append(SweepRow(value, accs, float(statistics.fmean(accs))))
    # rank by mean accuracy, grid order breaks ties
    order = sorted(range(len(rows)), key=lambda i: (-rows[i].mean_accuracy, i))
    for rank, i in enumerate(order, start=1):
        rows[i].rank = rank
    rows[order[0]].best = True
    return SweepResult(spec.axis, rows)
