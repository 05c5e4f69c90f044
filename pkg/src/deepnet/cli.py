"""Command-line entry point: ``python -m deepnet <command>``.

Commands: gen, vectorize, train, crossval, sweep, eval. Every artifact is
written deterministically (sorted JSON keys, no timestamps) and embeds the
run configuration and seed that produced it.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
divergence, 5 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Sequence

from deepnet.data import (
    CLASS_NAMES,
    TASKS,
    Dataset,
    SyntheticSpec,
    fit_vocabulary,
    generate,
    generate_documents,
    generate_split,
    load_csv,
    read_corpus,
    train_test_split,
    transform_counts,
    write_corpus,
    write_csv,
    write_meta,
)
from deepnet.errors import ConfigError, DataError, DivergenceError
from deepnet.model import DEEPNET_WIDTHS, NetworkConfig, Sequential, build_network, load_with_provenance, save
from deepnet.training import (
    DEFAULT_GRIDS,
    SweepSpec,
    TrainConfig,
    TrainHistory,
    cross_validate,
    evaluate,
    fit,
    sweep,
)

log = logging.getLogger("deepnet")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGENCE, EXIT_IO = 0, 2, 3, 4, 5
CONFIG_VERSION = 1
HISTORY_COLUMNS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")


@dataclass
class RunConfig:
    """Everything a train/crossval/sweep run depends on.

    Stored as JSON with a ``version`` key. Data comes from ``train``/``test``
    CSV paths when given, otherwise from the synthetic generator for ``task``.
    ``network`` is ``deepnet`` (all five blocks) or ``depth-k`` for k in 1..5.
    """

    version: int = CONFIG_VERSION
    task: str = "incident_like"
    network: str = "deepnet"
    epochs: int = 100
    learning_rate: float = 0.1
    batch_size: int = 64
    seed: int = 0
    population_stats: bool = True
    samples: int = 2000
    noise: float | None = None
    vocab_size: int = 500
    test_fraction: float = 0.3
    train: str | None = None
    test: str | None = None
    label_column: str = "label"
    folds: int = 10
    out: str = "run"
    format: str = "table"

    def __post_init__(self):
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {self.version!r}, expected {CONFIG_VERSION}")
        if self.task not in (*TASKS, "custom"):
            raise ConfigError(f"task must be one of {(*TASKS, 'custom')}, got {self.task!r}")
        if self.task == "custom" and self.train is None:
            raise ConfigError("task 'custom' needs a train CSV")
        self.depth()
        if self.format not in ("table", "json"):
            raise ConfigError(f"format must be table or json, got {self.format!r}")
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")
        try:
            self.train_config()
            if self.train is None:
                self.synthetic()
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def depth(self) -> int:
        if self.network == "deepnet":
            return len(DEEPNET_WIDTHS)
        prefix, _, k = self.network.partition("-")
        if prefix == "depth" and k.isdigit() and 1 <= int(k) <= len(DEEPNET_WIDTHS):
            return int(k)
        raise ConfigError(f"network must be 'deepnet' or 'depth-k' with k in 1..5, got {self.network!r}")

    def train_config(self, seed: int | None = None) -> TrainConfig:
        return TrainConfig(self.epochs, self.learning_rate, self.batch_size,
                           self.seed if seed is None else seed, True, self.population_stats)

    def synthetic(self) -> SyntheticSpec:
        return SyntheticSpec(self.task, self.samples, self.seed, self.noise, self.vocab_size)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def provenance(self) -> dict[str, Any]:
        """The config minus output location and display format, embedded in artifacts."""
        d = self.to_dict()
        del d["out"], d["format"]
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        if "version" not in d:
            raise ConfigError("config is missing 'version'")
        return cls(**d)


def load_config(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from None
    RunConfig.from_dict(d)  # validate the file on its own
    return d


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then explicitly given flags."""
    merged = load_config(args.config)
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None and f.name != "version":
            merged[f.name] = v
    merged.setdefault("version", CONFIG_VERSION)
    return RunConfig.from_dict(merged)


# ---------------------------------------------------------------------------
# output helpers


def dump_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def emit(args_format: str, table: str, doc: dict) -> None:
    sys.stdout.write(dump_json(doc) if args_format == "json" else table + "\n")


def write_report_pair(out: Path, stem: str, table: str, doc: dict, config: dict) -> None:
    write_text(out / f"{stem}.json", dump_json({"config": config, **doc}))
    write_text(out / f"{stem}.txt", f"# config {json.dumps(config, sort_keys=True)}\n{table}\n")


def write_history(path: Path, history: TrainHistory, config: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config {json.dumps(config, sort_keys=True)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for row in history.rows():
            w.writerow(["" if v is None else repr(v) for v in row])


def format_rows(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    def cell(v):
        return f"{v:.4f}" if isinstance(v, float) else str(v)

    body = [[cell(v) for v in r] for r in rows]
    widths = [max(len(h), *(len(r[i]) for r in body)) if body else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in body]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# data plumbing


def load_datasets(cfg: RunConfig) -> tuple[Dataset, Dataset]:
    """(train, test) from CSVs or the synthetic generator."""
    if cfg.train is None:
        return generate_split(cfg.synthetic(), cfg.test_fraction)
    train = load_csv(cfg.train, cfg.label_column)
    if cfg.test is None:
        return train_test_split(train, cfg.test_fraction, cfg.seed)
    test = load_csv(cfg.test, cfg.label_column, class_names=train.class_names)
    return train, test


def load_full(cfg: RunConfig) -> Dataset:
    """One dataset for cross-validation: the train CSV or a full synthetic draw."""
    if cfg.train is None:
        return generate(cfg.synthetic())
    return load_csv(cfg.train, cfg.label_column)


def network_builder(cfg: RunConfig, input_dim: int, num_classes: int):
    hidden = DEEPNET_WIDTHS[: cfg.depth()]

    def build(seed: int) -> Sequential:
        return build_network(NetworkConfig(input_dim, num_classes, hidden, seed=seed))

    return build


# ---------------------------------------------------------------------------
# commands


def cmd_gen(args: argparse.Namespace) -> int:
    try:
        spec = SyntheticSpec(args.task, args.samples, args.seed, args.noise, args.vocab_size)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"spec": spec.to_dict(), "seed": spec.seed, "test_fraction": args.test_fraction,
            "class_names": list(CLASS_NAMES[spec.task])}
    if spec.task == "malware_like":
        docs, labels, _ = generate_documents(spec)
        names = CLASS_NAMES[spec.task]
        # split a one-column dataset of row ids, so documents follow the same split as CSV tasks
        ids = Dataset([[float(i)] for i in range(len(docs))], labels, list(names))
        tr, te = train_test_split(ids, args.test_fraction, spec.seed)
        for stem, part in (("train", tr), ("test", te)):
            rows = [int(v) for v in part.features[:, 0]]
            write_corpus([docs[i] for i in rows], out / f"{stem}.txt")
            write_text(out / f"{stem}.labels", "".join(names[labels[i]] + "\n" for i in rows))
        meta["files"] = ["train.txt", "train.labels", "test.txt", "test.labels"]
    else:
        tr, te = generate_split(spec, args.test_fraction)
        write_csv(tr, out / "train.csv")
        write_csv(te, out / "test.csv")
        meta["files"] = ["train.csv", "test.csv"]
    meta["counts"] = {"train": tr.class_counts().tolist(), "test": te.class_counts().tolist()}
    write_meta(out / "meta.json", meta)
    print(f"wrote {', '.join(meta['files'])} and meta.json to {out}")
    return EXIT_OK


def _labels_for(corpus: str, given: str | None) -> list[str] | None:
    path = Path(given) if given else Path(corpus).with_suffix(".labels")
    if given is None and not path.exists():
        return None
    return [line.rstrip("\n") for line in path.read_text(encoding="utf-8").splitlines()]


def _write_counts(path: Path, vocab_tokens: list[str], counts, labels: list[str] | None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(vocab_tokens + (["label"] if labels is not None else []))
        for i, row in enumerate(counts):
            cells = [str(int(v)) for v in row]
            w.writerow(cells + ([labels[i]] if labels is not None else []))


def cmd_vectorize(args: argparse.Namespace) -> int:
    train_docs = read_corpus(args.train)
    test_docs = read_corpus(args.test) if args.test else []
    vocab = fit_vocabulary(train_docs, test_docs, train_only=args.train_only_vocab)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    vocab.save(out / "vocab.txt")
    written = ["vocab.txt"]
    for stem, corpus, docs, lab in (("train", args.train, train_docs, args.train_labels),
                                    ("test", args.test, test_docs, args.test_labels)):
        if corpus is None:
            continue
        labels = _labels_for(corpus, lab)
        if labels is not None and len(labels) != len(docs):
            raise DataError(f"{corpus}: {len(docs)} documents but {len(labels)} labels")
        _write_counts(out / f"{stem}.csv", vocab.tokens, transform_counts(vocab, docs), labels)
        written.append(f"{stem}.csv")
    write_meta(out / "vectorize.json", {"train": args.train, "test": args.test,
                                        "train_only_vocab": args.train_only_vocab, "vocab_size": len(vocab)})
    print(f"vocabulary of {len(vocab)} tokens; wrote {', '.join(written)} to {out}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    train, test = load_datasets(cfg)
    net = network_builder(cfg, train.n_features, train.num_classes)(cfg.seed)
    config = cfg.provenance()
    history = fit(net, train, cfg.train_config(), validation=test)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save(net, out / "model.json", provenance={"config": config, "seed": cfg.seed,
                                               "class_names": train.class_names,
                                               "feature_names": train.feature_names})
    write_history(out / "history.csv", history, config)
    rep = evaluate(net, test)
    write_report_pair(out, "report", rep.to_table(), rep.to_dict(), config)
    emit(cfg.format, rep.to_table(), {"config": config, **rep.to_dict()})
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    net, provenance = load_with_provenance(args.model)
    names = provenance.get("class_names")
    data = load_csv(args.data, args.label_column, class_names=names)
    rep = evaluate(net, data)
    config = {"model": str(args.model), "data": str(args.data), "label_column": args.label_column,
              "model_config": provenance.get("config"), "seed": provenance.get("seed")}
    if args.out:
        write_report_pair(Path(args.out), "eval", rep.to_table(), rep.to_dict(), config)
    emit(args.format or "table", rep.to_table(), {"config": config, **rep.to_dict()})
    return EXIT_OK


def _topology_label(depth: int) -> str:
    return f"DNN {depth} layer" + ("s" if depth > 1 else "")


def cmd_crossval(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    data = load_full(cfg)
    config = cfg.provenance()
    out = Path(cfg.out)
    if args.sweep == "depth":
        spec = SweepSpec("depth", values=DEFAULT_GRIDS["depth"], trials=1, epochs=cfg.epochs, folds=cfg.folds,
                         learning_rate=cfg.learning_rate, batch_size=cfg.batch_size, seed=cfg.seed)
        result = sweep(spec, data)
        rows = [(_topology_label(int(r.value)), r.mean_accuracy) for r in result.rows]
        table = format_rows(("topology", "accuracy"), rows)
        doc = {"folds": cfg.folds, "rows": [{"topology": t, "depth": int(r.value), "accuracy": r.mean_accuracy}
                                            for (t, _), r in zip(rows, result.rows)]}
    else:
        build = network_builder(cfg, data.n_features, data.num_classes)
        res = cross_validate(build, data, cfg.folds, cfg.train_config())
        keys = ("accuracy", "precision", "recall", "f1")
        rows = []
        for i, (fold, rep) in enumerate(zip(res.plan.folds, res.fold_reports), start=1):
            s = rep.summary()
            rows.append((str(i), len(fold), *(s[k] for k in keys)))
        mean = res.mean_summary()
        rows.append(("mean", data.n_samples, *(mean[k] for k in keys)))
        table = format_rows(("fold", "n_test", *keys), rows)
        table += f"\naccuracy std (sample) {res.std_accuracy:.4f}"
        doc = {"folds": [dict(zip(("fold", "n_test", *keys), r)) for r in rows[:-1]],
               "aggregate": {**mean, "accuracy_std": res.std_accuracy}}
    write_report_pair(out, "crossval", table, doc, config)
    emit(cfg.format, table, {"config": config, **doc})
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    data = load_full(cfg)
    epochs = args.epochs  # None lets the axis choose its default
    try:
        spec = SweepSpec(args.axis, values=args.values, trials=args.trials, epochs=epochs, folds=cfg.folds,
                         units=args.units, depth=args.base_depth, learning_rate=cfg.learning_rate,
                         batch_size=cfg.batch_size, seed=cfg.seed)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    result = sweep(spec, data, on_result=lambda v, t, a: log.info("%s=%s trial %d accuracy %.4f",
                                                                  spec.axis, v, t + 1, a))
    rows = [(r.value, *r.trial_accuracies, r.mean_accuracy, r.rank, "*" if r.best else "") for r in result.rows]
    header = (spec.axis, *(f"trial_{t + 1}" for t in range(spec.trials)), "mean", "rank", "best")
    table = format_rows(header, rows)
    config = {**cfg.provenance(), "sweep": asdict(spec)}
    doc = {"axis": spec.axis, "rows": [asdict(r) for r in result.rows], "best": result.best.value}
    write_report_pair(Path(cfg.out), "sweep", table, doc, config)
    emit(cfg.format, table, {"config": config, **doc})
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _samples(text: str) -> int:
    n = int(text)
    if n < 10:
        raise argparse.ArgumentTypeError(f"need at least 10 samples, got {n}")
    return n


def _values(text: str) -> tuple[float, ...]:
    return tuple(float(v) if "." in v or "e" in v else int(v) for v in text.split(","))


def _run_flags(p: argparse.ArgumentParser) -> None:
    # defaults are None so that unset flags do not override the config file
    p.add_argument("--config", help="JSON run config (flags override it)")
    p.add_argument("--task", choices=(*TASKS, "custom"))
    p.add_argument("--network", help="deepnet or depth-k, k in 1..5")
    p.add_argument("--lr", "--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--samples", type=_samples)
    p.add_argument("--noise", type=float)
    p.add_argument("--vocab-size", type=int)
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--train", help="training CSV (otherwise synthetic data for --task)")
    p.add_argument("--test", help="test CSV")
    p.add_argument("--label-column")
    p.add_argument("--folds", type=int)
    p.add_argument("--no-population-stats", dest="population_stats", action="store_const", const=False,
                   help="keep moving-average batch-norm statistics")


def _common(p: argparse.ArgumentParser, with_epochs: bool = True) -> None:
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--format", choices=("table", "json"))
    if with_epochs:
        p.add_argument("--epochs", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deepnet", description="Deep feed-forward networks for security data.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic train/test pair")
    p.add_argument("--task", choices=TASKS, required=True)
    p.add_argument("--samples", type=_samples, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float)
    p.add_argument("--vocab-size", type=int, default=500)
    p.add_argument("--test-fraction", type=float, default=0.3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("vectorize", help="token corpora to count-matrix CSVs")
    p.add_argument("--train", required=True, help="training corpus, one document per line")
    p.add_argument("--test", help="test corpus")
    p.add_argument("--train-labels", help="label file (default: <corpus>.labels if present)")
    p.add_argument("--test-labels")
    p.add_argument("--train-only-vocab", action="store_true", help="fit the vocabulary on training documents only")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_vectorize)

    p = sub.add_parser("train", help="train one network and report test metrics")
    _run_flags(p)
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("crossval", help="stratified k-fold cross-validation")
    _run_flags(p)
    _common(p)
    p.add_argument("--sweep", choices=("depth",), help="one row per topology DNN 1..5")
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("sweep", help="grid search over units, learning rate or depth")
    _run_flags(p)
    _common(p)
    p.add_argument("--axis", choices=("units", "lr", "depth"), required=True)
    p.add_argument("--values", type=_values, help="comma-separated grid (default: the standard grid)")
    p.add_argument("--trials", type=int, default=2)
    p.add_argument("--units", type=int, default=1024, help="width for the lr axis")
    p.add_argument("--base-depth", type=int, default=1, help="hidden layers for the units and lr axes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="evaluate a saved model on a CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--label-column", default="label")
    p.add_argument("--out")
    p.add_argument("--format", choices=("table", "json"))
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as e:
        print(f"diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
