"""Datasets: CSV ingestion, API-token vectorization and synthetic task generators.

CSV dialect: comma separated, first row is the header, '.' decimal point,
numeric cells unquoted. Empty cells and any capitalisation of "nan" read as
0.0. The label column may hold arbitrary strings; they are encoded to dense
ids in order of first appearance unless ``class_names`` fixes the mapping.

Token corpora hold one document per line, tokens separated by whitespace.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from deepnet.errors import DataError, ParseError, SchemaError
from deepnet.numerics import Matrix, RngState, derive

TASKS = ("malware_like", "incident_like", "fraud_like")


@dataclass
class Dataset:
    features: Matrix
    labels: np.ndarray
    class_names: list[str]
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        self.class_names = [str(c) for c in self.class_names]
        if self.features.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {self.features.shape}")
        n, d = self.features.shape
        if n < 1:
            raise DataError("a dataset needs at least one sample")
        if self.labels.shape[0] != n:
            raise DataError(f"{n} feature rows but {self.labels.shape[0]} labels")
        if not np.all(np.isfinite(self.features)):
            raise DataError("features contain NaN or Inf")
        k = len(self.class_names)
        if k < 1 or self.labels.min() < 0 or self.labels.max() >= k:
            raise DataError(f"labels must lie in [0, {k})")
        if not self.feature_names:
            self.feature_names = [f"f{j}" for j in range(d)]
        elif len(self.feature_names) != d:
            raise DataError(f"{len(self.feature_names)} feature names for {d} columns")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], list(self.class_names), list(self.feature_names))

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


# ---------------------------------------------------------------------------
# CSV


def _is_missing(cell: str) -> bool:
    c = cell.strip()
    return c == "" or c.lower() == "nan"


def load_csv(path: str | Path, label_column: str = "label", class_names: Sequence[str] | None = None) -> Dataset:
    """Read a headed CSV; NaN and empty cells become 0.0."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise SchemaError(f"{path}: label column {label_column!r} not in header {header}")
        li = header.index(label_column)
        feature_names = [h for j, h in enumerate(header) if j != li]
        mapping: dict[str, int] = {}
        fixed = class_names is not None
        if fixed:
            mapping = {str(c): i for i, c in enumerate(class_names)}
        rows: list[list[float]] = []
        labels: list[int] = []
        for r, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: row {r} has {len(row)} fields, header has {len(header)}")
            values = []
            for j, cell in enumerate(row):
                if j == li:
                    continue
                if _is_missing(cell):
                    values.append(0.0)
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(f"{path}: row {r}, column {header[j]!r}: cannot parse {cell!r}") from None
                if not np.isfinite(v):
                    raise ParseError(f"{path}: row {r}, column {header[j]!r}: non-finite value {cell!r}")
                values.append(v)
            lab = row[li].strip()
            if lab not in mapping:
                if fixed:
                    raise DataError(f"{path}: row {r}: label {lab!r} not among classes {list(mapping)}")
                mapping[lab] = len(mapping)
            labels.append(mapping[lab])
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows after the header")
    names = list(mapping)
    return Dataset(np.array(rows, dtype=np.float64).reshape(len(rows), len(feature_names)),
                   np.array(labels), names, feature_names)


def write_csv(dataset: Dataset, path: str | Path, label_column: str = "label") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*dataset.feature_names, label_column])
        for row, lab in zip(dataset.features, dataset.labels):
            w.writerow([repr(float(v)) for v in row] + [dataset.class_names[lab]])


# ---------------------------------------------------------------------------
# term-document vectorization


class OutOfVocabularyWarning(UserWarning):
    pass


@dataclass
class Vocabulary:
    tokens: list[str]

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise DataError("vocabulary tokens must be unique")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.tokens), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls([line for line in Path(path).read_text(encoding="utf-8").splitlines() if line])


def fit_vocabulary(train_docs: Iterable[str], test_docs: Iterable[str] = (), train_only: bool = False) -> Vocabulary:
    """Sorted vocabulary over train and test documents.

    Fitting on the test corpus as well leaks its token set into the feature
    space; pass ``train_only=True`` for the leak-free variant.
    """
    seen: set[str] = set()
    for doc in train_docs:
        seen.update(doc.split())
    if not train_only:
        for doc in test_docs:
            seen.update(doc.split())
    if not seen:
        raise DataError("cannot fit a vocabulary on an empty corpus")
    return Vocabulary(sorted(seen))


def transform_counts(vocab: Vocabulary, docs: Sequence[str]) -> Matrix:
    out = np.zeros((len(docs), len(vocab)), dtype=np.float64)
    oov = 0
    for i, doc in enumerate(docs):
        for tok in doc.split():
            j = vocab.index.get(tok)
            if j is None:
                oov += 1
            else:
                out[i, j] += 1.0
    if oov:
        warnings.warn(f"{oov} out-of-vocabulary tokens ignored", OutOfVocabularyWarning, stacklevel=2)
    return out


def read_corpus(path: str | Path) -> list[str]:
    """One document per line. A blank line is an empty document."""
    text = Path(path).read_text(encoding="utf-8")
    return text.split("\n")[:-1] if text.endswith("\n") else text.split("\n")


def write_corpus(docs: Sequence[str], path: str | Path) -> None:
    Path(path).write_text("".join(d + "\n" for d in docs), encoding="utf-8")


# ---------------------------------------------------------------------------
# synthetic tasks

DEFAULT_NOISE = {"incident_like": 1.0, "fraud_like": 0.4, "malware_like": 0.3}
DEFAULT_PRIORS = {"incident_like": (0.6, 0.4), "fraud_like": (0.4, 0.3, 0.3), "malware_like": (0.6, 0.4)}
CLASS_NAMES = {
    "incident_like": ("normal", "incident"),
    "fraud_like": ("legitimate", "suspicious", "fraud"),
    "malware_like": ("benign", "malicious"),
}
INCIDENT_SEPARATION = 6.0


@dataclass
class SyntheticSpec:
    task: str
    n_samples: int
    seed: int = 0
    noise: float | None = None
    vocab_size: int = 500
    doc_length: tuple[int, int] = (20, 60)
    class_priors: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.n_samples < 10:
            raise ValueError(f"n_samples must be >= 10, got {self.n_samples}")
        if self.noise is None:
            self.noise = DEFAULT_NOISE[self.task]
        if self.noise < 0:
            raise ValueError("noise must be non-negative")
        if self.class_priors is None:
            self.class_priors = DEFAULT_PRIORS[self.task]
        self.class_priors = tuple(float(p) for p in self.class_priors)
        if len(self.class_priors) != len(CLASS_NAMES[self.task]):
            raise ValueError(f"{self.task} needs {len(CLASS_NAMES[self.task])} class priors")
        if any(p <= 0 for p in self.class_priors) or abs(sum(self.class_priors) - 1.0) > 1e-9:
            raise ValueError(f"class priors must be positive and sum to 1, got {self.class_priors}")
        self.doc_length = tuple(int(v) for v in self.doc_length)
        if self.task == "malware_like":
            if self.vocab_size < 10:
                raise ValueError("vocab_size must be >= 10")
            lo, hi = self.doc_length
            if not 1 <= lo <= hi:
                raise ValueError(f"doc_length must satisfy 1 <= lo <= hi, got {self.doc_length}")
            if self.noise > 1:
                raise ValueError("malware_like noise is a mixing weight in [0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["doc_length"] = list(self.doc_length)
        d["class_priors"] = list(self.class_priors)
        return d


def _draw_labels(rng: RngState, n: int, priors: Sequence[float]) -> np.ndarray:
    return rng.gen.choice(len(priors), size=n, p=np.asarray(priors))


def _incident(spec: SyntheticSpec) -> Dataset:
    # two Gaussian blobs INCIDENT_SEPARATION apart in standardized units,
    # then a per-sensor offset and scale
    d = 9
    rng = derive(spec.seed, 11)
    direction = rng.gen.normal(size=d)
    direction /= np.linalg.norm(direction)
    offset = rng.gen.uniform(-2.0, 2.0, size=d)
    scale = rng.gen.uniform(0.5, 2.0, size=d)
    labels = _draw_labels(rng, spec.n_samples, spec.class_priors)
    means = np.stack([-0.5 * INCIDENT_SEPARATION * direction, 0.5 * INCIDENT_SEPARATION * direction])
    z = means[labels] + spec.noise * rng.gen.normal(size=(spec.n_samples, d))
    return Dataset(offset + scale * z, labels, list(CLASS_NAMES["incident_like"]),
                   [f"sensor_{j + 1}" for j in range(d)])


FRAUD_LATENT = 10
FRAUD_MODES_PER_CLASS = 60


def _fraud(spec: SyntheticSpec) -> Dataset:
    # each class is a union of sub-clusters at vertices of a latent hypercube;
    # twelve observed features are correlated linear mixtures of the latent
    # coordinates plus a small independent term
    d, k = 12, 3
    rng = derive(spec.seed, 13)
    n_modes = k * FRAUD_MODES_PER_CLASS
    vertices = rng.gen.choice(2**FRAUD_LATENT, size=n_modes, replace=False)
    bits = (vertices[:, None] >> np.arange(FRAUD_LATENT)) & 1
    centers = 2.0 * bits - 1.0
    mixing = rng.gen.normal(size=(FRAUD_LATENT, d)) / np.sqrt(FRAUD_LATENT)
    offset = rng.gen.uniform(-1.0, 1.0, size=d)
    labels = _draw_labels(rng, spec.n_samples, spec.class_priors)
    mode_in_class = rng.gen.integers(0, FRAUD_MODES_PER_CLASS, size=spec.n_samples)
    mode = labels * FRAUD_MODES_PER_CLASS + mode_in_class
    latent = centers[mode] + spec.noise * rng.gen.normal(size=(spec.n_samples, FRAUD_LATENT))
    x = latent @ mixing + offset + 0.05 * spec.noise * rng.gen.normal(size=(spec.n_samples, d))
    return Dataset(x, labels, list(CLASS_NAMES["fraud_like"]), [f"txn_{j + 1}" for j in range(d)])


MALWARE_SIGNATURE = 25
MALWARE_BOOST = 6.0


def generate_documents(spec: SyntheticSpec) -> tuple[list[str], np.ndarray, list[str]]:
    """Token documents for ``malware_like``: (docs, labels, token universe).

    Tokens are API ids. Every document mixes a shared Zipf background with a
    class-specific distribution that up-weights a signature set of APIs;
    ``noise`` is the background weight.
    """
    if spec.task != "malware_like":
        raise ValueError("documents are only generated for malware_like")
    rng = derive(spec.seed, 17)
    v = spec.vocab_size
    api_ids = np.sort(rng.gen.choice(np.arange(1, 37108), size=v, replace=False))
    universe = [str(a) for a in api_ids]
    background = 1.0 / np.arange(1, v + 1)
    background = background[rng.gen.permutation(v)]
    background /= background.sum()
    k = len(spec.class_priors)
    class_dists = []
    for c in range(k):
        w = background.copy()
        sig = rng.gen.choice(v, size=MALWARE_SIGNATURE, replace=False)
        w[sig] *= MALWARE_BOOST
        w += 1.0 / v
        class_dists.append(w / w.sum())
    labels = _draw_labels(rng, spec.n_samples, spec.class_priors)
    lo, hi = spec.doc_length
    lengths = rng.gen.integers(lo, hi + 1, size=spec.n_samples)
    docs = []
    for lab, length in zip(labels, lengths):
        p = spec.noise * background + (1.0 - spec.noise) * class_dists[lab]
        toks = rng.gen.choice(v, size=length, p=p)
        docs.append(" ".join(universe[t] for t in toks))
    return docs, labels, universe


def vectorize_documents(docs: Sequence[str], labels, class_names: Sequence[str], vocab: Vocabulary) -> Dataset:
    return Dataset(transform_counts(vocab, docs), labels, list(class_names), list(vocab.tokens))


def generate(spec: SyntheticSpec) -> Dataset:
    if spec.task == "incident_like":
        return _incident(spec)
    if spec.task == "fraud_like":
        return _fraud(spec)
    docs, labels, _ = generate_documents(spec)
    return vectorize_documents(docs, labels, CLASS_NAMES["malware_like"], fit_vocabulary(docs))


def generate_split(spec: SyntheticSpec, test_fraction: float = 0.3) -> tuple[Dataset, Dataset]:
    """Paired train/test sets drawn from one generated population."""
    return train_test_split(generate(spec), test_fraction, spec.seed)


# ---------------------------------------------------------------------------
# splits


def stratified_test_indices(labels: np.ndarray, test_fraction: float, rng: RngState) -> np.ndarray:
    labels = np.asarray(labels)
    n = labels.shape[0]
    classes = np.unique(labels)
    n_test = int(round(n * test_fraction))
    # largest-remainder allocation keeps per-class shares within one sample
    exact = np.array([np.sum(labels == c) * test_fraction for c in classes])
    alloc = np.floor(exact).astype(int)
    remainder = n_test - alloc.sum()
    order = np.argsort(-(exact - alloc), kind="stable")
    alloc[order[:remainder]] += 1
    picked = []
    for c, m in zip(classes, alloc):
        members = np.flatnonzero(labels == c)
        picked.append(members[rng.gen.permutation(members.shape[0])[:m]])
    return np.sort(np.concatenate(picked)) if picked else np.array([], dtype=np.int64)


def train_test_split(dataset: Dataset, test_fraction: float, seed: int = 0) -> tuple[Dataset, Dataset]:
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    test_idx = stratified_test_indices(dataset.labels, test_fraction, derive(seed, 19))
    mask = np.zeros(dataset.n_samples, dtype=bool)
    mask[test_idx] = True
    train_idx = np.flatnonzero(~mask)
    if train_idx.size == 0 or test_idx.size == 0:
        raise DataError(f"split of {dataset.n_samples} samples at {test_fraction} leaves an empty side")
    return dataset.subset(train_idx), dataset.subset(test_idx)


def write_meta(path: str | Path, meta: dict) -> None:
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
