"""Confusion matrices and accuracy / precision / recall / F1 reports."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from deepnet.errors import DataError


def confusion(true_labels: Sequence[int], predicted_labels: Sequence[int], k: int) -> np.ndarray:
    """k x k counts; rows are true classes, columns predicted classes."""
    t = np.asarray(true_labels)
    p = np.asarray(predicted_labels)
    if t.ndim != 1 or p.ndim != 1 or t.shape != p.shape:
        raise DataError(f"label vectors must be 1-D of equal length, got {t.shape} and {p.shape}")
    if t.size == 0:
        raise DataError("cannot build a confusion matrix from empty label vectors")
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    for name, v in (("true", t), ("predicted", p)):
        if not np.issubdtype(v.dtype, np.integer):
            if not np.all(np.equal(np.mod(v, 1), 0)):
                raise DataError(f"{name} labels must be integers")
            v = v.astype(np.int64)
        if v.min() < 0 or v.max() >= k:
            raise DataError(f"{name} labels must lie in [0, {k}), got range [{v.min()}, {v.max()}]")
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (t.astype(np.int64), p.astype(np.int64)), 1)
    return cm


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    undefined = den == 0
    out = np.divide(num, den, out=np.zeros(num.shape, dtype=np.float64), where=~undefined)
    return out, undefined


@dataclass
class MetricsReport:
    confusion: np.ndarray
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    macro: dict[str, float]
    weighted: dict[str, float]
    # (class, metric) pairs whose denominator was zero and were reported as 0
    zero_division: list[tuple[int, str]] = field(default_factory=list)
    average: str = "macro"
    class_names: list[str] | None = None

    @property
    def num_classes(self) -> int:
        return self.confusion.shape[0]

    def summary(self, average: str | None = None) -> dict[str, float]:
        """The four headline numbers under the chosen averaging scheme."""
        avg = self.macro if (average or self.average) == "macro" else self.weighted
        return {"accuracy": self.accuracy, "precision": avg["precision"],
                "recall": avg["recall"], "f1": avg["f1"]}

    def to_dict(self) -> dict[str, Any]:
        names = self.class_names or [str(i) for i in range(self.num_classes)]
        return {
            "accuracy": self.accuracy,
            "average": self.average,
            "macro": dict(self.macro),
            "weighted": dict(self.weighted),
            "per_class": [
                {"class": names[i], "precision": float(self.precision[i]), "recall": float(self.recall[i]),
                 "f1": float(self.f1[i]), "support": int(self.support[i])}
                for i in range(self.num_classes)
            ],
            "confusion": self.confusion.tolist(),
            "zero_division": [[c, m] for c, m in self.zero_division],
        }

    def to_table(self) -> str:
        names = self.class_names or [str(i) for i in range(self.num_classes)]
        w = max(8, *(len(n) for n in names))
        lines = [f"accuracy {self.accuracy:.4f}", "",
                 f"{'class':<{w}}  precision  recall     f1-score   support"]
        for i, n in enumerate(names):
            lines.append(f"{n:<{w}}  {self.precision[i]:<9.4f}  {self.recall[i]:<9.4f}  "
                         f"{self.f1[i]:<9.4f}  {int(self.support[i])}")
        for label, avg in (("macro", self.macro), ("weighted", self.weighted)):
            lines.append(f"{label:<{w}}  {avg['precision']:<9.4f}  {avg['recall']:<9.4f}  "
                         f"{avg['f1']:<9.4f}  {int(self.support.sum())}")
        lines += ["", "confusion (rows true, cols predicted)"]
        lines += ["  " + " ".join(f"{v:>6d}" for v in row) for row in self.confusion]
        if self.zero_division:
            lines.append("undefined ratios reported as 0: " +
                         ", ".join(f"class {c} {m}" for c, m in self.zero_division))
        return "\n".join(lines)


def report(cm: np.ndarray, class_names: Sequence[str] | None = None, average: str = "macro") -> MetricsReport:
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise DataError(f"confusion matrix must be square, got {cm.shape}")
    if np.any(cm < 0):
        raise DataError("confusion matrix has negative counts")
    total = cm.sum()
    if total <= 0:
        raise DataError("confusion matrix is empty")
    if average not in ("macro", "weighted"):
        raise ValueError(f"average must be 'macro' or 'weighted', got {average!r}")
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    precision, p_undef = _safe_ratio(tp, predicted.astype(np.float64))
    recall, r_undef = _safe_ratio(tp, support.astype(np.float64))
    f1, _ = _safe_ratio(2 * precision * recall, precision + recall)
    zero_div = [(int(c), "precision") for c in np.flatnonzero(p_undef)]
    zero_div += [(int(c), "recall") for c in np.flatnonzero(r_undef)]
    zero_div.sort()
    weights = support / total
    macro = {"precision": float(precision.mean()), "recall": float(recall.mean()), "f1": float(f1.mean())}
    # support-weighted recall collapses to trace/total; computed that way it is exact
    weighted = {"precision": float(weights @ precision), "recall": float(tp.sum() / total),
                "f1": float(weights @ f1)}
    return MetricsReport(cm, float(tp.sum() / total), precision, recall, f1, support,
                         macro, weighted, zero_div, average,
                         list(class_names) if class_names is not None else None)


def evaluate_labels(true_labels, predicted_labels, k: int, class_names=None) -> MetricsReport:
    return report(confusion(true_labels, predicted_labels, k), class_names)
