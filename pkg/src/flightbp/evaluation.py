"""Class decisions, confusion matrices, accuracy and report rendering."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from flightbp.errors import DimensionMismatch, EmptyDataset, EmptyMatrix, IndexOutOfRange
from flightbp.nn_core import NetworkParams, network_forward


def decide(outputs) -> int:
    """Class index for one output vector.

    A single output is thresholded at 0 (class 1 iff output >= 0); several
    outputs take the argmax, ties going to the lowest index.
    """
    out = np.asarray(outputs, dtype=np.float64).ravel()
    if out.size == 0:
        raise DimensionMismatch("empty output vector")
    if out.size == 1:
        return int(out[0] >= 0.0)
    return int(np.argmax(out))


def predict_class(net: NetworkParams, features) -> int:
    return decide(network_forward(net, features).output)


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts with rows = actual class and columns = predicted class."""

    counts: np.ndarray
    class_names: tuple[str, ...]

    @property
    def k(self) -> int:
        return len(self.class_names)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def correct(self) -> int:
        return int(np.trace(self.counts))

    def to_list(self) -> list[list[int]]:
        return self.counts.tolist()


def confusion_matrix(actual: Sequence[int], predicted: Sequence[int], k: int, class_names=None) -> ConfusionMatrix:
    if len(actual) != len(predicted):
        raise DimensionMismatch(f"{len(actual)} actual labels vs {len(predicted)} predicted")
    if k < 1:
        raise ValueError(f"number of classes must be positive, got {k}")
    names = tuple(class_names) if class_names is not None else tuple(str(i) for i in range(k))
    if len(names) != k:
        raise DimensionMismatch(f"{len(names)} class names for {k} classes")
    counts = np.zeros((k, k), dtype=np.int64)
    for a, p in zip(actual, predicted):
        if not (0 <= a < k and 0 <= p < k):
            raise IndexOutOfRange(f"class index pair ({a}, {p}) outside [0, {k})")
        counts[a, p] += 1
    return ConfusionMatrix(counts, names)


def accuracy(matrix: ConfusionMatrix) -> float:
    total = matrix.total
    if total < 1:
        raise EmptyMatrix("accuracy of an empty confusion matrix")
    return matrix.correct / total


@dataclass(frozen=True, eq=False)
class EvalReport:
    accuracy: float
    confusion: ConfusionMatrix
    precision: np.ndarray
    recall: np.ndarray
    n_samples: int
    # classes never predicted (precision reported as 0) / never present (recall 0)
    empty_predicted: tuple[str, ...] = field(default=())
    empty_actual: tuple[str, ...] = field(default=())


def report_from_matrix(matrix: ConfusionMatrix) -> EvalReport:
    counts = matrix.counts
    diag = np.diag(counts).astype(np.float64)
    col = counts.sum(axis=0)
    row = counts.sum(axis=1)
    precision = np.divide(diag, col, out=np.zeros(matrix.k), where=col > 0)
    recall = np.divide(diag, row, out=np.zeros(matrix.k), where=row > 0)
    return EvalReport(
        accuracy=accuracy(matrix),
        confusion=matrix,
        precision=precision,
        recall=recall,
        n_samples=matrix.total,
        empty_predicted=tuple(n for n, c in zip(matrix.class_names, col) if c == 0),
        empty_actual=tuple(n for n, c in zip(matrix.class_names, row) if c == 0),
    )


def evaluate(net: NetworkParams, dataset, class_names: Sequence[str]) -> EvalReport:
    features = np.asarray(dataset.features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise EmptyDataset("cannot evaluate on an empty dataset")
    if features.shape[1] != net.input_dim:
        raise DimensionMismatch(f"dataset width {features.shape[1]} vs network input {net.input_dim}")
    actual = dataset.labels()
    predicted = [predict_class(net, x) for x in features]
    return report_from_matrix(confusion_matrix(list(actual), predicted, len(class_names), class_names))


def render_report(report: EvalReport, machine_readable: bool = False) -> str:
    """Fixed-layout text table, or ``key: value`` lines when ``machine_readable``.

    The machine-readable form has one ``confusion[<actual>]`` line per actual
    class holding the comma-separated predicted counts; ``parse_report``
    reads it back.
    """
    names = report.confusion.class_names
    counts = report.confusion.counts
    if machine_readable:
        lines = [
            "format: flightbp-report/1",
            f"n_samples: {report.n_samples}",
            f"accuracy: {report.accuracy!r}",
            f"classes: {','.join(names)}",
        ]
        for name, row in zip(names, counts):
            lines.append(f"confusion[{name}]: {','.join(str(int(c)) for c in row)}")
        for name, p, r in zip(names, report.precision, report.recall):
            lines.append(f"precision[{name}]: {float(p)!r}")
            lines.append(f"recall[{name}]: {float(r)!r}")
        if report.empty_predicted:
            lines.append(f"empty_predicted: {','.join(report.empty_predicted)}")
        return "\n".join(lines) + "\n"

    width = max([len(n) for n in names] + [len(str(int(counts.max(initial=0)))), 9])
    head = "actual \\ predicted"
    label_w = max(len(head), *(len(n) for n in names))
    lines = [f"samples: {report.n_samples}", f"accuracy: {report.accuracy:.4f}", ""]
    lines.append(head.ljust(label_w) + "".join(f"  {n:>{width}}" for n in names))
    for name, row in zip(names, counts):
        lines.append(name.ljust(label_w) + "".join(f"  {int(c):>{width}}" for c in row))
    lines.append("")
    lines.append("class".ljust(label_w) + f"  {'precision':>{width}}  {'recall':>{width}}")
    for name, p, r in zip(names, report.precision, report.recall):
        flag = "  (never predicted)" if name in report.empty_predicted else ""
        lines.append(name.ljust(label_w) + f"  {p:>{width}.4f}  {r:>{width}.4f}{flag}")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict:
    """Read the machine-readable report into a dict (``confusion`` as a K x K list)."""
    values = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition(": ")
        values[key] = value
    names = values["classes"].split(",")
    return {
        "n_samples": int(values["n_samples"]),
        "accuracy": float(values["accuracy"]),
        "classes": names,
        "confusion": [[int(c) for c in values[f"confusion[{n}]"].split(",")] for n in names],
        "precision": [float(values[f"precision[{n}]"]) for n in names],
        "recall": [float(values[f"recall[{n}]"]) for n in names],
    }
