"""Confusion matrices, per-class/macro classification reports and their renderings."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, UsageError

log = logging.getLogger(__name__)

CSV_HEADER = ["class", "precision", "recall", "f1", "support"]


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows: true class, columns: predicted class
    class_names: list

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class ClassificationReport:
    class_names: list
    precision: list
    recall: list
    f1: list
    support: list
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy: float
    degenerate: list = field(default_factory=list)

    @property
    def total(self) -> int:
        return int(sum(self.support))


def confusion_matrix(y_true, y_pred, num_classes: int, class_names=None) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise DataError(f"label sequences differ in shape: {y_true.shape} vs {y_pred.shape}")
    for name, y in (("true", y_true), ("predicted", y_pred)):
        if y.size and (y.min() < 0 or y.max() >= num_classes):
            raise DataError(f"{name} label out of range for {num_classes} classes")
    counts = np.bincount(y_true * num_classes + y_pred, minlength=num_classes ** 2)
    names = list(class_names) if class_names is not None else [str(i) for i in range(num_classes)]
    return ConfusionMatrix(counts.reshape(num_classes, num_classes), names)


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def classification_report(cm: ConfusionMatrix) -> ClassificationReport:
    """Per-class precision/recall/F1, macro averages and accuracy.

    Any 0/0 is reported as 0 and recorded in ``degenerate`` as ``"<metric>:<class>"``.
    """
    counts = np.asarray(cm.counts, dtype=np.int64)
    total = int(counts.sum())
    if total == 0:
        raise DataError("confusion matrix has no samples")
    k = counts.shape[0]
    precision, recall, f1, support, degenerate = [], [], [], [], []
    for c in range(k):
        tp = int(counts[c, c])
        predicted = int(counts[:, c].sum())
        actual = int(counts[c, :].sum())
        p, r = _ratio(tp, predicted), _ratio(tp, actual)
        if predicted == 0:
            degenerate.append(f"precision:{cm.class_names[c]}")
        if actual == 0:
            degenerate.append(f"recall:{cm.class_names[c]}")
        if p + r == 0:
            f = 0.0
            degenerate.append(f"f1:{cm.class_names[c]}")
        else:
            f = 2 * p * r / (p + r)
        precision.append(p)
        recall.append(r)
        f1.append(f)
        support.append(actual)
    if degenerate:
        log.warning("undefined metrics reported as 0: %s", ", ".join(degenerate))
    return ClassificationReport(
        class_names=list(cm.class_names),
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
        macro_precision=sum(precision) / k,
        macro_recall=sum(recall) / k,
        macro_f1=sum(f1) / k,
        accuracy=int(np.trace(counts)) / total,
        degenerate=degenerate,
    )


# -- rendering --------------------------------------------------------------

def report_to_csv(report: ClassificationReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for i, name in enumerate(report.class_names):
        w.writerow([name, repr(report.precision[i]), repr(report.recall[i]), repr(report.f1[i]),
                    report.support[i]])
    w.writerow(["macro", repr(report.macro_precision), repr(report.macro_recall),
                repr(report.macro_f1), report.total])
    w.writerow(["accuracy", "", "", repr(report.accuracy), report.total])
    return buf.getvalue()


def parse_report_csv(text: str) -> dict:
    """Inverse of :func:`report_to_csv`: ``{row_name: {column: value}}``."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != CSV_HEADER:
        raise DataError("report CSV has an unexpected header")
    out = {}
    for row in rows[1:]:
        name, *vals = row
        out[name] = {
            col: (int(v) if col == "support" else float(v))
            for col, v in zip(CSV_HEADER[1:], vals) if v != ""
        }
    return out


def report_to_text(report: ClassificationReport, cm: ConfusionMatrix | None = None) -> str:
    width = max(10, *(len(n) for n in report.class_names))
    head = f"{'class':<{width}} {'precision':>10} {'recall':>10} {'f1':>10} {'support':>8}"
    lines = [head, "-" * len(head)]

    def row(name, p, r, f, s):
        return f"{name:<{width}} {100 * p:>9.2f}% {100 * r:>9.2f}% {100 * f:>9.2f}% {s:>8d}"

    for i, name in enumerate(report.class_names):
        lines.append(row(name, report.precision[i], report.recall[i], report.f1[i], report.support[i]))
    lines.append(row("macro", report.macro_precision, report.macro_recall, report.macro_f1, report.total))
    lines.append(f"{'accuracy':<{width}} {100 * report.accuracy:>31.2f}% {report.total:>8d}")
    if report.degenerate:
        lines.append("undefined (0/0, reported as 0): " + ", ".join(report.degenerate))
    if cm is not None:
        lines += ["", "confusion matrix (rows = true, columns = predicted)"]
        cw = max(8, *(len(n) for n in cm.class_names))
        lines.append(" " * width + "".join(f" {n:>{cw}}" for n in cm.class_names))
        for name, r in zip(cm.class_names, cm.counts):
            lines.append(f"{name:<{width}}" + "".join(f" {int(v):>{cw}d}" for v in r))
    return "\n".join(lines) + "\n"


def render_report(report: ClassificationReport, cm: ConfusionMatrix, fmt: str) -> str:
    """Render as ``"csv"``, ``"text"`` or ``"svg"`` (confusion-matrix heatmap)."""
    if fmt == "csv":
        return report_to_csv(report)
    if fmt == "text":
        return report_to_text(report, cm)
    if fmt == "svg":
        from .plotting import confusion_matrix_svg
        return confusion_matrix_svg(cm)
    raise UsageError(f"unknown report format {fmt!r}; expected csv, text or svg")
