"""Evaluation: confusion matrix, per-class precision and recall,
accuracy, and a row-normalized heat-map CSV of the confusion matrix.

Each class is scored one-vs-rest: precision TP/(TP+FP) and recall
TP/(TP+FN), both defined as 0 when their denominator is 0. Accuracy is
correct predictions over all predictions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyMatrix, LabelOutOfRange, ShapeMismatch
from .ioutil import atomic_write_bytes


def confusion_matrix(true: np.ndarray, pred: np.ndarray,
                     num_classes: int) -> np.ndarray:
    """Counts[i, j] of graphs with true class i predicted as class j.
    Empty inputs give the all-zero matrix."""
    true = np.asarray(true, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if true.shape != pred.shape:
        raise ShapeMismatch(f"{true.size} true labels against "
                            f"{pred.size} predictions")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    if true.size == 0:
        return counts
    both = np.concatenate([true, pred])
    if both.min() < 0 or both.max() >= num_classes:
        raise LabelOutOfRange(
            f"labels span [{both.min()}, {both.max()}], "
            f"expected 0..{num_classes - 1}")
    np.add.at(counts, (true, pred), 1)
    return counts


@dataclass
class EvalReport:
    """Scores for one evaluation run."""

    label_names: list[str]
    confusion: np.ndarray  # (m, m) counts, rows true, columns predicted
    accuracy: float
    precision: np.ndarray  # (m,) one-vs-rest
    recall: np.ndarray  # (m,)
    macro_precision: float
    macro_recall: float


def _safe_divide(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def classification_report(true: np.ndarray, pred: np.ndarray,
                          label_names: list[str],
                          weighted: bool = False) -> EvalReport:
    """Score predictions against true labels.

    Macro averages weigh every class equally; with weighted=True they
    are weighed by class support instead.
    """
    counts = confusion_matrix(true, pred, len(label_names))
    return report_from_confusion(counts, label_names, weighted=weighted)


def report_from_confusion(counts: np.ndarray, label_names: list[str],
                          weighted: bool = False) -> EvalReport:
    """Score an already-tallied confusion matrix."""
    if counts.sum() == 0:
        raise EmptyMatrix("confusion matrix holds no observations")
    diag = np.diag(counts).astype(np.float64)
    precision = _safe_divide(diag, counts.sum(axis=0))
    recall = _safe_divide(diag, counts.sum(axis=1))
    support = counts.sum(axis=1)
    if weighted:
        weights = support / support.sum()
    else:
        weights = np.full(len(label_names), 1.0 / len(label_names))
    return EvalReport(
        label_names=list(label_names),
        confusion=counts,
        accuracy=float(diag.sum() / counts.sum()),
        precision=precision,
        recall=recall,
        macro_precision=float(precision @ weights),
        macro_recall=float(recall @ weights),
    )


def normalized_confusion(counts: np.ndarray) -> np.ndarray:
    """Rows rescaled to fractions of each true class; rows with no
    samples stay all zero."""
    sums = counts.sum(axis=1, keepdims=True).astype(np.float64)
    return _safe_divide(counts.astype(np.float64),
                        np.broadcast_to(sums, counts.shape))


def write_heatmap_csv(report: EvalReport, path: Path | str) -> None:
    """Row-normalized confusion matrix as CSV: one row per true class,
    one column per predicted class, fractions in [0, 1]."""
    fractions = normalized_confusion(report.confusion)
    lines = ["true\\predicted," + ",".join(report.label_names)]
    for name, row in zip(report.label_names, fractions):
        lines.append(name + "," + ",".join(f"{v:.6f}" for v in row))
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))


def format_report(report: EvalReport) -> str:
    """Human-readable score table for the terminal."""
    width = max(5, max(len(name) for name in report.label_names))
    lines = [f"{'class':<{width}}  {'precision':>9}  {'recall':>9}  "
             f"{'support':>7}"]
    support = report.confusion.sum(axis=1)
    for i, name in enumerate(report.label_names):
        lines.append(f"{name:<{width}}  {report.precision[i]:>9.4f}  "
                     f"{report.recall[i]:>9.4f}  {support[i]:>7d}")
    lines.append("")
    lines.append(f"accuracy        {report.accuracy:.4f}")
    lines.append(f"macro precision {report.macro_precision:.4f}")
    lines.append(f"macro recall    {report.macro_recall:.4f}")
    return "\n".join(lines)
