"""Confusion matrices, per-class scores, and the heat-map CSV."""

from __future__ import annotations

import numpy as np
import pytest

from cgnn.errors import EmptyMatrix, LabelOutOfRange, ShapeMismatch
from cgnn.metrics import (classification_report, confusion_matrix,
                          format_report, normalized_confusion,
                          report_from_confusion, write_heatmap_csv)


# --- confusion matrix --------------------------------------------------------

def test_perfect_predictions_fill_the_diagonal():
    true = np.array([0, 1, 2, 0, 1, 2])
    counts = confusion_matrix(true, true, 3)
    assert np.array_equal(counts, np.diag([2, 2, 2]))


def test_empty_input_gives_zero_matrix():
    counts = confusion_matrix(np.array([]), np.array([]), 2)
    assert counts.tolist() == [[0, 0], [0, 0]]


def test_known_tally():
    counts = confusion_matrix(np.array([0, 0, 1]), np.array([0, 1, 1]), 2)
    assert counts.tolist() == [[1, 1], [0, 1]]


def test_matrix_total_equals_sample_count(rng):
    true = rng.integers(0, 4, size=100)
    pred = rng.integers(0, 4, size=100)
    assert confusion_matrix(true, pred, 4).sum() == 100


def test_rejects_label_outside_range():
    with pytest.raises(LabelOutOfRange):
        confusion_matrix(np.array([0, 3]), np.array([0, 0]), 2)
    with pytest.raises(LabelOutOfRange):
        confusion_matrix(np.array([0]), np.array([-1]), 2)


def test_rejects_length_mismatch():
    with pytest.raises(ShapeMismatch):
        confusion_matrix(np.array([0, 1]), np.array([0]), 2)


# --- report ------------------------------------------------------------------

def test_known_precision_and_recall():
    # Class 0: 3 correct, 1 false positive, 1 false negative.
    counts = np.array([[3, 1], [1, 5]])
    report = report_from_confusion(counts, ["a", "b"])
    assert report.precision[0] == pytest.approx(0.75)
    assert report.recall[0] == pytest.approx(0.75)
    assert report.precision[1] == pytest.approx(5 / 6)
    assert report.recall[1] == pytest.approx(5 / 6)
    assert report.accuracy == pytest.approx(0.8)


def test_perfect_diagonal_scores_one():
    report = report_from_confusion(np.diag([4, 2, 9]), ["a", "b", "c"])
    assert report.precision.tolist() == [1.0, 1.0, 1.0]
    assert report.recall.tolist() == [1.0, 1.0, 1.0]
    assert report.accuracy == 1.0
    assert report.macro_precision == 1.0
    assert report.macro_recall == 1.0


def test_absent_class_scores_zero_not_nan():
    # Nothing was ever labeled or predicted as class 1.
    counts = np.array([[5, 0], [0, 0]])
    report = report_from_confusion(counts, ["seen", "unseen"])
    assert report.precision[1] == 0.0
    assert report.recall[1] == 0.0
    assert np.isfinite(report.precision).all()


def test_empty_matrix_is_rejected():
    with pytest.raises(EmptyMatrix):
        report_from_confusion(np.zeros((2, 2), dtype=np.int64), ["a", "b"])


def test_accuracy_is_trace_over_total(rng):
    true = rng.integers(0, 3, size=60)
    pred = rng.integers(0, 3, size=60)
    report = classification_report(true, pred, ["a", "b", "c"])
    counts = report.confusion
    assert report.accuracy == pytest.approx(np.trace(counts) / counts.sum())


def test_precision_times_predicted_count_recovers_diagonal(rng):
    true = rng.integers(0, 3, size=80)
    pred = rng.integers(0, 3, size=80)
    report = classification_report(true, pred, ["a", "b", "c"])
    predicted = report.confusion.sum(axis=0)
    recovered = report.precision * predicted
    assert np.abs(recovered - np.diag(report.confusion)).max() <= 1e-9


def test_scores_follow_a_class_permutation(rng):
    true = rng.integers(0, 3, size=50)
    pred = rng.integers(0, 3, size=50)
    base = classification_report(true, pred, ["a", "b", "c"])
    perm = np.array([2, 0, 1])
    swapped = classification_report(perm[true], perm[pred], ["a", "b", "c"])
    assert swapped.accuracy == pytest.approx(base.accuracy)
    for i in range(3):
        assert swapped.precision[perm[i]] == pytest.approx(base.precision[i])
        assert swapped.recall[perm[i]] == pytest.approx(base.recall[i])


def test_weighted_macro_weighs_by_support():
    # 9 of 10 samples are class 0 and perfectly predicted; class 1's
    # single sample is missed.
    counts = np.array([[9, 0], [1, 0]])
    plain = report_from_confusion(counts, ["a", "b"])
    weighted = report_from_confusion(counts, ["a", "b"], weighted=True)
    assert plain.macro_recall == pytest.approx(0.5)
    assert weighted.macro_recall == pytest.approx(0.9)


def test_macro_average_of_per_class_scores():
    counts = np.array([[3, 1], [1, 5]])
    report = report_from_confusion(counts, ["a", "b"])
    assert report.macro_precision == pytest.approx(
        report.precision.mean())
    assert report.macro_recall == pytest.approx(report.recall.mean())


# --- normalization and output ------------------------------------------------

def test_normalized_rows_are_fractions():
    counts = np.array([[1, 1], [0, 2]])
    fractions = normalized_confusion(counts)
    assert fractions.tolist() == [[0.5, 0.5], [0.0, 1.0]]


def test_normalized_empty_row_stays_zero():
    counts = np.array([[0, 0], [1, 3]])
    fractions = normalized_confusion(counts)
    assert fractions[0].tolist() == [0.0, 0.0]
    assert fractions[1].sum() == pytest.approx(1.0)


def test_heatmap_csv_layout(tmp_path):
    counts = np.array([[1, 1], [0, 2]])
    report = report_from_confusion(counts, ["chat", "mail"])
    path = tmp_path / "confusion.csv"
    write_heatmap_csv(report, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "true\\predicted,chat,mail"
    assert lines[1] == "chat,0.500000,0.500000"
    assert lines[2] == "mail,0.000000,1.000000"
    assert len(lines) == 3


def test_heatmap_csv_rows_parse_back(tmp_path, rng):
    true = rng.integers(0, 3, size=40)
    pred = rng.integers(0, 3, size=40)
    report = classification_report(true, pred, ["a", "b", "c"])
    path = tmp_path / "confusion.csv"
    write_heatmap_csv(report, path)
    rows = [line.split(",") for line in path.read_text().splitlines()[1:]]
    parsed = np.array([[float(v) for v in row[1:]] for row in rows])
    assert np.abs(parsed - normalized_confusion(report.confusion)).max() \
        <= 1e-6
    assert [row[0] for row in rows] == ["a", "b", "c"]


def test_format_report_mentions_every_score():
    counts = np.array([[3, 1], [1, 5]])
    text = format_report(report_from_confusion(counts, ["chat", "mail"]))
    assert "chat" in text and "mail" in text
    assert "accuracy" in text and "0.8000" in text
    assert "macro precision" in text
    assert "0.7500" in text  # class 0 precision
