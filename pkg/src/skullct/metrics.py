"""Multiclass evaluation panel: confusion counts, P/R/F1 under every
averaging scheme, balanced accuracy, Hamming score/loss, ROC AUC, Cohen's
kappa and log loss, plus the classwise report table.

Positive/negative counts are read one-vs-rest per class. F1 is computed
straight from integer counts as 2*TP / (2*TP + FP + FN), which is
algebraically the usual harmonic mean but keeps the micro-F1 == accuracy
identity exact in floating point. Divisions of the form 0/0 yield 0.

Hamming score is the mean per-sample Jaccard overlap between positive
label sets (the multi-label convention); on one-hot rows this equals the
exact-match rate.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

AVERAGES = ("micro", "macro", "weighted", "samples")

PANEL_KEYS = ("f1_micro", "hamming_score", "hamming_loss", "balanced_accuracy",
              "roc_auc", "kappa", "log_loss")


class LabelOutOfRange(DataError):
    pass


class EmptyMatrix(DataError):
    pass


class ZeroSupportClass(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class SingleClassColumn(DataError):
    def __init__(self, k: int):
        super().__init__(f"class column {k} has no positives or no negatives")
        self.k = k


class DegenerateAgreement(DataError):
    """Expected agreement is 1; kappa is undefined."""


class BadProbabilityRow(DataError):
    pass


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    """K x K count matrix, rows = true class, columns = predicted class."""
    t = np.asarray(y_true, dtype=np.int64)
    p = np.asarray(y_pred, dtype=np.int64)
    if t.shape != p.shape:
        raise ShapeMismatch(f"{t.shape} vs {p.shape}")
    if t.size and (t.min() < 0 or t.max() >= n_classes
                   or p.min() < 0 or p.max() >= n_classes):
        raise LabelOutOfRange(f"labels outside [0, {n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def _div(num: float, den: float) -> float:
    return 0.0 if den == 0 else num / den


def _class_counts(cm: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One-vs-rest (tp, fp, fn) per class."""
    tp = np.diag(cm)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    return tp, fp, fn


def precision_recall_f1(cm: np.ndarray, average: str | None = None):
    """Per-class (precision, recall, f1, support) arrays, or one averaged triple.

    average=None returns the per-class arrays; "micro" pools counts over
    classes; "macro" averages per-class scores unweighted; "weighted"
    weights by support. "samples" averages per-sample F1, which for
    single-label data pools to exactly the micro scores, so it is computed
    that way here.
    """
    cm = np.asarray(cm)
    total = int(cm.sum())
    if total == 0:
        raise EmptyMatrix("confusion matrix is empty")
    tp, fp, fn = _class_counts(cm)
    support = cm.sum(axis=1)

    if average is None:
        prec = np.array([_div(t, t + f) for t, f in zip(tp, fp)])
        rec = np.array([_div(t, t + f) for t, f in zip(tp, fn)])
        f1 = np.array([_div(2 * t, 2 * t + p + n)
                       for t, p, n in zip(tp, fp, fn)])
        zero_divs = int(((tp + fp) == 0).sum() + ((tp + fn) == 0).sum())
        if zero_divs:
            log.warning("%d zero-division guard(s) applied in P/R", zero_divs)
        return prec, rec, f1, support

    if average == "micro" or average == "samples":
        t, p, n = int(tp.sum()), int(fp.sum()), int(fn.sum())
        return _div(t, t + p), _div(t, t + n), _div(2 * t, 2 * t + p + n)
    prec, rec, f1, support = precision_recall_f1(cm)
    if average == "macro":
        return float(prec.mean()), float(rec.mean()), float(f1.mean())
    if average == "weighted":
        w = support / total
        return (float(prec @ w), float(rec @ w), float(f1 @ w))
    raise ValueError(f"unknown averaging {average!r}")


def accuracy(cm: np.ndarray) -> float:
    cm = np.asarray(cm)
    total = int(cm.sum())
    if total == 0:
        raise EmptyMatrix("confusion matrix is empty")
    return int(np.trace(cm)) / total


def balanced_accuracy(cm: np.ndarray) -> float:
    """Unweighted mean of per-class recalls."""
    cm = np.asarray(cm)
    if cm.sum() == 0:
        raise EmptyMatrix("confusion matrix is empty")
    support = cm.sum(axis=1)
    if (support == 0).any():
        raise ZeroSupportClass(
            f"classes {np.nonzero(support == 0)[0].tolist()} have no samples")
    return float((np.diag(cm) / support).mean())


def hamming(y_true_onehot, y_pred_onehot) -> tuple[float, float]:
    """(score, loss): mean per-sample Jaccard overlap, and the fraction of
    disagreeing label positions."""
    yt = np.asarray(y_true_onehot)
    yp = np.asarray(y_pred_onehot)
    if yt.shape != yp.shape or yt.ndim != 2:
        raise ShapeMismatch(f"{yt.shape} vs {yp.shape}")
    yt = yt.astype(bool)
    yp = yp.astype(bool)
    n, k = yt.shape
    if n == 0 or k == 0:
        raise EmptyMatrix("no label positions")
    loss = int((yt != yp).sum()) / (n * k)
    inter = (yt & yp).sum(axis=1)
    union = (yt | yp).sum(axis=1)
    per_sample = np.where(union == 0, 1.0, inter / np.maximum(union, 1))
    return float(per_sample.mean()), loss


def roc_auc_per_class(y_true_onehot, scores) -> np.ndarray:
    """One-vs-rest AUC per class via the rank (Mann-Whitney) statistic.

    Tied scores receive average ranks, crediting tied pairs with 0.5.
    """
    yt = np.asarray(y_true_onehot).astype(bool)
    sc = np.asarray(scores, dtype=np.float64)
    if yt.shape != sc.shape or yt.ndim != 2:
        raise ShapeMismatch(f"{yt.shape} vs {sc.shape}")
    n, k = yt.shape
    aucs = np.empty(k)
    for c in range(k):
        pos = yt[:, c]
        n_pos = int(pos.sum())
        n_neg = n - n_pos
        if n_pos == 0 or n_neg == 0:
            raise SingleClassColumn(c)
        ranks = _average_ranks(sc[:, c])
        aucs[c] = (ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return aucs


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing the mean rank of their block."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    xs = x[order]
    i = 0
    while i < len(xs):
        j = i
        while j + 1 < len(xs) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def roc_auc(y_true_onehot, scores) -> float:
    """Unweighted macro average of the per-class one-vs-rest AUCs."""
    return float(roc_auc_per_class(y_true_onehot, scores).mean())


def cohen_kappa(cm: np.ndarray) -> float:
    cm = np.asarray(cm, dtype=np.float64)
    total = cm.sum()
    if total == 0:
        raise EmptyMatrix("confusion matrix is empty")
    p_o = np.trace(cm) / total
    p_e = float((cm.sum(axis=1) * cm.sum(axis=0)).sum()) / (total * total)
    if p_e == 1.0:
        raise DegenerateAgreement("expected agreement is 1")
    return float((p_o - p_e) / (1.0 - p_e))


def log_loss(y_true, prob_matrix, eps: float = 1e-15) -> float:
    """Mean negative log probability of the true class.

    Rows must sum to 1 within 1e-6; entries are clipped to [eps, 1-eps]
    and rows renormalized before taking logs.
    """
    y = np.asarray(y_true, dtype=np.int64)
    p = np.asarray(prob_matrix, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] != y.shape[0]:
        raise ShapeMismatch(f"{p.shape} probs for {y.shape} labels")
    if y.size == 0:
        raise EmptyMatrix("no samples")
    if y.min() < 0 or y.max() >= p.shape[1]:
        raise LabelOutOfRange(f"labels outside [0, {p.shape[1]})")
    sums = p.sum(axis=1)
    bad = np.nonzero(np.abs(sums - 1.0) > 1e-6)[0]
    if bad.size:
        raise BadProbabilityRow(f"row {bad[0]} sums to {sums[bad[0]]!r}")
    clipped = np.clip(p, eps, 1.0 - eps)
    clipped /= clipped.sum(axis=1, keepdims=True)
    return float(-np.log(clipped[np.arange(len(y)), y]).mean())


@dataclass
class EvaluationReport:
    """Classwise scores plus the metric panel; score-based panel entries
    (roc_auc, log_loss) are None when no probability scores were given."""

    class_names: tuple[str, ...]
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    averages: dict[str, tuple[float, float, float]]
    panel: dict[str, float | None]

    def to_dict(self) -> dict:
        per_class = {
            name: {
                "precision": float(self.precision[i]),
                "recall": float(self.recall[i]),
                "f1": float(self.f1[i]),
                "support": int(self.support[i]),
            }
            for i, name in enumerate(self.class_names)
        }
        return {
            "per_class": per_class,
            "averages": {
                name: {"precision": p, "recall": r, "f1": f,
                       "support": int(self.support.sum())}
                for name, (p, r, f) in self.averages.items()
            },
            "panel": dict(self.panel),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def format_table(self) -> str:
        """Classwise table in the classic report layout."""
        rows = list(self.class_names) + [f"{a} avg" for a in AVERAGES]
        width = max(len(r) for r in rows) + 2
        head = (" " * width
                + f"{'precision':>10}{'recall':>10}{'f1-score':>10}{'support':>10}")
        lines = [head, ""]
        total = int(self.support.sum())
        for i, name in enumerate(self.class_names):
            lines.append(f"{name:>{width}}"
                         f"{self.precision[i]:>10.2f}{self.recall[i]:>10.2f}"
                         f"{self.f1[i]:>10.2f}{int(self.support[i]):>10}")
        lines.append("")
        for avg in AVERAGES:
            p, r, f = self.averages[avg]
            lines.append(f"{avg + ' avg':>{width}}"
                         f"{p:>10.2f}{r:>10.2f}{f:>10.2f}{total:>10}")
        return "\n".join(lines) + "\n"


def classification_report(cm: np.ndarray,
                          class_names: tuple[str, ...]) -> EvaluationReport:
    """Build the classwise report (and cm-derivable panel entries)."""
    cm = np.asarray(cm)
    if cm.sum() == 0:
        raise EmptyMatrix("confusion matrix is empty")
    if cm.shape[0] != len(class_names):
        raise ShapeMismatch(f"{cm.shape} matrix for {len(class_names)} names")
    prec, rec, f1, support = precision_recall_f1(cm)
    averages = {a: precision_recall_f1(cm, average=a) for a in AVERAGES}
    acc = accuracy(cm)
    k = cm.shape[0]
    panel: dict[str, float | None] = {
        "f1_micro": averages["micro"][2],
        # one-hot rows disagree in exactly two positions per error
        "hamming_score": acc,
        "hamming_loss": 2 * int(cm.sum() - np.trace(cm)) / (int(cm.sum()) * k),
        "balanced_accuracy": (balanced_accuracy(cm)
                              if (cm.sum(axis=1) > 0).all() else None),
        "roc_auc": None,
        "kappa": cohen_kappa(cm),
        "log_loss": None,
    }
    return EvaluationReport(tuple(class_names), prec, rec, f1, support,
                            averages, panel)


def evaluate_predictions(y_true, y_pred, proba,
                         class_names: tuple[str, ...],
                         log_loss_eps: float = 1e-15) -> EvaluationReport:
    """Full report from labels plus (optional) probability scores."""
    k = len(class_names)
    cm = confusion_matrix(y_true, y_pred, k)
    report = classification_report(cm, class_names)
    if proba is not None:
        onehot = np.zeros((len(y_true), k), dtype=np.int64)
        onehot[np.arange(len(y_true)), np.asarray(y_true, dtype=np.int64)] = 1
        try:
            report.panel["roc_auc"] = roc_auc(onehot, proba)
        except SingleClassColumn:
            log.warning("ROC AUC undefined: a class is absent from y_true")
        report.panel["log_loss"] = log_loss(y_true, proba, eps=log_loss_eps)
    return report
