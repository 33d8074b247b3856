"""Classification metrics, one-vs-rest ROC/AUC, PCA and per-class summaries,
plus their JSON/CSV exports."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .imaging import N_CLASSES


@dataclass
class MetricsReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    macro_auc: float
    confusion: np.ndarray
    per_class_auc: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.macro_precision,
            "recall": self.macro_recall,
            "f1": self.macro_f1,
            "auc": _finite_or_none(self.macro_auc),
            "per_class_auc": [_finite_or_none(a) for a in self.per_class_auc],
            "confusion": self.confusion.astype(int).tolist(),
        }


def _finite_or_none(x):
    return None if x is None or not math.isfinite(x) else float(x)


def confusion_matrix(y_true, y_pred, n_classes: int = N_CLASSES) -> np.ndarray:
    """Entry ``(i, j)`` counts samples of true class ``i`` predicted as ``j``."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred differ in length")
    for arr in (y_true, y_pred):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"labels must lie in [0, {n_classes})")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def classification_metrics(cm) -> Dict[str, object]:
    """Accuracy and macro precision/recall/F1 from a confusion matrix.

    Per-class ratios with a zero denominator count as 0.  Recall is averaged
    over classes with support, precision over classes that were predicted at
    least once, F1 over classes that are either.
    """
    cm = np.asarray(cm, dtype=np.int64)
    total = cm.sum()
    if total == 0:
        raise ValueError("confusion matrix is empty")
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1)
    predicted = cm.sum(axis=0)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, support, out=np.zeros_like(tp), where=support > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    active = (support > 0) | (predicted > 0)
    return {
        "accuracy": float(tp.sum() / total),
        "precision": float(precision[predicted > 0].mean()),
        "recall": float(recall[support > 0].mean()),
        "f1": float(f1[active].mean()),
        "per_class_precision": precision.tolist(),
        "per_class_recall": recall.tolist(),
        "per_class_f1": f1.tolist(),
    }


@dataclass
class RocCurve:
    thresholds: np.ndarray  # descending, starting at +inf and ending at -inf
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float


def roc_curve(positive, scores) -> RocCurve:
    """ROC over every distinct score (ties grouped), with +/-inf sentinels.

    The trapezoidal area is accumulated in integer counts and divided once,
    so it equals the pairwise (Mann-Whitney) statistic up to one rounding.
    """
    positive = np.asarray(positive, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(positive.sum())
    n_neg = int(positive.size - n_pos)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    pos_sorted = positive[order]
    # last index of each group of equal scores
    last = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.r_[0, np.cumsum(pos_sorted)[last]].astype(np.int64)
    fp = np.r_[0, (last + 1) - tp[1:]].astype(np.int64)
    thresholds = np.r_[np.inf, s[last], -np.inf]
    tp = np.r_[tp, n_pos]
    fp = np.r_[fp, n_neg]
    if n_pos == 0 or n_neg == 0:
        auc = float("nan")
        tpr = tp / n_pos if n_pos else np.zeros(tp.shape)
        fpr = fp / n_neg if n_neg else np.zeros(fp.shape)
    else:
        # twice the trapezoid area in count units: sum dfp * (tp_i + tp_{i-1})
        twice = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
        auc = twice / (2 * n_pos * n_neg)
        tpr, fpr = tp / n_pos, fp / n_neg
    return RocCurve(thresholds, fpr, tpr, auc)


def roc_auc_ovr(y_true, scores, n_classes: int = N_CLASSES) -> Tuple[List[RocCurve], List[float], float]:
    """One-vs-rest ROC per class; macro AUC averages the classes where both
    positives and negatives exist."""
    y_true = np.asarray(y_true, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if y_true.size == 0:
        raise ValueError("no samples")
    if scores.shape != (y_true.size, n_classes):
        raise ValueError(f"scores must have shape ({y_true.size}, {n_classes})")
    curves = [roc_curve(y_true == c, scores[:, c]) for c in range(n_classes)]
    aucs = [c.auc for c in curves]
    finite = [a for a in aucs if math.isfinite(a)]
    if not finite:
        raise ValueError("no class has both positive and negative samples")
    return curves, aucs, float(np.mean(finite))


def evaluate(y_true, proba, n_classes: int = N_CLASSES) -> MetricsReport:
    proba = np.asarray(proba)
    y_pred = np.argmax(proba, axis=1)
    cm = confusion_matrix(y_true, y_pred, n_classes)
    m = classification_metrics(cm)
    try:
        _, aucs, macro = roc_auc_ovr(y_true, proba, n_classes)
    except ValueError:
        aucs, macro = [float("nan")] * n_classes, float("nan")
    return MetricsReport(m["accuracy"], m["precision"], m["recall"], m["f1"], macro, cm, aucs)


@dataclass
class PCAResult:
    projections: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    mean: np.ndarray


def pca_project(X, k: int = 3) -> PCAResult:
    """Principal components via SVD of the centred data.

    Each component's largest-magnitude entry is made positive.  Directions
    beyond the numerical rank are returned as zero vectors.
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if n < 2:
        raise ValueError("PCA needs at least 2 samples")
    if not 1 <= k <= min(n - 1, d):
        raise ValueError(f"k must lie in [1, {min(n - 1, d)}]")
    mean = X.mean(axis=0)
    Xc = X - mean
    _, sv, vt = np.linalg.svd(Xc, full_matrices=False)
    comps = vt[:k].copy()
    var = sv[:k] ** 2 / (n - 1)
    tol = max(n, d) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)
    for i in range(k):
        if sv[i] <= tol:
            comps[i] = 0.0
            var[i] = 0.0
            continue
        j = np.argmax(np.abs(comps[i]))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    return PCAResult(Xc @ comps.T, comps, var, mean)


def class_distribution_summary(X, y, n_classes: int = N_CLASSES) -> Dict[int, Dict[str, float]]:
    """Per-class statistics of each sample's mean feature value."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.shape[0] == 0:
        raise ValueError("no samples")
    agg = X.mean(axis=1)
    out = {}
    for c in range(n_classes):
        a = agg[y == c]
        if a.size == 0:
            continue
        q1, med, q3 = np.percentile(a, [25, 50, 75])
        out[c] = {"mean": float(a.mean()), "median": float(med), "q1": float(q1),
                  "q3": float(q3), "min": float(a.min()), "max": float(a.max())}
    return out


# ---------------------------------------------------------------------------
# exports


def write_metrics_json(report: MetricsReport, path, extra: Optional[dict] = None) -> None:
    d = report.to_dict()
    if extra:
        d.update(extra)
    Path(path).write_text(json.dumps(d, indent=2) + "\n")


def _fmt(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def write_roc_csv(curves: Sequence[RocCurve], path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "threshold", "fpr", "tpr"])
        for c, curve in enumerate(curves):
            for t, f, p in zip(curve.thresholds, curve.fpr, curve.tpr):
                w.writerow([c, _fmt(t), _fmt(f), _fmt(p)])


def write_pca_csv(ids, labels, result: PCAResult, path) -> None:
    k = result.projections.shape[1]
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label", *[f"pc{i + 1}" for i in range(k)]])
        for i, lab, row in zip(ids, labels, result.projections):
            w.writerow([i, int(lab), *(_fmt(v) for v in row)])


def write_distribution_csv(summaries: Dict[str, Dict[int, Dict[str, float]]], path) -> None:
    keys = ["mean", "median", "q1", "q3", "min", "max"]
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "feature_set", *keys])
        for name, per_class in summaries.items():
            for c in sorted(per_class):
                w.writerow([c, name, *(_fmt(per_class[c][k]) for k in keys)])
