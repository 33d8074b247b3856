"""Importance-threshold feature selection.

A base boosted model ranks the features; for each distinct importance value
``tau`` (largest first) the model is retrained on ``{j : f_j >= tau}`` and
scored.  Zero-importance features only enter through a final ``tau = 0`` row,
so the complete feature set is always part of the sweep.
"""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .dataset import Dataset
from .ensemble import BoosterConfig, feature_importance, train_boosted
from .evaluation import evaluate

log = logging.getLogger(__name__)


@dataclass
class SweepRow:
    tau: float
    selected: Tuple[int, ...]
    accuracy: float
    macro_auc: float
    precision: float
    recall: float
    f1: float

    @property
    def n_features(self) -> int:
        return len(self.selected)


@dataclass
class SelectionReport:
    rows: List[SweepRow]
    importances: np.ndarray
    feature_names: List[str]
    chosen_tau: Optional[float] = None
    chosen_mask: Optional[np.ndarray] = None

    def selected_names(self) -> List[str]:
        return [self.feature_names[i] for i in np.flatnonzero(self.chosen_mask)]


def _score_subset(args):
    train, evalset, cfg, cols = args
    model = train_boosted(train.columns(cols), cfg)
    rep = evaluate(evalset.y, model.predict_proba(evalset.columns(cols).X))
    return rep


def threshold_sweep(train: Dataset, test: Dataset, cfg: BoosterConfig, workers: int = 1) -> SelectionReport:
    """Retrain and score one model per distinct importance threshold.

    ``test`` is whatever set the subsets are ranked on: the test split to
    mirror the original procedure, or a validation split carved from the
    training data (see :func:`topoclass.dataset.split`).
    """
    if train.n_features != test.n_features:
        raise ValueError("train and test feature dimensions differ")
    base = train_boosted(train, cfg)
    f = feature_importance(base)
    taus = sorted({float(v) for v in f if v > 0}, reverse=True)
    subsets = [np.flatnonzero(f >= tau) for tau in taus]
    if not taus or (f == 0).any():
        taus.append(0.0)
        subsets.append(np.arange(train.n_features))
    jobs = [(train, test, cfg, cols) for cols in subsets]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            reports = list(ex.map(_score_subset, jobs))
    else:
        reports = []
        for i, job in enumerate(jobs):
            reports.append(_score_subset(job))
            log.info("tau %.6g: %d features, accuracy %.4f", taus[i], len(job[3]), reports[-1].accuracy)
    rows = [
        SweepRow(tau, tuple(int(c) for c in cols), r.accuracy, r.macro_auc,
                 r.macro_precision, r.macro_recall, r.macro_f1)
        for tau, cols, r in zip(taus, subsets, reports)
    ]
    report = SelectionReport(rows, f, list(train.feature_names))
    tau, mask = select_optimal(report)
    report.chosen_tau, report.chosen_mask = tau, mask
    return report


def select_optimal(report: SelectionReport) -> Tuple[float, np.ndarray]:
    """Highest accuracy; ties go to fewer features, then to the larger tau."""
    if not report.rows:
        raise ValueError("empty selection report")
    best = min(report.rows, key=lambda r: (-r.accuracy, r.n_features, -r.tau))
    mask = np.zeros(len(report.feature_names), dtype=bool)
    mask[list(best.selected)] = True
    return best.tau, mask


def write_report_csv(report: SelectionReport, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "n_features", "accuracy", "auc", "precision", "recall", "f1", "selected_indices"])
        for r in report.rows:
            w.writerow([repr(r.tau), r.n_features, repr(r.accuracy), repr(r.macro_auc),
                        repr(r.precision), repr(r.recall), repr(r.f1),
                        ";".join(str(i) for i in r.selected)])


def read_report_csv(path, feature_names: List[str]) -> SelectionReport:
    rows = []
    with open(Path(path), newline="") as fh:
        for rec in csv.DictReader(fh):
            sel = tuple(int(i) for i in rec["selected_indices"].split(";") if i)
            rows.append(SweepRow(float(rec["tau"]), sel, float(rec["accuracy"]), float(rec["auc"]),
                                 float(rec["precision"]), float(rec["recall"]), float(rec["f1"])))
    report = SelectionReport(rows, np.array([]), list(feature_names))
    report.chosen_tau, report.chosen_mask = select_optimal(report)
    return report
