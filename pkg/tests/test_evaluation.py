import csv
import json

import numpy as np
import pytest

from topoclass.evaluation import (
    class_distribution_summary,
    classification_metrics,
    confusion_matrix,
    evaluate,
    pca_project,
    roc_auc_ovr,
    roc_curve,
    write_distribution_csv,
    write_metrics_json,
    write_pca_csv,
    write_roc_csv,
)

from _oracles import eigen_pca, mann_whitney_auc


def test_confusion_matrix_basics():
    y = [0, 1, 2, 3, 3]
    assert np.array_equal(confusion_matrix(y, y), np.diag([1, 1, 1, 2]))
    cm = confusion_matrix([0, 1], [1, 0])
    assert np.array_equal(cm[:2, :2], [[0, 1], [1, 0]])
    assert cm.sum() == 2
    assert np.array_equal(confusion_matrix([], []), np.zeros((4, 4)))


def test_confusion_matrix_errors():
    with pytest.raises(ValueError):
        confusion_matrix([0, 1], [0])
    with pytest.raises(ValueError):
        confusion_matrix([4], [0])


def test_confusion_rows_are_supports():
    rng = np.random.default_rng(0)
    yt, yp = rng.integers(0, 4, 100), rng.integers(0, 4, 100)
    cm = confusion_matrix(yt, yp)
    assert np.array_equal(cm.sum(axis=1), np.bincount(yt, minlength=4))
    assert classification_metrics(cm)["accuracy"] == np.trace(cm) / 100


def test_metrics_perfect():
    m = classification_metrics(np.diag([3, 1, 4, 1]))
    assert m["accuracy"] == m["precision"] == m["recall"] == m["f1"] == 1.0


def test_metrics_hand_computed():
    m = classification_metrics(confusion_matrix([0, 0, 1, 1], [0, 1, 1, 1], n_classes=2))
    assert m["accuracy"] == 0.75
    assert m["per_class_precision"] == pytest.approx([1.0, 2 / 3])
    assert m["per_class_recall"] == [0.5, 1.0]
    assert m["precision"] == pytest.approx((1 + 2 / 3) / 2)
    assert m["recall"] == 0.75


def test_metrics_skip_absent_classes():
    cm = np.zeros((4, 4), dtype=int)
    cm[0, 0], cm[1, 1] = 5, 5
    m = classification_metrics(cm)
    assert m["precision"] == m["recall"] == m["f1"] == 1.0
    with pytest.raises(ValueError):
        classification_metrics(np.zeros((4, 4)))


def test_auc_extremes():
    y = np.array([1, 1, 0, 0, 0], dtype=bool)
    assert roc_curve(y, [0.9, 0.8, 0.3, 0.2, 0.1]).auc == 1.0
    assert roc_curve(y, [0.5] * 5).auc == 0.5
    assert roc_curve(y, [0.1, 0.2, 0.3, 0.8, 0.9]).auc == 0.0


def test_roc_curve_shape():
    c = roc_curve([1, 0, 1, 0], [0.7, 0.7, 0.9, 0.1])
    assert c.thresholds[0] == np.inf and c.thresholds[-1] == -np.inf
    assert np.array_equal(c.thresholds[1:-1], [0.9, 0.7, 0.1])
    assert c.fpr[0] == c.tpr[0] == 0 and c.fpr[-1] == c.tpr[-1] == 1
    assert np.all(np.diff(c.fpr) >= 0) and np.all(np.diff(c.tpr) >= 0)


def test_auc_matches_pair_count():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(2, 60))
        y = rng.integers(0, 2, n).astype(bool)
        if y.all() or not y.any():
            y[0] = not y[0]
        s = rng.integers(0, 10, n) / 10 if rng.random() < 0.5 else rng.random(n)
        assert abs(roc_curve(y, s).auc - mann_whitney_auc(y, s)) < 1e-12


def test_auc_monotone_invariance():
    rng = np.random.default_rng(1)
    y = rng.integers(0, 2, 50).astype(bool)
    s = rng.random(50)
    assert roc_curve(y, s).auc == roc_curve(y, np.exp(3 * s) - 7).auc


def test_ovr_macro_excludes_absent_class():
    y = np.array([0, 0, 1, 1])
    p = np.array([[0.7, 0.1, 0.1, 0.1], [0.6, 0.2, 0.1, 0.1], [0.1, 0.8, 0.05, 0.05], [0.2, 0.6, 0.1, 0.1]])
    _, aucs, macro = roc_auc_ovr(y, p)
    assert aucs[:2] == [1.0, 1.0]
    assert np.isnan(aucs[2]) and np.isnan(aucs[3])
    assert macro == 1.0
    with pytest.raises(ValueError):
        roc_auc_ovr(np.zeros(3, dtype=int), np.full((3, 4), 0.25))


def test_evaluate_report_bounds():
    rng = np.random.default_rng(2)
    y = rng.integers(0, 4, 80)
    p = rng.dirichlet(np.ones(4), size=80)
    r = evaluate(y, p)
    for v in (r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1, r.macro_auc):
        assert 0 <= v <= 1
    assert r.confusion.sum() == 80


def test_pca_line():
    t = np.linspace(-1, 1, 20)
    X = np.outer(t, [1.0, 2.0, -2.0]) + [5, 5, 5]
    r = pca_project(X, 3)
    assert r.explained_variance[0] / r.explained_variance.sum() == pytest.approx(1.0)
    assert np.allclose(r.components[0], [1 / 3, 2 / 3, -2 / 3]) or np.allclose(r.components[0], [-1 / 3, -2 / 3, 2 / 3])
    assert np.all(r.components[1:] == 0)


@pytest.mark.parametrize("shape", [(10, 4), (50, 10), (7, 12)])
def test_pca_matches_eigensolve(shape):
    rng = np.random.default_rng(sum(shape))
    X = rng.normal(size=shape)
    r = pca_project(X, 3)
    assert np.allclose(r.components @ r.components.T, np.eye(3), atol=1e-9)
    assert np.all(np.diff(r.explained_variance) <= 0)
    proj, var = eigen_pca(X, 3)
    assert np.allclose(r.explained_variance, var, atol=1e-10)
    for i in range(3):
        sign = np.sign(proj[:, i] @ r.projections[:, i])
        assert np.max(np.abs(r.projections[:, i] - sign * proj[:, i])) < 1e-8


def test_pca_shift_invariance():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(20, 5))
    a, b = pca_project(X, 2), pca_project(X + rng.normal(size=5) * 100, 2)
    assert np.allclose(a.projections, b.projections, atol=1e-9)


def test_pca_errors():
    with pytest.raises(ValueError):
        pca_project(np.zeros((1, 3)), 1)
    with pytest.raises(ValueError):
        pca_project(np.zeros((5, 3)), 4)


def test_distribution_summary():
    s = class_distribution_summary(np.array([[1.0, 1.0], [2.0, 4.0]]), np.array([2, 2]))
    assert list(s) == [2]
    assert s[2]["mean"] == 2 and s[2]["median"] == 2 and s[2]["min"] == 1 and s[2]["max"] == 3
    s = class_distribution_summary(np.ones((8, 3)), np.arange(8) % 4)
    assert {v for st in s.values() for v in st.values()} == {1.0}
    with pytest.raises(ValueError):
        class_distribution_summary(np.zeros((0, 2)), [])


def test_exports(tmp_path):
    y = np.array([0, 1, 2, 3, 0, 1, 2, 3])
    p = np.eye(4)[y] * 0.7 + 0.075
    r = evaluate(y, p)
    write_metrics_json(r, tmp_path / "m.json")
    d = json.loads((tmp_path / "m.json").read_text())
    assert {"accuracy", "precision", "recall", "f1", "auc", "per_class_auc", "confusion"} <= set(d)
    assert len(d["per_class_auc"]) == 4 and np.array(d["confusion"]).shape == (4, 4)

    curves, _, _ = roc_auc_ovr(y, p)
    write_roc_csv(curves, tmp_path / "roc.csv")
    rows = list(csv.reader(open(tmp_path / "roc.csv")))
    assert rows[0] == ["class", "threshold", "fpr", "tpr"]
    assert rows[1][1] == "inf"

    X = np.random.default_rng(0).normal(size=(8, 5))
    write_pca_csv([f"s{i}" for i in range(8)], y, pca_project(X, 3), tmp_path / "pca.csv")
    rows = list(csv.reader(open(tmp_path / "pca.csv")))
    assert rows[0] == ["id", "label", "pc1", "pc2", "pc3"] and len(rows) == 9

    write_distribution_csv({"b0": class_distribution_summary(X, y)}, tmp_path / "dist.csv")
    rows = list(csv.reader(open(tmp_path / "dist.csv")))
    assert rows[0] == ["class", "feature_set", "mean", "median", "q1", "q3", "min", "max"]
    assert len(rows) == 5
