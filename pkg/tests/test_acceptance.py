"""Acceptance gate.  Each ``test_criterion_NN_*`` checks one criterion; the
terminal summary (see conftest.py) prints a PASS/FAIL line for each."""
import time
from fractions import Fraction

import numpy as np
import pytest

from topoclass.cli import main
from topoclass.dataset import Dataset, SplitSpec, split
from topoclass.ensemble import BoosterConfig, grow_newton_tree, log_loss, train_boosted
from topoclass.evaluation import evaluate, pca_project, roc_auc_ovr
from topoclass.filtration import build_filtration
from topoclass.imaging import GrayImage
from topoclass.persistence import compute_pd0, compute_pd1
from topoclass.selection import threshold_sweep
from topoclass.synthgen import SynthSpec, generate_arrays, generate_dataset
from topoclass.vectorize import betti_curve, bin_curve, bin_edges, extract_features, feature_names

from _oracles import (
    assert_newton_tree_matches,
    eigen_pca,
    mann_whitney_auc,
    oracle_betti_curves,
    random_split_problem,
)
from conftest import random_image

END_TO_END = BoosterConfig(n_estimators=100, max_depth=4, learning_rate=0.1,
                           colsample_bytree=0.4, colsample_bylevel=0.4, seed=0)


@pytest.fixture(scope="module")
def synthetic_corpus():
    """200 images per class, features extracted once; returns (dataset, seconds)."""
    start = time.perf_counter()
    images, labels = generate_arrays(SynthSpec((200,) * 4, (64, 64), 8, seed=0))
    X = np.stack([extract_features(im).concat() for im in images])
    d = Dataset(X, labels, feature_names())
    return d, time.perf_counter() - start


def test_criterion_01_persistence_oracle():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(200):
        img = random_image(rng, (16, 16), 8)
        f = build_filtration(img)
        b0 = betti_curve(compute_pd0(f)).values
        b1 = betti_curve(compute_pd1(f)).values
        o0, o1 = oracle_betti_curves(img)
        mismatches += int(np.sum(b0 != o0) + np.sum(b1 != o1))
    elapsed = time.perf_counter() - start
    assert mismatches == 0
    assert elapsed < 10, f"{elapsed:.1f}s"


def test_criterion_02_golden_cases():
    for v in (0, 77, 255):
        f = build_filtration(GrayImage(np.full((4, 5), v)))
        assert compute_pd0(f).pairs() == [(v, 256)]
        assert compute_pd1(f).pairs() == []
    ring = np.zeros((3, 3), dtype=int)
    ring[1, 1] = 255
    assert compute_pd1(build_filtration(GrayImage(ring))).pairs() == [(0, 255)]
    assert compute_pd0(build_filtration(GrayImage(np.array([[5, 9, 5]])))).pairs() == [(5, 9), (5, 256)]


def test_criterion_03_symmetry():
    rng = np.random.default_rng(3)
    for i in range(50):
        img = random_image(rng, (32, 32), 256 if i % 2 else 8).pixels
        ref = extract_features(GrayImage(img)).concat()
        for t in (np.rot90(img, 1), np.rot90(img, 2), np.rot90(img, 3), img[::-1], img[:, ::-1]):
            assert np.array_equal(extract_features(GrayImage(t)).concat(), ref)


def test_criterion_04_binning_mass():
    rng = np.random.default_rng(4)
    curves = [rng.integers(0, 50, 255) for _ in range(50)]
    curves += [betti_curve(compute_pd0(build_filtration(random_image(rng, (16, 16), 256)))).values
               for _ in range(10)]
    for curve in curves:
        total = int(curve.sum())
        for B in (1, 50, 100, 255):
            sizes = np.diff(bin_edges(len(curve), B)).tolist()
            means = bin_curve(curve, B, "mean", exact=True)
            assert sum(m * s for m, s in zip(means, sizes)) == total
            assert sum(bin_curve(curve, B, "sum", exact=True)) == total
            assert bin_curve(curve, B).tolist() == [float(m) for m in means]


def test_criterion_05_tree_oracle():
    rng = np.random.default_rng(5)
    for _ in range(100):
        X, g, h, lam, mcw, depth = random_split_problem(rng)
        tree = grow_newton_tree(X, g, h, depth, lam, mcw)
        assert_newton_tree_matches(tree, X, g, h, lam, mcw, depth)

    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        y = rng.integers(0, 4, 60)
        X = rng.normal(size=(60, 5)) + y[:, None] * rng.uniform(0, 1, 5)
        d = Dataset(X, y, feature_names(1)[:1] + [f"x{j}" for j in range(4)])
        losses = []
        train_boosted(d, BoosterConfig(n_estimators=30, max_depth=3, colsample_bytree=1.0,
                                       colsample_bylevel=1.0, seed=seed),
                      callback=lambda r, p: losses.append(log_loss(y, p)))
        assert len(losses) == 30
        assert all(b <= a for a, b in zip(losses, losses[1:]))


def test_criterion_06_auc_oracle():
    rng = np.random.default_rng(6)
    worst = 0.0
    for i in range(100):
        n = int(rng.integers(8, 80))
        y = rng.integers(0, 4, n)
        y[:4] = np.arange(4)
        p = rng.dirichlet(np.ones(4), size=n)
        if i % 2:
            p = np.round(p, 1)  # many tied scores
        _, aucs, macro = roc_auc_ovr(y, p)
        brute = [mann_whitney_auc(y == c, p[:, c]) for c in range(4)]
        worst = max(worst, max(abs(a - b) for a, b in zip(aucs, brute)))
        worst = max(worst, abs(macro - np.mean(brute)))
    assert worst < 1e-12


def test_criterion_07_synthetic_end_to_end(synthetic_corpus):
    d, extract_seconds = synthetic_corpus
    start = time.perf_counter()
    train, test = split(d, SplitSpec(0.9, 0, True))
    acc = {}
    for name, cols in (("b0", d.group("b0").feature_names), ("b1", d.group("b1").feature_names),
                       ("both", d.feature_names)):
        model = train_boosted(train.columns(cols), END_TO_END)
        report = evaluate(test.y, model.predict_proba(test.columns(cols).X))
        acc[name] = report.accuracy
        if name == "both":
            macro_auc = report.macro_auc
    elapsed = extract_seconds + time.perf_counter() - start
    print(f"accuracy {acc}, macro AUC {macro_auc:.4f}, {elapsed:.1f}s")
    assert acc["both"] >= 0.95
    assert acc["both"] >= max(acc["b0"], acc["b1"]) - 0.01
    assert macro_auc >= 0.99
    assert elapsed < 120


def test_criterion_08_feature_selection(synthetic_corpus):
    d, _ = synthetic_corpus
    rng = np.random.default_rng(8)
    injected = np.tile(rng.normal(size=20), (len(d), 1))
    names = d.feature_names + [f"noise_{j}" for j in range(20)]
    aug = Dataset(np.hstack([d.X, injected]), d.y, names)
    train, test = split(aug, SplitSpec(0.9, 0, True))
    # a lighter booster than criterion 7: the sweep retrains once per distinct importance
    report = threshold_sweep(train, test, BoosterConfig(n_estimators=20, max_depth=3))
    full = [r for r in report.rows if r.n_features == aug.n_features]
    assert len(full) == 1
    chosen = [r for r in report.rows if r.tau == report.chosen_tau][0]
    assert not report.chosen_mask[-20:].any()
    assert chosen.accuracy >= full[0].accuracy - 0.005
    for a, b in zip(report.rows, report.rows[1:]):
        assert a.tau > b.tau
        assert set(a.selected) <= set(b.selected)


def test_criterion_09_determinism(tmp_path):
    manifest = generate_dataset(SynthSpec((12,) * 4, seed=9), tmp_path / "data")
    outputs = []
    for workers in (1, 8):
        for rep in range(2):
            out = tmp_path / f"run_w{workers}_{rep}"
            code = main(["pipeline", "--manifest", str(manifest), "--out-dir", str(out), "--seed", "4",
                         "--workers", str(workers), "--rounds", "20", "--depth", "4", "--select"])
            assert code == 0
            outputs.append([(out / n).read_bytes() for n in ("features.csv", "model.json", "metrics.json")])
    assert all(o == outputs[0] for o in outputs)


def test_criterion_10_pca():
    rng = np.random.default_rng(10)
    for _ in range(20):
        X = rng.normal(size=(50, 10)) * rng.uniform(0.1, 5, 10)
        r = pca_project(X, 3)
        assert np.max(np.abs(r.components @ r.components.T - np.eye(3))) < 1e-9
        assert np.all(np.diff(r.explained_variance) <= 0)
        proj, _ = eigen_pca(X, 3)
        for i in range(3):
            sign = np.sign(proj[:, i] @ r.projections[:, i])
            assert np.max(np.abs(r.projections[:, i] - sign * proj[:, i])) < 1e-8
