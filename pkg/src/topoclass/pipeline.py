"""End-to-end pipeline stages.

Every stage reads and writes files in one output directory, so any stage can
be rerun on its own:

    features.csv -> split.csv -> selection_report.csv -> model.json
    -> metrics.json, roc.csv, pca*.csv, distribution.csv

All randomness derives from ``PipelineConfig.seed``: the split uses
``(seed, SEED_STAGE_SPLIT, class)``, the holdout split
``(seed, SEED_STAGE_HOLDOUT, class)``, and the learners use ``seed`` as their
own base seed.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import (
    SEED_STAGE_HOLDOUT,
    Dataset,
    SplitSpec,
    read_features,
    read_split,
    split,
    split_indices,
    write_features,
    write_split,
)
from .ensemble import BoosterConfig, ForestConfig, TreeEnsembleModel, train_model
from .evaluation import (
    class_distribution_summary,
    evaluate,
    pca_project,
    roc_auc_ovr,
    write_distribution_csv,
    write_metrics_json,
    write_pca_csv,
    write_roc_csv,
)
from .imaging import load_grayscale, read_manifest
from .selection import read_report_csv, threshold_sweep, write_report_csv
from .vectorize import N_BINS, N_THRESHOLDS, extract_features, feature_names

log = logging.getLogger(__name__)

FEATURES = "features.csv"
SPLIT = "split.csv"
SELECTION = "selection_report.csv"
MODEL = "model.json"
METRICS = "metrics.json"


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage


@dataclass
class PipelineConfig:
    manifest: Optional[Path] = None
    out_dir: Path = Path("out")
    bins: int = N_BINS
    agg: str = "mean"
    thresholds: int = N_THRESHOLDS
    split: float = 0.9
    stratified: bool = True
    seed: int = 0
    model: str = "boosted"
    booster: BoosterConfig = field(default_factory=BoosterConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    select: bool = False
    holdout: bool = False
    holdout_fraction: float = 0.1
    workers: int = 1

    def __post_init__(self):
        if not 1 <= self.bins <= 255:
            raise ValueError("bins must lie in [1, 255]")
        if self.bins > self.thresholds:
            raise ValueError("bins cannot exceed the number of thresholds")
        self.out_dir = Path(self.out_dir)


def _extract_one(args):
    path, label, bins, thresholds, agg = args
    fv = extract_features(load_grayscale(path), bins, thresholds, agg, label)
    return fv.concat()


def extract_stage(manifest, out_dir, bins=N_BINS, thresholds=N_THRESHOLDS, agg="mean", workers=1) -> Dataset:
    manifest = Path(manifest)
    entries = read_manifest(manifest)
    jobs = [(e.image_path, e.label, bins, thresholds, agg) for e in entries]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            rows = list(ex.map(_extract_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        rows = [_extract_one(j) for j in jobs]
    ids = []
    for e in entries:
        try:
            ids.append(e.image_path.relative_to(manifest.parent).as_posix())
        except ValueError:
            ids.append(e.image_path.as_posix())
    X = np.stack(rows) if rows else np.zeros((0, 2 * bins))
    d = Dataset(X, [e.label for e in entries], feature_names(bins), ids)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_features(d, out / FEATURES)
    log.info("extracted %d feature vectors", len(d))
    return d


def split_stage(d: Dataset, out_dir, fraction=0.9, stratified=True, seed=0):
    spec = SplitSpec(fraction, seed, stratified)
    tr, te = split_indices(d.y, spec)
    write_split(d.ids, tr, te, Path(out_dir) / SPLIT)
    return d.rows(tr), d.rows(te)


def select_stage(train: Dataset, test: Dataset, out_dir, booster: BoosterConfig, seed=0,
                 holdout=False, holdout_fraction=0.1, workers=1):
    if holdout:
        fit, rank_on = split(train, SplitSpec(1 - holdout_fraction, seed, True), SEED_STAGE_HOLDOUT)
    else:
        fit, rank_on = train, test
    report = threshold_sweep(fit, rank_on, booster, workers)
    write_report_csv(report, Path(out_dir) / SELECTION)
    return report


def train_stage(train: Dataset, out_dir, kind="boosted", booster=None, forest=None,
                selected=None, workers=1) -> TreeEnsembleModel:
    if selected is not None:
        train = train.columns(selected)
    model = train_model(train, kind, booster, forest, workers)
    model.save(Path(out_dir) / MODEL)
    return model


def evaluate_stage(d: Dataset, test: Dataset, model: TreeEnsembleModel, out_dir) -> dict:
    out = Path(out_dir)
    test_m = test.columns(model.feature_names)
    proba = model.predict_proba(test_m.X)
    report = evaluate(test_m.y, proba)
    write_metrics_json(report, out / METRICS, {"model": model.kind, "n_features": model.n_features})
    curves, _, _ = roc_auc_ovr(test_m.y, proba)
    write_roc_csv(curves, out / "roc.csv")

    full = d.columns(model.feature_names)
    k = min(3, len(full) - 1, full.n_features)
    if k >= 1:
        write_pca_csv(full.ids, full.y, pca_project(full.X, k), out / "pca.csv")
        for group in ("b0", "b1"):
            g = d.group(group)
            kg = min(3, len(g) - 1, g.n_features)
            if kg >= 1:
                write_pca_csv(g.ids, g.y, pca_project(g.X, kg), out / f"pca_{group}.csv")
    summaries = {}
    for group in ("b0", "b1"):
        g = d.group(group)
        if g.n_features and len(g):
            summaries[group] = class_distribution_summary(g.X, g.y)
    write_distribution_csv(summaries, out / "distribution.csv")
    return report.to_dict()


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except Exception as exc:  # report which stage broke, keep earlier artifacts
        raise PipelineError(name, f"{type(exc).__name__}: {exc}") from exc


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Extract, split, optionally select, train and evaluate; returns the metrics dict."""
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    if cfg.manifest is None:
        raise PipelineError("extract", "no manifest given")
    booster = BoosterConfig(**{**cfg.booster.__dict__, "seed": cfg.seed})
    forest = ForestConfig(**{**cfg.forest.__dict__, "seed": cfg.seed})

    d = _stage("extract", extract_stage, cfg.manifest, out, cfg.bins, cfg.thresholds, cfg.agg, cfg.workers)
    train, test = _stage("split", split_stage, d, out, cfg.split, cfg.stratified, cfg.seed)
    selected = None
    if cfg.select:
        report = _stage("select", select_stage, train, test, out, booster, cfg.seed,
                        cfg.holdout, cfg.holdout_fraction, cfg.workers)
        selected = report.selected_names()
    model = _stage("train", train_stage, train, out, cfg.model, booster, forest, selected, cfg.workers)
    return _stage("evaluate", evaluate_stage, d, test, model, out)


def load_stage_inputs(out_dir, features=None, split_file=None):
    """Reload the feature table and its partition from a previous run."""
    out = Path(out_dir)
    d = read_features(Path(features) if features else out / FEATURES)
    train, test = read_split(d, Path(split_file) if split_file else out / SPLIT)
    return d, train, test


def selected_from_report(path, d: Dataset):
    return read_report_csv(path, d.feature_names).selected_names()
