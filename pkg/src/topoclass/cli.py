"""Command-line entry point: ``topoclass <subcommand> [flags]``.

Values come from, in increasing precedence: built-in defaults, a JSON file
given with ``--config`` (keys are the flag names with dashes replaced by
underscores), and explicit flags.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline as pl
from .dataset import read_features
from .ensemble import BoosterConfig, ForestConfig, TreeEnsembleModel
from .synthgen import SynthSpec, generate_dataset

log = logging.getLogger("topoclass")


def _add_common(p):
    p.add_argument("--config", type=Path, help="JSON file with default values for any flag")
    p.add_argument("--out-dir", type=Path, default=Path("out"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("-v", "--verbose", action="count", default=0)


def _add_extract(p):
    p.add_argument("--manifest", type=Path)
    p.add_argument("--bins", type=int, default=100)
    p.add_argument("--agg", choices=("mean", "sum"), default="mean")
    p.add_argument("--thresholds", type=int, default=255,
                   help="number of integer thresholds starting at 0 (255 -> 0..254, 256 -> 0..255)")


def _add_split(p):
    p.add_argument("--split", type=float, default=0.9, help="train fraction")
    p.add_argument("--stratified", action=argparse.BooleanOptionalAction, default=True)


def _add_inputs(p):
    p.add_argument("--features", type=Path, help="features CSV (default: OUT_DIR/features.csv)")
    p.add_argument("--split-file", type=Path, help="split CSV (default: OUT_DIR/split.csv)")


def _add_booster(p):
    d = BoosterConfig()
    p.add_argument("--rounds", type=int, default=d.n_estimators)
    p.add_argument("--depth", type=int, default=d.max_depth)
    p.add_argument("--lr", type=float, default=d.learning_rate)
    p.add_argument("--colsample-tree", type=float, default=d.colsample_bytree)
    p.add_argument("--colsample-level", type=float, default=d.colsample_bylevel)
    p.add_argument("--l2-lambda", type=float, default=d.l2_lambda)
    p.add_argument("--min-child-weight", type=float, default=d.min_child_weight)


def _add_model(p):
    p.add_argument("--model", choices=("boosted", "forest"), default="boosted")
    f = ForestConfig()
    p.add_argument("--trees", type=int, default=f.n_trees, help="forest size")
    p.add_argument("--forest-depth", type=int, default=f.max_depth)


def _add_select(p):
    p.add_argument("--holdout", action="store_true",
                   help="rank feature subsets on a validation split of the training data")
    p.add_argument("--holdout-fraction", type=float, default=0.1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="topoclass", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic topology-labelled image set")
    _add_common(p)
    p.add_argument("--per-class", type=int, default=200)
    p.add_argument("--counts", type=str, help="comma-separated per-class counts, overrides --per-class")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--noise", type=int, default=8)

    p = sub.add_parser("extract", help="images -> Betti-curve features CSV")
    _add_common(p)
    _add_extract(p)

    p = sub.add_parser("split", help="features CSV -> train/test split CSV")
    _add_common(p)
    _add_inputs(p)
    _add_split(p)

    p = sub.add_parser("select", help="importance-threshold feature selection sweep")
    _add_common(p)
    _add_inputs(p)
    _add_booster(p)
    _add_select(p)

    p = sub.add_parser("train", help="train the final model")
    _add_common(p)
    _add_inputs(p)
    _add_booster(p)
    _add_model(p)
    p.add_argument("--selection", type=Path, help="selection report; train on its chosen subset")

    p = sub.add_parser("evaluate", help="metrics and figure data for a trained model")
    _add_common(p)
    _add_inputs(p)
    p.add_argument("--model-file", type=Path, help="model JSON (default: OUT_DIR/model.json)")

    p = sub.add_parser("pipeline", help="run every stage end to end")
    _add_common(p)
    _add_extract(p)
    _add_split(p)
    _add_booster(p)
    _add_model(p)
    p.add_argument("--select", action=argparse.BooleanOptionalAction, default=False)
    _add_select(p)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        cfg = json.loads(Path(args.config).read_text())
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(cfg) - known
        if unknown:
            parser.error(f"unknown config keys: {', '.join(sorted(unknown))}")
        sub.set_defaults(**{k: (Path(v) if k in ("manifest", "out_dir", "features", "split_file",
                                                 "model_file", "selection") and v is not None else v)
                            for k, v in cfg.items()})
        args = parser.parse_args(argv)
    return args


def _booster(args) -> BoosterConfig:
    return BoosterConfig(args.rounds, args.depth, args.lr, args.colsample_tree, args.colsample_level,
                         args.l2_lambda, args.min_child_weight, args.seed)


def _forest(args) -> ForestConfig:
    return ForestConfig(args.trees, args.forest_depth, "sqrt", args.seed)


def run(args) -> int:
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    cmd = args.command
    if cmd == "synth":
        counts = tuple(int(c) for c in args.counts.split(",")) if args.counts else (args.per_class,) * 4
        manifest = generate_dataset(SynthSpec(counts, (args.size, args.size), args.noise, args.seed), out)
        print(manifest)
    elif cmd == "extract":
        if args.manifest is None:
            raise pl.PipelineError("extract", "--manifest is required")
        pl._stage("extract", pl.extract_stage, args.manifest, out, args.bins, args.thresholds,
                  args.agg, args.workers)
    elif cmd == "split":
        d = pl._stage("split", read_features, args.features or out / pl.FEATURES)
        pl._stage("split", pl.split_stage, d, out, args.split, args.stratified, args.seed)
    elif cmd == "select":
        _, train, test = pl._stage("select", pl.load_stage_inputs, out, args.features, args.split_file)
        report = pl._stage("select", pl.select_stage, train, test, out, _booster(args), args.seed,
                           args.holdout, args.holdout_fraction, args.workers)
        print(f"tau*={report.chosen_tau!r} n_features={int(report.chosen_mask.sum())}")
    elif cmd == "train":
        d, train, _ = pl._stage("train", pl.load_stage_inputs, out, args.features, args.split_file)
        selected = pl.selected_from_report(args.selection, d) if args.selection else None
        pl._stage("train", pl.train_stage, train, out, args.model, _booster(args), _forest(args),
                  selected, args.workers)
    elif cmd == "evaluate":
        d, _, test = pl._stage("evaluate", pl.load_stage_inputs, out, args.features, args.split_file)
        model = pl._stage("evaluate", TreeEnsembleModel.load, args.model_file or out / pl.MODEL)
        metrics = pl._stage("evaluate", pl.evaluate_stage, d, test, model, out)
        print(json.dumps({k: metrics[k] for k in ("accuracy", "precision", "recall", "f1", "auc")}))
    elif cmd == "pipeline":
        cfg = pl.PipelineConfig(
            manifest=args.manifest, out_dir=out, bins=args.bins, agg=args.agg, thresholds=args.thresholds,
            split=args.split, stratified=args.stratified, seed=args.seed, model=args.model,
            booster=_booster(args), forest=_forest(args), select=args.select, holdout=args.holdout,
            holdout_fraction=args.holdout_fraction, workers=args.workers,
        )
        metrics = pl.run_pipeline(cfg)
        print(json.dumps({k: metrics[k] for k in ("accuracy", "precision", "recall", "f1", "auc")}))
    return 0


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except pl.PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
