"""Feature matrices, labels, seeded train/test splits and their CSV forms."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .imaging import N_CLASSES

SEED_STAGE_SPLIT = 1
SEED_STAGE_HOLDOUT = 2


class DatasetError(ValueError):
    pass


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: List[str]
    ids: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2:
            self.X = self.X.reshape(len(self.y), -1)
        if self.X.shape[0] != self.y.shape[0]:
            raise DatasetError(f"X has {self.X.shape[0]} rows but y has {self.y.shape[0]}")
        if self.X.shape[1] != len(self.feature_names):
            raise DatasetError("feature_names length does not match X columns")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= N_CLASSES):
            raise DatasetError("labels must lie in {0,1,2,3}")
        if not self.ids:
            self.ids = [str(i) for i in range(len(self.y))]
        elif len(self.ids) != len(self.y):
            raise DatasetError("ids length does not match row count")
        self.feature_names = list(self.feature_names)

    def __len__(self):
        return len(self.y)

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def rows(self, index) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return Dataset(self.X[index], self.y[index], self.feature_names, [self.ids[i] for i in index])

    def columns(self, cols) -> "Dataset":
        """Subset by column indices, boolean mask, or feature names."""
        cols = list(cols) if not isinstance(cols, np.ndarray) else cols
        if len(cols) and isinstance(cols[0], str):
            lookup = {n: i for i, n in enumerate(self.feature_names)}
            try:
                cols = [lookup[c] for c in cols]
            except KeyError as exc:
                raise DatasetError(f"unknown feature {exc.args[0]!r}") from None
        cols = np.asarray(cols)
        if cols.dtype == bool:
            cols = np.flatnonzero(cols)
        cols = cols.astype(np.int64)
        return Dataset(self.X[:, cols], self.y, [self.feature_names[i] for i in cols], list(self.ids))

    def group(self, prefix: str) -> "Dataset":
        return self.columns([n for n in self.feature_names if n.startswith(prefix + "_")])


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.9
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")


def _round_half_up(x: Fraction) -> int:
    return int((x + Fraction(1, 2)).__floor__())


def split_indices(y: np.ndarray, spec: SplitSpec, stage: int = SEED_STAGE_SPLIT) -> Tuple[np.ndarray, np.ndarray]:
    """Return sorted (train, test) row indices.

    Each class is shuffled by its own generator, so adding samples of one class
    leaves the partition of the others untouched.  Per-class test size is
    ``round(count * (1 - train_fraction))`` (half up, computed exactly),
    clamped so both partitions keep at least one sample.
    """
    y = np.asarray(y)
    test_frac = 1 - Fraction(spec.train_fraction).limit_denominator(10**9)
    if spec.stratified:
        groups = [(int(c), np.flatnonzero(y == c)) for c in np.unique(y)]
    else:
        groups = [(-1, np.arange(len(y)))]
    train, test = [], []
    for c, idx in groups:
        n = len(idx)
        if n < 2:
            what = f"class {c}" if c >= 0 else "dataset"
            raise DatasetError(f"{what} has {n} sample(s); at least 2 are needed to split")
        n_test = min(max(_round_half_up(n * test_frac), 1), n - 1)
        rng = np.random.default_rng([spec.seed, stage, c + 1])
        perm = idx[rng.permutation(n)]
        test.append(perm[:n_test])
        train.append(perm[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def split(d: Dataset, spec: SplitSpec, stage: int = SEED_STAGE_SPLIT) -> Tuple[Dataset, Dataset]:
    tr, te = split_indices(d.y, spec, stage)
    return d.rows(tr), d.rows(te)


def write_features(d: Dataset, path) -> None:
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label", *d.feature_names])
        for i in range(len(d)):
            # repr of a Python float round-trips exactly
            w.writerow([d.ids[i], int(d.y[i]), *(repr(float(v)) for v in d.X[i])])


def read_features(path) -> Dataset:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or len(header) < 2 or header[0] != "id" or header[1] != "label":
            raise DatasetError(f"{path}: header must start with 'id,label'")
        names = header[2:]
        ids, labels, rows = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            try:
                labels.append(int(row[1]))
                rows.append([float(v) for v in row[2:]])
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
            ids.append(row[0])
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    return Dataset(X, np.array(labels, dtype=np.int64), names, ids)


def write_split(ids: Sequence[str], train_idx, test_idx, path) -> None:
    part = {}
    for i in train_idx:
        part[int(i)] = "train"
    for i in test_idx:
        part[int(i)] = "test"
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "partition"])
        for i in sorted(part):
            w.writerow([ids[i], part[i]])


def read_split(d: Dataset, path) -> Tuple[Dataset, Dataset]:
    """Partition ``d`` according to an ``id,partition`` CSV."""
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "partition"} <= set(reader.fieldnames):
            raise DatasetError(f"{path}: header must be 'id,partition'")
        part = {row["id"]: row["partition"] for row in reader}
    train = [i for i, k in enumerate(d.ids) if part.get(k) == "train"]
    test = [i for i, k in enumerate(d.ids) if part.get(k) == "test"]
    return d.rows(train), d.rows(test)


def concat_features(vectors, labels: Optional[Sequence[int]] = None, ids=None, names=None) -> Dataset:
    X = np.stack([v.concat() for v in vectors]) if len(vectors) else np.zeros((0, len(names or [])))
    y = np.array(labels if labels is not None else [v.label for v in vectors], dtype=np.int64)
    if names is None:
        n_bins = len(vectors[0].b0)
        names = [f"b{k}_{j}" for k in (0, 1) for j in range(n_bins)]
    return Dataset(X, y, names, list(ids) if ids is not None else [])
