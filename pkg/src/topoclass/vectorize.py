"""Betti curves and fixed-length binned descriptors."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .filtration import build_filtration
from .imaging import GrayImage
from .persistence import ESSENTIAL_DEATH, PersistenceDiagram, compute_pd0, compute_pd1

N_THRESHOLDS = 255
N_BINS = 100


@dataclass(frozen=True)
class BettiCurve:
    dim: int
    values: np.ndarray  # values[t] = beta_dim at threshold t


@dataclass
class FeatureVector:
    b0: np.ndarray
    b1: np.ndarray
    label: Optional[int] = None

    def concat(self) -> np.ndarray:
        return np.concatenate([self.b0, self.b1])


def betti_curve(pd: PersistenceDiagram, n_thresholds: int = N_THRESHOLDS) -> BettiCurve:
    """Count bars with ``birth <= t < death`` for ``t`` in ``0..n_thresholds-1``."""
    if not 1 <= n_thresholds <= ESSENTIAL_DEATH:
        raise ValueError(f"n_thresholds must be in [1, {ESSENTIAL_DEATH}]")
    # difference array: +1 at birth, -1 at death
    diff = np.zeros(ESSENTIAL_DEATH + 1, dtype=np.int64)
    for bar in pd.bars:
        diff[bar.birth] += 1
        diff[bar.death] -= 1
    return BettiCurve(pd.dim, np.cumsum(diff)[:n_thresholds])


def bin_edges(n_values: int, n_bins: int) -> np.ndarray:
    """Bin ``j`` spans ``[edges[j], edges[j+1])`` with ``edges[j] = floor(j * n_values / n_bins)``."""
    if not 1 <= n_bins <= n_values:
        raise ValueError(f"bin count must be in [1, {n_values}], got {n_bins}")
    return np.arange(n_bins + 1, dtype=np.int64) * n_values // n_bins


def bin_curve(curve, n_bins: int = N_BINS, agg: str = "mean", exact: bool = False):
    """Aggregate a Betti curve into ``n_bins`` contiguous bins.

    ``agg="mean"`` averages each bin, which keeps the scale independent of the
    uneven bin widths; ``agg="sum"`` totals them.  With ``exact=True`` an
    integer curve yields a list of :class:`~fractions.Fraction`; the float
    result is always the correctly rounded value of that fraction.
    """
    values = curve.values if isinstance(curve, BettiCurve) else curve
    if exact:
        ints = [int(v) for v in values]
        edges = bin_edges(len(ints), n_bins).tolist()
        out = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            total = Fraction(sum(ints[lo:hi]))
            out.append(total if agg == "sum" else total / (hi - lo))
        if agg not in ("sum", "mean"):
            raise ValueError(f"unknown aggregation {agg!r}")
        return out
    values = np.asarray(values, dtype=np.float64)
    edges = bin_edges(values.size, n_bins)
    sums = np.add.reduceat(values, edges[:-1])
    if agg == "sum":
        return sums
    if agg == "mean":
        return sums / np.diff(edges)
    raise ValueError(f"unknown aggregation {agg!r}")


def extract_features(
    image: GrayImage,
    n_bins: int = N_BINS,
    n_thresholds: int = N_THRESHOLDS,
    agg: str = "mean",
    label: Optional[int] = None,
) -> FeatureVector:
    f = build_filtration(image)
    b0 = bin_curve(betti_curve(compute_pd0(f), n_thresholds), n_bins, agg)
    b1 = bin_curve(betti_curve(compute_pd1(f), n_thresholds), n_bins, agg)
    return FeatureVector(b0, b1, label)


def feature_names(n_bins: int = N_BINS, groups: Sequence[str] = ("b0", "b1")) -> list:
    return [f"{g}_{j}" for g in groups for j in range(n_bins)]
