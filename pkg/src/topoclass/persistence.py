"""Persistence diagrams of cubical sublevel filtrations in dimensions 0 and 1.

Dimension 0 uses union-find over pixels in increasing intensity order.  For
dimension 1 there are two routes that must agree bar for bar:

* ``"duality"`` (default): holes of the sublevel complex are the bounded
  4-connected components of its complement, so dimension-1 bars are the
  dimension-0 bars of the superlevel filtration run backwards, with the
  region outside the image acting as the eldest component.
* ``"reduction"``: boundary-matrix reduction over Z/2 with clearing.  Slower,
  kept as the reference.

Classes that never die get ``ESSENTIAL_DEATH`` (one past the largest
threshold) so half-open bar counting gives Betti numbers directly.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Tuple

import numpy as np
from scipy import ndimage

from .filtration import CubicalFiltration
from .imaging import GrayImage

ESSENTIAL_DEATH = 256

_INF_BIRTH = 1 << 30  # birth of the outside region in the superlevel pass


class PersistenceBar(NamedTuple):
    birth: int
    death: int
    dim: int

    @property
    def essential(self) -> bool:
        return self.death == ESSENTIAL_DEATH


@dataclass(frozen=True)
class PersistenceDiagram:
    dim: int
    bars: Tuple[PersistenceBar, ...]

    def __post_init__(self):
        bars = []
        for b in self.bars:
            bar = PersistenceBar(int(b[0]), int(b[1]), self.dim)
            if bar.birth > bar.death:
                raise ValueError(f"bar {bar} has birth after death")
            if bar.birth != bar.death:
                bars.append(bar)
        object.__setattr__(self, "bars", tuple(sorted(bars)))

    def __len__(self):
        return len(self.bars)

    def __iter__(self):
        return iter(self.bars)

    def pairs(self) -> List[Tuple[int, int]]:
        return [(b.birth, b.death) for b in self.bars]

    @property
    def n_essential(self) -> int:
        return sum(b.essential for b in self.bars)


def _find(parent: List[int], x: int) -> int:
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        parent[x], x = root, parent[x]
    return root


def _pd0_union_find(px: np.ndarray) -> List[Tuple[int, int]]:
    r, s = px.shape
    flat = px.ravel().tolist()
    order = np.argsort(px.ravel(), kind="stable").tolist()
    n = r * s
    parent = list(range(n))
    birth = [0] * n
    added = [False] * n
    bars = []
    for p in order:
        v = flat[p]
        i, j = divmod(p, s)
        roots = set()
        for di in (-1, 0, 1):
            ii = i + di
            if ii < 0 or ii >= r:
                continue
            base = ii * s
            for dj in (-1, 0, 1):
                jj = j + dj
                if 0 <= jj < s and added[base + jj]:
                    roots.add(_find(parent, base + jj))
        added[p] = True
        birth[p] = v
        if not roots:
            continue
        # elder = earliest birth, then smallest row-major index of its birth pixel
        elder = min(roots, key=lambda q: (birth[q], q))
        for q in roots:
            if q != elder:
                parent[q] = elder
                if birth[q] < v:
                    bars.append((birth[q], v))
        parent[p] = elder
    root = _find(parent, order[0])
    bars.append((birth[root], ESSENTIAL_DEATH))
    return bars


def _pd1_duality(px: np.ndarray) -> List[Tuple[int, int]]:
    r, s = px.shape
    n = r * s
    flat = px.ravel().tolist()
    order = np.argsort(-px.ravel().astype(np.int32), kind="stable").tolist()
    outside = n
    parent = list(range(n + 1))
    birth = [0] * n + [_INF_BIRTH]
    added = [False] * n + [True]
    bars = []
    for p in order:
        v = flat[p]
        i, j = divmod(p, s)
        nbrs = []
        if i > 0:
            nbrs.append(p - s)
        if i < r - 1:
            nbrs.append(p + s)
        if j > 0:
            nbrs.append(p - 1)
        if j < s - 1:
            nbrs.append(p + 1)
        if i == 0 or j == 0 or i == r - 1 or j == s - 1:
            nbrs.append(outside)
        roots = {_find(parent, q) for q in nbrs if added[q]}
        added[p] = True
        birth[p] = v
        if not roots:
            continue
        # in the superlevel pass the elder component has the highest birth
        elder = max(roots, key=lambda q: (birth[q], -q))
        for q in roots:
            if q != elder:
                parent[q] = elder
                if v < birth[q]:
                    bars.append((v, birth[q]))
        parent[p] = elder
    return bars


def _filtration_order(f: CubicalFiltration):
    vals = f.values.ravel().astype(np.int64)
    dims = f.dims().ravel()
    idx = np.arange(vals.size)
    order = np.lexsort((idx, dims, vals))
    pos = np.empty_like(order)
    pos[order] = np.arange(order.size)
    return vals, dims, order, pos


def reduce_boundary(f: CubicalFiltration) -> Dict[int, List[Tuple[int, int]]]:
    """Persistence pairs for dims 0 and 1 by Z/2 column reduction with clearing.

    Columns are ordered by (value, dimension, doubled-grid row-major index).
    Dimension-2 columns are reduced first; their pivots are positive edges
    whose columns are then cleared instead of reduced.
    """
    vals, dims, order, pos = _filtration_order(f)
    width = f.values.shape[1]

    def boundary(cell: int) -> set:
        i, j = divmod(cell, width)
        return {int(pos[a * width + b]) for a, b in f.cell_faces(i, j)}

    cell_at = order.tolist()
    paired = set()
    pairs: Dict[int, List[Tuple[int, int]]] = {0: [], 1: []}
    cleared = set()

    for dim in (2, 1):
        pivot_owner: Dict[int, set] = {}
        for k, cell in enumerate(cell_at):
            if dims[cell] != dim or k in cleared:
                continue
            col = boundary(cell)
            while col:
                low = max(col)
                other = pivot_owner.get(low)
                if other is None:
                    break
                col ^= other
            if col:
                low = max(col)
                pivot_owner[low] = col
                paired.add(low)
                paired.add(k)
                if dim == 2:
                    cleared.add(low)
                pairs[dim - 1].append((int(vals[cell_at[low]]), int(vals[cell])))

    for k, cell in enumerate(cell_at):
        d = int(dims[cell])
        if d < 2 and k not in paired:
            # a dimension-1 column left unpaired here reduced to zero: positive, never killed
            pairs[d].append((int(vals[cell]), ESSENTIAL_DEATH))
    return pairs


def compute_pd0(f: CubicalFiltration, method: str = "union_find") -> PersistenceDiagram:
    if method == "union_find":
        bars = _pd0_union_find(np.asarray(f.faces))
    elif method == "reduction":
        bars = reduce_boundary(f)[0]
    else:
        raise ValueError(f"unknown method {method!r}")
    return PersistenceDiagram(0, tuple(bars))


def compute_pd1(f: CubicalFiltration, method: str = "duality") -> PersistenceDiagram:
    if method == "duality":
        bars = _pd1_duality(np.asarray(f.faces))
    elif method == "reduction":
        bars = reduce_boundary(f)[1]
    else:
        raise ValueError(f"unknown method {method!r}")
    return PersistenceDiagram(1, tuple(bars))


_EIGHT = np.ones((3, 3), dtype=bool)


def betti_oracle(image: GrayImage, t: int) -> Tuple[int, int]:
    """Betti numbers of the sublevel complex at ``t`` by direct counting.

    Works from the pixel mask alone: a lower-dimensional cell is present iff
    any pixel containing it is.  beta_1 = beta_0 - chi since beta_2 = 0 in
    the plane.
    """
    mask = np.asarray(image.pixels) <= t
    m = np.pad(mask, 1, constant_values=False)
    n_faces = int(mask.sum())
    n_vertices = int((m[:-1, :-1] | m[:-1, 1:] | m[1:, :-1] | m[1:, 1:]).sum())
    n_edges = int((m[:-1, 1:-1] | m[1:, 1:-1]).sum() + (m[1:-1, :-1] | m[1:-1, 1:]).sum())
    _, b0 = ndimage.label(mask, structure=_EIGHT)
    chi = n_vertices - n_edges + n_faces
    return int(b0), int(b0 - chi)


def write_diagrams_csv(diagrams: Iterable[PersistenceDiagram], path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dim", "birth", "death"])
        for pd in diagrams:
            for b in pd.bars:
                w.writerow([b.dim, b.birth, b.death])
