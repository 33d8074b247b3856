"""Cubical sublevel filtration of a pixel grid (T-construction).

Pixels are the top-dimensional cells.  Every edge and vertex takes the minimum
value of the pixels containing it, so the sublevel set at any threshold is a
closed subcomplex and pixels touching only at a corner are already connected
once both are present (8-connectivity).

Cells are addressed on the doubled grid of shape ``(2r+1, 2s+1)``: position
``(i, j)`` is a vertex when both coordinates are even, a face (pixel) when
both are odd, and an edge otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import GrayImage

# Larger than any 8-bit intensity; pads the grid so border cells see fewer cofaces.
_PAD = 256


@dataclass(frozen=True)
class CubicalFiltration:
    values: np.ndarray  # doubled-grid array, int16

    @property
    def rows(self) -> int:
        return (self.values.shape[0] - 1) // 2

    @property
    def cols(self) -> int:
        return (self.values.shape[1] - 1) // 2

    @property
    def faces(self) -> np.ndarray:
        return self.values[1::2, 1::2]

    @property
    def vertices(self) -> np.ndarray:
        return self.values[0::2, 0::2]

    @property
    def horizontal_edges(self) -> np.ndarray:
        # edges joining vertex (i, j) to (i, j+1)
        return self.values[0::2, 1::2]

    @property
    def vertical_edges(self) -> np.ndarray:
        return self.values[1::2, 0::2]

    @property
    def n_vertices(self) -> int:
        return self.vertices.size

    @property
    def n_edges(self) -> int:
        return self.horizontal_edges.size + self.vertical_edges.size

    @property
    def n_faces(self) -> int:
        return self.faces.size

    def dims(self) -> np.ndarray:
        """Cell dimension at every doubled-grid position."""
        i = np.arange(self.values.shape[0]) % 2
        j = np.arange(self.values.shape[1]) % 2
        return i[:, None] + j[None, :]

    def sublevel(self, t: int) -> np.ndarray:
        """Boolean mask of the cells present at threshold ``t``."""
        return self.values <= t

    def cell_faces(self, i: int, j: int):
        """Codimension-1 faces of the cell at doubled-grid position ``(i, j)``."""
        out = []
        if i % 2:
            out += [(i - 1, j), (i + 1, j)]
        if j % 2:
            out += [(i, j - 1), (i, j + 1)]
        return out


def build_filtration(image: GrayImage) -> CubicalFiltration:
    px = image.pixels.astype(np.int16)
    r, s = px.shape
    padded = np.full((r + 2, s + 2), _PAD, dtype=np.int16)
    padded[1:-1, 1:-1] = px

    grid = np.empty((2 * r + 1, 2 * s + 1), dtype=np.int16)
    grid[1::2, 1::2] = px
    # vertex (i, j) is shared by pixels (i-1..i, j-1..j)
    grid[0::2, 0::2] = np.minimum.reduce([
        padded[:-1, :-1], padded[:-1, 1:], padded[1:, :-1], padded[1:, 1:],
    ])
    # horizontal edge (i, j): pixels (i-1, j) and (i, j)
    grid[0::2, 1::2] = np.minimum(padded[:-1, 1:-1], padded[1:, 1:-1])
    # vertical edge (i, j): pixels (i, j-1) and (i, j)
    grid[1::2, 0::2] = np.minimum(padded[1:-1, :-1], padded[1:-1, 1:])
    grid.setflags(write=False)
    return CubicalFiltration(grid)
