"""Mapping between the 18 LV segments and a 3x6 rectangular grid.

The circular bull's eye is unwrapped into a matrix with one row per level
(basal, mid, apical) and one column per wall.  Because the walls are
arranged on a circle, the left and right edges of the matrix are
anatomical neighbours; ``pad_horizontal`` wraps columns around to expose
that continuity to convolution kernels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_SEGMENTS = 18
N_ROWS = 3
N_COLS = 6

# Wall order around the ventricular circumference, column 0..5.
WALLS = (
    "anterior",
    "anteroseptal",
    "inferoseptal",
    "inferior",
    "inferolateral",
    "anterolateral",
)

ROWS = ("basal", "mid", "apical")


class GridShapeError(ValueError):
    """Input does not have the expected segment/grid shape."""


@dataclass(frozen=True)
class SegmentGridMap:
    """Bijection between segment ids 1..18 and (row, col) grid cells.

    Row 0 holds the basal segments 1-6, row 1 the mid segments 7-12 and
    row 2 the apical segments 13-18; within a row, columns follow the
    wall order of ``WALLS``.
    """

    rows: tuple[str, ...] = ROWS
    cols: tuple[str, ...] = WALLS

    def cell(self, segment: int) -> tuple[int, int]:
        """Grid cell (row, col) of a segment id in 1..18."""
        if not 1 <= segment <= N_SEGMENTS:
            raise GridShapeError(f"segment id {segment} outside 1..{N_SEGMENTS}")
        return (segment - 1) // N_COLS, (segment - 1) % N_COLS

    def segment(self, row: int, col: int) -> int:
        """Segment id at a grid cell."""
        if not (0 <= row < N_ROWS and 0 <= col < N_COLS):
            raise GridShapeError(f"cell ({row}, {col}) outside the 3x6 grid")
        return row * N_COLS + col + 1

    def to_dict(self) -> dict:
        return {
            "rows": list(self.rows),
            "cols": list(self.cols),
            "segments": {
                str(s): list(self.cell(s)) for s in range(1, N_SEGMENTS + 1)
            },
        }


DEFAULT_MAP = SegmentGridMap()


def to_grid(strain_matrix: np.ndarray, grid_map: SegmentGridMap = DEFAULT_MAP) -> np.ndarray:
    """Rearrange an (18, T) strain matrix into a (T, 3, 6) grid tensor.

    Channel t of the result is the bull's eye snapshot of all segments at
    time step t.
    """
    strain_matrix = np.asarray(strain_matrix, dtype=np.float64)
    if strain_matrix.ndim != 2 or strain_matrix.shape[0] != N_SEGMENTS:
        raise GridShapeError(
            f"expected an (18, T) strain matrix, got shape {strain_matrix.shape}"
        )
    t = strain_matrix.shape[1]
    grid = np.empty((t, N_ROWS, N_COLS), dtype=np.float64)
    for seg in range(1, N_SEGMENTS + 1):
        r, c = grid_map.cell(seg)
        grid[:, r, c] = strain_matrix[seg - 1]
    return grid


def from_grid(grid: np.ndarray, grid_map: SegmentGridMap = DEFAULT_MAP) -> np.ndarray:
    """Exact inverse of :func:`to_grid`: (T, 3, 6) back to (18, T)."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 3 or grid.shape[1:] != (N_ROWS, N_COLS):
        raise GridShapeError(f"expected a (T, 3, 6) grid tensor, got shape {grid.shape}")
    out = np.empty((N_SEGMENTS, grid.shape[0]), dtype=np.float64)
    for seg in range(1, N_SEGMENTS + 1):
        r, c = grid_map.cell(seg)
        out[seg - 1] = grid[:, r, c]
    return out


def pad_horizontal(grid: np.ndarray, p: int) -> np.ndarray:
    """Circularly wrap p columns onto each side of a (T, rows, cols) grid.

    p = 0 returns a copy; p may not exceed the column count (the wrap
    would start repeating columns).
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 3:
        raise GridShapeError(f"expected a rank-3 grid tensor, got shape {grid.shape}")
    if p < 0:
        raise ValueError("padding width must be non-negative")
    if p > grid.shape[2]:
        raise ValueError(
            f"padding width {p} exceeds column count {grid.shape[2]}"
        )
    if p == 0:
        return grid.copy()
    return np.concatenate([grid[:, :, -p:], grid, grid[:, :, :p]], axis=2)
