"""Log-odds occupancy grid over the 4 m x 3 m lab floor.

The floor frame has its origin at one platform corner, x along the 4 m
side and y along the 3 m side.  Grid rows follow y, columns follow x at
1 cm resolution, so the map is 300 rows by 400 columns.
"""

from __future__ import annotations

import math

import numpy as np

ROWS = 300
COLS = 400
RESOLUTION = 0.01            # meters per cell
FLOOR_X = COLS * RESOLUTION  # 4.0 m
FLOOR_Y = ROWS * RESOLUTION  # 3.0 m
LOGODDS_CLAMP = 10.0


class OccupancyGrid:
    """300x400 grid of clamped log-odds occupancy values."""

    __slots__ = ("cells",)

    def __init__(self, cells: np.ndarray):
        if cells.shape != (ROWS, COLS):
            raise ValueError(f"grid must be {ROWS}x{COLS}, got {cells.shape}")
        self.cells = cells

    @property
    def rows(self) -> int:
        return ROWS

    @property
    def cols(self) -> int:
        return COLS

    @property
    def resolution(self) -> float:
        return RESOLUTION

    def probabilities(self) -> np.ndarray:
        """Per-cell occupancy probability, 1 - 1/(1+exp(l))."""
        return 1.0 - 1.0 / (1.0 + np.exp(self.cells))

    def binarize(self, threshold: float) -> np.ndarray:
        """uint8 grid, 1 where probability >= threshold."""
        if not 0.0 <= threshold <= 1.0:
            raise ValueError(f"threshold must be in [0,1], got {threshold}")
        if threshold <= 0.0:
            return np.ones((ROWS, COLS), dtype=np.uint8)
        if threshold >= 1.0:
            return np.zeros((ROWS, COLS), dtype=np.uint8)
        # p(l) >= t  <=>  l >= logit(t); avoids exponentiating the grid
        return (self.cells >= logodds(threshold)).astype(np.uint8)

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(self.cells.copy())


def logodds(p: float) -> float:
    return math.log(p / (1.0 - p))


def probability(l: float) -> float:
    return 1.0 - 1.0 / (1.0 + math.exp(l))


def new_grid(prior_probability: float) -> OccupancyGrid:
    """Fresh grid with every cell at the prior's log-odds."""
    if not 0.0 < prior_probability < 1.0:
        raise ValueError(
            f"prior probability must be in (0,1), got {prior_probability}")
    cells = np.full((ROWS, COLS), logodds(prior_probability), dtype=np.float64)
    return OccupancyGrid(cells)


def cell_of(x_m: float, y_m: float) -> tuple[int, int]:
    """Map floor coordinates to (row, col); raises on out-of-bounds."""
    if not (0.0 <= x_m < FLOOR_X) or not (0.0 <= y_m < FLOOR_Y):
        raise ValueError(f"point ({x_m}, {y_m}) outside floor "
                         f"[0,{FLOOR_X})x[0,{FLOOR_Y})")
    return int(math.floor(y_m / RESOLUTION)), int(math.floor(x_m / RESOLUTION))


def clamp_logodds(cells: np.ndarray) -> np.ndarray:
    """In-place clamp to +/-LOGODDS_CLAMP; returns the same array."""
    np.clip(cells, -LOGODDS_CLAMP, LOGODDS_CLAMP, out=cells)
    return cells


def to_pgm(probabilities: np.ndarray) -> bytes:
    """Render a probability grid as a binary PGM (P5) image.

    Pixel value is round(255 * p_occupied).  Image rows run top to
    bottom with y increasing upward, i.e. file row 0 is grid row
    ROWS-1, so the image reads like a map viewed from above.
    """
    if probabilities.shape != (ROWS, COLS):
        raise ValueError(f"expected {ROWS}x{COLS} grid")
    pix = np.rint(probabilities * 255.0).astype(np.uint8)
    header = f"P5\n{COLS} {ROWS}\n255\n".encode("ascii")
    return header + pix[::-1, :].tobytes()
