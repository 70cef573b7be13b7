"""Static environment: occupancy grid ingestion, collision queries, behaviour grid.

Map files follow the familiar robotics convention of a grayscale bitmap plus
a small YAML metadata file (``resolution``, ``origin: [x, y, yaw]``,
``occupied_thresh``, ``free_thresh``).  Thresholds act on normalised pixel
brightness: dark pixels are obstacles.  Unknown cells are treated as
occupied by every query (conservative for an assistive device).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .geometry import ClothoidPath, Pose2, sample_path

__all__ = [
    "FREE",
    "OCCUPIED",
    "UNKNOWN",
    "OccupancyGrid",
    "BehaviourGrid",
    "MapError",
    "load_map",
    "is_free",
    "path_is_free",
    "segment_is_free",
    "cell_of",
    "make_cross_grid",
    "make_empty_grid",
]

FREE = 0
OCCUPIED = 1
UNKNOWN = 2

DEFAULT_CLEARANCE = 0.3  # m, plausible walker half-width


class MapError(ValueError):
    """Raised for unreadable or inconsistent map inputs."""


@dataclass(frozen=True)
class OccupancyGrid:
    """Row-major occupancy raster; cell (0, 0) sits at ``origin``, +y up."""

    cells: np.ndarray  # shape (height, width), values in {FREE, OCCUPIED, UNKNOWN}
    resolution: float  # m / cell
    origin: Pose2  # world pose of the (0, 0) cell corner

    def __post_init__(self):
        cells = np.ascontiguousarray(self.cells, dtype=np.uint8)
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        if cells.ndim != 2:
            raise MapError("occupancy cells must be a 2-D array")
        if not self.resolution > 0:
            raise MapError("resolution must be positive")
        if abs(self.origin.theta) > 1e-12:
            raise MapError("rotated map origins are not supported")

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def world_extent(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) in world coordinates."""
        return (
            self.origin.x,
            self.origin.y,
            self.origin.x + self.width * self.resolution,
            self.origin.y + self.height * self.resolution,
        )

    def free_area(self) -> float:
        """Total area of free cells in m^2."""
        return float(np.count_nonzero(self.cells == FREE)) * self.resolution**2


@dataclass(frozen=True)
class BehaviourGrid:
    """The 1x1 m behaviour discretisation laid over the world."""

    origin_x: float
    origin_y: float
    extent_x: int
    extent_y: int
    cell_size: float = 1.0

    def __post_init__(self):
        if not self.cell_size > 0:
            raise MapError("cell size must be positive")

    def contains(self, x: float, y: float) -> bool:
        i = math.floor((x - self.origin_x) / self.cell_size)
        j = math.floor((y - self.origin_y) / self.cell_size)
        return 0 <= i < self.extent_x and 0 <= j < self.extent_y

    def cell_center(self, cell: tuple[int, int]) -> tuple[float, float]:
        i, j = cell
        return (
            self.origin_x + (i + 0.5) * self.cell_size,
            self.origin_y + (j + 0.5) * self.cell_size,
        )

    @classmethod
    def covering(cls, grid: OccupancyGrid, cell_size: float = 1.0) -> "BehaviourGrid":
        xmin, ymin, xmax, ymax = grid.world_extent
        return cls(
            origin_x=xmin,
            origin_y=ymin,
            extent_x=int(math.ceil((xmax - xmin) / cell_size)),
            extent_y=int(math.ceil((ymax - ymin) / cell_size)),
            cell_size=cell_size,
        )


def cell_of(bg: BehaviourGrid, p) -> tuple[int, int]:
    """Behaviour-grid index of a world point (floor rule, upper-right on ties)."""
    x, y = float(p[0]), float(p[1])
    i = math.floor((x - bg.origin_x) / bg.cell_size)
    j = math.floor((y - bg.origin_y) / bg.cell_size)
    if not (0 <= i < bg.extent_x and 0 <= j < bg.extent_y):
        raise MapError(f"point ({x}, {y}) outside behaviour grid extent")
    return i, j


def _classify_pixels(pix: np.ndarray, occupied_thresh: float, free_thresh: float) -> np.ndarray:
    bright = pix.astype(float) / 255.0
    out = np.full(pix.shape, UNKNOWN, dtype=np.uint8)
    out[bright <= occupied_thresh] = OCCUPIED
    out[bright >= free_thresh] = FREE
    return out


def load_map(image, meta) -> OccupancyGrid:
    """Build an OccupancyGrid from a grayscale bitmap and metadata.

    ``image`` is a file path or a (H, W) uint8 array (row 0 = top of the
    picture); ``meta`` is a mapping or the path of a YAML file with keys
    resolution, origin, occupied_thresh, free_thresh.
    """
    if isinstance(meta, (str, Path)):
        try:
            meta = yaml.safe_load(Path(meta).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise MapError(f"unreadable map metadata: {exc}") from exc
    if not isinstance(meta, dict):
        raise MapError("map metadata must be a mapping")
    try:
        resolution = float(meta["resolution"])
        origin = meta.get("origin", [0.0, 0.0, 0.0])
        occupied_thresh = float(meta.get("occupied_thresh", 0.2))
        free_thresh = float(meta.get("free_thresh", 0.8))
    except (KeyError, TypeError, ValueError) as exc:
        raise MapError(f"bad map metadata: {exc}") from exc
    if resolution <= 0:
        raise MapError("resolution must be positive")

    if isinstance(image, (str, Path)):
        try:
            from PIL import Image

            with Image.open(image) as im:
                pix = np.asarray(im.convert("L"))
        except OSError as exc:
            raise MapError(f"unreadable map image: {exc}") from exc
    else:
        pix = np.asarray(image)
        if pix.ndim != 2:
            raise MapError(f"expected a 2-D grayscale image, got shape {pix.shape}")

    cells = _classify_pixels(pix, occupied_thresh, free_thresh)[::-1]  # world +y up
    ox, oy, oyaw = (list(origin) + [0.0, 0.0, 0.0])[:3]
    return OccupancyGrid(cells=cells, resolution=resolution, origin=Pose2(float(ox), float(oy), float(oyaw)))


def is_free(grid: OccupancyGrid, p, clearance: float = 0.0) -> bool:
    """True iff every cell touching the disc of radius ``clearance`` at p is free.

    Total function: points outside the grid (or with the disc poking past
    the border) report False.
    """
    if clearance < 0:
        raise ValueError("clearance must be >= 0")
    x, y = float(p[0]), float(p[1])
    res = grid.resolution
    cx = (x - grid.origin.x) / res
    cy = (y - grid.origin.y) / res
    if not (0 <= cx < grid.width and 0 <= cy < grid.height):
        return False
    r = clearance / res
    i0 = math.floor(cx - r)
    i1 = math.floor(cx + r)
    j0 = math.floor(cy - r)
    j1 = math.floor(cy + r)
    if i0 < 0 or j0 < 0 or i1 >= grid.width or j1 >= grid.height:
        if clearance > 0:
            return False
        i0, i1 = max(i0, 0), min(i1, grid.width - 1)
        j0, j1 = max(j0, 0), min(j1, grid.height - 1)
    if i1 == i0 and j1 == j0:
        return bool(grid.cells[j0, i0] == FREE)
    ii = np.arange(i0, i1 + 1)
    jj = np.arange(j0, j1 + 1)
    dx = np.clip(cx, ii, ii + 1) - cx
    dy = np.clip(cy, jj, jj + 1) - cy
    covered = (dx * dx)[None, :] + (dy * dy)[:, None] <= r * r + 1e-12
    window = grid.cells[j0 : j1 + 1, i0 : i1 + 1]
    return not bool(np.any(window[covered] != FREE))


def segment_is_free(grid: OccupancyGrid, p, q, clearance: float = 0.0, step: float | None = None) -> bool:
    """Collision check of the straight segment p-q by dense point sampling."""
    if step is None:
        step = grid.resolution
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    dist = float(np.hypot(*(q - p)))
    n = max(1, int(math.ceil(dist / step)))
    for t in np.linspace(0.0, 1.0, n + 1):
        if not is_free(grid, p + t * (q - p), clearance):
            return False
    return True


def path_is_free(grid: OccupancyGrid, path: ClothoidPath, clearance: float = 0.0, step: float | None = None) -> bool:
    """True iff is_free holds at every arc-length sample of the clothoid path."""
    if step is None:
        step = grid.resolution
    samples = sample_path(path, step)
    for row in samples:
        if not is_free(grid, (row[1], row[2]), clearance):
            return False
    return True


# ---------------------------------------------------------------------------
# Built-in worlds used by demos and tests


def make_empty_grid(size_x: float, size_y: float, resolution: float = 0.05) -> OccupancyGrid:
    """Fully free rectangular room with the origin at (0, 0)."""
    w = int(round(size_x / resolution))
    h = int(round(size_y / resolution))
    return OccupancyGrid(np.zeros((h, w), dtype=np.uint8), resolution, Pose2(0.0, 0.0, 0.0))


def make_cross_grid(
    arm: float = 5.0, corridor: float = 2.0, resolution: float = 0.05
) -> OccupancyGrid:
    """Cross intersection: two corridors of width ``corridor`` crossing at the centre.

    The map spans (2*arm + corridor) per side; everything outside the two
    corridor bands is occupied.
    """
    size = 2.0 * arm + corridor
    n = int(round(size / resolution))
    cells = np.full((n, n), OCCUPIED, dtype=np.uint8)
    lo = int(round(arm / resolution))
    hi = int(round((arm + corridor) / resolution))
    cells[lo:hi, :] = FREE
    cells[:, lo:hi] = FREE
    return OccupancyGrid(cells, resolution, Pose2(0.0, 0.0, 0.0))
