"""Cut accuracy: symmetric difference between marked and achieved regions,
counted in cells of a scoring grid laid over the sheet."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyRegionError, ZeroBaselineError

GridIndex = tuple[int, int]


@dataclass(frozen=True)
class ScoringGrid:
    cells: int
    cell_size: float
    origin: tuple[float, float] = (0.0, 0.0)

    @classmethod
    def for_sheet(cls, resolution: int, spacing: float, factor: int = 2) -> "ScoringGrid":
        """``factor * resolution`` cells per side over the sheet's rest square."""
        width = (resolution - 1) * spacing
        cells = factor * resolution
        return cls(cells, width / cells)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        idx = (np.arange(self.cells) + 0.5) * self.cell_size
        cx = self.origin[0] + idx
        cy = self.origin[1] + idx
        return np.meshgrid(cx, cy, indexing="xy")


@dataclass
class Region:
    """A closed polygon (area) or an open polyline (band one cell wide)."""

    points: np.ndarray
    closed: bool

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)[:, :2]


def _polygon_mask(points: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Even-odd rule on cell centres."""
    inside = np.zeros(gx.shape, dtype=bool)
    xs, ys = points[:, 0], points[:, 1]
    xj, yj = np.roll(xs, 1), np.roll(ys, 1)
    for x0, y0, x1, y1 in zip(xs, ys, xj, yj):
        if y0 == y1:
            continue
        straddle = (y0 > gy) != (y1 > gy)
        x_cross = x0 + (gy - y0) * (x1 - x0) / (y1 - y0)
        inside ^= straddle & (gx < x_cross)
    return inside


def _band_mask(points: np.ndarray, gx: np.ndarray, gy: np.ndarray, radius: float) -> np.ndarray:
    """Cells whose centre is within ``radius`` of the polyline."""
    r2 = radius * radius
    mask = np.zeros(gx.shape, dtype=bool)
    if len(points) == 1:
        return (gx - points[0, 0]) ** 2 + (gy - points[0, 1]) ** 2 <= r2
    for (x0, y0), (x1, y1) in zip(points[:-1], points[1:]):
        dx, dy = x1 - x0, y1 - y0
        ll = dx * dx + dy * dy
        if ll == 0.0:
            t = np.zeros(gx.shape)
        else:
            t = np.clip(((gx - x0) * dx + (gy - y0) * dy) / ll, 0.0, 1.0)
        px = x0 + t * dx - gx
        py = y0 + t * dy - gy
        mask |= px * px + py * py <= r2
    return mask


def region_mask(region: Region, grid: ScoringGrid) -> np.ndarray:
    gx, gy = grid.centers()
    if region.closed:
        return _polygon_mask(region.points, gx, gy)
    return _band_mask(region.points, gx, gy, grid.cell_size)


def symmetric_difference(intended, achieved, grid: ScoringGrid) -> int:
    """Number of scoring cells covered by exactly one of the two regions."""
    a = intended if isinstance(intended, np.ndarray) else region_mask(intended, grid)
    b = achieved if isinstance(achieved, np.ndarray) else region_mask(achieved, grid)
    if not a.any() and not b.any():
        raise EmptyRegionError("both regions are empty on the scoring grid")
    return int(np.count_nonzero(a ^ b))


def improvement_over_baseline(score: float, baseline: float) -> float:
    """Percent reduction of the cutting error relative to the baseline."""
    if baseline <= 0:
        raise ZeroBaselineError(f"baseline score must be > 0, got {baseline}")
    return 100.0 * (baseline - score) / baseline


@dataclass
class CutRecord:
    intended_vertices: list[GridIndex]
    achieved_cut_positions: np.ndarray
    sheet_resolution: int
    spacing: float
    closed: bool = False

    def __post_init__(self):
        self.achieved_cut_positions = np.asarray(self.achieved_cut_positions, dtype=float)
        if len(self.intended_vertices) != len(self.achieved_cut_positions):
            raise ValueError("intended and achieved lists differ in length")
        if not np.all(np.isfinite(self.achieved_cut_positions)):
            raise ValueError("non-finite achieved positions")

    def intended_region(self) -> Region:
        pts = np.array([(c * self.spacing, r * self.spacing) for r, c in self.intended_vertices],
                       dtype=float).reshape(-1, 2)
        return Region(pts, self.closed and len(pts) >= 3)

    def achieved_region(self) -> Region:
        return Region(self.achieved_cut_positions[:, :2], self.closed and len(self.intended_vertices) >= 3)

    def score(self, factor: int = 2) -> int:
        grid = ScoringGrid.for_sheet(self.sheet_resolution, self.spacing, factor)
        return symmetric_difference(self.intended_region(), self.achieved_region(), grid)


@dataclass(frozen=True)
class CutScore:
    symmetric_difference: float
    improvement_pct: float | None = None

    @classmethod
    def against(cls, score: float, baseline: float) -> "CutScore":
        return cls(score, improvement_over_baseline(score, baseline))
