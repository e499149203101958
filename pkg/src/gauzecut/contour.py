"""Marked cutting contours: loading, segmentation, rasterization onto the mesh
and cut scheduling."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateContourError,
    InvalidPermutationError,
    OutOfBoundsError,
    ShapeParseError,
)

GridIndex = tuple[int, int]

SHAPES_DIR = Path(__file__).parent / "data" / "shapes"


@dataclass
class Contour:
    points: np.ndarray
    closed: bool = False
    name: str = "contour"
    expected_segments: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DegenerateContourError(f"{self.name}: points must be an (k, 2) array")
        if len(pts) < 2:
            raise DegenerateContourError(f"{self.name}: need at least 2 points, got {len(pts)}")
        if not np.all(np.isfinite(pts)):
            raise DegenerateContourError(f"{self.name}: non-finite coordinates")
        steps = np.diff(pts, axis=0)
        if self.closed:
            steps = np.vstack([steps, pts[:1] - pts[-1:]])
        if np.any(np.all(steps == 0, axis=1)):
            raise DegenerateContourError(f"{self.name}: consecutive points coincide")
        self.points = pts

    def __len__(self):
        return len(self.points)

    def scaled(self, factor: float, offset=(0.0, 0.0)) -> "Contour":
        return Contour(self.points * factor + np.asarray(offset, float), self.closed,
                       self.name, self.expected_segments)

    def mirrored_y(self, width: float) -> "Contour":
        pts = self.points.copy()
        pts[:, 1] = width - pts[:, 1]
        return Contour(pts, self.closed, self.name + "-mirror", self.expected_segments)

    def check_bounds(self, width: float, tol: float = 1e-9) -> "Contour":
        lo, hi = self.points.min(), self.points.max()
        if lo < -tol or hi > width + tol:
            raise OutOfBoundsError(
                f"{self.name}: points span [{lo:.3f}, {hi:.3f}], sheet is [0, {width:.3f}]")
        return self

    def polyline(self) -> np.ndarray:
        if self.closed:
            return np.vstack([self.points, self.points[:1]])
        return self.points


def load_contour(path: str | Path, width: float | None = None) -> Contour:
    """Read a contour file.

    Files with ``"frame": "normalized"`` store points in the unit square and are
    scaled by ``width``; otherwise points are taken as sheet units.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
        points = data["points"]
        name = str(data.get("name", path.stem))
        closed = bool(data.get("closed", False))
        frame = data.get("frame", "sheet")
        expected = data.get("expected_segments")
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ShapeParseError(f"{path}: {exc}") from exc
    if frame not in ("sheet", "normalized"):
        raise ShapeParseError(f"{path}: unknown frame {frame!r}")
    try:
        contour = Contour(np.asarray(points, dtype=float), closed, name, expected)
    except (ValueError, TypeError) as exc:
        raise ShapeParseError(f"{path}: {exc}") from exc
    if frame == "normalized":
        if width is None:
            raise ShapeParseError(f"{path}: normalized contour needs a sheet width")
        contour = contour.scaled(width)
    return contour


def save_contour(contour: Contour, path: str | Path, frame: str = "sheet") -> None:
    data = {
        "name": contour.name,
        "closed": contour.closed,
        "frame": frame,
        "points": [[float(x), float(y)] for x, y in contour.points],
    }
    if contour.expected_segments is not None:
        data["expected_segments"] = contour.expected_segments
    Path(path).write_text(json.dumps(data, indent=1) + "\n")


def shape_files(spec: str | Path) -> list[Path]:
    """Expand a file or directory argument into sorted contour files."""
    p = Path(spec)
    if p.is_dir():
        return sorted(p.glob("*.json"))
    if not p.exists() and (SHAPES_DIR / f"{spec}.json").exists():
        return [SHAPES_DIR / f"{spec}.json"]
    return [p]


@dataclass
class Segment:
    indices: tuple[int, ...]
    points: np.ndarray  # cut path, including the bridge to the next segment's notch
    segment_id: int

    @property
    def notch_point(self) -> np.ndarray:
        return self.points[0]


def _derivative_signs(values: np.ndarray, closed: bool) -> np.ndarray:
    k = len(values)
    if closed:
        d = (np.roll(values, -1) - np.roll(values, 1)) / 2.0
    else:
        d = np.empty(k)
        d[1:-1] = (values[2:] - values[:-2]) / 2.0
        d[0] = values[1] - values[0]
        d[-1] = values[-1] - values[-2]
    span = float(np.ptp(values)) or 1.0
    signs = np.sign(d).astype(int)
    signs[np.abs(d) <= 1e-12 * span] = 0
    # zeros inherit the previous nonzero sign
    nonzero = np.flatnonzero(signs)
    if len(nonzero) == 0:
        return np.ones(k, dtype=int)
    start = nonzero[-1] if closed else nonzero[0]
    current = signs[start]
    order = range(k) if not closed else (np.arange(k) + start) % k
    for i in order:
        if signs[i] == 0:
            signs[i] = current
        else:
            current = signs[i]
    return signs


def segment_contour(contour: Contour, axis: str = "y") -> list[Segment]:
    """Split a contour wherever the sign of its directional derivative flips.

    ``axis="y"`` splits at y-extrema (local minima/maxima of y along the
    contour); ``axis="x"`` splits at x-extrema; ``"xy"`` at either.
    Runs of a single point are merged into their predecessor.
    """
    pts = contour.points
    k = len(pts)
    if k < 2:
        raise DegenerateContourError("need at least 2 points")
    sign_sets = []
    if "y" in axis:
        sign_sets.append(_derivative_signs(pts[:, 1], contour.closed))
    if "x" in axis:
        sign_sets.append(_derivative_signs(pts[:, 0], contour.closed))
    if not sign_sets:
        raise ValueError(f"axis must contain 'x' or 'y', got {axis!r}")

    def changes(i):
        return any(s[i] != s[i - 1] for s in sign_sets)

    if contour.closed:
        starts = [i for i in range(k) if changes(i)]  # i - 1 wraps to k - 1
        if not starts:
            starts = [0]
        runs = []
        for j, s in enumerate(starts):
            e = starts[(j + 1) % len(starts)]
            length = (e - s) % k or k
            runs.append([(s + m) % k for m in range(length)])
    else:
        starts = [0] + [i for i in range(1, k) if changes(i)]
        runs = [list(range(s, e)) for s, e in zip(starts, starts[1:] + [k])]

    merged: list[list[int]] = []
    for run in runs:
        if len(run) < 2 and merged:
            merged[-1].extend(run)
        else:
            merged.append(list(run))
    if len(merged) > 1 and len(merged[0]) < 2:
        first = merged.pop(0)
        if contour.closed:
            merged[-1].extend(first)
        else:
            merged[0][:0] = first

    segments = []
    for sid, run in enumerate(merged):
        path = pts[run]
        nxt = None
        if sid + 1 < len(merged):
            nxt = merged[sid + 1][0]
        elif contour.closed:
            nxt = merged[0][0]
        if nxt is not None:
            path = np.vstack([path, pts[nxt]])
        segments.append(Segment(tuple(run), path, sid))
    return segments


def rasterize_to_vertices(points, resolution: int, spacing: float,
                          closed: bool = False) -> list[GridIndex]:
    """Nearest-vertex sequence along a polyline.

    Edges are supersampled at a quarter spacing, so consecutive vertices are
    4- or 8-adjacent. Repeats are dropped (first occurrence wins).
    """
    if isinstance(points, Contour):
        closed = points.closed
        points = points.points
    if isinstance(points, Segment):
        points = points.points
    pts = np.asarray(points, dtype=float)
    if closed:
        pts = np.vstack([pts, pts[:1]])
    width = (resolution - 1) * spacing
    if pts.min() < -1e-9 or pts.max() > width + 1e-9:
        raise OutOfBoundsError(f"polyline leaves the sheet [0, {width}]")
    samples = [pts[:1]]
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(1, int(np.ceil(np.linalg.norm(b - a) / (spacing / 4.0))))
        t = np.arange(1, n + 1)[:, None] / n
        samples.append(a + (b - a) * t)
    s = np.vstack(samples)
    cols = np.clip(np.rint(s[:, 0] / spacing).astype(int), 0, resolution - 1)
    rows = np.clip(np.rint(s[:, 1] / spacing).astype(int), 0, resolution - 1)
    out: list[GridIndex] = []
    seen: set[GridIndex] = set()
    for r, c in zip(rows.tolist(), cols.tolist()):
        if (r, c) not in seen:
            seen.add((r, c))
            out.append((r, c))
    return out


@dataclass
class CutSchedule:
    entries: list[tuple[int, GridIndex]]
    steps_per_cut: int = 3
    order: tuple[int, ...] = ()
    contour_vertices: list[GridIndex] = field(default_factory=list)
    closed: bool = False

    def __len__(self):
        return len(self.entries)

    @property
    def vertices(self) -> list[GridIndex]:
        return [v for _, v in self.entries]

    def restricted(self, segment_ids) -> "CutSchedule":
        keep = set(segment_ids)
        entries = [e for e in self.entries if e[0] in keep]
        verts = {v for _, v in entries}
        return CutSchedule(entries, self.steps_per_cut,
                           tuple(s for s in self.order if s in keep),
                           [v for v in self.contour_vertices if v in verts], False)

    def segment_counts(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for sid, _ in self.entries:
            counts[sid] = counts.get(sid, 0) + 1
        return counts


def build_schedule(segments: list[Segment], order, resolution: int, spacing: float,
                   steps_per_cut: int = 3, closed: bool = False) -> CutSchedule:
    """Concatenate per-segment vertex runs in ``order``; each run starts at its notch."""
    order = tuple(int(o) for o in order)
    ids = sorted(s.segment_id for s in segments)
    if sorted(order) != ids:
        raise InvalidPermutationError(f"order {order} is not a permutation of {ids}")
    if steps_per_cut < 1:
        raise ValueError("steps_per_cut must be >= 1")
    by_id = {s.segment_id: s for s in segments}
    raster = {sid: rasterize_to_vertices(by_id[sid].points, resolution, spacing) for sid in ids}
    entries: list[tuple[int, GridIndex]] = []
    seen: set[GridIndex] = set()
    for sid in order:
        for v in raster[sid]:
            if v not in seen:
                seen.add(v)
                entries.append((sid, v))
    contour_vertices = list(dict.fromkeys(itertools.chain.from_iterable(raster[s] for s in ids)))
    return CutSchedule(entries, steps_per_cut, order, contour_vertices, closed)


def schedule_for(contour: Contour, resolution: int, spacing: float, order=None,
                 steps_per_cut: int = 3, axis: str = "y"):
    segments = segment_contour(contour, axis)
    if order is None:
        order = range(len(segments))
    return segments, build_schedule(segments, order, resolution, spacing, steps_per_cut,
                                    contour.closed)
