import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gauzecut.contour import (
    SHAPES_DIR,
    Contour,
    build_schedule,
    load_contour,
    rasterize_to_vertices,
    save_contour,
    schedule_for,
    segment_contour,
    shape_files,
)
from gauzecut.errors import (
    DegenerateContourError,
    InvalidPermutationError,
    OutOfBoundsError,
    ShapeParseError,
)


def sign_change_count(values, closed):
    """Independent count of y-derivative sign changes (central differences)."""
    v = np.asarray(values)
    if closed:
        d = np.roll(v, -1) - np.roll(v, 1)
        s = np.sign(d)
        s = s[s != 0]
        return int(np.sum(s != np.roll(s, 1)))
    d = np.empty(len(v))
    d[1:-1] = v[2:] - v[:-2]
    d[0], d[-1] = v[1] - v[0], v[-1] - v[-2]
    s = np.sign(d)
    s = s[s != 0]  # a flat step is not a reversal
    return int(np.sum(s[1:] != s[:-1]))


def test_diagonal_line_single_segment():
    c = Contour(np.c_[np.linspace(1, 10, 20), np.linspace(2, 12, 20)], False)
    segs = segment_contour(c)
    assert len(segs) == 1 and segs[0].indices == tuple(range(20))


def test_circle_64_two_segments_at_extrema():
    th = 2 * np.pi * np.arange(64) / 64 + 0.01
    pts = np.c_[10 + 5 * np.cos(th), 10 + 5 * np.sin(th)]
    segs = segment_contour(Contour(pts, True))
    assert len(segs) == sign_change_count(pts[:, 1], True) == 2
    y = pts[:, 1]
    starts = sorted(s.indices[0] for s in segs)
    # each segment begins right at a y-extremum
    assert {int(np.argmax(y)), int(np.argmin(y))} == {(i - 1) % 64 for i in starts} or \
        {int(np.argmax(y)), int(np.argmin(y))} == set(starts)


def test_w_polyline_four_segments():
    pts = np.array([[1, 9], [3, 2], [5, 8], [7, 2], [9, 9]], float)
    fine = np.vstack([np.linspace(a, b, 8, endpoint=False) for a, b in zip(pts[:-1], pts[1:])] + [pts[-1:]])
    segs = segment_contour(Contour(fine, False))
    assert len(segs) == sign_change_count(fine[:, 1], False) + 1 == 4


def test_partition_and_bridge():
    c = load_contour(SHAPES_DIR / "w.json", 24.0)
    segs = segment_contour(c)
    joined = [i for s in segs for i in s.indices]
    assert joined == list(range(len(c)))
    for a, b in zip(segs, segs[1:]):
        assert np.array_equal(a.points[-1], b.notch_point)
        assert np.array_equal(b.notch_point, c.points[b.indices[0]])
    assert all(len(s.indices) >= 2 for s in segs)


def test_closed_partition_is_rotation():
    c = load_contour(SHAPES_DIR / "circle.json", 24.0)
    joined = [i for s in segment_contour(c) for i in s.indices]
    k = joined[0]
    assert joined == [(k + m) % len(c) for m in range(len(c))]


def test_segment_idempotence():
    c = load_contour(SHAPES_DIR / "wave.json", 24.0)
    for s in segment_contour(c):
        sub = Contour(c.points[list(s.indices)], False)
        assert len(segment_contour(sub)) == 1


@pytest.mark.parametrize("path", shape_files(SHAPES_DIR), ids=lambda p: p.stem)
def test_corpus_expected_segments(path):
    c = load_contour(path, 24.0)
    assert c.expected_segments == len(segment_contour(c))


def test_degenerate_contour():
    with pytest.raises(DegenerateContourError):
        Contour(np.array([[1.0, 1.0]]), False)


def test_axis_x_option():
    c = load_contour(SHAPES_DIR / "circle.json", 24.0)
    assert len(segment_contour(c, "x")) == 2
    assert len(segment_contour(c, "xy")) == 4
    with pytest.raises(ValueError):
        segment_contour(c, "z")


def test_rasterize_horizontal_row():
    v = rasterize_to_vertices(np.array([[0.0, 10.0], [24.0, 10.0]]), 25, 1.0)
    assert v == [(10, c) for c in range(25)]


def test_rasterize_short_polyline():
    assert rasterize_to_vertices(np.array([[3.1, 3.0], [3.3, 3.2]]), 25, 1.0) == [(3, 3)]


def test_rasterize_out_of_bounds():
    with pytest.raises(OutOfBoundsError):
        rasterize_to_vertices(np.array([[0.0, 0.0], [30.0, 1.0]]), 25, 1.0)


def adjacent(a, b):
    return max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1


def test_quarter_circle_adjacency():
    th = np.linspace(0, np.pi / 2, 50)
    v = rasterize_to_vertices(np.c_[12 + 8 * np.cos(th), 12 + 8 * np.sin(th)], 25, 1.0)
    assert all(adjacent(a, b) for a, b in zip(v, v[1:]))


@given(st.lists(st.tuples(st.floats(0, 20), st.floats(0, 20)), min_size=2, max_size=8),
       st.sampled_from([0.5, 1.0]))
def test_rasterize_properties(pts, spacing):
    pts = np.array(pts)
    n = int(20 / spacing) + 1
    v = rasterize_to_vertices(pts, n, spacing)
    assert len(v) == len(set(v))
    # every contour point is within one grid diagonal of a returned vertex
    grid = np.array([(c * spacing, r * spacing) for r, c in v])
    for p in pts:
        assert np.min(np.hypot(*(grid - p).T)) <= np.sqrt(2) * spacing + 1e-9


def test_schedule_single_segment_identity():
    c = load_contour(SHAPES_DIR / "line.json", 24.0)
    segs = segment_contour(c)
    sched = build_schedule(segs, [0], 25, 1.0)
    assert sched.vertices == rasterize_to_vertices(segs[0].points, 25, 1.0)
    assert sched.steps_per_cut == 3


def test_schedule_order_and_count():
    c = load_contour(SHAPES_DIR / "v.json", 24.0)
    segs = segment_contour(c)
    sched = build_schedule(segs, [1, 0], 25, 1.0)
    ids = [sid for sid, _ in sched.entries]
    assert ids == sorted(ids, reverse=True)
    r0 = rasterize_to_vertices(segs[0].points, 25, 1.0)
    r1 = rasterize_to_vertices(segs[1].points, 25, 1.0)
    shared = len(set(r0) & set(r1))
    assert len(sched) == len(r0) + len(r1) - shared
    assert sched.vertices[0] == r1[0]  # starts at the notch of segment 1
    assert len(set(sched.vertices)) == len(sched)


def test_invalid_permutation():
    segs = segment_contour(load_contour(SHAPES_DIR / "v.json", 24.0))
    for bad in ([0], [0, 0], [0, 2]):
        with pytest.raises(InvalidPermutationError):
            build_schedule(segs, bad, 25, 1.0)


def test_restricted_schedule():
    c = load_contour(SHAPES_DIR / "wave.json", 24.0)
    _, sched = schedule_for(c, 25, 1.0)
    sub = sched.restricted([1])
    assert all(sid == 1 for sid, _ in sub.entries)
    assert sched.segment_counts()[1] == len(sub)


def test_contour_validation_and_io(tmp_path):
    with pytest.raises(ValueError):
        Contour(np.array([[1.0, 1.0], [1.0, 1.0], [2.0, 2.0]]), False)
    with pytest.raises(OutOfBoundsError):
        Contour(np.array([[1.0, 1.0], [30.0, 2.0]]), False).check_bounds(24.0)
    c = load_contour(SHAPES_DIR / "s_curve.json", 24.0)
    save_contour(c, tmp_path / "s.json")
    again = load_contour(tmp_path / "s.json")
    assert np.array_equal(again.points, c.points) and again.name == c.name
    (tmp_path / "bad.json").write_text(json.dumps({"points": "nope"}))
    with pytest.raises(ShapeParseError):
        load_contour(tmp_path / "bad.json")
    (tmp_path / "norm.json").write_text(json.dumps({"frame": "normalized", "points": [[0, 0], [1, 1]]}))
    with pytest.raises(ShapeParseError):
        load_contour(tmp_path / "norm.json")
