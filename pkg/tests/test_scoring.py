import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gauzecut.errors import EmptyRegionError, ZeroBaselineError
from gauzecut.scoring import (
    CutRecord,
    CutScore,
    Region,
    ScoringGrid,
    improvement_over_baseline,
    region_mask,
    symmetric_difference,
)
from oracles import brute_force_sd


regions = st.builds(
    lambda pts, closed: Region(np.array(pts), closed),
    st.lists(st.tuples(st.floats(0, 10), st.floats(0, 10)), min_size=3, max_size=7),
    st.booleans(),
)


def square(x0, y0, w, h):
    return Region(np.array([[x0, y0], [x0 + w, y0], [x0 + w, y0 + h], [x0, y0 + h]]), True)


def test_identity_zero():
    r = square(2, 2, 5, 5)
    assert symmetric_difference(r, r, ScoringGrid(20, 0.5)) == 0


def test_square_vs_rectangle():
    grid = ScoringGrid(50, 1.0)
    a, b = square(5, 5, 10, 10), square(5, 5, 10, 12)
    assert symmetric_difference(a, b, grid) == brute_force_sd(a, b, grid) == 20


def test_disjoint_squares():
    grid = ScoringGrid(20, 1.0)
    a, b = square(1, 1, 3, 3), square(10, 10, 3, 3)
    assert symmetric_difference(a, b, grid) == 2 * 9


def test_empty_regions():
    grid = ScoringGrid(10, 1.0)
    tiny = square(20, 20, 1, 1)
    with pytest.raises(EmptyRegionError):
        symmetric_difference(tiny, tiny, grid)


@given(regions, regions, st.integers(4, 20))
def test_oracle_equivalence(a, b, cells):
    grid = ScoringGrid(cells, 10.0 / cells)
    try:
        got = symmetric_difference(a, b, grid)
    except EmptyRegionError:
        assert brute_force_sd(a, b, grid) == 0
        return
    assert got == brute_force_sd(a, b, grid)


@given(regions, regions, regions)
def test_symmetry_and_triangle(a, b, c):
    grid = ScoringGrid(12, 10.0 / 12)
    ma, mb, mc = (region_mask(r, grid) for r in (a, b, c))

    def d(x, y):
        return int(np.count_nonzero(x ^ y))

    assert d(ma, mb) == d(mb, ma)
    assert d(ma, mc) <= d(ma, mb) + d(mb, mc)
    if ma.any() or mb.any():
        assert symmetric_difference(a, b, grid) == symmetric_difference(b, a, grid)


def test_grid_for_sheet():
    g = ScoringGrid.for_sheet(25, 1.0)
    assert g.cells == 50 and g.cell_size == pytest.approx(24 / 50)


def test_improvement_values():
    assert improvement_over_baseline(49.4, 100) == pytest.approx(50.6)
    assert improvement_over_baseline(56.7, 100) == pytest.approx(43.3)
    assert improvement_over_baseline(80, 80) == 0.0
    assert improvement_over_baseline(120, 100) == pytest.approx(-20.0)
    with pytest.raises(ZeroBaselineError):
        improvement_over_baseline(1, 0)
    assert CutScore.against(30, 60).improvement_pct == pytest.approx(50.0)


def test_cut_record_perfect_and_shifted():
    verts = [(5, c) for c in range(2, 12)]
    exact = [(c * 1.0, 5.0, 0.0) for _, c in verts]
    assert CutRecord(verts, exact, 15, 1.0).score() == 0
    shifted = [(x, y + 2.0, z) for x, y, z in exact]
    assert CutRecord(verts, shifted, 15, 1.0).score() > 0
    with pytest.raises(ValueError):
        CutRecord(verts, exact[:-1], 15, 1.0)
    with pytest.raises(ValueError):
        CutRecord(verts[:1], [(np.nan, 0, 0)], 15, 1.0)
