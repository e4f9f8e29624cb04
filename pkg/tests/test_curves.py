import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from axialym.curves import (Curve, Lasso, concat, constant_curve, curve_from_json, is_simple_loop, lasso_from_json,
                            make_polyline, polygon_lasso, polyline_from_points, rectangle_lasso, refine_knots,
                            reverse, rotation_count, segments_intersect, shoelace_area, uniform_grid)
from axialym.ecal import SteppedTimeFn, apply_Ec
from axialym.spectral import TorusGrid

SQUARE = [(1.0, 1.0), (2.0, 1.0), (2.0, 2.0), (1.0, 2.0), (1.0, 1.0)]


def test_curve_validation():
    with pytest.raises(ValueError):
        Curve(np.array([0.0, 0.5]), np.array([[1.0, 0.0], [2.0, 0.0]]))
    with pytest.raises(ValueError):
        Curve(np.array([0.0, 0.6, 0.6, 1.0]), np.ones((4, 2)))
    with pytest.raises(ValueError):
        polyline_from_points([(0.0, 1.0), (1.0, 1.0)])
    with pytest.raises(ValueError):
        Curve(np.array([0.0, 1.0]), np.ones((3, 2)))


def test_evaluation_and_velocity():
    c = make_polyline([[0, 1, 0], [0.25, 2, 0], [1, 2, 3]])
    np.testing.assert_allclose(c(0.125), [1.5, 0.0])
    np.testing.assert_allclose(c(0.25), [2.0, 0.0])
    np.testing.assert_allclose(c(2.0), [2.0, 3.0])
    np.testing.assert_allclose(c.velocity(np.array([0.1, 0.25, 0.9])), [[4, 0], [0, 4], [0, 4]])
    np.testing.assert_allclose(c.velocity(1.0), [0.0, 0.0])
    assert c.length() == pytest.approx(4.0)


def test_arc_length_knots():
    c = polyline_from_points([(1, 0), (2, 0), (2, 3)])
    np.testing.assert_allclose(c.knots, [0, 0.25, 1])


def test_reverse_and_concat():
    c = polyline_from_points([(1, 0), (2, 0), (2, 1)])
    r = reverse(c)
    t = np.linspace(0, 1, 17)
    np.testing.assert_allclose(r(t), c(1 - t))
    d = concat(r, c)
    assert d.is_closed()
    np.testing.assert_allclose(d(0.5), c.end)
    np.testing.assert_allclose(d(0.25), c(0.5))
    with pytest.raises(ValueError):
        concat(c, c)


def test_json_roundtrip():
    c = polyline_from_points(SQUARE, "sq")
    d = curve_from_json(c.to_json())
    np.testing.assert_array_equal(c.knots, d.knots)
    np.testing.assert_array_equal(c.points, d.points)


def test_shoelace_and_simple_loop():
    assert shoelace_area(SQUARE) == pytest.approx(1.0)
    assert shoelace_area(SQUARE[::-1]) == pytest.approx(-1.0)
    assert is_simple_loop(polyline_from_points(SQUARE))
    bow = [(1, 1), (2, 2), (2, 1), (1, 2), (1, 1)]
    assert not is_simple_loop(polyline_from_points(bow))
    assert not is_simple_loop(polyline_from_points([(1, 1), (2, 1)]))
    assert segments_intersect(np.array([0, 0]), np.array([1, 1]), np.array([0, 1]), np.array([1, 0]))
    assert not segments_intersect(np.array([0, 0]), np.array([1, 0]), np.array([0, 1]), np.array([1, 1]))


def test_lasso_construction():
    las = rectangle_lasso((1.0, 1.0), 1.0, 2.0, stem_from=(0.5, 0.5))
    assert las.area == pytest.approx(2.0)
    np.testing.assert_allclose(las.base, [0.5, 0.5])
    comp = las.composite()
    assert comp.is_closed()
    np.testing.assert_allclose(comp(0.0), [0.5, 0.5])
    np.testing.assert_allclose(comp(0.5), [1.0, 1.0])
    again = lasso_from_json(las.to_json())
    np.testing.assert_allclose(again.composite()(np.linspace(0, 1, 9)), comp(np.linspace(0, 1, 9)))
    with pytest.raises(ValueError):
        polygon_lasso([(1, 1), (1, 2), (2, 2), (2, 1)])  # clockwise
    with pytest.raises(ValueError):
        rectangle_lasso((1.0, 1.0), 0.0, 1.0)
    with pytest.raises(ValueError):
        Lasso(polyline_from_points(SQUARE), polyline_from_points([(3.0, 3.0), (4.0, 4.0)]))


def brute_rotation(c: Curve, grid: TorusGrid) -> int:
    """max |E_c 1_[s,t]| over s < t on the knot grid, by rasterisation."""
    ts = np.unique(np.concatenate([c.knots, 0.5 * (c.knots[1:] + c.knots[:-1])]))
    best = 0.0
    for a in range(ts.size):
        for b in range(a + 1, ts.size):
            f = apply_Ec(c, SteppedTimeFn.indicator(ts[a], ts[b]), grid)
            best = max(best, float(np.max(np.abs(f))))
    return int(round(best))


CURVES = {
    "square": (SQUARE, 1),
    "double_square": (SQUARE + SQUARE[1:], 2),
    "segment": ([(1.05, 1.05), (2.05, 3.05)], 1),
    "horizontal": ([(1.05, 1.05), (3.05, 1.05)], 0),
    "zigzag": ([(1.05, 0.55), (2.05, 2.55), (1.55, 0.8), (2.55, 3.05)], 1),
    "figure_eight": ([(1.3, 1.3), (2.3, 2.3), (2.3, 1.3), (1.3, 2.3), (1.3, 1.3)], 1),
}


@pytest.mark.parametrize("name", sorted(CURVES))
def test_rotation_count_against_rasterisation(name):
    pts, frozen = CURVES[name]
    c = polyline_from_points(pts)
    grid = TorusGrid(4.0, 64)
    # off-grid shift so no crossing sits exactly on a node
    assert rotation_count(c) == frozen
    assert brute_rotation(c, grid) == frozen


def test_rotation_of_constant_curve():
    assert rotation_count(constant_curve((1.0, 1.0))) == 0


@given(st.integers(1, 400))
def test_refine_knots_contains_knots(n):
    c = polyline_from_points([(1, 0), (2, 0), (2, 3), (1.5, 3.5)])
    t = refine_knots(c, n)
    assert t[0] == 0.0 and t[-1] == 1.0
    assert np.all(np.diff(t) > 0)
    assert t.size - 1 >= n
    assert np.all(np.isin(c.knots, t))


def test_uniform_grid():
    np.testing.assert_array_equal(uniform_grid(4), [0, 0.25, 0.5, 0.75, 1])
