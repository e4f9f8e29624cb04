import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from axialym.roughpath import (Level2Increment, Level2Path, cc_dist, cc_norm, chen_defect, dilate, holder_dist,
                               inverse, lift_matrix_path, segment_signature, sig_polyline, sym_defect, tensor_mul)

vec = arrays(np.float64, 3, elements=st.floats(-5, 5))
mat = arrays(np.float64, (3, 3), elements=st.floats(-5, 5))


def inc(x, xx):
    return Level2Increment(x, xx)


@given(vec, mat, vec, mat, vec, mat)
def test_tensor_product_is_associative(a, A, b, B, c, C):
    x, y, z = inc(a, A), inc(b, B), inc(c, C)
    l, r = (x @ y) @ z, x @ (y @ z)
    np.testing.assert_allclose(l.x, r.x, atol=1e-12)
    np.testing.assert_allclose(l.xx, r.xx, atol=1e-10)


@given(vec, mat)
def test_inverse_both_sides(a, A):
    g = inc(a, A)
    for h in (g @ g.inverse(), g.inverse() @ g):
        np.testing.assert_allclose(h.x, 0, atol=1e-12)
        np.testing.assert_allclose(h.xx, 0, atol=1e-10)


def test_identity_element():
    g = inc(np.array([1.0, 2.0]), np.array([[0.5, 1.0], [3.0, 2.0]]))
    e = Level2Increment.identity(2)
    for h in (g @ e, e @ g):
        np.testing.assert_array_equal(h.x, g.x)
        np.testing.assert_array_equal(h.xx, g.xx)


def test_shape_validation():
    with pytest.raises(ValueError):
        Level2Increment(np.zeros(2), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        tensor_mul(Level2Increment.identity(2), Level2Increment.identity(3))


def test_segment_signature_frozen():
    g = segment_signature([1.0, -2.0])
    np.testing.assert_array_equal(g.xx, [[0.5, -1.0], [-1.0, 2.0]])
    # a square traversed anticlockwise has Levy area = its area
    sq = segment_signature([1, 0]) @ segment_signature([0, 1]) @ segment_signature([-1, 0]) @ segment_signature([0, -1])
    np.testing.assert_allclose(sq.x, 0, atol=1e-15)
    np.testing.assert_allclose(0.5 * (sq.xx - sq.xx.T), [[0, 1], [-1, 0]], atol=1e-15)


def test_sig_polyline_matches_iterated_integrals_of_smooth_path():
    # x(t) = (cos t, sin t) on [0, pi / 2]: X^{12} = int x1 dx2 -  x1(0) dx2 ...
    t = np.linspace(0, np.pi / 2, 4001)
    pts = np.column_stack([np.cos(t), np.sin(t)])
    P = sig_polyline(t, pts)
    xx = P.xx[-1]
    # int_0^T (x1(u) - x1(0)) dx2(u) = int (cos u - 1) cos u du = pi/4 - 1
    assert xx[0, 1] == pytest.approx(np.pi / 4 - 1, abs=1e-6)
    # int (x2 - x2(0)) dx1 = -int sin^2 = -pi/4
    assert xx[1, 0] == pytest.approx(-np.pi / 4, abs=1e-6)


def test_chen_and_symmetric_part_on_random_path():
    rng = np.random.default_rng(3)
    P = sig_polyline(np.linspace(0, 1, 31), np.cumsum(rng.standard_normal((31, 3)), axis=0))
    assert chen_defect(P) <= 1e-12
    assert sym_defect(P) <= 1e-12


def test_increment_of_batched_path():
    rng = np.random.default_rng(4)
    pts = rng.standard_normal((2, 9, 3))
    P = sig_polyline(np.arange(9.0), pts)
    one = sig_polyline(np.arange(9.0), pts[1])
    g, h = P.increment(2, 7), one.increment(2, 7)
    np.testing.assert_allclose(g.xx[1], h.xx)


def test_cc_norm_homogeneity_and_dist():
    rng = np.random.default_rng(5)
    g = inc(rng.standard_normal(3), rng.standard_normal((3, 3)))
    assert cc_norm(dilate(g, 3.0)) == pytest.approx(3.0 * cc_norm(g))
    assert cc_dist(g, g) == pytest.approx(0.0, abs=1e-7)
    h = inc(rng.standard_normal(3), rng.standard_normal((3, 3)))
    assert cc_dist(g, h) == pytest.approx(cc_dist(h, g))
    assert cc_norm(Level2Increment.identity(3)) == 0.0


def test_holder_dist_of_linear_path():
    # straight line x(t) = t v: |x_{s,t}| + |v v^T / 2|^{1/2} (t - s) -> ratio independent of (s, t) at alpha = 1
    v = np.array([3.0, 4.0])
    t = np.linspace(0, 1, 11)
    P = sig_polyline(t, t[:, None] * v)
    expect = 5.0 + np.sqrt(0.5 * 25.0)
    assert holder_dist(1.0, P) == pytest.approx(expect)
    assert holder_dist(0.5, P, P) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        holder_dist(0.5, P, sig_polyline(t * 2, t[:, None] * v))


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(6)
    P = sig_polyline(np.linspace(0, 1, 6), rng.standard_normal((6, 2)))
    P.to_csv(tmp_path / "p.csv")
    Q = Level2Path.from_csv(tmp_path / "p.csv")
    np.testing.assert_array_equal(P.x, Q.x)
    np.testing.assert_array_equal(P.xx, Q.xx)


def test_matrix_path_lift_is_geometric():
    from axialym.liealg import exp_coeffs
    c = np.array([0.3, 0.2, -0.5])
    t = np.linspace(0, 1, 21)
    U = exp_coeffs(t[:, None] * c, 2)
    P = lift_matrix_path(t, U)
    assert P.dim == 8
    assert sym_defect(P) <= 1e-12


def test_path_validation():
    with pytest.raises(ValueError):
        sig_polyline([0.0], np.zeros((1, 2)))
    with pytest.raises(ValueError):
        Level2Path(np.array([0.0, 0.0]), np.zeros((2, 2)), np.zeros((2, 2, 2)))
