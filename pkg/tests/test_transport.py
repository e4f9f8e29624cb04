import numpy as np
import pytest

from axialym import liealg
from axialym.curves import concat, constant_curve, make_polyline, polyline_from_points, rectangle_lasso, reverse
from axialym.roughpath import lift_smoothed
from axialym.spectral import NoiseSample, TorusGrid, sample_noise
from axialym.transport import (AreaProcess, SmoothedConnection, TransportPath, holonomy, lie_bm_final_batch,
                               lie_bm_oracle, line_integral_A, parallel_transport, transport_cauchy)

J = 2
CURVE = polyline_from_points([(1.1, 0.8), (2.4, 1.5), (1.6, 2.6), (2.9, 3.1)], "c")


@pytest.fixture(scope="module")
def grid():
    return TorusGrid(4.0, 64)


@pytest.fixture(scope="module")
def W(grid):
    return sample_noise(314, grid, 2)


def fine_grid(c, n=2**13, extra=()):
    return np.unique(np.concatenate([np.linspace(0, 1, n + 1), c.knots, np.asarray(extra, float)]))


def zero_noise(grid, n=2):
    return NoiseSample(0, grid, n, np.zeros_like(sample_noise(0, grid, n).values))


def dist(a, b):
    return float(np.max(np.abs(a - b)))


# -- the connection ----------------------------------------------------------------


def test_horizontal_motion_is_invisible(W):
    flat = polyline_from_points([(0.5, 1.0), (3.0, 1.0)])
    np.testing.assert_array_equal(line_integral_A(W, J, flat, np.linspace(0, 0.99, 7)), 0.0)


def test_zero_field_gives_zero_connection(grid):
    np.testing.assert_array_equal(line_integral_A(zero_noise(grid), J, CURVE, [0.1, 0.5]), 0.0)


def test_scalar_time_returns_one_element(W):
    assert line_integral_A(W, J, CURVE, 0.3).shape == (3,)


def test_point_outside_window_rejected(W):
    far = polyline_from_points([(1.0, 1.0), (1.0, 5.0)])
    with pytest.raises(ValueError):
        line_integral_A(W, J, far, [0.9])


def test_row_integral_matches_field_quadrature(W):
    conn = SmoothedConnection.from_noise(W, J)
    s = np.linspace(0.0, 1.7, 4001)
    vals = conn.field_value(np.column_stack([s, np.full_like(s, 2.3)]))
    quad = np.trapezoid(vals, s, axis=0)
    np.testing.assert_allclose(conn.row_integral(1.7, 2.3)[0], quad, atol=1e-6)


def test_connection_integrates_to_first_level(W):
    # Gauss-Legendre per segment: A(c'(t)) is smooth between knots
    u, wq = np.polynomial.legendre.leggauss(80)
    total = np.zeros(3)
    for t0, t1, _, _ in CURVE.segments():
        t = 0.5 * (t1 - t0) * (u + 1) + t0
        total += 0.5 * (t1 - t0) * wq @ line_integral_A(W, J, CURVE, t)
    lift = lift_smoothed(CURVE, W, J, np.array([0.0, 1.0]))
    x1 = lift.x[-1]
    assert np.max(np.abs(total - x1)) <= 1e-6 * np.max(np.abs(x1))


# -- transport ---------------------------------------------------------------------


def test_zero_field_transport_is_identity(grid):
    p = parallel_transport(CURVE, zero_noise(grid), J, fine_grid(CURVE, 256))
    np.testing.assert_array_equal(p.U, np.broadcast_to(np.eye(2), p.U.shape))


def test_transport_starts_at_identity_and_stays_unitary(W):
    p = parallel_transport(CURVE, W, J)
    np.testing.assert_array_equal(p.U[0], np.eye(2))
    assert p.unitarity_drift() <= 1e-10
    assert liealg.det_defect(p.U) <= 1e-10
    assert p.meta["last_change"] <= 1e-8


@pytest.mark.parametrize("n", [2, 3])
def test_abelian_field_has_closed_form(grid, n):
    vals = np.zeros_like(sample_noise(7, grid, n).values)
    vals[0] = sample_noise(7, grid, n).values[0]
    Wa = NoiseSample(7, grid, n, vals)
    U = parallel_transport(CURVE, Wa, J, tol=1e-10).final.entries
    x = lift_smoothed(CURVE, Wa, J, np.array([0.0, 1.0])).x[-1]
    assert dist(U, liealg.exp_coeffs(x, n)) <= 1e-8


def test_reversal_gives_inverse(W):
    U = parallel_transport(CURVE, W, J).final.entries
    V = parallel_transport(reverse(CURVE), W, J).final.entries
    assert dist(V, liealg.dagger(U)) <= 1e-8


def test_solver_is_second_order(W):
    finals = [parallel_transport(CURVE, W, J, fine_grid(CURVE, n)).U[-1] for n in (32, 64, 128, 256, 512)]
    changes = np.array([dist(a, b) for a, b in zip(finals, finals[1:])])
    order = -np.polyfit(np.log2([32, 64, 128, 256]), np.log2(changes), 1)[0]
    assert order >= 1.8


def test_csv_roundtrip(W, tmp_path):
    p = parallel_transport(CURVE, W, J, fine_grid(CURVE, 64))
    p.to_csv(tmp_path / "u.csv")
    q = TransportPath.from_csv(tmp_path / "u.csv")
    np.testing.assert_array_equal(p.t, q.t)
    np.testing.assert_array_equal(p.U, q.U)


# -- holonomies --------------------------------------------------------------------


def test_zero_field_holonomy_is_identity(grid):
    lasso = rectangle_lasso((1.0, 1.0), 0.8, 0.6, stem_from=(0.5, 0.5))
    np.testing.assert_array_equal(holonomy(lasso, zero_noise(grid), J).entries, np.eye(2))


def test_degenerate_lasso_is_identity(W):
    stem = polyline_from_points([(0.4, 0.3), (1.5, 1.1), (2.2, 2.7)])
    there_and_back = concat(reverse(stem), concat(constant_curve(stem.end), stem))
    U = parallel_transport(there_and_back, W, J).final.entries
    assert dist(U, np.eye(2)) <= 1e-8


def test_stacked_rectangles_factorise(W):
    x, e1, e2 = (1.2, 0.9), 1.1, 0.7
    whole = holonomy(rectangle_lasso(x, e1, 2 * e2), W, J, tol=1e-10).entries
    low = holonomy(rectangle_lasso(x, e1, e2), W, J, tol=1e-10).entries
    high = holonomy(rectangle_lasso((x[0], x[1] + e2), e1, e2, stem_from=x), W, J, tol=1e-10).entries
    assert dist(whole, high @ low) <= 1e-6


def test_split_identity_for_convex_region(W):
    # D has bottom (1.5, 0.5), top (1.8, 2.2); left and right boundaries share c2(t)
    bot, top, left, right = (1.5, 0.5), (1.8, 2.2), (1.0, 1.4), (2.5, 1.2)
    level = lambda y: (y - bot[1]) / (top[1] - bot[1])  # noqa: E731
    c1 = make_polyline([(0.0, bot), (level(left[1]), left), (1.0, top)])
    c2 = make_polyline([(0.0, bot), (level(right[1]), right), (1.0, top)])
    taus = np.array([0.2, 0.5, 0.8, 1.0])
    tg = fine_grid(c1, 2**13, np.concatenate([c2.knots, taus]))
    U1 = parallel_transport(c1, W, J, tg)
    U2 = parallel_transport(c2, W, J, tg)
    for tau in taus:
        k = int(np.flatnonzero(tg == tau)[0])
        y = bot[1] + tau * (top[1] - bot[1])
        pts = [bot] + [p for p in [right] if p[1] < y] + [tuple(c2(tau)), tuple(c1(tau))]
        pts += [p for p in [left] if p[1] < y] + [bot]
        loop = polyline_from_points(pts)
        hol = parallel_transport(loop, W, J, tol=1e-10).final.entries
        assert dist(hol, liealg.dagger(U1.U[k]) @ U2.U[k]) <= 1e-6


def test_small_area_limit_is_first_order(W):
    conn = SmoothedConnection.from_noise(W, J)
    x = np.array([1.4, 1.7])
    F = liealg.to_matrix(conn.field_value(x[None])[0], 2)
    eps = np.array([0.2, 0.1, 0.05, 0.025])
    errs = []
    for e in eps:
        U = holonomy(rectangle_lasso(x, e, e), W, J, tol=1e-12).entries
        errs.append(dist((U - np.eye(2)) / e**2, F))
    slope = np.polyfit(np.log(eps), np.log(errs), 1)[0]
    assert 0.8 <= slope <= 1.2
    assert errs[-1] < 0.1 * np.max(np.abs(F))


# -- Cauchy diagnostics ------------------------------------------------------------


def test_cauchy_same_level_is_zero(W):
    out = transport_cauchy(CURVE, W, [J, J], fine_grid(CURVE, 512), holder_nodes=33)
    assert out[(J, J)]["sup_hs"] == 0.0
    assert out[(J, J)]["holder"] == 0.0


def test_cauchy_zero_field(grid):
    out = transport_cauchy(CURVE, zero_noise(grid), [1, 2, 3], fine_grid(CURVE, 512), holder_nodes=33)
    assert all(v["sup_hs"] == 0.0 and v["holder"] == 0.0 for v in out.values())


def test_cauchy_needs_two_levels(W):
    with pytest.raises(ValueError):
        transport_cauchy(CURVE, W, [J], fine_grid(CURVE, 64))


# -- Lie-group Brownian oracle -----------------------------------------------------


def test_oracle_zero_area_is_identity():
    p = lie_bm_oracle(AreaProcess.uniform(0.0, 16), seed=3)
    np.testing.assert_array_equal(p.U, np.broadcast_to(np.eye(2), p.U.shape))


def test_oracle_rejects_decreasing_schedule():
    with pytest.raises(ValueError):
        AreaProcess(np.array([0.0, 0.5, 1.0]), np.array([0.0, 0.6, 0.4]))
    with pytest.raises(ValueError):
        AreaProcess(np.array([0.0, 1.0]), np.array([0.1, 0.4]))


def test_oracle_path_is_unitary_and_reproducible():
    a = lie_bm_oracle(AreaProcess.uniform(1.0, 64), seed=11, n=3)
    b = lie_bm_oracle(AreaProcess.uniform(1.0, 64), seed=11, n=3)
    np.testing.assert_array_equal(a.U, b.U)
    assert a.unitarity_drift() <= 1e-10


def test_oracle_increment_variance_matches_area():
    area = 0.8
    _, B = lie_bm_final_batch(area, 2, 8, range(4000))
    var = B.var(axis=0, ddof=1)
    se = area * np.sqrt(2 / (B.shape[0] - 1))
    assert np.all(np.abs(var - area) <= 3 * se)


def test_oracle_law_is_conjugation_invariant():
    g = liealg.exp_coeffs(np.array([0.7, -1.1, 0.4]), 2)
    U, _ = lie_bm_final_batch(1.0, 2, 32, range(3000))
    V, _ = lie_bm_final_batch(1.0, 2, 32, range(10_000, 13_000))
    V = g @ V @ liealg.dagger(g)
    for f in (lambda M: M[:, 0, 0].real, lambda M: M[:, 0, 1].imag, lambda M: np.trace(M, axis1=1, axis2=2).real):
        a, b = f(U), f(V)
        se = np.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
        assert abs(a.mean() - b.mean()) <= 3 * se


def test_oracle_matches_su2_heat_kernel_mean():
    area = 1.0
    U, _ = lie_bm_final_batch(area, 2, 64, range(4000))
    tr = np.trace(U, axis1=1, axis2=2).real
    se = tr.std(ddof=1) / np.sqrt(tr.size)
    assert abs(tr.mean() - 2 * np.exp(-0.75 * area)) <= 3 * se
