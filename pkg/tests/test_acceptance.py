"""Desk-scale acceptance run: one test per criterion, each records a PASS/FAIL line.

The statistical criteria (6, 7, 9, 10) run the experiments of the shipped
``configs/default.json`` unchanged.
"""
import json
from pathlib import Path

import numpy as np
import pytest
from scipy.linalg import expm

from axialym import liealg
from axialym.cli import main
from axialym.curves import polyline_from_points, rectangle_lasso, reverse, rotation_count
from axialym.ecal import SteppedTimeFn, apply_Ec, ec_spectrum, ehat
from axialym.lab import ExperimentConfig, centered_intervals, loglog_fit, run_experiment
from axialym.roughpath import chen_defect, lift_smoothed, sig_polyline, sym_defect
from axialym.spectral import (SpectralField, TorusGrid, besov_norm, besov_profile, build_partition, chi,
                              rasterize_indicator, sample_noise, sample_noise_batch, smoothed_norm2)
from axialym.transport import SmoothedConnection, holonomy, parallel_transport

pytestmark = pytest.mark.slow

ROOT = Path(__file__).resolve().parents[1]
DEFAULT = json.loads((ROOT / "configs" / "default.json").read_text())


def default_cfg(name):
    entry = next(e for e in DEFAULT["experiments"] if e["experiment"] == name)
    return ExperimentConfig.from_dict(entry, seed=DEFAULT["seed"])


def report_detail(rep):
    parts = []
    for m in rep.metrics:
        if m.name.startswith(("slope", "exponent", "cauchy", "corr", "self", "shape")) or not m.passed:
            parts.append(f"{m.name}={m.estimate:.3g}{'' if m.passed else ' (fail)'}")
    return ", ".join(parts[:12]) + (" ..." if len(parts) > 12 else "")


# 1 -------------------------------------------------------------------------------


def test_c01_algebra_and_group(criterion):
    rng = np.random.default_rng(1)
    worst_basis = max(
        np.max(np.abs(np.real(liealg.hs_inner(liealg.basis(n)[:, None], liealg.basis(n)[None]))
                      - np.eye(liealg.dim_algebra(n))))
        for n in (2, 3, 4))
    worst_exp, worst_scipy = 0.0, 0.0
    for n in (2, 3):
        c = rng.standard_normal((1000, liealg.dim_algebra(n))) * rng.uniform(0.01, 10, (1000, 1))
        U = liealg.exp_coeffs(c, n)
        worst_exp = max(worst_exp, liealg.unitarity_defect(U), liealg.det_defect(U))
        M = liealg.to_matrix(c[:50], n)
        worst_scipy = max(worst_scipy, max(np.max(np.abs(U[k] - expm(M[k]))) for k in range(50)))
    worst_chen, worst_sym = 0.0, 0.0
    for _ in range(1000):
        k = rng.integers(3, 7)
        pts = np.cumsum(rng.standard_normal((k, 3)) * rng.uniform(0.1, 10), axis=0)
        P = sig_polyline(np.sort(rng.uniform(0, 1, k)), pts)
        scale = max(1.0, float(np.max(np.abs(P.xx))))
        worst_chen = max(worst_chen, chen_defect(P) / scale)
        worst_sym = max(worst_sym, sym_defect(P))
    ok = max(worst_basis, worst_exp, worst_chen, worst_sym) <= 1e-10 and worst_scipy <= 1e-10
    criterion(1, ok, f"basis {worst_basis:.1e}, exp {worst_exp:.1e} (vs scipy {worst_scipy:.1e}), "
                     f"chen {worst_chen:.1e}, sym {worst_sym:.1e} on 10^3 instances")
    assert ok


# 2 -------------------------------------------------------------------------------


def test_c02_partition(criterion):
    g = TorusGrid(2.0, 512)
    part = build_partition(g)
    r = g.xi_abs
    bad = 0
    for j in range(0, part.j_max + 1):
        b = part.rho(j)
        bad += int(np.any(b[(r < 2**j * 6 / 7) | (r > 2 ** (j + 1))] != 0))
        bad += int(np.any(b[(r >= 2**j) & (r <= 2 ** (j + 1) * 6 / 7)] != 1))
        bad += int(np.any(b < 0))
    bad += int(np.any(part.rho(-1)[r > 1] != 0))
    total = sum(part.rho(j) for j in range(-1, part.j_max + 1))
    resid = float(np.max(np.abs(total[r <= 2.0**part.j_max] - 1.0)))
    grid_r = np.linspace(0, 2**12, 200_001)
    tele = float(np.max(np.abs(sum(chi(j + 1, grid_r) - chi(j, grid_r) for j in range(0, 12)) + chi(0, grid_r)
                                - chi(12, grid_r))))
    ok = bad == 0 and resid <= 1e-12 and tele <= 1e-12
    criterion(2, ok, f"support/flatness violations {bad}, partition-of-unity residual {resid:.1e} "
                     f"(off-lattice {tele:.1e})")
    assert ok


# 3 -------------------------------------------------------------------------------


def _pairings(grid, spectra, seeds, chunk=500):
    out = []
    w = grid.rep_weight
    for lo in range(0, len(seeds), chunk):
        vals = sample_noise_batch(seeds[lo:lo + chunk], grid)
        out.append(np.real(np.einsum("fm,bdm->bfd", np.conj(spectra) * w, vals)))
    return np.concatenate(out)  # (B, F, dim)


def test_c03_noise_isometry(criterion):
    g = TorusGrid(4.0, 128)
    X1, X2 = g.mesh()
    fields = [
        rasterize_indicator(g, (1.0, 2.0 - 1e-9), (1.0, 2.0 - 1e-9)),
        rasterize_indicator(g, (1.5, 2.5 - 1e-9), (0.5, 1.5 - 1e-9)),
        np.exp(-((X1 - 2.0) ** 2 + (X2 - 1.6) ** 2)),
        apply_Ec(polyline_from_points([(0.6, 0.4), (2.2, 3.1)]), SteppedTimeFn.indicator(0.2, 0.7), g),
    ]
    spec = np.stack([g.spectrum(f) for f in fields])
    B = 10_000
    X = _pairings(g, spec, list(range(B))).reshape(B, -1)  # index (field, channel)
    gram = np.real(spec @ (np.conj(spec) * g.rep_weight).T)
    exact = np.kron(gram, np.eye(3))
    emp = X.T @ X / B
    d = np.sqrt(np.diag(exact))
    se = np.sqrt((np.outer(d**2, d**2) + exact**2) / B)
    z_gram = float(np.max(np.abs(emp - exact) / se))

    # variance identity for first-level increments at a smoothing level
    c = polyline_from_points([(0.6, 0.4), (2.2, 3.1)])
    j = 3
    W_spec = np.stack([ec_spectrum(c, SteppedTimeFn.indicator(s, t), g).coeffs
                       for s, t in centered_intervals(0.5, [0.5, 0.25, 0.125, 0.0625])])
    weights = build_partition(g).smoothing_weights(j, W_spec.shape[-1])
    Y = _pairings(g, W_spec * weights, list(range(B)))  # chi_j applied to the test function
    v_exact = smoothed_norm2(SpectralField(g, W_spec), g, j)
    sq = Y**2
    z_var = float(np.max(np.abs(sq.mean(0) - v_exact[:, None]) / (sq.std(0, ddof=1) / np.sqrt(B))))
    ok = z_gram <= 4 and z_var <= 4
    criterion(3, ok, f"Gram max |z| {z_gram:.2f}, variance identity max |z| {z_var:.2f} (limit 4, 10^4 seeds, N=128)")
    assert ok


# 4 -------------------------------------------------------------------------------


LOOP = polyline_from_points([(1.03, 0.97), (2.61, 1.13), (2.27, 2.71), (1.41, 2.33), (1.77, 1.59), (1.03, 0.97)])
WIGGLE = polyline_from_points([(0.53, 0.51), (2.13, 1.27), (1.07, 1.93), (2.93, 2.61), (0.71, 3.19)])


def test_c04_ecal(criterion):
    g = TorusGrid(4.0, 512)
    exact_ok = True
    for c in (LOOP, WIGGLE):
        rot = rotation_count(c)
        for s, t in [(0.0, 1.0), (0.1, 0.7), (0.33, 0.41)]:
            f = apply_Ec(c, SteppedTimeFn.indicator(s, t), g)
            exact_ok &= bool(np.all(f == np.round(f)) and np.all(np.abs(f) <= rot))
        whole = apply_Ec(c, SteppedTimeFn.indicator(0.12, 0.88), g)
        parts = apply_Ec(c, SteppedTimeFn.indicator(0.12, 0.47), g) + apply_Ec(c, SteppedTimeFn.indicator(0.47, 0.88), g)
        exact_ok &= bool(np.array_equal(whole, parts))
        rev = apply_Ec(reverse(c), SteppedTimeFn.indicator(0.25, 0.8), g)
        exact_ok &= bool(np.array_equal(apply_Ec(c, SteppedTimeFn.indicator(0.2, 0.75), g), -rev))
    X1, X2 = g.mesh()
    H = np.exp(-((X1 - 1.7) ** 2 + (X2 - 1.9) ** 2)) * np.cos(1.3 * X1 - 0.7 * X2)
    h = SteppedTimeFn((0.0, 0.4, 1.0), (1.0, -0.5))
    rel = max(abs(g.h**2 * np.sum(H * apply_Ec(c, h, g, mode="cell")) - ehat(c, H, h, g)) / abs(ehat(c, H, h, g))
              for c in (LOOP, WIGGLE))
    ok = exact_ok and rel <= 1e-3
    criterion(4, ok, f"integer range/additivity/reversal exact: {exact_ok}; adjointness rel err {rel:.1e} at N=512")
    assert ok


# 5 -------------------------------------------------------------------------------


def test_c05_besov(criterion):
    g = TorusGrid(4.0, 512)
    f = rasterize_indicator(g, (1.0, 2.0 - 1e-9), (1.0, 2.0 - 1e-9))
    prof = besov_profile(f, g)
    js = np.arange(-1, g.j_max + 1)
    sel = (js >= 1) & (js <= g.j_max - 1)
    square_slope = float(np.polyfit(js[sel], np.log2(prof[sel]), 1)[0])

    g2 = TorusGrid(2.0, 512)
    c = polyline_from_points([(0.4, 0.2), (0.8, 1.8)])
    dts = [2.0**-k for k in range(1, 8)]
    norms = [besov_norm(apply_Ec(c, SteppedTimeFn.indicator(s, t), g2, mode="cell"), g2, 0.4)[0]
             for s, t in centered_intervals(0.5, dts)]
    fit = loglog_fit(dts, norms)
    ok = abs(square_slope + 0.5) <= 0.1 and fit.slope >= 0.1 - 0.02 and fit.r2 >= 0.9
    criterion(5, ok, f"unit-square block slope {square_slope:.3f} (target -0.5 +- 0.1); "
                     f"B^0.4 norm exponent in t-s {fit.slope:.3f} (>= 0.08), R^2 {fit.r2:.3f}")
    assert ok


# 6, 7 ----------------------------------------------------------------------------


def test_c06_first_level_exponents(criterion):
    rep = run_experiment(default_cfg("first_level_decay"))
    criterion(6, rep.passed, report_detail(rep) + f" ({rep.runtime_s:.0f} s)")
    assert rep.passed, rep.failing()


def test_c07_second_level_and_cauchy(criterion):
    rep = run_experiment(default_cfg("second_level"))
    criterion(7, rep.passed, report_detail(rep) + f" ({rep.runtime_s:.0f} s)")
    assert rep.passed, rep.failing()


# 8 -------------------------------------------------------------------------------


def test_c08_transport(criterion):
    g = TorusGrid(4.0, 64)
    j = 2
    W = sample_noise(2718, g, 2)
    c = polyline_from_points([(1.1, 0.8), (2.4, 1.5), (1.6, 2.6), (2.9, 3.1)])
    p = parallel_transport(c, W, j)
    drift = p.unitarity_drift()

    finals = []
    for n in (32, 64, 128, 256, 512):
        tg = np.unique(np.concatenate([np.linspace(0, 1, n + 1), c.knots]))
        finals.append(parallel_transport(c, W, j, tg).U[-1])
    ch = [np.max(np.abs(a - b)) for a, b in zip(finals, finals[1:])]
    order = float(-np.polyfit(np.log2([32, 64, 128, 256]), np.log2(ch), 1)[0])

    vals = np.zeros_like(W.values)
    vals[0] = W.values[0]
    from axialym.spectral import NoiseSample
    Wa = NoiseSample(W.seed, g, 2, vals)
    x = lift_smoothed(c, Wa, j, np.array([0.0, 1.0])).x[-1]
    abel = float(np.max(np.abs(parallel_transport(c, Wa, j, tol=1e-10).final.entries - liealg.exp_coeffs(x, 2))))

    x0, e1, e2 = (1.2, 0.9), 1.1, 0.7
    whole = holonomy(rectangle_lasso(x0, e1, 2 * e2), W, j, tol=1e-10).entries
    low = holonomy(rectangle_lasso(x0, e1, e2), W, j, tol=1e-10).entries
    high = holonomy(rectangle_lasso((x0[0], x0[1] + e2), e1, e2, stem_from=x0), W, j, tol=1e-10).entries
    factor = float(np.max(np.abs(whole - high @ low)))

    # split identity: left/right boundaries of an x1-convex region sharing c2(t)
    from axialym.curves import make_polyline
    bot, top, left, right = (1.5, 0.5), (1.8, 2.2), (1.0, 1.4), (2.5, 1.2)
    lev = lambda y: (y - bot[1]) / (top[1] - bot[1])  # noqa: E731
    c1 = make_polyline([(0.0, bot), (lev(left[1]), left), (1.0, top)])
    c2 = make_polyline([(0.0, bot), (lev(right[1]), right), (1.0, top)])
    tau = 0.6
    tg = np.unique(np.concatenate([np.linspace(0, 1, 2**13 + 1), c1.knots, c2.knots, [tau]]))
    k = int(np.flatnonzero(tg == tau)[0])
    U1, U2 = parallel_transport(c1, W, j, tg).U[k], parallel_transport(c2, W, j, tg).U[k]
    loop = polyline_from_points([bot, right, tuple(c2(tau)), tuple(c1(tau)), left, bot])
    split = float(np.max(np.abs(parallel_transport(loop, W, j, tol=1e-10).final.entries - liealg.dagger(U1) @ U2)))

    conn = SmoothedConnection.from_noise(W, j)
    xs = np.array([1.4, 1.7])
    F = liealg.to_matrix(conn.field_value(xs[None])[0], 2)
    eps = np.array([0.2, 0.1, 0.05, 0.025])
    errs = [np.max(np.abs((holonomy(rectangle_lasso(xs, e, e), W, j, tol=1e-12).entries - np.eye(2)) / e**2 - F))
            for e in eps]
    small_order = float(np.polyfit(np.log(eps), np.log(errs), 1)[0])

    ok = (drift <= 1e-10 and order >= 1.8 and abel <= 1e-8 and factor <= 1e-6 and split <= 1e-6
          and 0.8 <= small_order <= 1.2)
    criterion(8, ok, f"drift {drift:.1e}, order {order:.2f}, abelian {abel:.1e}, factorization {factor:.1e}, "
                     f"split {split:.1e}, small-area order {small_order:.2f}")
    assert ok


# 9, 10 ---------------------------------------------------------------------------


def test_c09_wilson_law(criterion):
    cfg = default_cfg("wilson_density")
    rep = run_experiment(cfg)
    worst = max((m.estimate / m.hi for m in rep.metrics if m.name.endswith(("mean_re_tr", "second_moment"))
                 and m.hi), default=0.0)
    ks = [m for m in rep.metrics if m.name.endswith("ks_angle")]
    criterion(9, rep.passed, f"{cfg.samples} samples, areas {sorted({round(v['area'], 3) for v in rep.tables['loops'].values()})}; "
                             f"worst moment gap {worst:.2f} of the 3 s.e. band; "
                             f"max KS {max(m.estimate for m in ks):.4f} vs {ks[0].hi:.4f}"
                             + ("" if rep.passed else f"; failing {rep.failing()}") + f" ({rep.runtime_s:.0f} s)")
    assert rep.passed, rep.failing()


def test_c10_independence(criterion):
    cfg = default_cfg("independence")
    rep = run_experiment(cfg)
    corr = [m for m in rep.metrics if m.name.startswith("corr")]
    selfc = next(m for m in rep.metrics if m.name == "self_pair_corr")
    criterion(10, rep.passed, f"max |corr| {max(m.estimate for m in corr):.4f} vs 3/sqrt(N) = {corr[0].hi:.4f} "
                              f"over {len(corr)} pairs; self-pair corr {selfc.estimate:.4f} ({rep.runtime_s:.0f} s)")
    assert rep.passed, rep.failing()


# 11 ------------------------------------------------------------------------------


def test_c11_reproducibility_and_exit_codes(criterion, tmp_path):
    quick = ROOT / "configs" / "quick.json"
    a, b = tmp_path / "a", tmp_path / "b"
    codes = [main(["run", str(quick), "--out", str(a)]), main(["run", str(quick), "--out", str(b)])]
    reports = sorted(p.name for p in a.glob("[0-9][0-9]_*.json"))
    identical = bool(reports) and all((a / r).read_bytes() == (b / r).read_bytes() for r in reports)

    failing = json.loads(quick.read_text())
    failing["experiments"] = [dict(failing["experiments"][0], tolerances={"z_max": 0.0})]
    fpath = tmp_path / "failing.json"
    fpath.write_text(json.dumps(failing))
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    codes += [main(["run", str(fpath), "--out", str(tmp_path / "f")]), main(["run", str(bad)]),
              main(["inspect", str(a / reports[0])]), main(["inspect", str(bad)])]
    ok = identical and codes == [0, 0, 1, 2, 0, 2]
    criterion(11, ok, f"{len(reports)} reports byte-identical: {identical}; exit codes {codes} (expected [0, 0, 1, 2, 0, 2])")
    assert ok
