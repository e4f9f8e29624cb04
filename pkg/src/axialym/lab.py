"""Monte Carlo experiments: convergence exponents, Wilson-loop laws, independence.

Every experiment takes an :class:`ExperimentConfig` and returns an
:class:`ExperimentReport`. Sample ``i`` of a run with base seed ``b`` uses
the field seed ``b ^ i``; oracle draws use ``b ^ (ORACLE_SALT + i)``.
Samples are processed in fixed-size chunks and reduced in chunk order, so
the result does not depend on the number of worker processes.
"""
from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable

import numpy as np
from scipy import stats

from . import liealg
from .curves import Curve, Lasso, lasso_from_json, polygon_lasso, polyline_from_points, refine_knots
from .ecal import SteppedTimeFn, ec_spectrum, ec_spectrum_path
from .roughpath import chen_defect, sig_polyline, sym_defect
from .spectral import (TorusGrid, build_partition, sample_noise, sample_noise_batch, smooth_field,
                       smoothing_radius, write_field)
from .transport import SmoothedConnection, lie_bm_final_coupled, parallel_transport, transport_final_batch

ORACLE_SALT = 1 << 40
SEED_MASK = (1 << 64) - 1
R2_MIN = 0.9


class ConfigError(ValueError):
    """Invalid experiment configuration (maps to CLI exit code 2)."""


# -- config and report types ---------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    L: float = 2.0
    N: int = 512
    n: int = 2
    samples: int = 500
    seed: int = 0
    chunk: int = 250
    params: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.samples < 2:
            raise ConfigError("samples must be >= 2")
        if self.n < 2:
            raise ConfigError("n must be >= 2")
        if self.L <= 0 or self.N < 8 or self.N & (self.N - 1):
            raise ConfigError("grid needs L > 0 and a power-of-two N >= 8")
        if self.chunk < 1:
            raise ConfigError("chunk must be positive")
        jm = self.grid.j_max
        for key in ("j", "j_t", "j_list", "j_range"):
            if key in self.params:
                v = self.params[key]
                for jj in (v if isinstance(v, list) else [v]):
                    if jj != "none" and not (-1 <= int(jj) <= jm):
                        raise ConfigError(f"{key}={jj} outside [-1, j_max={jm}]")

    @property
    def grid(self) -> TorusGrid:
        return TorusGrid(self.L, self.N)

    def param(self, key: str, default=None):
        return self.params.get(key, default)

    def tol(self, key: str, default: float) -> float:
        return float(self.tolerances.get(key, default))

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "L": self.L, "N": self.N, "n": self.n,
                "samples": self.samples, "seed": self.seed, "chunk": self.chunk,
                "params": self.params, "tolerances": self.tolerances}

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict, seed: int | None = None) -> "ExperimentConfig":
        d = dict(d)
        if "experiment" not in d:
            raise ConfigError("experiment entry needs an 'experiment' name")
        grid = d.pop("grid", {})
        if seed is not None:
            d["seed"] = seed
        allowed = {"experiment", "n", "samples", "seed", "chunk", "params", "tolerances"}
        extra = set(d) - allowed
        if extra:
            raise ConfigError(f"unknown keys {sorted(extra)}")
        try:
            return cls(L=float(grid.get("L", 2.0)), N=int(grid.get("N", 512)), **d)
        except TypeError as e:
            raise ConfigError(str(e)) from None


@dataclass
class Metric:
    """One checked quantity. ``pass`` is ``lo <= estimate <= hi`` and ``r2 >= r2_min``."""

    name: str
    estimate: float
    se: float | None = None
    lo: float | None = None
    hi: float | None = None
    slope: float | None = None
    ci: list | None = None
    r2: float | None = None
    r2_min: float | None = None
    extra: dict | None = None

    @property
    def passed(self) -> bool:
        return recompute_pass(self.to_dict())

    def to_dict(self) -> dict:
        d = {"name": self.name, "estimate": _num(self.estimate), "se": _num(self.se)}
        for key in ("lo", "hi", "slope", "r2", "r2_min"):
            v = getattr(self, key)
            if v is not None:
                d[key] = _num(v)
        if self.ci is not None:
            d["ci"] = [_num(v) for v in self.ci]
        if self.extra:
            d["extra"] = self.extra
        d["pass"] = recompute_pass(d)
        return d


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def recompute_pass(m: dict) -> bool:
    """Pass flag of a serialized metric, from its stored numbers only."""
    est = m.get("estimate")
    if est is None:
        return False
    if m.get("lo") is not None and est < m["lo"]:
        return False
    if m.get("hi") is not None and est > m["hi"]:
        return False
    if m.get("r2_min") is not None and (m.get("r2") is None or m["r2"] < m["r2_min"]):
        return False
    return True


@dataclass
class ExperimentReport:
    experiment: str
    config_hash: str
    metrics: list[Metric]
    provenance: dict
    runtime_s: float | None = None
    tables: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(m.passed for m in self.metrics)

    def failing(self) -> list[str]:
        return [m.name for m in self.metrics if not m.passed]

    def to_dict(self, include_runtime: bool = False) -> dict:
        return {"experiment": self.experiment, "config_hash": self.config_hash,
                "metrics": [m.to_dict() for m in self.metrics],
                "runtime_s": self.runtime_s if include_runtime else None,
                "pass": self.passed, "provenance": self.provenance, "tables": self.tables}

    def to_json(self, include_runtime: bool = False) -> str:
        return json.dumps(self.to_dict(include_runtime), indent=2, sort_keys=True, allow_nan=False) + "\n"


# -- shared helpers --------------------------------------------------------------------


def field_seeds(base: int, count: int, start: int = 0) -> list[int]:
    return [(int(base) ^ i) & SEED_MASK for i in range(start, start + count)]


def oracle_seeds(base: int, count: int) -> list[int]:
    return [(int(base) ^ (ORACLE_SALT + i)) & SEED_MASK for i in range(count)]


def _chunks(total: int, size: int) -> list[tuple[int, int]]:
    return [(lo, min(total, lo + size)) for lo in range(0, total, size)]


def map_chunks(fn: Callable, cfg: ExperimentConfig, workers: int = 1) -> list:
    """``fn(cfg, lo, hi)`` over sample chunks, results in chunk order."""
    spans = _chunks(cfg.samples, cfg.chunk)
    if workers <= 1 or len(spans) == 1:
        return [fn(cfg, lo, hi) for lo, hi in spans]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(partial(_call, fn, cfg), spans))


def _call(fn, cfg, span):
    return fn(cfg, *span)


@dataclass(frozen=True)
class LogFit:
    slope: float
    intercept: float
    stderr: float
    ci: tuple[float, float]
    r2: float
    residuals: list


def loglog_fit(x, y, base: float = 2.0, level: float = 0.95) -> LogFit:
    """OLS of ``log_base y`` on ``log_base x`` with a t-based confidence interval."""
    lx = np.log(np.asarray(x, float)) / np.log(base)
    ly = np.log(np.asarray(y, float)) / np.log(base)
    return linear_fit(lx, ly, level)


def linear_fit(x, y, level: float = 0.95) -> LogFit:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.size < 3 or not np.all(np.isfinite(y)):
        return LogFit(float("nan"), float("nan"), float("nan"), (float("nan"),) * 2, float("nan"), [])
    r = stats.linregress(x, y)
    q = stats.t.ppf(0.5 + level / 2, x.size - 2)
    res = y - (r.intercept + r.slope * x)
    return LogFit(float(r.slope), float(r.intercept), float(r.stderr),
                  (float(r.slope - q * r.stderr), float(r.slope + q * r.stderr)),
                  float(r.rvalue**2), [float(v) for v in res])


def fit_metric(name: str, fit: LogFit, lo=None, hi=None, r2_min: float = R2_MIN) -> Metric:
    return Metric(name, fit.slope, fit.stderr, lo=lo, hi=hi, slope=fit.slope, ci=list(fit.ci),
                  r2=fit.r2, r2_min=r2_min, extra={"residuals": fit.residuals})


def l2_norm_estimate(sq: np.ndarray) -> tuple[float, float]:
    """``sqrt(E|Y|^2)`` and its delta-method s.e. from per-sample ``|Y|^2``."""
    q = float(np.mean(sq))
    se_q = float(np.std(sq, ddof=1) / np.sqrt(sq.size))
    norm = math.sqrt(q)
    return norm, (se_q / (2 * norm) if norm > 0 else 0.0)


def centered_intervals(center: float, dts) -> list[tuple[float, float]]:
    out = []
    for dt in dts:
        s = min(max(center - dt / 2, 0.0), 1.0 - dt)
        out.append((s, s + dt))
    return out


def _curve_param(cfg: ExperimentConfig, default) -> Curve:
    pts = np.asarray(cfg.param("curve", default), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ConfigError("curve must be a list of at least two [x1, x2] points")
    if np.any(pts <= 0) or np.any(pts >= cfg.L):
        raise ConfigError("curve must stay inside (0, L)^2")
    try:
        return polyline_from_points(pts)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _dts(cfg: ExperimentConfig, default) -> np.ndarray:
    dts = np.asarray(cfg.param("dts", default), dtype=float)
    if np.any(dts <= 0) or np.any(dts > 1):
        raise ConfigError("interval lengths must lie in (0, 1]")
    return dts


def _level(j):
    return "none" if j == "none" else int(j)


def _pairing_kernel(grid: TorusGrid, spectra: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Kernel Z with ``Re(values @ Z.T)`` = pairings; spectra (F, m), weights (m,)."""
    m = spectra.shape[-1]
    return np.conj(spectra) * (grid.rep_weight[:m] * weights)


def _pair_rows(vals: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """(B, dim, m) x (F, m) -> (B, F, dim)."""
    B, dim, m = vals.shape
    out = np.real(vals.reshape(B * dim, m) @ Z[:, :m].T)
    return np.moveaxis(out.reshape(B, dim, -1), 1, 2)


def _draw(cfg: ExperimentConfig, lo: int, hi: int, band) -> np.ndarray:
    return sample_noise_batch(field_seeds(cfg.seed, hi - lo, lo), cfg.grid, cfg.n, band)


def _concat(results: list, key: str) -> np.ndarray:
    return np.concatenate([r[key] for r in results])


# -- field sampling, transport, lift -------------------------------------------------


def exp_sample_field(cfg: ExperimentConfig, workers: int = 1, out_dir=None) -> ExperimentReport:
    """Pointwise variance of ``W^(j)`` against ``sum_k chi_j(k)^2 / L^2``."""
    grid = cfg.grid
    j = _level(cfg.param("j", 4))
    res = map_chunks(_sample_field_chunk, cfg, workers)
    v = _concat(res, "v")
    m = grid.band_count(smoothing_radius(j))
    w = build_partition(grid).smoothing_weights(j, m)
    exact = float(np.sum(grid.rep_weight[:m] * w**2) / grid.L**2)
    est = float(np.mean(v**2))
    se = float(np.std(v**2, ddof=1) / np.sqrt(v.size))
    z = abs(est - exact) / se
    metrics = [Metric("pointwise_variance_z", z, None, hi=cfg.tol("z_max", 4.0),
                      extra={"estimate": est, "exact": exact, "se": se})]
    if out_dir is not None:
        W = sample_noise(field_seeds(cfg.seed, 1)[0], grid, cfg.n, j)
        write_field(f"{out_dir}/field_{cfg.experiment}.bin", smooth_field(W, j), grid)
    return _report(cfg, metrics)


def _sample_field_chunk(cfg, lo, hi):
    grid = cfg.grid
    j = _level(cfg.param("j", 4))
    rng_pts = np.random.default_rng(np.random.SeedSequence([cfg.seed & SEED_MASK, 7]))
    pts = rng_pts.uniform(0, grid.L, size=(int(cfg.param("points", 4)), 2))
    vals = _draw(cfg, lo, hi, j)
    conn = SmoothedConnection.from_batch(grid, cfg.n, vals, j)
    return {"v": conn.field_value(pts).reshape(-1)}


def exp_transport(cfg: ExperimentConfig, workers: int = 1, out_dir=None) -> ExperimentReport:
    """Single-sample adaptive transports: convergence, unitarity, CSV artefact."""
    grid = cfg.grid
    j = _level(cfg.param("j", 4))
    c = _curve_param(cfg, [[0.5, 0.5], [1.5, 0.5], [1.5, 1.5], [0.5, 1.5], [0.5, 0.5]])
    tol = cfg.tol("transport_tol", 1e-8)
    count = min(cfg.samples, int(cfg.param("paths", 2)))
    drift, change = [], []
    for k, s in enumerate(field_seeds(cfg.seed, count)):
        W = sample_noise(s, grid, cfg.n, j)
        path = parallel_transport(c, W, j, tol=tol, n_start=int(cfg.param("n_start", 1024)))
        drift.append(path.unitarity_drift())
        change.append(path.meta["last_change"])
        if out_dir is not None and k == 0:
            path.to_csv(f"{out_dir}/transport_{cfg.experiment}.csv")
    metrics = [Metric("unitarity_drift_max", max(drift), None, hi=cfg.tol("unitarity", 1e-10)),
               Metric("refinement_change_max", max(change), None, hi=tol)]
    return _report(cfg, metrics)


def exp_lift(cfg: ExperimentConfig, workers: int = 1, out_dir=None) -> ExperimentReport:
    """Lifts of ``X^(j)``: Chen and symmetric-part identities, CSV artefact."""
    from .roughpath import lift_smoothed

    grid = cfg.grid
    j = _level(cfg.param("j", 4))
    c = _curve_param(cfg, [[0.4, 0.2], [0.8, 1.8]])
    t = np.linspace(0.0, 1.0, int(cfg.param("nodes", 128)) + 1)
    count = min(cfg.samples, int(cfg.param("paths", 2)))
    chen, sym = [], []
    for k, s in enumerate(field_seeds(cfg.seed, count)):
        P = lift_smoothed(c, sample_noise(s, grid, cfg.n, j), j, t)
        chen.append(chen_defect(P))
        sym.append(sym_defect(P))
        if out_dir is not None and k == 0:
            P.to_csv(f"{out_dir}/lift_{cfg.experiment}.csv")
    metrics = [Metric("chen_defect_max", max(chen), None, hi=cfg.tol("chen", 1e-10)),
               Metric("sym_defect_max", max(sym), None, hi=cfg.tol("sym", 1e-10))]
    return _report(cfg, metrics)


# -- first level -------------------------------------------------------------------------


_DEFAULT_CURVE = [[0.4, 0.2], [0.8, 1.8]]
_DEFAULT_DTS = [2.0**-k for k in range(1, 8)]


def _interval_spectra(cfg: ExperimentConfig, c: Curve, intervals, m: int) -> np.ndarray:
    return np.stack([ec_spectrum(c, SteppedTimeFn.indicator(s, t), cfg.grid, m).coeffs
                     for s, t in intervals])


def exp_first_level_decay(cfg: ExperimentConfig, workers: int = 1, out_dir=None) -> ExperimentReport:
    """``||X^(ref)_{s,t} - X^(j)_{s,t}||_{L^2}``: decay in j and growth in t - s.

    The j-slope is fitted at the widest interval, where the smoothing scale
    2^-j is below the width of the swept region. The (t - s)-exponent is
    fitted at the coarse level ``j_t`` over the short intervals, where the
    swept region is thinner than 2^-j_t.
    """
    grid = cfg.grid
    s_reg = float(cfg.param("regularity", 0.4))
    j_lo, j_hi = cfg.param("j_range", [3, grid.j_max - 2])
    js = list(range(int(j_lo), int(j_hi) + 1))
    j_t = int(cfg.param("j_t", 2))
    dt_t_max = float(cfg.param("dt_t_max", 0.125))
    dts = _dts(cfg, _DEFAULT_DTS)
    res = map_chunks(_first_level_chunk, cfg, workers)
    sq = _concat(res, "sq")  # (B, J, F)
    levels = _first_level_levels(cfg)
    table = {}
    est = np.zeros((len(levels), dts.size))
    se = np.zeros_like(est)
    for a, j in enumerate(levels):
        for b, dt in enumerate(dts):
            est[a, b], se[a, b] = l2_norm_estimate(sq[:, a, b])
            table[f"j={j},dt={dt:.6g}"] = [est[a, b], se[a, b]]
    exact = _first_level_exact(cfg, levels, dts)
    z = np.abs(est - exact) / np.where(se > 0, se, np.inf)
    wide = int(np.argmax(dts))
    sel = [levels.index(j) for j in js]
    fit_j = loglog_fit(2.0 ** np.array(js, float), est[sel, wide])
    short = np.flatnonzero(dts <= dt_t_max)
    fit_t = loglog_fit(dts[short], est[levels.index(j_t), short])
    tj = cfg.tol("slope_j_halfwidth", 0.15)
    tt = cfg.tol("exponent_t_halfwidth", 0.1)
    metrics = [
        fit_metric("slope_in_j", fit_j, lo=-s_reg - tj, hi=-s_reg + tj),
        fit_metric("exponent_in_t", fit_t, lo=0.5 - tt, hi=0.5 + tt),
        Metric("mc_vs_exact_max_z", float(np.max(z)), None, hi=cfg.tol("z_max", 4.0)),
    ]
    return _report(cfg, metrics, {"l2_error": table, "exact": exact.tolist()})


def _first_level_levels(cfg) -> list[int]:
    grid = cfg.grid
    j_lo, j_hi = cfg.param("j_range", [3, grid.j_max - 2])
    return sorted(set(range(int(j_lo), int(j_hi) + 1)) | {int(cfg.param("j_t", 2))})


def _first_level_weights(cfg, levels, m):
    part = build_partition(cfg.grid)
    ref = part.smoothing_weights(_level(cfg.param("j_ref", "none")), m)
    return [ref - part.smoothing_weights(j, m) for j in levels]


def _first_level_setup(cfg):
    grid = cfg.grid
    c = _curve_param(cfg, _DEFAULT_CURVE)
    dts = _dts(cfg, _DEFAULT_DTS)
    levels = _first_level_levels(cfg)
    m = grid.band_count(smoothing_radius(_level(cfg.param("j_ref", "none"))))
    spectra = _interval_spectra(cfg, c, centered_intervals(float(cfg.param("center", 0.5)), dts), m)
    return dts, levels, m, spectra


def _first_level_exact(cfg, levels, dts) -> np.ndarray:
    grid = cfg.grid
    _, _, m, spectra = _first_level_setup(cfg)
    dim = liealg.dim_algebra(cfg.n)
    out = np.zeros((len(levels), dts.size))
    for a, wdiff in enumerate(_first_level_weights(cfg, levels, m)):
        out[a] = np.sqrt(dim * np.sum(grid.rep_weight[:m] * wdiff**2 * np.abs(spectra) ** 2, axis=1))
    return out


def _first_level_chunk(cfg, lo, hi):
    grid = cfg.grid
    dts, levels, m, spectra = _first_level_setup(cfg)
    Z = np.concatenate([_pairing_kernel(grid, spectra, w) for w in _first_level_weights(cfg, levels, m)])
    vals = _draw(cfg, lo, hi, _level(cfg.param("j_ref", "none")))
    Y = _pair_rows(vals, Z)  # (B, J * F, dim)
    return {"sq": np.sum(Y**2, axis=-1).reshape(hi - lo, len(levels), dts.size)}


def exp_holder_first(cfg: ExperimentConfig, workers: int = 1, out_dir=None) -> ExperimentReport:
    """(t - s)-exponent of ``||X^(j)_{s,t}||_{L^2}`` and the variance identity."""
    grid = cfg.grid
    s_reg = float(cfg.param("regularity", 0.05))
    j = int(cfg.param("j", 5))
    j_list = [int(v) for v in cfg.param("j_list", [2, 4, 6])]
    dts = _dts(cfg, [2.0**-k for k in range(1, 7)])
    levels = sorted(set(j_list) | {j})
    res = map_chunks(_holder_chunk, cfg, workers)
    Y = _concat(res, "Y")  # (B, J, F, dim)
    m = grid.band_count(smoothing_radius(max(levels)))
    spectra = _holder_spectra(cfg, m)
    part = build_partition(grid)
    z_max = 0.0
    table = {}
    for a, jj in enumerate(levels):
        w = part.smoothing_weights(jj, m)
        exact = np.sum(grid.rep_weight[:m] * w**2 * np.abs(spectra) ** 2, axis=1)  # (F,)
        var = np.var(Y[:, a], axis=0, ddof=1)  # (F, dim)
        se = exact[:, None] * np.sqrt(2.0 / (Y.shape[0] - 1))
        if jj in j_list:
            z_max = max(z_max, float(np.max(np.abs(var - exact[:, None]) / se)))
        table[f"j={jj}"] = {"variance": var.tolist(), "exact": exact.tolist()}
    norms = [l2_norm_estimate(np.sum(Y[:, levels.index(j), b] ** 2, axis=-1))[0] for b in range(dts.size)]
    fit = loglog_fit(dts, norms)
    metrics = [fit_metric("exponent_in_t", fit, lo=0.5 - s_reg - cfg.tol("exponent_slack", 0.1)),
               Metric("variance_identity_max_z", z_max, None, hi=cfg.tol("z_max", 4.0))]
    return _report(cfg, metrics, {"variance": table, "norms": norms})


def _holder_spectra(cfg, m):
    c = _curve_param(cfg, _DEFAULT_CURVE)
    dts = _dts(cfg, [2.0**-k for k in range(1, 7)])
    return _interval_spectra(cfg, c, centered_intervals(float(cfg.param("center", 0.5)), dts), m)


def _holder_chunk(cfg, lo, hi):
    grid = cfg.grid
    j = int(cfg.param("j", 5))
    levels = sorted(set(int(v) for v in cfg.param("j_list", [2, 4, 6])) | {j})
    m = grid.band_count(smoothing_radius(max(levels)))
    spectra = _holder_spectra(cfg, m)
    part = build_partition(grid)
    vals = _draw(cfg, lo, hi, max(levels))
    Y = np.stack([_pair_rows(vals, _pairing_kernel(grid, spectra, part.smoothing_weights(jj, m)))
                  for jj in levels], axis=1)
    return {"Y": Y}


# -- second level -------------------------------------------------------------------------


def exp_second_level(cfg: ExperimentConfig, workers: int = 1, out_dir=None) -> ExperimentReport:
    """``||XX^(j)_{s,t}||_{L^2}`` against t - s, and the Cauchy table in j."""
    grid = cfg.grid
    js = [int(v) for v in cfg.param("j_list", list(range(4, grid.j_max + 1)))]
    dts = _dts(cfg, [2.0**-k for k in range(1, 6)])
    res = map_chunks(_second_level_chunk, cfg, workers)
    norms2 = _concat(res, "norm2")  # (B, J, F)
    diff2 = _concat(res, "diff2")  # (B, J - 1)
    metrics, table = [], {}
    lo_exp = cfg.tol("exponent_min", 0.9)
    worst = None
    for a, j in enumerate(js):
        est = [l2_norm_estimate(norms2[:, a, b])[0] for b in range(dts.size)]
        fit = loglog_fit(dts, est)
        table[f"j={j}"] = est
        if worst is None or not (fit.slope >= worst.slope):
            worst = fit
        metrics.append(fit_metric(f"exponent_in_t_j{j}", fit, lo=lo_exp))
    cauchy = [l2_norm_estimate(diff2[:, a]) for a in range(len(js) - 1)]
    d = np.array([v for v, _ in cauchy])
    se = np.array([v for _, v in cauchy])
    # an increase counts as an inversion unless it is within two combined s.e.
    rises = np.diff(d)
    band = 2 * np.hypot(se[1:], se[:-1])
    inversions = int(np.sum(rises > 0))
    hard = int(np.sum(rises > band))
    metrics.append(Metric("cauchy_inversions", inversions, None, hi=cfg.tol("max_inversions", 1),
                          extra={"beyond_error_bars": hard}))
    metrics.append(Metric("cauchy_hard_inversions", hard, None, hi=0))
    metrics.append(Metric("cauchy_total_decay", float(d[0] / d[-1]), None, lo=cfg.tol("decay_min", 2.0)))
    table["cauchy"] = {f"{js[a]}->{js[a + 1]}": [float(d[a]), float(se[a])] for a in range(len(js) - 1)}
    return _report(cfg, metrics, {"norms": table})


def _second_level_setup(cfg):
    grid = cfg.grid
    c = _curve_param(cfg, _DEFAULT_CURVE)
    M = int(cfg.param("nodes", 1024))
    t = np.linspace(0.0, 1.0, M + 1)
    js = [int(v) for v in cfg.param("j_list", list(range(4, grid.j_max + 1)))]
    m = grid.band_count(smoothing_radius(max(js)))
    K = ec_spectrum_path(c, t, grid, m)
    dts = _dts(cfg, [2.0**-k for k in range(1, 6)])
    idx = []
    for s, e in centered_intervals(float(cfg.param("center", 0.5)), dts):
        a, b = int(round(s * M)), int(round(e * M))
        if b <= a:
            raise ConfigError("interval shorter than the node spacing")
        idx.append((a, b))
    return js, m, K, idx


def _level2(x: np.ndarray, a: int, b: int) -> np.ndarray:
    return sig_polyline(np.arange(b - a + 1, dtype=float), x[..., a:b + 1, :]).xx[..., -1, :, :]


def _second_level_chunk(cfg, lo, hi):
    grid = cfg.grid
    js, m, K, idx = _second_level_setup(cfg)
    part = build_partition(grid)
    vals = _draw(cfg, lo, hi, max(js))
    B = hi - lo
    norm2 = np.zeros((B, len(js), len(idx)))
    wide = int(np.argmax([b - a for a, b in idx]))
    top = []
    for a, j in enumerate(js):
        x = _pair_rows(vals, _pairing_kernel(grid, K, part.smoothing_weights(j, m)))  # (B, M+1, dim)
        for f, (s, e) in enumerate(idx):
            XX = _level2(x, s, e)
            norm2[:, a, f] = np.sum(XX**2, axis=(-2, -1))
        top.append(_level2(x, *idx[wide]))
    diff2 = np.stack([np.sum((top[a + 1] - top[a]) ** 2, axis=(-2, -1)) for a in range(len(js) - 1)], axis=1)
    return {"norm2": norm2, "diff2": diff2}


# -- Wilson loops ---------------------------------------------------------------------------


def _loop_from_spec(spec) -> Lasso | None:
    """``{"rect": [x1, x2, w, h]}``, ``{"polygon": [...], "stem_from": ...}`` or a lasso JSON.

    A rectangle with a zero side is the trivial loop (returns None).
    """
    try:
        if "rect" in spec:
            x1, x2, w, h = (float(v) for v in spec["rect"])
            if w == 0 or h == 0:
                return None
            verts = [(x1, x2), (x1 + w, x2), (x1 + w, x2 + h), (x1, x2 + h)]
            return polygon_lasso(verts, spec.get("stem_from"), spec.get("name", ""))
        if "polygon" in spec:
            return polygon_lasso(spec["polygon"], spec.get("stem_from"), spec.get("name", ""))
        return lasso_from_json(spec)
    except (ValueError, KeyError, TypeError) as e:
        raise ConfigError(f"bad loop spec {spec!r}: {e}") from None


def is_x1_convex(lasso: Lasso) -> bool:
    """Every horizontal line meets the enclosed region in one interval."""
    loop = lasso.loop
    ys = np.unique(loop.points[:, 1])
    for y in 0.5 * (ys[:-1] + ys[1:]):
        hits = 0
        for _, _, p0, p1 in loop.segments():
            lo, hi = sorted((p0[1], p1[1]))
            if lo < y < hi:
                hits += 1
        if hits > 2:
            return False
    return True


def _check_loop(lasso: Lasso | None, grid: TorusGrid) -> None:
    if lasso is None:
        return
    pts = lasso.composite().points
    if np.any(pts <= 0) or np.any(pts >= grid.L):
        raise ConfigError("loop must lie inside (0, L)^2")
    if not is_x1_convex(lasso):
        raise ConfigError("loop region is not x1-convex (horizontal sections must be intervals)")


def _holonomy_traces(cfg: ExperimentConfig, loops: list[Lasso | None], lo: int, hi: int) -> np.ndarray:
    """Re tr U(1) for each loop and sample, shape (B, len(loops))."""
    grid = cfg.grid
    j = _level(cfg.param("j", grid.j_max))
    per_unit = int(cfg.param("steps_per_unit", 512))
    vals = _draw(cfg, lo, hi, j)
    conn = SmoothedConnection.from_batch(grid, cfg.n, vals, j)
    del vals
    out = np.full((hi - lo, len(loops)), float(cfg.n))
    for q, lasso in enumerate(loops):
        if lasso is None:
            continue
        c = lasso.composite()
        tg = refine_knots(c, max(16, int(math.ceil(per_unit * c.length()))))
        U = transport_final_batch(conn, c, tg)
        out[:, q] = np.real(np.trace(U, axis1=-2, axis2=-1))
    return out


def _wilson_loops(cfg: ExperimentConfig) -> list[Lasso | None]:
    specs = cfg.param("loops", [{"rect": [1.0, 1.0, 0.5, 0.5]}, {"rect": [1.0, 1.0, 1.0, 1.0]},
                                {"rect": [1.0, 1.0, 1.0, 2.0]}, {"rect": [1.0, 1.0, 0.5, 2.0]}])
    loops = [_loop_from_spec(s) for s in specs]
    for lp in loops:
        _check_loop(lp, cfg.grid)
    return loops


def _wilson_chunk(cfg, lo, hi):
    return {"tr": _holonomy_traces(cfg, _wilson_loops(cfg), lo, hi)}


def _compare(name: str, a: np.ndarray, b: np.ndarray, k: float) -> Metric:
    """|mean a - mean b| against k combined standard errors."""
    d = float(np.mean(a) - np.mean(b))
    se = float(np.hypot(np.std(a, ddof=1) / np.sqrt(a.size), np.std(b, ddof=1) / np.sqrt(b.size)))
    return Metric(name, abs(d), se, hi=k * se, extra={"difference": d})


def ks_critical(n1: int, n2: int, alpha: float = 0.01) -> float:
    c = math.sqrt(-0.5 * math.log(alpha / 2))
    return c * math.sqrt((n1 + n2) / (n1 * n2))


def eigen_angle(tr: np.ndarray, n: int = 2) -> np.ndarray:
    """Eigenvalue angle in [0, pi] of an SU(2) element from its (real) trace."""
    return np.arccos(np.clip(tr / 2.0, -1.0, 1.0))


def exp_wilson_density(cfg: ExperimentConfig, workers: int = 1, out_dir=None) -> ExperimentReport:
    """Field-pipeline holonomies against the Lie-group Brownian oracle at the enclosed area."""
    loops = _wilson_loops(cfg)
    tr = _concat(map_chunks(_wilson_chunk, cfg, workers), "tr")
    k = cfg.tol("se_factor", 3.0)
    steps = int(cfg.param("oracle_steps", 256))
    oseeds = oracle_seeds(cfg.seed, cfg.samples)
    metrics, table = [], {}
    areas = [0.0 if lp is None else lp.area for lp in loops]
    for q, (lp, area) in enumerate(zip(loops, areas)):
        label = f"loop{q}"
        f = tr[:, q]
        if area == 0.0:
            o = np.full(cfg.samples, float(cfg.n))
            o2 = o
        else:
            o, o2 = _oracle_traces(area, cfg.n, steps, oseeds, cfg.chunk)
        metrics.append(_compare(f"{label}_mean_re_tr", f, o, k))
        metrics.append(_compare(f"{label}_second_moment", f**2, o**2, k))
        se_o = float(np.std(o, ddof=1) / np.sqrt(o.size))
        metrics.append(Metric(f"{label}_oracle_step_doubling", abs(float(np.mean(o2) - np.mean(o))), se_o, hi=se_o))
        if cfg.n == 2:
            ks = float(stats.ks_2samp(eigen_angle(f), eigen_angle(o)).statistic) if area > 0 else 0.0
            metrics.append(Metric(f"{label}_ks_angle", ks, None, hi=ks_critical(f.size, o.size, cfg.tol("ks_alpha", 0.01))))
            if area > 0:
                hk = 2.0 * math.exp(-0.75 * area)
                metrics.append(Metric(f"{label}_oracle_vs_heat_kernel", abs(float(np.mean(o)) - hk), se_o,
                                      hi=k * se_o, extra={"heat_kernel_mean": hk}))
        table[label] = {"area": area, "field_mean": float(np.mean(f)), "oracle_mean": float(np.mean(o)),
                        "field_second": float(np.mean(f**2)), "oracle_second": float(np.mean(o**2))}
    # equal-area pairs: moments depend on the area only
    for a in range(len(loops)):
        for b in range(a + 1, len(loops)):
            if areas[a] > 0 and abs(areas[a] - areas[b]) <= 1e-12 * max(1.0, areas[a]):
                metrics.append(_compare(f"shape_loop{a}_vs_loop{b}_mean_re_tr", tr[:, a], tr[:, b], k))
    return _report(cfg, metrics, {"loops": table})


def _oracle_traces(area: float, n: int, steps: int, seeds: list[int], chunk: int):
    """Re tr U(1) of the oracle at ``steps`` and, on the same paths, ``2 * steps``."""
    coarse, fine = [], []
    for lo, hi in _chunks(len(seeds), max(chunk, 1000)):
        Uc, Uf = lie_bm_final_coupled(area, n, steps, seeds[lo:hi])
        coarse.append(np.real(np.trace(Uc, axis1=-2, axis2=-1)))
        fine.append(np.real(np.trace(Uf, axis1=-2, axis2=-1)))
    return np.concatenate(coarse), np.concatenate(fine)


def _polygons_overlap(pa: np.ndarray, pb: np.ndarray) -> bool:
    """Positive-area intersection test on a lattice over the common bounding box."""
    lo = np.maximum(pa.min(0), pb.min(0))
    hi = np.minimum(pa.max(0), pb.max(0))
    if np.any(hi <= lo):
        return False
    g = 200
    xs = lo[0] + (np.arange(g) + 0.5) * (hi[0] - lo[0]) / g
    ys = lo[1] + (np.arange(g) + 0.5) * (hi[1] - lo[1]) / g
    X, Y = np.meshgrid(xs, ys)
    P = np.column_stack([X.ravel(), Y.ravel()])
    return bool(np.any(_inside(pa, P) & _inside(pb, P)))


def _inside(poly: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Even-odd rule, strict interior up to the lattice offset."""
    x, y = P[:, 0], P[:, 1]
    inside = np.zeros(P.shape[0], dtype=bool)
    q = np.roll(poly, -1, axis=0)
    for (x0, y0), (x1, y1) in zip(poly, q):
        if y0 == y1:
            continue
        cond = (y0 > y) != (y1 > y)
        xc = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
        inside ^= cond & (x < xc)
    return inside


def exp_independence(cfg: ExperimentConfig, workers: int = 1, out_dir=None) -> ExperimentReport:
    """Same-sample correlations of Re tr U over loops with disjoint interiors."""
    loops = _wilson_loops_indep(cfg)
    for a in range(len(loops)):
        for b in range(a + 1, len(loops)):
            if _polygons_overlap(loops[a].region, loops[b].region):
                raise ConfigError(f"loops {a} and {b} have overlapping interiors")
    tr = _concat(map_chunks(_independence_chunk, cfg, workers), "tr")
    bound = cfg.tol("corr_factor", 3.0) / math.sqrt(cfg.samples)
    metrics = []
    for a in range(len(loops)):
        for b in range(a + 1, len(loops)):
            r = float(np.corrcoef(tr[:, a], tr[:, b])[0, 1])
            metrics.append(Metric(f"corr_loop{a}_loop{b}", abs(r), None, hi=bound, extra={"corr": r}))
    if cfg.param("negative_control", True):
        # the same holonomy evaluated twice on one sample: must be (almost) perfectly correlated
        r = float(np.corrcoef(tr[:, 0], tr[:, -1])[0, 1])
        metrics.append(Metric("self_pair_corr", r, None, lo=cfg.tol("self_corr_min", 0.99)))
    return _report(cfg, metrics)


_INDEP_DEFAULT = [
    {"rect": [0.5, 1.0, 1.0, 1.0]},
    {"rect": [2.0, 1.0, 1.0, 1.0]},
    # the annulus [1, 2.2] x [2.4, 3.6] minus [1.4, 1.8] x [2.8, 3.2], cut into two pieces, and its hole
    {"polygon": [[1.6, 2.4], [1.6, 2.8], [1.4, 2.8], [1.4, 3.2], [1.6, 3.2], [1.6, 3.6], [1.0, 3.6], [1.0, 2.4]]},
    {"polygon": [[1.6, 2.4], [2.2, 2.4], [2.2, 3.6], [1.6, 3.6], [1.6, 3.2], [1.8, 3.2], [1.8, 2.8], [1.6, 2.8]]},
    {"rect": [1.4, 2.8, 0.4, 0.4]},
]


def _wilson_loops_indep(cfg: ExperimentConfig) -> list[Lasso]:
    loops = [_loop_from_spec(s) for s in cfg.param("loops", _INDEP_DEFAULT)]
    if any(lp is None for lp in loops):
        raise ConfigError("independence loops must enclose positive area")
    for lp in loops:
        _check_loop(lp, cfg.grid)
    return loops


def _independence_chunk(cfg, lo, hi):
    loops = _wilson_loops_indep(cfg)
    if cfg.param("negative_control", True):
        loops = loops + [loops[0]]
    return {"tr": _holonomy_traces(cfg, loops, lo, hi)}


# -- dispatch -------------------------------------------------------------------------------


def _report(cfg: ExperimentConfig, metrics: list[Metric], tables: dict | None = None) -> ExperimentReport:
    prov = {"config": cfg.to_dict(), "seed_base": cfg.seed,
            "seed_rule": "field sample i: base ^ i; oracle sample i: base ^ (2**40 + i)",
            "grid": {"L": cfg.L, "N": cfg.N, "j_max": cfg.grid.j_max}}
    return ExperimentReport(cfg.experiment, cfg.config_hash, metrics, prov, None, _jsonable(tables or {}))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return _num(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


EXPERIMENTS: dict[str, Callable[..., ExperimentReport]] = {
    "sample_field": exp_sample_field,
    "transport": exp_transport,
    "lift": exp_lift,
    "first_level_decay": exp_first_level_decay,
    "holder_first": exp_holder_first,
    "second_level": exp_second_level,
    "wilson_density": exp_wilson_density,
    "independence": exp_independence,
}


def run_experiment(cfg: ExperimentConfig, workers: int = 1, out_dir=None) -> ExperimentReport:
    t0 = time.perf_counter()
    rep = EXPERIMENTS[cfg.experiment](cfg, workers=workers, out_dir=out_dir)
    rep.runtime_s = time.perf_counter() - t0
    return rep
