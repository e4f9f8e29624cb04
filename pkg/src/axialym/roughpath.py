"""Step-2 rough paths: truncated tensor algebra, signatures, homogeneous metrics.

An element of the step-2 group is a pair ``(x, xx)`` with ``x`` in V and
``xx`` in V (x) V stored as a ``(d, d)`` matrix; the scalar level is always 1.
All functions broadcast over leading axes.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class Level2Increment:
    x: np.ndarray
    xx: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        xx = np.asarray(self.xx, dtype=float)
        if xx.shape != x.shape + (x.shape[-1],):
            raise ValueError(f"level shapes do not match: {x.shape} and {xx.shape}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xx", xx)

    @property
    def dim(self) -> int:
        return self.x.shape[-1]

    def __matmul__(self, other: "Level2Increment") -> "Level2Increment":
        return tensor_mul(self, other)

    def inverse(self) -> "Level2Increment":
        return inverse(self)

    @classmethod
    def identity(cls, d: int) -> "Level2Increment":
        return cls(np.zeros(d), np.zeros((d, d)))


def tensor_mul(a: Level2Increment, b: Level2Increment) -> Level2Increment:
    """``(1, x, X) (x) (1, y, Y) = (1, x + y, X + Y + x (x) y)``."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return Level2Increment(a.x + b.x, a.xx + b.xx + a.x[..., :, None] * b.x[..., None, :])


def inverse(a: Level2Increment) -> Level2Increment:
    """``(1, x, X)^{-1} = (1, -x, -X + x (x) x)``."""
    return Level2Increment(-a.x, -a.xx + a.x[..., :, None] * a.x[..., None, :])


def segment_signature(delta) -> Level2Increment:
    """Signature of one straight segment: ``(1, D, D (x) D / 2)``."""
    delta = np.asarray(delta, dtype=float)
    return Level2Increment(delta, 0.5 * delta[..., :, None] * delta[..., None, :])


def cc_norm(g: Level2Increment) -> np.ndarray:
    """Homogeneous norm ``|x| + |X|^{1/2}`` (Euclidean / Frobenius)."""
    return np.linalg.norm(g.x, axis=-1) + np.sqrt(np.linalg.norm(g.xx, axis=(-2, -1)))


def cc_dist(a: Level2Increment, b: Level2Increment) -> np.ndarray:
    """``max(cc_norm(a^-1 b), cc_norm(b^-1 a))``."""
    # expanded so that equal arguments give exactly zero
    d = b.x - a.x
    dxx = b.xx - a.xx
    ab = Level2Increment(d, dxx - a.x[..., :, None] * d[..., None, :])
    ba = Level2Increment(-d, -dxx + b.x[..., :, None] * d[..., None, :])
    return np.maximum(cc_norm(ab), cc_norm(ba))


def dilate(g: Level2Increment, lam: float) -> Level2Increment:
    return Level2Increment(lam * g.x, lam * lam * g.xx)


@dataclass(frozen=True, eq=False)
class Level2Path:
    """Lift on a time grid; node k holds the increment from ``t[0]`` to ``t[k]``."""

    t: np.ndarray
    x: np.ndarray
    xx: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if t.ndim != 1 or np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if self.x.shape[-2] != t.size or self.xx.shape[-3] != t.size:
            raise ValueError("levels do not match the time grid")
        object.__setattr__(self, "t", t)

    @property
    def dim(self) -> int:
        return self.x.shape[-1]

    @property
    def n_nodes(self) -> int:
        return self.t.size

    def node(self, k: int) -> Level2Increment:
        return Level2Increment(self.x[..., k, :], self.xx[..., k, :, :])

    def increment(self, s_idx, t_idx) -> Level2Increment:
        """``X_{s,t} = X_s^{-1} (x) X_t``, vectorised over index arrays."""
        xs, xt = self.x[..., s_idx, :], self.x[..., t_idx, :]
        Xs, Xt = self.xx[..., s_idx, :, :], self.xx[..., t_idx, :, :]
        dx = xt - xs
        return Level2Increment(dx, Xt - Xs - xs[..., :, None] * dx[..., None, :])

    def to_csv(self, path) -> None:
        """Rows ``t, x_1..x_d, xx_11..xx_dd``."""
        d = self.dim
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x_{i + 1}" for i in range(d)]
                       + [f"xx_{i + 1}{j + 1}" for i in range(d) for j in range(d)])
            for k in range(self.n_nodes):
                w.writerow([repr(float(self.t[k]))] + [repr(float(v)) for v in self.x[k]]
                           + [repr(float(v)) for v in self.xx[k].ravel()])

    @classmethod
    def from_csv(cls, path) -> "Level2Path":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array(rows[1:], dtype=float)
        if not header or header[0] != "t":
            raise ValueError("not a Level2Path CSV")
        ncol = len(header) - 1
        d = int(round((np.sqrt(1 + 4 * ncol) - 1) / 2))
        if d * d + d != ncol or body.shape[1] != ncol + 1:
            raise ValueError("column count is not d + d^2")
        return cls(body[:, 0], body[:, 1:1 + d], body[:, 1 + d:].reshape(-1, d, d))


def sig_polyline(t, points) -> Level2Path:
    """Exact step-2 lift of the piecewise-linear interpolant of ``points``.

    ``points`` has shape (..., M + 1, d). Segments are composed with Chen's
    relation, so node k carries ``sig_{t_0, t_k}``.
    """
    points = np.asarray(points, dtype=float)
    if points.shape[-2] < 2:
        raise ValueError("need at least two nodes")
    x = points - points[..., :1, :]
    dx = np.diff(points, axis=-2)
    # sig_{0,k+1} = sig_{0,k} (x) (1, D, D D / 2): second level gains x_k D + D D / 2
    step = x[..., :-1, :, None] * dx[..., None, :] + 0.5 * dx[..., :, None] * dx[..., None, :]
    xx = np.concatenate([np.zeros_like(step[..., :1, :, :]), np.cumsum(step, axis=-3)], axis=-3)
    return Level2Path(np.asarray(t, dtype=float), x, xx)


def sym_defect(path: Level2Path) -> float:
    """max relative deviation of ``Sym(X_{s,t})`` from ``x_{s,t} (x) x_{s,t} / 2`` over all pairs."""
    M = path.n_nodes
    s, t = np.triu_indices(M, 1)
    inc = path.increment(s, t)
    sym = 0.5 * (inc.xx + np.swapaxes(inc.xx, -1, -2))
    target = 0.5 * inc.x[..., :, None] * inc.x[..., None, :]
    scale = np.maximum(np.linalg.norm(target, axis=(-2, -1)), 1e-300)
    err = np.linalg.norm(sym - target, axis=(-2, -1))
    return float(np.max(np.where(scale > 1e-30, err / scale, err)))


def chen_defect(path: Level2Path) -> float:
    """max over s < t < u of ``|X_{s,t} (x) X_{t,u} - X_{s,u}|``."""
    M = path.n_nodes
    worst = 0.0
    for s in range(M - 2):
        t = np.arange(s + 1, M - 1)
        for tt in t:
            u = np.arange(tt + 1, M)
            a = path.increment(np.full(u.size, s), np.full(u.size, tt))
            b = path.increment(np.full(u.size, tt), u)
            c = path.increment(np.full(u.size, s), u)
            ab = tensor_mul(a, b)
            worst = max(worst, float(np.max(np.abs(ab.x - c.x))), float(np.max(np.abs(ab.xx - c.xx))))
    return worst


def _pairs(M: int):
    return np.triu_indices(M, 1)


def holder_dist(alpha: float, X: Level2Path, Y: Level2Path | None = None) -> np.ndarray:
    """``max_{s<t} d(X_{s,t}, Y_{s,t}) / (t - s)^alpha`` over all grid pairs.

    ``Y=None`` measures the distance to the trivial path. Leading batch axes
    of X (and Y) are kept.
    """
    if Y is not None and (X.t.shape != Y.t.shape or not np.allclose(X.t, Y.t, rtol=0, atol=1e-14)):
        raise ValueError("time grids differ")
    s, t = _pairs(X.n_nodes)
    dt = (X.t[t] - X.t[s]) ** alpha
    a = X.increment(s, t)
    if Y is None:
        d = cc_norm(a)
    else:
        d = cc_dist(a, Y.increment(s, t))
    return np.max(d / dt, axis=-1)


def level2_from_lift(t, x, xx) -> Level2Path:
    return Level2Path(np.asarray(t, float), np.asarray(x, float), np.asarray(xx, float))


def matrix_path_coords(U: np.ndarray) -> np.ndarray:
    """Complex matrices (..., n, n) -> real coordinates (..., 2 n^2)."""
    U = np.asarray(U)
    flat = U.reshape(U.shape[:-2] + (-1,))
    return np.concatenate([flat.real, flat.imag], axis=-1)


def lift_matrix_path(t, U) -> Level2Path:
    """Lift of a matrix-valued path (e.g. a parallel transport) over V = Mat."""
    return sig_polyline(t, matrix_path_coords(U))


def lift_smoothed(c, W, j, t_grid) -> Level2Path:
    """Lift of ``X^(j)(t) = <W^(j), E_c 1_[0,t]>`` over V = su(n).

    The first level is exact at each node (spectral pairing with the exact
    transform of E_c); the second level is the signature of the linear
    interpolant between nodes.
    """
    from .ecal import ec_spectrum_path
    from .spectral import SpectralField, pair, smoothing_radius

    grid = W.grid
    m = grid.band_count(smoothing_radius(j))
    K = ec_spectrum_path(c, t_grid, grid, m)
    x = pair(W, SpectralField(grid, K), j)
    x = x - x[:1]
    return sig_polyline(t_grid, x)
