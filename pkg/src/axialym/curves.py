"""Piecewise-linear plane curves, lassos and the rotation count.

A curve is given by knots ``0 = t_0 < ... < t_m = 1`` and vertices ``p_i``;
it is linear between knots and constant outside ``[0, 1]``. Every vertex
must have a strictly positive first coordinate.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class Curve:
    knots: np.ndarray
    points: np.ndarray
    name: str = field(default="", compare=False)

    def __post_init__(self):
        t = np.asarray(self.knots, dtype=float)
        p = np.asarray(self.points, dtype=float)
        if t.ndim != 1 or t.size < 2 or p.shape != (t.size, 2):
            raise ValueError("need >= 2 knots and matching (m+1, 2) vertices")
        if t[0] != 0.0 or t[-1] != 1.0:
            raise ValueError("knots must start at 0 and end at 1")
        if np.any(np.diff(t) <= 0):
            raise ValueError("knots must be strictly increasing")
        if np.any(p[:, 0] <= 0):
            raise ValueError("first coordinate must stay positive along the curve")
        t.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "knots", t)
        object.__setattr__(self, "points", p)

    @property
    def n_segments(self) -> int:
        return self.knots.size - 1

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    def is_closed(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.start - self.end)) <= tol)

    def segment_index(self, t) -> np.ndarray:
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        return np.clip(np.searchsorted(self.knots, t, side="right") - 1, 0, self.n_segments - 1)

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        tc = np.clip(t, 0.0, 1.0)
        i = self.segment_index(tc)
        t0, t1 = self.knots[i], self.knots[i + 1]
        u = ((tc - t0) / (t1 - t0))[..., None]
        return (1 - u) * self.points[i] + u * self.points[i + 1]

    def velocity(self, t) -> np.ndarray:
        """Right derivative; zero outside ``[0, 1)``."""
        t = np.asarray(t, dtype=float)
        i = self.segment_index(t)
        v = (self.points[i + 1] - self.points[i]) / (self.knots[i + 1] - self.knots[i])[..., None]
        inside = ((t >= 0) & (t < 1))[..., None]
        return np.where(inside, v, 0.0)

    def segments(self):
        """Iterate ``(t0, t1, p0, p1)`` over segments."""
        for i in range(self.n_segments):
            yield self.knots[i], self.knots[i + 1], self.points[i], self.points[i + 1]

    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0), axis=1)))

    def to_json(self) -> list:
        return [[float(t), float(p[0]), float(p[1])] for t, p in zip(self.knots, self.points)]


def make_polyline(vertices, name: str = "") -> Curve:
    """Build a Curve from ``[(t, (x1, x2)), ...]`` or ``[[t, x1, x2], ...]`` rows."""
    rows = []
    for v in vertices:
        if len(v) == 2:
            t, (a, b) = v
        else:
            t, a, b = v
        rows.append((float(t), float(a), float(b)))
    arr = np.array(rows, dtype=float).reshape(-1, 3)
    return Curve(arr[:, 0], arr[:, 1:], name)


def polyline_from_points(points, name: str = "") -> Curve:
    """Curve through ``points`` with knots proportional to Euclidean arc length."""
    p = np.asarray(points, dtype=float)
    seg = np.linalg.norm(np.diff(p, axis=0), axis=1)
    if np.all(seg == 0):
        t = np.linspace(0.0, 1.0, p.shape[0])
    else:
        seg = np.where(seg == 0, 1e-9 * seg.max(), seg)
        t = np.concatenate([[0.0], np.cumsum(seg) / seg.sum()])
        t[-1] = 1.0
    return Curve(t, p, name)


def constant_curve(point, name: str = "") -> Curve:
    return Curve(np.array([0.0, 1.0]), np.array([point, point], dtype=float), name)


def reverse(c: Curve) -> Curve:
    """``t -> c(1 - t)``."""
    return Curve(1.0 - c.knots[::-1], c.points[::-1], c.name + "~" if c.name else "")


def concat(c2: Curve, c1: Curve, tol: float = 1e-12) -> Curve:
    """Run ``c1`` on [0, 1/2] then ``c2`` on [1/2, 1], each at double speed."""
    if np.max(np.abs(c1.end - c2.start)) > tol:
        raise ValueError(f"cannot concatenate: c1 ends at {c1.end}, c2 starts at {c2.start}")
    t = np.concatenate([0.5 * c1.knots, 0.5 + 0.5 * c2.knots[1:]])
    p = np.concatenate([c1.points, c2.points[1:]])
    return Curve(t, p)


def shoelace_area(points) -> float:
    """Signed area of the closed polygon through ``points`` (positive = anticlockwise)."""
    p = np.asarray(points, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, c) -> bool:
    return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])


def segments_intersect(p1, p2, q1, q2) -> bool:
    d1, d2 = _orient(q1, q2, p1), _orient(q1, q2, p2)
    d3, d4 = _orient(p1, p2, q1), _orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 * d2 != 0 and d3 * d4 != 0:
        return True
    return (
        (d1 == 0 and _on_segment(q1, q2, p1))
        or (d2 == 0 and _on_segment(q1, q2, p2))
        or (d3 == 0 and _on_segment(p1, p2, q1))
        or (d4 == 0 and _on_segment(p1, p2, q2))
    )


def _dedupe(points: np.ndarray) -> np.ndarray:
    keep = np.concatenate([[True], np.any(np.diff(points, axis=0) != 0, axis=1)])
    return points[keep]


def is_simple_loop(c: Curve) -> bool:
    """Closed, and no two non-adjacent segments meet (O(m^2) pairwise test)."""
    if not c.is_closed():
        return False
    p = _dedupe(c.points)
    m = p.shape[0] - 1
    if m < 3:
        return False
    for i in range(m):
        for k in range(i + 1, m):
            adjacent = k == i + 1 or (i == 0 and k == m - 1)
            if adjacent:
                # adjacent segments may only share their common vertex
                a0, a1, b0, b1 = p[i], p[i + 1], p[k], p[k + 1]
                if k == i + 1:
                    shared, other_a, other_b = a1, a0, b1
                else:
                    shared, other_a, other_b = a0, a1, b0
                if _orient(other_a, shared, other_b) == 0:
                    # collinear: must point in opposite directions
                    if np.dot(other_a - shared, other_b - shared) > 0:
                        return False
                continue
            if segments_intersect(p[i], p[i + 1], p[k], p[k + 1]):
                return False
    return True


@dataclass(frozen=True, eq=False)
class Lasso:
    """``stem`` from the base point to the loop, the loop, then the stem back."""

    loop: Curve
    stem: Curve | None = None
    name: str = ""

    def __post_init__(self):
        if not is_simple_loop(self.loop):
            raise ValueError("lasso loop must be a simple closed polyline")
        if shoelace_area(self.loop.points) <= 0:
            raise ValueError("lasso loop must run anticlockwise")
        if self.stem is not None and np.max(np.abs(self.stem.end - self.loop.start)) > 1e-12:
            raise ValueError("stem must end where the loop starts")

    @property
    def base(self) -> np.ndarray:
        return self.loop.start if self.stem is None else self.stem.start

    @property
    def area(self) -> float:
        return shoelace_area(self.loop.points)

    @property
    def region(self) -> np.ndarray:
        """Vertices of the enclosed polygon D(c)."""
        return _dedupe(self.loop.points)[:-1]

    def composite(self) -> Curve:
        if self.stem is None or np.all(self.stem.points == self.stem.points[0]):
            return self.loop
        return concat(reverse(self.stem), concat(self.loop, self.stem))

    def to_json(self) -> dict:
        return {"stem": None if self.stem is None else self.stem.to_json(), "loop": self.loop.to_json()}


def polygon_lasso(vertices, stem_from=None, name: str = "") -> Lasso:
    """Lasso around the polygon ``vertices`` (anticlockwise, not closed)."""
    v = np.asarray(vertices, dtype=float)
    loop = polyline_from_points(np.vstack([v, v[:1]]), name)
    stem = None
    if stem_from is not None:
        stem = polyline_from_points(np.array([stem_from, v[0]], dtype=float))
    return Lasso(loop, stem, name)


def rectangle_lasso(x, eps1: float, eps2: float, stem_from=None, name: str = "") -> Lasso:
    """Anticlockwise loop around ``[x1, x1+eps1] x [x2, x2+eps2]`` starting at ``x``."""
    if eps1 <= 0 or eps2 <= 0:
        raise ValueError("rectangle sides must be positive")
    x1, x2 = float(x[0]), float(x[1])
    if x1 <= 0:
        raise ValueError("rectangle must lie in the half plane x1 > 0")
    verts = [(x1, x2), (x1 + eps1, x2), (x1 + eps1, x2 + eps2), (x1, x2 + eps2)]
    return polygon_lasso(verts, stem_from, name)


def lasso_from_json(obj) -> Lasso:
    stem = obj.get("stem")
    return Lasso(make_polyline(obj["loop"]), make_polyline(stem) if stem else None, obj.get("name", ""))


def curve_from_json(obj) -> Curve:
    if isinstance(obj, str):
        obj = json.loads(obj)
    return make_polyline(obj)


# -- rotation count --------------------------------------------------------------


def _crossings_at_level(c: Curve, y: float):
    """(t*, x1, sign) of every transversal crossing of the level ``x2 = y``."""
    out = []
    for t0, t1, p0, p1 in c.segments():
        lo, hi = sorted((p0[1], p1[1]))
        if p0[1] == p1[1] or not (lo < y < hi):
            continue
        u = (y - p0[1]) / (p1[1] - p0[1])
        out.append((t0 + u * (t1 - t0), p0[0] + u * (p1[0] - p0[0]), np.sign(p1[1] - p0[1])))
    out.sort()
    return out


def rotation_count(c: Curve) -> int:
    """``sup_{s,t} ||E_c 1_[s,t]||_inf`` for a polyline.

    At a generic level the crossings are ordered in t; for a threshold on
    x1 the contributing crossings form a subsequence, and the largest
    |window sum| of its signs is ``max prefix - min prefix``.
    """
    ys = np.unique(c.points[:, 1])
    if ys.size < 2:
        return 0
    best = 0
    for y in 0.5 * (ys[:-1] + ys[1:]):
        cross = _crossings_at_level(c, y)
        if not cross:
            continue
        xs = np.array([x for _, x, _ in cross])
        sg = np.array([s for _, _, s in cross])
        for thr in np.unique(xs):
            seq = sg[xs >= thr]
            pref = np.concatenate([[0.0], np.cumsum(seq)])
            best = max(best, int(round(pref.max() - pref.min())))
    return best


def refine_knots(c: Curve, n_min: int) -> np.ndarray:
    """Time grid containing every knot, with at least ``n_min`` intervals.

    Each segment gets a number of equal sub-steps proportional to its
    Euclidean length (at least one).
    """
    lens = np.linalg.norm(np.diff(c.points, axis=0), axis=1)
    total = lens.sum()
    if total == 0:
        counts = np.full(c.n_segments, max(1, -(-n_min // c.n_segments)))
    else:
        counts = np.maximum(1, np.ceil(n_min * lens / total).astype(int))
    parts = [np.linspace(t0, t1, k + 1)[:-1] for (t0, t1, _, _), k in zip(c.segments(), counts)]
    return np.concatenate(parts + [np.array([1.0])])


def uniform_grid(n: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, n + 1)
