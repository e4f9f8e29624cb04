"""Torus grids, the dyadic Littlewood-Paley partition and Lie-algebra white noise.

Conventions
-----------
* Grid fields are arrays indexed ``f[i1, i2] = f(i1*h, i2*h)`` on the torus
  ``[0, L)^2``; 2D arrays are scalar fields and 3D arrays ``(dim, N, N)``
  carry one channel per basis element of su(n).
* Fourier modes are ``e_k(x) = exp(i xi_k . x) / L`` with ``xi_k = 2 pi k / L``.
  The white noise is ``W = sum_k c_k e_k`` with ``c_{-k} = conj(c_k)`` and
  ``E|c_k|^2 = 1`` for every channel.
* Spectral work is done over *representatives*: one mode from each
  conjugate pair, sorted by ``|xi|``. A field's spectrum is the vector
  ``a_k = <e_k, f>`` over a prefix of this ordering.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .liealg import AlgebraElement, dim_algebra

# inner and outer radius of the transition band of the low-pass profile
_R_FLAT = 6.0 / 7.0
_R_ZERO = 1.0


@dataclass(frozen=True, eq=False)
class TorusGrid:
    L: float
    N: int

    def __post_init__(self):
        if self.L <= 0:
            raise ValueError("side length must be positive")
        if self.N < 4 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two >= 4, got {self.N}")

    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def nyquist(self) -> float:
        return math.pi * self.N / self.L

    @property
    def j_max(self) -> int:
        """Largest j whose block rho_j sits below Nyquist: 2^(j+1) <= pi N / L."""
        return int(math.floor(math.log2(self.nyquist))) - 1

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.N) * self.h

    @cached_property
    def k(self) -> np.ndarray:
        return np.fft.fftfreq(self.N, d=1.0 / self.N).astype(int)

    @cached_property
    def xi_abs(self) -> np.ndarray:
        xi = 2 * np.pi * self.k / self.L
        return np.hypot(xi[:, None], xi[None, :])

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.x, indexing="ij")

    # -- representative ordering -------------------------------------------------

    @cached_property
    def _reps(self):
        N = self.N
        k1, k2 = np.meshgrid(self.k, self.k, indexing="ij")
        p1 = (-k1 + N // 2) % N - N // 2
        p2 = (-k2 + N // 2) % N - N // 2
        key = k1 * N + k2
        pkey = p1 * N + p2
        is_rep = key <= pkey
        r2 = k1.astype(float) ** 2 + k2.astype(float) ** 2
        sel = np.flatnonzero(is_rep.ravel())
        order = np.lexsort((k2.ravel()[sel], k1.ravel()[sel], r2.ravel()[sel]))
        sel = sel[order]
        rk1 = k1.ravel()[sel]
        rk2 = k2.ravel()[sel]
        self_conj = (key.ravel()[sel] == pkey.ravel()[sel])
        index = np.empty(N * N, dtype=np.int64)
        index[sel] = np.arange(sel.size)
        partner = (p1 % N) * N + (p2 % N)
        flat_sel = (rk1 % N) * N + (rk2 % N)
        index_full = np.empty(N * N, dtype=np.int64)
        conj_full = np.zeros(N * N, dtype=bool)
        index_full[flat_sel] = np.arange(sel.size)
        partner_of_sel = partner.reshape(N, N)[rk1 % N, rk2 % N]
        index_full[partner_of_sel] = np.arange(sel.size)
        conj_full[partner_of_sel] = True
        conj_full[flat_sel] = False
        for arr in (rk1, rk2, self_conj):
            arr.setflags(write=False)
        return rk1, rk2, self_conj, index_full.reshape(N, N), conj_full.reshape(N, N)

    @property
    def rep_k(self) -> tuple[np.ndarray, np.ndarray]:
        return self._reps[0], self._reps[1]

    @cached_property
    def rep_xi(self) -> tuple[np.ndarray, np.ndarray]:
        k1, k2 = self.rep_k
        s = 2 * np.pi / self.L
        return s * k1, s * k2

    @cached_property
    def rep_radius(self) -> np.ndarray:
        # sqrt of the integer |k|^2 keeps the sort order exact (no ties broken by rounding)
        k1, k2 = self.rep_k
        return (2 * np.pi / self.L) * np.sqrt(k1.astype(float) ** 2 + k2.astype(float) ** 2)

    @cached_property
    def rep_weight(self) -> np.ndarray:
        """2 for a conjugate pair, 1 for a self-conjugate mode."""
        return np.where(self._reps[2], 1.0, 2.0)

    @property
    def n_reps(self) -> int:
        return self.rep_weight.size

    def band_count(self, radius: float | None) -> int:
        """Number of representatives with ``|xi| < radius`` (all if None)."""
        if radius is None:
            return self.n_reps
        return int(np.searchsorted(self.rep_radius, radius, side="left"))

    def gather(self, arr: np.ndarray, m: int | None = None) -> np.ndarray:
        """Full-lattice complex array(s) (..., N, N) -> representative vector(s)."""
        k1, k2 = self.rep_k
        if m is not None:
            k1, k2 = k1[:m], k2[:m]
        return arr[..., k1 % self.N, k2 % self.N]

    def scatter(self, vals: np.ndarray) -> np.ndarray:
        """Representative vector(s) (..., m) -> Hermitian full-lattice array(s)."""
        m = vals.shape[-1]
        full_idx = self._reps[3]
        conj = self._reps[4]
        padded = np.zeros(vals.shape[:-1] + (self.n_reps,), dtype=complex)
        padded[..., :m] = vals
        out = padded[..., full_idx]
        return np.where(conj, np.conj(out), out)

    def spectrum(self, f: np.ndarray, m: int | None = None) -> np.ndarray:
        """``a_k = <e_k, f>`` of a grid field over the first ``m`` representatives."""
        F = np.fft.fft2(np.asarray(f, dtype=float), axes=(-2, -1)) * (self.h / self.N)
        return self.gather(F, m)

    def to_dict(self) -> dict:
        return {"L": self.L, "N": self.N}


# -- dyadic partition ----------------------------------------------------------


def _smooth_step(u: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for u <= 0, 1 for u >= 1, built from exp(-1/x)."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(u > 0, np.exp(-1.0 / u), 0.0)
        b = np.where(u < 1, np.exp(-1.0 / (1.0 - u)), 0.0)
    return a / (a + b)


def lowpass_profile(r) -> np.ndarray:
    """Radial low-pass profile: 1 on ``r <= 6/7``, 0 on ``r >= 1``, decreasing."""
    r = np.asarray(r, dtype=float)
    return _smooth_step((_R_ZERO - r) / (_R_ZERO - _R_FLAT))


def chi(j: int, r) -> np.ndarray:
    """Low-pass multiplier chi_j evaluated at radii ``r``."""
    return lowpass_profile(np.asarray(r, dtype=float) * 2.0 ** (-j))


def rho(j: int, r) -> np.ndarray:
    """Block multiplier rho_j; rho_{-1} = chi_0 and rho_j = chi_{j+1} - chi_j."""
    if j < -1:
        raise ValueError("dyadic blocks start at j = -1")
    if j == -1:
        return chi(0, r)
    return chi(j + 1, r) - chi(j, r)


@dataclass(frozen=True, eq=False)
class DyadicPartition:
    grid: TorusGrid

    @property
    def j_max(self) -> int:
        return self.grid.j_max

    def _check(self, j: int) -> None:
        if j > self.j_max:
            raise ValueError(f"dyadic index {j} exceeds j_max = {self.j_max}")

    @cached_property
    def _chi_tables(self) -> dict[int, np.ndarray]:
        return {j: chi(j, self.grid.xi_abs) for j in range(0, self.j_max + 2)}

    def chi(self, j: int) -> np.ndarray:
        """chi_j on the full lattice, j = 0 .. j_max + 1."""
        if j < 0:
            raise ValueError("chi_j is defined for j >= 0")
        if j > self.j_max + 1:
            raise ValueError(f"chi_{j} is not resolved by the grid")
        return self._chi_tables[j]

    def rho(self, j: int) -> np.ndarray:
        self._check(j)
        if j == -1:
            return self._chi_tables[0]
        return self._chi_tables[j + 1] - self._chi_tables[j]

    def smoothing_weights(self, j, m: int | None = None) -> np.ndarray:
        """chi_j over the first ``m`` representatives; ``j='none'`` gives ones."""
        r = self.grid.rep_radius if m is None else self.grid.rep_radius[:m]
        if _is_none(j):
            return np.ones_like(r)
        self._check(j)
        return chi(j, r)


def build_partition(grid: TorusGrid) -> DyadicPartition:
    return DyadicPartition(grid)


def _is_none(j) -> bool:
    return j is None or (isinstance(j, str) and j.lower() == "none")


def smoothing_radius(j) -> float | None:
    """Spectral radius outside which chi_j vanishes (None for no smoothing)."""
    return None if _is_none(j) else 2.0 ** j


# -- white noise ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NoiseSample:
    """One realisation of su(n)-valued white noise on the torus.

    ``values[k, r]`` is the coefficient of channel ``k`` at representative
    ``r``. Only the first ``values.shape[1]`` representatives are stored;
    a band-limited sample is an exact prefix of the full one.
    """

    seed: int
    grid: TorusGrid
    n: int
    values: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return dim_algebra(self.n)

    @property
    def n_modes(self) -> int:
        return self.values.shape[1]

    def covers(self, m: int) -> bool:
        return m <= self.n_modes

    def smoothed(self, j, m: int | None = None) -> np.ndarray:
        """chi_j * c over the first ``m`` representatives, shape (dim, m)."""
        if m is None:
            m = self.grid.band_count(smoothing_radius(j))
        if not self.covers(m):
            raise ValueError("noise sample is band-limited below the requested level")
        w = build_partition(self.grid).smoothing_weights(j, m)
        return self.values[:, :m] * w

    def coefficient_array(self) -> np.ndarray:
        """Full Hermitian coefficient arrays, shape (dim, N, N)."""
        return self.grid.scatter(self.values)


def _channel_rngs(seed: int, dim: int) -> list[np.random.Generator]:
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1))
    return [np.random.default_rng(s) for s in ss.spawn(dim)]


def sample_noise(seed: int, grid: TorusGrid, n: int = 2, band=None) -> NoiseSample:
    """Draw white-noise coefficients for every representative (or a band prefix).

    ``band`` is a dyadic index j (keep what chi_j can see) or None for the
    full lattice. Regenerating with the same seed reproduces the values
    bit-for-bit, and truncating the band never changes the kept values.
    """
    m = grid.band_count(smoothing_radius(band))
    dim = dim_algebra(n)
    selfc = grid.rep_weight[:m] == 1.0
    vals = np.empty((dim, m), dtype=complex)
    for k, rng in enumerate(_channel_rngs(seed, dim)):
        z = rng.standard_normal(2 * m).reshape(m, 2)
        v = (z[:, 0] + 1j * z[:, 1]) / np.sqrt(2.0)
        v[selfc] = z[selfc, 0]
        vals[k] = v
    vals.setflags(write=False)
    return NoiseSample(int(seed), grid, n, vals)


def sample_noise_batch(seeds, grid: TorusGrid, n: int = 2, band=None) -> np.ndarray:
    """Stacked band coefficients for many seeds, shape (B, dim, m)."""
    return np.stack([sample_noise(s, grid, n, band).values for s in seeds])


# -- spectral fields and pairings ------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpectralField:
    """A real field given by its coefficients over a representative prefix.

    ``coeffs`` may carry leading axes (several fields at once).
    """

    grid: TorusGrid
    coeffs: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.coeffs.shape[-1]

    def to_grid(self) -> np.ndarray:
        full = self.grid.scatter(self.coeffs)
        return np.real(np.fft.ifft2(full, axes=(-2, -1))) * (self.grid.N / self.grid.h)


def _as_spectrum(f, grid: TorusGrid, m: int | None) -> np.ndarray:
    if isinstance(f, SpectralField):
        if m is not None and f.n_modes < m:
            raise ValueError("spectral field does not cover the requested band")
        return f.coeffs if m is None else f.coeffs[..., :m]
    return grid.spectrum(f, m)


def contract(noise_vals: np.ndarray, spec: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``sum_k chi_k c_k conj(a_k)`` over all modes, via representatives.

    ``noise_vals`` is (..., dim, m) already multiplied by the smoothing
    weights, ``spec`` is (F, m); returns (..., F, dim) real.
    """
    z = np.conj(spec) * weights
    return np.real(np.einsum("fm,...dm->...fd", z, noise_vals))


def pair(W: NoiseSample, f, j="none") -> AlgebraElement | np.ndarray:
    """``<W, S_j f>`` as an su(n) element.

    ``f`` is a grid field (N, N) or a SpectralField; stacked spectral fields
    return an array (..., dim).
    """
    grid = W.grid
    m = grid.band_count(smoothing_radius(j))
    if not W.covers(m):
        raise ValueError("noise sample is band-limited below the requested level")
    a = _as_spectrum(f, grid, m)
    cj = W.smoothed(j, m)
    single = a.ndim == 1
    a2 = a.reshape(-1, m)
    out = contract(cj, a2, grid.rep_weight[:m])
    if single:
        return AlgebraElement(out[0], W.n)
    return out.reshape(a.shape[:-1] + (W.dim,))


def smoothed_norm2(f, grid: TorusGrid, j="none") -> np.ndarray:
    """``||S_j f||^2_{L^2}`` computed on the same modes as ``pair``."""
    m = grid.band_count(smoothing_radius(j))
    a = _as_spectrum(f, grid, m)
    w = build_partition(grid).smoothing_weights(j, m)
    return np.sum(grid.rep_weight[:m] * (w**2) * np.abs(a) ** 2, axis=-1)


def smooth_field(W: NoiseSample, j, grid: TorusGrid | None = None) -> np.ndarray:
    """Grid values of ``W^(j) = S_j W``, shape (dim, N, N)."""
    grid = grid or W.grid
    if grid is not W.grid and (grid.L, grid.N) != (W.grid.L, W.grid.N):
        raise ValueError("grid mismatch")
    if not _is_none(j):
        build_partition(W.grid)._check(j)
    cj = W.smoothed(j)
    return SpectralField(W.grid, cj).to_grid()


def apply_multiplier(f: np.ndarray, mult: np.ndarray) -> np.ndarray:
    """Real Fourier multiplier on grid field(s)."""
    F = np.fft.fft2(np.asarray(f, dtype=float), axes=(-2, -1))
    return np.real(np.fft.ifft2(F * mult, axes=(-2, -1)))


def lp_block(f: np.ndarray, grid: TorusGrid, j: int) -> np.ndarray:
    return apply_multiplier(f, build_partition(grid).rho(j))


def lp_lowpass(f: np.ndarray, grid: TorusGrid, j: int) -> np.ndarray:
    return apply_multiplier(f, build_partition(grid).chi(j))


def _lp_norm(f: np.ndarray, grid: TorusGrid, p) -> float:
    if p == 2:
        return float(grid.h * np.sqrt(np.sum(f * f)))
    if p in (np.inf, "inf"):
        return float(np.max(np.abs(f)))
    raise ValueError("p must be 2 or inf")


def besov_profile(f: np.ndarray, grid: TorusGrid, p=2) -> np.ndarray:
    """``||Delta_j f||_{L^p}`` for j = -1 .. j_max."""
    part = build_partition(grid)
    F = np.fft.fft2(np.asarray(f, dtype=float))
    out = []
    for j in range(-1, part.j_max + 1):
        rj = part.rho(j)
        if p == 2:
            # Parseval on the grid: h^2 sum |g|^2 = (h^2 / N^2) sum |G|^2
            out.append(grid.h / grid.N * np.sqrt(np.sum((rj * np.abs(F)) ** 2)))
        else:
            out.append(_lp_norm(np.real(np.fft.ifft2(F * rj)), grid, p))
    return np.array(out)


def besov_norm(f: np.ndarray, grid: TorusGrid, s: float, p=2) -> tuple[float, np.ndarray]:
    """B^s_{p,inf} norm over the resolved blocks and the per-block profile."""
    if not 0 < s <= 1:
        raise ValueError("s must lie in (0, 1]")
    prof = besov_profile(f, grid, p)
    js = np.arange(-1, grid.j_max + 1)
    return float(np.max(2.0 ** (js * s) * prof)), prof


def dyadic_shifts(grid: TorusGrid) -> list[tuple[int, int]]:
    """Lattice shifts along axes and diagonals with dyadic lengths up to L/4."""
    limit = grid.N // 4
    out = []
    m = 1
    while m <= limit:
        out += [(m, 0), (0, m)]
        if m * math.sqrt(2) <= limit:
            out += [(m, m), (m, -m)]
        m *= 2
    return out


def besov_diff_seminorm(f: np.ndarray, grid: TorusGrid, s: float, p=2) -> float:
    """``sup_h ||f - tau_h f||_{L^p} / |h|^s`` over ``dyadic_shifts``."""
    if not 0 < s < 1:
        raise ValueError("s must lie in (0, 1)")
    f = np.asarray(f, dtype=float)
    best = 0.0
    for a, b in dyadic_shifts(grid):
        d = f - np.roll(f, (-a, -b), axis=(0, 1))
        best = max(best, _lp_norm(d, grid, p) / (grid.h * math.hypot(a, b)) ** s)
    return best


def besov_diff_norm(f: np.ndarray, grid: TorusGrid, s: float, p=2) -> float:
    return _lp_norm(np.asarray(f, dtype=float), grid, p) + besov_diff_seminorm(f, grid, s, p)


def rasterize_indicator(grid: TorusGrid, x1lim, x2lim) -> np.ndarray:
    """Cell-centre rasterisation of the axis-parallel box ``x1lim x x2lim``."""
    X1, X2 = grid.mesh()
    return ((X1 >= x1lim[0]) & (X1 <= x1lim[1]) & (X2 >= x2lim[0]) & (X2 <= x2lim[1])).astype(float)


# -- export ---------------------------------------------------------------------


def write_field(path, f: np.ndarray, grid: TorusGrid) -> None:
    """Write ``path`` (little-endian float64, row-major) and ``path + '.json'``."""
    f = np.asarray(f, dtype="<f8")
    channels = 1 if f.ndim == 2 else f.shape[0]
    if f.shape[-2:] != (grid.N, grid.N):
        raise ValueError("field shape does not match grid")
    with open(path, "wb") as fh:
        fh.write(np.ascontiguousarray(f).tobytes())
    with open(str(path) + ".json", "w") as fh:
        json.dump({"L": grid.L, "N": grid.N, "channels": channels}, fh)


def read_field(path) -> tuple[np.ndarray, TorusGrid]:
    with open(str(path) + ".json") as fh:
        hdr = json.load(fh)
    try:
        L, N, ch = float(hdr["L"]), int(hdr["N"]), int(hdr["channels"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"bad field header: {exc}") from exc
    raw = np.fromfile(path, dtype="<f8")
    if raw.size != ch * N * N:
        raise ValueError(f"field has {raw.size} values, header expects {ch * N * N}")
    grid = TorusGrid(L, N)
    return (raw.reshape(N, N) if ch == 1 else raw.reshape(ch, N, N)), grid
