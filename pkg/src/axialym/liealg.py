"""Arithmetic for su(n) and SU(n).

Algebra elements are stored as real coefficient vectors over a fixed
Hilbert-Schmidt orthonormal basis of anti-Hermitian traceless matrices.
Most functions also accept stacked inputs (leading batch axes).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

GROUP_TOL = 1e-10
ALGEBRA_TOL = 1e-12


@lru_cache(maxsize=None)
def _basis_array(n: int) -> np.ndarray:
    if n < 2:
        raise ValueError(f"su(n) needs n >= 2, got {n}")
    mats = []
    s = 1.0 / np.sqrt(2.0)
    # antisymmetric real pairs
    for a in range(n):
        for b in range(a + 1, n):
            m = np.zeros((n, n), dtype=complex)
            m[a, b], m[b, a] = s, -s
            mats.append(m)
    # symmetric imaginary pairs
    for a in range(n):
        for b in range(a + 1, n):
            m = np.zeros((n, n), dtype=complex)
            m[a, b] = m[b, a] = 1j * s
            mats.append(m)
    # diagonal traceless imaginary generators
    for l in range(1, n):
        d = np.zeros(n)
        d[:l] = 1.0
        d[l] = -l
        d /= np.sqrt(l * (l + 1))
        mats.append(np.diag(1j * d))
    out = np.array(mats)
    out.setflags(write=False)
    return out


def basis(n: int) -> np.ndarray:
    """Orthonormal basis of su(n), shape ``(n*n - 1, n, n)``.

    The ordering is: real antisymmetric pairs, imaginary symmetric pairs,
    then the ``n - 1`` diagonal generators. Each element has unit
    Hilbert-Schmidt norm.
    """
    return _basis_array(n)


def dim_algebra(n: int) -> int:
    return n * n - 1


def hs_inner(x, y):
    """Hilbert-Schmidt pairing ``Tr(X^* Y)`` over the last two axes."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape[-2:] != y.shape[-2:]:
        raise ValueError(f"dimension mismatch: {x.shape[-2:]} vs {y.shape[-2:]}")
    return np.einsum("...ij,...ij->...", np.conj(x), y)


def to_matrix(coeffs, n: int) -> np.ndarray:
    """Coefficients (..., n*n-1) -> anti-Hermitian matrices (..., n, n)."""
    coeffs = np.asarray(coeffs, dtype=float)
    return np.tensordot(coeffs, basis(n), axes=([-1], [0]))


def to_coeffs(mat) -> np.ndarray:
    """Project matrices (..., n, n) onto the basis; returns real coefficients."""
    mat = np.asarray(mat)
    n = mat.shape[-1]
    return np.real(np.einsum("kij,...ij->...k", np.conj(basis(n)), mat))


def exp_map(x) -> np.ndarray:
    """Matrix exponential of anti-Hermitian matrices (..., n, n).

    Uses the eigendecomposition of the Hermitian matrix ``iX``, so the result
    is unitary to rounding. The determinant is renormalised onto 1, which only
    removes rounding drift for traceless input.
    """
    x = np.asarray(x, dtype=complex)
    n = x.shape[-1]
    if n == 2:
        return _exp_su2(x)
    w, v = np.linalg.eigh(1j * x)
    # exp(X) = V exp(-i w) V^*
    phase = np.exp(-1j * w)
    u = np.einsum("...ij,...j,...kj->...ik", v, phase, np.conj(v))
    det = np.linalg.det(u)
    return u / (det ** (1.0 / n))[..., None, None]


def _exp_su2(x: np.ndarray) -> np.ndarray:
    # X traceless anti-Hermitian => X^2 = -theta^2 I
    x0 = 0.5 * (x - np.conj(np.swapaxes(x, -1, -2)))
    tr = 0.5 * (x0[..., 0, 0] + x0[..., 1, 1])
    x0 = x0 - tr[..., None, None] * np.eye(2)
    theta2 = np.real(-(x0[..., 0, 0] ** 2 + x0[..., 0, 1] * x0[..., 1, 0]))
    theta = np.sqrt(np.maximum(theta2, 0.0))
    c = np.cos(theta)
    s = np.sinc(theta / np.pi)
    return c[..., None, None] * np.eye(2) + s[..., None, None] * x0


def exp_coeffs(coeffs, n: int) -> np.ndarray:
    """``exp_map`` applied to coefficient vectors."""
    return exp_map(to_matrix(coeffs, n))


def dagger(u) -> np.ndarray:
    return np.conj(np.swapaxes(np.asarray(u), -1, -2))


def unitarity_defect(u) -> float:
    """max-entry norm of ``U^*U - I`` over all stacked matrices."""
    u = np.asarray(u)
    n = u.shape[-1]
    return float(np.max(np.abs(dagger(u) @ u - np.eye(n))))


def det_defect(u) -> float:
    return float(np.max(np.abs(np.linalg.det(np.asarray(u)) - 1.0)))


@dataclass(frozen=True)
class AlgebraElement:
    coeffs: np.ndarray
    n: int

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (dim_algebra(self.n),):
            raise ValueError(f"expected {dim_algebra(self.n)} coefficients, got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @property
    def matrix(self) -> np.ndarray:
        return to_matrix(self.coeffs, self.n)

    def norm2(self) -> float:
        return float(self.coeffs @ self.coeffs)

    def __add__(self, other: "AlgebraElement") -> "AlgebraElement":
        return AlgebraElement(self.coeffs + other.coeffs, self.n)

    def __neg__(self) -> "AlgebraElement":
        return AlgebraElement(-self.coeffs, self.n)

    def __mul__(self, a: float) -> "AlgebraElement":
        return AlgebraElement(a * self.coeffs, self.n)

    __rmul__ = __mul__

    def exp(self) -> "GroupElement":
        return GroupElement(exp_map(self.matrix))

    @classmethod
    def from_matrix(cls, mat, tol: float = ALGEBRA_TOL) -> "AlgebraElement":
        mat = np.asarray(mat)
        n = mat.shape[-1]
        c = to_coeffs(mat)
        if np.max(np.abs(to_matrix(c, n) - mat)) > tol * max(1.0, float(np.max(np.abs(mat)))):
            raise ValueError("matrix is not in su(n) (anti-Hermitian, traceless)")
        return cls(c, n)


@dataclass(frozen=True)
class GroupElement:
    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=complex)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ValueError("group element must be a square matrix")
        object.__setattr__(self, "entries", e)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        return GroupElement(self.entries @ other.entries)

    def inverse(self) -> "GroupElement":
        return GroupElement(dagger(self.entries))

    def is_valid(self, tol: float = GROUP_TOL) -> bool:
        return unitarity_defect(self.entries) <= tol and det_defect(self.entries) <= tol

    @classmethod
    def identity(cls, n: int) -> "GroupElement":
        return cls(np.eye(n, dtype=complex))
