"""Small dense linear algebra: eigendecomposition, matrix exponentials, inverses.

Matrices are plain 2-D ``numpy`` arrays. The plant is two-state, so the 2x2
case takes a closed-form path written in scalar complex arithmetic; larger
systems (augmented realizations used in analysis) go through LAPACK.

``expm_eigen`` is the exact exponential ``S diag(exp(lambda*dt)) S^-1`` used by
the controllers. ``expm_series`` is a Taylor expansion with scaling and
squaring; at low order it is the conventional-MPC transition matrix and at
high order it is the independent accuracy oracle for ``expm_eigen``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import ImaginaryResidualTooLarge, NonDiagonalizable, Singular

RCOND_MIN = 1e-12
IMAG_TOL = 1e-9

__all__ = [
    "EigenDecomposition",
    "eig",
    "expm_eigen",
    "expm_series",
    "inverse",
    "rcond",
    "max_real_eig",
    "as_matrix",
]


def as_matrix(a, square: bool = False) -> np.ndarray:
    """Validate and return ``a`` as a finite 2-D float array."""
    m = np.asarray(a, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    if square and m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    # inf and nan both survive summation, so one reduction suffices
    if not math.isfinite(m.sum()):
        raise ValueError("matrix has non-finite entries")
    return m


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues ``values`` with eigenvector columns ``vectors`` and their inverse."""

    values: np.ndarray
    vectors: np.ndarray
    inverse_vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.inverse_vectors


def _eig2(a: float, b: float, c: float, d: float):
    """Closed-form eigen-data of [[a, b], [c, d]] as python scalars.

    Returns (l1, l2, s11, s12, s21, s22, i11, i12, i21, i22, rc) where s.. are
    the unit-norm eigenvector columns, i.. the inverse and rc the reciprocal
    1-norm condition number of S.
    """
    if b == 0.0 and c == 0.0:
        return a, d, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0
    big = max(abs(a), abs(b), abs(c), abs(d))
    exp = 0
    if big < 1e-100 or big > 1e100:
        # Exact power-of-two rescale keeps the discriminant representable.
        exp = math.frexp(big)[1]
        a, b, c, d = (math.ldexp(v, -exp) for v in (a, b, c, d))
    half_tr = 0.5 * (a + d)
    half_diff = 0.5 * (a - d)
    # sqrt(half_diff^2 + b c) without squaring the small off-diagonal product.
    geo = math.sqrt(abs(b)) * math.sqrt(abs(c))
    if b == 0.0 or c == 0.0 or (b > 0) == (c > 0):
        root = complex(math.hypot(half_diff, geo))
    elif geo >= abs(half_diff):
        root = 1j * math.sqrt((geo - abs(half_diff)) * (geo + abs(half_diff)))
    else:
        root = complex(math.sqrt((abs(half_diff) - geo) * (abs(half_diff) + geo)))
    scale = math.ldexp(1.0, exp)
    lams = ((half_tr + root) * scale, (half_tr - root) * scale)
    cols = []
    for sign in (1.0, -1.0):
        # Two candidate null vectors of (A - lam I); keep the better scaled one.
        # lam - a and lam - d are formed from the root to avoid cancellation.
        v1 = (b, sign * root - half_diff)
        v2 = (sign * root + half_diff, c)
        n1 = math.hypot(abs(v1[0]), abs(v1[1]))
        n2 = math.hypot(abs(v2[0]), abs(v2[1]))
        v, nv = (v1, n1) if n1 >= n2 else (v2, n2)
        cols.append((v[0] / nv, v[1] / nv))
    s11, s21 = cols[0]
    s12, s22 = cols[1]
    det = s11 * s22 - s12 * s21
    norm_s = max(abs(s11) + abs(s21), abs(s12) + abs(s22))
    if det == 0.0:
        rc = 0.0
        return lams[0], lams[1], s11, s12, s21, s22, 0.0, 0.0, 0.0, 0.0, rc
    i11, i12, i21, i22 = s22 / det, -s12 / det, -s21 / det, s11 / det
    norm_i = max(abs(i11) + abs(i21), abs(i12) + abs(i22))
    rc = 1.0 / (norm_s * norm_i)
    return lams[0], lams[1], s11, s12, s21, s22, i11, i12, i21, i22, rc


def eig(a) -> EigenDecomposition:
    """Eigendecomposition A = S diag(lambda) S^-1.

    Raises NonDiagonalizable when the reciprocal condition number of S is
    below ``RCOND_MIN``; repeated eigenvalues of a defective matrix land here.
    """
    m = as_matrix(a, square=True)
    n = m.shape[0]
    if n == 1:
        one = np.ones((1, 1), dtype=complex)
        return EigenDecomposition(m[0].astype(complex), one, one.copy())
    if n == 2:
        l1, l2, s11, s12, s21, s22, i11, i12, i21, i22, rc = _eig2(
            m[0, 0], m[0, 1], m[1, 0], m[1, 1]
        )
        if rc < RCOND_MIN:
            raise NonDiagonalizable(f"eigenvector matrix is singular (rcond={rc:.3g})")
        return EigenDecomposition(
            np.array([l1, l2], dtype=complex),
            np.array([[s11, s12], [s21, s22]], dtype=complex),
            np.array([[i11, i12], [i21, i22]], dtype=complex),
        )
    values, vectors = np.linalg.eig(m)
    vectors = vectors.astype(complex)
    try:
        inv = np.linalg.inv(vectors)
    except np.linalg.LinAlgError as exc:
        raise NonDiagonalizable("eigenvector matrix is singular") from exc
    rc = 1.0 / (np.linalg.norm(vectors, 1) * np.linalg.norm(inv, 1))
    if rc < RCOND_MIN:
        raise NonDiagonalizable(f"eigenvector matrix is singular (rcond={rc:.3g})")
    return EigenDecomposition(values.astype(complex), vectors, inv)


def expm_eigen(a, dt: float) -> np.ndarray:
    """Exact matrix exponential exp(A*dt) via eigendecomposition.

    Complex-conjugate eigenpairs are handled in complex arithmetic and the
    result projected onto the reals; the discarded imaginary part must stay
    below ``IMAG_TOL``.
    """
    m = as_matrix(a, square=True)
    n = m.shape[0]
    if n == 2:
        l1, l2, s11, s12, s21, s22, i11, i12, i21, i22, rc = _eig2(*m.ravel().tolist())
        if rc < RCOND_MIN:
            raise NonDiagonalizable(f"eigenvector matrix is singular (rcond={rc:.3g})")
        e1 = cmath.exp(l1 * dt)
        e2 = cmath.exp(l2 * dt)
        r11 = s11 * e1 * i11 + s12 * e2 * i21
        r12 = s11 * e1 * i12 + s12 * e2 * i22
        r21 = s21 * e1 * i11 + s22 * e2 * i21
        r22 = s21 * e1 * i12 + s22 * e2 * i22
        leak = max(abs(r11.imag), abs(r12.imag), abs(r21.imag), abs(r22.imag))
        if leak > IMAG_TOL:
            raise ImaginaryResidualTooLarge(f"imaginary residual {leak:.3g}")
        return np.array([[r11.real, r12.real], [r21.real, r22.real]])
    dec = eig(m)
    full = (dec.vectors * np.exp(dec.values * dt)) @ dec.inverse_vectors
    leak = float(np.max(np.abs(full.imag)))
    if leak > IMAG_TOL:
        raise ImaginaryResidualTooLarge(f"imaginary residual {leak:.3g}")
    return np.ascontiguousarray(full.real)


def expm_series(a, dt: float, order: int = 20, theta: float = 0.5) -> np.ndarray:
    """Truncated Taylor series of exp(A*dt) with scaling and squaring.

    The argument is scaled by 2**-s so its 1-norm is at most ``theta``, the
    series is summed through ``order`` terms, and the result squared s times.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    m = as_matrix(a, square=True) * float(dt)
    n = m.shape[0]
    norm = float(np.linalg.norm(m, 1))
    s = 0
    if norm > theta:
        s = int(math.ceil(math.log2(norm / theta)))
    m = m / (2.0**s)
    result = np.eye(n)
    term = np.eye(n)
    for k in range(1, order + 1):
        term = term @ m / k
        result = result + term
    for _ in range(s):
        result = result @ result
    return result


def rcond(a) -> float:
    """Reciprocal 1-norm condition number (0 for exactly singular input)."""
    m = as_matrix(a, square=True)
    if m.shape == (2, 2):
        a11, a12, a21, a22 = m.ravel().tolist()
        det = a11 * a22 - a12 * a21
        if det == 0.0:
            return 0.0
        norm_a = max(abs(a11) + abs(a21), abs(a12) + abs(a22))
        norm_i = max(abs(a22) + abs(a21), abs(a12) + abs(a11)) / abs(det)
        return 1.0 / (norm_a * norm_i)
    try:
        inv = np.linalg.inv(m)
    except np.linalg.LinAlgError:
        return 0.0
    denom = np.linalg.norm(m, 1) * np.linalg.norm(inv, 1)
    return 0.0 if denom == 0 or not np.isfinite(denom) else 1.0 / denom


def inverse(a) -> np.ndarray:
    """Matrix inverse; raises Singular when rcond < ``RCOND_MIN``."""
    m = as_matrix(a, square=True)
    n = m.shape[0]
    if n == 1:
        if abs(m[0, 0]) == 0.0:
            raise Singular("zero scalar has no inverse")
        return 1.0 / m
    if n == 2:
        a11, a12, a21, a22 = m.ravel().tolist()
        det = a11 * a22 - a12 * a21
        if det == 0.0:
            raise Singular("matrix is exactly singular")
        norm_a = max(abs(a11) + abs(a21), abs(a12) + abs(a22))
        norm_i = max(abs(a22) + abs(a21), abs(a12) + abs(a11)) / abs(det)
        if 1.0 / (norm_a * norm_i) < RCOND_MIN:
            raise Singular(f"matrix is numerically singular (rcond={1.0 / (norm_a * norm_i):.3g})")
        return np.array([[a22 / det, -a12 / det], [-a21 / det, a11 / det]])
    else:
        try:
            inv = np.linalg.inv(m)
        except np.linalg.LinAlgError as exc:
            raise Singular("matrix is singular") from exc
    rc = 1.0 / (np.linalg.norm(m, 1) * np.linalg.norm(inv, 1))
    if rc < RCOND_MIN:
        raise Singular(f"matrix is numerically singular (rcond={rc:.3g})")
    return inv


def max_real_eig(a) -> float:
    """Largest real part among the eigenvalues of a square matrix."""
    m = np.asarray(a, dtype=float)
    if m.shape == (2, 2):
        a11, a12, a21, a22 = m.ravel().tolist()
        half_tr = 0.5 * (a11 + a22)
        disc = (0.5 * (a11 - a22)) ** 2 + a12 * a21
        return half_tr + math.sqrt(disc) if disc > 0 else half_tr
    return float(np.max(np.linalg.eigvals(m).real))
