"""Small dense linear algebra used throughout the package.

Matrices are plain ``numpy`` arrays.  ``vec`` stacks columns (Fortran
order); every other routine is order-agnostic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "NotPdError",
    "SpdFactor",
    "vec",
    "unvec",
    "kron",
    "spd_factorize",
    "spd_solve",
    "spd_inverse",
    "rank",
    "JITTER_START",
    "JITTER_MAX",
]

# Jitter is relative to the mean diagonal entry Tr(A)/d.
JITTER_START = 1e-12
JITTER_MAX = 1e-6
SYMMETRY_RTOL = 1e-12


class NotPdError(np.linalg.LinAlgError):
    """Raised when a matrix cannot be Cholesky-factorized, even with jitter."""


@dataclass(frozen=True)
class SpdFactor:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    ``lower @ lower.T`` reproduces the input plus ``jitter * I``.
    """

    lower: np.ndarray
    jitter: float = 0.0

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def matrix(self) -> np.ndarray:
        return self.lower @ self.lower.T

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))


def vec(a) -> np.ndarray:
    """Stack the columns of ``a`` into one vector, leftmost column first."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        return a.copy()
    return a.reshape(-1, order="F")


def unvec(v, rows: int) -> np.ndarray:
    """Inverse of :func:`vec` for a matrix with ``rows`` rows."""
    v = np.asarray(v, dtype=float)
    return v.reshape(rows, -1, order="F")


def kron(a, b) -> np.ndarray:
    """Kronecker product; block (i, j) of the result is ``a[i, j] * b``."""
    return np.kron(np.atleast_2d(np.asarray(a, dtype=float)), np.atleast_2d(np.asarray(b, dtype=float)))


def _check_symmetric(a: np.ndarray) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(np.max(np.abs(a)), 1.0) if a.size else 1.0
    if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_RTOL * scale:
        raise ValueError("matrix is not symmetric")


def spd_factorize(a, jitter: bool = True) -> SpdFactor:
    """Cholesky factorization with an escalating diagonal jitter.

    With ``jitter`` enabled the first failure adds ``1e-12 * Tr(A)/d`` to the
    diagonal, escalating by factors of ten up to ``1e-6 * Tr(A)/d``.

    Raises
    ------
    NotPdError
        If no admissible jitter level yields a factorization.
    """
    a = np.asarray(a, dtype=float)
    _check_symmetric(a)
    if not np.all(np.isfinite(a)):
        raise NotPdError("matrix has non-finite entries")
    a = 0.5 * (a + a.T)
    try:
        return SpdFactor(np.linalg.cholesky(a), 0.0)
    except np.linalg.LinAlgError:
        if not jitter:
            raise NotPdError("matrix is not positive definite") from None
    d = a.shape[0]
    scale = np.trace(a) / d
    if scale <= 0:
        raise NotPdError("matrix is not positive definite (non-positive trace)")
    level = JITTER_START
    eye = np.eye(d)
    while level <= JITTER_MAX * (1 + 1e-9):
        eps = level * scale
        try:
            return SpdFactor(np.linalg.cholesky(a + eps * eye), eps)
        except np.linalg.LinAlgError:
            level *= 10.0
    raise NotPdError(f"matrix is not positive definite even with jitter {JITTER_MAX:g}*Tr/d")


def spd_solve(factor: SpdFactor, b) -> np.ndarray:
    """Solve ``A X = B`` given the Cholesky factor of ``A``."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != factor.dim:
        raise ValueError(f"dimension mismatch: factor is {factor.dim}, rhs has {b.shape[0]} rows")
    return scipy.linalg.cho_solve((factor.lower, True), b)


def spd_inverse(factor: SpdFactor) -> np.ndarray:
    inv = spd_solve(factor, np.eye(factor.dim))
    return 0.5 * (inv + inv.T)


def rank(a, tol: float = 1e-10) -> int:
    """Numerical rank from a column-pivoted QR factorization.

    A pivot counts when its magnitude exceeds ``tol`` times the largest pivot.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return 0
    r = scipy.linalg.qr(a, mode="r", pivoting=True)[0]
    pivots = np.abs(np.diag(r))
    if pivots.size == 0 or pivots[0] == 0.0:
        return 0
    return int(np.sum(pivots > tol * pivots[0]))
