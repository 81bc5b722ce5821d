from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import numpy.typing as npt
from scipy import linalg

from .constants import JITTER_LADDER

logger = logging.getLogger("matkernels")

# Square arrays with entries[i, j] == entries[j, i]; produced by symmetrize()
SymMatrix = npt.NDArray[np.float64]
DenseMatrix = npt.NDArray[np.float64]
Vector = npt.NDArray[np.float64]


class NotPositiveDefinite(np.linalg.LinAlgError): ...


class ConvergenceFailure(RuntimeError): ...


class ZeroVector(ValueError): ...


class DimensionMismatch(ValueError): ...


def symmetrize(m: npt.ArrayLike) -> SymMatrix:
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"Expected a square matrix, got shape {a.shape}")
    # (a + a.T) / 2 is exactly symmetric since floating point addition commutes
    return (a + a.T) / 2


@dataclass(frozen=True)
class JitterPolicy:
    """Escalation ladder of diagonal shifts, in units of trace(m)/dim."""
    ladder: Sequence[float] = JITTER_LADDER

    def shifts(self, m: SymMatrix) -> list[float]:
        dim = m.shape[0]
        scale = float(np.trace(m)) / dim if dim else 1.0
        if not scale > 0:
            scale = 1.0
        return [float(step) * scale for step in self.ladder]


@dataclass(frozen=True)
class CholeskyFactor:
    lower: DenseMatrix
    jitter_used: float = 0.0

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def solve(self, x: npt.ArrayLike) -> DenseMatrix:
        """L^-1 x"""
        return linalg.solve_triangular(self.lower, x, lower=True)

    def solve_transposed(self, x: npt.ArrayLike) -> DenseMatrix:
        """L^-T x"""
        return linalg.solve_triangular(self.lower, x, lower=True, trans="T")

    def reconstruct(self) -> SymMatrix:
        return self.lower @ self.lower.T


def cholesky(m: npt.ArrayLike, jitter_policy: JitterPolicy | None = None) -> CholeskyFactor:
    sym = symmetrize(m)
    policy = jitter_policy if jitter_policy is not None else JitterPolicy()
    eye = np.eye(sym.shape[0])
    for shift in policy.shifts(sym):
        try:
            lower = linalg.cholesky(sym + shift * eye if shift else sym, lower=True)
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(lower)):
            continue
        if shift:
            logger.debug(f"cholesky needed a diagonal shift of {shift:.3e} (dim {sym.shape[0]})")
        return CholeskyFactor(lower=lower, jitter_used=shift)
    raise NotPositiveDefinite(f"Matrix of dim {sym.shape[0]} is not positive definite even with a shift of {policy.shifts(sym)[-1]:.3e}")


def sym_eig(m: npt.ArrayLike) -> tuple[Vector, DenseMatrix]:
    """Eigenvalues in descending order with matching orthonormal eigenvector columns."""
    sym = symmetrize(m)
    try:
        values, vectors = linalg.eigh(sym)
    except np.linalg.LinAlgError as e:
        raise ConvergenceFailure(f"Symmetric eigensolver failed on dim {sym.shape[0]}: {e}") from e
    return values[::-1].copy(), vectors[:, ::-1].copy()


def thin_svd(m: npt.ArrayLike) -> tuple[DenseMatrix, Vector, DenseMatrix]:
    """Returns (U, sigma, V) with m = U diag(sigma) V^T, sigma descending."""
    a = np.asarray(m, dtype=np.float64)
    for driver in ("gesdd", "gesvd"):
        try:
            u, sigma, vt = linalg.svd(a, full_matrices=False, lapack_driver=driver)
        except np.linalg.LinAlgError:
            logger.debug(f"svd driver {driver} failed on shape {a.shape}")
            continue
        return u, sigma, vt.T
    raise ConvergenceFailure(f"SVD failed on shape {a.shape}")


@dataclass(frozen=True)
class Reflector:
    """Householder reflector H = I - 2 u u^T mapping its generating vector onto alpha e1.

    The flagged identity stands in for H = I when no reflection is wanted.
    """
    u: Vector
    alpha: float
    identity: bool = False

    @property
    def dim(self) -> int:
        return self.u.shape[0]

    @classmethod
    def identity_of(cls, dim: int) -> Reflector:
        u = np.zeros(dim)
        u[0] = 1.0
        return cls(u=u, alpha=1.0, identity=True)

    def apply(self, x: npt.ArrayLike) -> DenseMatrix:
        """H x for a vector or for every column of a matrix."""
        a = np.asarray(x, dtype=np.float64)
        if a.shape[0] != self.dim:
            raise DimensionMismatch(f"Reflector of dim {self.dim} applied to shape {a.shape}")
        if self.identity:
            return a.copy()
        if a.ndim == 1:
            return a - 2.0 * self.u * (self.u @ a)
        return a - 2.0 * np.outer(self.u, self.u @ a)

    def apply_right(self, x: npt.ArrayLike) -> DenseMatrix:
        """x H for a matrix whose column count is dim."""
        a = np.asarray(x, dtype=np.float64)
        if a.shape[-1] != self.dim:
            raise DimensionMismatch(f"Reflector of dim {self.dim} applied from the right to shape {a.shape}")
        if self.identity:
            return a.copy()
        return a - 2.0 * np.outer(a @ self.u, self.u)

    def matrix(self) -> DenseMatrix:
        if self.identity:
            return np.eye(self.dim)
        return np.eye(self.dim) - 2.0 * np.outer(self.u, self.u)


def reflector_from(y: npt.ArrayLike) -> Reflector:
    v = np.asarray(y, dtype=np.float64).ravel()
    norm = float(np.linalg.norm(v))
    if v.size == 0 or norm == 0.0:
        raise ZeroVector(f"Cannot build a reflector from a zero vector of dim {v.size}")
    # sign(y1) is taken as 1 when y1 == 0
    alpha = -norm if v[0] >= 0 else norm
    w = v.copy()
    w[0] -= alpha
    w_norm = float(np.linalg.norm(w))
    if w_norm == 0.0:
        # only reachable through underflow; y already equals alpha e1
        return Reflector(u=Reflector.identity_of(v.size).u, alpha=float(v[0]), identity=True)
    return Reflector(u=w / w_norm, alpha=alpha)


def two_sided_reflector_update(block: npt.ArrayLike, left: Reflector, right: Reflector) -> DenseMatrix:
    """Trailing part [H_left block H_right](1:, 1:) using two rank-1 updates."""
    b = np.asarray(block, dtype=np.float64)
    if b.ndim != 2 or b.shape != (left.dim, right.dim):
        raise DimensionMismatch(f"Block of shape {b.shape} does not match reflectors of dims ({left.dim}, {right.dim})")
    return right.apply_right(left.apply(b))[1:, 1:]
