from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import numpy.typing as npt
from scipy.sparse.linalg import ArpackNoConvergence, aslinearoperator, eigsh

from .constants import (
    DENSE_TRS_THRESHOLD,
    DENSE_TRS_TOL,
    HARD_CASE_TOL,
    LANCZOS_TRS_TOL,
    MAX_LANCZOS_DIM,
    MAX_NEWTON_ITER,
)
from .matkernels import ConvergenceFailure, DenseMatrix, DimensionMismatch, SymMatrix, Vector, sym_eig, symmetrize

logger = logging.getLogger("trs")

_EPS = float(np.finfo(np.float64).eps)


class Breakdown(ArithmeticError): ...


@dataclass(frozen=True)
class TrsProblem:
    """maximize x^T a x + 2 b^T x subject to ||x|| = 1"""
    a: SymMatrix
    b: Vector

    def __post_init__(self) -> None:
        if self.a.ndim != 2 or self.a.shape[0] != self.a.shape[1]:
            raise DimensionMismatch(f"TRS matrix must be square, got {self.a.shape}")
        if self.b.shape != (self.a.shape[0],):
            raise DimensionMismatch(f"TRS vector of shape {self.b.shape} does not match matrix {self.a.shape}")

    @classmethod
    def of(cls, a: npt.ArrayLike, b: npt.ArrayLike) -> TrsProblem:
        return cls(a=symmetrize(a), b=np.asarray(b, dtype=np.float64).ravel())

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    def value(self, x: Vector) -> float:
        return float(x @ self.a @ x + 2.0 * (self.b @ x))

    def kkt_residual(self, x: Vector, multiplier: float) -> float:
        return float(np.linalg.norm(multiplier * x - self.a @ x - self.b))


@dataclass(frozen=True)
class TrsSolution:
    x: Vector
    value: float
    multiplier: float
    hard_case: bool
    iterations: int = 0


@dataclass(frozen=True)
class TrsOptions:
    dense_threshold: int = DENSE_TRS_THRESHOLD
    dense_tol: float = DENSE_TRS_TOL
    lanczos_tol: float = LANCZOS_TRS_TOL
    max_lanczos_dim: int = MAX_LANCZOS_DIM
    max_newton_iter: int = MAX_NEWTON_ITER
    seed: int = 0


def _secular(beta: Vector, gaps: Vector, delta: float) -> tuple[float, float]:
    # psi(delta) = 1/||x|| - 1 with x_i = beta_i / (delta + gap_i), and its derivative
    shifted = delta + gaps
    coef = np.divide(beta, shifted, out=np.zeros_like(beta), where=beta != 0)
    norm2 = float(coef @ coef)
    norm = np.sqrt(norm2)
    slope = float(np.sum(coef * coef / np.where(beta != 0, shifted, 1.0))) / (norm2 * norm)
    return 1.0 / norm - 1.0, slope


def _solve_secular(beta: Vector, gaps: Vector, lower: float, upper: float, tol: float, max_iter: int) -> tuple[float, int]:
    """Safeguarded Newton for psi(delta) = 0 on (lower, upper]; psi is increasing and concave."""
    lo, hi = lower, upper
    delta = lo if lo > 0 else hi
    for it in range(1, max_iter + 1):
        psi, slope = _secular(beta, gaps, delta)
        if abs(psi) <= tol:
            return delta, it
        if psi < 0:
            lo = delta
        else:
            hi = delta
        if hi - lo <= 4 * _EPS * max(hi, 1.0):
            return delta, it
        step = delta - psi / slope if slope > 0 else np.nan
        if not (np.isfinite(step) and lo < step < hi):
            step = 0.5 * (lo + hi)
        delta = step
    raise ConvergenceFailure(f"Secular equation did not converge in {max_iter} Newton iterations")


def solve_trs_dense(
    p: TrsProblem,
    tol: float = DENSE_TRS_TOL,
    max_iter: int = MAX_NEWTON_ITER,
    eig: Optional[tuple[Vector, DenseMatrix]] = None,
) -> TrsSolution:
    """Global maximizer through the eigen-decomposition of a.

    `eig` may carry a precomputed (descending) decomposition of `p.a` so that
    callers solving many problems with the same matrix factor it once.
    """
    values, vectors = eig if eig is not None else sym_eig(p.a)
    b_norm = float(np.linalg.norm(p.b))
    top_value = float(values[0])

    if b_norm == 0.0:
        x = vectors[:, 0].copy()
        return TrsSolution(x=x, value=p.value(x), multiplier=top_value, hard_case=True)

    beta = vectors.T @ p.b
    gaps = np.maximum(top_value - values, 0.0)
    scale = max(abs(top_value), abs(float(values[-1])), 1.0)
    top = gaps <= 64 * _EPS * scale

    if np.all(np.abs(beta[top]) <= HARD_CASE_TOL * b_norm):
        rest = ~top
        coef = np.zeros_like(beta)
        coef[rest] = beta[rest] / gaps[rest]
        rest_norm = float(np.linalg.norm(coef))
        if rest_norm <= 1.0:
            tau = np.sqrt(max(0.0, 1.0 - rest_norm * rest_norm))
            best: Optional[TrsSolution] = None
            for sign in (1.0, -1.0):
                trial = coef.copy()
                trial[0] = sign * tau
                x = vectors @ trial
                x /= np.linalg.norm(x)
                candidate = TrsSolution(x=x, value=p.value(x), multiplier=top_value, hard_case=True)
                if best is None or candidate.value > best.value:
                    best = candidate
            assert best is not None
            logger.debug(f"trs hard case (dim {p.dim}), complement norm {rest_norm:.3e}")
            return best

    lower = max(float(np.linalg.norm(beta[top])), b_norm - float(gaps.max()), 0.0)
    delta, iterations = _solve_secular(beta, gaps, lower, b_norm, tol, max_iter)
    coef = np.divide(beta, delta + gaps, out=np.zeros_like(beta), where=beta != 0)
    x = vectors @ coef
    x /= np.linalg.norm(x)
    return TrsSolution(x=x, value=p.value(x), multiplier=top_value + delta, hard_case=False, iterations=iterations)


def _top_eigenpair(op, dim: int, rng: np.random.Generator) -> Optional[tuple[float, Vector]]:
    """ARPACK estimate of the largest eigenpair; None when it does not converge."""
    try:
        values, vectors = eigsh(op, k=1, which="LA", v0=rng.standard_normal(dim), ncv=min(dim, 40), tol=1e-10)
    except ArpackNoConvergence as e:
        if len(e.eigenvalues):
            return float(e.eigenvalues[0]), e.eigenvectors[:, 0]
        logger.warning(f"top eigenvalue estimate did not converge (dim {dim})")
        return None
    return float(values[0]), vectors[:, 0]


def _orthogonalize(v: Vector, basis: DenseMatrix) -> Vector:
    # twice is enough
    for _ in range(2):
        v = v - basis @ (basis.T @ v)
    return v


class _KrylovBasis:
    def __init__(self, op, dim: int, capacity: int):
        self.op = op
        self.vectors = np.empty((dim, capacity))
        self.images = np.empty((dim, capacity))
        self.size = 0
        self.norm_estimate = 0.0

    @property
    def q(self) -> DenseMatrix:
        return self.vectors[:, :self.size]

    @property
    def aq(self) -> DenseMatrix:
        return self.images[:, :self.size]

    def push(self, v: Vector) -> None:
        self.vectors[:, self.size] = v
        self.images[:, self.size] = self.op.matvec(v)
        self.size += 1

    def next_direction(self) -> Vector:
        w = _orthogonalize(self.images[:, self.size - 1], self.q)
        beta = float(np.linalg.norm(w))
        alpha = float(self.vectors[:, self.size - 1] @ self.images[:, self.size - 1])
        self.norm_estimate = max(self.norm_estimate, abs(alpha) + beta)
        if beta <= 1e-12 * max(self.norm_estimate, 1.0):
            raise Breakdown(f"Krylov subspace became invariant at dim {self.size}")
        return w / beta


def solve_trs_lanczos(
    p: TrsProblem,
    tol: float = LANCZOS_TRS_TOL,
    max_lanczos_dim: int = MAX_LANCZOS_DIM,
    seed: int = 0,
) -> TrsSolution:
    """Krylov subspace solver for large problems.

    The subspace grows from b with fully reorthogonalized Lanczos steps; the
    projected problem is solved densely. When the subspace becomes invariant
    before the residual is small, expansion restarts from the current
    residual (or a seeded random vector) orthogonalized against the basis.
    A converged solution whose multiplier sits below the top eigenvalue of a
    is the hard case; the top eigenvector is then added to the subspace.
    """
    op = aslinearoperator(p.a)
    dim = p.dim
    rng = np.random.default_rng(seed)
    b_norm = float(np.linalg.norm(p.b))

    if b_norm == 0.0:
        top = _top_eigenpair(op, dim, rng) if dim > 2 else None
        if top is None:
            return solve_trs_dense(p)
        x = top[1] / np.linalg.norm(top[1])
        return TrsSolution(x=x, value=p.value(x), multiplier=top[0], hard_case=True)

    capacity = min(dim, max_lanczos_dim)
    basis = _KrylovBasis(op, dim, capacity)
    basis.push(p.b / b_norm)
    checked = False
    hard_case = False
    restarts = 0

    while True:
        t = symmetrize(basis.q.T @ basis.aq)
        g = basis.q.T @ p.b
        projected = solve_trs_dense(TrsProblem(a=t, b=g))
        x = basis.q @ projected.x
        r = projected.multiplier * x - basis.aq @ projected.x - p.b
        residual = float(np.linalg.norm(r))
        logger.debug(f"lanczos trs dim {basis.size}: residual {residual:.3e}, multiplier {projected.multiplier:.6e}")

        saturated = basis.size >= dim
        if residual <= tol * b_norm or saturated:
            top = None
            if not (saturated or basis.size >= capacity or checked):
                checked = True
                top = _top_eigenpair(op, dim, rng)
            if top is not None:
                top_value, top_vector = top
                if projected.multiplier < top_value - tol * max(abs(top_value), 1.0):
                    extra = _orthogonalize(top_vector, basis.q)
                    if np.linalg.norm(extra) > 1e-8:
                        logger.debug(f"lanczos trs hard case: multiplier {projected.multiplier:.6e} below top eigenvalue {top_value:.6e}")
                        hard_case = True
                        basis.push(extra / np.linalg.norm(extra))
                        continue
            x /= np.linalg.norm(x)
            return TrsSolution(
                x=x, value=p.value(x), multiplier=projected.multiplier,
                hard_case=hard_case or projected.hard_case, iterations=basis.size,
            )

        if basis.size >= capacity:
            raise ConvergenceFailure(f"Lanczos TRS residual {residual:.3e} above {tol * b_norm:.3e} at subspace limit {capacity}")

        try:
            direction = basis.next_direction()
        except Breakdown as e:
            restarts += 1
            logger.debug(f"{e}; restart {restarts}")
            direction = _orthogonalize(r if residual > 0 else rng.standard_normal(dim), basis.q)
            if np.linalg.norm(direction) <= 1e-12 * b_norm:
                direction = _orthogonalize(rng.standard_normal(dim), basis.q)
            direction /= np.linalg.norm(direction)
        basis.push(direction)


def solve_trs(p: TrsProblem, opts: Optional[TrsOptions] = None, eig: Optional[tuple[Vector, DenseMatrix]] = None) -> TrsSolution:
    opts = opts if opts is not None else TrsOptions()
    if p.dim <= opts.dense_threshold:
        return solve_trs_dense(p, tol=opts.dense_tol, max_iter=opts.max_newton_iter, eig=eig)
    return solve_trs_lanczos(p, tol=opts.lanczos_tol, max_lanczos_dim=min(p.dim, opts.max_lanczos_dim), seed=opts.seed)
