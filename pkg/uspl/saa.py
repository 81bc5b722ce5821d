from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Literal, NamedTuple, Optional, Union

import numpy as np
import numpy.typing as npt

from .constants import SAA_MAX_SWEEPS, SAA_RESTARTS, SAA_TOL
from .matkernels import (
    CholeskyFactor,
    DenseMatrix,
    DimensionMismatch,
    JitterPolicy,
    Reflector,
    SymMatrix,
    Vector,
    ZeroVector,
    cholesky,
    reflector_from,
    sym_eig,
    symmetrize,
    thin_svd,
    two_sided_reflector_update,
)
from .trs import TrsOptions, TrsProblem, solve_trs

logger = logging.getLogger("saa")


class InvalidK(ValueError): ...


@dataclass(frozen=True)
class JointProblem:
    """maximize tr(P1^T C P2) + 1/2 sum_s tr(Ps^T As Ps) subject to Ps^T Bs Ps = I"""
    a1: SymMatrix
    a2: SymMatrix
    c: DenseMatrix
    b1: SymMatrix
    b2: SymMatrix

    def __post_init__(self) -> None:
        d1, d2 = self.c.shape
        for name, m, d in (("a1", self.a1, d1), ("b1", self.b1, d1), ("a2", self.a2, d2), ("b2", self.b2, d2)):
            if m.shape != (d, d):
                raise DimensionMismatch(f"{name} has shape {m.shape}, expected ({d}, {d}) for cross term {self.c.shape}")

    @classmethod
    def of(cls, a1: npt.ArrayLike, a2: npt.ArrayLike, c: npt.ArrayLike, b1: npt.ArrayLike, b2: npt.ArrayLike) -> JointProblem:
        return cls(
            a1=symmetrize(a1), a2=symmetrize(a2), c=np.asarray(c, dtype=np.float64),
            b1=symmetrize(b1), b2=symmetrize(b2),
        )

    @property
    def d1(self) -> int:
        return self.c.shape[0]

    @property
    def d2(self) -> int:
        return self.c.shape[1]

    def full_matrix(self) -> SymMatrix:
        return np.block([[self.a1, self.c], [self.c.T, self.a2]])

    def objective(self, p1: DenseMatrix, p2: DenseMatrix) -> float:
        return float(np.trace(p1.T @ self.c @ p2) + 0.5 * (np.trace(p1.T @ self.a1 @ p1) + np.trace(p2.T @ self.a2 @ p2)))


@dataclass(frozen=True)
class WhitenedBlocks:
    a11: SymMatrix
    a22: SymMatrix
    a12: DenseMatrix
    chol1: CholeskyFactor
    chol2: CholeskyFactor

    @property
    def a21(self) -> DenseMatrix:
        return self.a12.T

    @property
    def d1(self) -> int:
        return self.a12.shape[0]

    @property
    def d2(self) -> int:
        return self.a12.shape[1]

    def full_matrix(self) -> SymMatrix:
        return np.block([[self.a11, self.a12], [self.a12.T, self.a22]])

    def value(self, q1: Vector, q2: Vector) -> float:
        """p^T A p for p = (q1, q2) stacked"""
        return float(q1 @ self.a11 @ q1 + q2 @ self.a22 @ q2 + 2.0 * (q1 @ self.a12 @ q2))


@dataclass(frozen=True)
class DeflationState:
    reflectors1: tuple[Reflector, ...]
    reflectors2: tuple[Reflector, ...]
    blocks: WhitenedBlocks
    j: int = 0

    @classmethod
    def initial(cls, blocks: WhitenedBlocks) -> DeflationState:
        return cls(reflectors1=(), reflectors2=(), blocks=blocks, j=0)


class PairSolution(NamedTuple):
    q1: Vector
    q2: Vector
    value: float
    sweeps: int


@dataclass(frozen=True)
class ProjectionPair:
    p1: DenseMatrix
    p2: DenseMatrix
    objective: float
    per_column_values: tuple[float, ...]
    kkt_residual: Optional[float] = None
    jitter_used: tuple[float, float] = (0.0, 0.0)

    @property
    def k(self) -> int:
        return self.p1.shape[1]


@dataclass(frozen=True)
class SaaOptions:
    tol: float = SAA_TOL
    max_sweeps: int = SAA_MAX_SWEEPS
    init: Literal["svd", "random"] = "svd"
    restarts: int = SAA_RESTARTS
    seed: int = 0
    diagonalize: bool = True
    trs: TrsOptions = field(default_factory=TrsOptions)
    jitter: JitterPolicy = field(default_factory=JitterPolicy)


def whiten(jp: JointProblem, jitter: Optional[JitterPolicy] = None) -> WhitenedBlocks:
    chol1 = cholesky(jp.b1, jitter)
    chol2 = cholesky(jp.b2, jitter)
    # L^-1 A L^-T as two triangular solves
    a11 = chol1.solve(chol1.solve(jp.a1).T)
    a22 = chol2.solve(chol2.solve(jp.a2).T)
    a12 = chol2.solve(chol1.solve(jp.c).T).T
    return WhitenedBlocks(a11=symmetrize(a11), a22=symmetrize(a22), a12=a12, chol1=chol1, chol2=chol2)


def _initial_q2(blocks: WhitenedBlocks, init: Union[npt.ArrayLike, int, None]) -> Vector:
    if init is None:
        _, _, v = thin_svd(blocks.a12)
        return v[:, 0].copy()
    if isinstance(init, (int, np.integer)):
        q = np.random.default_rng(int(init)).standard_normal(blocks.d2)
    else:
        q = np.asarray(init, dtype=np.float64).ravel()
        if q.shape != (blocks.d2,):
            raise DimensionMismatch(f"Initial vector of dim {q.shape} for a block of dim {blocks.d2}")
    norm = float(np.linalg.norm(q))
    if norm == 0.0:
        raise ZeroVector("Initial vector is zero")
    return q / norm


def alternating_pair(
    blocks: WhitenedBlocks,
    init: Union[npt.ArrayLike, int, None] = None,
    tol: float = SAA_TOL,
    max_sweeps: int = SAA_MAX_SWEEPS,
    trs_opts: Optional[TrsOptions] = None,
) -> PairSolution:
    """Maximize p^T A p over pairs of unit vectors by alternating exact TRS solves.

    `init` is the starting q2: an explicit vector, a seed for a random unit
    vector, or None for the top right singular vector of a12.
    """
    trs_opts = trs_opts if trs_opts is not None else TrsOptions()
    # the TRS matrices stay fixed across sweeps
    eig1 = sym_eig(blocks.a11) if blocks.d1 <= trs_opts.dense_threshold else None
    eig2 = sym_eig(blocks.a22) if blocks.d2 <= trs_opts.dense_threshold else None

    q2 = _initial_q2(blocks, init)
    q1 = solve_trs(TrsProblem(a=blocks.a11, b=blocks.a12 @ q2), trs_opts, eig1).x
    value = blocks.value(q1, q2)
    previous_sweep = -np.inf
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        if sweeps > 1:
            x1 = solve_trs(TrsProblem(a=blocks.a11, b=blocks.a12 @ q2), trs_opts, eig1).x
            # an inexact (Lanczos) step is dropped if it does not improve
            if blocks.value(x1, q2) >= value:
                q1, value = x1, blocks.value(x1, q2)
        x2 = solve_trs(TrsProblem(a=blocks.a22, b=blocks.a12.T @ q1), trs_opts, eig2).x
        if blocks.value(q1, x2) >= value:
            q2, value = x2, blocks.value(q1, x2)
        if value - previous_sweep < tol * (1.0 + abs(value)):
            break
        previous_sweep = value
    else:
        logger.debug(f"alternating sweeps hit the cap of {max_sweeps} (value {value:.12g})")
    return PairSolution(q1=q1, q2=q2, value=value, sweeps=sweeps)


def _best_pair(blocks: WhitenedBlocks, opts: SaaOptions, column: int) -> PairSolution:
    starts: list[Optional[int]] = []
    if opts.init == "svd":
        starts.append(None)
        if np.any(blocks.a11) or np.any(blocks.a22):
            starts.extend(opts.seed + 1000 * column + r for r in range(opts.restarts))
    else:
        starts.extend(opts.seed + 1000 * column + r for r in range(max(opts.restarts, 1)))

    best: Optional[PairSolution] = None
    for start in starts:
        candidate = alternating_pair(blocks, start, opts.tol, opts.max_sweeps, opts.trs)
        if best is None or candidate.value > best.value:
            best = candidate
    assert best is not None
    return best


def deflate_step(state: DeflationState, q1: Vector, q2: Vector) -> DeflationState:
    blocks = state.blocks
    if q1.shape != (blocks.d1,) or q2.shape != (blocks.d2,):
        raise DimensionMismatch(f"Deflation vectors {q1.shape}, {q2.shape} do not match blocks ({blocks.d1}, {blocks.d2})")
    h1 = reflector_from(q1)
    h2 = reflector_from(q2)
    deflated = replace(
        blocks,
        a11=symmetrize(two_sided_reflector_update(blocks.a11, h1, h1)),
        a22=symmetrize(two_sided_reflector_update(blocks.a22, h2, h2)),
        a12=two_sided_reflector_update(blocks.a12, h1, h2),
    )
    return DeflationState(
        reflectors1=state.reflectors1 + (h1,),
        reflectors2=state.reflectors2 + (h2,),
        blocks=deflated,
        j=state.j + 1,
    )


def _expand(reflectors: tuple[Reflector, ...], q: Vector) -> Vector:
    j = len(reflectors)
    v = np.zeros(j + q.shape[0])
    v[j:] = q
    for i in reversed(range(j)):
        v[i:] = reflectors[i].apply(v[i:])
    return v


def recover_column(state: DeflationState, q1: Vector, q2: Vector) -> tuple[Vector, Vector]:
    if q1.shape != (state.blocks.d1,) or q2.shape != (state.blocks.d2,):
        raise DimensionMismatch(f"Vectors {q1.shape}, {q2.shape} do not match trailing dims ({state.blocks.d1}, {state.blocks.d2}) at step {state.j}")
    return _expand(state.reflectors1, q1), _expand(state.reflectors2, q2)


def align(p1: DenseMatrix, p2: DenseMatrix, c: DenseMatrix) -> DenseMatrix:
    """Rotate p2 so that p1^T c p2 becomes U S U^T with trace equal to the nuclear norm."""
    m = p1.T @ c @ p2
    if m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"p1^T c p2 has shape {m.shape}, expected square")
    u, _, v = thin_svd(m)
    return p2 @ v @ u.T


def kkt_residual(jp: JointProblem, p1: DenseMatrix, p2: DenseMatrix) -> float:
    lam1 = p1.T @ jp.c @ p2 + p1.T @ jp.a1 @ p1
    lam2 = p2.T @ jp.c.T @ p1 + p2.T @ jp.a2 @ p2
    r1 = jp.a1 @ p1 + jp.c @ p2 - jp.b1 @ p1 @ lam1
    r2 = jp.a2 @ p2 + jp.c.T @ p1 - jp.b2 @ p2 @ lam2
    return float(np.sqrt(np.sum(r1 * r1) + np.sum(r2 * r2)))


def _check_k(jp: JointProblem, k: int) -> None:
    if k < 1 or k > min(jp.d1, jp.d2):
        raise InvalidK(f"k = {k} must lie in [1, {min(jp.d1, jp.d2)}] for views of dims ({jp.d1}, {jp.d2})")


def _greedy_columns(jp: JointProblem, k: int, opts: SaaOptions) -> tuple[WhitenedBlocks, DenseMatrix, DenseMatrix, list[float]]:
    blocks = whiten(jp, opts.jitter)
    state = DeflationState.initial(blocks)
    cols1 = np.zeros((jp.d1, k))
    cols2 = np.zeros((jp.d2, k))
    values: list[float] = []
    for j in range(k):
        pair = _best_pair(state.blocks, opts, j)
        p1col, p2col = recover_column(state, pair.q1, pair.q2)
        cols1[:, j] = p1col
        cols2[:, j] = p2col
        values.append(pair.value)
        logger.debug(f"saa column {j + 1}/{k}: value {pair.value:.12g} after {pair.sweeps} sweeps")
        if j + 1 < k:
            state = deflate_step(state, pair.q1, pair.q2)
    return blocks, cols1, cols2, values


def _finish(jp: JointProblem, blocks: WhitenedBlocks, cols1: DenseMatrix, cols2: DenseMatrix, values: list[float], diagonalize: bool) -> ProjectionPair:
    p1 = blocks.chol1.solve_transposed(cols1)
    p2 = blocks.chol2.solve_transposed(cols2)
    p2 = align(p1, p2, jp.c)
    if diagonalize:
        # one joint rotation keeps both constraints and the objective
        u, _, v = thin_svd(p1.T @ jp.c @ p2)
        p1, p2 = p1 @ u, p2 @ v
    residual = kkt_residual(jp, p1, p2)
    objective = jp.objective(p1, p2)
    logger.debug(f"saa k={p1.shape[1]}: objective {objective:.12g}, kkt residual {residual:.3e}")
    return ProjectionPair(
        p1=p1, p2=p2, objective=objective, per_column_values=tuple(values),
        kkt_residual=residual, jitter_used=(blocks.chol1.jitter_used, blocks.chol2.jitter_used),
    )


def saa_solve(jp: JointProblem, k: int, opts: Optional[SaaOptions] = None) -> ProjectionPair:
    opts = opts if opts is not None else SaaOptions()
    _check_k(jp, k)
    blocks, cols1, cols2, values = _greedy_columns(jp, k, opts)
    return _finish(jp, blocks, cols1, cols2, values, opts.diagonalize)


def saa_solve_path(jp: JointProblem, ks: Iterable[int], opts: Optional[SaaOptions] = None) -> dict[int, ProjectionPair]:
    """One solution per k, sharing the greedy columns of the largest k."""
    opts = opts if opts is not None else SaaOptions()
    wanted = sorted(set(ks))
    if not wanted:
        return {}
    for k in wanted:
        _check_k(jp, k)
    blocks, cols1, cols2, values = _greedy_columns(jp, wanted[-1], opts)
    return {k: _finish(jp, blocks, cols1[:, :k], cols2[:, :k], values[:k], opts.diagonalize) for k in wanted}
