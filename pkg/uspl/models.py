from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Optional, TypeVar

import numpy as np
import numpy.typing as npt

from .constants import FAMILY_PARAMS, GRAPH_PARAMS, RIDGE, GraphKind, ModelFamily
from .graphs import (
    knn_heat_graph,
    laplacian,
    lda_graphs,
    lfda_graphs,
    mfa_graphs,
    pairwise_distances,
    scatter_matrices,
)
from .matkernels import (
    DenseMatrix,
    DimensionMismatch,
    JitterPolicy,
    NotPositiveDefinite,
    SymMatrix,
    cholesky,
    sym_eig,
    symmetrize,
    thin_svd,
)
from .saa import InvalidK, JointProblem, ProjectionPair

logger = logging.getLogger("models")


class TooFewPaired(ValueError): ...


class TooFewSamples(ValueError): ...


class MissingLabels(ValueError): ...


class MissingGraph(ValueError): ...


class BadFamily(ValueError): ...


class InvalidHyperparameter(ValueError): ...


@dataclass(frozen=True)
class LabeledSubset:
    """Labels for some columns of one view: indices[i] carries class classes[i]."""
    indices: npt.NDArray[np.intp]
    classes: npt.NDArray[np.int64]

    def __post_init__(self) -> None:
        if self.indices.shape != self.classes.shape or self.indices.ndim != 1:
            raise DimensionMismatch(f"{self.indices.shape} label indices for {self.classes.shape} classes")
        if self.classes.size and self.classes.min() < 0:
            raise ValueError("Class ids must be nonnegative")

    @classmethod
    def of(cls, indices: npt.ArrayLike, classes: npt.ArrayLike) -> LabeledSubset:
        return cls(indices=np.asarray(indices, dtype=np.intp).ravel(), classes=np.asarray(classes, dtype=np.int64).ravel())

    def __len__(self) -> int:
        return self.indices.shape[0]


@dataclass(frozen=True)
class TwoViewData:
    """Semi-paired samples of two views; columns are samples.

    The first `paired_count` columns of both views are mutually paired, the
    remaining columns of each view have no known counterpart.
    """
    view1_all: DenseMatrix
    view2_all: DenseMatrix
    paired_count: int
    labels1: Optional[LabeledSubset] = None
    labels2: Optional[LabeledSubset] = None

    def __post_init__(self) -> None:
        n1, n2 = self.view1_all.shape[1], self.view2_all.shape[1]
        if not 0 <= self.paired_count <= min(n1, n2):
            raise DimensionMismatch(f"paired_count {self.paired_count} exceeds view sizes ({n1}, {n2})")
        for s, labels, n in ((1, self.labels1, n1), (2, self.labels2, n2)):
            if labels is not None and len(labels) and (labels.indices.min() < 0 or labels.indices.max() >= n):
                raise IndexError(f"Label index out of range for view {s} with {n} samples")

    def view(self, s: int) -> DenseMatrix:
        return self.view1_all if s == 1 else self.view2_all

    def dim(self, s: int) -> int:
        return self.view(s).shape[0]

    def n_samples(self, s: int) -> int:
        return self.view(s).shape[1]

    def paired(self, s: int) -> DenseMatrix:
        return self.view(s)[:, :self.paired_count]

    def labels(self, s: int) -> Optional[LabeledSubset]:
        return self.labels1 if s == 1 else self.labels2

    def labeled(self, s: int) -> tuple[DenseMatrix, npt.NDArray[np.int64]]:
        labels = self.labels(s)
        if labels is None or len(labels) == 0:
            raise MissingLabels(f"View {s} has no labeled samples")
        return self.view(s)[:, labels.indices], labels.classes


@dataclass(frozen=True)
class GraphSpec:
    kind: GraphKind = GraphKind.LDA
    knn: int = 5
    knn_penalty: int = 5
    heat_scale: float = 1.0
    laplacian_knn: int = 5

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", GraphKind(self.kind))
        if min(self.knn, self.knn_penalty, self.laplacian_knn) < 1:
            raise InvalidHyperparameter(f"Neighbor counts must be positive: {self}")
        if not self.heat_scale > 0:
            raise InvalidHyperparameter(f"heat_scale must be positive, got {self.heat_scale}")

    def params(self) -> dict[str, Any]:
        return {name: getattr(self, name) for name in GRAPH_PARAMS[self.kind]}


@dataclass(frozen=True)
class ModelSpec:
    family: ModelFamily
    gamma: float = 0.5
    gamma1: float = 0.0
    gamma2: float = 1.0
    eta: float = 1.0
    graph: Optional[GraphSpec] = None
    k: int = 2
    ridge: float = RIDGE

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", ModelFamily(self.family))
        if self.k < 1:
            raise InvalidK(f"k must be at least 1, got {self.k}")
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidHyperparameter(f"gamma must lie in [0, 1], got {self.gamma}")
        if min(self.gamma1, self.gamma2, self.eta, self.ridge) < 0:
            raise InvalidHyperparameter(f"gamma1, gamma2, eta and ridge must be nonnegative: {self}")
        if self.family == ModelFamily.USCCA and self.eta <= 0:
            raise InvalidHyperparameter("USCCA needs eta > 0, its constraints are scaled by eta")

    @property
    def graph_spec(self) -> GraphSpec:
        return self.graph if self.graph is not None else GraphSpec()

    def params(self) -> dict[str, Any]:
        """The hyperparameters that matter for this family."""
        out: dict[str, Any] = {}
        for name in FAMILY_PARAMS[self.family]:
            out[name] = self.graph_spec.heat_scale if name == "heat_scale" else getattr(self, name)
        if self.family.laplacian_regularized:
            out["laplacian_knn"] = self.graph_spec.laplacian_knn
        if self.family.supervised:
            out.update(self.graph_spec.params())
        return out

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["family"] = self.family.value
        if self.graph is not None:
            out["graph"]["kind"] = self.graph.kind.value
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ModelSpec:
        values = dict(d)
        graph = values.pop("graph", None)
        if graph is not None:
            graph = dict(graph)
            graph["kind"] = GraphKind(graph.get("kind", GraphKind.LDA))
            values["graph"] = GraphSpec(**graph)
        values["family"] = ModelFamily(values["family"])
        return cls(**values)


@dataclass(frozen=True)
class GepProblem:
    """lhs v = lambda rhs v over stacked (view 1, view 2) coordinates"""
    lhs: SymMatrix
    rhs: SymMatrix
    k: int
    d1: int

    def __post_init__(self) -> None:
        if self.lhs.shape != self.rhs.shape or self.lhs.shape[0] != self.lhs.shape[1]:
            raise DimensionMismatch(f"Pencil shapes {self.lhs.shape} and {self.rhs.shape} differ")
        if not 0 < self.d1 < self.lhs.shape[0]:
            raise DimensionMismatch(f"Split {self.d1} outside the pencil dim {self.lhs.shape[0]}")
        if not 1 <= self.k <= self.lhs.shape[0]:
            raise InvalidK(f"k = {self.k} outside [1, {self.lhs.shape[0]}]")


#
# covariance, graph and scatter construction
#


def _centered(x: DenseMatrix) -> DenseMatrix:
    return x - x.mean(axis=1, keepdims=True)


def cross_covariance(data: TwoViewData, s: int, t: int) -> DenseMatrix:
    n = data.paired_count
    if n < 2:
        raise TooFewPaired(f"Need at least 2 paired samples, got {n}")
    return _centered(data.paired(s)) @ _centered(data.paired(t)).T / n


def total_covariance(data: TwoViewData, s: int) -> SymMatrix:
    x = data.view(s)
    n = x.shape[1]
    if n < 2:
        raise TooFewSamples(f"Need at least 2 samples in view {s}, got {n}")
    centered = _centered(x)
    return symmetrize(centered @ centered.T / n)


def heat_knn_laplacian(data: TwoViewData, s: int, knn: int, heat_scale: float) -> SymMatrix:
    """Laplacian of the heat-weighted k-NN graph over all samples of view s.

    The bandwidth is heat_scale times the mean pairwise distance between the
    paired samples of that view.
    """
    if data.paired_count < 2:
        raise TooFewPaired(f"Need at least 2 paired samples for the heat bandwidth, got {data.paired_count}")
    paired = pairwise_distances(data.paired(s))
    n = paired.shape[0]
    sigma = heat_scale * float(paired.sum()) / (n * (n - 1))
    return laplacian(knn_heat_graph(data.view(s), knn, sigma))


def class_scatters(data: TwoViewData, s: int, graph: GraphSpec) -> tuple[SymMatrix, SymMatrix]:
    points, classes = data.labeled(s)
    if graph.kind == GraphKind.LDA:
        w_within, w_between = lda_graphs(classes)
    elif graph.kind == GraphKind.LFDA:
        w_within, w_between = lfda_graphs(points, classes, graph.knn)
    elif graph.kind == GraphKind.MFA:
        w_within, w_between = mfa_graphs(points, classes, graph.knn, graph.knn_penalty)
    else:
        raise MissingGraph(f"Unknown graph kind {graph.kind!r}")
    return scatter_matrices(points, w_within, w_between, points.shape[1])


#
# model builders
#

AnyBuilder = TypeVar("AnyBuilder", bound="type[ModelBuilder]")


class ModelBuilder:
    """Assembles the matrices of one family pair (baseline, uncorrelated variant)."""
    _builders: dict[ModelFamily, type[ModelBuilder]] = {}

    def __init__(self, data: TwoViewData, spec: ModelSpec):
        self.data = data
        self.spec = spec
        self._cache: dict[Any, Any] = {}

    @classmethod
    def register(cls, *families: ModelFamily) -> Callable[[AnyBuilder], AnyBuilder]:
        assert families

        def func(builder: AnyBuilder) -> AnyBuilder:
            for family in families:
                cls._builders[family] = builder
            return builder
        return func

    @classmethod
    def from_family(cls, family: ModelFamily | str) -> type[ModelBuilder]:
        try:
            return cls._builders[ModelFamily(family)]
        except (KeyError, ValueError):
            raise BadFamily(f"Model family {family!r} not supported!") from None

    def _memo(self, key: Any, make: Callable[[], Any]) -> Any:
        if key not in self._cache:
            self._cache[key] = make()
        return self._cache[key]

    def c12(self) -> DenseMatrix:
        return self._memo("c12", lambda: cross_covariance(self.data, 1, 2))

    def css(self, s: int) -> SymMatrix:
        return self._memo(("css", s), lambda: symmetrize(cross_covariance(self.data, s, s)))

    def total(self, s: int) -> SymMatrix:
        return self._memo(("total", s), lambda: total_covariance(self.data, s))

    def eye(self, s: int) -> SymMatrix:
        return np.eye(self.data.dim(s))

    def regularizer(self, s: int) -> SymMatrix:
        """gamma1 I + gamma2 X L X^T over all samples of view s"""
        def make() -> SymMatrix:
            graph = self.spec.graph_spec
            x = self.data.view(s)
            lap = heat_knn_laplacian(self.data, s, graph.laplacian_knn, graph.heat_scale)
            return symmetrize(self.spec.gamma1 * self.eye(s) + self.spec.gamma2 * (x @ lap @ x.T))
        return self._memo(("regularizer", s), make)

    def scatters(self, s: int) -> tuple[SymMatrix, SymMatrix]:
        if self.spec.graph is None:
            raise MissingGraph(f"{self.spec.family.value} needs a discriminant graph")
        return self._memo(("scatters", s), lambda: class_scatters(self.data, s, self.spec.graph_spec))

    def ridged(self, m: SymMatrix) -> SymMatrix:
        return m + self.spec.ridge * np.eye(m.shape[0])

    def joint(self) -> JointProblem:
        raise BadFamily(f"{self.spec.family.value} has no uncorrelated formulation")

    def gep(self) -> GepProblem:
        raise BadFamily(f"{self.spec.family.value} has no generalized eigenvalue formulation")

    def _pencil(self, m11: SymMatrix, m22: SymMatrix, cross: DenseMatrix, r1: SymMatrix, r2: SymMatrix) -> GepProblem:
        d1, d2 = cross.shape
        lhs = np.block([[m11, cross], [cross.T, m22]])
        rhs = np.block([[self.ridged(r1), np.zeros((d1, d2))], [np.zeros((d2, d1)), self.ridged(r2)]])
        return GepProblem(lhs=symmetrize(lhs), rhs=symmetrize(rhs), k=self.spec.k, d1=d1)

    def _joint(self, a1: SymMatrix, a2: SymMatrix, cross: DenseMatrix, b1: SymMatrix, b2: SymMatrix) -> JointProblem:
        return JointProblem(a1=symmetrize(a1), a2=symmetrize(a2), c=cross, b1=symmetrize(self.ridged(b1)), b2=symmetrize(self.ridged(b2)))


@ModelBuilder.register(ModelFamily.CCA)
class CcaBuilder(ModelBuilder):
    def gep(self) -> GepProblem:
        c12 = self.c12()
        zeros = [np.zeros((self.data.dim(s), self.data.dim(s))) for s in (1, 2)]
        return self._pencil(zeros[0], zeros[1], c12, self.css(1), self.css(2))

    def joint(self) -> JointProblem:
        c12 = self.c12()
        zeros = [np.zeros((self.data.dim(s), self.data.dim(s))) for s in (1, 2)]
        return self._joint(zeros[0], zeros[1], c12, self.css(1), self.css(2))


@ModelBuilder.register(ModelFamily.SEMICCA, ModelFamily.USEMICCA)
class SemiCcaBuilder(ModelBuilder):
    def _constraint(self, s: int) -> SymMatrix:
        gamma = self.spec.gamma
        return gamma * self.css(s) + (1.0 - gamma) * self.eye(s)

    def gep(self) -> GepProblem:
        gamma = self.spec.gamma
        return self._pencil(
            (1.0 - gamma) * self.total(1), (1.0 - gamma) * self.total(2), gamma * self.c12(),
            self._constraint(1), self._constraint(2),
        )

    def joint(self) -> JointProblem:
        gamma = self.spec.gamma
        return self._joint(
            (1.0 - gamma) * self.total(1), (1.0 - gamma) * self.total(2), gamma * self.c12(),
            self._constraint(1), self._constraint(2),
        )


@ModelBuilder.register(ModelFamily.SEMICCALR, ModelFamily.USEMICCALR)
class SemiCcaLrBuilder(ModelBuilder):
    def gep(self) -> GepProblem:
        zeros = [np.zeros((self.data.dim(s), self.data.dim(s))) for s in (1, 2)]
        return self._pencil(
            zeros[0], zeros[1], self.c12(),
            self.css(1) + self.regularizer(1), self.css(2) + self.regularizer(2),
        )

    def joint(self) -> JointProblem:
        zeros = [np.zeros((self.data.dim(s), self.data.dim(s))) for s in (1, 2)]
        return self._joint(
            zeros[0], zeros[1], self.c12(),
            self.css(1) + self.regularizer(1), self.css(2) + self.regularizer(2),
        )


class _DiscriminantBuilder(ModelBuilder):
    def discriminant(self, s: int) -> SymMatrix:
        """eta (Sb - Sw); zero without touching the labels when eta is 0"""
        if self.spec.eta == 0:
            return np.zeros((self.data.dim(s), self.data.dim(s)))
        s_within, s_between = self.scatters(s)
        return self.spec.eta * (s_between - s_within)

    def between(self, s: int) -> SymMatrix:
        if self.spec.eta == 0:
            return np.zeros((self.data.dim(s), self.data.dim(s)))
        return self.spec.eta * self.scatters(s)[1]

    def within(self, s: int) -> SymMatrix:
        if self.spec.eta == 0:
            return np.zeros((self.data.dim(s), self.data.dim(s)))
        return self.spec.eta * self.scatters(s)[0]


@ModelBuilder.register(ModelFamily.SCCA, ModelFamily.USCCA)
class SccaBuilder(_DiscriminantBuilder):
    def gep(self) -> GepProblem:
        return self._pencil(self.discriminant(1), self.discriminant(2), self.c12(), self.css(1), self.css(2))

    def joint(self) -> JointProblem:
        return self._joint(self.between(1), self.between(2), self.c12(), self.within(1), self.within(2))


@ModelBuilder.register(ModelFamily.S2GCA, ModelFamily.US2GCA)
class S2gcaBuilder(_DiscriminantBuilder):
    def gep(self) -> GepProblem:
        gamma = self.spec.gamma
        constraint = [gamma * self.css(s) + (1.0 - gamma) * self.eye(s) for s in (1, 2)]
        return self._pencil(
            self.discriminant(1) + (1.0 - gamma) * self.total(1),
            self.discriminant(2) + (1.0 - gamma) * self.total(2),
            gamma * self.c12(), constraint[0], constraint[1],
        )

    def joint(self) -> JointProblem:
        gamma = self.spec.gamma
        return self._joint(
            self.between(1) + (1.0 - gamma) * self.total(1),
            self.between(2) + (1.0 - gamma) * self.total(2),
            gamma * self.c12(),
            self.within(1) + (1.0 - gamma) * self.eye(1),
            self.within(2) + (1.0 - gamma) * self.eye(2),
        )


@ModelBuilder.register(ModelFamily.S2CCALR, ModelFamily.US2CCALR)
class S2ccaLrBuilder(_DiscriminantBuilder):
    def gep(self) -> GepProblem:
        return self._pencil(
            self.discriminant(1), self.discriminant(2), self.c12(),
            self.css(1) + self.regularizer(1), self.css(2) + self.regularizer(2),
        )

    def joint(self) -> JointProblem:
        return self._joint(
            self.between(1), self.between(2), self.c12(),
            self.within(1) + self.regularizer(1), self.within(2) + self.regularizer(2),
        )


def build_joint(data: TwoViewData, spec: ModelSpec) -> JointProblem:
    if not (spec.family.uncorrelated or spec.family == ModelFamily.CCA):
        raise BadFamily(f"{spec.family.value} is a generalized eigenvalue baseline, use build_gep")
    return ModelBuilder.from_family(spec.family)(data, spec).joint()


def build_gep(data: TwoViewData, spec: ModelSpec) -> GepProblem:
    if spec.family.uncorrelated:
        raise BadFamily(f"{spec.family.value} is an uncorrelated model, use build_joint")
    return ModelBuilder.from_family(spec.family)(data, spec).gep()


def solve_gep(gp: GepProblem, jitter: Optional[JitterPolicy] = None) -> ProjectionPair:
    """Top-k eigenpairs of the pencil through the Cholesky factor of rhs."""
    chol = cholesky(gp.rhs, jitter)
    reduced = chol.solve(chol.solve(gp.lhs).T)
    values, vectors = sym_eig(reduced)
    p = chol.solve_transposed(vectors[:, :gp.k])
    lam = values[:gp.k]
    residual = float(np.linalg.norm(gp.lhs @ p - gp.rhs @ p * lam))
    logger.debug(f"gep k={gp.k}: top eigenvalue {lam[0]:.12g}, residual {residual:.3e}")
    return ProjectionPair(
        p1=p[:gp.d1], p2=p[gp.d1:], objective=0.5 * float(lam.sum()),
        per_column_values=tuple(float(v) for v in lam), kkt_residual=residual,
        jitter_used=(chol.jitter_used, chol.jitter_used),
    )


def normalize_per_view(pair: ProjectionPair, b1: SymMatrix, b2: SymMatrix) -> ProjectionPair:
    """Rescale every column so that p^T B p = 1 separately in each view."""
    def scaled(p: DenseMatrix, b: SymMatrix) -> DenseMatrix:
        norms = np.sqrt(np.maximum(np.einsum("ij,ik,kj->j", p, b, p), 0.0))
        return p / np.where(norms > 0, norms, 1.0)
    return ProjectionPair(
        p1=scaled(pair.p1, b1), p2=scaled(pair.p2, b2), objective=pair.objective,
        per_column_values=pair.per_column_values, kkt_residual=pair.kkt_residual, jitter_used=pair.jitter_used,
    )


def _inverse_sqrt(m: SymMatrix) -> SymMatrix:
    values, vectors = sym_eig(m)
    if values[-1] <= 0:
        raise NotPositiveDefinite(f"Smallest eigenvalue {values[-1]:.3e} is not positive")
    return symmetrize((vectors / np.sqrt(values)) @ vectors.T)


def cca_closed_form(c11: SymMatrix, c12: DenseMatrix, c22: SymMatrix, k: int) -> ProjectionPair:
    """CCA through the SVD of C11^-1/2 C12 C22^-1/2; the objective is the sum of the top k singular values."""
    if not 1 <= k <= min(c12.shape):
        raise InvalidK(f"k = {k} outside [1, {min(c12.shape)}]")
    w1 = _inverse_sqrt(c11)
    w2 = _inverse_sqrt(c22)
    u, sigma, v = thin_svd(w1 @ c12 @ w2)
    return ProjectionPair(
        p1=w1 @ u[:, :k], p2=w2 @ v[:, :k], objective=float(sigma[:k].sum()),
        per_column_values=tuple(float(s) for s in sigma[:k]),
    )
