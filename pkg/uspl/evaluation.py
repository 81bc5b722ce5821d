from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from typing import Any, Iterable, NamedTuple, Optional, Sequence

import numpy as np
import numpy.typing as npt
from scipy.spatial import distance

from .constants import (
    LABELED_RATIO,
    PAIRED_RATIO,
    SIGNIFICANT_DIGITS,
    TRAIN_RATIO,
    Keys,
    NncTraining,
    TestedView,
)
from .matkernels import DenseMatrix, DimensionMismatch
from .models import LabeledSubset, ModelSpec, TwoViewData, build_gep, build_joint, normalize_per_view, solve_gep
from .saa import ProjectionPair, SaaOptions, saa_solve_path

logger = logging.getLogger("evaluation")


class RatioInfeasible(ValueError): ...


class EmptyTrainingSet(ValueError): ...


class TooFewTrials(ValueError): ...


def round_significant(x: float, digits: int = SIGNIFICANT_DIGITS) -> float:
    return float(f"{x:.{digits}g}")


@dataclass(frozen=True)
class PairedSet:
    """Fully paired labeled samples of two views, columns are samples."""
    x1: DenseMatrix
    x2: DenseMatrix
    labels: npt.NDArray[np.int64]

    def __post_init__(self) -> None:
        if not self.x1.shape[1] == self.x2.shape[1] == self.labels.shape[0]:
            raise DimensionMismatch(f"Sample counts differ: {self.x1.shape[1]}, {self.x2.shape[1]}, {self.labels.shape[0]} labels")

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    def take(self, idx: npt.ArrayLike) -> PairedSet:
        i = np.asarray(idx, dtype=np.intp)
        return PairedSet(x1=self.x1[:, i], x2=self.x2[:, i], labels=self.labels[i])


@dataclass(frozen=True)
class MultiViewDataset:
    name: str
    views: dict[str, DenseMatrix]
    labels: npt.NDArray[np.int64]

    def __post_init__(self) -> None:
        for view, x in self.views.items():
            if x.shape[1] != self.labels.shape[0]:
                raise DimensionMismatch(f"View {view!r} has {x.shape[1]} samples, expected {self.labels.shape[0]}")

    @property
    def n_samples(self) -> int:
        return self.labels.shape[0]

    @property
    def view_names(self) -> list[str]:
        return list(self.views)

    def pair(self, view1: str, view2: str) -> PairedSet:
        for v in (view1, view2):
            if v not in self.views:
                raise KeyError(f"Unknown view {v!r}, have {self.view_names}")
        return PairedSet(x1=self.views[view1], x2=self.views[view2], labels=self.labels)


@dataclass(frozen=True)
class SplitPlan:
    """Shares of one seeded semi-paired split.

    The labeled samples are one draw from the training objects, shared by both
    views: a labeled object carries its class in view 1 and in view 2, paired or not.
    """
    seed: int = 0
    train_ratio: float = TRAIN_RATIO
    paired_ratio: float = PAIRED_RATIO
    labeled_ratio: float = LABELED_RATIO

    def __post_init__(self) -> None:
        for name in ("train_ratio", "paired_ratio", "labeled_ratio"):
            ratio = getattr(self, name)
            if not 0.0 < ratio <= 1.0:
                raise RatioInfeasible(f"{name} = {ratio} must lie in (0, 1]")


class SemiPairedSplit(NamedTuple):
    train: TwoViewData
    test: PairedSet
    # the training samples with their true pairing and labels, in view 1 column order
    reference: PairedSet


def _count(ratio: float, total: int) -> int:
    return int(np.floor(ratio * total + 0.5))


def make_split(dataset: PairedSet, plan: SplitPlan) -> SemiPairedSplit:
    rng = np.random.default_rng(plan.seed)
    order = rng.permutation(dataset.n)
    n_train = _count(plan.train_ratio, dataset.n)
    if n_train >= dataset.n:
        raise RatioInfeasible(f"train_ratio {plan.train_ratio} leaves no test samples out of {dataset.n}")
    n_paired = _count(plan.paired_ratio, n_train)
    if n_paired < 2:
        raise RatioInfeasible(f"paired_ratio {plan.paired_ratio} gives {n_paired} paired samples, need at least 2")
    n_labeled = _count(plan.labeled_ratio, n_train)
    if n_labeled < 1:
        raise RatioInfeasible(f"labeled_ratio {plan.labeled_ratio} gives no labeled samples")

    train_ids, test_ids = order[:n_train], order[n_train:]
    paired_ids, unpaired_ids = train_ids[:n_paired], train_ids[n_paired:]
    order1 = np.concatenate([paired_ids, unpaired_ids])
    # the unpaired part of view 2 loses its correspondence with view 1
    order2 = np.concatenate([paired_ids, rng.permutation(unpaired_ids)])
    labeled_ids = rng.choice(train_ids, size=n_labeled, replace=False)

    def labels_for(view_order: npt.NDArray[np.intp]) -> LabeledSubset:
        position = np.empty(dataset.n, dtype=np.intp)
        position[view_order] = np.arange(view_order.shape[0])
        return LabeledSubset.of(position[labeled_ids], dataset.labels[labeled_ids])

    train = TwoViewData(
        view1_all=dataset.x1[:, order1],
        view2_all=dataset.x2[:, order2],
        paired_count=n_paired,
        labels1=labels_for(order1),
        labels2=labels_for(order2),
    )
    return SemiPairedSplit(train=train, test=dataset.take(test_ids), reference=dataset.take(order1))


def project_view(pair: ProjectionPair, x: DenseMatrix, s: int) -> DenseMatrix:
    p = pair.p1 if s == 1 else pair.p2
    if x.shape[0] != p.shape[0]:
        raise DimensionMismatch(f"View {s} data of dim {x.shape[0]} for a projection of dim {p.shape[0]}")
    return p.T @ x


def project_concat(pair: ProjectionPair, x1: DenseMatrix, x2: DenseMatrix) -> DenseMatrix:
    if x1.shape[1] != x2.shape[1]:
        raise DimensionMismatch(f"Paired views with {x1.shape[1]} and {x2.shape[1]} samples")
    return np.vstack([project_view(pair, x1, 1), project_view(pair, x2, 2)])


def project(pair: ProjectionPair, x1: DenseMatrix, x2: DenseMatrix, tested_view: TestedView) -> DenseMatrix:
    if tested_view == TestedView.VIEW1:
        return project_view(pair, x1, 1)
    if tested_view == TestedView.VIEW2:
        return project_view(pair, x2, 2)
    return project_concat(pair, x1, x2)


def nnc(train_points: DenseMatrix, train_labels: npt.ArrayLike, test_points: DenseMatrix) -> npt.NDArray[np.int64]:
    """1-nearest-neighbor labels for the columns of test_points."""
    labels = np.asarray(train_labels)
    if train_points.shape[1] == 0 or labels.shape[0] == 0:
        raise EmptyTrainingSet("Nearest neighbor classifier has no training points")
    if train_points.shape[1] != labels.shape[0]:
        raise DimensionMismatch(f"{train_points.shape[1]} training points but {labels.shape[0]} labels")
    if test_points.shape[1] == 0:
        return labels[:0]
    dist = distance.cdist(test_points.T, train_points.T, "sqeuclidean")
    # argmin keeps the first (smallest index) of equal distances
    return labels[np.argmin(dist, axis=1)]


@dataclass(frozen=True)
class TrialResult:
    accuracy: float
    k: int
    hyperparams: dict[str, Any]
    seed: int
    tested_view: str = TestedView.CONCAT.value
    family: str = ""
    graph: Optional[str] = None
    view_pair: tuple[str, str] = ("view1", "view2")
    train_ratio: float = TRAIN_RATIO
    objective: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"Accuracy {self.accuracy} outside [0, 1]")

    def to_record(self) -> dict[str, Any]:
        return {
            Keys.Trial.VIEW_PAIR:   list(self.view_pair),
            Keys.Trial.TRAIN_RATIO: round_significant(self.train_ratio),
            Keys.Trial.FAMILY:      self.family,
            Keys.Trial.GRAPH:       self.graph,
            Keys.Trial.PARAMS:      {key: round_significant(v) if isinstance(v, float) else v for key, v in sorted(self.hyperparams.items())},
            Keys.Trial.SEED:        self.seed,
            Keys.Trial.K:           self.k,
            Keys.Trial.TESTED_VIEW: self.tested_view,
            Keys.Trial.ACCURACY:    round_significant(self.accuracy),
            Keys.Trial.OBJECTIVE:   round_significant(self.objective),
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> TrialResult:
        return cls(
            accuracy=float(record[Keys.Trial.ACCURACY]),
            k=int(record[Keys.Trial.K]),
            hyperparams=dict(record[Keys.Trial.PARAMS]),
            seed=int(record[Keys.Trial.SEED]),
            tested_view=record[Keys.Trial.TESTED_VIEW],
            family=record[Keys.Trial.FAMILY],
            graph=record[Keys.Trial.GRAPH],
            view_pair=tuple(record[Keys.Trial.VIEW_PAIR]),  # type: ignore[arg-type]
            train_ratio=float(record[Keys.Trial.TRAIN_RATIO]),
            objective=float(record[Keys.Trial.OBJECTIVE]),
        )

    def params_key(self) -> str:
        return json.dumps(self.to_record()[Keys.Trial.PARAMS], sort_keys=True)

    def group_key(self) -> tuple[str, str, float, str, str, str]:
        return (self.view_pair[0], self.view_pair[1], round_significant(self.train_ratio), self.family, self.graph or "", self.tested_view)


def fit(train: TwoViewData, spec: ModelSpec, ks: Sequence[int], saa_opts: Optional[SaaOptions] = None) -> dict[int, ProjectionPair]:
    if spec.family.uncorrelated:
        return saa_solve_path(build_joint(train, spec), ks, saa_opts)
    gp = build_gep(train, replace(spec, k=max(ks)))
    # the joint constraint splits the unit norm between the views
    full = normalize_per_view(solve_gep(gp), gp.rhs[:gp.d1, :gp.d1], gp.rhs[gp.d1:, gp.d1:])
    return {
        k: ProjectionPair(
            p1=full.p1[:, :k], p2=full.p2[:, :k], objective=0.5 * sum(full.per_column_values[:k]),
            per_column_values=full.per_column_values[:k],
            kkt_residual=full.kkt_residual if k == full.k else None, jitter_used=full.jitter_used,
        )
        for k in sorted(set(ks))
    }


def _nnc_samples(split: SemiPairedSplit, spec: ModelSpec, mode: NncTraining) -> PairedSet:
    use_labeled = mode == NncTraining.LABELED or (mode == NncTraining.AUTO and spec.family.supervised)
    if not use_labeled:
        return split.reference
    labels = split.train.labels1
    if labels is None or len(labels) == 0:
        raise EmptyTrainingSet("No labeled training samples for the nearest neighbor classifier")
    return split.reference.take(labels.indices)


def run_k_sweep(
    dataset: PairedSet,
    plan: SplitPlan,
    spec: ModelSpec,
    ks: Iterable[int],
    tested_view: TestedView | str = TestedView.CONCAT,
    nnc_training: NncTraining | str = NncTraining.AUTO,
    saa_opts: Optional[SaaOptions] = None,
    view_pair: tuple[str, str] = ("view1", "view2"),
) -> list[TrialResult]:
    """Fit once on the split of `plan` and score every k of the sweep."""
    wanted = sorted(set(ks))
    view = TestedView(tested_view)
    split = make_split(dataset, plan)
    pairs = fit(split.train, spec, wanted, saa_opts)
    neighbors = _nnc_samples(split, spec, NncTraining(nnc_training))

    results = []
    for k in wanted:
        pair = pairs[k]
        train_points = project(pair, neighbors.x1, neighbors.x2, view)
        test_points = project(pair, split.test.x1, split.test.x2, view)
        predicted = nnc(train_points, neighbors.labels, test_points)
        accuracy = float(np.mean(predicted == split.test.labels))
        results.append(TrialResult(
            accuracy=accuracy, k=k, hyperparams=spec.params(), seed=plan.seed, tested_view=view.value,
            family=spec.family.value, graph=spec.graph_spec.kind.value if spec.family.supervised else None,
            view_pair=view_pair, train_ratio=plan.train_ratio, objective=pair.objective,
        ))
        logger.debug(f"{spec.family.value} {view_pair} seed {plan.seed} k={k}: accuracy {accuracy:.4f}")
    return results


def run_trial(
    dataset: PairedSet,
    plan: SplitPlan,
    spec: ModelSpec,
    tested_view: TestedView | str = TestedView.CONCAT,
    nnc_training: NncTraining | str = NncTraining.AUTO,
    saa_opts: Optional[SaaOptions] = None,
) -> TrialResult:
    return run_k_sweep(dataset, plan, spec, [spec.k], tested_view, nnc_training, saa_opts)[0]


def aggregate(results: Sequence[TrialResult] | Sequence[float]) -> tuple[float, float]:
    """Mean and sample standard deviation of the accuracies."""
    values = np.array([r.accuracy if isinstance(r, TrialResult) else float(r) for r in results])
    if values.shape[0] < 2:
        raise TooFewTrials(f"Need at least 2 trials to aggregate, got {values.shape[0]}")
    return float(values.mean()), float(values.std(ddof=1))
