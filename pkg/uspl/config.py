from __future__ import annotations

import itertools
import logging
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import yaml

from .constants import (
    ETA_GRID,
    FAMILY_PARAMS,
    GAMMA2_GRID,
    GAMMA_GRID,
    GRAPH_PARAMS,
    HEAT_SCALE_GRID,
    K_RANGE,
    LABELED_RATIO,
    NEIGHBOR_GRID,
    PAIRED_RATIO,
    RIDGE,
    SAA_MAX_SWEEPS,
    SAA_RESTARTS,
    SAA_TOL,
    TRAIN_RATIO,
    TRIALS,
    WORKERS_ENV,
    GraphKind,
    ModelFamily,
    NncTraining,
    TestedView,
)
from .models import GraphSpec, ModelSpec
from .saa import SaaOptions

logger = logging.getLogger("config")


class ConfigError(ValueError): ...


DATASET_KINDS = ("mfeat", "csv")

FLOAT_GRIDS = ("gamma", "gamma1", "gamma2", "eta", "heat_scale")
INT_GRIDS   = ("knn", "knn_penalty", "laplacian_knn", "k")


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "mfeat"
    path: Optional[str] = None
    views: tuple[tuple[str, str], ...] = ()
    labels: Optional[str] = None
    standardize: bool = False

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind, "standardize": self.standardize}
        if self.path is not None:
            out["path"] = self.path
        if self.views:
            out["views"] = {name: p for name, p in self.views}
        if self.labels is not None:
            out["labels"] = self.labels
        return out

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> DatasetConfig:
        views = d.get("views") or {}
        if not isinstance(views, dict):
            raise ConfigError(f"dataset.views must map view names to files, got {views!r}")
        return cls(
            kind=str(d.get("kind", "mfeat")),
            path=None if d.get("path") is None else str(d["path"]),
            views=tuple((str(k), str(v)) for k, v in views.items()),
            labels=None if d.get("labels") is None else str(d["labels"]),
            standardize=bool(d.get("standardize", False)),
        )


@dataclass(frozen=True)
class GridConfig:
    gamma:         tuple[float, ...] = GAMMA_GRID
    gamma1:        tuple[float, ...] = (0.0,)
    gamma2:        tuple[float, ...] = GAMMA2_GRID
    eta:           tuple[float, ...] = ETA_GRID
    heat_scale:    tuple[float, ...] = HEAT_SCALE_GRID
    knn:           tuple[int, ...]   = NEIGHBOR_GRID
    knn_penalty:   tuple[int, ...]   = NEIGHBOR_GRID
    laplacian_knn: tuple[int, ...]   = (5,)
    k:             tuple[int, ...]   = K_RANGE

    def to_dict(self) -> dict[str, Any]:
        return {f.name: list(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> GridConfig:
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"Unknown grid parameters: {sorted(unknown)}")
        values: dict[str, Any] = {}
        for name, raw in d.items():
            items = raw if isinstance(raw, (list, tuple)) else [raw]
            # YAML 1.1 reads 1e-3 (no dot) as a string, float() accepts it
            cast = float if name in FLOAT_GRIDS else int
            try:
                values[name] = tuple(cast(v) for v in items)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"grids.{name}: {e}") from e
        return cls(**values)


@dataclass(frozen=True)
class SplitConfig:
    train_ratio: tuple[float, ...] = (TRAIN_RATIO,)
    paired_ratio: float = PAIRED_RATIO
    labeled_ratio: float = LABELED_RATIO

    def to_dict(self) -> dict[str, Any]:
        return {"train_ratio": list(self.train_ratio), "paired_ratio": self.paired_ratio, "labeled_ratio": self.labeled_ratio}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SplitConfig:
        train = d.get("train_ratio", TRAIN_RATIO)
        return cls(
            train_ratio=tuple(float(v) for v in (train if isinstance(train, (list, tuple)) else [train])),
            paired_ratio=float(d.get("paired_ratio", PAIRED_RATIO)),
            labeled_ratio=float(d.get("labeled_ratio", LABELED_RATIO)),
        )


@dataclass(frozen=True)
class SolverConfig:
    tol: float = SAA_TOL
    max_sweeps: int = SAA_MAX_SWEEPS
    restarts: int = SAA_RESTARTS
    init: str = "svd"

    def options(self, seed: int) -> SaaOptions:
        return SaaOptions(tol=self.tol, max_sweeps=self.max_sweeps, restarts=self.restarts, init=self.init, seed=seed)  # type: ignore[arg-type]

    def to_dict(self) -> dict[str, Any]:
        return {"tol": self.tol, "max_sweeps": self.max_sweeps, "restarts": self.restarts, "init": self.init}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SolverConfig:
        return cls(
            tol=float(d.get("tol", SAA_TOL)),
            max_sweeps=int(d.get("max_sweeps", SAA_MAX_SWEEPS)),
            restarts=int(d.get("restarts", SAA_RESTARTS)),
            init=str(d.get("init", "svd")),
        )


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: dataset, view pairs, families and their grids, protocol, output."""
    name: str = "experiment"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    view_pairs: tuple[tuple[str, str], ...] = ()
    families: tuple[ModelFamily, ...] = (ModelFamily.CCA,)
    graphs: tuple[GraphKind, ...] = (GraphKind.LDA,)
    grids: GridConfig = field(default_factory=GridConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    trials: int = TRIALS
    seed_base: int = 0
    tested_view: TestedView = TestedView.CONCAT
    nnc_training: NncTraining = NncTraining.AUTO
    output: str = "results"
    workers: Optional[int] = None
    ridge: float = RIDGE
    solver: SolverConfig = field(default_factory=SolverConfig)
    # relative dataset and output paths resolve against this directory
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name":         self.name,
            "dataset":      self.dataset.to_dict(),
            "view_pairs":   [list(p) for p in self.view_pairs],
            "families":     [f.value for f in self.families],
            "graphs":       [g.value for g in self.graphs],
            "grids":        self.grids.to_dict(),
            "split":        self.split.to_dict(),
            "trials":       self.trials,
            "seed_base":    self.seed_base,
            "tested_view":  self.tested_view.value,
            "nnc_training": self.nnc_training.value,
            "output":       self.output,
            "workers":      self.workers,
            "ridge":        self.ridge,
            "solver":       self.solver.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any], base_dir: os.PathLike[str] | str = ".") -> ExperimentConfig:
        if not isinstance(d, dict):
            raise ConfigError(f"Configuration must be a mapping, got {type(d).__name__}")
        known = {f.name for f in fields(cls)} - {"base_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"Unknown configuration keys: {sorted(unknown)}")
        try:
            workers = d.get("workers")
            cfg = cls(
                name=str(d.get("name", "experiment")),
                dataset=DatasetConfig.from_dict(d.get("dataset") or {}),
                view_pairs=tuple(_view_pair(p) for p in d.get("view_pairs") or ()),
                families=tuple(ModelFamily(f) for f in _as_list(d.get("families", [ModelFamily.CCA.value]))),
                graphs=tuple(GraphKind(g) for g in _as_list(d.get("graphs", [GraphKind.LDA.value]))),
                grids=GridConfig.from_dict(d.get("grids") or {}),
                split=SplitConfig.from_dict(d.get("split") or {}),
                trials=int(d.get("trials", TRIALS)),
                seed_base=int(d.get("seed_base", 0)),
                tested_view=TestedView(d.get("tested_view", TestedView.CONCAT.value)),
                nnc_training=NncTraining(d.get("nnc_training", NncTraining.AUTO.value)),
                output=str(d.get("output", "results")),
                workers=None if workers is None else int(workers),
                ridge=float(d.get("ridge", RIDGE)),
                solver=SolverConfig.from_dict(d.get("solver") or {}),
                base_dir=Path(base_dir),
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(str(e)) from e
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: os.PathLike[str] | str) -> ExperimentConfig:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"Configuration file {p} not found")
        with open(p, "r") as f:
            try:
                data = yaml.safe_load(f)
            except yaml.YAMLError as e:
                raise ConfigError(f"{p}: {e}") from e
        return cls.from_dict(data or {}, base_dir=p.parent)

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)

    def dump(self, path: os.PathLike[str] | str) -> None:
        with open(path, "w") as f:
            f.write(self.dumps())

    def validate(self) -> None:
        if not self.families:
            raise ConfigError("No model families given")
        for name in (*FLOAT_GRIDS, *INT_GRIDS):
            if not getattr(self.grids, name):
                raise ConfigError(f"Grid {name!r} is empty")
        if any(k < 2 for k in self.grids.k):
            raise ConfigError(f"k values must be at least 2, got {list(self.grids.k)}")
        if any(v < 1 for name in ("knn", "knn_penalty", "laplacian_knn") for v in getattr(self.grids, name)):
            raise ConfigError("Neighbor counts must be positive")
        if any(not 0.0 <= g <= 1.0 for g in self.grids.gamma):
            raise ConfigError(f"gamma values must lie in [0, 1], got {list(self.grids.gamma)}")
        if any(v < 0 for name in ("gamma1", "gamma2", "eta") for v in getattr(self.grids, name)):
            raise ConfigError("gamma1, gamma2 and eta must be nonnegative")
        if any(v <= 0 for v in self.grids.heat_scale):
            raise ConfigError("heat_scale values must be positive")
        if ModelFamily.USCCA in self.families and any(e <= 0 for e in self.grids.eta):
            raise ConfigError("USCCA needs every eta > 0")
        if any(f.supervised for f in self.families) and not self.graphs:
            raise ConfigError("Supervised families need at least one graph kind")
        for ratio in (*self.split.train_ratio, self.split.paired_ratio, self.split.labeled_ratio):
            if not 0.0 < ratio <= 1.0:
                raise ConfigError(f"Split ratio {ratio} outside (0, 1]")
        if not self.split.train_ratio:
            raise ConfigError("No training ratio given")
        if self.trials < 2:
            raise ConfigError(f"At least 2 trials are needed for a standard deviation, got {self.trials}")
        if self.workers is not None and self.workers < 1:
            raise ConfigError(f"workers must be positive, got {self.workers}")
        if self.ridge < 0:
            raise ConfigError(f"ridge must be nonnegative, got {self.ridge}")
        if self.solver.init not in ("svd", "random"):
            raise ConfigError(f"solver.init must be 'svd' or 'random', got {self.solver.init!r}")
        if self.dataset.kind not in DATASET_KINDS:
            raise ConfigError(f"dataset.kind must be one of {DATASET_KINDS}, got {self.dataset.kind!r}")
        if self.dataset.kind == "mfeat" and self.dataset.path is None:
            raise ConfigError("dataset.path is required for mfeat")
        if self.dataset.kind == "csv" and (not self.dataset.views or self.dataset.labels is None):
            raise ConfigError("dataset.views and dataset.labels are required for csv")

    def resolve(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else self.base_dir / path

    @property
    def output_dir(self) -> Path:
        return self.resolve(self.output)

    def resolve_workers(self, override: Optional[int] = None) -> int:
        """--workers beats the environment, which beats the file; the default is every core."""
        if override is not None:
            return max(1, override)
        env = os.environ.get(WORKERS_ENV)
        if env:
            try:
                return max(1, int(env))
            except ValueError:
                raise ConfigError(f"{WORKERS_ENV}={env!r} is not an integer") from None
        if self.workers is not None:
            return self.workers
        return os.cpu_count() or 1

    def expand_grid(self, family: ModelFamily, graph: Optional[GraphKind] = None) -> list[ModelSpec]:
        """Every grid point of one family (and graph kind); k is the largest of the k range."""
        names = list(FAMILY_PARAMS[family])
        if family.laplacian_regularized:
            names.append("laplacian_knn")
        if family.supervised:
            if graph is None:
                raise ConfigError(f"{family.value} needs a graph kind")
            names.extend(GRAPH_PARAMS[graph])
        k = max(self.grids.k)
        specs = []
        for point in itertools.product(*(getattr(self.grids, name) for name in names)):
            values = dict(zip(names, point))
            graph_values = {name: values.pop(name) for name in ("heat_scale", "knn", "knn_penalty", "laplacian_knn") if name in values}
            graph_spec = None
            if family.supervised or family.laplacian_regularized:
                graph_spec = GraphSpec(kind=graph if graph is not None else GraphKind.LDA, **graph_values)
            specs.append(ModelSpec(family=family, graph=graph_spec, k=k, ridge=self.ridge, **values))
        return specs

    def graphs_for(self, family: ModelFamily) -> list[Optional[GraphKind]]:
        return list(self.graphs) if family.supervised else [None]


def _as_list(value: Any) -> list[Any]:
    return list(value) if isinstance(value, (list, tuple)) else [value]


def _view_pair(p: Any) -> tuple[str, str]:
    if not isinstance(p, (list, tuple)) or len(p) != 2 or p[0] == p[1]:
        raise ConfigError(f"A view pair needs two distinct view names, got {p!r}")
    return (str(p[0]), str(p[1]))
