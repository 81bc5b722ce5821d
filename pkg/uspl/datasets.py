from __future__ import annotations

import csv
import logging
import os
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import numpy.typing as npt

from .constants import MFEAT_CLASS_SIZE, MFEAT_FILE_PREFIX, MFEAT_SAMPLES, MFEAT_VIEWS
from .evaluation import MultiViewDataset
from .matkernels import DenseMatrix

logger = logging.getLogger("datasets")


class MissingFile(FileNotFoundError): ...


class ShapeMismatch(ValueError): ...


class ParseError(ValueError): ...


def standardize(x: DenseMatrix) -> DenseMatrix:
    """Zero mean, unit variance per feature (row); constant features are only centered."""
    centered = x - x.mean(axis=1, keepdims=True)
    std = centered.std(axis=1, keepdims=True)
    return centered / np.where(std > 0, std, 1.0)


def load_mfeat(dir_path: os.PathLike[str] | str, standardized: bool = False, views: Optional[Iterable[str]] = None) -> MultiViewDataset:
    """Load the multiple features digit dataset (one whitespace delimited file per view).

    Row r of every file is sample r; rows 200 c .. 200 c + 199 are digit c.
    """
    base = Path(dir_path)
    names = list(views) if views is not None else list(MFEAT_VIEWS)
    loaded: dict[str, DenseMatrix] = {}
    for name in names:
        if name not in MFEAT_VIEWS:
            raise KeyError(f"Unknown mfeat view {name!r}, expected one of {list(MFEAT_VIEWS)}")
        path = base / f"{MFEAT_FILE_PREFIX}{name}"
        if not path.is_file():
            raise MissingFile(f"Missing mfeat file {path}")
        try:
            data = np.loadtxt(path, dtype=np.float64, ndmin=2)
        except ValueError as e:
            raise _ragged_row(path, MFEAT_VIEWS[name]) or ParseError(f"{path}: {e}") from e
        expected = (MFEAT_SAMPLES, MFEAT_VIEWS[name])
        if data.shape != expected:
            raise ShapeMismatch(f"{path} has shape {data.shape}, expected {expected}")
        view = data.T.copy()
        loaded[name] = standardize(view) if standardized else view
        logger.debug(f"loaded {path}: {view.shape[0]} features")
    labels = np.arange(MFEAT_SAMPLES, dtype=np.int64) // MFEAT_CLASS_SIZE
    logger.info(f"mfeat: {len(loaded)} views, {MFEAT_SAMPLES} samples from {base}")
    return MultiViewDataset(name="mfeat", views=loaded, labels=labels)


def _ragged_row(path: Path, width: int) -> Optional[ShapeMismatch]:
    with open(path) as f:
        for i, line in enumerate(f, start=1):
            n = len(line.split())
            if n and n != width:
                return ShapeMismatch(f"{path}:{i}: {n} values, expected {width}")
    return None


def _read_rows(path: Path) -> list[list[str]]:
    if not path.is_file():
        raise MissingFile(f"Missing file {path}")
    with open(path, newline="") as f:
        return [row for row in csv.reader(f) if row and any(cell.strip() for cell in row)]


def _parse_matrix(path: Path) -> DenseMatrix:
    rows = _read_rows(path)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    width = len(rows[0])
    out = np.empty((len(rows), width))
    for r, row in enumerate(rows, start=1):
        if len(row) != width:
            raise ParseError(f"{path}:{r}: {len(row)} columns, expected {width}")
        for c, cell in enumerate(row, start=1):
            try:
                out[r - 1, c - 1] = float(cell)
            except ValueError:
                raise ParseError(f"{path}:{r}:{c}: not a number: {cell!r}") from None
    return out


def _parse_labels(path: Path) -> npt.NDArray[np.int64]:
    labels = []
    for r, row in enumerate(_read_rows(path), start=1):
        if len(row) != 1:
            raise ParseError(f"{path}:{r}: expected one label, got {len(row)} columns")
        try:
            value = int(row[0])
        except ValueError:
            raise ParseError(f"{path}:{r}:1: not an integer label: {row[0]!r}") from None
        if value < 0:
            raise ParseError(f"{path}:{r}:1: negative label {value}")
        labels.append(value)
    return np.array(labels, dtype=np.int64)


def load_csv(view_paths: Mapping[str, os.PathLike[str] | str] | Sequence[os.PathLike[str] | str], label_path: os.PathLike[str] | str) -> MultiViewDataset:
    """Comma separated views with samples as rows, plus one integer label per row."""
    named = dict(view_paths) if isinstance(view_paths, Mapping) else {Path(p).stem: p for p in view_paths}
    labels_file = Path(label_path)
    labels = _parse_labels(labels_file)
    views: dict[str, DenseMatrix] = {}
    for name, p in named.items():
        path = Path(p)
        data = _parse_matrix(path)
        if data.shape[0] != labels.shape[0]:
            raise ShapeMismatch(f"{path} has {data.shape[0]} rows but {labels_file} has {labels.shape[0]} labels")
        views[name] = data.T.copy()
    return MultiViewDataset(name=labels_file.stem, views=views, labels=labels)


def save_csv(path: os.PathLike[str] | str, view: DenseMatrix) -> None:
    """Write a d x N view as N rows; %.17g keeps every bit of a float64."""
    np.savetxt(path, np.asarray(view).T, fmt="%.17g", delimiter=",")


def save_labels(path: os.PathLike[str] | str, labels: npt.ArrayLike) -> None:
    np.savetxt(path, np.asarray(labels, dtype=np.int64), fmt="%d")
