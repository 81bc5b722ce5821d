from __future__ import annotations

import json
import logging
import os
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

try:
    from tabulate import tabulate
except ImportError as e:
    print("the following Python libraries are required: tabulate.")  # noqa: NP100
    raise e

from .constants import SIGNIFICANT_DIGITS, Keys
from .evaluation import TrialResult, aggregate, round_significant

logger = logging.getLogger("report")

FLOAT_FORMAT = f".{SIGNIFICANT_DIGITS}g"


class MissingResults(FileNotFoundError): ...


@dataclass(frozen=True)
class SummaryRow:
    view_pair: tuple[str, str]
    train_ratio: float
    family: str
    graph: Optional[str]
    tested_view: str
    mean: float
    std: float
    params: dict[str, Any]
    k: int
    trials: int

    def to_record(self) -> dict[str, Any]:
        return {
            Keys.Summary.VIEW_PAIR:   list(self.view_pair),
            Keys.Summary.TRAIN_RATIO: round_significant(self.train_ratio),
            Keys.Summary.FAMILY:      self.family,
            Keys.Summary.GRAPH:       self.graph,
            Keys.Summary.TESTED_VIEW: self.tested_view,
            Keys.Summary.MEAN:        round_significant(self.mean),
            Keys.Summary.STD:         round_significant(self.std),
            Keys.Summary.PARAMS:      self.params,
            Keys.Summary.K:           self.k,
            Keys.Summary.TRIALS:      self.trials,
        }


@dataclass(frozen=True)
class ResultTable:
    """Best mean accuracy per (view pair, training ratio, family, graph kind)."""
    rows: tuple[SummaryRow, ...]

    def __len__(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class CurvePoint:
    view_pair: tuple[str, str]
    train_ratio: float
    family: str
    graph: Optional[str]
    k: int
    mean: float
    std: float
    params: dict[str, Any]


@dataclass(frozen=True)
class SensitivityCell:
    view_pair: tuple[str, str]
    train_ratio: float
    graph: Optional[str]
    x: Any
    y: Any
    mean: float
    k: int


GroupKey = tuple[Any, ...]


def _grouped(results: Iterable[TrialResult]) -> dict[GroupKey, dict[tuple[str, int], list[TrialResult]]]:
    groups: dict[GroupKey, dict[tuple[str, int], list[TrialResult]]] = defaultdict(lambda: defaultdict(list))
    for r in results:
        groups[r.group_key()][(r.params_key(), r.k)].append(r)
    return groups


def _best(candidates: dict[tuple[str, int], list[TrialResult]]) -> tuple[tuple[str, int], float, float]:
    best: Optional[tuple[tuple[str, int], float, float]] = None
    for key in sorted(candidates):
        mean, std = aggregate(candidates[key])
        # the first grid point in sorted order wins ties
        if best is None or mean > best[1]:
            best = (key, mean, std)
    assert best is not None
    return best


def select_best(results: Sequence[TrialResult]) -> ResultTable:
    """Max over the grid (params and k) of the mean accuracy across seeds."""
    rows = []
    for group, candidates in sorted(_grouped(results).items()):
        (params, k), mean, std = _best(candidates)
        first = candidates[(params, k)][0]
        rows.append(SummaryRow(
            view_pair=first.view_pair, train_ratio=first.train_ratio, family=first.family, graph=first.graph,
            tested_view=first.tested_view, mean=mean, std=std, params=json.loads(params), k=k,
            trials=len(candidates[(params, k)]),
        ))
    return ResultTable(rows=tuple(rows))


def k_curves(results: Sequence[TrialResult]) -> list[CurvePoint]:
    """For every k, the best mean over the remaining hyperparameters."""
    points = []
    for group, candidates in sorted(_grouped(results).items()):
        for k in sorted({k for _, k in candidates}):
            (params, _), mean, std = _best({key: v for key, v in candidates.items() if key[1] == k})
            first = candidates[(params, k)][0]
            points.append(CurvePoint(
                view_pair=first.view_pair, train_ratio=first.train_ratio, family=first.family, graph=first.graph,
                k=k, mean=mean, std=std, params=json.loads(params),
            ))
    return points


@dataclass(frozen=True)
class RankedRow:
    rank: int
    row: SummaryRow


@dataclass(frozen=True)
class Comparison:
    """Best mean accuracies of two families on one view pair and training ratio."""
    view_pair: tuple[str, str]
    train_ratio: float
    graph: Optional[str]
    better: str
    worse: str
    better_mean: float
    worse_mean: float
    margin: float = 0.0

    @property
    def difference(self) -> float:
        return self.better_mean - self.worse_mean

    @property
    def holds(self) -> bool:
        return self.difference >= -self.margin

    @property
    def strict(self) -> bool:
        return self.difference > 0.0


def family_ranking(table: ResultTable) -> list[RankedRow]:
    """Rows ranked by mean accuracy within each (view pair, training ratio)."""
    groups: dict[tuple[tuple[str, str], float], list[SummaryRow]] = defaultdict(list)
    for row in table.rows:
        groups[(row.view_pair, row.train_ratio)].append(row)
    ranked = []
    for _, rows in sorted(groups.items()):
        rows.sort(key=lambda r: (-r.mean, r.family, r.graph or ""))
        ranked.extend(RankedRow(rank=i, row=r) for i, r in enumerate(rows, start=1))
    return ranked


def compare_families(table: ResultTable, better: str, worse: str, margin: float = 0.0) -> list[Comparison]:
    """Pairs the rows of two families on the same view pair, ratio and graph kind.

    A family without a graph kind is compared against every graph kind of the other.
    """
    if margin < 0:
        raise ValueError(f"Comparison margin must be nonnegative, got {margin}")
    ahead = [r for r in table.rows if r.family == better]
    behind = [r for r in table.rows if r.family == worse]
    for family, rows in ((better, ahead), (worse, behind)):
        if not rows:
            raise MissingResults(f"No summary rows for family {family!r}")
    out = []
    for b in ahead:
        for w in behind:
            if (w.view_pair, w.train_ratio) != (b.view_pair, b.train_ratio):
                continue
            if b.graph is not None and w.graph is not None and b.graph != w.graph:
                continue
            out.append(Comparison(
                view_pair=b.view_pair, train_ratio=b.train_ratio, graph=b.graph or w.graph, better=better, worse=worse,
                better_mean=b.mean, worse_mean=w.mean, margin=margin,
            ))
    out.sort(key=lambda c: (c.view_pair, c.train_ratio, c.graph or ""))
    return out


def sensitivity_grid(results: Sequence[TrialResult], family: str, x: str, y: str) -> list[SensitivityCell]:
    """Best-over-k mean accuracy of one family on every (x, y) hyperparameter cell."""
    chosen = [r for r in results if r.family == family]
    if not chosen:
        raise MissingResults(f"No results for family {family!r}")
    for name in (x, y):
        if name not in chosen[0].hyperparams:
            raise ValueError(f"{family} has no hyperparameter {name!r}, has {sorted(chosen[0].hyperparams)}")
    cells: dict[tuple[Any, ...], dict[tuple[str, int], list[TrialResult]]] = defaultdict(lambda: defaultdict(list))
    for r in chosen:
        cell = (r.view_pair, r.train_ratio, r.graph or "", r.tested_view, r.hyperparams[x], r.hyperparams[y])
        cells[cell][(r.params_key(), r.k)].append(r)
    out = []
    for (pair, ratio, graph, _, xv, yv), candidates in sorted(cells.items()):
        (_, k), mean, _ = _best(candidates)
        out.append(SensitivityCell(view_pair=pair, train_ratio=ratio, graph=graph or None, x=xv, y=yv, mean=mean, k=k))
    return out


#
# reading and rendering
#


def read_results(path: os.PathLike[str] | str) -> list[TrialResult]:
    """Trial records from a results directory or a trials file."""
    p = Path(path)
    if p.is_dir():
        p = p / Keys.Output.TRIALS
    if not p.is_file():
        raise MissingResults(f"No results at {p}")
    results = []
    with open(p, "r") as f:
        for i, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                results.append(TrialResult.from_record(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as e:
                raise MissingResults(f"{p}:{i}: unreadable trial record ({e})") from e
    if not results:
        raise MissingResults(f"{p} holds no trial records")
    return results


SUMMARY_HEADERS = ["view_pair", "train_ratio", "family", "graph", "tested_view", "mean", "std", "k", "params", "trials"]


def _summary_cells(row: SummaryRow) -> list[Any]:
    return [
        "-".join(row.view_pair), row.train_ratio, row.family, row.graph or "-", row.tested_view,
        row.mean, row.std, row.k, json.dumps(row.params, sort_keys=True), row.trials,
    ]


def _fmt(value: Any) -> str:
    return format(value, FLOAT_FORMAT) if isinstance(value, float) else str(value)


def _tsv(headers: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    # no cell holds a tab or a newline, so there is nothing to quote
    return "".join("\t".join(_fmt(c) for c in row) + "\n" for row in [headers, *rows])


def summary_tsv(table: ResultTable) -> str:
    return _tsv(SUMMARY_HEADERS, (_summary_cells(r) for r in table.rows))


def write_summary_tsv(path: os.PathLike[str] | str, table: ResultTable) -> None:
    with open(path, "w") as f:
        f.write(summary_tsv(table))


def render_table(table: ResultTable, tablefmt: str = "github") -> str:
    if tablefmt == "tsv":
        return summary_tsv(table)
    return tabulate([_summary_cells(r) for r in table.rows], headers=SUMMARY_HEADERS, tablefmt=tablefmt, floatfmt=FLOAT_FORMAT)


def render_records(records: Iterable[dict[str, Any]]) -> str:
    return "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in records)


CURVE_HEADERS = ["view_pair", "train_ratio", "family", "graph", "k", "mean", "std", "params"]


def render_curves(points: Sequence[CurvePoint], fmt: str = "table", tablefmt: str = "github") -> str:
    if fmt == "records":
        return render_records({
            "view_pair": list(p.view_pair), "train_ratio": round_significant(p.train_ratio), "family": p.family,
            "graph": p.graph, "k": p.k, "mean": round_significant(p.mean), "std": round_significant(p.std), "params": p.params,
        } for p in points)
    rows = [["-".join(p.view_pair), p.train_ratio, p.family, p.graph or "-", p.k, p.mean, p.std, json.dumps(p.params, sort_keys=True)] for p in points]
    if tablefmt == "tsv":
        return _tsv(CURVE_HEADERS, rows)
    return tabulate(rows, headers=CURVE_HEADERS, tablefmt=tablefmt, floatfmt=FLOAT_FORMAT)


def render_sensitivity(cells: Sequence[SensitivityCell], x: str, y: str, fmt: str = "table", tablefmt: str = "github") -> str:
    headers = ["view_pair", "train_ratio", "graph", x, y, "mean", "k"]
    if fmt == "records":
        return render_records({
            "view_pair": list(c.view_pair), "train_ratio": round_significant(c.train_ratio), "graph": c.graph,
            x: c.x, y: c.y, "mean": round_significant(c.mean), "k": c.k,
        } for c in cells)
    rows = [["-".join(c.view_pair), c.train_ratio, c.graph or "-", c.x, c.y, c.mean, c.k] for c in cells]
    if tablefmt == "tsv":
        return _tsv(headers, rows)
    return tabulate(rows, headers=headers, tablefmt=tablefmt, floatfmt=FLOAT_FORMAT)


def render_report(results_path: os.PathLike[str] | str, fmt: str = "table", tablefmt: str = "github") -> str:
    """Summary of a results file, as a table or as one JSON record per row."""
    results = read_results(results_path)
    table = select_best(results)
    logger.debug(f"{len(results)} trials summarized into {len(table)} rows")
    if fmt == "records":
        return render_records(r.to_record() for r in table.rows)
    return render_table(table, tablefmt)


RANKING_HEADERS = ["view_pair", "train_ratio", "rank", "family", "graph", "mean", "std", "k"]


def render_ranking(ranked: Sequence[RankedRow], fmt: str = "table", tablefmt: str = "github") -> str:
    if fmt == "records":
        return render_records({
            "view_pair": list(r.row.view_pair), "train_ratio": round_significant(r.row.train_ratio), "rank": r.rank,
            "family": r.row.family, "graph": r.row.graph, "mean": round_significant(r.row.mean),
            "std": round_significant(r.row.std), "k": r.row.k,
        } for r in ranked)
    rows = [["-".join(r.row.view_pair), r.row.train_ratio, r.rank, r.row.family, r.row.graph or "-", r.row.mean, r.row.std, r.row.k] for r in ranked]
    if tablefmt == "tsv":
        return _tsv(RANKING_HEADERS, rows)
    return tabulate(rows, headers=RANKING_HEADERS, tablefmt=tablefmt, floatfmt=FLOAT_FORMAT)


COMPARISON_HEADERS = ["view_pair", "train_ratio", "graph", "better", "worse", "better_mean", "worse_mean", "difference", "holds", "strict"]


def comparison_tally(comparisons: Sequence[Comparison]) -> str:
    holds = sum(c.holds for c in comparisons)
    strict = sum(c.strict for c in comparisons)
    return f"holds on {holds} of {len(comparisons)}, strictly on {strict}"


def render_comparisons(comparisons: Sequence[Comparison], fmt: str = "table", tablefmt: str = "github") -> str:
    if fmt == "records":
        return render_records({
            "view_pair": list(c.view_pair), "train_ratio": round_significant(c.train_ratio), "graph": c.graph,
            "better": c.better, "worse": c.worse, "better_mean": round_significant(c.better_mean),
            "worse_mean": round_significant(c.worse_mean), "margin": round_significant(c.margin),
            "holds": c.holds, "strict": c.strict,
        } for c in comparisons)
    rows = [
        ["-".join(c.view_pair), c.train_ratio, c.graph or "-", c.better, c.worse, c.better_mean, c.worse_mean, c.difference, c.holds, c.strict]
        for c in comparisons
    ]
    if tablefmt == "tsv":
        return _tsv(COMPARISON_HEADERS, rows)
    return tabulate(rows, headers=COMPARISON_HEADERS, tablefmt=tablefmt, floatfmt=FLOAT_FORMAT) + "\n\n" + comparison_tally(comparisons)
