from __future__ import annotations

import itertools
import json
import logging
import os
from concurrent.futures import FIRST_EXCEPTION, Future, ProcessPoolExecutor, wait
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional

from tqdm import tqdm

from .config import ConfigError, ExperimentConfig, SolverConfig
from .constants import Keys, NncTraining, TestedView
from .datasets import load_csv, load_mfeat, standardize
from .evaluation import MultiViewDataset, SplitPlan, TrialResult, round_significant, run_k_sweep
from .models import ModelSpec
from .report import ResultTable, select_best, write_summary_tsv

logger = logging.getLogger("runner")


@dataclass(frozen=True)
class Job:
    """One fit: a grid point of one family on one view pair, split seed and training ratio."""
    view_pair: tuple[str, str]
    train_ratio: float
    spec: ModelSpec
    seed: int

    def key(self) -> str:
        graph = self.spec.graph_spec.kind.value if self.spec.family.supervised else None
        return job_key(self.view_pair, self.train_ratio, self.spec.family.value, graph, self.spec.params(), self.seed)


def job_key(view_pair: Iterable[str], train_ratio: float, family: str, graph: Optional[str], params: dict[str, Any], seed: int) -> str:
    rounded = {k: round_significant(v) if isinstance(v, float) else v for k, v in params.items()}
    return json.dumps([list(view_pair), round_significant(train_ratio), family, graph, rounded, seed], sort_keys=True)


def record_job_key(record: dict[str, Any]) -> str:
    return job_key(
        record[Keys.Trial.VIEW_PAIR], record[Keys.Trial.TRAIN_RATIO], record[Keys.Trial.FAMILY],
        record[Keys.Trial.GRAPH], record[Keys.Trial.PARAMS], record[Keys.Trial.SEED],
    )


def record_sort_key(record: dict[str, Any]) -> tuple[Any, ...]:
    return (
        tuple(record[Keys.Trial.VIEW_PAIR]), record[Keys.Trial.TRAIN_RATIO], record[Keys.Trial.FAMILY],
        record[Keys.Trial.GRAPH] or "", json.dumps(record[Keys.Trial.PARAMS], sort_keys=True),
        record[Keys.Trial.SEED], record[Keys.Trial.K], record[Keys.Trial.TESTED_VIEW],
    )


def dump_record(record: dict[str, Any]) -> str:
    return json.dumps(record, separators=(",", ":"))


def load_dataset(cfg: ExperimentConfig) -> MultiViewDataset:
    ds = cfg.dataset
    if ds.kind == "mfeat":
        assert ds.path is not None
        wanted = sorted({v for pair in cfg.view_pairs for v in pair}) or None
        return load_mfeat(cfg.resolve(ds.path), standardized=ds.standardize, views=wanted)
    assert ds.labels is not None
    dataset = load_csv({name: cfg.resolve(p) for name, p in ds.views}, cfg.resolve(ds.labels))
    if ds.standardize:
        dataset = MultiViewDataset(name=dataset.name, views={k: standardize(v) for k, v in dataset.views.items()}, labels=dataset.labels)
    return dataset


def view_pairs(cfg: ExperimentConfig, dataset: MultiViewDataset) -> list[tuple[str, str]]:
    pairs = list(cfg.view_pairs) or list(itertools.combinations(dataset.view_names, 2))
    for v1, v2 in pairs:
        for v in (v1, v2):
            if v not in dataset.views:
                raise ConfigError(f"View {v!r} not in dataset {dataset.name!r} (views {dataset.view_names})")
        limit = min(dataset.views[v1].shape[0], dataset.views[v2].shape[0])
        if max(cfg.grids.k) > limit:
            raise ConfigError(f"k up to {max(cfg.grids.k)} exceeds min view dim {limit} of pair ({v1}, {v2})")
    return pairs


def plan_jobs(cfg: ExperimentConfig, pairs: list[tuple[str, str]], seed_base: int) -> list[Job]:
    jobs = []
    for pair in pairs:
        for ratio in cfg.split.train_ratio:
            for family in cfg.families:
                for graph in cfg.graphs_for(family):
                    for spec in cfg.expand_grid(family, graph):
                        for t in range(cfg.trials):
                            jobs.append(Job(view_pair=pair, train_ratio=ratio, spec=spec, seed=seed_base + t))
    return jobs


#
# worker side
#

_DATASET: Optional[MultiViewDataset] = None


def _init_worker(dataset: MultiViewDataset) -> None:
    global _DATASET
    _DATASET = dataset


@dataclass(frozen=True)
class _JobContext:
    ks: tuple[int, ...]
    paired_ratio: float
    labeled_ratio: float
    tested_view: TestedView
    nnc_training: NncTraining
    solver: SolverConfig


def _run_job(job: Job, ctx: _JobContext) -> list[dict[str, Any]]:
    assert _DATASET is not None, "worker was not initialized with a dataset"
    plan = SplitPlan(seed=job.seed, train_ratio=job.train_ratio, paired_ratio=ctx.paired_ratio, labeled_ratio=ctx.labeled_ratio)
    results = run_k_sweep(
        _DATASET.pair(*job.view_pair), plan, job.spec, ctx.ks,
        tested_view=ctx.tested_view, nnc_training=ctx.nnc_training,
        saa_opts=ctx.solver.options(job.seed), view_pair=job.view_pair,
    )
    return [r.to_record() for r in results]


#
# resume bookkeeping
#


def read_records(path: Path, tolerate_truncated_tail: bool = False) -> list[dict[str, Any]]:
    with open(path, "r") as f:
        lines = [line for line in f.read().split("\n") if line.strip()]
    records = []
    for i, line in enumerate(lines):
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as e:
            if tolerate_truncated_tail and i == len(lines) - 1:
                logger.warning(f"{path}: ignoring truncated last record")
                break
            raise ValueError(f"{path}:{i + 1}: malformed record: {e}") from e
    return records


def _completed(records: list[dict[str, Any]], n_ks: int) -> dict[str, list[dict[str, Any]]]:
    by_job: dict[str, list[dict[str, Any]]] = {}
    for record in records:
        by_job.setdefault(record_job_key(record), []).append(record)
    return {key: recs for key, recs in by_job.items() if len(recs) == n_ks}


class _PartialWriter:
    """Single writer of the partial records; one flush per finished job."""

    def __init__(self, path: Path, initial: Iterable[dict[str, Any]]):
        self.path = path
        with open(path, "w") as f:
            for record in initial:
                f.write(dump_record(record) + "\n")
        self.f = open(path, "a")

    def write(self, records: list[dict[str, Any]]) -> None:
        self.f.write("".join(dump_record(r) + "\n" for r in records))
        self.f.flush()

    def close(self) -> None:
        self.f.close()


def _execute(jobs: list[Job], ctx: _JobContext, dataset: MultiViewDataset, workers: int, progress: bool, desc: str) -> Iterator[list[dict[str, Any]]]:
    if workers == 1 or len(jobs) <= 1:
        _init_worker(dataset)
        for job in tqdm(jobs, desc=desc, unit="fit", disable=not progress):
            yield _run_job(job, ctx)
        return

    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(dataset,)) as pool:
        pending: set[Future[list[dict[str, Any]]]] = {pool.submit(_run_job, job, ctx) for job in jobs}
        with tqdm(total=len(jobs), desc=desc, unit="fit", disable=not progress) as bar:
            while pending:
                done, pending = wait(pending, return_when=FIRST_EXCEPTION)
                for future in done:
                    if future.exception() is not None:
                        for other in pending:
                            other.cancel()
                        raise future.exception()  # type: ignore[misc]
                    bar.update(1)
                    yield future.result()


def run(
    cfg: ExperimentConfig,
    workers: Optional[int] = None,
    seed_base: Optional[int] = None,
    progress: bool = True,
) -> ResultTable:
    """Run every (view pair, ratio, family, graph, grid point, seed) fit and write the results.

    Records go to the partial file while the resume marker exists; a rerun of
    an interrupted experiment only fits the jobs that have no records yet.
    """
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    partial = out / Keys.Output.PARTIAL
    marker = out / Keys.Output.RESUME_MARKER

    dataset = load_dataset(cfg)
    pairs = view_pairs(cfg, dataset)
    jobs = plan_jobs(cfg, pairs, cfg.seed_base if seed_base is None else seed_base)
    n_ks = len(set(cfg.grids.k))

    done: dict[str, list[dict[str, Any]]] = {}
    if marker.exists() and partial.exists():
        done = _completed(read_records(partial, tolerate_truncated_tail=True), n_ks)
        logger.info(f"resuming {cfg.name}: {len(done)} of {len(jobs)} fits already done")
    wanted = {job.key() for job in jobs}
    done = {key: recs for key, recs in done.items() if key in wanted}
    pending = [job for job in jobs if job.key() not in done]

    marker.touch()
    writer = _PartialWriter(partial, (r for recs in done.values() for r in recs))
    ctx = _JobContext(
        ks=tuple(sorted(set(cfg.grids.k))), paired_ratio=cfg.split.paired_ratio, labeled_ratio=cfg.split.labeled_ratio,
        tested_view=cfg.tested_view, nnc_training=cfg.nnc_training, solver=cfg.solver,
    )
    n_workers = cfg.resolve_workers(workers)
    logger.info(f"{cfg.name}: {len(pending)} fits on {len(pairs)} view pairs with {n_workers} workers")
    records = [r for recs in done.values() for r in recs]
    try:
        for batch in _execute(pending, ctx, dataset, n_workers, progress, cfg.name):
            writer.write(batch)
            records.extend(batch)
    finally:
        writer.close()

    records.sort(key=record_sort_key)
    tmp = out / (Keys.Output.TRIALS + ".tmp")
    with open(tmp, "w") as f:
        f.write("".join(dump_record(r) + "\n" for r in records))
    os.replace(tmp, out / Keys.Output.TRIALS)

    table = select_best([TrialResult.from_record(r) for r in records])
    write_summary_tsv(out / Keys.Output.SUMMARY, table)
    partial.unlink()
    marker.unlink()
    logger.info(f"{cfg.name}: {len(records)} trial records written to {out}")
    return table
