#!/usr/bin/env python3
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any

import numpy as np

# Necessary to load the local uspl package
if "NO_LOCAL_USPL" not in os.environ and (Path(__file__).parent.parent / 'uspl').exists():
    sys.path.insert(0, str(Path(__file__).parent.parent))

from tabulate import tabulate  # noqa: E402

from uspl import (  # noqa: E402
    SIGNIFICANT_DIGITS,
    ExperimentConfig,
    GraphKind,
    GraphSpec,
    ModelFamily,
    ModelSpec,
    SplitPlan,
    compare_families,
    family_ranking,
    fit,
    k_curves,
    load_dataset,
    make_split,
    read_results,
    render_comparisons,
    render_curves,
    render_ranking,
    render_report,
    render_sensitivity,
    run,
    select_best,
    sensitivity_grid,
    view_pairs,
)

logger = logging.getLogger("uspl")


def cmd_run(args: argparse.Namespace) -> None:
    cfg = ExperimentConfig.load(args.config)
    table = run(cfg, workers=args.workers, seed_base=args.seed_base, progress=not args.no_progress)
    logger.info(f"{len(table)} summary rows written to {cfg.output_dir}")


def cmd_report(args: argparse.Namespace) -> None:
    if args.sensitivity is not None:
        if args.x is None or args.y is None:
            raise ValueError("--sensitivity needs --x and --y")
        cells = sensitivity_grid(read_results(args.results), args.sensitivity, args.x, args.y)
        print(render_sensitivity(cells, args.x, args.y, args.format, args.tablefmt), end="" if args.format == "records" else "\n")  # noqa: NP100
    elif args.compare is not None:
        comparisons = compare_families(select_best(read_results(args.results)), *args.compare, margin=args.margin)
        print(render_comparisons(comparisons, args.format, args.tablefmt), end="" if args.format == "records" else "\n")  # noqa: NP100
    elif args.ranking:
        ranked = family_ranking(select_best(read_results(args.results)))
        print(render_ranking(ranked, args.format, args.tablefmt), end="" if args.format == "records" else "\n")  # noqa: NP100
    elif args.curves:
        points = k_curves(read_results(args.results))
        print(render_curves(points, args.format, args.tablefmt), end="" if args.format == "records" else "\n")  # noqa: NP100
    else:
        print(render_report(args.results, args.format, args.tablefmt), end="" if args.format == "records" else "\n")  # noqa: NP100


def cmd_split(args: argparse.Namespace) -> None:
    if not args.inspect:
        raise ValueError("split only supports --inspect")
    cfg = ExperimentConfig.load(args.config)
    dataset = load_dataset(cfg)
    pair = view_pairs(cfg, dataset)[0]
    headers = ["seed", "train_ratio", "train", "test", "paired", "unpaired_view1", "unpaired_view2", "labeled_view1", "labeled_view2"]
    rows = []
    for ratio in cfg.split.train_ratio:
        for t in range(cfg.trials):
            seed = cfg.seed_base + t
            plan = SplitPlan(seed=seed, train_ratio=ratio, paired_ratio=cfg.split.paired_ratio, labeled_ratio=cfg.split.labeled_ratio)
            split = make_split(dataset.pair(*pair), plan)
            train = split.train
            rows.append([
                seed, ratio, train.n_samples(1), split.test.n, train.paired_count,
                train.n_samples(1) - train.paired_count, train.n_samples(2) - train.paired_count,
                len(train.labels1 or []), len(train.labels2 or []),
            ])
    print(tabulate(rows, headers=headers, tablefmt=args.tablefmt))  # noqa: NP100


def _spec_from_args(args: argparse.Namespace, cfg: ExperimentConfig) -> ModelSpec:
    family = ModelFamily(args.model)
    graph = None
    if family.supervised or family.laplacian_regularized:
        graph = GraphSpec(
            kind=GraphKind(args.graph), knn=args.knn, knn_penalty=args.knn_penalty,
            heat_scale=args.heat_scale, laplacian_knn=args.laplacian_knn,
        )
    return ModelSpec(
        family=family, gamma=args.gamma, gamma1=args.gamma1, gamma2=args.gamma2, eta=args.eta,
        graph=graph, k=args.k, ridge=cfg.ridge,
    )


def cmd_solve(args: argparse.Namespace) -> None:
    cfg = ExperimentConfig.load(args.config)
    dataset = load_dataset(cfg)
    pair = tuple(args.pair) if args.pair else view_pairs(cfg, dataset)[0]
    ratio = args.train_ratio if args.train_ratio is not None else cfg.split.train_ratio[0]
    plan = SplitPlan(seed=args.seed, train_ratio=ratio, paired_ratio=cfg.split.paired_ratio, labeled_ratio=cfg.split.labeled_ratio)
    spec = _spec_from_args(args, cfg)

    split = make_split(dataset.pair(*pair), plan)
    solution = fit(split.train, spec, [spec.k], cfg.solver.options(args.seed))[spec.k]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fmt = f"%.{SIGNIFICANT_DIGITS}g"
    np.savetxt(out / "P1.tsv", solution.p1, fmt=fmt, delimiter="\t")
    np.savetxt(out / "P2.tsv", solution.p2, fmt=fmt, delimiter="\t")
    residual = "n/a" if solution.kkt_residual is None else f"{solution.kkt_residual:.3e}"
    logger.info(f"{spec.family.value} on {pair[0]}-{pair[1]} (seed {args.seed}, k={spec.k}): objective {solution.objective:.12g}, kkt residual {residual}")
    logger.info(f"wrote {out / 'P1.tsv'} and {out / 'P2.tsv'}")


def main() -> None:
    parser = argparse.ArgumentParser(description="Semi-paired two-view subspace learning with uncorrelated constraints")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--verbose", action="store_true", help="increase output verbosity")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", parents=[common], help="run every trial of an experiment configuration")
    p_run.add_argument("config",        type=Path,                help="experiment configuration (YAML)")
    p_run.add_argument("--workers",     type=int,  default=None,  help="worker processes (default: USPL_WORKERS, then the config, then all cores)")
    p_run.add_argument("--seed-base",   type=int,  default=None,  help="offset of all trial seeds (default: seed_base of the config)")
    p_run.add_argument("--no-progress", action="store_true",      help="disable the progress bar")
    p_run.set_defaults(func=cmd_run)

    p_report = sub.add_parser("report", parents=[common], help="summarize a results directory or trials file")
    p_report.add_argument("results",       type=Path,                                   help="results directory or trials.jsonl")
    p_report.add_argument("--format",      choices=["table", "records"], default="table", help="table or one JSON record per row")
    p_report.add_argument("--tablefmt",    type=str,                     default="github", help="tabulate format of the table, or tsv")
    p_report.add_argument("--curves",      action="store_true",                          help="best accuracy per k instead of per family")
    p_report.add_argument("--sensitivity", type=str,                     default=None,     help="family whose hyperparameter grid to report")
    p_report.add_argument("--x",           type=str,                     default=None,     help="first hyperparameter of --sensitivity")
    p_report.add_argument("--y",           type=str,                     default=None,     help="second hyperparameter of --sensitivity")
    p_report.add_argument("--ranking",     action="store_true",                          help="rank the families on every view pair by mean accuracy")
    p_report.add_argument("--compare",     type=str,  nargs=2,           default=None,     metavar=("BETTER", "WORSE"), help="check that one family beats another on every view pair")
    p_report.add_argument("--margin",      type=float,                   default=0.0,      help="accuracy the better family of --compare may trail by (0.01 is one point)")
    p_report.set_defaults(func=cmd_report)

    p_split = sub.add_parser("split", parents=[common], help="inspect the semi-paired splits of a configuration")
    p_split.add_argument("config",     type=Path,                       help="experiment configuration (YAML)")
    p_split.add_argument("--inspect",  action="store_true",             help="print split sizes per seed")
    p_split.add_argument("--tablefmt", type=str,        default="github", help="tabulate format")
    p_split.set_defaults(func=cmd_split)

    p_solve = sub.add_parser("solve", parents=[common], help="fit one model on one split and write P1 / P2")
    p_solve.add_argument("--model",         type=str,   required=True, choices=[f.value for f in ModelFamily], help="model family")
    p_solve.add_argument("--config",        type=Path,  required=True, help="experiment configuration providing the dataset")
    p_solve.add_argument("--out",           type=Path,  required=True, help="output directory")
    p_solve.add_argument("--pair",          type=str,   nargs=2,       default=None, help="view pair (default: first of the config)")
    p_solve.add_argument("--seed",          type=int,   default=0,     help="split seed")
    p_solve.add_argument("--train-ratio",   type=float, default=None,  help="training ratio (default: first of the config)")
    p_solve.add_argument("--k",             type=int,   default=2,     help="number of projection vectors")
    p_solve.add_argument("--gamma",         type=float, default=0.5)
    p_solve.add_argument("--gamma1",        type=float, default=0.0)
    p_solve.add_argument("--gamma2",        type=float, default=1.0)
    p_solve.add_argument("--eta",           type=float, default=1.0)
    p_solve.add_argument("--graph",         type=str,   default=GraphKind.LDA.value, choices=[g.value for g in GraphKind])
    p_solve.add_argument("--knn",           type=int,   default=5)
    p_solve.add_argument("--knn-penalty",   type=int,   default=5)
    p_solve.add_argument("--heat-scale",    type=float, default=1.0)
    p_solve.add_argument("--laplacian-knn", type=int,   default=5)
    p_solve.set_defaults(func=cmd_solve)

    args = parser.parse_args(None if len(sys.argv) > 1 else ["--help"])

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)

    try:
        args.func(args)
    except Exception as e:
        logger.debug("command failed", exc_info=True)
        error: dict[str, Any] = {"error": type(e).__name__, "message": str(e)}
        print(json.dumps(error), file=sys.stderr)  # noqa: NP100
        sys.exit(1)


if __name__ == '__main__':
    main()
