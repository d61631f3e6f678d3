#!/usr/bin/env python3
"""
Privacy-utility sweep over datasets, privacy budgets and sampler settings.
Run with: python -m asgl.scripts.sweep --datasets bitcoin-alpha.csv --epsilons 1 2 3 4 5 6 --paths-n 1 3 5
"""
import argparse
import itertools
import logging
import sys
from pathlib import Path

from asgl.config import configure_logging, settings
from asgl.exceptions import AsglError
from asgl.models import TrainConfig
from asgl.services.evaluation import EvalTask, aggregate, evaluate_embeddings
from asgl.services.loader import load_graph, split_edges
from asgl.services.trainer import train
from asgl.utils import storage
from asgl.utils.reporting import report_renderer

logger = logging.getLogger(__name__)

# Iterations per component, by dataset size class
ITERATIONS_BY_DATASET = {
    "bitcoin": 10,
    "wiki-rfa": 15,
    "slashdot": 15,
    "epinions": 20,
}


def iterations_for(dataset: Path, default: int) -> int:
    stem = dataset.stem.lower()
    for prefix, n_iter in ITERATIONS_BY_DATASET.items():
        if stem.startswith(prefix):
            return n_iter
    return default


def sweep_grid(epsilons, paths_n=None, path_len_l=None) -> list[dict]:
    """One flat override per (epsilon, N, L) point; a missing N or L list keeps the base value."""
    return [
        {"epsilon": eps, "paths_n": n, "path_len_l": l}
        for eps, n, l in itertools.product(epsilons, paths_n or [None], path_len_l or [None])
    ]


def variant_label(dataset: Path, config: TrainConfig) -> str:
    dp = config.dp
    return f"{dataset.stem}@eps={dp.epsilon_target:g},N={dp.path_count_n},L={dp.path_len_l}"


def sweep_dataset(path: Path, grid: list[dict], repeats: int, base: TrainConfig, tasks, run_dir: Path) -> list:
    g = load_graph(path)
    split = split_edges(g, settings.DEFAULT_TEST_FRACTION, settings.DEFAULT_SPLIT_SEED)
    base = base.model_copy(update={"n_iter": iterations_for(path, base.n_iter)})
    records = []
    for point in grid:
        reports = []
        for r in range(repeats):
            config = TrainConfig.from_flat({**point, "seed": base.seed + r}, base=base)
            theta_g, _, train_report = train(split.train_graph, config)
            report = evaluate_embeddings(
                theta_g,
                split,
                config.seed,
                tasks,
                config_hash=config.config_hash(),
                variant=variant_label(path, config),
            )
            report.metadata["epsilon_spent"] = train_report.epsilon
            reports.append(report)
        batch = aggregate(reports)
        storage.append_json_lines(batch, run_dir / storage.EVAL_FILE)
        records.extend(batch)
        logger.info(f"{batch[0].variant}: " + ", ".join(f"{r.metric}={r.value:.4f}" for r in batch))
    return records


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Sweep epsilon and the sampler settings over one or more datasets")
    parser.add_argument("--datasets", nargs="+", type=Path, required=True, help="edge-list files")
    parser.add_argument("--epsilons", nargs="+", type=float, default=[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    parser.add_argument("--paths-n", nargs="+", type=int, help="paths per root N (default: the config value)")
    parser.add_argument("--path-len-l", nargs="+", type=int, help="path length L (default: the config value)")
    parser.add_argument("--repeats", type=int, default=settings.EVAL_REPEATS)
    parser.add_argument("--config", help="flat key=value configuration file")
    parser.add_argument("--tasks", nargs="+", default=["sign", "cluster"])
    args = parser.parse_args(argv)
    configure_logging()

    try:
        base = TrainConfig.from_file(args.config) if args.config else TrainConfig()
        grid = sweep_grid(args.epsilons, args.paths_n, args.path_len_l)
        for point in grid:
            TrainConfig.from_flat(point, base=base)
        tasks = [t for name in args.tasks for t in EvalTask.from_string(name) if t is not EvalTask.ATTACK]
        run_dir = storage.create_run_dir("sweep", base.seed)
        records = []
        for dataset in args.datasets:
            records.extend(sweep_dataset(dataset, grid, args.repeats, base, tasks, run_dir))
    except AsglError as e:
        logger.error(f"sweep failed: {e}")
        return e.exit_code
    print(report_renderer.eval_table(records), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
