"""Command-line entry point: ``python -m asgl <command>``."""
import argparse
import functools
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from pydantic import ValidationError

from asgl.config import configure_logging, settings
from asgl.exceptions import EXIT_DATA, EXIT_OK, EXIT_USAGE, AsglError, InvalidConfigError, UsageError
from asgl.models import (
    EdgeSplit,
    EmbeddingTable,
    EvalReport,
    LedgerSnapshot,
    RunManifest,
    SignedGraph,
    TrainConfig,
    WeightRule,
)
from asgl.services import accountant
from asgl.services.adversarial import init_embeddings
from asgl.services.evaluation import (
    EvalTask,
    ablation_variants,
    aggregate,
    evaluate_embeddings,
    link_stealing_attack,
)
from asgl.services.loader import (
    load_graph,
    read_id_map,
    read_signed_edges,
    split_edges,
    write_edge_list,
    write_id_map,
    write_signed_edges,
)
from asgl.services.sampler import sample_subgraphs, write_subgraph_set
from asgl.services.trainer import export, train
from asgl.utils import storage
from asgl.utils.reporting import report_renderer
from asgl.utils.rng import stream

logger = logging.getLogger(__name__)

# CLI flag -> flat configuration key
OVERRIDE_FLAGS = {
    "seed": "seed",
    "epsilon": "epsilon",
    "delta": "delta",
    "sigma": "sigma",
    "clip": "clip",
    "paths_n": "paths_n",
    "path_len_l": "path_len_l",
    "dim": "dim",
    "epochs": "epochs",
    "iters": "iters",
    "batch_d": "batch_d",
    "batch_g": "batch_g",
    "lr_d": "lr_d",
    "lr_g": "lr_g",
}


class ArgumentParser(argparse.ArgumentParser):
    """Reports usage errors through the exception hierarchy instead of exiting with 2."""

    def error(self, message: str) -> None:
        raise UsageError(f"{self.prog}: {message}")


def handle_errors(func: Callable[..., int]) -> Callable[..., int]:
    """Map exceptions to process exit codes."""

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> int:
        try:
            return func(*args, **kwargs)
        except AsglError as exc:
            logger.error(f"{type(exc).__name__}: {exc}")
            return exc.exit_code
        except ValidationError as exc:
            logger.error(f"invalid value: {exc}")
            return EXIT_USAGE
        except OSError as exc:
            logger.error(f"I/O error: {exc}")
            return EXIT_DATA

    return wrapper


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    return {key: getattr(args, flag) for flag, key in OVERRIDE_FLAGS.items() if getattr(args, flag, None) is not None}


def _load_config(args: argparse.Namespace) -> TrainConfig:
    overrides = _overrides(args)
    if args.config:
        return TrainConfig.from_file(args.config, overrides)
    return TrainConfig.from_flat(overrides)


def _new_manifest(command: str, args: argparse.Namespace, argv: Sequence[str], config: Optional[TrainConfig]) -> RunManifest:
    return RunManifest(
        command=command,
        argv=list(argv),
        graph_path=str(args.graph) if getattr(args, "graph", None) else None,
        config_path=str(args.config) if getattr(args, "config", None) else None,
        overrides=_overrides(args),
        seed=config.seed if config else 0,
        config_hash=config.config_hash() if config else "",
        git_describe=storage.git_describe(),
    )


def _finish_manifest(manifest: RunManifest, run_dir: Path, status: str) -> None:
    manifest.finish(status)
    names = sorted(p.name for p in run_dir.iterdir() if p.is_file() and p.name != storage.MANIFEST_FILE)
    manifest.artifacts = storage.checksum_artifacts(run_dir, names)
    storage.write_model(manifest, run_dir / storage.MANIFEST_FILE)


def cmd_ingest(args: argparse.Namespace, argv: Sequence[str]) -> int:
    raw = Path(args.graph)
    g = load_graph(raw, WeightRule(args.weight_rule))
    out_dir = Path(args.out) if args.out else settings.DATA_DIR / raw.stem
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = {
        "edges": out_dir / "edges.txt",
        "id map": out_dir / storage.ID_MAP_FILE,
        "stats": out_dir / "stats.json",
    }
    with outputs["edges"].open("w", encoding="utf-8") as fh:
        write_edge_list(g, fh)
    with outputs["id map"].open("w", encoding="utf-8") as fh:
        write_id_map(g, fh)
    storage.write_model(g.ingest_stats, outputs["stats"])
    print(report_renderer.ingest_summary(g.ingest_stats, outputs), end="")
    return EXIT_OK


def cmd_sample(args: argparse.Namespace, argv: Sequence[str]) -> int:
    config = _load_config(args)
    g = load_graph(args.graph)
    theta_g = init_embeddings(g.num_nodes, config.k, stream(config.seed, "init", "generator"))
    dp = config.dp
    s_tr = sample_subgraphs(g, dp.path_count_n, dp.path_len_l, theta_g, config.seed)
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fh:
            write_subgraph_set(s_tr, fh)
        logger.info(f"Wrote subgraph set to {path}")
    else:
        write_subgraph_set(s_tr, sys.stdout)
    return EXIT_OK


def _write_split(run_dir: Path, g: SignedGraph, split: EdgeSplit) -> None:
    with (run_dir / storage.TRAIN_EDGES_FILE).open("w", encoding="utf-8") as fh:
        write_edge_list(split.train_graph, fh)
    with (run_dir / storage.TEST_EDGES_FILE).open("w", encoding="utf-8") as fh:
        write_signed_edges(split.test_edges, fh)
    with (run_dir / storage.ID_MAP_FILE).open("w", encoding="utf-8") as fh:
        write_id_map(g, fh)


def cmd_train(args: argparse.Namespace, argv: Sequence[str]) -> int:
    config = _load_config(args)
    g = load_graph(args.graph)
    test_fraction = args.test_fraction if args.test_fraction is not None else settings.DEFAULT_TEST_FRACTION
    split_seed = args.split_seed if args.split_seed is not None else settings.DEFAULT_SPLIT_SEED
    split = split_edges(g, test_fraction, split_seed)

    run_dir = storage.create_run_dir("train", config.seed, args.out)
    manifest = _new_manifest("train", args, argv, config)
    manifest.split_seed = split_seed
    manifest.test_fraction = test_fraction
    status = "failed"
    try:
        config.write(run_dir / storage.CONFIG_FILE)
        _write_split(run_dir, g, split)
        theta_g, _, report = train(split.train_graph, config)
        export(theta_g, run_dir / storage.EMBEDDINGS_FILE)
        storage.write_model(report.ledger, run_dir / storage.LEDGER_FILE)
        storage.write_model(report, run_dir / storage.TRAIN_REPORT_FILE)
        status = "ok"
    finally:
        _finish_manifest(manifest, run_dir, status)
    print(report_renderer.train_summary(report, run_dir), end="")
    return EXIT_OK


class _RunArtifacts:
    """A finished train run directory, read back."""

    def __init__(self, run_dir: Path):
        self.run_dir = Path(run_dir)
        self.manifest = storage.read_model(RunManifest, self.run_dir / storage.MANIFEST_FILE)
        self.config = TrainConfig.from_file(self.run_dir / storage.CONFIG_FILE)
        self.theta_g = EmbeddingTable.load(self.run_dir / storage.EMBEDDINGS_FILE)
        original_ids: tuple[int, ...] = ()
        id_map = self.run_dir / storage.ID_MAP_FILE
        if id_map.exists():
            with id_map.open("r", encoding="utf-8") as fh:
                original_ids = read_id_map(fh)
        with (self.run_dir / storage.TRAIN_EDGES_FILE).open("r", encoding="utf-8") as fh:
            train_graph = SignedGraph.from_edges(
                self.theta_g.num_nodes, read_signed_edges(fh), original_ids=original_ids
            )
        with (self.run_dir / storage.TEST_EDGES_FILE).open("r", encoding="utf-8") as fh:
            test_edges = tuple(read_signed_edges(fh))
        self.split = EdgeSplit(train_graph=train_graph, test_edges=test_edges)

    def full_graph(self) -> SignedGraph:
        g = self.split.train_graph
        return SignedGraph.from_edges(
            g.num_nodes, g.signed_edges() + list(self.split.test_edges), original_ids=g.original_ids
        )


def _target_trainer(config: TrainConfig) -> Callable[[SignedGraph], EmbeddingTable]:
    def train_target(graph: SignedGraph) -> EmbeddingTable:
        return train(graph, config).theta_g

    return train_target


def _parse_tasks(values: Sequence[str]) -> list[EvalTask]:
    tasks: list[EvalTask] = []
    for value in values:
        for task in EvalTask.from_string(value):
            if task not in tasks:
                tasks.append(task)
    return tasks


def cmd_export(args: argparse.Namespace, argv: Sequence[str]) -> int:
    run = _RunArtifacts(args.run)
    ids = run.split.train_graph.original_ids if args.original_ids else None
    path = export(run.theta_g, args.out, original_ids=ids)
    logger.info(f"Exported {run.theta_g.num_nodes} embeddings to {path}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, argv: Sequence[str]) -> int:
    run = _RunArtifacts(args.run)
    tasks = _parse_tasks(args.tasks)
    seed = args.seed if args.seed is not None else run.config.seed
    repeats = args.repeats
    if repeats < 1:
        raise UsageError("--repeats must be >= 1")

    graph = run.full_graph() if EvalTask.ATTACK in tasks else None
    reports = []
    for r in range(repeats):
        config = run.config if r == 0 else run.config.model_copy(update={"seed": run.config.seed + r})
        theta_g = run.theta_g if r == 0 else train(run.split.train_graph, config).theta_g
        reports.append(
            evaluate_embeddings(
                theta_g,
                run.split,
                seed + r,
                tasks,
                config_hash=config.config_hash(),
                target_train_fn=_target_trainer(config),
                graph=graph,
            )
        )
    records = aggregate(reports) if repeats > 1 else reports[0].records()
    storage.append_json_lines(records, run.run_dir / storage.EVAL_FILE)
    print(report_renderer.eval_table(records), end="")
    return EXIT_OK


def _records_run(command: str, args: argparse.Namespace, argv: Sequence[str], config: TrainConfig, records) -> Path:
    run_dir = storage.create_run_dir(command, config.seed, args.out)
    manifest = _new_manifest(command, args, argv, config)
    storage.append_json_lines(records, run_dir / storage.EVAL_FILE)
    _finish_manifest(manifest, run_dir, "ok")
    return run_dir


def cmd_attack(args: argparse.Namespace, argv: Sequence[str]) -> int:
    config = _load_config(args)
    g = load_graph(args.graph)
    value = link_stealing_attack(_target_trainer(config), g, config.seed)
    report = EvalReport(attack_auc=value, config_hash=config.config_hash(), seed=config.seed)
    records = report.records()
    _records_run("attack", args, argv, config, records)
    print(report_renderer.eval_table(records), end="")
    return EXIT_OK


def cmd_ablation(args: argparse.Namespace, argv: Sequence[str]) -> int:
    config = _load_config(args)
    g = load_graph(args.graph)
    reports = ablation_variants(g, config, args.test_fraction, args.split_seed)
    records = [record for report in reports.values() for record in report.records()]
    _records_run("ablation", args, argv, config, records)
    print(report_renderer.eval_table(records), end="")
    return EXIT_OK


def cmd_accountant(args: argparse.Namespace, argv: Sequence[str]) -> int:
    config = TrainConfig.from_flat(_overrides(args))
    dp = config.dp
    if args.n_tr < 1:
        raise InvalidConfigError("--n-tr must be >= 1")
    snapshot = LedgerSnapshot(
        n_tr_pos=args.n_tr, n_tr_neg=args.n_tr, r_nl=dp.receptive_field, b_d=dp.batch_size_d, sigma=dp.sigma
    )
    ledger = accountant.open_ledger(snapshot)
    params = {
        "N": dp.path_count_n,
        "L": dp.path_len_l,
        "C": dp.clip_c,
        "sigma": dp.sigma,
        "B_d": dp.batch_size_d,
        "N_tr": args.n_tr,
        "delta": dp.delta,
        "R_NL": dp.receptive_field,
    }
    if args.inverse:
        params["epsilon"] = dp.epsilon_target
        t = accountant.max_iterations(ledger, dp.epsilon_target, dp.delta)
        ledger = accountant.accumulate(ledger, t or 0)
        text = report_renderer.accountant(
            params, accountant.rdp_table(ledger, dp.delta), max_iterations=t
        )
    else:
        if args.steps is None:
            raise UsageError("accountant needs --steps T (or --inverse)")
        params["T"] = args.steps
        ledger = accountant.accumulate(ledger, args.steps)
        epsilon, best_alpha = accountant.to_dp(ledger, dp.delta)
        text = report_renderer.accountant(
            params, accountant.rdp_table(ledger, dp.delta), epsilon=epsilon, best_alpha=best_alpha
        )
    print(text, end="")
    return EXIT_OK


def _add_config_flags(p: argparse.ArgumentParser, with_graph: bool = True) -> None:
    if with_graph:
        p.add_argument("--graph", required=True, help="edge-list file (relative paths fall back to ASGL_DATA_DIR)")
        p.add_argument("--config", help="flat key=value configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--sigma", type=float)
    p.add_argument("--clip", type=float)
    p.add_argument("--paths-n", dest="paths_n", type=int)
    p.add_argument("--path-len-l", dest="path_len_l", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--batch-d", dest="batch_d", type=int)
    p.add_argument("--batch-g", dest="batch_g", type=int)
    p.add_argument("--lr-d", dest="lr_d", type=float)
    p.add_argument("--lr-g", dest="lr_g", type=float)


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="asgl", description=settings.APP_NAME)
    parser.add_argument("--log-level", help="override ASGL_LOG_LEVEL")
    parser.add_argument("--progress", action="store_true", help="show progress bars")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    p = sub.add_parser("ingest", help="parse a raw edge list into canonical files")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", help="output directory (default: DATA_DIR/<graph stem>)")
    p.add_argument("--weight-rule", choices=[str(r) for r in WeightRule], default=str(WeightRule.SIGN))
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("sample", help="write the sampled subgraph set S_tr")
    _add_config_flags(p)
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("train", help="train embeddings into a new run directory")
    _add_config_flags(p)
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--split-seed", type=int)
    p.add_argument("--out", help="runs root (default: ASGL_RUNS_DIR)")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("export", help="copy theta_G out of a run directory")
    p.add_argument("--run", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--original-ids", action="store_true", help="label rows with the raw input ids")
    p.set_defaults(handler=cmd_export)

    p = sub.add_parser("eval", help="evaluate a trained run")
    p.add_argument("--run", required=True)
    p.add_argument("--tasks", nargs="+", default=["sign"], help="sign, cluster, attack or all")
    p.add_argument("--seed", type=int)
    p.add_argument("--repeats", type=int, default=settings.EVAL_REPEATS, help="number of training seeds to average")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("attack", help="link-stealing attack audit")
    _add_config_flags(p)
    p.add_argument("--out", help="runs root (default: ASGL_RUNS_DIR)")
    p.set_defaults(handler=cmd_attack)

    p = sub.add_parser("ablation", help="full model against the single-sign variants")
    _add_config_flags(p)
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--split-seed", type=int)
    p.add_argument("--out", help="runs root (default: ASGL_RUNS_DIR)")
    p.set_defaults(handler=cmd_ablation)

    p = sub.add_parser("accountant", help="privacy accounting without data access")
    _add_config_flags(p, with_graph=False)
    p.add_argument("--n-tr", dest="n_tr", type=int, required=True, help="training subgraphs per sign")
    p.add_argument("--steps", type=int, help="paired D+/D- iterations T")
    p.add_argument("--inverse", action="store_true", help="solve the largest T for --epsilon")
    p.set_defaults(handler=cmd_accountant)

    return parser


@handle_errors
def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    if args.progress:
        settings.SHOW_PROGRESS = True
    return args.handler(args, argv)
