import logging
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np
from tqdm import tqdm

from asgl.config import settings
from asgl.exceptions import (
    BudgetInfeasibleError,
    DomainError,
    EmptyGraphError,
    InvalidConfigError,
    NonFiniteGradientError,
    TrainingDivergedError,
)
from asgl.models import (
    Component,
    EdgeBatch,
    EdgeCase,
    EmbeddingTable,
    PrivacyLedger,
    RowGradient,
    Sign,
    SignedGraph,
    TrainConfig,
    TrainReport,
)
from asgl.services.accountant import ledger_for, record_step, spent_delta, to_dp
from asgl.services.adversarial import (
    Direction,
    apply_update,
    disc_batch_grad,
    gen_grad,
    gen_loss,
    init_embeddings,
)
from asgl.services.mechanism import clip_gradient, noisy_row_gradient, sensitivity, sum_gradients
from asgl.services.sampler import SubgraphSet, sample_subgraphs
from asgl.utils.rng import stream

logger = logging.getLogger(__name__)

BOTH_SIGNS = (Sign.POSITIVE, Sign.NEGATIVE)


@dataclass(frozen=True)
class SubgraphExamples:
    """Discriminator examples of one sign, grouped by the stored subgraph they came from.

    A group holds the real edges along the subgraph's paths and the fake pairs
    of its root. The group is the unit that is batched and clipped.
    """

    roots: tuple[int, ...] = ()
    groups: tuple[EdgeBatch, ...] = ()

    def __len__(self) -> int:
        return len(self.groups)

    def entries(self) -> EdgeBatch:
        return EdgeBatch.concat(self.groups)

    def nodes(self, index: int) -> set[int]:
        group = self.groups[index]
        return {self.roots[index], *group.i.tolist(), *group.j.tolist()}


@dataclass(frozen=True)
class EdgeSets:
    """E_D+/E_D- (real and fake entries per subgraph) and E_G+/E_G- (fake entries only)."""

    disc_pos: SubgraphExamples
    disc_neg: SubgraphExamples
    gen_pos: EdgeBatch
    gen_neg: EdgeBatch

    def examples(self, sign: Sign) -> SubgraphExamples:
        return self.disc_pos if sign is Sign.POSITIVE else self.disc_neg

    def disc(self, sign: Sign) -> EdgeBatch:
        return self.examples(sign).entries()

    def gen(self, sign: Sign) -> EdgeBatch:
        return self.gen_pos if sign is Sign.POSITIVE else self.gen_neg

    def real_count(self, sign: Sign) -> int:
        return self.disc(sign).count(EdgeCase.real(sign))


class TrainResult(NamedTuple):
    theta_g: EmbeddingTable
    theta_d: EmbeddingTable
    report: TrainReport


def _subgraph_examples(s_tr: SubgraphSet, sign: Sign) -> SubgraphExamples:
    fakes_by_root: dict[int, list] = defaultdict(list)
    for r, t in s_tr.fake_edges(sign):
        fakes_by_root[r].append((r, t, EdgeCase.fake(sign)))
    paths = s_tr.paths(sign)
    roots = sorted(set(paths) | set(fakes_by_root))
    groups = []
    for root in roots:
        # a path edge shared by several walks of the root counts once
        real = dict.fromkeys(
            (min(a, b), max(a, b)) for path in paths.get(root, ()) for a, b in zip(path.nodes, path.nodes[1:])
        )
        entries = [(u, v, EdgeCase.real(sign)) for u, v in real] + list(dict.fromkeys(fakes_by_root[root]))
        groups.append(EdgeBatch.from_entries(entries))
    return SubgraphExamples(tuple(roots), tuple(groups))


def build_edge_sets(
    g: SignedGraph, s_tr: SubgraphSet, signs: Sequence[Sign] = BOTH_SIGNS
) -> EdgeSets:
    """Group E_D by stored subgraph; every fake pair also enters E_G.

    Real edges come from the subgraphs' paths only, so a node reaches the
    discriminator through at most R_{N,L} subgraphs per sign.
    """
    disc = {s: SubgraphExamples() for s in BOTH_SIGNS}
    gen = {s: EdgeBatch.empty() for s in BOTH_SIGNS}
    for sign in signs:
        disc[sign] = _subgraph_examples(s_tr, sign)
        gen[sign] = EdgeBatch.from_entries((r, t, EdgeCase.fake(sign)) for r, t in s_tr.fake_edges(sign))
        logger.debug(
            f"{sign.symbol}: {len(disc[sign])} subgraphs, {len(disc[sign].entries())} discriminator entries "
            f"out of {g.num_edges(sign)} real edges plus fakes"
        )
    return EdgeSets(
        disc_pos=disc[Sign.POSITIVE],
        disc_neg=disc[Sign.NEGATIVE],
        gen_pos=gen[Sign.POSITIVE],
        gen_neg=gen[Sign.NEGATIVE],
    )


def _draw_index(population: int, size: int, seed: int, component: Component, step: int) -> np.ndarray:
    """Uniform sample without replacement."""
    size = min(size, population)
    return stream(seed, "batch", str(component), step).choice(population, size=size, replace=False)


class _Trainer:
    """Runs the alternating D+, G+, D-, G- schedule for one configuration."""

    def __init__(self, g: SignedGraph, config: TrainConfig, signs: Sequence[Sign]):
        self.g = g
        self.config = config
        self.signs = tuple(signs)
        self.delta_g = sensitivity(config.dp.path_count_n, config.dp.path_len_l, config.dp.clip_c)
        self.report_steps = {str(c): 0 for c in Component}
        self.traces: dict[str, list[float]] = {str(c): [] for c in Component}

    def _diverged(self, component: Component, step: int, exc: NonFiniteGradientError) -> TrainingDivergedError:
        snapshot = {"component": str(component), "step": step, **exc.snapshot}
        return TrainingDivergedError(f"{component} step {step} diverged: {exc}", snapshot=snapshot)

    def disc_step(self, theta_d: EmbeddingTable, examples: SubgraphExamples, sign: Sign) -> EmbeddingTable:
        component = Component.D_POS if sign is Sign.POSITIVE else Component.D_NEG
        step = self.report_steps[str(component)]
        dp = self.config.dp
        index = _draw_index(len(examples), self.config.b_d, self.config.seed, component, step)
        clipped = sum_gradients(
            [clip_gradient(disc_batch_grad(examples.groups[k], theta_d), dp.clip_c) for k in index],
            theta_d.dim,
        )
        try:
            noisy = noisy_row_gradient(
                clipped,
                theta_d.num_nodes,
                self.delta_g,
                dp.sigma,
                len(index),
                stream(self.config.seed, "noise", int(sign), step),
            )
            theta_d = apply_update(theta_d, noisy, self.config.lr_d, Direction.ASCEND)
        except NonFiniteGradientError as exc:
            raise self._diverged(component, step, exc) from exc
        self.traces[str(component)].append(float(np.linalg.norm(noisy.values)))
        self.report_steps[str(component)] += 1
        return theta_d

    def gen_step(
        self, theta_g: EmbeddingTable, theta_d: EmbeddingTable, edges: EdgeBatch, sign: Sign
    ) -> EmbeddingTable:
        component = Component.G_POS if sign is Sign.POSITIVE else Component.G_NEG
        step = self.report_steps[str(component)]
        batch = edges.take(_draw_index(len(edges), self.config.b_g, self.config.seed, component, step))
        grad = gen_grad(batch, theta_g, theta_d)
        loss = gen_loss(batch, theta_g, theta_d)
        if not np.isfinite(loss):
            raise TrainingDivergedError(
                f"{component} loss is not finite", snapshot={"component": str(component), "step": step}
            )
        try:
            theta_g = apply_update(
                theta_g, RowGradient(grad.rows, grad.values / len(batch)), self.config.lr_g, Direction.DESCEND
            )
        except NonFiniteGradientError as exc:
            raise self._diverged(component, step, exc) from exc
        self.traces[str(component)].append(loss)
        self.report_steps[str(component)] += 1
        return theta_g


def _training_set_sizes(edge_sets: EdgeSets, signs: Sequence[Sign]) -> dict[Sign, int]:
    return {sign: len(edge_sets.examples(sign)) if sign in signs else 0 for sign in BOTH_SIGNS}


def train(
    g: SignedGraph,
    config: TrainConfig,
    only_sign: Optional[Sign] = None,
) -> TrainResult:
    """Adversarial training with a noisy discriminator, stopped before the budget is exceeded.

    With ``only_sign`` set the run sees only that sign's edges (the
    single-sign ablation variants).
    """
    if only_sign is not None:
        if g.num_edges(only_sign) == 0:
            raise DomainError(f"graph has no {only_sign.symbol} edges to train on")
        g = g.restrict(only_sign)
    if g.num_edges() == 0:
        raise EmptyGraphError("cannot train on a graph without edges")

    dp = config.dp
    theta_g = init_embeddings(g.num_nodes, config.k, stream(config.seed, "init", "generator"))
    theta_d = init_embeddings(g.num_nodes, config.k, stream(config.seed, "init", "discriminator"))

    signs = [s for s in BOTH_SIGNS if g.num_edges(s) > 0]
    skipped = [str(s) for s in BOTH_SIGNS if s not in signs and (only_sign is None or s is only_sign)]
    for s in skipped:
        logger.warning(f"graph has no {s} edges; training the other sign only")

    s_tr = sample_subgraphs(g, dp.path_count_n, dp.path_len_l, theta_g, config.seed, signs=signs)
    edge_sets = build_edge_sets(g, s_tr, signs)
    smallest = min(len(edge_sets.examples(s)) for s in signs)
    if config.b_d > smallest:
        raise InvalidConfigError(
            f"batch_d = {config.b_d} exceeds the smallest discriminator training set ({smallest} subgraphs)"
        )
    for s in signs:
        if len(edge_sets.gen(s)) == 0:
            logger.warning(f"no {s.symbol} fake edges; generator {s.symbol} steps are skipped")

    sizes = _training_set_sizes(edge_sets, signs)
    ledger: PrivacyLedger = ledger_for(dp, sizes[Sign.POSITIVE], sizes[Sign.NEGATIVE])
    trainer = _Trainer(g, config, signs)
    logger.info(
        f"Training k={config.k} for up to {config.n_epoch} epochs: "
        f"N_tr+={sizes[Sign.POSITIVE]}, N_tr-={sizes[Sign.NEGATIVE]}, delta_g={trainer.delta_g:g}"
    )

    stopped_early = False
    stop_delta = None
    epochs_completed = 0
    for epoch in tqdm(range(config.n_epoch), desc="training", disable=not settings.SHOW_PROGRESS):
        for sign in signs:
            for _ in range(config.n_iter):
                would_be = record_step(ledger, sign)
                delta_hat = spent_delta(would_be, dp.epsilon_target)
                if delta_hat >= dp.delta:
                    if ledger.steps_taken == 0:
                        raise BudgetInfeasibleError(
                            f"a single discriminator step already spends delta {delta_hat:.3e} "
                            f">= {dp.delta:g} at epsilon {dp.epsilon_target:g}"
                        )
                    stopped_early, stop_delta = True, delta_hat
                    break
                theta_d = trainer.disc_step(theta_d, edge_sets.examples(sign), sign)
                ledger = would_be
            if stopped_early:
                break
            if len(edge_sets.gen(sign)):
                for _ in range(config.n_iter):
                    theta_g = trainer.gen_step(theta_g, theta_d, edge_sets.gen(sign), sign)
        if stopped_early:
            logger.warning(
                f"Privacy budget reached in epoch {epoch}: next step would spend delta {stop_delta:.3e}"
            )
            break
        epochs_completed += 1
        logger.debug(f"epoch {epoch} done, {ledger.steps_taken} discriminator steps")

    epsilon, best_alpha = (0.0, None)
    if ledger.steps_taken and ledger.orders:
        epsilon, best_alpha = to_dp(ledger, dp.delta)
    report = TrainReport(
        ledger=ledger,
        steps=trainer.report_steps,
        epochs_completed=epochs_completed,
        stopped_early=stopped_early,
        spent_delta=spent_delta(ledger, dp.epsilon_target) if ledger.steps_taken else 0.0,
        stop_delta=stop_delta,
        epsilon=epsilon,
        best_alpha=best_alpha,
        loss_traces=trainer.traces,
        skipped_signs=skipped,
        config_hash=config.config_hash(),
    )
    logger.info(f"Training done: {epochs_completed} epochs, epsilon {epsilon:.4f}")
    return TrainResult(theta_g, theta_d, report)


def export(
    theta_g: EmbeddingTable,
    path: Union[str, Path],
    original_ids: Optional[Sequence[int]] = None,
) -> Path:
    """Write theta_G in the embedding text format; ``original_ids`` relabels the id column."""
    if original_ids is None:
        return theta_g.save(path)
    if len(original_ids) != theta_g.num_nodes:
        raise DomainError("original_ids length does not match the embedding table")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ids = np.asarray(original_ids, dtype=np.float64)[:, None]
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"{theta_g.num_nodes} {theta_g.dim}\n")
        np.savetxt(fh, np.hstack([ids, theta_g.rows]), fmt=["%d"] + ["%.17g"] * theta_g.dim)
    return path
