import logging
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from asgl.exceptions import DomainError, NonFiniteGradientError
from asgl.models import EmbeddingTable, RowGradient, Sign, SignedGraph
from asgl.models.config import receptive_field_size

logger = logging.getLogger(__name__)


def _check_bound(c: float) -> None:
    if not c > 0:
        raise DomainError(f"clipping norm must be positive, got {c}")


def clip(vec: np.ndarray, c: float) -> np.ndarray:
    """Scale ``vec`` down by ``max(1, ||vec|| / c)``."""
    _check_bound(c)
    vec = np.asarray(vec, dtype=np.float64)
    return vec / max(1.0, float(np.linalg.norm(vec)) / c)


def clip_gradient(grad: RowGradient, c: float) -> RowGradient:
    """Clip one subgraph's whole sparse gradient to Frobenius norm at most ``c``.

    All rows are scaled by the same factor, so a subgraph contributes at most
    ``c`` to the summed batch gradient however many rows it touches.
    """
    _check_bound(c)
    values = np.asarray(grad.values, dtype=np.float64)
    return RowGradient(grad.rows, values / max(1.0, float(np.linalg.norm(values)) / c))


def sum_gradients(grads: Sequence[RowGradient], dim: int) -> RowGradient:
    if not grads:
        return RowGradient.zeros(dim)
    rows = np.concatenate([g.rows for g in grads])
    values = np.vstack([g.values for g in grads]).reshape(-1, dim)
    return RowGradient.accumulate(rows, values, dim)


def sensitivity(n: int, l: int, c: float) -> float:
    """Delta_g = C * (N^(L+1) - 1) / (N - 1); (L + 1) * C when N = 1."""
    _check_bound(c)
    return c * receptive_field_size(n, l)


def _check_noise_args(delta_g: float, sigma: float, batch_size: int) -> None:
    if not (delta_g > 0 and sigma > 0):
        raise DomainError(f"delta_g and sigma must be positive, got {delta_g}, {sigma}")
    if batch_size < 1:
        raise DomainError(f"batch size must be >= 1, got {batch_size}")


def noisy_batch_gradient(
    clipped_grads: Union[np.ndarray, Sequence[np.ndarray]],
    delta_g: float,
    sigma: float,
    batch_size: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """``(sum(clipped) + N(0, (delta_g * sigma)^2 I)) / batch_size``."""
    _check_noise_args(delta_g, sigma, batch_size)
    grads = np.atleast_2d(np.asarray(clipped_grads, dtype=np.float64))
    if grads.size == 0:
        raise DomainError("noisy_batch_gradient needs at least one gradient")
    if not np.all(np.isfinite(grads)):
        raise NonFiniteGradientError("clipped gradients contain non-finite entries")
    total = grads.sum(axis=0)
    noise = rng.normal(0.0, delta_g * sigma, size=total.shape)
    return (total + noise) / batch_size


def noisy_row_gradient(
    clipped: RowGradient,
    num_nodes: int,
    delta_g: float,
    sigma: float,
    batch_size: int,
    rng: np.random.Generator,
) -> RowGradient:
    """theta_D-shaped perturbation: noise lands on every row, touched by the batch or not."""
    _check_noise_args(delta_g, sigma, batch_size)
    if not clipped.is_finite():
        raise NonFiniteGradientError("clipped gradients contain non-finite entries")
    total = clipped.to_dense(num_nodes)
    total += rng.normal(0.0, delta_g * sigma, size=total.shape)
    return RowGradient.dense(total / batch_size)


@dataclass(frozen=True)
class SensitivityCheck:
    deviation_pos: float
    deviation_neg: float
    changed_rows: int
    affected_subgraphs: int
    bound: float

    @property
    def deviation(self) -> float:
        return max(self.deviation_pos, self.deviation_neg)

    @property
    def within_bound(self) -> bool:
        return self.deviation <= self.bound + 1e-9


def empirical_sensitivity_check(
    g: SignedGraph,
    node_to_remove: int,
    theta_g: EmbeddingTable,
    theta_d: EmbeddingTable,
    n: int,
    l: int,
    c: float,
    seed: int,
) -> SensitivityCheck:
    """Summed clipped discriminator gradient over S_tr, with and without ``node_to_remove``.

    The node-level neighbour of the training set drops every stored subgraph
    that contains the node; the occurrence cap keeps that to at most R_{N,L}
    subgraphs per sign. Test oracle; not used by training.
    """
    from asgl.services.adversarial import disc_batch_grad
    from asgl.services.sampler import sample_subgraphs
    from asgl.services.trainer import build_edge_sets

    if g.num_nodes > 50:
        logger.warning(f"sensitivity check on {g.num_nodes} nodes may be slow")

    s_tr = sample_subgraphs(g, n, l, theta_g, seed)
    edge_sets = build_edge_sets(g, s_tr)
    deviations = {}
    affected = 0
    changed = np.zeros(g.num_nodes, dtype=bool)
    for sign in (Sign.POSITIVE, Sign.NEGATIVE):
        examples = edge_sets.examples(sign)
        dropped = [
            clip_gradient(disc_batch_grad(group, theta_d), c)
            for index, group in enumerate(examples.groups)
            if node_to_remove in examples.nodes(index)
        ]
        diff = sum_gradients(dropped, theta_d.dim).to_dense(g.num_nodes)
        deviations[sign] = float(np.linalg.norm(diff))
        changed |= np.any(diff != 0.0, axis=1)
        affected = max(affected, len(dropped))

    check = SensitivityCheck(
        deviation_pos=deviations[Sign.POSITIVE],
        deviation_neg=deviations[Sign.NEGATIVE],
        changed_rows=int(changed.sum()),
        affected_subgraphs=affected,
        bound=sensitivity(n, l, c),
    )
    logger.debug(f"sensitivity check for node {node_to_remove}: {check}")
    return check
