"""Generator/discriminator probabilities and their closed-form gradients.

Both models are plain embedding tables scored by inner products:
``G+(t|r) = sigma(g_t . g_r)``, ``G-(t|r) = 1 - G+(t|r)`` and likewise
``D+``/``D-`` on theta_D.
"""
import logging
from enum import Enum
from typing import Union

import numpy as np
from scipy.special import expit, log_expit

from asgl.exceptions import DomainError, NonFiniteGradientError
from asgl.models import CASE_CODES, EdgeBatch, EdgeCase, EmbeddingTable, RowGradient

logger = logging.getLogger(__name__)

# Cases whose log-term is log sigma(x); the other two use log(1 - sigma(x)).
_LOG_SIGMOID_CASES = (EdgeCase.REAL_POS, EdgeCase.FAKE_NEG)
_LOG_SIGMOID_CODES = np.array([CASE_CODES.index(c) for c in _LOG_SIGMOID_CASES], dtype=np.int8)
_FAKE_POS_CODE = CASE_CODES.index(EdgeCase.FAKE_POS)
_FAKE_NEG_CODE = CASE_CODES.index(EdgeCase.FAKE_NEG)


class Direction(str, Enum):
    ASCEND = "ascend"
    DESCEND = "descend"

    def __str__(self) -> str:
        return self.value


def _as_case(case: Union[EdgeCase, str]) -> EdgeCase:
    try:
        return EdgeCase(case)
    except ValueError:
        raise DomainError(f"unknown edge case: {case!r}") from None


def init_embeddings(num_nodes: int, k: int, rng: np.random.Generator) -> EmbeddingTable:
    """Entries i.i.d. uniform on ``[-0.5/k, 0.5/k]``."""
    if k < 1:
        raise DomainError(f"embedding dimension must be >= 1, got {k}")
    bound = 0.5 / k
    return EmbeddingTable(rng.uniform(-bound, bound, size=(num_nodes, k)))


def _dot(table: EmbeddingTable, a: int, b: int) -> float:
    return float(table[a] @ table[b])


def gen_prob_pos(theta_g: EmbeddingTable, r: int, t: int) -> float:
    return float(expit(_dot(theta_g, t, r)))


def gen_prob_neg(theta_g: EmbeddingTable, r: int, t: int) -> float:
    return 1.0 - gen_prob_pos(theta_g, r, t)


def disc_prob_pos(theta_d: EmbeddingTable, r: int, v: int) -> float:
    return float(expit(_dot(theta_d, v, r)))


def disc_prob_neg(theta_d: EmbeddingTable, v: int, r: int) -> float:
    return 1.0 - disc_prob_pos(theta_d, r, v)


def disc_log_term(case: Union[EdgeCase, str], theta_d: EmbeddingTable, i: int, j: int) -> float:
    """The discriminator objective's term for one edge entry."""
    case = _as_case(case)
    x = _dot(theta_d, j, i)
    return float(log_expit(x) if case in _LOG_SIGMOID_CASES else log_expit(-x))


def disc_grad(case: Union[EdgeCase, str], theta_d: EmbeddingTable, i: int, j: int) -> np.ndarray:
    """Ascent direction of one edge entry's log-term with respect to ``d_i``."""
    case = _as_case(case)
    d_j = theta_d[j]
    s = float(expit(d_j @ theta_d[i]))
    coef = 1.0 - s if case in _LOG_SIGMOID_CASES else -s
    return coef * d_j


def _disc_coefficients(batch: EdgeBatch, rows: np.ndarray) -> np.ndarray:
    x = np.einsum("ij,ij->i", rows[batch.i], rows[batch.j])
    s = expit(x)
    return np.where(np.isin(batch.case, _LOG_SIGMOID_CODES), 1.0 - s, -s)


def disc_batch_grad(batch: EdgeBatch, theta_d: EmbeddingTable) -> RowGradient:
    """Per-row sum of the log-term gradients of every entry in ``batch``.

    Each log-term depends on both endpoints, so an entry contributes to rows
    ``i`` and ``j``.
    """
    if len(batch) == 0:
        return RowGradient.zeros(theta_d.dim)
    rows = theta_d.rows
    coef = _disc_coefficients(batch, rows)[:, None]
    contributions = np.vstack([coef * rows[batch.j], coef * rows[batch.i]])
    return RowGradient.accumulate(np.concatenate([batch.i, batch.j]), contributions, theta_d.dim)


def disc_objective(batch: EdgeBatch, theta_d: EmbeddingTable) -> float:
    """Sum of the log-terms over ``batch``; :func:`disc_batch_grad` is its gradient."""
    if len(batch) == 0:
        return 0.0
    rows = theta_d.rows
    x = np.einsum("ij,ij->i", rows[batch.i], rows[batch.j])
    terms = np.where(np.isin(batch.case, _LOG_SIGMOID_CODES), log_expit(x), log_expit(-x))
    return float(terms.sum())


def _check_fake_only(batch: EdgeBatch) -> None:
    if not np.all((batch.case == _FAKE_POS_CODE) | (batch.case == _FAKE_NEG_CODE)):
        raise DomainError("generator batches may only contain fake edges")


def _rewards(batch: EdgeBatch, theta_d: EmbeddingTable) -> np.ndarray:
    """``log(1 - D(t, r))`` for each entry, with D the discriminator of the entry's sign."""
    rows = theta_d.rows
    x_d = np.einsum("ij,ij->i", rows[batch.i], rows[batch.j])
    return np.where(batch.case == _FAKE_POS_CODE, log_expit(-x_d), log_expit(x_d))


def gen_policy_objective(batch: EdgeBatch, theta_g: EmbeddingTable, theta_d: EmbeddingTable) -> float:
    """Sum over entries of ``log G(t|r) * log(1 - D(t, r))`` with the reward held fixed."""
    if len(batch) == 0:
        return 0.0
    _check_fake_only(batch)
    rows = theta_g.rows
    x_g = np.einsum("ij,ij->i", rows[batch.i], rows[batch.j])
    log_g = np.where(batch.case == _FAKE_POS_CODE, log_expit(x_g), log_expit(-x_g))
    return float((log_g * _rewards(batch, theta_d)).sum())


def gen_grad(batch: EdgeBatch, theta_g: EmbeddingTable, theta_d: EmbeddingTable) -> RowGradient:
    """Score-function gradient of :func:`gen_policy_objective` over both endpoints' rows."""
    if len(batch) == 0:
        return RowGradient.zeros(theta_g.dim)
    _check_fake_only(batch)
    rows = theta_g.rows
    s = expit(np.einsum("ij,ij->i", rows[batch.i], rows[batch.j]))
    score = np.where(batch.case == _FAKE_POS_CODE, 1.0 - s, -s)
    coef = (score * _rewards(batch, theta_d))[:, None]
    contributions = np.vstack([coef * rows[batch.j], coef * rows[batch.i]])
    return RowGradient.accumulate(np.concatenate([batch.i, batch.j]), contributions, theta_g.dim)


def disc_loss(batch: EdgeBatch, theta_d: EmbeddingTable) -> float:
    """Mean negative log-likelihood of the discriminator over ``batch``."""
    if len(batch) == 0:
        return 0.0
    return -disc_objective(batch, theta_d) / len(batch)


def gen_loss(batch: EdgeBatch, theta_g: EmbeddingTable, theta_d: EmbeddingTable) -> float:
    """Mean policy loss the generator descends."""
    if len(batch) == 0:
        return 0.0
    return gen_policy_objective(batch, theta_g, theta_d) / len(batch)


def apply_update(
    table: EmbeddingTable,
    grad: RowGradient,
    learning_rate: float,
    direction: Direction,
) -> EmbeddingTable:
    """Row-wise ``table[rows] +/-= learning_rate * grad``; non-finite results are rejected."""
    if not grad.is_finite():
        bad = grad.rows[~np.all(np.isfinite(grad.values), axis=1)]
        raise NonFiniteGradientError(
            "gradient contains non-finite entries; update rejected",
            snapshot={"rows": bad[:20].tolist(), "num_bad_rows": int(bad.size)},
        )
    if len(grad) == 0:
        return table
    step = learning_rate if Direction(direction) is Direction.ASCEND else -learning_rate
    rows = table.copy_rows()
    rows[grad.rows] += step * grad.values
    if not np.all(np.isfinite(rows[grad.rows])):
        raise NonFiniteGradientError(
            "update overflowed to non-finite embeddings",
            snapshot={"learning_rate": learning_rate, "max_abs_grad": float(np.abs(grad.values).max())},
        )
    return EmbeddingTable(rows)
