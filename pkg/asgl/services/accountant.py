"""Rényi-DP accounting of discriminator training under hypergeometric subsampling.

One discriminator step draws ``b_d`` entries without replacement from a
training set of ``n_tr`` subgraphs; a single node influences at most
``r_nl`` of them. The per-step cost at order alpha is

    gamma = log(sum_i beta_i * exp(alpha (alpha - 1) i^2 / (2 sigma^2 r_nl^2))) / (alpha - 1)

with ``beta_i`` the hypergeometric probability of drawing ``i`` affected
subgraphs.
"""
import logging
import math
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from asgl.exceptions import DomainError
from asgl.models import DpConfig, LedgerSnapshot, PrivacyLedger, Sign

logger = logging.getLogger(__name__)

DEFAULT_ORDERS: tuple[float, ...] = (1.25, 1.5, 1.75) + tuple(float(a) for a in range(2, 65)) + (128.0, 256.0)

MAX_ITERATIONS_CAP = 10**12


def _lchoose(n: np.ndarray, k: np.ndarray) -> np.ndarray:
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def _check_hypergeom(population: int, successes: int, draws: int) -> None:
    if population < 0 or not (0 <= successes <= population) or not (0 <= draws <= population):
        raise DomainError(
            f"invalid hypergeometric parameters: population={population}, "
            f"successes={successes}, draws={draws}"
        )


def hypergeom_log_pmf(population: int, successes: int, draws: int) -> np.ndarray:
    """log beta_i for i = 0..successes; -inf outside the support."""
    _check_hypergeom(population, successes, draws)
    i = np.arange(successes + 1, dtype=np.float64)
    lo = max(0, draws - (population - successes))
    hi = min(successes, draws)
    inside = (i >= lo) & (i <= hi)
    out = np.full(i.shape, -np.inf)
    ii = i[inside]
    out[inside] = (
        _lchoose(float(successes), ii)
        + _lchoose(float(population - successes), draws - ii)
        - _lchoose(float(population), float(draws))
    )
    return out


def hypergeom_pmf(population: int, successes: int, draws: int, i: int) -> float:
    """beta_i = C(R, i) C(N - R, B - i) / C(N, B), computed in log space."""
    _check_hypergeom(population, successes, draws)
    if not 0 <= i <= successes:
        return 0.0
    return float(np.exp(hypergeom_log_pmf(population, successes, draws)[i]))


def rdp_per_iteration(alpha: float, sigma: float, n_tr: int, r_nl: int, b_d: int) -> float:
    """Per-step RDP cost gamma at order ``alpha``; ``inf`` when it overflows.

    ``r_nl`` and ``b_d`` larger than ``n_tr`` are clamped for the
    hypergeometric draw; the exponent keeps the unclamped ``r_nl``.
    """
    if not alpha > 1:
        raise DomainError(f"RDP order must be > 1, got {alpha}")
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    if n_tr < 1 or r_nl < 1 or b_d < 1:
        raise DomainError(f"n_tr, r_nl and b_d must be >= 1, got {n_tr}, {r_nl}, {b_d}")

    successes = min(r_nl, n_tr)
    draws = min(b_d, n_tr)
    log_beta = hypergeom_log_pmf(n_tr, successes, draws)
    i = np.arange(successes + 1, dtype=np.float64)
    exponent = alpha * (alpha - 1) * i**2 / (2 * sigma**2 * r_nl**2)
    with np.errstate(over="ignore", invalid="ignore"):
        gamma = float(logsumexp(log_beta + exponent)) / (alpha - 1)
    if not math.isfinite(gamma):
        return math.inf
    return max(gamma, 0.0)


def open_ledger(snapshot: LedgerSnapshot, orders: Sequence[float] = DEFAULT_ORDERS) -> PrivacyLedger:
    """An empty ledger for the given training-set sizes; overflowing orders are dropped."""
    if not orders:
        raise DomainError("order grid is empty")
    kept, gamma_pos, gamma_neg = [], [], []
    for alpha in orders:
        per_sign = []
        for sign in (Sign.POSITIVE, Sign.NEGATIVE):
            n_tr = snapshot.n_tr(sign)
            if n_tr == 0:
                per_sign.append(0.0)
            else:
                per_sign.append(rdp_per_iteration(alpha, snapshot.sigma, n_tr, snapshot.r_nl, snapshot.b_d))
        if not all(math.isfinite(g) for g in per_sign):
            logger.debug(f"excluding order {alpha}: per-step cost overflowed")
            continue
        kept.append(float(alpha))
        gamma_pos.append(per_sign[0])
        gamma_neg.append(per_sign[1])
    if not kept:
        logger.warning("every RDP order overflowed; the ledger has no usable orders")
    return PrivacyLedger(
        orders=tuple(kept), gamma_pos=tuple(gamma_pos), gamma_neg=tuple(gamma_neg), snapshot=snapshot
    )


def ledger_for(dp: DpConfig, n_tr_pos: int, n_tr_neg: int) -> PrivacyLedger:
    snapshot = LedgerSnapshot(
        n_tr_pos=n_tr_pos,
        n_tr_neg=n_tr_neg,
        r_nl=dp.receptive_field,
        b_d=dp.batch_size_d,
        sigma=dp.sigma,
    )
    return open_ledger(snapshot)


def record_step(ledger: PrivacyLedger, sign: Sign) -> PrivacyLedger:
    """The ledger after one more discriminator step of the given sign."""
    if sign is Sign.POSITIVE:
        return ledger.with_steps(ledger.steps_pos + 1, ledger.steps_neg)
    return ledger.with_steps(ledger.steps_pos, ledger.steps_neg + 1)


def accumulate(ledger: PrivacyLedger, iterations: int) -> PrivacyLedger:
    """Add ``iterations`` paired D+/D- steps: ``rdp += iterations * (gamma+ + gamma-)``."""
    if iterations < 0:
        raise DomainError(f"iterations must be >= 0, got {iterations}")
    return ledger.with_steps(ledger.steps_pos + iterations, ledger.steps_neg + iterations)


def _epsilons(ledger: PrivacyLedger, delta: float) -> np.ndarray:
    orders = np.asarray(ledger.orders)
    return np.asarray(ledger.rdp_per_order) + math.log(1.0 / delta) / (orders - 1.0)


def to_dp(ledger: PrivacyLedger, delta: float) -> tuple[float, float]:
    """(epsilon, best alpha) with epsilon = min over alpha of rdp + ln(1/delta) / (alpha - 1)."""
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    if not ledger.orders:
        raise DomainError("order grid is empty")
    eps = _epsilons(ledger, delta)
    best = int(np.argmin(eps))
    return float(eps[best]), ledger.orders[best]


def spent_delta(ledger: PrivacyLedger, epsilon_target: float) -> float:
    """Smallest delta for which the ledger certifies ``epsilon_target``: min over alpha of exp((alpha - 1)(rdp - eps))."""
    if not ledger.orders:
        return 1.0
    orders = np.asarray(ledger.orders)
    log_delta = (orders - 1.0) * (np.asarray(ledger.rdp_per_order) - epsilon_target)
    return float(min(1.0, np.exp(log_delta.min())))


def max_iterations(ledger: PrivacyLedger, epsilon_target: float, delta: float) -> Optional[int]:
    """Largest T of paired steps keeping ``spent_delta < delta``; None when the cost per step is zero."""
    fresh = ledger.with_steps(0, 0)

    def fits(t: int) -> bool:
        return spent_delta(accumulate(fresh, t), epsilon_target) < delta

    if not fits(0):
        return 0
    if all(gp + gn == 0 for gp, gn in zip(fresh.gamma_pos, fresh.gamma_neg)):
        return None
    lo, hi = 0, 1
    while fits(hi):
        lo, hi = hi, hi * 2
        if hi > MAX_ITERATIONS_CAP:
            return MAX_ITERATIONS_CAP
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if fits(mid):
            lo = mid
        else:
            hi = mid
    return lo


def rdp_table(ledger: PrivacyLedger, delta: float) -> list[dict[str, float]]:
    eps = _epsilons(ledger, delta)
    return [
        {"alpha": a, "rdp": r, "epsilon": float(e)}
        for a, r, e in zip(ledger.orders, ledger.rdp_per_order, eps)
    ]
