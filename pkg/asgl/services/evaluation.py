import logging
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.special import expit, log_expit
from sklearn.metrics import roc_auc_score
from sklearn.preprocessing import StandardScaler

from asgl.config import settings
from asgl.exceptions import DomainError
from asgl.models import (
    EdgeSplit,
    EmbeddingTable,
    EvalRecord,
    EvalReport,
    Sign,
    SignedEdge,
    SignedGraph,
    TrainConfig,
)
from asgl.utils.rng import stream

logger = logging.getLogger(__name__)

SSI_FLOOR = 1e-12

TargetTrainFn = Callable[[SignedGraph], EmbeddingTable]


class EvalTask(str, Enum):
    SIGN = "sign"
    CLUSTER = "cluster"
    ATTACK = "attack"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def from_string(cls, value: str) -> list["EvalTask"]:
        """Parse a task name; ``all`` expands to every task."""
        normalized = value.strip().lower()
        if normalized == "all":
            return list(cls)
        try:
            return [cls(normalized)]
        except ValueError:
            raise DomainError(f"unknown evaluation task: {value}") from None


def pair_features(theta: EmbeddingTable, pairs: np.ndarray) -> np.ndarray:
    """``[z_lo ; z_hi]`` per pair, lower node id first."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    lo = pairs.min(axis=1)
    hi = pairs.max(axis=1)
    return np.hstack([theta.rows[lo], theta.rows[hi]])


@dataclass(frozen=True)
class LabeledPairSet:
    pairs: np.ndarray
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if not (len(self.pairs) == len(self.features) == len(self.labels)):
            raise DomainError("pairs, features and labels must have equal lengths")
        if not np.all(np.isfinite(self.features)):
            raise DomainError("pair features must be finite")

    @classmethod
    def from_pairs(cls, theta: EmbeddingTable, pairs: np.ndarray, labels: np.ndarray) -> "LabeledPairSet":
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        return cls(pairs, pair_features(theta, pairs), np.asarray(labels, dtype=np.int64))

    @classmethod
    def from_signed_edges(cls, theta: EmbeddingTable, edges: Sequence[SignedEdge]) -> "LabeledPairSet":
        """Label 1 for positive edges, 0 for negative."""
        pairs = np.array([(u, v) for u, v, _ in edges], dtype=np.int64).reshape(-1, 2)
        labels = np.array([1 if s is Sign.POSITIVE else 0 for *_, s in edges], dtype=np.int64)
        return cls.from_pairs(theta, pairs, labels)

    def __len__(self) -> int:
        return len(self.labels)


def _check_two_classes(labels: np.ndarray) -> None:
    classes = np.unique(labels)
    if classes.size != 2:
        raise DomainError(f"need examples of both classes, got classes {classes.tolist()}")


def logistic_loss_and_grad(
    weights: np.ndarray, bias: float, x: np.ndarray, y: np.ndarray, l2: float
) -> tuple[float, np.ndarray, float]:
    """Mean log-loss plus ``l2 / 2 * ||w||^2``, with its gradient in ``w`` and ``b``."""
    z = x @ weights + bias
    loss = -np.mean(y * log_expit(z) + (1 - y) * log_expit(-z)) + 0.5 * l2 * float(weights @ weights)
    residual = expit(z) - y
    grad_w = x.T @ residual / len(y) + l2 * weights
    grad_b = float(residual.mean())
    return float(loss), grad_w, grad_b


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    scaler: StandardScaler = field(repr=False)

    def decision_function(self, features: np.ndarray) -> np.ndarray:
        return self.scaler.transform(features) @ self.weights + self.bias

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        return expit(self.decision_function(features))

    def predict(self, features: np.ndarray) -> np.ndarray:
        return (self.decision_function(features) > 0).astype(np.int64)


def fit_logistic(
    features: np.ndarray,
    labels: np.ndarray,
    reg_strength: Optional[float] = None,
    max_iters: Optional[int] = None,
) -> LogisticModel:
    """L2-regularised logistic regression on standardised features, full-batch gradient descent.

    The step is ``1 / (L/4 + reg)`` with ``L`` the largest eigenvalue of
    ``A^T A / n`` for the bias-augmented design ``A``, so the loss never
    increases between iterations.
    """
    reg = settings.LOGREG_L2 if reg_strength is None else reg_strength
    iters = settings.LOGREG_MAX_ITERS if max_iters is None else max_iters
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    _check_two_classes(y)

    scaler = StandardScaler().fit(x)
    xs = scaler.transform(x)
    n = xs.shape[0]
    augmented = np.hstack([xs, np.ones((n, 1))])
    lipschitz = float(np.linalg.eigvalsh(augmented.T @ augmented / n).max())
    step = 1.0 / (lipschitz / 4.0 + reg)

    weights = np.zeros(xs.shape[1])
    bias = 0.0
    for _ in range(iters):
        _, grad_w, grad_b = logistic_loss_and_grad(weights, bias, xs, y, reg)
        weights -= step * grad_w
        bias -= step * grad_b
    return LogisticModel(weights=weights, bias=bias, scaler=scaler)


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Rank-based AUC; tied scores count one half."""
    labels = np.asarray(labels)
    _check_two_classes(labels)
    return float(roc_auc_score(labels, np.asarray(scores, dtype=np.float64)))


def _subsample(pairs: LabeledPairSet, limit: Optional[int], seed: int) -> LabeledPairSet:
    if limit is None or len(pairs) <= limit:
        return pairs
    index = np.sort(stream(seed, "eval", "subsample").choice(len(pairs), size=limit, replace=False))
    return LabeledPairSet(pairs.pairs[index], pairs.features[index], pairs.labels[index])


def eval_sign_prediction(
    theta_g: EmbeddingTable,
    split: EdgeSplit,
    seed: int,
    max_train_pairs: Optional[int] = None,
) -> float:
    """Fit a sign classifier on training-edge features and return its test AUC."""
    limit = settings.EVAL_MAX_TRAIN_PAIRS if max_train_pairs is None else max_train_pairs
    train = _subsample(
        LabeledPairSet.from_signed_edges(theta_g, split.train_graph.signed_edges()), limit, seed
    )
    test = LabeledPairSet.from_signed_edges(theta_g, list(split.test_edges))
    model = fit_logistic(train.features, train.labels)
    value = auc(model.decision_function(test.features), test.labels)
    logger.info(f"sign prediction AUC {value:.4f} on {len(test)} test edges")
    return value


def _cosine(theta: EmbeddingTable, pairs: np.ndarray) -> np.ndarray:
    a = theta.rows[pairs[:, 0]]
    b = theta.rows[pairs[:, 1]]
    norms = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
    dots = np.einsum("ij,ij->i", a, b)
    return np.divide(dots, norms, out=np.zeros_like(dots), where=norms > 0)


def ssi(theta_g: EmbeddingTable, test_edges: Sequence[SignedEdge]) -> float:
    """1 / (|CD+ - 1| + |CD- + 1|), CD the mean cosine similarity per sign."""
    means = {}
    for sign in (Sign.POSITIVE, Sign.NEGATIVE):
        pairs = np.array([(u, v) for u, v, s in test_edges if s is sign], dtype=np.int64).reshape(-1, 2)
        if len(pairs) == 0:
            raise DomainError(f"SSI needs at least one {sign.symbol} edge")
        means[sign] = float(_cosine(theta_g, pairs).mean())
    spread = abs(means[Sign.POSITIVE] - 1.0) + abs(means[Sign.NEGATIVE] + 1.0)
    return 1.0 / max(spread, SSI_FLOOR)


@dataclass(frozen=True)
class AttackPartition:
    target_train: tuple[SignedEdge, ...]
    aux_train: tuple[SignedEdge, ...]
    target_test: tuple[SignedEdge, ...]
    aux_test: tuple[SignedEdge, ...]

    @property
    def members(self) -> tuple[SignedEdge, ...]:
        return self.target_train + self.aux_train


def partition_for_attack(g: SignedGraph, seed: int) -> AttackPartition:
    """Shuffle the edges and cut them 5:2:2:1 into target-train, aux-train, target-test, aux-test."""
    edges = g.signed_edges()
    m = len(edges)
    n_aux_train = (2 * m) // 10
    n_target_test = (2 * m) // 10
    n_aux_test = m // 10
    n_target_train = m - n_aux_train - n_target_test - n_aux_test
    if min(n_aux_train, n_target_test, n_aux_test, n_target_train) < 1:
        raise DomainError(f"{m} edges are too few for the attack partition")
    order = stream(seed, "attack", "partition").permutation(m)
    shuffled = [edges[i] for i in order]
    a = n_aux_train
    b = a + n_target_test
    c = b + n_aux_test
    return AttackPartition(
        aux_train=tuple(shuffled[:a]),
        target_test=tuple(shuffled[a:b]),
        aux_test=tuple(shuffled[b:c]),
        target_train=tuple(shuffled[c:]),
    )


def _membership_set(theta: EmbeddingTable, members: Sequence[SignedEdge], others: Sequence[SignedEdge]) -> LabeledPairSet:
    pairs = np.array([(u, v) for u, v, _ in list(members) + list(others)], dtype=np.int64)
    labels = np.concatenate([np.ones(len(members), dtype=np.int64), np.zeros(len(others), dtype=np.int64)])
    return LabeledPairSet.from_pairs(theta, pairs, labels)


def link_stealing_attack(target_train_fn: TargetTrainFn, g: SignedGraph, seed: int) -> float:
    """Membership-inference AUC of a black-box attacker against embeddings trained by ``target_train_fn``.

    The target model sees target-train and aux-train edges. The attacker
    learns member (aux-train) vs non-member (aux-test) pairs from the released
    embeddings and is scored on target-train vs target-test.
    """
    part = partition_for_attack(g, seed)
    target_graph = SignedGraph.from_edges(g.num_nodes, part.members, original_ids=g.original_ids)
    theta = target_train_fn(target_graph)
    attack_train = _membership_set(theta, part.aux_train, part.aux_test)
    attack_eval = _membership_set(theta, part.target_train, part.target_test)
    model = fit_logistic(attack_train.features, attack_train.labels)
    value = auc(model.decision_function(attack_eval.features), attack_eval.labels)
    logger.info(f"link-stealing attack AUC {value:.4f}")
    return value


def evaluate_embeddings(
    theta_g: EmbeddingTable,
    split: EdgeSplit,
    seed: int,
    tasks: Iterable[EvalTask],
    config_hash: str = "",
    target_train_fn: Optional[TargetTrainFn] = None,
    graph: Optional[SignedGraph] = None,
    variant: str = "full",
) -> EvalReport:
    tasks = set(tasks)
    report = EvalReport(variant=variant, config_hash=config_hash, seed=seed)
    if EvalTask.SIGN in tasks:
        report.auc = eval_sign_prediction(theta_g, split, seed)
    if EvalTask.CLUSTER in tasks:
        report.ssi = ssi(theta_g, split.test_edges)
    if EvalTask.ATTACK in tasks:
        if target_train_fn is None or graph is None:
            raise DomainError("the attack task needs a graph and a target training function")
        report.attack_auc = link_stealing_attack(target_train_fn, graph, seed)
    return report


ABLATION_VARIANTS: tuple[tuple[str, Optional[Sign]], ...] = (
    ("full", None),
    ("positive", Sign.POSITIVE),
    ("negative", Sign.NEGATIVE),
)


def ablation_variants(
    g: SignedGraph,
    config: TrainConfig,
    test_fraction: Optional[float] = None,
    split_seed: Optional[int] = None,
) -> dict[str, EvalReport]:
    """Train the full model and both single-sign variants on one split; report AUC and SSI for each."""
    from asgl.services.loader import split_edges
    from asgl.services.trainer import train

    for name, sign in ABLATION_VARIANTS:
        if sign is not None and g.num_edges(sign) == 0:
            raise DomainError(f"variant {name} needs {sign.symbol} edges, the graph has none")

    split = split_edges(
        g,
        settings.DEFAULT_TEST_FRACTION if test_fraction is None else test_fraction,
        settings.DEFAULT_SPLIT_SEED if split_seed is None else split_seed,
    )
    reports = {}
    for name, sign in ABLATION_VARIANTS:
        theta_g, _, train_report = train(split.train_graph, config, only_sign=sign)
        report = evaluate_embeddings(
            theta_g,
            split,
            config.seed,
            (EvalTask.SIGN, EvalTask.CLUSTER),
            config_hash=config.config_hash(),
            variant=name,
        )
        report.metadata["epsilon"] = train_report.epsilon
        reports[name] = report
        logger.info(f"ablation {name}: AUC {report.auc:.4f}, SSI {report.ssi:.4f}")
    return reports


def aggregate(reports: Iterable[EvalReport]) -> list[EvalRecord]:
    """Mean and standard deviation of every metric per variant across repeated runs."""
    values: dict[tuple[str, str], list[float]] = defaultdict(list)
    meta: dict[tuple[str, str], EvalReport] = {}
    for report in reports:
        for metric, value in report.metrics().items():
            values[report.variant, metric].append(value)
            meta.setdefault((report.variant, metric), report)
    records = []
    for (variant, metric), vals in values.items():
        first = meta[variant, metric]
        records.append(
            EvalRecord(
                metric=metric,
                value=float(np.mean(vals)),
                std=float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0,
                repeats=len(vals),
                config_hash=first.config_hash,
                seed=first.seed,
                variant=variant,
            )
        )
    return records
