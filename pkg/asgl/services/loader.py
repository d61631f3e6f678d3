import logging
import math
import re
from pathlib import Path
from typing import Iterable, Sequence, TextIO, Union

import networkx as nx

from asgl.config import settings
from asgl.exceptions import (
    DomainError,
    EmptyGraphError,
    GraphParseError,
    MissingArtifactError,
    RejectedEdgeError,
    SplitError,
)
from asgl.models import EdgeSplit, IngestStats, Sign, SignedEdge, SignedGraph, WeightRule
from asgl.utils.rng import stream

logger = logging.getLogger(__name__)

FIELD_SEPARATOR = re.compile(r"[,\s]+")


def _parse_line(line_no: int, line: str) -> tuple[int, int, float]:
    fields = FIELD_SEPARATOR.split(line.strip())
    if len(fields) < 3:
        raise GraphParseError(line_no, line, "expected 'u v w'")
    try:
        u, v = int(fields[0]), int(fields[1])
    except ValueError:
        raise GraphParseError(line_no, line, "node ids must be integers") from None
    try:
        w = float(fields[2])
    except ValueError:
        raise GraphParseError(line_no, line, "weight must be a number") from None
    if not math.isfinite(w):
        raise GraphParseError(line_no, line, "weight must be finite")
    return u, v, w


def load_edge_list(
    lines: Union[TextIO, Iterable[str]], weight_rule: WeightRule = WeightRule.SIGN
) -> SignedGraph:
    """Parse a raw signed edge list into a compacted, symmetric SignedGraph.

    Lines are ``u v w`` separated by whitespace or commas; extra columns
    (timestamps in the SNAP files) are ignored and ``#`` starts a comment.
    The first-seen sign of a node pair wins; later conflicting entries are
    counted and dropped. Self-loops are dropped and counted.
    """
    stats = IngestStats()
    first_seen: dict[tuple[int, int], Sign] = {}

    for line_no, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        stats.lines_read += 1
        u, v, w = _parse_line(line_no, line)
        if w == 0:
            if weight_rule is WeightRule.SIGN_SKIP_ZERO:
                stats.skipped_zero += 1
                continue
            raise RejectedEdgeError(line_no, raw, "zero weight carries no sign")
        if u == v:
            stats.self_loops += 1
            continue
        sign = Sign.from_value(w)
        key = (min(u, v), max(u, v))
        seen = first_seen.get(key)
        if seen is None:
            first_seen[key] = sign
        elif seen is sign:
            stats.duplicates += 1
        else:
            stats.conflicts += 1

    if not first_seen:
        raise EmptyGraphError("edge list contains no usable edges")

    original_ids = tuple(sorted({n for pair in first_seen for n in pair}))
    compact = {orig: idx for idx, orig in enumerate(original_ids)}
    edges = [(compact[u], compact[v], s) for (u, v), s in first_seen.items()]

    stats.num_nodes = len(original_ids)
    stats.positive_edges = sum(1 for *_, s in edges if s is Sign.POSITIVE)
    stats.negative_edges = len(edges) - stats.positive_edges

    if stats.conflicts:
        logger.warning(f"Resolved {stats.conflicts} sign conflicts to the first-seen sign")
    if stats.duplicates:
        logger.warning(f"Merged {stats.duplicates} duplicate edges")
    if stats.self_loops:
        logger.warning(f"Dropped {stats.self_loops} self-loops")
    if stats.skipped_zero:
        logger.warning(f"Skipped {stats.skipped_zero} zero-weight edges")
    logger.info(
        f"Loaded {stats.num_nodes} nodes, {stats.positive_edges} positive and "
        f"{stats.negative_edges} negative edges"
    )
    return SignedGraph.from_edges(stats.num_nodes, edges, original_ids=original_ids, ingest_stats=stats)


def load_graph(path: Union[str, Path], weight_rule: WeightRule = WeightRule.SIGN) -> SignedGraph:
    """Load an edge-list file; relative paths fall back to DATA_DIR."""
    path = settings.resolve_data_path(Path(path))
    if not path.exists():
        raise MissingArtifactError(f"graph file not found: {path}")
    with path.open("r", encoding="utf-8") as fh:
        return load_edge_list(fh, weight_rule)


def write_signed_edges(edges: Iterable[SignedEdge], out: TextIO) -> int:
    count = 0
    for u, v, s in edges:
        out.write(f"{u} {v} {int(s)}\n")
        count += 1
    return count


def write_edge_list(g: SignedGraph, out: TextIO, original_ids: bool = False) -> int:
    """Write the canonical ``u v s`` form, sorted by ``(u, v)`` with ``u < v``."""
    edges = g.signed_edges()
    if original_ids:
        ids = g.original_ids
        edges = [(ids[u], ids[v], s) for u, v, s in edges]
    return write_signed_edges(edges, out)


def write_id_map(g: SignedGraph, out: TextIO) -> None:
    for compact, original in enumerate(g.original_ids):
        out.write(f"{original} {compact}\n")


def read_signed_edges(lines: Iterable[str]) -> list[SignedEdge]:
    """Read canonical ``u v s`` lines without re-compacting ids."""
    edges = []
    for line_no, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        u, v, w = _parse_line(line_no, line)
        try:
            edges.append((u, v, Sign.from_value(w)))
        except DomainError:
            raise RejectedEdgeError(line_no, raw, "zero weight carries no sign") from None
    return edges


def read_id_map(lines: Iterable[str]) -> tuple[int, ...]:
    pairs = []
    for line_no, raw in enumerate(lines, start=1):
        fields = raw.split()
        if not fields:
            continue
        if len(fields) != 2:
            raise GraphParseError(line_no, raw, "expected 'original_id compact_id'")
        pairs.append((int(fields[1]), int(fields[0])))
    pairs.sort()
    if [c for c, _ in pairs] != list(range(len(pairs))):
        raise GraphParseError(len(pairs), "", "compact ids are not a dense 0-based range")
    return tuple(orig for _, orig in pairs)


def decompose(g: SignedGraph) -> tuple[nx.Graph, nx.Graph]:
    """Single-sign views over the full node id space: (positive, negative)."""
    views = []
    for sign in (Sign.POSITIVE, Sign.NEGATIVE):
        view = nx.Graph(sign=int(sign))
        view.add_nodes_from(range(g.num_nodes))
        view.add_edges_from(g.edges(sign))
        views.append(view)
    return views[0], views[1]


def infer_path_sign(signs: Sequence[Sign]) -> Sign:
    """Balance theory: the sign of a path is the product of its edge signs."""
    if len(signs) == 0:
        raise DomainError("cannot infer the sign of an empty path")
    return Sign(math.prod(int(s) for s in signs))


def _test_count(m: int, test_fraction: float) -> int:
    # half-up rounding, then keep at least one edge on each side
    return min(max(int(math.floor(m * test_fraction + 0.5)), 1), m - 1)


def split_edges(g: SignedGraph, test_fraction: float, seed: int) -> EdgeSplit:
    """Stratified-by-sign train/test split of the edges of ``g``."""
    if not 0.0 < test_fraction < 1.0:
        raise DomainError(f"test_fraction must lie in (0, 1), got {test_fraction}")

    train: list[SignedEdge] = []
    test: list[SignedEdge] = []
    for sign in (Sign.POSITIVE, Sign.NEGATIVE):
        edges = g.edges(sign)
        if len(edges) < 2:
            raise SplitError(f"sign {sign} has {len(edges)} edges; at least 2 are needed to split")
        n_test = _test_count(len(edges), test_fraction)
        order = stream(seed, "split", int(sign)).permutation(len(edges))
        test += [(*edges[i], sign) for i in order[:n_test]]
        train += [(*edges[i], sign) for i in order[n_test:]]
        logger.debug(f"split sign {sign}: {len(edges) - n_test} train, {n_test} test")

    train_graph = SignedGraph.from_edges(g.num_nodes, train, original_ids=g.original_ids)
    return EdgeSplit(train_graph=train_graph, test_edges=tuple(sorted(test, key=lambda e: (e[0], e[1]))))
