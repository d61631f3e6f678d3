"""Constrained BFS-tree sampling of training subgraphs and fake edges."""
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, TextIO

import networkx as nx
import numpy as np
from scipy.special import softmax
from tqdm import tqdm

from asgl.config import settings
from asgl.exceptions import DomainError, GraphParseError
from asgl.models import Edge, EmbeddingTable, Sign, SignedGraph
from asgl.models.config import receptive_field_size
from asgl.services.loader import decompose
from asgl.utils.rng import stream

logger = logging.getLogger(__name__)


def r_nl(n: int, l: int) -> int:
    """Largest number of stored subgraphs a single node may occur in."""
    return receptive_field_size(n, l)


@dataclass
class BfsTree:
    """BFS tree of one single-sign view. ``children`` is mutated by :meth:`drop_branch`."""

    root: int
    sign: Sign
    parent: dict[int, int] = field(default_factory=dict)
    children: dict[int, list[int]] = field(default_factory=dict)
    depth: dict[int, int] = field(default_factory=dict)

    def children_of(self, node: int) -> list[int]:
        return self.children.get(node, [])

    def drop_branch(self, child: int) -> None:
        """Cut the edge root -> child so the branch below it is never walked again."""
        self.children[self.root].remove(child)

    def __len__(self) -> int:
        return len(self.depth)


@dataclass(frozen=True)
class WalkPath:
    nodes: tuple[int, ...]
    sign: Sign

    @property
    def root(self) -> int:
        return self.nodes[0]

    @property
    def length(self) -> int:
        """Number of edges."""
        return len(self.nodes) - 1


@dataclass(frozen=True)
class SubgraphSet:
    """The training set S_tr: per-root paths and the fake edges derived from them."""

    pos_fake_edges: tuple[Edge, ...] = ()
    neg_fake_edges: tuple[Edge, ...] = ()
    pos_paths: dict[int, tuple[WalkPath, ...]] = field(default_factory=dict)
    neg_paths: dict[int, tuple[WalkPath, ...]] = field(default_factory=dict)

    def fake_edges(self, sign: Sign) -> tuple[Edge, ...]:
        return self.pos_fake_edges if sign is Sign.POSITIVE else self.neg_fake_edges

    def paths(self, sign: Sign) -> dict[int, tuple[WalkPath, ...]]:
        return self.pos_paths if sign is Sign.POSITIVE else self.neg_paths

    @property
    def per_root_paths(self) -> dict[int, list[WalkPath]]:
        out: dict[int, list[WalkPath]] = {}
        for paths in (self.pos_paths, self.neg_paths):
            for root, ps in paths.items():
                out.setdefault(root, []).extend(ps)
        return dict(sorted(out.items()))

    def subgraph_nodes(self, sign: Sign, root: int) -> set[int]:
        nodes = {root}
        for path in self.paths(sign).get(root, ()):
            nodes.update(path.nodes)
        return nodes

    def subgraph_count(self, sign: Sign) -> int:
        """N_tr for one sign: roots with at least one stored path."""
        return len(self.paths(sign))

    def occurrences(self, sign: Sign) -> dict[int, int]:
        """Node -> number of per-root subgraphs containing it."""
        counts: dict[int, int] = {}
        for root in self.paths(sign):
            for node in self.subgraph_nodes(sign, root):
                counts[node] = counts.get(node, 0) + 1
        return counts

    def max_occurrence(self) -> int:
        return max(
            (max(self.occurrences(s).values(), default=0) for s in (Sign.POSITIVE, Sign.NEGATIVE)),
            default=0,
        )


def build_bfs_tree(view: nx.Graph, root: int, max_depth: Optional[int] = None) -> BfsTree:
    """BFS tree rooted at ``root``; children ascending by node id, optionally depth-limited."""
    if root not in view:
        raise DomainError(f"root {root} is not a node of the view")
    sign = Sign(view.graph.get("sign", int(Sign.POSITIVE)))
    tree = BfsTree(root=root, sign=sign, depth={root: 0}, children={root: []})
    for parent, child in nx.bfs_edges(view, root, depth_limit=max_depth, sort_neighbors=sorted):
        tree.parent[child] = parent
        tree.depth[child] = tree.depth[parent] + 1
        tree.children.setdefault(parent, []).append(child)
        tree.children.setdefault(child, [])
    return tree


def _inner_products(tree: BfsTree, at: int, theta_g: EmbeddingTable) -> np.ndarray:
    children = tree.children_of(at)
    rows = theta_g.rows
    return rows[children] @ rows[at]


def positive_transition_probs(tree: BfsTree, at: int, theta_g: EmbeddingTable) -> np.ndarray:
    """Softmax of ``g_child . g_at`` over the children of ``at``; empty when ``at`` is a leaf."""
    if not tree.children_of(at):
        return np.empty(0)
    return softmax(_inner_products(tree, at, theta_g))


def negative_transition_probs(tree: BfsTree, at: int, theta_g: EmbeddingTable) -> np.ndarray:
    """Normalised ``max(0, 1 - exp(g_child . g_at))``; uniform when every numerator is 0."""
    children = tree.children_of(at)
    if not children:
        return np.empty(0)
    numerators = -np.expm1(np.minimum(_inner_products(tree, at, theta_g), 0.0))
    total = numerators.sum()
    if total <= 0.0 or not np.isfinite(total):
        return np.full(len(children), 1.0 / len(children))
    return numerators / total


def transition_probs(tree: BfsTree, at: int, theta_g: EmbeddingTable) -> np.ndarray:
    if tree.sign is Sign.POSITIVE:
        return positive_transition_probs(tree, at, theta_g)
    return negative_transition_probs(tree, at, theta_g)


def random_walk(tree: BfsTree, l: int, theta_g: EmbeddingTable, rng: np.random.Generator) -> WalkPath:
    """Walk down from the root until a leaf or ``l`` hops."""
    nodes = [tree.root]
    at = tree.root
    while len(nodes) - 1 < l:
        probs = transition_probs(tree, at, theta_g)
        if probs.size == 0:
            break
        at = tree.children_of(at)[int(rng.choice(probs.size, p=probs))]
        nodes.append(at)
    return WalkPath(nodes=tuple(nodes), sign=tree.sign)


def extract_fake_pairs(path: WalkPath, real_neighbors: Iterable[int]) -> list[Edge]:
    """Fake ``(root, node)`` pairs proposed by one walk.

    Positive walks pair the root with every node at depth >= 2. Negative walks
    yield one pair: the last node when the walk has odd length, the
    second-to-last when even. Real neighbours of the root are never paired.
    """
    real = set(real_neighbors)
    root = path.root
    if path.sign is Sign.POSITIVE:
        return [(root, v) for v in path.nodes[2:] if v not in real]
    if path.length == 0:
        return []
    candidate = path.nodes[-1] if path.length % 2 == 1 else path.nodes[-2]
    if candidate == root or candidate in real:
        return []
    return [(root, candidate)]


def _sample_root(
    view: nx.Graph,
    sign: Sign,
    root: int,
    n: int,
    l: int,
    theta_g: EmbeddingTable,
    seed: int,
) -> list[WalkPath]:
    tree = build_bfs_tree(view, root, max_depth=l)
    rng = stream(seed, "sample", int(sign), root)
    paths: list[WalkPath] = []
    while len(paths) < n and tree.children_of(root):
        path = random_walk(tree, l, theta_g, rng)
        paths.append(path)
        tree.drop_branch(path.nodes[1])
    return paths


def _merge_capped(
    per_root: dict[int, list[WalkPath]], num_nodes: int, cap: int
) -> dict[int, tuple[WalkPath, ...]]:
    """Admit roots in ascending order while keeping every node in at most ``cap`` subgraphs."""
    counts = np.zeros(num_nodes, dtype=np.int64)
    merged: dict[int, tuple[WalkPath, ...]] = {}
    truncated = 0
    for root in sorted(per_root):
        paths = per_root[root]
        if not paths:
            continue
        if counts[root] >= cap:
            truncated += 1
            continue
        kept = []
        for path in paths:
            nodes = [root]
            for node in path.nodes[1:]:
                if counts[node] >= cap:
                    truncated += 1
                    break
                nodes.append(node)
            if len(nodes) > 1:
                kept.append(WalkPath(nodes=tuple(nodes), sign=path.sign))
        if not kept:
            continue
        members = {root}.union(*(p.nodes for p in kept))
        counts[list(members)] += 1
        merged[root] = tuple(kept)
    if truncated:
        logger.debug(f"occurrence cap {cap} truncated {truncated} walks")
    return merged


def sample_subgraphs(
    g: SignedGraph,
    n: int,
    l: int,
    theta_g: EmbeddingTable,
    seed: int,
    train_nodes: Optional[Sequence[int]] = None,
    signs: Sequence[Sign] = (Sign.POSITIVE, Sign.NEGATIVE),
) -> SubgraphSet:
    """Build S_tr: up to ``n`` distinct walks of at most ``l`` hops per root and sign.

    Each root draws from its own random stream keyed by (seed, sign, root), so
    the result does not depend on iteration order. Roots are then merged in
    ascending id order under the receptive-field occurrence cap.
    """
    if n < 1 or l < 1:
        raise DomainError(f"sampling needs n >= 1 and l >= 1, got n={n}, l={l}")
    if theta_g.num_nodes != g.num_nodes:
        raise DomainError("theta_g row count does not match the graph")

    cap = r_nl(n, l)
    roots = sorted(set(train_nodes)) if train_nodes is not None else list(range(g.num_nodes))
    views = dict(zip((Sign.POSITIVE, Sign.NEGATIVE), decompose(g)))
    merged: dict[Sign, dict[int, tuple[WalkPath, ...]]] = {Sign.POSITIVE: {}, Sign.NEGATIVE: {}}
    fakes: dict[Sign, list[Edge]] = {Sign.POSITIVE: [], Sign.NEGATIVE: []}

    for sign in signs:
        view = views[sign]
        per_root = {}
        for root in tqdm(roots, desc=f"sampling {sign.symbol}", disable=not settings.SHOW_PROGRESS):
            if view.degree(root) == 0:
                continue
            per_root[root] = _sample_root(view, sign, root, n, l, theta_g, seed)
        merged[sign] = _merge_capped(per_root, g.num_nodes, cap)
        for root, paths in merged[sign].items():
            real = g.neighbors(root)
            for path in paths:
                fakes[sign].extend(extract_fake_pairs(path, real))
        logger.info(
            f"Sampled {len(merged[sign])} {sign.symbol} subgraphs, {len(fakes[sign])} fake edges"
        )

    return SubgraphSet(
        pos_fake_edges=tuple(fakes[Sign.POSITIVE]),
        neg_fake_edges=tuple(fakes[Sign.NEGATIVE]),
        pos_paths=merged[Sign.POSITIVE],
        neg_paths=merged[Sign.NEGATIVE],
    )


def write_subgraph_set(s_tr: SubgraphSet, out: TextIO) -> None:
    out.write("# fake edges\n")
    for sign in (Sign.POSITIVE, Sign.NEGATIVE):
        for root, node in s_tr.fake_edges(sign):
            out.write(f"{root} {node} {sign} fake\n")
    for sign in (Sign.POSITIVE, Sign.NEGATIVE):
        out.write(f"# paths {sign}\n")
        for root, paths in sorted(s_tr.paths(sign).items()):
            for path in paths:
                out.write(f"{root}: {','.join(str(v) for v in path.nodes)}\n")


def read_subgraph_set(lines: Iterable[str]) -> SubgraphSet:
    fakes: dict[Sign, list[Edge]] = {Sign.POSITIVE: [], Sign.NEGATIVE: []}
    paths: dict[Sign, dict[int, list[WalkPath]]] = {Sign.POSITIVE: {}, Sign.NEGATIVE: {}}
    section: Optional[str] = None
    path_sign: Optional[Sign] = None
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            header = line.lstrip("#").split()
            if header[:2] == ["fake", "edges"]:
                section = "fake"
            elif header[:1] == ["paths"] and len(header) == 2:
                section, path_sign = "paths", Sign.from_string(header[1])
            continue
        try:
            if section == "fake":
                root, node, sign, kind = line.split()
                if kind != "fake":
                    raise ValueError(f"unknown edge kind {kind}")
                fakes[Sign.from_string(sign)].append((int(root), int(node)))
            elif section == "paths":
                root_str, rest = line.split(":", 1)
                nodes = tuple(int(v) for v in rest.split(","))
                if nodes[0] != int(root_str):
                    raise ValueError("path does not start at its root")
                paths[path_sign].setdefault(int(root_str), []).append(WalkPath(nodes, path_sign))
            else:
                raise ValueError("line outside any section")
        except ValueError as e:
            raise GraphParseError(line_no, raw, str(e)) from None
    return SubgraphSet(
        pos_fake_edges=tuple(fakes[Sign.POSITIVE]),
        neg_fake_edges=tuple(fakes[Sign.NEGATIVE]),
        pos_paths={r: tuple(p) for r, p in paths[Sign.POSITIVE].items()},
        neg_paths={r: tuple(p) for r, p in paths[Sign.NEGATIVE].items()},
    )
