from pathlib import Path
from typing import Generator

import networkx as nx
import numpy as np
import pytest

from asgl.config import settings
from asgl.models import EmbeddingTable, Sign, SignedGraph, TrainConfig
from asgl.services.adversarial import init_embeddings
from asgl.utils.rng import stream

COMMUNITY_SIZE = 12


def make_community_graph(size: int = COMMUNITY_SIZE) -> SignedGraph:
    """Two communities, positive inside (ring plus chords), negative across."""
    edges = []
    for offset in (0, size):
        for i in range(size):
            edges.append((offset + i, offset + (i + 1) % size, Sign.POSITIVE))
            edges.append((offset + i, offset + (i + 3) % size, Sign.POSITIVE))
    for i in range(size):
        edges.append((i, size + (5 * i) % size, Sign.NEGATIVE))
        edges.append((i, size + (7 * i + 3) % size, Sign.NEGATIVE))
    return SignedGraph.from_edges(2 * size, edges)


def make_random_signed_graph(num_nodes: int, num_edges: int, seed: int, neg_fraction: float = 0.3) -> SignedGraph:
    """Random G(n, m) graph with independently drawn signs."""
    base = nx.gnm_random_graph(num_nodes, num_edges, seed=seed)
    rng = stream(seed, "test-signs")
    edges = [
        (u, v, Sign.NEGATIVE if rng.random() < neg_fraction else Sign.POSITIVE)
        for u, v in sorted(base.edges())
    ]
    return SignedGraph.from_edges(num_nodes, edges)


def write_edge_file(path: Path, g: SignedGraph) -> Path:
    path.write_text("".join(f"{u} {v} {int(s)}\n" for u, v, s in g.signed_edges()), encoding="utf-8")
    return path


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Generator[None, None, None]:
    """Point every run and data directory at a per-test temporary directory."""
    monkeypatch.setattr(settings, "RUNS_DIR", tmp_path / "runs")
    monkeypatch.setattr(settings, "DATA_DIR", tmp_path / "data")
    monkeypatch.setattr(settings, "SHOW_PROGRESS", False)
    yield


@pytest.fixture
def community_graph() -> SignedGraph:
    return make_community_graph()


@pytest.fixture
def triangle_graph() -> SignedGraph:
    """0-1 positive, 1-2 negative, 0-2 negative."""
    return SignedGraph.from_edges(
        3, [(0, 1, Sign.POSITIVE), (1, 2, Sign.NEGATIVE), (0, 2, Sign.NEGATIVE)]
    )


@pytest.fixture
def community_edge_file(tmp_path: Path, community_graph: SignedGraph) -> Path:
    return write_edge_file(tmp_path / "community.txt", community_graph)


@pytest.fixture
def small_config() -> TrainConfig:
    """A configuration that trains the community graph in well under a second."""
    return TrainConfig.from_flat(
        {
            "dim": 8,
            "epochs": 2,
            "iters": 2,
            "batch_d": 8,
            "batch_g": 8,
            "paths_n": 2,
            "path_len_l": 2,
            "sigma": 5.0,
            "epsilon": 8.0,
            "seed": 7,
        }
    )


@pytest.fixture
def small_embeddings(community_graph: SignedGraph) -> EmbeddingTable:
    return init_embeddings(community_graph.num_nodes, 16, stream(0, "init", "generator"))


def table(*rows) -> EmbeddingTable:
    """Embedding table from literal rows."""
    return EmbeddingTable(np.array(rows, dtype=np.float64))


@pytest.fixture
def random_graph():
    """Factory for random small signed graphs."""
    return make_random_signed_graph


@pytest.fixture
def make_table():
    """Factory for embedding tables written out row by row."""
    return table


@pytest.fixture
def write_graph(tmp_path: Path):
    """Write a graph as a canonical edge list under tmp_path and return the path."""

    def _write(name: str, g: SignedGraph) -> Path:
        return write_edge_file(tmp_path / name, g)

    return _write
