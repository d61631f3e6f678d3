from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from asgl.exceptions import DomainError, MissingArtifactError, NonFiniteGradientError
from asgl.models.graph import Sign


class EdgeCase(str, Enum):
    """Which branch of the discriminator gradient an edge entry takes."""

    REAL_POS = "real-pos"
    FAKE_POS = "fake-pos"
    REAL_NEG = "real-neg"
    FAKE_NEG = "fake-neg"

    def __str__(self) -> str:
        return self.value

    @property
    def sign(self) -> Sign:
        return Sign.POSITIVE if self in (EdgeCase.REAL_POS, EdgeCase.FAKE_POS) else Sign.NEGATIVE

    @property
    def is_fake(self) -> bool:
        return self in (EdgeCase.FAKE_POS, EdgeCase.FAKE_NEG)

    @classmethod
    def real(cls, sign: Sign) -> "EdgeCase":
        return cls.REAL_POS if sign is Sign.POSITIVE else cls.REAL_NEG

    @classmethod
    def fake(cls, sign: Sign) -> "EdgeCase":
        return cls.FAKE_POS if sign is Sign.POSITIVE else cls.FAKE_NEG


# Stable integer codes so batches can be stored as numpy arrays.
CASE_CODES: tuple[EdgeCase, ...] = (
    EdgeCase.REAL_POS,
    EdgeCase.FAKE_POS,
    EdgeCase.REAL_NEG,
    EdgeCase.FAKE_NEG,
)


class EmbeddingTable:
    """A ``|V| x k`` matrix of node vectors (theta_D or theta_G)."""

    __slots__ = ("_rows",)

    def __init__(self, rows: np.ndarray):
        rows = np.array(rows, dtype=np.float64, copy=True)
        if rows.ndim != 2 or rows.shape[1] < 1:
            raise DomainError(f"embedding rows must be a 2-d array with k >= 1, got shape {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise NonFiniteGradientError("embedding table contains non-finite entries")
        rows.setflags(write=False)
        self._rows = rows

    @property
    def rows(self) -> np.ndarray:
        """Read-only view of the underlying matrix."""
        return self._rows

    @property
    def num_nodes(self) -> int:
        return self._rows.shape[0]

    @property
    def dim(self) -> int:
        return self._rows.shape[1]

    def __getitem__(self, node: int) -> np.ndarray:
        return self._rows[node]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingTable):
            return NotImplemented
        return self._rows.shape == other._rows.shape and np.array_equal(self._rows, other._rows)

    def __repr__(self) -> str:
        return f"EmbeddingTable(num_nodes={self.num_nodes}, dim={self.dim})"

    def copy_rows(self) -> np.ndarray:
        """A writable copy of the matrix."""
        return self._rows.copy()

    def save(self, path: Union[str, Path]) -> Path:
        """Write ``num_nodes k`` then ``node_id x1 ... xk`` per row at full double precision."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        ids = np.arange(self.num_nodes, dtype=np.float64)[:, None]
        fmt = ["%d"] + ["%.17g"] * self.dim
        with path.open("w", encoding="utf-8") as fh:
            fh.write(f"{self.num_nodes} {self.dim}\n")
            np.savetxt(fh, np.hstack([ids, self._rows]), fmt=fmt, delimiter=" ")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "EmbeddingTable":
        path = Path(path)
        if not path.exists():
            raise MissingArtifactError(f"embedding file not found: {path}")
        with path.open("r", encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 2:
                raise MissingArtifactError(f"{path}: malformed header {header!r}")
            num_nodes, dim = int(header[0]), int(header[1])
            body = np.loadtxt(fh, dtype=np.float64, ndmin=2) if num_nodes else np.empty((0, dim + 1))
        if body.shape != (num_nodes, dim + 1):
            raise MissingArtifactError(
                f"{path}: expected {num_nodes} rows of {dim + 1} columns, found {body.shape}"
            )
        rows = np.empty((num_nodes, dim), dtype=np.float64)
        rows[body[:, 0].astype(np.int64)] = body[:, 1:]
        return cls(rows)


@dataclass(frozen=True)
class EdgeBatch:
    """Edge entries ``(i, j, case)`` stored column-wise."""

    i: np.ndarray
    j: np.ndarray
    case: np.ndarray  # int8 indices into CASE_CODES

    @classmethod
    def from_entries(cls, entries: Iterable[tuple[int, int, EdgeCase]]) -> "EdgeBatch":
        entries = list(entries)
        if not entries:
            return cls.empty()
        i, j, case = zip(*entries)
        codes = [CASE_CODES.index(c) for c in case]
        return cls(
            np.asarray(i, dtype=np.int64),
            np.asarray(j, dtype=np.int64),
            np.asarray(codes, dtype=np.int8),
        )

    @classmethod
    def empty(cls) -> "EdgeBatch":
        return cls(np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.int8))

    @classmethod
    def concat(cls, batches: Iterable["EdgeBatch"]) -> "EdgeBatch":
        batches = list(batches)
        if not batches:
            return cls.empty()
        return cls(
            np.concatenate([b.i for b in batches]),
            np.concatenate([b.j for b in batches]),
            np.concatenate([b.case for b in batches]),
        )

    def __len__(self) -> int:
        return int(self.i.shape[0])

    def take(self, index: np.ndarray) -> "EdgeBatch":
        return EdgeBatch(self.i[index], self.j[index], self.case[index])

    def cases(self) -> list[EdgeCase]:
        return [CASE_CODES[c] for c in self.case]

    def count(self, case: EdgeCase) -> int:
        return int(np.count_nonzero(self.case == CASE_CODES.index(case)))

    def entries(self) -> list[tuple[int, int, EdgeCase]]:
        return [(int(a), int(b), c) for a, b, c in zip(self.i, self.j, self.cases())]


@dataclass(frozen=True)
class RowGradient:
    """Sparse gradient: sorted unique row ids and one k-vector per row."""

    rows: np.ndarray
    values: np.ndarray

    @classmethod
    def zeros(cls, dim: int) -> "RowGradient":
        return cls(np.empty(0, dtype=np.int64), np.empty((0, dim), dtype=np.float64))

    @classmethod
    def accumulate(cls, rows: np.ndarray, contributions: np.ndarray, dim: int) -> "RowGradient":
        """Sum contributions per row; output ordered by row id."""
        if rows.size == 0:
            return cls.zeros(dim)
        unique, inverse = np.unique(rows, return_inverse=True)
        values = np.zeros((unique.shape[0], dim), dtype=np.float64)
        np.add.at(values, inverse, contributions)
        return cls(unique.astype(np.int64), values)

    @classmethod
    def dense(cls, matrix: np.ndarray) -> "RowGradient":
        return cls(np.arange(matrix.shape[0], dtype=np.int64), np.asarray(matrix, dtype=np.float64))

    def __len__(self) -> int:
        return int(self.rows.shape[0])

    def to_dense(self, num_nodes: int) -> np.ndarray:
        out = np.zeros((num_nodes, self.values.shape[1]), dtype=np.float64)
        out[self.rows] = self.values
        return out

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))
