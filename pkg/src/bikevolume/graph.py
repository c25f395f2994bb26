"""Road-segment graph construction and the sparse kernels the GCN consumes.

Each road/path segment is a node; edges connect segments that share an
intersection. The propagation operator used by every graph convolution is
the symmetrically normalized self-looped adjacency

    S = D^{-1/2} (A + I) D^{-1/2}

where D is the degree matrix of A + I. S is symmetric, has strictly
positive diagonal (1/(deg_i + 1)), and spectral radius 1.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np
import scipy.sparse

log = logging.getLogger(__name__)


class GraphIngestionError(ValueError):
    """Raised when an edge list or node list cannot form a valid graph."""


@dataclass(frozen=True)
class RoadGraph:
    """Undirected road-segment graph with opaque segment identifiers.

    ``edges`` holds canonical (i, j) index pairs with i < j, deduplicated,
    no self-pairs. ``edge_attrs`` round-trips any extra columns found in
    the edge CSV; they are not consumed by the model.
    """

    node_count: int
    node_ids: tuple
    edges: np.ndarray  # shape (m, 2), int64, i < j
    edge_attrs: dict = field(default_factory=dict, compare=False)
    dropped_duplicates: int = 0
    dropped_self_loops: int = 0

    def __post_init__(self):
        if self.node_count <= 0:
            raise GraphIngestionError("graph must contain at least one node")
        if len(self.node_ids) != self.node_count:
            raise GraphIngestionError("node_ids length does not match node_count")
        if len(set(self.node_ids)) != self.node_count:
            raise GraphIngestionError("node_ids must be unique")
        if self.edges.size:
            if self.edges.min() < 0 or self.edges.max() >= self.node_count:
                raise GraphIngestionError("edge endpoint outside [0, node_count)")

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        """Degree of each node in A (no self-loops)."""
        deg = np.zeros(self.node_count, dtype=np.int64)
        if self.edges.size:
            np.add.at(deg, self.edges[:, 0], 1)
            np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def index_of(self, node_id) -> int:
        try:
            return self._index[node_id]
        except AttributeError:
            object.__setattr__(self, "_index", {v: i for i, v in enumerate(self.node_ids)})
            return self._index[node_id]


@dataclass(frozen=True)
class SparseMatrix:
    """Compressed sparse row matrix with real entries and no stored zeros."""

    rows: int
    cols: int
    row_offsets: np.ndarray  # int64, length rows + 1, non-decreasing
    column_indices: np.ndarray  # int64, strictly increasing within a row
    values: np.ndarray  # float64

    def __post_init__(self):
        ro = self.row_offsets
        if len(ro) != self.rows + 1:
            raise ValueError("row_offsets must have length rows + 1")
        if ro[0] != 0 or ro[-1] != len(self.values):
            raise ValueError("row_offsets endpoints inconsistent with values")
        if np.any(np.diff(ro) < 0):
            raise ValueError("row_offsets must be non-decreasing")
        if len(self.column_indices) != len(self.values):
            raise ValueError("column_indices and values must have equal length")
        if self.column_indices.size:
            if self.column_indices.min() < 0 or self.column_indices.max() >= self.cols:
                raise ValueError("column index out of range")
            row_of = np.repeat(np.arange(self.rows), np.diff(ro))
            same_row = row_of[1:] == row_of[:-1]
            if np.any(np.diff(self.column_indices)[same_row] <= 0):
                raise ValueError("column indices must be strictly increasing within each row")
        if np.any(self.values == 0.0):
            raise ValueError("explicit zero values are not stored")

    @property
    def nnz(self) -> int:
        return len(self.values)

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls(
            rows=n,
            cols=n,
            row_offsets=np.arange(n + 1, dtype=np.int64),
            column_indices=np.arange(n, dtype=np.int64),
            values=np.ones(n),
        )

    @classmethod
    def from_dense(cls, dense: np.ndarray) -> "SparseMatrix":
        dense = np.asarray(dense, dtype=np.float64)
        rows, cols = dense.shape
        row_offsets = [0]
        col_idx: list[int] = []
        vals: list[float] = []
        for r in range(rows):
            nz = np.nonzero(dense[r])[0]
            col_idx.extend(nz.tolist())
            vals.extend(dense[r, nz].tolist())
            row_offsets.append(len(vals))
        return cls(
            rows=rows,
            cols=cols,
            row_offsets=np.asarray(row_offsets, dtype=np.int64),
            column_indices=np.asarray(col_idx, dtype=np.int64),
            values=np.asarray(vals, dtype=np.float64),
        )

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols))
        for r in range(self.rows):
            lo, hi = self.row_offsets[r], self.row_offsets[r + 1]
            out[r, self.column_indices[lo:hi]] = self.values[lo:hi]
        return out

    def _scipy(self) -> scipy.sparse.csr_matrix:
        # cached handle; the dataclass is frozen so this never goes stale
        cached = getattr(self, "_scipy_cache", None)
        if cached is None:
            cached = scipy.sparse.csr_matrix(
                (self.values, self.column_indices, self.row_offsets),
                shape=(self.rows, self.cols),
            )
            object.__setattr__(self, "_scipy_cache", cached)
        return cached


@dataclass(frozen=True)
class NormalizedAdjacency:
    """The propagation operator S = D^{-1/2}(A + I)D^{-1/2} stored as CSR."""

    matrix: SparseMatrix

    def __post_init__(self):
        if self.matrix.rows != self.matrix.cols:
            raise ValueError("normalized adjacency must be square")

    @property
    def node_count(self) -> int:
        return self.matrix.rows

    def matmul(self, dense: np.ndarray) -> np.ndarray:
        return spmm(self.matrix, dense)


def build_graph(node_ids: Sequence[Hashable], raw_edges: Sequence[tuple]) -> RoadGraph:
    """Map identifier pairs onto node indices and canonicalize the edge set.

    Edges are treated as undirected: (a, b) and (b, a) collapse to one pair.
    Duplicate pairs and self-pairs are dropped; their counts are retained on
    the returned graph and logged.
    """
    if not node_ids:
        raise GraphIngestionError("node list is empty")
    ids = tuple(node_ids)
    index = {}
    for i, nid in enumerate(ids):
        if nid in index:
            raise GraphIngestionError(f"duplicate node identifier {nid!r}")
        index[nid] = i

    seen = set()
    pairs = []
    dup = 0
    loops = 0
    for a, b in raw_edges:
        for endpoint in (a, b):
            if endpoint not in index:
                raise GraphIngestionError(f"unknown endpoint {endpoint!r}")
        i, j = index[a], index[b]
        if i == j:
            loops += 1
            continue
        key = (i, j) if i < j else (j, i)
        if key in seen:
            dup += 1
            continue
        seen.add(key)
        pairs.append(key)

    if dup or loops:
        log.warning("dropped %d duplicate edge(s) and %d self-pair(s) at ingestion", dup, loops)

    edges = np.asarray(sorted(pairs), dtype=np.int64).reshape(-1, 2)
    return RoadGraph(
        node_count=len(ids),
        node_ids=ids,
        edges=edges,
        dropped_duplicates=dup,
        dropped_self_loops=loops,
    )


def normalize(graph: RoadGraph) -> NormalizedAdjacency:
    """Build S = D^{-1/2}(A + I)D^{-1/2} for the given graph.

    Isolated nodes keep a diagonal entry of exactly 1; the diagonal entry of
    node i is 1/(deg_i + 1) in general.
    """
    n = graph.node_count
    dt = graph.degrees().astype(np.float64) + 1.0
    inv_sqrt = 1.0 / np.sqrt(dt)

    neighbors: list[list[int]] = [[] for _ in range(n)]
    for i, j in graph.edges:
        neighbors[i].append(j)
        neighbors[j].append(i)

    row_offsets = np.zeros(n + 1, dtype=np.int64)
    col_idx: list[int] = []
    vals: list[float] = []
    for i in range(n):
        cols_i = sorted(neighbors[i] + [i])
        for j in cols_i:
            col_idx.append(j)
            if i == j:
                # exact 1.0 for isolated nodes: 1/sqrt(1*1)
                vals.append(1.0 / dt[i] if dt[i] > 1 else 1.0)
            else:
                vals.append(inv_sqrt[i] * inv_sqrt[j])
        row_offsets[i + 1] = len(vals)

    matrix = SparseMatrix(
        rows=n,
        cols=n,
        row_offsets=row_offsets,
        column_indices=np.asarray(col_idx, dtype=np.int64),
        values=np.asarray(vals, dtype=np.float64),
    )
    return NormalizedAdjacency(matrix=matrix)


def spmm(s: SparseMatrix, d: np.ndarray) -> np.ndarray:
    """Sparse-dense product s @ d; d may be a vector or a matrix."""
    d = np.asarray(d, dtype=np.float64)
    lead = d.shape[0]
    if lead != s.cols:
        raise ValueError(f"dimension mismatch: sparse is {s.rows}x{s.cols}, dense has {lead} rows")
    out = s._scipy() @ d
    return np.asarray(out)


def load_edge_csv(path, node_ids: Sequence[Hashable]) -> RoadGraph:
    """Read `from_id,to_id[,edge_attr...]` rows and build the graph.

    Extra columns are parsed and stored on the graph keyed by attribute name,
    aligned with the canonical edge order; they are not used by the model.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2 or header[0] != "from_id" or header[1] != "to_id":
            raise GraphIngestionError(f"edge CSV {path} must start with header 'from_id,to_id'")
        attr_names = header[2:]
        raw_edges = []
        raw_attrs: list[list[str]] = []
        for row in reader:
            if not row:
                continue
            raw_edges.append((row[0], row[1]))
            raw_attrs.append(row[2:])

    graph = build_graph(node_ids, raw_edges)

    if attr_names:
        index = {nid: i for i, nid in enumerate(node_ids)}
        by_pair: dict[tuple, list[str]] = {}
        for (a, b), attrs in zip(raw_edges, raw_attrs):
            i, j = index[a], index[b]
            if i == j:
                continue
            key = (i, j) if i < j else (j, i)
            by_pair.setdefault(key, attrs)
        edge_attrs = {}
        for k, name in enumerate(attr_names):
            edge_attrs[name] = [by_pair[tuple(e)][k] if k < len(by_pair[tuple(e)]) else "" for e in map(tuple, graph.edges)]
        object.__setattr__(graph, "edge_attrs", edge_attrs)
    return graph
