"""Symbolic image of a system over a covering: cells are vertices, and
B_i -> B_j is an edge whenever some per-input image enclosure of B_i
intersects B_j.

The graph can be built serially or by batched workers; the exported edge set
is a pure function of (covering, model, inputs, image config) and is
bitwise independent of the build plan.  Workers compute private subgraphs
over disjoint source ranges which are then merged, so no scheduling order
can influence the result.
"""

from __future__ import annotations

import io
import math
import multiprocessing as mp
from dataclasses import dataclass
from typing import IO

import numpy as np

from cisgraph.geometry import CellId, Covering, SpatialIndex
from cisgraph.image import ImageConfig, batch_enclosures
from cisgraph.system import InputGrid, SystemModel

__all__ = [
    "SymbolicImage",
    "BuildPlan",
    "GraphBuildError",
    "OwnershipError",
    "build_graph_serial",
    "build_graph_parallel",
    "merge_subgraphs",
    "out_degree",
    "write_edge_list",
]

_INTERNAL_BATCH = 8192


class GraphBuildError(RuntimeError):
    """A worker failed while building its batch of the graph."""


class OwnershipError(ValueError):
    """Subgraphs passed to merge claim overlapping source vertices."""


@dataclass(frozen=True)
class BuildPlan:
    """Batching and worker layout for the parallel builder.

    Batches of ``batch_size`` cells are dispatched to ``workers`` processes
    in contiguous chunks.
    """

    batch_size: int = 1024
    workers: int = 1

    def __post_init__(self):
        if self.batch_size < 1 or self.workers < 1:
            raise ValueError("batch_size and workers must be at least 1")


class SymbolicImage:
    """Directed graph over the cells of a covering, in canonical cell order.

    Vertices are identified positionally (index == rank in CellId order) and
    carry their (depth, bits) identity so the graph is self-contained.
    Adjacency is CSR with ascending targets and no duplicate edges.
    """

    def __init__(self, vertex_depths, vertex_bits, indptr, indices, owned=None):
        self.vertex_depths = np.asarray(vertex_depths, dtype=np.int64)
        self.vertex_bits = np.asarray(vertex_bits, dtype=np.int64)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.owned = None if owned is None else np.asarray(owned, dtype=np.int64)
        self._rev = None
        self._id_map = None

    @property
    def n_vertices(self) -> int:
        return len(self.vertex_depths)

    @property
    def edge_count(self) -> int:
        return len(self.indices)

    def vertex_id(self, i: int) -> CellId:
        return CellId(int(self.vertex_depths[i]), int(self.vertex_bits[i]))

    def vertex_ids(self) -> list[CellId]:
        return [self.vertex_id(i) for i in range(self.n_vertices)]

    def _vertex_index(self, v) -> int:
        if isinstance(v, (int, np.integer)):
            if not 0 <= v < self.n_vertices:
                raise KeyError(f"vertex index {v} out of range")
            return int(v)
        if self._id_map is None:
            self._id_map = {
                (int(d), int(b)): i
                for i, (d, b) in enumerate(zip(self.vertex_depths, self.vertex_bits))
            }
        try:
            return self._id_map[(v.depth, v.bits)]
        except (KeyError, AttributeError):
            raise KeyError(f"unknown vertex {v!r}") from None

    def out_degree(self, v) -> int:
        i = self._vertex_index(v)
        return int(self.indptr[i + 1] - self.indptr[i])

    def successors(self, v) -> list[CellId]:
        i = self._vertex_index(v)
        return [self.vertex_id(j) for j in self.indices[self.indptr[i] : self.indptr[i + 1]]]

    def edge_pairs(self):
        src = np.repeat(
            np.arange(self.n_vertices, dtype=np.int64), np.diff(self.indptr)
        )
        return src, self.indices

    def reverse_csr(self):
        if self._rev is None:
            src, dst = self.edge_pairs()
            order = np.lexsort((src, dst))
            rin = src[order]
            rptr = np.zeros(self.n_vertices + 1, dtype=np.int64)
            rptr[1:] = np.cumsum(np.bincount(dst, minlength=self.n_vertices))
            self._rev = (rptr, rin)
        return self._rev

    def self_loop_mask(self) -> np.ndarray:
        src, dst = self.edge_pairs()
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[src[src == dst]] = True
        return mask

    def _paths(self) -> list[str]:
        return [
            format(int(b), f"0{int(d)}b") if d else "-"
            for d, b in zip(self.vertex_depths, self.vertex_bits)
        ]

    def write_edge_list(self, fp: IO[str]) -> None:
        """Canonical edge-list serialization: 'src_path dst_path' lines,
        sorted lexicographically (CSR order is already canonical)."""
        paths = self._paths()
        indptr, indices = self.indptr, self.indices
        for s in range(self.n_vertices):
            sp = paths[s]
            fp.write(
                "".join(f"{sp} {paths[d]}\n" for d in indices[indptr[s] : indptr[s + 1]])
            )

    def edge_list_bytes(self) -> bytes:
        buf = io.StringIO()
        self.write_edge_list(buf)
        return buf.getvalue().encode()

    def same_edges(self, other: "SymbolicImage") -> bool:
        return (
            np.array_equal(self.vertex_depths, other.vertex_depths)
            and np.array_equal(self.vertex_bits, other.vertex_bits)
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )


def out_degree(graph: SymbolicImage, v) -> int:
    """Number of edges leaving vertex v (a CellId or vertex index)."""
    return graph.out_degree(v)


def write_edge_list(graph: SymbolicImage, fp: IO[str]) -> None:
    graph.write_edge_list(fp)


def _csr_from_pairs(src, dst, n_vertices):
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if len(src):
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        keep = np.ones(len(src), dtype=bool)
        keep[1:] = (np.diff(src) != 0) | (np.diff(dst) != 0)
        src, dst = src[keep], dst[keep]
    indptr = np.zeros(n_vertices + 1, dtype=np.int64)
    if len(src):
        indptr[1:] = np.cumsum(np.bincount(src, minlength=n_vertices))
    return indptr, dst


def _edges_for_range(start, end, cell_lo, cell_hi, index, model, input_points, cfg):
    """Edge pairs (source cell index, target cell index) for one batch."""
    srcs, dsts = [], []
    lo = cell_lo[start:end]
    hi = cell_hi[start:end]
    base = np.arange(start, end, dtype=np.int64)
    for u in input_points:
        enc_lo, enc_hi, valid = batch_enclosures(model, lo, hi, u, cfg)
        if not valid.any():
            continue
        qi, ci = index.query_boxes(enc_lo[valid], enc_hi[valid])
        srcs.append(base[np.nonzero(valid)[0]][qi])
        dsts.append(ci)
    if not srcs:
        return (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
    return np.concatenate(srcs), np.concatenate(dsts)


def build_graph_serial(covering: Covering, index: SpatialIndex, model: SystemModel,
                       inputs: InputGrid, cfg: ImageConfig) -> SymbolicImage:
    """Build the symbolic image in-process.

    For every cell and every grid input, edges run from the cell to each
    cell intersecting the per-input image enclosure; escaped inputs
    contribute no edges.
    """
    l = len(covering)
    srcs, dsts = [], []
    for start in range(0, l, _INTERNAL_BATCH):
        s, d = _edges_for_range(
            start, min(start + _INTERNAL_BATCH, l),
            covering.lo, covering.hi, index, model, inputs.points, cfg,
        )
        srcs.append(s)
        dsts.append(d)
    src = np.concatenate(srcs) if srcs else np.empty(0, dtype=np.int64)
    dst = np.concatenate(dsts) if dsts else np.empty(0, dtype=np.int64)
    indptr, indices = _csr_from_pairs(src, dst, l)
    return SymbolicImage(covering.depths, covering.bits, indptr, indices)


def merge_subgraphs(parts: list) -> SymbolicImage:
    """Union of subgraphs with disjoint source-vertex ownership.

    All parts must share the same vertex set; each part's out-edges must
    originate from its owned sources only.  The merge result is independent
    of part order.
    """
    if not parts:
        raise ValueError("merge requires at least one subgraph")
    first = parts[0]
    owned_all = []
    for p in parts:
        if not (
            np.array_equal(p.vertex_depths, first.vertex_depths)
            and np.array_equal(p.vertex_bits, first.vertex_bits)
        ):
            raise ValueError("subgraphs are over different coverings")
        owned = p.owned
        if owned is None:
            src, _ = p.edge_pairs()
            owned = np.unique(src)
        owned_all.append(np.asarray(owned, dtype=np.int64))
    cat = np.concatenate(owned_all) if owned_all else np.empty(0, dtype=np.int64)
    if len(np.unique(cat)) != len(cat):
        raise OwnershipError("overlapping source ownership between subgraphs")
    srcs, dsts = [], []
    for p in parts:
        s, d = p.edge_pairs()
        srcs.append(s)
        dsts.append(d)
    indptr, indices = _csr_from_pairs(
        np.concatenate(srcs), np.concatenate(dsts), first.n_vertices
    )
    return SymbolicImage(first.vertex_depths, first.vertex_bits, indptr, indices)


# Worker processes inherit the shared build state through the pool
# initializer; tasks then carry only batch index ranges.
_WORKER_STATE = None


def _init_worker(state):
    global _WORKER_STATE
    _WORKER_STATE = state


def _worker_edges(task):
    batch_index, start, end = task
    try:
        cell_lo, cell_hi, index, model, input_points, cfg = _WORKER_STATE
        src, dst = _edges_for_range(
            start, end, cell_lo, cell_hi, index, model, input_points, cfg
        )
        return (batch_index, src, dst, None)
    except Exception as exc:  # propagated with batch identity
        return (batch_index, None, None, f"{type(exc).__name__}: {exc}")


def build_graph_parallel(covering: Covering, index: SpatialIndex, model: SystemModel,
                         inputs: InputGrid, cfg: ImageConfig,
                         plan: BuildPlan) -> SymbolicImage:
    """Build the symbolic image with batched workers and a deterministic merge.

    Cells are split into batches of ``plan.batch_size``; batches are assigned
    to workers in contiguous chunks.  Each worker fills a private subgraph;
    the subgraphs are merged afterwards, so the exported edge set equals the
    serial build for every plan.
    """
    l = len(covering)
    tasks = [
        (bi, start, min(start + plan.batch_size, l))
        for bi, start in enumerate(range(0, l, plan.batch_size))
    ]
    state = (covering.lo, covering.hi, index, model, inputs.points, cfg)
    if plan.workers == 1 or len(tasks) <= 1:
        _init_worker(state)
        results = [_worker_edges(t) for t in tasks]
    else:
        try:
            ctx = mp.get_context("fork")
        except ValueError:  # pragma: no cover - non-POSIX fallback
            ctx = mp.get_context()
        chunksize = max(1, math.ceil(len(tasks) / plan.workers))
        with ctx.Pool(plan.workers, initializer=_init_worker, initargs=(state,)) as pool:
            results = pool.map(_worker_edges, tasks, chunksize=chunksize)
    parts = []
    chunksize = max(1, math.ceil(len(tasks) / plan.workers))
    for c in range(0, len(results), chunksize):
        chunk = results[c : c + chunksize]
        srcs, dsts = [], []
        for batch_index, src, dst, err in chunk:
            if err is not None:
                start, end = tasks[batch_index][1], tasks[batch_index][2]
                raise GraphBuildError(
                    f"graph build failed in batch {batch_index} "
                    f"(cells {start}:{end}): {err}"
                )
            srcs.append(src)
            dsts.append(dst)
        owned = np.arange(tasks[c][1], tasks[min(c + chunksize, len(tasks)) - 1][2],
                          dtype=np.int64)
        indptr, indices = _csr_from_pairs(
            np.concatenate(srcs) if srcs else np.empty(0, dtype=np.int64),
            np.concatenate(dsts) if dsts else np.empty(0, dtype=np.int64),
            l,
        )
        parts.append(
            SymbolicImage(covering.depths, covering.bits, indptr, indices, owned=owned)
        )
    if not parts:
        return SymbolicImage(
            covering.depths, covering.bits, np.zeros(1, dtype=np.int64),
            np.empty(0, dtype=np.int64),
        )
    return merge_subgraphs(parts)
