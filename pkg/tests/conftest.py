"""Shared fixtures and small oracles used across the test modules."""

from __future__ import annotations

from types import SimpleNamespace

import numpy as np
import pytest

from cisgraph.geometry import Box, Covering, SpatialIndex
from cisgraph.graph import SymbolicImage, _csr_from_pairs


def grid_boxes(nx: int, ny: int, width: float = 1.0):
    """Uniform nx-by-ny grid of square cells, row-major from the lower-left,
    as (lo, hi) arrays.  Mirrors the worked boundary-selection figure where
    cell 1 is a corner and cell nx+2 is its diagonal neighbour."""
    lo = np.array(
        [(c * width, r * width) for r in range(ny) for c in range(nx)], dtype=float
    )
    hi = lo + width
    return lo, hi


def grid_index(nx: int, ny: int, drop=(), width: float = 1.0):
    """SpatialIndex over the grid with 1-based integer labels, optionally
    with some cells removed; returns (boxset, index)."""
    lo, hi = grid_boxes(nx, ny, width)
    keep = np.array([i for i in range(nx * ny) if (i + 1) not in set(drop)])
    lo, hi = lo[keep], hi[keep]
    labels = [int(i) + 1 for i in keep]
    boxset = SimpleNamespace(lo=lo, hi=hi)
    return boxset, SpatialIndex(lo, hi, labels=labels)


def random_covering(rng: np.random.Generator, root: Box, rounds: int,
                    keep_fraction: float = 1.0) -> Covering:
    """Random mixed-resolution covering: random subsets subdivided each
    round, then a random subset retained."""
    cov = Covering.initial(root)
    for _ in range(rounds):
        mask = rng.random(len(cov)) < 0.7
        if not mask.any():
            mask[rng.integers(len(cov))] = True
        cov = cov.subdivide(mask)
    if keep_fraction < 1.0:
        keep = rng.random(len(cov)) < keep_fraction
        if not keep.any():
            keep[rng.integers(len(cov))] = True
        cov = cov.retain(keep)
    return cov


def graph_from_edges(n_vertices: int, edges) -> SymbolicImage:
    """SymbolicImage over synthetic vertices 0..n-1 (dyadic ids of a common
    depth so the canonical order is the integer order)."""
    depth = max(1, int(np.ceil(np.log2(max(n_vertices, 2)))))
    depths = np.full(n_vertices, depth, dtype=np.int64)
    bits = np.arange(n_vertices, dtype=np.int64)
    src = np.array([e[0] for e in edges], dtype=np.int64)
    dst = np.array([e[1] for e in edges], dtype=np.int64)
    indptr, indices = _csr_from_pairs(src, dst, n_vertices)
    return SymbolicImage(depths, bits, indptr, indices)


def random_digraph(rng: np.random.Generator, n_vertices: int,
                   avg_degree: float = 2.0):
    """Random edge list (possibly with self-loops)."""
    n_edges = int(avg_degree * n_vertices)
    src = rng.integers(0, n_vertices, n_edges)
    dst = rng.integers(0, n_vertices, n_edges)
    return list(zip(src.tolist(), dst.tolist()))


def peeling_fixed_point(n_vertices: int, edges) -> np.ndarray:
    """Oracle for the non-leaving set: repeatedly delete zero-out-degree
    vertices (with their incoming edges) until nothing changes."""
    alive = np.ones(n_vertices, dtype=bool)
    if not edges:
        return alive & False
    src = np.array([e[0] for e in edges], dtype=np.int64)
    dst = np.array([e[1] for e in edges], dtype=np.int64)
    while True:
        live_edge = alive[src] & alive[dst]
        out_deg = np.bincount(src[live_edge], minlength=n_vertices)
        dead = alive & (out_deg == 0)
        if not dead.any():
            return alive
        alive &= ~dead


def scc_labels_oracle(n_vertices: int, edges) -> list:
    """SCC partition via boolean transitive closure (matrix squaring)."""
    reach = np.eye(n_vertices, dtype=bool)
    for s, d in edges:
        reach[s, d] = True
    while True:
        nxt = reach | (reach.astype(np.uint8) @ reach.astype(np.uint8) > 0)
        if np.array_equal(nxt, reach):
            break
        reach = nxt
    mutual = reach & reach.T
    seen = np.zeros(n_vertices, dtype=bool)
    comps = []
    for v in range(n_vertices):
        if seen[v]:
            continue
        members = np.flatnonzero(mutual[v])
        seen[members] = True
        comps.append(frozenset(int(m) for m in members))
    return comps


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260809)
