"""Graph analysis: strongly connected components and non-leaving cells.

The non-leaving cells are the vertices with an infinite admissible path,
i.e. the vertices that can reach a cycle.  They are computed as reverse
reachability from all nontrivial strongly connected components (size >= 2,
or a singleton with a self-loop).  A strict mode restricts the seeds to the
single largest nontrivial component for comparison with formulations that
speak of "the" largest component; with several disjoint invariant regions
that mode discards all but one of them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cisgraph.geometry import Covering
from cisgraph.graph import SymbolicImage

__all__ = [
    "SccResult",
    "strongly_connected_components",
    "non_leaving",
    "non_leaving_mask",
    "retain",
]


@dataclass
class SccResult:
    """SCC decomposition: per-vertex component id plus per-component data."""

    component_of: np.ndarray  # (V,) component id per vertex
    n_components: int
    nontrivial: np.ndarray    # (C,) True when the component contains a cycle

    def members(self) -> list:
        """Member vertex indices per component id."""
        if self.n_components == 0:
            return []
        order = np.argsort(self.component_of, kind="stable")
        comps = self.component_of[order]
        bounds = np.flatnonzero(np.diff(comps)) + 1
        return [np.sort(part) for part in np.split(order, bounds)]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.component_of, minlength=self.n_components)


def _tarjan_components(indptr, indices, n_vertices) -> tuple[np.ndarray, int]:
    """Iterative Tarjan SCC; component ids increase in pop (reverse
    topological) order.  No recursion, so vertex counts in the millions are
    fine."""
    UNSET = -1
    order = np.full(n_vertices, UNSET, dtype=np.int64)
    low = np.zeros(n_vertices, dtype=np.int64)
    comp = np.full(n_vertices, UNSET, dtype=np.int64)
    on_stack = np.zeros(n_vertices, dtype=bool)
    stack: list[int] = []
    counter = 0
    n_comp = 0
    iptr = indptr
    nbrs = indices
    for root in range(n_vertices):
        if order[root] != UNSET:
            continue
        dfs = [(root, int(iptr[root]))]
        order[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while dfs:
            v, ptr = dfs[-1]
            end = iptr[v + 1]
            advanced = False
            while ptr < end:
                w = int(nbrs[ptr])
                ptr += 1
                if order[w] == UNSET:
                    dfs[-1] = (v, ptr)
                    order[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    dfs.append((w, int(iptr[w])))
                    advanced = True
                    break
                if on_stack[w] and order[w] < low[v]:
                    low[v] = order[w]
            if advanced:
                continue
            dfs.pop()
            if low[v] == order[v]:
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp[w] = n_comp
                    if w == v:
                        break
                n_comp += 1
            elif dfs:
                p = dfs[-1][0]
                if low[v] < low[p]:
                    low[p] = low[v]
    return comp, n_comp


def strongly_connected_components(graph: SymbolicImage) -> SccResult:
    """Exact SCC decomposition of the symbolic image."""
    comp, n_comp = _tarjan_components(graph.indptr, graph.indices, graph.n_vertices)
    sizes = np.bincount(comp, minlength=n_comp) if n_comp else np.zeros(0, np.int64)
    nontrivial = sizes >= 2
    if graph.n_vertices:
        loops = graph.self_loop_mask()
        nontrivial |= np.bincount(comp[loops], minlength=n_comp).astype(bool)
    return SccResult(component_of=comp, n_components=n_comp, nontrivial=nontrivial)


def non_leaving_mask(graph: SymbolicImage, strict_largest: bool = False) -> np.ndarray:
    """Boolean mask over vertices with an infinite admissible path.

    Seeds are the vertices of all nontrivial components (or, in strict mode,
    of the largest nontrivial component, ties resolved toward the component
    containing the smallest vertex index); the mask is their reverse
    reachability closure.
    """
    nv = graph.n_vertices
    if nv == 0:
        return np.zeros(0, dtype=bool)
    scc = strongly_connected_components(graph)
    seed_comps = scc.nontrivial.copy()
    if strict_largest and seed_comps.any():
        sizes = scc.sizes()
        sizes = np.where(seed_comps, sizes, 0)
        best = np.flatnonzero(sizes == sizes.max())
        if len(best) > 1:
            firsts = [
                int(np.flatnonzero(scc.component_of == c)[0]) for c in best
            ]
            best = [best[int(np.argmin(firsts))]]
        seed_comps = np.zeros_like(seed_comps)
        seed_comps[best[0]] = True
    visited = seed_comps[scc.component_of]
    frontier = np.flatnonzero(visited)
    rptr, rind = graph.reverse_csr()
    while len(frontier):
        starts = rptr[frontier]
        counts = rptr[frontier + 1] - starts
        total = int(counts.sum())
        if total == 0:
            break
        offsets = np.repeat(np.cumsum(counts) - counts, counts)
        flat = np.repeat(starts, counts) + (np.arange(total, dtype=np.int64) - offsets)
        preds = rind[flat]
        fresh = preds[~visited[preds]]
        if len(fresh) == 0:
            break
        frontier = np.unique(fresh)
        visited[frontier] = True
    return visited


def non_leaving(graph: SymbolicImage, strict_largest: bool = False) -> set:
    """The non-leaving cells as a set of CellIds."""
    mask = non_leaving_mask(graph, strict_largest=strict_largest)
    return {graph.vertex_id(int(i)) for i in np.flatnonzero(mask)}


def retain(covering: Covering, keep) -> Covering:
    """Restrict the covering to the kept cells; the caller rebuilds the index."""
    return covering.retain(keep)
