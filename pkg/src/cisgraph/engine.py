"""Iteration loop: subdivide, build the symbolic image, analyze, retain.

The initial covering is the root box as a single cell; the first iteration's
subdivision step splits it once per dimension so the first graph is
non-degenerate, and every later iteration splits the selected cells once
along the cycled axis.  Runs are seed-free and deterministic: identical
configurations produce identical coverings, graphs and output files.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Optional

import numpy as np

from cisgraph.adaptive import (
    AdaptiveConfig,
    select_boundary_mask,
    select_neighborhood_mask,
)
from cisgraph.analysis import non_leaving_mask
from cisgraph.geometry import Covering, SpatialIndex, write_cells_file
from cisgraph.graph import BuildPlan, SymbolicImage, build_graph_parallel
from cisgraph.image import ImageConfig
from cisgraph.system import SystemModel, sample_inputs

__all__ = [
    "RunConfig",
    "IterationMetrics",
    "RunResult",
    "run",
    "check_stop",
    "write_run_outputs",
    "METRICS_COLUMNS",
    "TIMINGS_COLUMNS",
]

METRICS_COLUMNS = (
    "iteration",
    "cells_before",
    "cells_after",
    "edges",
    "boundary_cells",
    "diameter",
)
TIMINGS_COLUMNS = ("iteration", "t_subdivide_ms", "t_build_ms", "t_analyze_ms")


@dataclass(frozen=True)
class RunConfig:
    """Complete description of one computation; no randomness anywhere."""

    model: SystemModel
    iterations: int = 20
    min_diameter: Optional[float] = None
    adaptive: AdaptiveConfig = field(default_factory=AdaptiveConfig)
    image: ImageConfig = field(default_factory=ImageConfig)
    plan: BuildPlan = field(default_factory=BuildPlan)
    input_counts: int | tuple = 3
    strict_largest_scc: bool = False
    check_containment: bool = True
    snapshot_iterations: tuple = ()
    keep_final_graph: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.min_diameter is not None and not self.min_diameter > 0:
            raise ValueError("min_diameter must be positive")


@dataclass
class IterationMetrics:
    iteration: int
    cells_before: int
    cells_after: int
    edges: int
    boundary_cells: int
    t_subdivide_ms: float
    t_build_ms: float
    t_analyze_ms: float
    diameter: float


@dataclass
class RunResult:
    covering: Covering
    metrics: list
    termination: str  # 'iterations' | 'min_diameter' | 'empty'
    boundary_mask: np.ndarray  # final covering's boundary classification
    snapshots: dict
    final_graph: Optional[SymbolicImage]
    containment_ok: bool

    @property
    def empty(self) -> bool:
        return len(self.covering) == 0


def check_stop(iteration: int, covering: Covering, config: RunConfig) -> Optional[str]:
    """Reason to stop after this iteration, or None to continue."""
    if len(covering) == 0:
        return "empty"
    if config.min_diameter is not None and covering.diameter() <= config.min_diameter:
        return "min_diameter"
    if iteration >= config.iterations:
        return "iterations"
    return None


def _containment_defect(new_cov: Covering, prev_index: SpatialIndex) -> float:
    """Largest relative volume of a new cell not covered by the previous
    covering (0 when the union shrank monotonically)."""
    if len(new_cov) == 0:
        return 0.0
    qi, ci = prev_index.query_boxes(new_cov.lo, new_cov.hi)
    inter = np.prod(
        np.maximum(
            0.0,
            np.minimum(new_cov.hi[qi], prev_index.hi[ci])
            - np.maximum(new_cov.lo[qi], prev_index.lo[ci]),
        ),
        axis=1,
    )
    covered = np.bincount(qi, weights=inter, minlength=len(new_cov))
    vols = new_cov.cell_volumes()
    return float(np.max(1.0 - covered / vols))


def run(config: RunConfig) -> RunResult:
    """Run the full loop and collect per-iteration metrics.

    Each iteration: select and subdivide, rebuild the index, build the
    graph, compute the non-leaving cells, retain them.  Stops at the
    iteration limit, when the covering diameter falls below min_diameter, or
    when the covering empties (no invariant set at this resolution).
    """
    model = config.model
    inputs = sample_inputs(model.U, config.input_counts)
    cov = Covering.initial(model.X)
    metrics: list[IterationMetrics] = []
    snapshots: dict[int, Covering] = {}
    termination = "iterations"
    containment_ok = True
    final_graph = None
    for k in range(1, config.iterations + 1):
        t0 = time.perf_counter()
        pre_index = cov.build_index()
        boundary = select_boundary_mask(
            cov, pre_index, config.adaptive.delta, config.adaptive.include_face_points
        )
        if k == 1:
            for _ in range(model.n):
                cov = cov.subdivide(None)
        else:
            if config.adaptive.mode == "full":
                selection = None
            else:
                selection = boundary | select_neighborhood_mask(
                    cov, pre_index, boundary, config.adaptive.n_neighbors
                )
            cov = cov.subdivide(selection)
        t1 = time.perf_counter()
        cells_before = len(cov)
        index = cov.build_index()
        graph = build_graph_parallel(cov, index, model, inputs, config.image, config.plan)
        t2 = time.perf_counter()
        keep = non_leaving_mask(graph, strict_largest=config.strict_largest_scc)
        new_cov = cov.retain(keep)
        if config.check_containment:
            defect = _containment_defect(new_cov, pre_index)
            if defect > 1e-12:
                containment_ok = False
        t3 = time.perf_counter()
        if k in config.snapshot_iterations:
            snapshots[k] = cov
        if config.keep_final_graph:
            final_graph = graph
        metrics.append(
            IterationMetrics(
                iteration=k,
                cells_before=cells_before,
                cells_after=len(new_cov),
                edges=graph.edge_count,
                boundary_cells=int(boundary.sum()),
                t_subdivide_ms=(t1 - t0) * 1e3,
                t_build_ms=(t2 - t1) * 1e3,
                t_analyze_ms=(t3 - t2) * 1e3,
                diameter=new_cov.diameter(),
            )
        )
        cov = new_cov
        reason = check_stop(k, cov, config)
        if reason:
            termination = reason
            break
    if len(cov):
        final_boundary = select_boundary_mask(
            cov, cov.build_index(), config.adaptive.delta,
            config.adaptive.include_face_points,
        )
    else:
        final_boundary = np.zeros(0, dtype=bool)
    return RunResult(
        covering=cov,
        metrics=metrics,
        termination=termination,
        boundary_mask=final_boundary,
        snapshots=snapshots,
        final_graph=final_graph,
        containment_ok=containment_ok,
    )


# -- output files -------------------------------------------------------------


def _write_table(fp: IO[str], columns, rows) -> None:
    fp.write("\t".join(columns) + "\n")
    for row in rows:
        fp.write("\t".join(row) + "\n")


def write_metrics_file(result: RunResult, fp: IO[str]) -> None:
    """Deterministic per-iteration metrics (wall times live in the timings
    file so this one is bitwise reproducible)."""
    rows = [
        (
            str(m.iteration),
            str(m.cells_before),
            str(m.cells_after),
            str(m.edges),
            str(m.boundary_cells),
            format(m.diameter, ".17g"),
        )
        for m in result.metrics
    ]
    _write_table(fp, METRICS_COLUMNS, rows)


def write_timings_file(result: RunResult, fp: IO[str]) -> None:
    rows = [
        (
            str(m.iteration),
            format(m.t_subdivide_ms, ".3f"),
            format(m.t_build_ms, ".3f"),
            format(m.t_analyze_ms, ".3f"),
        )
        for m in result.metrics
    ]
    _write_table(fp, TIMINGS_COLUMNS, rows)


def write_summary_file(result: RunResult, fp: IO[str]) -> None:
    fp.write(f"final_cells = {len(result.covering)}\n")
    fp.write(f"final_diameter = {format(result.covering.diameter(), '.17g')}\n")
    fp.write(f"termination = {result.termination}\n")
    fp.write(f"iterations_run = {len(result.metrics)}\n")
    fp.write(f"containment_ok = {result.containment_ok}\n")


def write_run_outputs(result: RunResult, outdir, export_edges: bool = False) -> dict:
    """Persist a run: final.cells, metrics.tsv, timings.tsv, summary.txt and
    optionally edges.tsv (the last built graph).  Returns the file paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {}
    status = ["boundary" if b else "interior" for b in result.boundary_mask]
    paths["cells"] = outdir / "final.cells"
    with open(paths["cells"], "w") as fp:
        write_cells_file(result.covering, fp, status)
    paths["metrics"] = outdir / "metrics.tsv"
    with open(paths["metrics"], "w") as fp:
        write_metrics_file(result, fp)
    paths["timings"] = outdir / "timings.tsv"
    with open(paths["timings"], "w") as fp:
        write_timings_file(result, fp)
    paths["summary"] = outdir / "summary.txt"
    with open(paths["summary"], "w") as fp:
        write_summary_file(result, fp)
    if export_edges:
        if result.final_graph is None:
            raise ValueError("run was not configured with keep_final_graph")
        paths["edges"] = outdir / "edges.tsv"
        with open(paths["edges"], "w") as fp:
            result.final_graph.write_edge_list(fp)
    return paths
