"""Oracles and paper-replication experiments.

The 1-D brute-force oracle computes the largest control invariant set by a
grid fixed point that never touches the covering or graph code paths; the
brute-force graph builder realizes the symbolic image definition as a naive
double loop.  ``replicate_paper_experiments`` reruns the N-sweep and the
serial-versus-parallel comparison on the CSTR and writes a report with cell
counts, wall times, hull areas and speedup ratios; speedups are recorded,
not asserted, since they depend on the hardware.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from cisgraph.adaptive import AdaptiveConfig
from cisgraph.engine import RunConfig, run
from cisgraph.geometry import Covering, SpatialIndex
from cisgraph.graph import BuildPlan, SymbolicImage, _csr_from_pairs
from cisgraph.hulls import hull_of_cells, polygon_symdiff_area
from cisgraph.image import ImageConfig, cell_image
from cisgraph.system import InputGrid, SystemModel, cstr_model, sample_inputs

__all__ = [
    "OracleCis",
    "brute_force_cis_1d",
    "brute_force_graph",
    "linear_cis_oracle",
    "replicate_paper_experiments",
]


@dataclass(frozen=True)
class OracleCis:
    """Known largest control invariant set as a membership predicate."""

    contains: Callable[[float], bool]
    description: str


def linear_cis_oracle(a: float, u_max: float) -> OracleCis:
    """Closed form for x+ = a x + u, |u| <= u_max, a > 1.

    The boundary satisfies a*s - u_max = s, so s = u_max / (a - 1).
    """
    if not a > 1:
        raise ValueError("closed form applies to expanding maps (a > 1)")
    s = u_max / (a - 1.0)
    return OracleCis(
        contains=lambda x, s=s: abs(x) <= s,
        description=f"[-{s}, {s}] for x+ = {a} x + u, |u| <= {u_max}",
    )


def brute_force_cis_1d(model: SystemModel, resolution: float,
                       input_points: int = 201, max_iterations: int = 100000):
    """Largest CIS of a 1-D model by grid fixed point.

    Starts with every grid point of X alive and repeatedly deletes points
    with no input (from a fine input grid) mapping them into the surviving
    set, where a mapped point belongs to the surviving set when it rounds to
    an alive grid point.  Returns a list of (lo, hi) intervals of the alive
    region.  Deliberately independent of the covering and graph code paths.
    """
    if model.n != 1:
        raise ValueError("oracle applies to 1-D models only")
    xlo, xhi = float(model.X.lo[0]), float(model.X.hi[0])
    npts = int(round((xhi - xlo) / resolution)) + 1
    xs = np.linspace(xlo, xhi, npts)
    step_actual = xs[1] - xs[0] if npts > 1 else resolution
    if model.U.hi[0] > model.U.lo[0]:
        us = np.linspace(model.U.lo[0], model.U.hi[0], input_points)
    else:
        us = np.array([model.U.lo[0]])
    alive = np.ones(npts, dtype=bool)
    images = np.empty((npts, len(us)))
    for j, u in enumerate(us):
        images[:, j] = model.map_points(xs[:, None], np.array([u]))[:, 0]
    with np.errstate(invalid="ignore"):
        idx = np.round((images - xlo) / step_actual).astype(np.int64)
    in_range = np.isfinite(images) & (idx >= 0) & (idx < npts)
    idx_safe = np.where(in_range, idx, 0)
    for _ in range(max_iterations):
        ok = in_range & alive[idx_safe]
        new_alive = alive & ok.any(axis=1)
        if np.array_equal(new_alive, alive):
            break
        alive = new_alive
    else:
        raise RuntimeError("oracle fixed point did not converge")
    intervals = []
    start = None
    for i, a in enumerate(alive):
        if a and start is None:
            start = i
        if not a and start is not None:
            intervals.append((float(xs[start]), float(xs[i - 1])))
            start = None
    if start is not None:
        intervals.append((float(xs[start]), float(xs[-1])))
    return intervals


def brute_force_graph(covering: Covering, model: SystemModel, inputs: InputGrid,
                      cfg: ImageConfig, max_cells: int = 1000) -> SymbolicImage:
    """Naive double-loop symbolic image: per cell and input, the enclosure is
    tested against every cell box by linear scan.  Oracle for both builders;
    refuses coverings above ``max_cells``."""
    l = len(covering)
    if l > max_cells:
        raise ValueError(f"brute-force graph capped at {max_cells} cells, got {l}")
    srcs, dsts = [], []
    for i in range(l):
        box = covering.box_at(i)
        for u in inputs:
            enc = cell_image(model, box, u, cfg)
            if enc is None:
                continue
            hit = np.all(enc.lo <= covering.hi, axis=1) & np.all(
                covering.lo <= enc.hi, axis=1
            )
            for j in np.flatnonzero(hit):
                srcs.append(i)
                dsts.append(int(j))
    indptr, indices = _csr_from_pairs(
        np.asarray(srcs, dtype=np.int64), np.asarray(dsts, dtype=np.int64), l
    )
    return SymbolicImage(covering.depths, covering.bits, indptr, indices)


# -- paper replication --------------------------------------------------------


def _cstr_config(mode: str, n_neighbors: int, iterations: int,
                 workers: int = 1, batch_size: int = 1024) -> RunConfig:
    return RunConfig(
        model=cstr_model(),
        iterations=iterations,
        adaptive=AdaptiveConfig(mode=mode, n_neighbors=n_neighbors),
        image=ImageConfig(),
        plan=BuildPlan(batch_size=batch_size, workers=workers),
    )


def replicate_paper_experiments(output_dir, iterations: int = 20,
                                parallel_iterations: int = 14,
                                n_values=(0, 1, 3, 5),
                                workers=(1, 2, 4),
                                batch_size: int = 1024,
                                quick: bool = False) -> dict:
    """Rerun the N-sweep and the parallel-build comparison on the CSTR.

    Writes report.tsv (one row per experiment) and summary.txt.  Asserts the
    qualitative orderings: at the sweep depth, the N=3 run must generate at
    most half as many final cells as full subdivision and finish faster;
    with more than one available core, the multi-worker build must beat the
    single-worker build.  Raw speedup ratios are recorded either way.
    """
    import os

    if quick:
        iterations = min(iterations, 10)
        parallel_iterations = min(parallel_iterations, 8)
        workers = tuple(w for w in workers if w <= 2)
    outdir = Path(output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = []
    sweep_results = {}
    for n in list(n_values) + ["full"]:
        mode = "full" if n == "full" else "adaptive"
        nn = 0 if n == "full" else int(n)
        t0 = time.perf_counter()
        result = run(_cstr_config(mode, nn, iterations))
        wall = time.perf_counter() - t0
        hull_area = np.nan
        if len(result.covering) >= 1:
            _, hull_area = hull_of_cells(result.covering.lo, result.covering.hi)
        sweep_results[n] = (result, wall, hull_area)
        rows.append(
            {
                "experiment": f"sweep_N_{n}",
                "iterations": len(result.metrics),
                "final_cells": len(result.covering),
                "wall_s": wall,
                "build_s": sum(m.t_build_ms for m in result.metrics) / 1e3,
                "hull_area": hull_area,
            }
        )
    build_times = {}
    for w in workers:
        t0 = time.perf_counter()
        result = run(_cstr_config("full", 0, parallel_iterations, workers=w,
                                  batch_size=batch_size))
        wall = time.perf_counter() - t0
        build_s = sum(m.t_build_ms for m in result.metrics) / 1e3
        build_times[w] = build_s
        rows.append(
            {
                "experiment": f"parallel_w{w}",
                "iterations": len(result.metrics),
                "final_cells": len(result.covering),
                "wall_s": wall,
                "build_s": build_s,
                "hull_area": np.nan,
            }
        )
    report = {"rows": rows}
    full_result, full_wall, full_hull = sweep_results["full"]
    n3_result, n3_wall, n3_hull = sweep_results.get(3, sweep_results["full"])
    report["adaptive_speedup"] = full_wall / n3_wall
    if 3 in sweep_results:
        if quick:
            assert len(n3_result.covering) < len(full_result.covering), (
                "adaptive N=3 did not reduce final cells"
            )
        else:
            assert 2 * len(n3_result.covering) <= len(full_result.covering), (
                "adaptive N=3 did not reduce final cells by 2x"
            )
            assert n3_wall < full_wall, "adaptive N=3 was not faster than full mode"
        if 5 in sweep_results:
            _, _, n5_hull = sweep_results[5]
            h3, _ = hull_of_cells(n3_result.covering.lo, n3_result.covering.hi)
            h5, _ = hull_of_cells(sweep_results[5][0].covering.lo,
                                  sweep_results[5][0].covering.hi)
            report["hull_symdiff_n3_n5_rel"] = polygon_symdiff_area(h3, h5) / n5_hull
        hfull, _ = hull_of_cells(full_result.covering.lo, full_result.covering.hi)
        h3, _ = hull_of_cells(n3_result.covering.lo, n3_result.covering.hi)
        report["hull_symdiff_n3_full_rel"] = (
            polygon_symdiff_area(h3, hfull) / full_hull
        )
    if len(build_times) > 1:
        base = build_times[min(build_times)]
        best = build_times[max(build_times)]
        report["parallel_build_speedup"] = base / best
        if os.cpu_count() and os.cpu_count() > 1 and not quick:
            assert best < base, "parallel build was not faster than serial"
    with open(outdir / "report.tsv", "w") as fp:
        cols = ("experiment", "iterations", "final_cells", "wall_s", "build_s",
                "hull_area")
        fp.write("\t".join(cols) + "\n")
        for row in rows:
            fp.write(
                "\t".join(
                    (
                        row["experiment"],
                        str(row["iterations"]),
                        str(row["final_cells"]),
                        f"{row['wall_s']:.3f}",
                        f"{row['build_s']:.3f}",
                        f"{row['hull_area']:.8g}",
                    )
                )
                + "\n"
            )
    with open(outdir / "summary.txt", "w") as fp:
        fp.write(f"adaptive_speedup_full_over_N3 = {report['adaptive_speedup']:.3f}\n")
        if "hull_symdiff_n3_n5_rel" in report:
            fp.write(
                f"hull_symdiff_N3_vs_N5_rel = {report['hull_symdiff_n3_n5_rel']:.6f}\n"
            )
        if "hull_symdiff_n3_full_rel" in report:
            fp.write(
                f"hull_symdiff_N3_vs_full_rel = {report['hull_symdiff_n3_full_rel']:.6f}\n"
            )
        if "parallel_build_speedup" in report:
            fp.write(
                f"parallel_build_speedup = {report['parallel_build_speedup']:.3f}\n"
            )
        fp.write("speedup ratios are hardware-dependent observations\n")
    return report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="replicate the CSTR N-sweep and parallel-build experiments"
    )
    parser.add_argument("-o", "--output-dir", required=True)
    parser.add_argument("--iterations", type=int, default=20)
    parser.add_argument("--quick", action="store_true",
                        help="smaller smoke-test variant")
    args = parser.parse_args(argv)
    replicate_paper_experiments(
        args.output_dir, iterations=args.iterations, quick=args.quick
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
