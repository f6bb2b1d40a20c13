"""Command-line front end.

Subcommands: ``run`` (single configuration), ``sweep`` (N and/or
parallel-plan sweeps, one result directory per point), ``hull``
(post-process a cells file into a convex-hull polygon file) and ``compare``
(exact symmetric-difference area of two cells files).

Exit codes: 0 success, 1 invalid configuration (the message names the
offending key), 2 runtime failure, 3 the run ended with an empty covering
(no invariant set at this resolution).
"""

from __future__ import annotations

import argparse
import itertools
import sys
from pathlib import Path

from cisgraph.config import (
    ConfigError,
    parse_config_text,
    render_config,
    resolve_config,
)
from cisgraph.engine import METRICS_COLUMNS, run, write_run_outputs
from cisgraph.geometry import read_cells_file
from cisgraph.hulls import (
    boxes_symdiff_area,
    hull_of_cells,
    write_polygon_file,
)

__all__ = ["main", "entry"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_EMPTY = 3


def _add_run_flags(parser: argparse.ArgumentParser, listy: bool = False) -> None:
    split = (lambda s: s.split(",")) if listy else (lambda s: s)
    parser.add_argument("--config", help="flat key = value configuration file")
    parser.add_argument("--model", help="model name (cstr, linear, identity, shift)")
    parser.add_argument("--iterations", help="maximum iteration count")
    parser.add_argument("--mode", type=split,
                        help="full or adaptive" + (", comma list in sweeps" if listy else ""))
    parser.add_argument("--N", type=split,
                        help="neighborhood size" + (", comma list in sweeps; 'full' allowed" if listy else ""))
    parser.add_argument("--delta", help="boundary-test enlargement factor")
    parser.add_argument("--samples-per-dim", dest="samples_per_dim",
                        help="image sample points per state dimension")
    parser.add_argument("--bloat", help="image enclosure inflation factor")
    parser.add_argument("--input-grid", dest="input_grid",
                        help="input grid points per input dimension (int or comma list)")
    parser.add_argument("--workers", type=split,
                        help="worker processes" + (", comma list in sweeps" if listy else ""))
    parser.add_argument("--batch-size", dest="batch_size", type=split,
                        help="cells per batch" + (", comma list in sweeps" if listy else ""))
    parser.add_argument("--min-diameter", dest="min_diameter",
                        help="stop when the covering diameter falls below this")
    parser.add_argument("--include-face-points", dest="include_face_points",
                        action="store_const", const="true",
                        help="probe edge midpoints in the boundary test")
    parser.add_argument("--strict-largest-scc", dest="strict_largest_scc",
                        action="store_const", const="true",
                        help="keep only the largest strongly connected component")
    parser.add_argument("--set", dest="extra", action="append", default=[],
                        metavar="KEY=VALUE",
                        help="override any config key, e.g. --set cstr.h=0.05")
    parser.add_argument("--output-dir", dest="output_dir", default="cisgraph-out")


def _collect_overrides(args, scalar_keys=(), list_keys=()) -> dict:
    overrides: dict[str, str] = {}
    for key in scalar_keys:
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    for item in args.extra:
        if "=" not in item:
            raise ConfigError(item, "expected KEY=VALUE in --set")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


_SCALAR_KEYS = (
    "model", "iterations", "delta", "samples_per_dim", "bloat", "input_grid",
    "min_diameter", "include_face_points", "strict_largest_scc",
)
_PLAN_KEYS = ("mode", "N", "workers", "batch_size")


def _file_values(args) -> dict:
    if args.config:
        return parse_config_text(Path(args.config).read_text())
    return {}


def _run_one(file_values, overrides, outdir, export_edges) -> int:
    resolved = resolve_config(file_values, overrides, keep_final_graph=export_edges)
    result = run(resolved.run_config)
    outdir = Path(outdir)
    paths = write_run_outputs(result, outdir, export_edges=export_edges)
    with open(outdir / "effective.cfg", "w") as fp:
        fp.write(render_config(resolved.effective))
    print(f"wrote {outdir}: cells={len(result.covering)} "
          f"termination={result.termination}")
    if result.empty:
        print("no invariant set at this resolution", file=sys.stderr)
        return EXIT_EMPTY
    return EXIT_OK


def _cmd_run(args) -> int:
    overrides = _collect_overrides(args, _SCALAR_KEYS)
    for key in _PLAN_KEYS:
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    return _run_one(_file_values(args), overrides, args.output_dir,
                    args.export_edges)


def _point_name(point: dict) -> str:
    return "__".join(f"{k}_{v}" for k, v in point.items()) or "base"


def _cmd_sweep(args) -> int:
    file_values = _file_values(args)
    base = _collect_overrides(args, _SCALAR_KEYS)
    sweep_axes = {}
    for key in _PLAN_KEYS:
        value = getattr(args, key)
        if value is not None:
            if len(value) == 1:
                base[key] = value[0]
            else:
                sweep_axes[key] = value
    names = sorted(sweep_axes)
    outroot = Path(args.output_dir)
    outroot.mkdir(parents=True, exist_ok=True)
    combined_rows = []
    for combo in itertools.product(*(sweep_axes[k] for k in names)):
        point = dict(zip(names, combo))
        overrides = dict(base)
        for key, value in point.items():
            if key == "N" and value == "full":
                overrides["mode"] = "full"
            elif key == "N":
                overrides.setdefault("mode", "adaptive")
                overrides["N"] = value
            else:
                overrides[key] = value
        pdir = outroot / _point_name(point)
        _run_one(file_values, overrides, pdir, args.export_edges)
        with open(pdir / "metrics.tsv") as fp:
            lines = fp.read().splitlines()[1:]
        for line in lines:
            combined_rows.append((_point_name(point), line))
    with open(outroot / "sweep.tsv", "w") as fp:
        fp.write("point\t" + "\t".join(METRICS_COLUMNS) + "\n")
        for name, line in combined_rows:
            fp.write(f"{name}\t{line}\n")
    print(f"sweep table written to {outroot / 'sweep.tsv'}")
    return EXIT_OK


def _cmd_hull(args) -> int:
    with open(args.cells_file) as fp:
        covering, _ = read_cells_file(fp)
    verts, area = hull_of_cells(covering.lo, covering.hi)
    out = Path(args.output)
    with open(out, "w") as fp:
        write_polygon_file(verts, fp)
    print(f"hull with {len(verts)} vertices, area {area:.12g}, written to {out}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    with open(args.cells_a) as fp:
        cov_a, _ = read_cells_file(fp)
    with open(args.cells_b) as fp:
        cov_b, _ = read_cells_file(fp)
    area = boxes_symdiff_area(cov_a.lo, cov_a.hi, cov_b.lo, cov_b.hi)
    print(format(area, ".17g"))
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cisgraph",
        description="outer approximations of largest control invariant sets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a single configuration")
    _add_run_flags(p_run)
    p_run.add_argument("--export-edges", action="store_true",
                       help="also export the last built graph's edge list")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep N and/or parallel plans")
    _add_run_flags(p_sweep, listy=True)
    p_sweep.add_argument("--export-edges", action="store_true")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_hull = sub.add_parser("hull", help="convex hull polygon of a cells file")
    p_hull.add_argument("cells_file")
    p_hull.add_argument("-o", "--output", required=True)
    p_hull.set_defaults(func=_cmd_hull)

    p_cmp = sub.add_parser("compare", help="symmetric-difference area of two cells files")
    p_cmp.add_argument("cells_a")
    p_cmp.add_argument("cells_b")
    p_cmp.set_defaults(func=_cmd_compare)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failure, distinct from bad config
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
