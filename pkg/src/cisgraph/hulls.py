"""Convex hulls of 2-D cell sets and geometric diffs of cells files.

Hull vertices are emitted counter-clockwise starting from the
lexicographically smallest vertex, so the polygon file is invariant under
permutation of the cells-file rows.  The symmetric difference of two unions
of axis-aligned boxes is computed exactly by coordinate compression.
"""

from __future__ import annotations

from typing import IO

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from shapely.geometry import Polygon

__all__ = [
    "DegenerateHullError",
    "hull_of_cells",
    "hull_area",
    "polygon_symdiff_area",
    "boxes_symdiff_area",
    "write_polygon_file",
    "read_polygon_file",
]


class DegenerateHullError(ValueError):
    """Fewer than 3 distinct corner points, or all points collinear."""


def hull_of_cells(lo: np.ndarray, hi: np.ndarray):
    """Convex hull of all cell corner points of a 2-D covering.

    Returns (vertices, area) with vertices (k, 2) in counter-clockwise
    order, starting at the lexicographically smallest vertex, not closed.
    """
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    if lo.ndim != 2 or lo.shape[1] != 2:
        raise ValueError("hull requires a 2-D state space")
    corners = np.concatenate(
        [
            np.stack([lo[:, 0], lo[:, 1]], axis=1),
            np.stack([lo[:, 0], hi[:, 1]], axis=1),
            np.stack([hi[:, 0], lo[:, 1]], axis=1),
            np.stack([hi[:, 0], hi[:, 1]], axis=1),
        ]
    )
    pts = np.unique(corners, axis=0)
    if len(pts) < 3:
        raise DegenerateHullError(f"{len(pts)} distinct points cannot form a hull")
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise DegenerateHullError(f"degenerate point set: {exc}") from exc
    verts = pts[hull.vertices]  # counter-clockwise in 2-D
    start = int(np.lexsort((verts[:, 1], verts[:, 0]))[0])
    verts = np.roll(verts, -start, axis=0)
    return verts, float(hull.volume)


def hull_area(vertices: np.ndarray) -> float:
    """Shoelace area of a simple polygon given counter-clockwise vertices."""
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def polygon_symdiff_area(verts_a: np.ndarray, verts_b: np.ndarray) -> float:
    """Area of the symmetric difference of two simple polygons."""
    pa = Polygon(verts_a)
    pb = Polygon(verts_b)
    return float(pa.symmetric_difference(pb).area)


def boxes_symdiff_area(lo_a, hi_a, lo_b, hi_b) -> float:
    """Exact area/volume of the symmetric difference of two box unions.

    Works in any dimension via coordinate compression; boxes within one set
    may overlap (occupancy is boolean).
    """
    lo_a, hi_a = np.atleast_2d(lo_a), np.atleast_2d(hi_a)
    lo_b, hi_b = np.atleast_2d(lo_b), np.atleast_2d(hi_b)
    n = lo_a.shape[1] if lo_a.size else lo_b.shape[1]
    axes = []
    for d in range(n):
        coords = np.concatenate([lo_a[:, d], hi_a[:, d], lo_b[:, d], hi_b[:, d]])
        axes.append(np.unique(coords))
    shape = tuple(max(len(ax) - 1, 0) for ax in axes)
    if 0 in shape:
        occ_a = np.zeros(shape, dtype=bool)
        occ_b = np.zeros(shape, dtype=bool)
    else:
        occ_a = _occupancy(lo_a, hi_a, axes, shape)
        occ_b = _occupancy(lo_b, hi_b, axes, shape)
    diff = occ_a ^ occ_b
    if not diff.any():
        return 0.0
    widths = [np.diff(ax) for ax in axes]
    vol = widths[0]
    for d in range(1, n):
        vol = np.multiply.outer(vol, widths[d])
    return float(vol[diff].sum())


def _occupancy(lo, hi, axes, shape):
    occ = np.zeros(shape, dtype=bool)
    for k in range(len(lo)):
        sl = tuple(
            slice(
                int(np.searchsorted(axes[d], lo[k, d])),
                int(np.searchsorted(axes[d], hi[k, d])),
            )
            for d in range(len(axes))
        )
        occ[sl] = True
    return occ


def write_polygon_file(vertices: np.ndarray, fp: IO[str]) -> None:
    """Closed polygon as delimited text: one 'x y' row per vertex,
    counter-clockwise, with the first vertex repeated at the end."""
    fp.write("# x y\n")
    closed = np.vstack([vertices, vertices[:1]])
    for x, y in closed:
        fp.write(f"{format(float(x), '.17g')} {format(float(y), '.17g')}\n")


def read_polygon_file(fp: IO[str]) -> np.ndarray:
    rows = []
    for line in fp:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        x, y = line.split()
        rows.append((float(x), float(y)))
    verts = np.asarray(rows, dtype=np.float64)
    if len(verts) >= 2 and np.array_equal(verts[0], verts[-1]):
        verts = verts[:-1]
    return verts
