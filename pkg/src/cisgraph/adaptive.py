"""Adaptive subdivision: boundary cells, their k-NN neighborhood, selection.

A cell is a boundary cell when at least one vertex of its slightly enlarged
box touches no cell of the covering.  Interior cells have every enlarged
vertex inside some neighbour.  The neighborhood step widens the selection by
the N nearest cell centers around each boundary cell; subdivision then
splits only the selected cells, producing mixed-resolution coverings.

The vertex test can miss a boundary cell whose enlarged vertices all land in
diagonal neighbours across a one-cell hole; the optional face points (edge
midpoints of the enlarged box) close that gap at extra cost, and a positive
N covers it as well on the geometries exercised by the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cisgraph.geometry import Covering, SpatialIndex

__all__ = [
    "AdaptiveConfig",
    "select_boundary",
    "select_boundary_mask",
    "select_neighborhood",
    "select_neighborhood_mask",
    "select_for_subdivision",
    "select_for_subdivision_mask",
    "subdivide_selected",
]

MODES = ("full", "adaptive")


@dataclass(frozen=True)
class AdaptiveConfig:
    """Subdivision-selection knobs.

    mode: 'full' subdivides every cell, 'adaptive' only boundary + k-NN
    neighborhood.  n_neighbors is the paper-style N; delta the relative
    enlargement used by the boundary test; include_face_points adds edge
    midpoints of the enlarged box to the probe set.
    """

    mode: str = "full"
    n_neighbors: int = 3
    delta: float = 0.01
    include_face_points: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.n_neighbors < 0:
            raise ValueError("n_neighbors must be nonnegative")
        if not self.delta > 0:
            raise ValueError("delta must be positive")


def _probe_points(lo: np.ndarray, hi: np.ndarray, delta: float,
                  include_face_points: bool) -> np.ndarray:
    """Probe points of the enlarged boxes: corners, plus edge midpoints when
    requested.  Shape (cells, probes, n)."""
    n = lo.shape[1]
    hw = 0.5 * (hi - lo)
    elo = lo - delta * hw
    ehi = hi + delta * hw
    cen = 0.5 * (lo + hi)
    choices = []  # per probe: entry in {0: lo, 1: hi, 2: center} per dim
    for code in range(1 << n):
        choices.append([(code >> (n - 1 - d)) & 1 for d in range(n)])
    if include_face_points:
        for free in range(n):
            for code in range(1 << (n - 1)):
                choice = []
                k = 0
                for d in range(n):
                    if d == free:
                        choice.append(2)
                    else:
                        choice.append((code >> (n - 2 - k)) & 1)
                        k += 1
                choices.append(choice)
    probes = np.empty((lo.shape[0], len(choices), n), dtype=np.float64)
    for j, choice in enumerate(choices):
        for d in range(n):
            src = (elo, ehi, cen)[choice[d]]
            probes[:, j, d] = src[:, d]
    return probes


def select_boundary_mask(covering, index: SpatialIndex, delta: float,
                         include_face_points: bool = False) -> np.ndarray:
    """Boolean mask of boundary cells, aligned with the covering order.

    One intersection query per enlarged cell collects the candidate
    neighbours; the probe points are then tested against those candidates
    directly.  Any cell containing a probe intersects the enlarged box the
    probe is a corner of, so the candidate set is sufficient.
    """
    lo = np.asarray(covering.lo, dtype=np.float64)
    hi = np.asarray(covering.hi, dtype=np.float64)
    l, n = lo.shape
    if l == 0:
        return np.zeros(0, dtype=bool)
    probes = _probe_points(lo, hi, delta, include_face_points)
    n_probe = probes.shape[1]
    hw = 0.5 * (hi - lo)
    qi, ci = index.query_boxes(lo - delta * hw, hi + delta * hw)
    covered = np.zeros(l * n_probe, dtype=bool)
    chunk = 1 << 18
    for start in range(0, len(qi), chunk):
        q = qi[start : start + chunk]
        c = ci[start : start + chunk]
        pb = probes[q]  # (pairs, n_probe, n)
        inside = (pb[:, :, 0] >= lo[c, 0, None]) & (pb[:, :, 0] <= hi[c, 0, None])
        for d in range(1, n):
            inside &= (pb[:, :, d] >= lo[c, d, None]) & (pb[:, :, d] <= hi[c, d, None])
        rows, cols = np.nonzero(inside)
        covered[q[rows] * n_probe + cols] = True
    all_covered = covered.reshape(l, n_probe).all(axis=1)
    return ~all_covered


def select_boundary(covering, index: SpatialIndex, delta: float,
                    include_face_points: bool = False) -> set:
    """Boundary cells: at least one enlarged-box vertex intersects no cell."""
    mask = select_boundary_mask(covering, index, delta, include_face_points)
    labels = index.labels
    if labels is None:
        return {int(i) for i in np.flatnonzero(mask)}
    return {labels[int(i)] for i in np.flatnonzero(mask)}


def select_neighborhood_mask(covering, index: SpatialIndex,
                             boundary_mask: np.ndarray,
                             n_neighbors: int) -> np.ndarray:
    """Cells in the k-NN neighborhood of any boundary cell, minus the
    boundary itself."""
    l = len(boundary_mask)
    out = np.zeros(l, dtype=bool)
    if n_neighbors == 0 or not boundary_mask.any():
        return out
    centers = 0.5 * (np.asarray(covering.lo) + np.asarray(covering.hi))
    queries = centers[boundary_mask]
    for idx, _clamped in index.knn_indices_many(queries, n_neighbors):
        out[idx] = True
    out &= ~boundary_mask
    return out


def select_neighborhood(covering, index: SpatialIndex, boundary: set,
                        n_neighbors: int) -> set:
    """Union of the N nearest cells around each boundary cell, minus the
    boundary cells themselves.  N = 0 selects nothing."""
    mask = _labels_to_mask(covering, index, boundary)
    out = select_neighborhood_mask(covering, index, mask, n_neighbors)
    return _mask_to_labels(index, out)


def select_for_subdivision_mask(covering, index: SpatialIndex,
                                cfg: AdaptiveConfig) -> np.ndarray:
    if cfg.mode == "full":
        return np.ones(len(covering.lo), dtype=bool)
    boundary = select_boundary_mask(covering, index, cfg.delta,
                                    cfg.include_face_points)
    neighborhood = select_neighborhood_mask(covering, index, boundary,
                                            cfg.n_neighbors)
    return boundary | neighborhood


def select_for_subdivision(covering, index: SpatialIndex,
                           cfg: AdaptiveConfig) -> set:
    """Cells to subdivide this iteration: all of them in full mode, boundary
    plus neighborhood in adaptive mode."""
    mask = select_for_subdivision_mask(covering, index, cfg)
    return _mask_to_labels(index, mask)


def subdivide_selected(covering: Covering, selection) -> Covering:
    """Replace each selected cell by its two children (axis = depth mod n);
    unselected cells carry over unchanged."""
    return covering.subdivide(selection)


def _mask_to_labels(index: SpatialIndex, mask: np.ndarray) -> set:
    if index.labels is None:
        return {int(i) for i in np.flatnonzero(mask)}
    return {index.labels[int(i)] for i in np.flatnonzero(mask)}


def _labels_to_mask(covering, index: SpatialIndex, labels: set) -> np.ndarray:
    l = len(np.asarray(covering.lo))
    mask = np.zeros(l, dtype=bool)
    if not labels:
        return mask
    if index.labels is None:
        for i in labels:
            mask[int(i)] = True
        return mask
    lookup = {index.labels[i]: i for i in range(l)}
    for lab in labels:
        mask[lookup[lab]] = True
    return mask
