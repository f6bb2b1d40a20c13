"""Outer enclosures of one-step forward images of cells.

A cell's image under one input is enclosed by the bounding box of the mapped
sample points, inflated by a relative bloat factor that compensates for
finite sampling.  The enclosure is sound at the sample points by
construction: the inflation only ever adds margin, so every mapped sample
lies inside the returned box exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from cisgraph.geometry import Box
from cisgraph.system import InputGrid, SystemModel

__all__ = ["ImageConfig", "cell_sample_points", "cell_image", "cell_images",
           "batch_enclosures"]


@dataclass(frozen=True)
class ImageConfig:
    """Knobs of the sampled-image enclosure.

    samples_per_dim: test points per state dimension within a cell (>= 2, so
    the cell vertices are always included).  bloat: nonnegative relative
    inflation applied to each image box about its own center.
    """

    samples_per_dim: int = 3
    bloat: float = 0.1

    def __post_init__(self):
        if self.samples_per_dim < 2:
            raise ValueError("samples_per_dim must be at least 2")
        if self.bloat < 0:
            raise ValueError("bloat must be nonnegative")


@lru_cache(maxsize=32)
def _unit_grid(n: int, samples_per_dim: int) -> np.ndarray:
    """Fractional sample coordinates in [0, 1]^n including all vertices."""
    axes = [np.linspace(0.0, 1.0, samples_per_dim)] * n
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=-1)


def cell_sample_points(box: Box, samples_per_dim: int) -> np.ndarray:
    """Uniform grid over the box; samples_per_dim^n points, vertices exact."""
    if samples_per_dim < 2:
        raise ValueError("samples_per_dim must be at least 2")
    frac = _unit_grid(box.n, samples_per_dim)
    return box.lo * (1.0 - frac) + box.hi * frac


def _sample_many(lo: np.ndarray, hi: np.ndarray, samples_per_dim: int) -> np.ndarray:
    """Sample grids for a batch of cells: (B, S, n) with S = spd^n."""
    frac = _unit_grid(lo.shape[1], samples_per_dim)
    return lo[:, None, :] * (1.0 - frac[None]) + hi[:, None, :] * frac[None]


def batch_enclosures(model: SystemModel, lo: np.ndarray, hi: np.ndarray,
                     u: np.ndarray, cfg: ImageConfig):
    """Per-cell image enclosures for one input over a batch of cells.

    Returns (enc_lo, enc_hi, valid) where valid marks cells with at least
    one finite mapped sample; enclosures of invalid ("escaped") cells are
    undefined.  Non-finite samples are ignored: they indicate states far
    outside the constraint box, which contribute no intersections.
    """
    nb, n = lo.shape
    pts = _sample_many(lo, hi, cfg.samples_per_dim)
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        mapped = model.map_points(pts.reshape(-1, n), u).reshape(pts.shape)
        finite = np.isfinite(mapped).all(axis=2)
        valid = finite.any(axis=1)
        enc_lo = np.where(finite[:, :, None], mapped, np.inf).min(axis=1)
        enc_hi = np.where(finite[:, :, None], mapped, -np.inf).max(axis=1)
        pad = (0.5 * cfg.bloat) * (enc_hi - enc_lo)
        enc_lo = enc_lo - pad
        enc_hi = enc_hi + pad
    return enc_lo, enc_hi, valid


def cell_image(model: SystemModel, box: Box, u, cfg: ImageConfig) -> Box | None:
    """Enclosure of f(box, u), or None when the image escapes entirely.

    The box is the bounding box of the mapped sample grid inflated by
    ``cfg.bloat`` relative to its own half-widths; it contains every finite
    mapped sample exactly.
    """
    enc_lo, enc_hi, valid = batch_enclosures(
        model, box.lo[None, :], box.hi[None, :], np.asarray(u, dtype=np.float64), cfg
    )
    if not valid[0]:
        return None
    return Box(enc_lo[0], enc_hi[0])


def cell_images(model: SystemModel, box: Box, inputs: InputGrid,
                cfg: ImageConfig) -> list:
    """Per-input enclosures [(u, Box-or-None), ...] preserving input order."""
    return [(u, cell_image(model, box, u, cfg)) for u in inputs]
