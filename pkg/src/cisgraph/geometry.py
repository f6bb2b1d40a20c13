"""Axis-aligned boxes, dyadic cells, coverings and the spatial index.

A covering is a finite collection of boxes obtained from a root box by
repeated midpoint splits.  Every cell is identified by its split path from
the root, which makes cell identity exact and gives a canonical, spatially
coherent ordering (the dyadic curve order) that the rest of the package
relies on for determinism.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import total_ordering
from typing import IO, NamedTuple, Sequence

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "Box",
    "CellId",
    "Covering",
    "SpatialIndex",
    "KnnResult",
    "subdivide_cell",
    "enlarge",
    "vertices",
    "query_intersecting",
    "knn_centers",
    "write_cells_file",
    "read_cells_file",
]

MAX_DEPTH = 62  # split-path bits must fit an int64


@dataclass(frozen=True, eq=False)
class Box:
    """Closed axis-aligned box given by lower and upper corner vectors."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=np.float64))
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("box bounds must be 1-D arrays of equal length")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def n(self) -> int:
        return self.lo.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def half_widths(self) -> np.ndarray:
        return 0.5 * (self.hi - self.lo)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def contains_point(self, point) -> bool:
        p = np.asarray(point, dtype=np.float64)
        return bool(np.all(p >= self.lo) and np.all(p <= self.hi))

    def intersects(self, other: "Box") -> bool:
        return bool(np.all(self.lo <= other.hi) and np.all(other.lo <= self.hi))

    def __eq__(self, other):
        if not isinstance(other, Box):
            return NotImplemented
        return np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)

    def __hash__(self):
        return hash((self.lo.tobytes(), self.hi.tobytes()))

    def __repr__(self):
        return f"Box({self.lo.tolist()}, {self.hi.tolist()})"


@total_ordering
@dataclass(frozen=True)
class CellId:
    """Identity of a cell: the sequence of binary split choices from the root.

    ``bits`` packs the choices with the first split in the most significant
    position.  Ordering is the lexicographic order of the path strings, which
    coincides with dyadic-fraction order and is used everywhere a
    deterministic cell order is required.
    """

    depth: int
    bits: int

    def __post_init__(self):
        if not 0 <= self.depth <= MAX_DEPTH:
            raise ValueError(f"depth must be in [0, {MAX_DEPTH}]")
        if not 0 <= self.bits < max(1 << self.depth, 1):
            raise ValueError("bits out of range for depth")

    @property
    def path(self) -> str:
        return format(self.bits, f"0{self.depth}b") if self.depth else ""

    @classmethod
    def root(cls) -> "CellId":
        return cls(0, 0)

    @classmethod
    def from_path(cls, path: str) -> "CellId":
        if path in ("", "-"):
            return cls(0, 0)
        if set(path) - {"0", "1"}:
            raise ValueError(f"invalid cell path {path!r}")
        return cls(len(path), int(path, 2))

    def child(self, bit: int) -> "CellId":
        return CellId(self.depth + 1, (self.bits << 1) | (bit & 1))

    def parent(self) -> "CellId":
        if self.depth == 0:
            raise ValueError("root cell has no parent")
        return CellId(self.depth - 1, self.bits >> 1)

    def _key(self, align: int):
        return (self.bits << (align - self.depth), self.depth)

    def __lt__(self, other: "CellId"):
        if not isinstance(other, CellId):
            return NotImplemented
        align = max(self.depth, other.depth)
        return self._key(align) < other._key(align)

    def __repr__(self):
        return f"CellId({self.path!r})"


def subdivide_cell(cid: CellId, box: Box, axis: int):
    """Split a cell at the midpoint of the given axis into its two children.

    Returns ``((id0, box0), (id1, box1))`` where child 0 keeps the lower
    half.  The midpoint is computed once so both children share the exact
    same boundary value.
    """
    if not 0 <= axis < box.n:
        raise ValueError(f"axis {axis} out of range for dimension {box.n}")
    mid = 0.5 * (box.lo[axis] + box.hi[axis])
    lo0, hi0 = box.lo.copy(), box.hi.copy()
    lo1, hi1 = box.lo.copy(), box.hi.copy()
    hi0[axis] = mid
    lo1[axis] = mid
    return (cid.child(0), Box(lo0, hi0)), (cid.child(1), Box(lo1, hi1))


def enlarge(box: Box, delta: float) -> Box:
    """Scale each half-width by (1 + delta) about the box center.

    Uses the additive form lo - delta*hw so that delta = 0 is the exact
    identity.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    pad = delta * box.half_widths
    return Box(box.lo - pad, box.hi + pad)


def vertices(box: Box) -> np.ndarray:
    """All 2^n corner points, lexicographic over (lo, hi) choices per axis.

    Axis 0 is the most significant choice: for the unit square the order is
    (lo,lo), (lo,hi), (hi,lo), (hi,hi).
    """
    n = box.n
    out = np.empty((1 << n, n), dtype=np.float64)
    for i in range(1 << n):
        for d in range(n):
            take_hi = (i >> (n - 1 - d)) & 1
            out[i, d] = box.hi[d] if take_hi else box.lo[d]
    return out


def _order_keys(depths: np.ndarray, bits: np.ndarray):
    """Sort keys realizing the CellId (path lexicographic) order."""
    primary = (bits.astype(np.uint64)) << (np.uint64(MAX_DEPTH + 1) - depths.astype(np.uint64))
    return primary, depths


def _boxes_from_paths(root: Box, depths: np.ndarray, bits: np.ndarray):
    """Reconstruct cell boxes by replaying the midpoint splits from the root."""
    l = len(depths)
    n = root.n
    lo = np.tile(root.lo, (l, 1))
    hi = np.tile(root.hi, (l, 1))
    if l == 0:
        return lo, hi
    for level in range(int(depths.max())):
        active = depths > level
        if not active.any():
            break
        ax = level % n
        idx = np.nonzero(active)[0]
        mid = 0.5 * (lo[idx, ax] + hi[idx, ax])
        take_hi = (bits[idx] >> (depths[idx] - level - 1).astype(np.int64)) & 1
        hi[idx, ax] = np.where(take_hi == 0, mid, hi[idx, ax])
        lo[idx, ax] = np.where(take_hi == 1, mid, lo[idx, ax])
    return lo, hi


class Covering:
    """A collection of disjoint dyadic cells of a common root box.

    Cells are stored in parallel arrays sorted in canonical CellId order.
    The covering is immutable; subdivision and retention return new
    coverings.
    """

    def __init__(self, root: Box, depths, bits, lo, hi, _sorted=False):
        self.root = root
        depths = np.asarray(depths, dtype=np.int64)
        bits = np.asarray(bits, dtype=np.int64)
        lo = np.asarray(lo, dtype=np.float64).reshape(len(depths), root.n)
        hi = np.asarray(hi, dtype=np.float64).reshape(len(depths), root.n)
        if not _sorted and len(depths) > 1:
            primary, secondary = _order_keys(depths, bits)
            order = np.lexsort((secondary, primary))
            depths, bits, lo, hi = depths[order], bits[order], lo[order], hi[order]
            dup = (np.diff(primary[order]) == 0) & (np.diff(secondary[order]) == 0)
            if dup.any():
                raise ValueError("duplicate cells in covering")
        self.depths = depths
        self.bits = bits
        self.lo = lo
        self.hi = hi
        self._index_map = None

    # -- construction -------------------------------------------------

    @classmethod
    def initial(cls, root: Box) -> "Covering":
        return cls(root, [0], [0], [root.lo], [root.hi], _sorted=True)

    @classmethod
    def from_paths(cls, root: Box, paths: Sequence[str]) -> "Covering":
        depths = np.array([0 if p in ("", "-") else len(p) for p in paths], dtype=np.int64)
        bits = np.array(
            [0 if p in ("", "-") else int(p, 2) for p in paths], dtype=np.int64
        )
        lo, hi = _boxes_from_paths(root, depths, bits)
        return cls(root, depths, bits, lo, hi)

    # -- basics ---------------------------------------------------------

    def __len__(self) -> int:
        return len(self.depths)

    @property
    def n(self) -> int:
        return self.root.n

    def cell_id_at(self, i: int) -> CellId:
        return CellId(int(self.depths[i]), int(self.bits[i]))

    def cell_ids(self) -> list[CellId]:
        return [CellId(int(d), int(b)) for d, b in zip(self.depths, self.bits)]

    def paths(self) -> list[str]:
        return [
            format(int(b), f"0{int(d)}b") if d else "-"
            for d, b in zip(self.depths, self.bits)
        ]

    def box_at(self, i: int) -> Box:
        return Box(self.lo[i], self.hi[i])

    def index_of(self, cid: CellId) -> int:
        if self._index_map is None:
            self._index_map = {
                (int(d), int(b)): i for i, (d, b) in enumerate(zip(self.depths, self.bits))
            }
        try:
            return self._index_map[(cid.depth, cid.bits)]
        except KeyError:
            raise KeyError(f"cell {cid!r} not in covering") from None

    def __contains__(self, cid: CellId) -> bool:
        try:
            self.index_of(cid)
            return True
        except KeyError:
            return False

    def centers(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def cell_volumes(self) -> np.ndarray:
        return np.prod(self.hi - self.lo, axis=1)

    def volume(self) -> float:
        return float(self.cell_volumes().sum())

    def diameter(self) -> float:
        """Largest cell diameter (Euclidean norm of hi - lo); 0 when empty."""
        if len(self) == 0:
            return 0.0
        return float(np.sqrt(((self.hi - self.lo) ** 2).sum(axis=1)).max())

    # -- refinement and retention ----------------------------------------

    def _selection_mask(self, selection) -> np.ndarray:
        if selection is None:
            return np.ones(len(self), dtype=bool)
        if isinstance(selection, np.ndarray) and selection.dtype == bool:
            if selection.shape != (len(self),):
                raise ValueError("selection mask has wrong length")
            return selection
        items = list(selection)
        mask = np.zeros(len(self), dtype=bool)
        if items and isinstance(items[0], CellId):
            idx = [self.index_of(c) for c in items]
        else:
            idx = [int(i) for i in items]
        mask[idx] = True
        return mask

    def subdivide(self, selection=None) -> "Covering":
        """Split the selected cells once along axis = depth mod n.

        ``selection`` is a boolean mask, an index array, an iterable of
        CellId, or None for all cells.  Unselected cells carry over.
        """
        mask = self._selection_mask(selection)
        if int(self.depths.max(initial=0)) + 1 > MAX_DEPTH:
            raise ValueError("maximum subdivision depth exceeded")
        sel = np.nonzero(mask)[0]
        keep = np.nonzero(~mask)[0]
        n = self.n
        ax = (self.depths[sel] % n).astype(np.int64)
        lo_s, hi_s = self.lo[sel], self.hi[sel]
        rows = np.arange(len(sel))
        mid = 0.5 * (lo_s[rows, ax] + hi_s[rows, ax])
        lo0, hi0 = lo_s.copy(), hi_s.copy()
        lo1, hi1 = lo_s.copy(), hi_s.copy()
        hi0[rows, ax] = mid
        lo1[rows, ax] = mid
        d_child = self.depths[sel] + 1
        b0 = self.bits[sel] << 1
        b1 = b0 | 1
        return Covering(
            self.root,
            np.concatenate([self.depths[keep], d_child, d_child]),
            np.concatenate([self.bits[keep], b0, b1]),
            np.concatenate([self.lo[keep], lo0, lo1]),
            np.concatenate([self.hi[keep], hi0, hi1]),
        )

    def retain(self, keep) -> "Covering":
        """Restrict the covering to the kept cells (mask, indices or CellIds)."""
        mask = self._selection_mask(keep)
        idx = np.nonzero(mask)[0]
        return Covering(
            self.root,
            self.depths[idx],
            self.bits[idx],
            self.lo[idx],
            self.hi[idx],
            _sorted=True,
        )

    # -- derived structures ----------------------------------------------

    def build_index(self, fanout: int = 16) -> "SpatialIndex":
        return SpatialIndex(self.lo, self.hi, labels=_CellIdSeq(self), fanout=fanout)

    def verify_reconstruction(self) -> bool:
        """Replaying the recorded paths must reproduce the stored boxes exactly."""
        lo, hi = _boxes_from_paths(self.root, self.depths, self.bits)
        return np.array_equal(lo, self.lo) and np.array_equal(hi, self.hi)


class _CellIdSeq:
    """Lazy sequence view of a covering's CellIds (ascending order)."""

    def __init__(self, covering: Covering):
        self._cov = covering

    def __len__(self):
        return len(self._cov)

    def __getitem__(self, i):
        return self._cov.cell_id_at(i)


class KnnResult(NamedTuple):
    cells: list
    clamped: bool


class SpatialIndex:
    """Bulk-loaded balanced box tree with batched intersection queries.

    The tree packs consecutive runs of ``fanout`` boxes (in the order the
    boxes are supplied, which for coverings is the spatially coherent dyadic
    order) and stores one bounding-box array per level.  It is immutable and
    safe for concurrent reads; coverings rebuild it once per iteration.
    """

    def __init__(self, lo, hi, labels=None, fanout: int = 16):
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        if lo.ndim != 2 or lo.shape != hi.shape:
            raise ValueError("index expects (l, n) bound arrays")
        if fanout < 2:
            raise ValueError("fanout must be at least 2")
        self.fanout = fanout
        self.lo = lo
        self.hi = hi
        self.labels = labels
        # Block layout: node j's children are exactly block j one tier down,
        # padded with never-matching sentinel boxes, so the descent is pure
        # gather + compare with no bounds masking.
        self._blocks = []  # list of (lo_blocks, hi_blocks), each (B, F, n)
        if len(lo):
            cur_lo, cur_hi = lo, hi
            while True:
                blk_lo = self._pad_blocks(cur_lo, np.inf)
                blk_hi = self._pad_blocks(cur_hi, -np.inf)
                self._blocks.append((blk_lo, blk_hi))
                if len(blk_lo) == 1:
                    break
                cur_lo = blk_lo.min(axis=1)
                cur_hi = blk_hi.max(axis=1)
        self._tree = None

    def _pad_blocks(self, bounds: np.ndarray, fill: float) -> np.ndarray:
        f = self.fanout
        m, n = bounds.shape
        nblocks = -(-m // f)
        out = np.full((nblocks * f, n), fill, dtype=np.float64)
        out[:m] = bounds
        return out.reshape(nblocks, f, n)

    @property
    def size(self) -> int:
        return len(self.lo)

    def _center_tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(0.5 * (self.lo + self.hi))
        return self._tree

    # -- intersection queries ---------------------------------------------

    def query_boxes(self, qlo, qhi, chunk: int = 1 << 18):
        """All (query, cell) pairs whose closed boxes intersect.

        Returns integer arrays (query_idx, cell_idx) sorted by query then
        cell index.
        """
        qlo = np.atleast_2d(np.asarray(qlo, dtype=np.float64))
        qhi = np.atleast_2d(np.asarray(qhi, dtype=np.float64))
        nq = len(qlo)
        if self.size == 0 or nq == 0:
            return (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
        out_q, out_c = [], []
        for start in range(0, nq, chunk):
            q, c = self._query_chunk(qlo[start : start + chunk], qhi[start : start + chunk])
            out_q.append(q + start)
            out_c.append(c)
        return np.concatenate(out_q), np.concatenate(out_c)

    def _query_chunk(self, qlo, qhi):
        n = qlo.shape[1]
        f = self.fanout
        qi = np.arange(len(qlo), dtype=np.int64)
        nodes = np.zeros(len(qlo), dtype=np.int64)
        for blk_lo, blk_hi in reversed(self._blocks):
            b_lo = blk_lo[nodes]
            b_hi = blk_hi[nodes]
            hit = (qlo[qi, 0, None] <= b_hi[:, :, 0]) & (b_lo[:, :, 0] <= qhi[qi, 0, None])
            for d in range(1, n):
                hit &= (qlo[qi, d, None] <= b_hi[:, :, d]) & (
                    b_lo[:, :, d] <= qhi[qi, d, None]
                )
            rows, cols = np.nonzero(hit)
            qi = qi[rows]
            nodes = nodes[rows] * f + cols
        return qi, nodes

    def query_points(self, points, chunk: int = 1 << 18):
        """(point, cell) pairs where the point lies in the closed cell box."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return self.query_boxes(pts, pts, chunk=chunk)

    def query_box(self, box: Box) -> np.ndarray:
        """Indices of cells intersecting the box, ascending."""
        _, c = self.query_boxes(box.lo[None, :], box.hi[None, :])
        return c

    # -- nearest neighbours -------------------------------------------------

    def knn_indices(self, point, k: int, exclude_point: bool = True):
        """Indices of the k cells with nearest centers, deterministic ties.

        Ties are broken by ascending cell index, which for coverings is
        ascending CellId.  A cell whose center equals the query point exactly
        is excluded when ``exclude_point``.  Returns (indices, clamped).
        """
        res = self.knn_indices_many(np.asarray(point, dtype=np.float64)[None, :], k, exclude_point)
        return res[0]

    def knn_indices_many(self, points, k: int, exclude_point: bool = True):
        if k < 0:
            raise ValueError("k must be nonnegative")
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        l = self.size
        results = []
        if l == 0 or k == 0:
            return [(np.empty(0, dtype=np.int64), k > 0 and l == 0) for _ in pts]
        tree = self._center_tree()
        centers = 0.5 * (self.lo + self.hi)
        kq = min(l, k + 2)
        dists, _ = tree.query(pts, k=kq)
        dists = np.asarray(dists, dtype=np.float64).reshape(len(pts), kq)
        radii = dists[:, -1] * (1.0 + 1e-9) + 1e-300
        balls = tree.query_ball_point(pts, radii)
        for p, cand in zip(pts, balls):
            cand = np.sort(np.asarray(cand, dtype=np.int64))
            if kq == l:
                cand = np.arange(l, dtype=np.int64)
            d = np.sqrt(((centers[cand] - p) ** 2).sum(axis=1))
            if exclude_point:
                same = np.all(centers[cand] == p, axis=1)
                cand, d = cand[~same], d[~same]
            order = np.lexsort((cand, d))
            clamped = k > len(cand)
            results.append((cand[order][: min(k, len(cand))], clamped))
        return results


def query_intersecting(index: SpatialIndex, box: Box) -> list:
    """Cells of the indexed covering whose closed boxes intersect ``box``."""
    idx = index.query_box(box)
    if index.labels is None:
        return [int(i) for i in idx]
    return [index.labels[int(i)] for i in idx]


def knn_centers(index: SpatialIndex, point, n_neighbors: int) -> KnnResult:
    """The n cells with centers nearest to ``point`` (ties by ascending id).

    The cell whose center equals the query point, if present, is excluded.
    If fewer than n other cells exist, all of them are returned and the
    result is flagged as clamped.
    """
    idx, clamped = index.knn_indices(point, n_neighbors)
    if index.labels is None:
        return KnnResult([int(i) for i in idx], clamped)
    return KnnResult([index.labels[int(i)] for i in idx], clamped)


# -- cells file -------------------------------------------------------------

CELL_STATUSES = ("retained", "boundary", "interior")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_cells_file(covering: Covering, fp: IO[str], status=None) -> None:
    """Write the covering as delimited text, one row per cell.

    Columns: path, depth, lo per dimension, hi per dimension, status.  The
    root box is recorded in the first header line; floats use 17 significant
    digits so the file round-trips exactly.  The root cell's empty path is
    rendered as ``-``.
    """
    n = covering.n
    if status is None:
        status = ["retained"] * len(covering)
    root = covering.root
    fp.write(
        "# root "
        + " ".join(_fmt(v) for v in root.lo)
        + " "
        + " ".join(_fmt(v) for v in root.hi)
        + "\n"
    )
    cols = (
        ["path", "depth"]
        + [f"lo{d}" for d in range(n)]
        + [f"hi{d}" for d in range(n)]
        + ["status"]
    )
    fp.write("# " + " ".join(cols) + "\n")
    paths = covering.paths()
    for i in range(len(covering)):
        row = [paths[i], str(int(covering.depths[i]))]
        row += [_fmt(v) for v in covering.lo[i]]
        row += [_fmt(v) for v in covering.hi[i]]
        row.append(status[i])
        fp.write(" ".join(row) + "\n")


def read_cells_file(fp: IO[str]):
    """Read a cells file; returns (covering, status list).

    Boxes are reconstructed from the recorded paths and verified against the
    stored coordinates bit for bit.
    """
    root = None
    paths, depths, los, his, status = [], [], [], [], []
    n = None
    for line in fp:
        line = line.strip()
        if not line:
            continue
        if line.startswith("# root "):
            vals = [float(v) for v in line[len("# root ") :].split()]
            n = len(vals) // 2
            root = Box(np.array(vals[:n]), np.array(vals[n:]))
            continue
        if line.startswith("#"):
            continue
        parts = line.split()
        if root is None:
            raise ValueError("cells file has no root header line")
        path, depth = parts[0], int(parts[1])
        lo = [float(v) for v in parts[2 : 2 + n]]
        hi = [float(v) for v in parts[2 + n : 2 + 2 * n]]
        paths.append(path)
        depths.append(depth)
        los.append(lo)
        his.append(hi)
        status.append(parts[2 + 2 * n])
    if root is None:
        raise ValueError("cells file has no root header line")
    depths = np.asarray(depths, dtype=np.int64)
    bits = np.array(
        [0 if p == "-" else int(p, 2) for p in paths], dtype=np.int64
    )
    cov = Covering(root, depths, bits, np.array(los).reshape(len(paths), n),
                   np.array(his).reshape(len(paths), n))
    if not cov.verify_reconstruction():
        raise ValueError("cells file boxes do not match their recorded paths")
    order_status = status
    if len(paths) > 1:
        primary, secondary = _order_keys(
            np.asarray(depths), np.asarray(bits)
        )
        order = np.lexsort((secondary, primary))
        order_status = [status[i] for i in order]
    return cov, order_status
