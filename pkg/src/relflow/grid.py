"""Uniform cubical grids over a compact box and subsets of their cells.

Cells are closed boxes indexed in C order (the first axis varies slowest),
so the flat index order coincides with lexicographic order of the per-axis
indices.  Closure and interior are combinatorial: two cells are neighbours
when their closed boxes intersect, diagonals included.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import ndimage

from .errors import EmptyOperand, PointOutOfBounds

METRICS = ("euclidean", "chebyshev")

# Fraction of a cell pitch below which an overlap counts as mere contact.
SNAP = 1e-9


def check_metric(metric: str) -> str:
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    return metric


@dataclass(frozen=True)
class GridSpace:
    """A compact box split into ``resolution[a]`` equal cells along axis ``a``."""

    bounds: tuple[tuple[float, float], ...]
    resolution: tuple[int, ...]

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        resolution = tuple(int(n) for n in self.resolution)
        if not bounds:
            raise ValueError("a grid needs at least one axis")
        if len(bounds) != len(resolution):
            raise ValueError("bounds and resolution have different lengths")
        for lo, hi in bounds:
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"invalid axis bounds ({lo}, {hi})")
        if any(n < 1 for n in resolution):
            raise ValueError("cell counts must be positive")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "resolution", resolution)

    @property
    def dimension(self) -> int:
        return len(self.resolution)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.resolution

    @cached_property
    def n_cells(self) -> int:
        return int(np.prod(self.resolution, dtype=np.int64))

    @cached_property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.bounds])

    @cached_property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.bounds])

    @cached_property
    def pitch(self) -> np.ndarray:
        return (self.upper - self.lower) / np.array(self.resolution)

    def edges(self, axis: int) -> np.ndarray:
        lo, hi = self.bounds[axis]
        n = self.resolution[axis]
        return lo + (hi - lo) * np.arange(n + 1) / n

    def multi_index(self, index: int) -> tuple[int, ...]:
        self._check_index(index)
        return tuple(int(k) for k in np.unravel_index(index, self.resolution))

    def flat_index(self, multi: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(multi), self.resolution))

    def _check_index(self, index: int) -> None:
        if not 0 <= index < self.n_cells:
            raise IndexError(f"cell {index} outside 0..{self.n_cells - 1}")

    def cell_box(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.cell_boxes(np.array([index]))
        return lo[0], hi[0]

    def cell_boxes(self, indices=None) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper corners, shape ``(m, d)``, of the given cells."""
        if indices is None:
            indices = np.arange(self.n_cells)
        indices = np.asarray(indices, dtype=np.int64)
        multi = np.stack(np.unravel_index(indices, self.resolution), axis=-1)
        lo = np.empty(multi.shape)
        hi = np.empty(multi.shape)
        for a in range(self.dimension):
            e = self.edges(a)
            lo[:, a] = e[multi[:, a]]
            hi[:, a] = e[multi[:, a] + 1]
        return lo, hi

    def center_of(self, index: int) -> np.ndarray:
        self._check_index(index)
        lo, hi = self.cell_box(index)
        return (lo + hi) / 2

    def centers(self, indices=None) -> np.ndarray:
        lo, hi = self.cell_boxes(indices)
        return (lo + hi) / 2

    def cell_of(self, point) -> int:
        """Index of a cell containing ``point``; ties go to the smallest index."""
        return int(self.cells_of(np.asarray(point, dtype=float).reshape(1, -1))[0])

    def cells_of(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.dimension:
            raise ValueError(f"expected points of shape (m, {self.dimension})")
        outside = (pts < self.lower) | (pts > self.upper) | ~np.isfinite(pts)
        if outside.any():
            bad = pts[outside.any(axis=1)][0]
            raise PointOutOfBounds(f"point {bad.tolist()} lies outside {list(self.bounds)}")
        multi = []
        for a in range(self.dimension):
            e = self.edges(a)
            # first edge >= p, minus one, picks the lower cell on shared faces
            k = np.searchsorted(e, pts[:, a], side="left") - 1
            multi.append(np.clip(k, 0, self.resolution[a] - 1))
        return np.ravel_multi_index(tuple(multi), self.resolution)

    def axis_ranges(self, lo, hi) -> tuple[np.ndarray, np.ndarray]:
        """Per-axis inclusive index ranges of cells met by closed boxes.

        ``lo`` and ``hi`` have shape ``(m, d)``.  Along an axis where a box has
        positive extent a cell counts only if the overlap has positive length
        (contact through a face is ignored); along a degenerate axis closed
        contact counts.  Both tests absorb rounding of ``SNAP`` cell pitches.
        Ranges are clipped to the grid; an empty range has ``first > last``.
        """
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        low = self.lower
        up = self.upper
        ulo = (np.clip(lo, low, up) - low) / self.pitch
        uhi = (np.clip(hi, low, up) - low) / self.pitch
        outside = (hi < low - SNAP * self.pitch) | (lo > up + SNAP * self.pitch)
        thick = (uhi - ulo) > 2 * SNAP
        first = np.where(thick, np.floor(ulo + SNAP), np.ceil(ulo - SNAP) - 1)
        last = np.where(thick, np.ceil(uhi - SNAP) - 1, np.floor(uhi + SNAP))
        res = np.array(self.resolution)
        first = np.clip(first, 0, res - 1).astype(np.int64)
        last = np.clip(last, 0, res - 1).astype(np.int64)
        last = np.where(outside, first - 1, last)
        return first, last

    def full(self) -> "CellSet":
        return CellSet(self, np.ones(self.n_cells, dtype=bool))

    def empty(self) -> "CellSet":
        return CellSet(self, np.zeros(self.n_cells, dtype=bool))

    def to_dict(self) -> dict:
        return {"bounds": [list(b) for b in self.bounds], "resolution": list(self.resolution)}


def expand_ranges(space: GridSpace, first: np.ndarray, last: np.ndarray):
    """Enumerate the cells of per-row axis ranges.

    Returns ``(row, cell)`` arrays listing every cell in the product of the
    ranges of each row of ``first``/``last``.
    """
    lengths = np.maximum(last - first + 1, 0)
    counts = np.prod(lengths, axis=1)
    total = int(counts.sum())
    row = np.repeat(np.arange(len(counts)), counts)
    if total == 0:
        return row, np.zeros(0, dtype=np.int64)
    start = np.cumsum(counts) - counts
    local = np.arange(total) - np.repeat(start, counts)
    multi = []
    for a in reversed(range(space.dimension)):
        n_a = lengths[row, a]
        multi.append(first[row, a] + local % n_a)
        local = local // n_a
    multi.reverse()
    return row, np.ravel_multi_index(tuple(multi), space.resolution)


class CellSet:
    """An immutable subset of the cells of a GridSpace, held as a bool mask."""

    __slots__ = ("space", "mask", "_hash")

    def __init__(self, space: GridSpace, mask):
        mask = np.array(mask, dtype=bool).reshape(-1)
        if mask.size != space.n_cells:
            raise ValueError(f"mask has {mask.size} entries, grid has {space.n_cells} cells")
        mask.flags.writeable = False
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "_hash", None)

    def __setattr__(self, name, value):
        raise AttributeError("CellSet is immutable")

    # construction

    @classmethod
    def from_indices(cls, space: GridSpace, indices: Iterable[int]) -> "CellSet":
        idx = np.fromiter((int(i) for i in indices), dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= space.n_cells):
            raise IndexError("cell index outside the grid")
        mask = np.zeros(space.n_cells, dtype=bool)
        mask[idx] = True
        return cls(space, mask)

    @classmethod
    def from_boxes(cls, space: GridSpace, boxes) -> "CellSet":
        """Cells meeting a union of closed boxes ``[(lo, hi), ...]``.

        Uses the overlap rule of :meth:`GridSpace.axis_ranges`, so a box whose
        faces sit on grid lines covers exactly the cells inside it.
        """
        boxes = list(boxes)
        mask = np.zeros(space.n_cells, dtype=bool)
        if boxes:
            lo = np.array([np.atleast_1d(np.asarray(b[0], dtype=float)) for b in boxes])
            hi = np.array([np.atleast_1d(np.asarray(b[1], dtype=float)) for b in boxes])
            if lo.shape[1] != space.dimension or np.any(hi < lo):
                raise ValueError("boxes must have shape (d,) corners with lo <= hi")
            _, cells = expand_ranges(space, *space.axis_ranges(lo, hi))
            mask[cells] = True
        return cls(space, mask)

    @classmethod
    def from_predicate(
        cls,
        space: GridSpace,
        predicate: Callable[[np.ndarray], np.ndarray],
        supersample: int = 1,
    ) -> "CellSet":
        """Cells with at least one sample point satisfying ``predicate``.

        ``predicate`` maps an ``(m, d)`` array of points to ``m`` booleans.  With
        ``supersample = k`` each cell is probed at the centres of a ``k**d``
        sub-grid; ``k = 1`` probes the cell centre only.
        """
        k = int(supersample)
        if k < 1:
            raise ValueError("supersample must be positive")
        centers = space.centers()
        offsets = (np.arange(k) + 0.5) / k - 0.5
        grids = np.meshgrid(*([offsets] * space.dimension), indexing="ij")
        shifts = np.stack([g.ravel() for g in grids], axis=-1) * space.pitch
        mask = np.zeros(space.n_cells, dtype=bool)
        for shift in shifts:
            mask |= np.asarray(predicate(centers + shift), dtype=bool)
        return cls(space, mask)

    # basic protocol

    def _same(self, other: "CellSet") -> None:
        if not isinstance(other, CellSet):
            raise TypeError(f"expected CellSet, got {type(other).__name__}")
        if other.space != self.space:
            raise ValueError("cell sets live on different grids")

    def __len__(self) -> int:
        return int(np.count_nonzero(self.mask))

    def __bool__(self) -> bool:
        return bool(self.mask.any())

    def __iter__(self):
        return iter(self.indices().tolist())

    def __contains__(self, index) -> bool:
        return 0 <= index < self.space.n_cells and bool(self.mask[index])

    def __eq__(self, other) -> bool:
        if not isinstance(other, CellSet):
            return NotImplemented
        return self.space == other.space and np.array_equal(self.mask, other.mask)

    def __hash__(self) -> int:
        if self._hash is None:
            object.__setattr__(self, "_hash", hash((self.space, self.mask.tobytes())))
        return self._hash

    def __repr__(self) -> str:
        idx = self.indices()
        shown = ", ".join(map(str, idx[:8].tolist())) + (", ..." if idx.size > 8 else "")
        return f"CellSet({len(idx)} of {self.space.n_cells} cells: [{shown}])"

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def grid(self) -> np.ndarray:
        """The mask reshaped to the grid's axis layout."""
        return self.mask.reshape(self.space.shape)

    # Boolean algebra

    def __or__(self, other):
        self._same(other)
        return CellSet(self.space, self.mask | other.mask)

    def __and__(self, other):
        self._same(other)
        return CellSet(self.space, self.mask & other.mask)

    def __sub__(self, other):
        self._same(other)
        return CellSet(self.space, self.mask & ~other.mask)

    def __xor__(self, other):
        self._same(other)
        return CellSet(self.space, self.mask ^ other.mask)

    def __invert__(self):
        return CellSet(self.space, ~self.mask)

    def complement(self) -> "CellSet":
        return ~self

    def __le__(self, other) -> bool:
        self._same(other)
        return not bool(np.any(self.mask & ~other.mask))

    def __ge__(self, other) -> bool:
        return other <= self

    def __lt__(self, other) -> bool:
        return self <= other and self != other

    def __gt__(self, other) -> bool:
        return other < self

    def issubset(self, other) -> bool:
        return self <= other

    union = __or__
    intersection = __and__
    difference = __sub__

    # topology

    def interior(self) -> "CellSet":
        return interior(self)

    def closure_of_complement(self) -> "CellSet":
        return closure_of_complement(self)

    def neighbourhood(self) -> "CellSet":
        """Cells whose boxes meet the box union of this set."""
        return CellSet(self.space, dilate(self.grid()))


def _cube(ndim: int) -> np.ndarray:
    return np.ones((3,) * ndim, dtype=bool)


def dilate(mask_nd: np.ndarray) -> np.ndarray:
    """Cells touching a marked cell (Chebyshev radius one in index space)."""
    if not mask_nd.any():
        return np.zeros_like(mask_nd, dtype=bool)
    return ndimage.binary_dilation(mask_nd, structure=_cube(mask_nd.ndim))


def interior(S: CellSet) -> CellSet:
    """Cells of ``S`` whose every neighbour lies in ``S``.

    Neighbours outside the grid do not exist, so the full space is its own
    interior.
    """
    eroded = ndimage.binary_erosion(S.grid(), structure=_cube(S.space.dimension), border_value=1)
    return CellSet(S.space, eroded)


def closure_of_complement(S: CellSet) -> CellSet:
    return ~interior(S)


def box_gap_transform(mask_nd: np.ndarray, pitch, metric: str = "euclidean") -> np.ndarray:
    """Distance from every cell's box to the union of the marked cells' boxes.

    Works on any uniform grid given as an n-d mask with per-axis ``pitch``.
    The gap between two cells along an axis is ``max(0, |di| - 1) * pitch``,
    which equals the centre distance from the far cell to the nearest cell
    adjacent to the marked set; that turns the exact box distance into a
    plain distance transform.  Returns ``inf`` everywhere for an empty mask.
    """
    check_metric(metric)
    mask_nd = np.asarray(mask_nd, dtype=bool)
    pitch = np.broadcast_to(np.asarray(pitch, dtype=float), (mask_nd.ndim,))
    if not mask_nd.any():
        return np.full(mask_nd.shape, np.inf)
    touching = dilate(mask_nd)
    if touching.all():
        return np.zeros(mask_nd.shape)
    if metric == "euclidean":
        return ndimage.distance_transform_edt(~touching, sampling=pitch)
    if np.all(pitch == pitch[0]):
        steps = ndimage.distance_transform_cdt(~touching, metric="chessboard")
        return steps.astype(float) * pitch[0]
    return _chebyshev_scan(touching, pitch)


def _chebyshev_scan(touching: np.ndarray, pitch: np.ndarray, chunk: int = 4096) -> np.ndarray:
    # anisotropic chessboard distance: brute force against the boundary of
    # the touching set, which is where every minimum is attained
    inner = ndimage.binary_erosion(touching, structure=_cube(touching.ndim), border_value=1)
    sources = np.argwhere(touching & ~inner)
    targets = np.argwhere(~touching)
    out = np.zeros(touching.shape)
    for start in range(0, len(targets), chunk):
        block = targets[start:start + chunk]
        gaps = np.abs(block[:, None, :] - sources[None, :, :]) * pitch
        out[tuple(block.T)] = gaps.max(axis=2).min(axis=1)
    return out


def set_distance(S: CellSet, T: CellSet, metric: str = "euclidean") -> float:
    """Exact minimum distance between the box unions of two cell sets."""
    S._same(T)
    if not S or not T:
        raise EmptyOperand("set_distance needs two nonempty cell sets")
    gaps = box_gap_transform(T.grid(), S.space.pitch, metric)
    return float(gaps[S.grid()].min())


def cell_of(space: GridSpace, point) -> int:
    return space.cell_of(point)
