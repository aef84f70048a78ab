"""Finite relations on grid cells and their invariance classification."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Mapping

import numpy as np
from scipy import sparse

from .grid import CellSet, GridSpace, interior

_MAGIC = b"RELF1\0"


class FiniteRelation:
    """A set of (source cell, target cell) pairs, sorted and deduplicated.

    Rows are stored CSR style (``indptr`` over sources); the transpose is
    built once on first use and cached.
    """

    __slots__ = ("space", "src", "dst", "__dict__")

    def __init__(self, space: GridSpace, src, dst):
        src = np.asarray(src, dtype=np.int64).reshape(-1)
        dst = np.asarray(dst, dtype=np.int64).reshape(-1)
        if src.shape != dst.shape:
            raise ValueError("source and target arrays differ in length")
        n = space.n_cells
        if src.size and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= n):
            raise IndexError("relation pair refers to a cell outside the grid")
        keys = np.unique(src * n + dst)
        src, dst = np.divmod(keys, n)
        src.flags.writeable = False
        dst.flags.writeable = False
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)

    def __setattr__(self, name, value):
        raise AttributeError("FiniteRelation is immutable")

    # construction

    @classmethod
    def from_pairs(cls, space: GridSpace, pairs: Iterable[tuple[int, int]]) -> "FiniteRelation":
        arr = np.array(list(pairs), dtype=np.int64).reshape(-1, 2)
        return cls(space, arr[:, 0], arr[:, 1])

    @classmethod
    def from_rows(cls, space: GridSpace, rows: Mapping[int, Iterable[int]]) -> "FiniteRelation":
        return cls.from_pairs(space, [(x, y) for x, ys in rows.items() for y in ys])

    @classmethod
    def identity(cls, space: GridSpace) -> "FiniteRelation":
        cells = np.arange(space.n_cells)
        return cls(space, cells, cells)

    @classmethod
    def empty(cls, space: GridSpace) -> "FiniteRelation":
        return cls(space, [], [])

    @classmethod
    def product(cls, A: CellSet, B: CellSet) -> "FiniteRelation":
        """All pairs in ``A × B``."""
        a, b = A.indices(), B.indices()
        return cls(A.space, np.repeat(a, b.size), np.tile(b, a.size))

    @classmethod
    def from_box_products(cls, space: GridSpace, products) -> "FiniteRelation":
        """Cell pairs covering a union of products ``box_x × box_y``.

        ``products`` is a list of ``((lo_x, hi_x), (lo_y, hi_y))``; each factor
        is rasterized with :meth:`CellSet.from_boxes`.
        """
        rel = cls.empty(space)
        for src_box, dst_box in products:
            A = CellSet.from_boxes(space, [src_box])
            B = CellSet.from_boxes(space, [dst_box])
            rel = rel | cls.product(A, B)
        return rel

    # protocol

    def __len__(self) -> int:
        return int(self.src.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FiniteRelation):
            return NotImplemented
        return (
            self.space == other.space
            and np.array_equal(self.src, other.src)
            and np.array_equal(self.dst, other.dst)
        )

    def __hash__(self) -> int:
        return hash((self.space, self.keys.tobytes()))

    def __repr__(self) -> str:
        return f"FiniteRelation({len(self)} pairs on {self.space.n_cells} cells)"

    def __contains__(self, pair) -> bool:
        x, y = pair
        lo, hi = self.indptr[x], self.indptr[x + 1]
        row = self.dst[lo:hi]
        k = np.searchsorted(row, y)
        return bool(k < row.size and row[k] == y)

    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.src.tolist(), self.dst.tolist()))

    @cached_property
    def keys(self) -> np.ndarray:
        return self.src * self.space.n_cells + self.dst

    @cached_property
    def indptr(self) -> np.ndarray:
        return np.searchsorted(self.src, np.arange(self.space.n_cells + 1))

    def row(self, x: int) -> np.ndarray:
        return self.dst[self.indptr[x]:self.indptr[x + 1]]

    def row_set(self, x: int) -> CellSet:
        return CellSet.from_indices(self.space, self.row(x))

    @cached_property
    def transposed(self) -> "FiniteRelation":
        return FiniteRelation(self.space, self.dst, self.src)

    def matrix(self) -> sparse.csr_matrix:
        n = self.space.n_cells
        data = np.ones(len(self), dtype=np.int32)
        return sparse.csr_matrix((data, (self.src, self.dst)), shape=(n, n))

    def _same(self, other: "FiniteRelation") -> None:
        if other.space != self.space:
            raise ValueError("relations live on different grids")

    # set operations on pairs

    def __or__(self, other: "FiniteRelation") -> "FiniteRelation":
        self._same(other)
        return FiniteRelation(
            self.space, np.concatenate([self.src, other.src]), np.concatenate([self.dst, other.dst])
        )

    def __and__(self, other: "FiniteRelation") -> "FiniteRelation":
        self._same(other)
        keep = np.isin(self.keys, other.keys, assume_unique=True)
        return FiniteRelation(self.space, self.src[keep], self.dst[keep])

    def __sub__(self, other: "FiniteRelation") -> "FiniteRelation":
        self._same(other)
        keep = ~np.isin(self.keys, other.keys, assume_unique=True)
        return FiniteRelation(self.space, self.src[keep], self.dst[keep])

    def __le__(self, other: "FiniteRelation") -> bool:
        self._same(other)
        return bool(np.isin(self.keys, other.keys, assume_unique=True).all())

    def __ge__(self, other: "FiniteRelation") -> bool:
        return other <= self

    def issubset(self, other: "FiniteRelation") -> bool:
        return self <= other

    def restrict(self, sources: CellSet) -> "FiniteRelation":
        """The rows of ``self`` whose source lies in ``sources``."""
        keep = sources.mask[self.src]
        return FiniteRelation(self.space, self.src[keep], self.dst[keep])

    def select(self, keep: np.ndarray) -> "FiniteRelation":
        """Sub-relation of the pairs flagged in the bool array ``keep``."""
        return FiniteRelation(self.space, self.src[keep], self.dst[keep])

    # serialization

    def to_text(self) -> str:
        return "".join(f"{x} {y}\n" for x, y in zip(self.src.tolist(), self.dst.tolist()))

    @classmethod
    def from_text(cls, space: GridSpace, text: str) -> "FiniteRelation":
        pairs = []
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"line {n}: expected 'source target', got {line!r}")
            pairs.append((int(parts[0]), int(parts[1])))
        return cls.from_pairs(space, pairs)

    def to_bytes(self) -> bytes:
        header = _MAGIC + struct.pack("<QQ", self.space.n_cells, len(self))
        body = np.stack([self.src, self.dst], axis=1).astype("<i8").tobytes()
        return header + body

    @classmethod
    def from_bytes(cls, space: GridSpace, data: bytes) -> "FiniteRelation":
        if not data.startswith(_MAGIC):
            raise ValueError("not a serialized relation")
        off = len(_MAGIC)
        n_cells, n_pairs = struct.unpack_from("<QQ", data, off)
        if n_cells != space.n_cells:
            raise ValueError(f"relation was written for {n_cells} cells, grid has {space.n_cells}")
        arr = np.frombuffer(data, dtype="<i8", count=2 * n_pairs, offset=off + 16).reshape(-1, 2)
        return cls(space, arr[:, 0], arr[:, 1])


def image(f: FiniteRelation, S: CellSet) -> CellSet:
    """Targets of the pairs whose source lies in ``S``."""
    if S.space != f.space:
        raise ValueError("relation and cell set live on different grids")
    out = np.zeros(f.space.n_cells, dtype=bool)
    out[f.dst[S.mask[f.src]]] = True
    return CellSet(f.space, out)


def transpose(f: FiniteRelation) -> FiniteRelation:
    return f.transposed


def inverse_image(f: FiniteRelation, S: CellSet) -> CellSet:
    """Cells whose whole image lies in ``S``; cells with empty image qualify."""
    if S.space != f.space:
        raise ValueError("relation and cell set live on different grids")
    escapes = np.zeros(f.space.n_cells, dtype=bool)
    escapes[f.src[~S.mask[f.dst]]] = True
    return CellSet(f.space, ~escapes)


def compose(f: FiniteRelation, g: FiniteRelation) -> FiniteRelation:
    """``f ∘ g``: pairs (x, z) with (x, y) in g and (y, z) in f for some y."""
    f._same(g)
    prod = (g.matrix() @ f.matrix()).tocoo()
    return FiniteRelation(f.space, prod.row, prod.col)


def iterate(f: FiniteRelation, n: int) -> FiniteRelation:
    """The ``n``-fold composition of ``f``; ``n = 0`` gives the identity."""
    if n < 0:
        raise ValueError("iteration count must be nonnegative")
    result = FiniteRelation.identity(f.space)
    power = f
    while n:
        if n & 1:
            result = compose(power, result)
        n >>= 1
        if n:
            power = compose(power, power)
    return result


@dataclass(frozen=True)
class ImageOrbit:
    """The eventually periodic sequence S, f(S), f²(S), ...

    ``sets[mu:mu + period]`` is the cycle.  When ``period`` is ``None`` the
    step cap was reached before any repetition.
    """

    sets: tuple[CellSet, ...]
    transient: int
    period: int | None

    @property
    def cycle(self) -> tuple[CellSet, ...]:
        if self.period is None:
            return ()
        return self.sets[self.transient:self.transient + self.period]

    def at(self, n: int) -> CellSet:
        if n < len(self.sets):
            return self.sets[n]
        if self.period is None:
            raise IndexError(f"term {n} lies beyond the computed prefix")
        return self.sets[self.transient + (n - self.transient) % self.period]


def image_orbit(step: Callable[[CellSet], CellSet], start: CellSet, max_steps: int | None = None) -> ImageOrbit:
    """Iterate ``step`` from ``start`` until a set repeats (hash-based)."""
    seen: dict[CellSet, int] = {start: 0}
    sets = [start]
    current = start
    limit = max_steps if max_steps is not None else 1 << 62
    for n in range(1, limit + 1):
        current = step(current)
        first = seen.get(current)
        if first is not None:
            return ImageOrbit(tuple(sets), first, n - first)
        seen[current] = n
        sets.append(current)
    return ImageOrbit(tuple(sets), len(sets), None)


@dataclass(frozen=True)
class InvarianceReport:
    """Invariance flags of a set under a relation (or sampled multiflow).

    The ``eventually_*`` fields hold the least iterate (for a relation) or the
    least sampled time (for a multiflow) from which the property persists,
    or ``None``.  ``horizon`` is the iterate or time bound the verdict rests
    on; ``exact`` is true when the image sequence was followed into its cycle,
    which makes the eventual verdicts hold for every n, not just up to the
    horizon.
    """

    confining: bool
    rejecting: bool
    backward_complete: bool
    forward_complete: bool
    invariant: bool
    star_invariant: bool
    strict_confining: bool
    eventually_confining_at: float | None
    eventually_strictly_confining_at: float | None
    horizon: float
    exact: bool = True

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _persist_from(flags: list[bool], cyclic_from: int | None) -> int | None:
    """Least n >= 1 with flags[m] true for all m >= n.

    ``flags[n]`` describes term n; when ``cyclic_from`` is set the terms from
    there on repeat forever, so all of them must hold.
    """
    n = len(flags)
    if n <= 1:
        return None
    if cyclic_from is not None and not all(flags[max(cyclic_from, 1):]):
        return None
    least = None
    for k in range(n - 1, 0, -1):
        if not flags[k]:
            break
        least = k
    return least


def classify(f: FiniteRelation, S: CellSet, horizon: int | None = None) -> InvarianceReport:
    """Compare ``S`` with its image and transpose image under ``f``.

    The eventual verdicts follow ``fⁿ(S)`` for ``n = 1..horizon`` (default:
    number of cells + 1) and stop early once the sequence repeats.
    """
    if horizon is None:
        horizon = f.space.n_cells + 1
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    img = image(f, S)
    back = image(f.transposed, S)
    inner = interior(S)
    orbit = image_orbit(lambda A: image(f, A), S, max_steps=horizon)
    exact = orbit.period is not None
    if exact:
        # one extra period so every cycle member appears at some n >= 1
        terms = [orbit.at(n) for n in range(len(orbit.sets) + orbit.period)]
    else:
        terms = list(orbit.sets)
    cyclic_from = orbit.transient if exact else None
    conf_flags = [T <= S for T in terms]
    strict_flags = [T <= inner for T in terms]
    confining = img <= S
    backward_complete = S <= img
    rejecting = back <= S
    forward_complete = S <= back
    return InvarianceReport(
        confining=confining,
        rejecting=rejecting,
        backward_complete=backward_complete,
        forward_complete=forward_complete,
        invariant=confining and backward_complete,
        star_invariant=rejecting and forward_complete,
        strict_confining=img <= inner,
        eventually_confining_at=_persist_from(conf_flags, cyclic_from),
        eventually_strictly_confining_at=_persist_from(strict_flags, cyclic_from),
        horizon=horizon,
        exact=exact,
    )
