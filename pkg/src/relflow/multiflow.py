"""Continuous-time models sampled into fixed-time relations on a grid.

A model answers "where can the box ``box`` be at time ``t``" with a list of
closed convex pieces, each a parallelotope ``origin + frame @ [0, 1]^d``
(an axis-aligned box when ``frame`` is diagonal).  Sampling marks, for each
source cell, the cells those pieces occupy.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import EvaluatorDomain
from .grid import SNAP, CellSet, GridSpace, expand_ranges, interior
from .omega import OmegaReport
from .relation import FiniteRelation, InvarianceReport, compose, image

# ---------------------------------------------------------------------------
# image pieces


@dataclass(frozen=True)
class Pieces:
    """A batch of parallelotopes, each tagged with the query box it came from."""

    owner: np.ndarray
    origin: np.ndarray
    frame: np.ndarray

    def __len__(self) -> int:
        return int(self.owner.size)

    @classmethod
    def empty(cls, dimension: int) -> "Pieces":
        return cls(np.zeros(0, np.int64), np.zeros((0, dimension)), np.zeros((0, dimension, dimension)))

    @classmethod
    def boxes(cls, owner, lo, hi) -> "Pieces":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        k, d = lo.shape
        frame = np.zeros((k, d, d))
        frame[:, np.arange(d), np.arange(d)] = hi - lo
        return cls(np.asarray(owner, dtype=np.int64), lo.copy(), frame)

    @classmethod
    def affine(cls, owner, matrix, offset, lo, hi) -> "Pieces":
        """Images of the boxes ``[lo, hi]`` under ``x -> matrix @ x + offset``."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        matrix = np.asarray(matrix, dtype=float)
        origin = lo @ matrix.T + np.asarray(offset, dtype=float)
        frame = matrix[None, :, :] * (hi - lo)[:, None, :]
        return cls(np.asarray(owner, dtype=np.int64), origin, frame)

    @staticmethod
    def concat(parts: Sequence["Pieces"], dimension: int) -> "Pieces":
        parts = [p for p in parts if len(p)]
        if not parts:
            return Pieces.empty(dimension)
        return Pieces(
            np.concatenate([p.owner for p in parts]),
            np.concatenate([p.origin for p in parts]),
            np.concatenate([p.frame for p in parts]),
        )

    def bounding_boxes(self) -> tuple[np.ndarray, np.ndarray]:
        lo = self.origin + np.minimum(self.frame, 0).sum(axis=2)
        hi = self.origin + np.maximum(self.frame, 0).sum(axis=2)
        return lo, hi

    def skewed(self) -> np.ndarray:
        """Pieces whose frame is not diagonal, i.e. not axis-aligned boxes."""
        d = self.frame.shape[1]
        off = self.frame.copy()
        off[:, np.arange(d), np.arange(d)] = 0
        scale = np.abs(self.frame).max(axis=(1, 2))
        return np.abs(off).max(axis=(1, 2)) > 1e-12 * np.maximum(scale, 1e-300)


def rasterize(space: GridSpace, pieces: Pieces) -> tuple[np.ndarray, np.ndarray]:
    """Cells occupied by each piece, as ``(owner, cell)`` arrays.

    A cell is occupied when its interior meets the piece in a set of positive
    measure, or, along directions in which the piece is flat, when the closed
    sets touch.  This keeps the marking an outer cover of every piece while
    ignoring face contact, so a rigid motion that maps cells onto cells
    yields a one-to-one relation.  Two-dimensional skewed pieces are tested
    exactly with separating axes; in higher dimensions their bounding box is
    used.
    """
    if len(pieces) == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    lo, hi = pieces.bounding_boxes()
    first, last = space.axis_ranges(lo, hi)
    row, cell = expand_ranges(space, first, last)
    if space.dimension == 2 and row.size:
        skew = pieces.skewed()[row]
        if skew.any():
            keep = np.ones(row.size, dtype=bool)
            keep[skew] = _parallelogram_meets_cells(space, pieces, row[skew], cell[skew])
            row, cell = row[keep], cell[keep]
    return pieces.owner[row], cell


def _parallelogram_meets_cells(space, pieces, row, cell) -> np.ndarray:
    c = pieces.origin[row]
    edges = (pieces.frame[row, :, 0], pieces.frame[row, :, 1])
    clo, chi = space.cell_boxes(cell)
    center = (clo + chi) / 2
    half = space.pitch / 2
    ok = np.ones(row.size, dtype=bool)
    tiny = SNAP * space.pitch.min()
    for edge, other in ((edges[0], edges[1]), (edges[1], edges[0])):
        normal = np.stack([-edge[:, 1], edge[:, 0]], axis=1)
        active = np.hypot(normal[:, 0], normal[:, 1]) > tiny
        base = np.einsum("ij,ij->i", c, normal)
        spread = np.einsum("ij,ij->i", other, normal)
        plo = base + np.minimum(spread, 0)
        phi = base + np.maximum(spread, 0)
        mid = np.einsum("ij,ij->i", center, normal)
        reach = np.abs(normal) @ half
        overlap = np.minimum(phi, mid + reach) - np.maximum(plo, mid - reach)
        tol = SNAP * (np.abs(normal) @ space.pitch)
        thick = np.abs(spread) > 2 * tol
        meets = np.where(thick, overlap > tol, overlap >= -tol)
        ok &= meets | ~active
    return ok


# ---------------------------------------------------------------------------
# models

Evaluator = Callable[[float, np.ndarray, np.ndarray], Pieces]


@dataclass(frozen=True)
class MultiflowModel:
    """A set-valued flow given by a box-image evaluator.

    ``evaluator(t, lo, hi)`` receives a batch of boxes (corner arrays of
    shape ``(m, d)``) and returns :class:`Pieces` whose union per box
    contains the reachable set at time ``t``.  ``domain`` restricts the state
    space when the model is only defined on part of it.
    """

    name: str
    dimension: int
    space_hint: tuple[tuple[float, float], ...]
    evaluator: Evaluator = field(repr=False, compare=False)
    exact: bool = True
    description: str = ""
    domain: tuple[tuple[float, float], ...] | None = None
    times: tuple[float, ...] | None = None

    def images(self, t: float, lo, hi) -> Pieces:
        t = float(t)
        if not (math.isfinite(t) and t > 0):
            raise EvaluatorDomain(f"{self.name}: query time must be a positive real, got {t}")
        if self.times is not None and not any(abs(t - s) <= 1e-12 * max(1.0, s) for s in self.times):
            raise EvaluatorDomain(f"{self.name}: defined only at times {list(self.times)}, got {t}")
        lo = np.atleast_2d(np.asarray(lo, dtype=float))
        hi = np.atleast_2d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape or lo.shape[1] != self.dimension:
            raise EvaluatorDomain(f"{self.name}: boxes must have {self.dimension} coordinates")
        if np.any(hi < lo):
            raise EvaluatorDomain(f"{self.name}: box with lower corner above upper corner")
        return self.evaluator(t, lo, hi)

    def evaluate(self, t: float, lo, hi) -> list[tuple[np.ndarray, np.ndarray]]:
        """Pieces ``(origin, frame)`` covering the image of one box."""
        p = self.images(t, np.reshape(lo, (1, -1)), np.reshape(hi, (1, -1)))
        return [(p.origin[k], p.frame[k]) for k in range(len(p))]

    def hint_space(self, resolution) -> GridSpace:
        if isinstance(resolution, int):
            resolution = (resolution,) * self.dimension
        return GridSpace(self.space_hint, resolution)

    def check_space(self, space: GridSpace) -> None:
        if space.dimension != self.dimension:
            raise EvaluatorDomain(f"{self.name} is {self.dimension}-dimensional, grid is {space.dimension}-dimensional")
        if self.domain is not None:
            for (lo, hi), (dlo, dhi) in zip(space.bounds, self.domain):
                if lo < dlo or hi > dhi:
                    raise EvaluatorDomain(f"{self.name} is defined on {list(self.domain)}, grid covers {list(space.bounds)}")


def _sqrt_abs_low(t, x):
    # least point of the reachable set from x; nondecreasing in x
    r = np.sqrt(np.abs(x))
    return np.where(x < -t * t / 4, -(r - t / 2) ** 2, np.where(x <= 0, 0.0, (t / 2 + r) ** 2))


def _sqrt_abs_high(t, x):
    r = np.sqrt(np.abs(x))
    return np.where(x < -t * t / 4, -(r - t / 2) ** 2, np.where(x <= 0, (t / 2 - r) ** 2, (t / 2 + r) ** 2))


def sqrt_abs_point_image(t: float, x: float) -> tuple[float, float]:
    """Reachable interval from ``x`` after time ``t > 0`` under x' = sqrt|x|."""
    return float(_sqrt_abs_low(t, x)), float(_sqrt_abs_high(t, x))


def _sqrt_abs(t, lo, hi):
    # both envelopes are nondecreasing and the graph is connected, so the
    # image of [a, b] is [low(a), high(b)]
    m = lo.shape[0]
    ylo = _sqrt_abs_low(t, lo[:, 0])[:, None]
    yhi = _sqrt_abs_high(t, hi[:, 0])[:, None]
    return Pieces.boxes(np.arange(m), ylo, yhi)


def _filippov_wedge(t, lo, hi):
    # above the axis the field is (1, 1), below it (1, -1); on the axis a
    # solution may slide along it and leave at any moment
    m = lo.shape[0]
    a, b, c, d = lo[:, 0], hi[:, 0], lo[:, 1], hi[:, 1]
    above = c > 0
    below = d < 0
    ylo = np.where(above, c + t, c - t)
    yhi = np.where(below, d - t, d + t)
    return Pieces.boxes(np.arange(m), np.stack([a + t, ylo], 1), np.stack([b + t, yhi], 1))


def _rotation(t, lo, hi):
    c, s = math.cos(t), math.sin(t)
    return Pieces.affine(np.arange(lo.shape[0]), [[c, s], [-s, c]], [0.0, 0.0], lo, hi)


def _spiral_contraction(t, lo, hi):
    c, s, k = math.cos(t), math.sin(t), math.exp(-t)
    return Pieces.affine(np.arange(lo.shape[0]), [[k * c, -k * s], [k * s, k * c]], [0.0, 0.0], lo, hi)


def _restricted_drift(t, lo, hi):
    start = lo[:, 0] + t
    alive = start <= 1.0
    owner = np.flatnonzero(alive)
    top = np.minimum(hi[alive, 0] + t, 1.0)
    return Pieces.boxes(owner, start[alive, None], top[:, None])


def sqrt_abs_model() -> MultiflowModel:
    return MultiflowModel(
        "sqrt-abs", 1, ((-30.0, 40.0),), _sqrt_abs,
        description="x' = sqrt(|x|); solutions may linger at 0 for any length of time",
    )


def filippov_wedge_model() -> MultiflowModel:
    return MultiflowModel(
        "filippov-wedge", 2, ((-4.0, 4.0), (-4.0, 4.0)), _filippov_wedge,
        description="(x', y') = (1, sign(y)) with sliding along the x-axis",
    )


def rotation_model() -> MultiflowModel:
    return MultiflowModel(
        "rotation", 2, ((-5.0, 5.0), (-5.0, 5.0)), _rotation,
        description="clockwise rigid rotation with period 2*pi",
    )


def spiral_contraction_model() -> MultiflowModel:
    return MultiflowModel(
        "spiral-contraction", 2, ((-2.0, 2.0), (-2.0, 2.0)), _spiral_contraction,
        description="counterclockwise rotation combined with the contraction e^-t",
    )


def restricted_drift_model() -> MultiflowModel:
    return MultiflowModel(
        "restricted-drift", 1, ((-1.0, 1.0),), _restricted_drift,
        description="x' = 1 on [-1, 1]; mass that reaches the right end disappears",
        domain=((-1.0, 1.0),),
    )


def builtin_models() -> list[MultiflowModel]:
    return [
        sqrt_abs_model(),
        filippov_wedge_model(),
        rotation_model(),
        spiral_contraction_model(),
        restricted_drift_model(),
    ]


def get_model(name: str) -> MultiflowModel:
    for m in builtin_models():
        if m.name == name:
            return m
    raise KeyError(f"no built-in model named {name!r}; known: {[m.name for m in builtin_models()]}")


# ---------------------------------------------------------------------------
# piecewise-affine tables


@dataclass(frozen=True)
class AffineBranch:
    lo: np.ndarray
    hi: np.ndarray
    matrix: np.ndarray
    offset: np.ndarray
    radius: float


def parse_affine_table(text: str, name: str = "custom") -> MultiflowModel:
    """Build a model from a piecewise-affine table.

    Format (``#`` starts a comment, blank lines are ignored)::

        dimension 2
        time 1.0              # following branches describe the map at t = 1
        branch
          domain -1 0  -1 1   # lo hi per axis
          matrix 0.5 0  0 0.5 # row-major d x d
          offset 0 0
          radius 0.01         # optional enclosure fattening, default 0
        end

    A query box is cut by every branch domain it meets; each part is mapped
    affinely.  A positive radius replaces the part's image by its bounding
    box grown by the radius.  Queries at times without a ``time`` section are
    rejected.
    """
    dim = None
    sections: dict[float, list[AffineBranch]] = {}
    current_time = None
    branch = None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *vals = line.split()
        try:
            nums = [float(v) for v in vals]
        except ValueError as exc:
            raise ValueError(f"line {n}: {exc}") from None
        if key == "dimension":
            dim = int(nums[0])
        elif key == "time":
            if len(nums) != 1 or nums[0] <= 0:
                raise ValueError(f"line {n}: time needs one positive value")
            current_time = nums[0]
            sections.setdefault(current_time, [])
        elif key == "branch":
            if dim is None or current_time is None:
                raise ValueError(f"line {n}: 'dimension' and 'time' must precede branches")
            branch = {"radius": 0.0}
        elif key == "end":
            if branch is None or not {"domain", "matrix", "offset"} <= set(branch):
                raise ValueError(f"line {n}: branch needs domain, matrix and offset")
            dom = np.array(branch["domain"]).reshape(dim, 2)
            sections[current_time].append(AffineBranch(
                dom[:, 0], dom[:, 1],
                np.array(branch["matrix"]).reshape(dim, dim),
                np.array(branch["offset"]).reshape(dim),
                float(branch["radius"]),
            ))
            branch = None
        elif branch is not None and key in ("domain", "matrix", "offset", "radius"):
            sizes = {"domain": 2 * dim, "matrix": dim * dim, "offset": dim, "radius": 1}
            if len(nums) != sizes[key]:
                raise ValueError(f"line {n}: {key} needs {sizes[key]} numbers, got {len(nums)}")
            branch[key] = nums if key != "radius" else nums[0]
        else:
            raise ValueError(f"line {n}: unexpected {key!r}")
    if branch is not None:
        raise ValueError("unterminated branch at end of table")
    if dim is None or not sections:
        raise ValueError("table defines no branches")

    def evaluate(t, lo, hi):
        key = min(sections, key=lambda s: abs(s - t))
        parts = []
        for br in sections[key]:
            plo = np.maximum(lo, br.lo)
            phi = np.minimum(hi, br.hi)
            hit = np.flatnonzero(np.all(plo <= phi, axis=1))
            if not hit.size:
                continue
            piece = Pieces.affine(hit, br.matrix, br.offset, plo[hit], phi[hit])
            if br.radius > 0:
                blo, bhi = piece.bounding_boxes()
                piece = Pieces.boxes(hit, blo - br.radius, bhi + br.radius)
            parts.append(piece)
        return Pieces.concat(parts, dim)

    every = [b for bs in sections.values() for b in bs]
    hint = tuple(
        (float(min(b.lo[a] for b in every)), float(max(b.hi[a] for b in every))) for a in range(dim)
    )
    return MultiflowModel(
        name, dim, hint, evaluate, exact=all(b.radius == 0 for b in every),
        description="piecewise-affine table", times=tuple(sorted(sections)),
    )


# ---------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class TimeGrid:
    """Sample times for "for all t" checks.

    ``threshold_T`` splits the samples: certification checks every sample up
    to it, and "eventually" verdicts require the property at every sample
    from it on.  Without a threshold certification uses all samples and
    eventual verdicts start at half the largest sample.
    """

    samples: tuple[float, ...]
    threshold_T: float | None = None

    def __post_init__(self):
        samples = tuple(float(s) for s in self.samples)
        if not samples:
            raise ValueError("a time grid needs at least one sample")
        if any(not (math.isfinite(s) and s > 0) for s in samples):
            raise ValueError("sample times must be positive reals")
        if any(b <= a for a, b in zip(samples, samples[1:])):
            raise ValueError("sample times must be strictly increasing")
        if self.threshold_T is not None:
            T = float(self.threshold_T)
            if not T > 0 or T > samples[-1]:
                raise ValueError("threshold_T must lie in (0, max sample]")
            object.__setattr__(self, "threshold_T", T)
        object.__setattr__(self, "samples", samples)

    @classmethod
    def uniform(cls, t_max: float, count: int, threshold_T: float | None = None) -> "TimeGrid":
        """``count`` equally spaced samples ending at ``t_max``."""
        return cls(tuple(t_max * k / count for k in range(1, count + 1)), threshold_T)

    @property
    def eventual_from(self) -> float:
        return self.threshold_T if self.threshold_T is not None else self.samples[-1] / 2

    @property
    def window(self) -> tuple[float, ...]:
        """Samples in ``(0, threshold_T]`` (all samples without a threshold)."""
        if self.threshold_T is None:
            return self.samples
        return tuple(s for s in self.samples if s <= self.threshold_T * (1 + 1e-12))

    @property
    def representative(self) -> float:
        return self.window[-1]

    def to_dict(self) -> dict:
        return {"samples": list(self.samples), "threshold_T": self.threshold_T}


def _mark(model: MultiflowModel, space: GridSpace, t: float, cells: np.ndarray):
    model.check_space(space)
    lo, hi = space.cell_boxes(cells)
    owner, target = rasterize(space, model.images(t, lo, hi))
    return cells[owner], target


def sample_relation(model: MultiflowModel, space: GridSpace, t: float, sources: CellSet | None = None) -> FiniteRelation:
    """Cell relation covering the model's time-``t`` map.

    Parts of an image outside the grid are dropped.  ``sources`` limits the
    rows that are computed.
    """
    cells = np.arange(space.n_cells) if sources is None else sources.indices()
    src, dst = _mark(model, space, t, cells)
    return FiniteRelation(space, src, dst)


def sample_image(model: MultiflowModel, space: GridSpace, t: float, S: CellSet) -> CellSet:
    """Cells met by the time-``t`` image of the cells of ``S``."""
    _, dst = _mark(model, space, t, S.indices())
    mask = np.zeros(space.n_cells, dtype=bool)
    mask[dst] = True
    return CellSet(space, mask)


def _map_times(fn, times, threads: int):
    if threads and threads > 1 and len(times) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, times))
    return [fn(t) for t in times]


@dataclass(frozen=True)
class SemigroupReport:
    """Comparison of a composed pair of samples with the direct sample."""

    s: float
    t: float
    contained: bool
    direct_pairs: int
    composed_pairs: int
    n_violations: int
    violations: list[tuple[int, int]]
    excess_pairs: int | None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def check_semigroup(model: MultiflowModel, space: GridSpace, s: float, t: float) -> SemigroupReport:
    """Check that sampling at ``s`` and ``t`` then composing covers time ``s + t``."""
    if not (s > 0 and t > 0):
        raise ValueError("s and t must be positive")
    composed = compose(sample_relation(model, space, s), sample_relation(model, space, t))
    direct = sample_relation(model, space, s + t)
    missing = direct - composed
    return SemigroupReport(
        s=float(s), t=float(t),
        contained=len(missing) == 0,
        direct_pairs=len(direct),
        composed_pairs=len(composed),
        n_violations=len(missing),
        violations=missing.pairs()[:16],
        excess_pairs=len(composed - direct) if model.exact else None,
    )


# ---------------------------------------------------------------------------
# invariance over sampled times


def _eventual(flags: Sequence[bool], times: Sequence[float], start: float) -> float | None:
    """Least sample from which every later flag holds, if all flags from ``start`` hold."""
    if not all(f for f, t in zip(flags, times) if t >= start * (1 - 1e-12)):
        return None
    least = None
    for f, t in zip(reversed(flags), reversed(times)):
        if not f:
            break
        least = t
    return least


@dataclass(frozen=True)
class MultiflowInvarianceReport(InvarianceReport):
    """Invariance flags that must hold at every sampled time.

    ``failures`` maps each flag to the sample times at which it failed.
    """

    times: tuple[float, ...] = ()
    failures: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["times"] = list(self.times)
        return d


_FLAGS = ("confining", "rejecting", "backward_complete", "forward_complete",
          "invariant", "star_invariant", "strict_confining")


def classify_multiflow(
    model: MultiflowModel, space: GridSpace, S: CellSet, times: TimeGrid, threads: int = 1
) -> MultiflowInvarianceReport:
    """Per-time invariance flags of ``S``, combined over all samples."""
    inner = interior(S)

    def one(t):
        rel = sample_relation(model, space, t)
        img = image(rel, S)
        back = image(rel.transposed, S)
        conf, bc = img <= S, S <= img
        rej, fc = back <= S, S <= back
        return {
            "confining": conf, "rejecting": rej, "backward_complete": bc,
            "forward_complete": fc, "invariant": conf and bc,
            "star_invariant": rej and fc, "strict_confining": img <= inner,
        }

    per_time = _map_times(one, times.samples, threads)
    failures = {k: [t for t, r in zip(times.samples, per_time) if not r[k]] for k in _FLAGS}
    flags = {k: not failures[k] for k in _FLAGS}
    start = times.eventual_from
    return MultiflowInvarianceReport(
        **flags,
        eventually_confining_at=_eventual([r["confining"] for r in per_time], times.samples, start),
        eventually_strictly_confining_at=_eventual(
            [r["strict_confining"] for r in per_time], times.samples, start),
        horizon=times.samples[-1],
        exact=False,
        times=times.samples,
        failures={k: v for k, v in failures.items() if v},
    )


def eventually_confining(model: MultiflowModel, space: GridSpace, U: CellSet, times: TimeGrid, threads: int = 1):
    """Whether the sampled images of ``U`` from ``times.eventual_from`` on stay in ``U``.

    Returns ``(verdict, least_time)``.
    """
    flags = _map_times(lambda t: sample_image(model, space, t, U) <= U, times.samples, threads)
    at = _eventual(flags, times.samples, times.eventual_from)
    return at is not None, at


def confining_hull_multiflow(
    model: MultiflowModel, space: GridSpace, S: CellSet, times: TimeGrid, max_rounds: int = 10_000
) -> CellSet:
    """Least superset of ``S`` confining for every sampled relation."""
    hull = S
    frontier = S
    for _ in range(max_rounds):
        if not frontier:
            return hull
        grown = space.empty()
        for t in times.samples:
            grown = grown | sample_image(model, space, t, frontier)
        frontier = grown - hull
        hull = hull | frontier
    raise RuntimeError("confining hull did not close within the round limit")


# ---------------------------------------------------------------------------
# omega limit sets


def fixed_time_omega(
    model: MultiflowModel, space: GridSpace, U: CellSet, t: float, max_iter: int = 256, confirm: int = 2
) -> OmegaReport:
    """Limit set of the images of ``U`` at times ``t, 2t, 3t, ...``.

    Each image is sampled straight from the model at time ``n t`` instead of
    iterating the cell relation: the flow property makes the two equal for
    the true dynamics, and direct sampling does not accumulate the cell
    rounding that repeated outer approximation does.  The sequence is taken
    to be periodic once a repetition has been confirmed over ``confirm``
    further periods.  If ``max_iter`` is reached first, the union of the
    second half of the computed images is returned with ``converged=False``.
    """
    seq = [U]
    seen: dict[CellSet, list[int]] = {U: [0]}
    cand = None
    for n in range(1, max_iter + 1):
        S = sample_image(model, space, n * t, U)
        seq.append(S)
        if cand is not None and S != seq[n - cand[1]]:
            cand = None
        if cand is None and S in seen:
            m = seen[S][-1]
            cand = (m, n - m)
        seen.setdefault(S, []).append(n)
        if cand is not None and n >= cand[0] + (confirm + 1) * cand[1]:
            mu, lam = cand
            mask = np.zeros(space.n_cells, dtype=bool)
            for A in seq[mu:mu + lam]:
                mask |= A.mask
            lim = CellSet(space, mask)
            return OmegaReport(lim, lim, True, mu, lam)
    tail = seq[max_iter // 2:]
    mask = np.zeros(space.n_cells, dtype=bool)
    for A in tail:
        mask |= A.mask
    lim = CellSet(space, mask)
    return OmegaReport(lim, lim, True, max_iter // 2, len(tail), converged=False)


@dataclass(frozen=True)
class MultiflowOmegaReport:
    """Limit sets of ``U`` under a sampled multiflow.

    ``omega`` is the headline result: the common per-time limit set when
    ``U`` is eventually confining, otherwise ``flow_strict_omega``, the
    sampled version of the intersection over start times of the closed
    unions of all later images.  ``per_time`` holds the fixed-time limit set
    for each requested time.
    """

    omega: CellSet
    flow_strict_omega: CellSet
    eventually_confining: bool
    eventually_confining_at: float | None
    per_time: dict
    cross_time_equal: bool
    times: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "omega": self.omega.indices().tolist(),
            "flow_strict_omega": self.flow_strict_omega.indices().tolist(),
            "eventually_confining": self.eventually_confining,
            "eventually_confining_at": self.eventually_confining_at,
            "cross_time_equal": self.cross_time_equal,
            "times": list(self.times),
            "per_time": {repr(t): r.to_dict() for t, r in self.per_time.items()},
        }


def omega_multiflow(
    model: MultiflowModel,
    space: GridSpace,
    U: CellSet,
    times: TimeGrid,
    omega_times: Sequence[float] | None = None,
    max_iter: int = 256,
    threads: int = 1,
) -> MultiflowOmegaReport:
    """Limit sets of ``U``: per fixed time and for the whole sampled flow.

    ``omega_times`` selects the fixed times for the per-time breakdown
    (default: every sample).
    """
    images = _map_times(lambda t: sample_image(model, space, t, U), times.samples, threads)
    start = times.eventual_from
    flags = [A <= U for A in images]
    at = _eventual(flags, times.samples, start)
    # tail unions shrink as the start index grows, so the intersection over
    # start indices up to the threshold is the tail union from the last one
    m = max([k for k, t in enumerate(times.samples) if t <= start * (1 + 1e-12)], default=0)
    mask = np.zeros(space.n_cells, dtype=bool)
    for A in images[m:]:
        mask |= A.mask
    flow_strict = CellSet(space, mask)

    chosen = list(times.samples if omega_times is None else omega_times)
    reports = _map_times(lambda t: fixed_time_omega(model, space, U, t, max_iter=max_iter), chosen, threads)
    per_time = dict(zip(chosen, reports))
    limits = [r.omega for r in reports]
    equal = all(L == limits[0] for L in limits)
    if at is not None:
        rep = max([t for t in chosen if t <= start * (1 + 1e-12)], default=chosen[0])
        headline = per_time[rep].omega
    else:
        headline = flow_strict
    return MultiflowOmegaReport(
        omega=headline,
        flow_strict_omega=flow_strict,
        eventually_confining=at is not None,
        eventually_confining_at=at,
        per_time=per_time,
        cross_time_equal=equal,
        times=times.samples,
    )
