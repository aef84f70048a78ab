"""Robustness of attractor blocks under perturbation of the relation.

Distances between pairs are distances between product boxes in X × X,
measured with the euclidean or the chebyshev product metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attractor import describe_pair, is_attractor_block
from .errors import EmptyOperand, NotABlock, SamplingInconsistency
from .grid import CellSet, GridSpace, box_gap_transform, check_metric, closure_of_complement, set_distance
from .relation import FiniteRelation, image

# product grids up to this many pairs are handled with dense transforms
DENSE_PAIR_LIMIT = 1 << 22

# relative slack when comparing a computed distance with a requested radius
RADIUS_RTOL = 1e-12


def _combine(a: np.ndarray, b: np.ndarray, metric: str) -> np.ndarray:
    return np.hypot(a, b) if metric == "euclidean" else np.maximum(a, b)


def _cell_gaps(S: CellSet, metric: str) -> np.ndarray:
    return box_gap_transform(S.grid(), S.space.pitch, metric).reshape(-1)


def _product_layout(f: FiniteRelation):
    space = f.space
    shape = space.shape + space.shape
    pitch = np.concatenate([space.pitch, space.pitch])
    return shape, pitch


def _pair_mask(f: FiniteRelation) -> np.ndarray:
    shape, _ = _product_layout(f)
    mask = np.zeros(f.space.n_cells ** 2, dtype=bool)
    mask[f.keys] = True
    return mask.reshape(shape)


def _dense(f: FiniteRelation) -> bool:
    return f.space.n_cells ** 2 <= DENSE_PAIR_LIMIT


def _axis_gaps(space, a_idx, b_idx) -> np.ndarray:
    """Per-axis box gaps between cells ``a_idx[i]`` and ``b_idx[j]``, shape (i, j, d)."""
    am = np.stack(np.unravel_index(a_idx, space.shape), axis=-1)
    bm = np.stack(np.unravel_index(b_idx, space.shape), axis=-1)
    steps = np.abs(am[:, None, :] - bm[None, :, :]) - 1
    return np.maximum(steps, 0) * space.pitch


def _pair_distances(g: FiniteRelation, f: FiniteRelation, metric: str, chunk: int = 2048) -> np.ndarray:
    """For each pair of ``g``, the distance to the nearest pair of ``f``."""
    if _dense(f):
        _, pitch = _product_layout(f)
        gaps = box_gap_transform(_pair_mask(f), pitch, metric).reshape(-1)
        return gaps[g.keys]
    out = np.empty(len(g))
    for start in range(0, len(g), chunk):
        gs, gd = g.src[start:start + chunk], g.dst[start:start + chunk]
        best = np.full(gs.size, np.inf)
        for fstart in range(0, len(f), chunk):
            fs, fd = f.src[fstart:fstart + chunk], f.dst[fstart:fstart + chunk]
            gx = _axis_gaps(g.space, gs, fs)
            gy = _axis_gaps(g.space, gd, fd)
            both = np.concatenate([gx, gy], axis=2)
            d = np.sqrt((both ** 2).sum(axis=2)) if metric == "euclidean" else both.max(axis=2)
            best = np.minimum(best, d.min(axis=1))
        out[start:start + chunk] = best
    return out


@dataclass(frozen=True)
class RobustnessReport:
    """How far the relation can move before the block may break.

    ``delta_graph`` is the distance from the relation to ``B × cl(Bᶜ)``;
    ``delta_image`` is the distance from the image of the block to ``cl(Bᶜ)``,
    the tempting but unsound alternative.
    """

    delta_graph: float
    delta_image: float
    epsilon_tested: list[tuple[float, bool]] = field(default_factory=list)
    metric: str = "euclidean"

    def to_dict(self) -> dict:
        return {
            "delta_graph": self.delta_graph,
            "delta_image": self.delta_image,
            "epsilon_tested": [[e, b] for e, b in self.epsilon_tested],
            "metric": self.metric,
        }


def robustness_radius(f: FiniteRelation, B: CellSet, metric: str = "euclidean", epsilons=()) -> RobustnessReport:
    """Distances that bound how much ``f`` may be fattened.

    ``epsilons`` optionally lists radii to test directly by fattening ``f``.
    An infinite distance means there is nothing to stay away from.
    """
    check_metric(metric)
    verdict = is_attractor_block(f, B)
    if not verdict:
        raise NotABlock("the cell set is not an attractor block for the relation", verdict.witnesses)
    C = closure_of_complement(B)
    if not C or len(f) == 0:
        delta_graph = float("inf")
    else:
        # B × C is a product set, so the distance splits per factor
        d = _combine(_cell_gaps(B, metric)[f.src], _cell_gaps(C, metric)[f.dst], metric)
        delta_graph = float(d.min())
    img = image(f, B)
    delta_image = set_distance(img, C, metric) if img and C else float("inf")
    tested = [(float(e), is_attractor_block(fatten(f, e, metric), B).is_block) for e in epsilons]
    return RobustnessReport(delta_graph, delta_image, tested, metric)


def fatten(f: FiniteRelation, epsilon: float, metric: str = "euclidean") -> FiniteRelation:
    """All cell pairs whose product box lies within ``epsilon`` of a pair of ``f``."""
    check_metric(metric)
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if len(f) == 0:
        return f
    limit = epsilon * (1 + RADIUS_RTOL)
    # the stencil costs one offset block per pair, the dense transform one
    # pass over the whole product grid
    if _dense(f) and len(f) * _stencil_size(f.space, limit) > f.space.n_cells ** 2:
        _, pitch = _product_layout(f)
        gaps = box_gap_transform(_pair_mask(f), pitch, metric).reshape(-1)
        src, dst = np.divmod(np.flatnonzero(gaps <= limit), f.space.n_cells)
        return FiniteRelation(f.space, src, dst)
    return _fatten_by_stencil(f, limit, metric)


def _stencil_size(space: GridSpace, limit: float) -> int:
    reach = np.floor(limit / np.asarray(space.pitch)).astype(int) + 1
    return int(np.prod(2 * reach + 1)) ** 2


def _fatten_by_stencil(f: FiniteRelation, limit: float, metric: str, chunk: int = 256) -> FiniteRelation:
    # per-axis dilation: offsets k with gap (|k| - 1)^+ * pitch within the
    # radius, combined over the 2d product axes, then filtered by the metric
    space = f.space
    pitch = np.concatenate([space.pitch, space.pitch])
    axes = []
    for w in pitch:
        reach = int(np.floor(limit / w)) + 1
        k = np.arange(-reach, reach + 1)
        axes.append(k)
    grids = np.meshgrid(*axes, indexing="ij")
    offs = np.stack([g.ravel() for g in grids], axis=-1)
    gaps = np.maximum(np.abs(offs) - 1, 0) * pitch
    dist = np.sqrt((gaps ** 2).sum(axis=1)) if metric == "euclidean" else gaps.max(axis=1)
    offs = offs[dist <= limit]
    d = space.dimension
    shape = np.array(space.shape + space.shape)
    base = np.concatenate([
        np.stack(np.unravel_index(f.src, space.shape), axis=-1),
        np.stack(np.unravel_index(f.dst, space.shape), axis=-1),
    ], axis=1)
    found = []
    for start in range(0, len(base), chunk):
        cand = base[start:start + chunk, None, :] + offs[None, :, :]
        cand = cand.reshape(-1, 2 * d)
        cand = cand[np.all((cand >= 0) & (cand < shape), axis=1)]
        src = np.ravel_multi_index(tuple(cand[:, :d].T), space.shape)
        dst = np.ravel_multi_index(tuple(cand[:, d:].T), space.shape)
        found.append(np.unique(src * space.n_cells + dst))
    keys = np.unique(np.concatenate(found))
    src, dst = np.divmod(keys, space.n_cells)
    return FiniteRelation(space, src, dst)


def one_sided_hausdorff(g: FiniteRelation, f: FiniteRelation, metric: str = "euclidean") -> float:
    """Least ``ε`` with every pair of ``g`` inside the closed ``ε``-fattening of ``f``."""
    check_metric(metric)
    if g.space != f.space:
        raise ValueError("relations live on different grids")
    if len(g) == 0:
        return 0.0
    if len(f) == 0:
        raise EmptyOperand("distance from a nonempty relation to the empty relation is infinite")
    return float(_pair_distances(g, f, metric).max())


@dataclass(frozen=True)
class ContinuationVerdict:
    """Whether ``B`` stays a block for ``g``, and whether that was guaranteed.

    ``status`` is ``"guaranteed"`` when ``g`` lies closer to ``f`` than the
    robustness radius, ``"unguaranteed-pass"`` when it is farther but ``B``
    still passes, and ``"fail"`` otherwise.
    """

    status: str
    epsilon: float
    delta: float
    is_block: bool
    witnesses: list[dict]
    metric: str

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def continuation_check(f: FiniteRelation, B: CellSet, g: FiniteRelation, metric: str = "euclidean") -> ContinuationVerdict:
    delta = robustness_radius(f, B, metric).delta_graph
    eps = one_sided_hausdorff(g, f, metric)
    verdict = is_attractor_block(g, B)
    witnesses = [describe_pair(f.space, x, y) for x, y in verdict.witnesses]
    if eps < delta:
        if not verdict:
            raise SamplingInconsistency(
                f"relation within {eps} < {delta} of f breaks the block: {witnesses}"
            )
        status = "guaranteed"
    else:
        status = "unguaranteed-pass" if verdict else "fail"
    return ContinuationVerdict(status, eps, delta, verdict.is_block, witnesses, metric)
