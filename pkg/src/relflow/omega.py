"""Omega limit sets, K-set membership, hulls and maximal invariant sets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import SamplingInconsistency
from .grid import CellSet
from .relation import FiniteRelation, image


@dataclass(frozen=True)
class OmegaReport:
    """Limit set of a cell set under repeated application of a relation.

    ``omega`` comes from the decreasing chain of tail unions, ``strict_omega``
    from the cycle of the image sequence.  ``transient_length`` and
    ``cycle_length`` describe that sequence; ``converged`` is false only when
    a step cap stopped the search before the sequence repeated.
    """

    omega: CellSet
    strict_omega: CellSet
    agree: bool
    transient_length: int
    cycle_length: int
    converged: bool = True

    def to_dict(self) -> dict:
        return {
            "omega": self.omega.indices().tolist(),
            "strict_omega": self.strict_omega.indices().tolist(),
            "agree": self.agree,
            "transient_length": self.transient_length,
            "cycle_length": self.cycle_length,
            "converged": self.converged,
        }


def _as_relations(f) -> list[FiniteRelation]:
    if isinstance(f, FiniteRelation):
        return [f]
    return list(f)


def confining_hull(f: FiniteRelation | Iterable[FiniteRelation], S: CellSet) -> CellSet:
    """Least set containing ``S`` that is confining for every given relation.

    This is the union of all forward images of ``S`` under words in the
    relations, found by a frontier search.
    """
    rels = _as_relations(f)
    if any(g.space != S.space for g in rels):
        raise ValueError("relation and cell set live on different grids")
    hull = S.mask.copy()
    frontier = hull.copy()
    while frontier.any():
        grown = np.zeros_like(hull)
        for g in rels:
            grown |= _image_mask(g, frontier)
        frontier = grown & ~hull
        hull |= frontier
    return CellSet(S.space, hull)


def _image_mask(f: FiniteRelation, mask: np.ndarray) -> np.ndarray:
    out = np.zeros(mask.size, dtype=bool)
    out[f.dst[mask[f.src]]] = True
    return out


def _cycle_union(f: FiniteRelation, S: CellSet):
    # hash the packed masks of S, f(S), ... until one repeats
    seen = {}
    seq = []
    mask = S.mask
    while True:
        key = np.packbits(mask).tobytes()
        if key in seen:
            mu = seen[key]
            union = np.logical_or.reduce(seq[mu:], axis=0)
            return CellSet(S.space, union), mu, len(seq) - mu
        seen[key] = len(seq)
        seq.append(mask)
        mask = _image_mask(f, mask)


def _tail_chain_limit(f: FiniteRelation, S: CellSet) -> CellSet:
    # C_0 = ⋃_{k>=0} f^k(S) is confining, C_{n+1} = f(C_n) decreases and
    # stabilises at the intersection of the chain
    chain = confining_hull(f, S).mask
    while True:
        nxt = _image_mask(f, chain)
        if np.array_equal(nxt, chain):
            return CellSet(S.space, chain)
        chain = nxt


def strict_omega(f: FiniteRelation, S: CellSet) -> OmegaReport:
    """Union of the cycle that the image sequence S, f(S), ... falls into."""
    cyc, mu, lam = _cycle_union(f, S)
    chain = _tail_chain_limit(f, S)
    return OmegaReport(chain, cyc, chain == cyc, mu, lam)


def omega(f: FiniteRelation, S: CellSet) -> OmegaReport:
    """Intersection of the tail-union chain, checked against the cycle union.

    On a finite cell space the two always coincide; a mismatch means the
    implementation is broken and raises ``SamplingInconsistency``.
    """
    report = strict_omega(f, S)
    if not report.agree:
        raise SamplingInconsistency(
            f"tail-chain limit ({len(report.omega)} cells) differs from the cycle union "
            f"({len(report.strict_omega)} cells)"
        )
    return report


def maximal_invariant(f: FiniteRelation, N: CellSet) -> CellSet:
    """Largest subset ``A`` of ``N`` with ``f(A) = A``.

    Alternates two removals that every invariant subset survives: cells whose
    image leaves ``A``, and cells that no cell of ``A`` maps onto.
    """
    if f.space is not N.space and f.space != N.space:
        raise ValueError("relation and cell set live on different grids")
    keep = N.mask.copy()
    count = np.count_nonzero(keep)
    src, dst = f.src, f.dst
    while True:
        nxt = keep.copy()
        nxt[src[~keep[dst]]] = False
        nxt &= _image_mask(f, nxt)
        # cells are only ever removed, so an unchanged count means a fixpoint
        left = np.count_nonzero(nxt)
        if left == count:
            return CellSet(N.space, keep)
        keep, count = nxt, left


def kset_membership(f: FiniteRelation, S: CellSet, K: CellSet) -> bool:
    """Whether ``K`` is confining and contains some forward image of ``S``."""
    if not image(f, K) <= K:
        return False
    # K confining: once f^n(S) ⊆ K it stays inside, so the first hit decides;
    # the image sequence repeats within finitely many steps
    seen = set()
    current = S
    for _ in range(S.space.n_cells + 1):
        if current <= K:
            return True
        if current in seen:
            return False
        seen.add(current)
        current = image(f, current)
    return current <= K
