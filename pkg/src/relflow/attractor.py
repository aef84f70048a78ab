"""Attractor blocks and their certification under sampled multiflows."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExhausted, PreconditionViolation, SamplingInconsistency
from .grid import CellSet, GridSpace, closure_of_complement, interior
from .multiflow import MultiflowModel, TimeGrid, _map_times, sample_image, sample_relation
from .omega import maximal_invariant, omega
from .relation import FiniteRelation

MAX_WITNESSES = 16


@dataclass(frozen=True)
class BlockVerdict:
    """Outcome of the block test; truthy when the set is a block."""

    is_block: bool
    witnesses: list[tuple[int, int]] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.is_block


def is_attractor_block(f: FiniteRelation, B: CellSet, limit: int = MAX_WITNESSES) -> BlockVerdict:
    """True when no pair of ``f`` leads from ``B`` into the closure of its complement."""
    C = closure_of_complement(B)
    bad = np.flatnonzero(B.mask[f.src] & C.mask[f.dst])
    witnesses = [(int(f.src[k]), int(f.dst[k])) for k in bad[:limit]]
    return BlockVerdict(bad.size == 0, witnesses)


def describe_pair(space: GridSpace, x: int, y: int, t: float | None = None) -> dict:
    xlo, xhi = space.cell_box(x)
    ylo, yhi = space.cell_box(y)
    out = {
        "source": x,
        "target": y,
        "source_box": [xlo.tolist(), xhi.tolist()],
        "target_box": [ylo.tolist(), yhi.tolist()],
    }
    if t is not None:
        out["time"] = t
    return out


@dataclass(frozen=True)
class BlockCertificate:
    """Result of checking a block at every sampled time of a window.

    ``attractor`` is the limit set of the block under the sampled relation at
    ``representative_time``; ``spot_check_times`` lists the extra times past
    the window that were checked after the window passed.
    """

    block: CellSet
    relation_times: tuple[float, ...]
    attractor: CellSet
    strictly_confining_from: float | None
    is_block: bool
    witnesses: list[dict]
    representative_time: float
    spot_check_times: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "block": self.block.indices().tolist(),
            "relation_times": list(self.relation_times),
            "attractor": self.attractor.indices().tolist(),
            "strictly_confining_from": self.strictly_confining_from,
            "is_block": self.is_block,
            "witnesses": self.witnesses,
            "representative_time": self.representative_time,
            "spot_check_times": list(self.spot_check_times),
        }


def _block_checks(model, space, B, times, threads):
    def one(t):
        return is_attractor_block(sample_relation(model, space, t, sources=B), B)

    return _map_times(one, list(times), threads)


def _witness_list(space, times, verdicts):
    out = []
    for t, v in zip(times, verdicts):
        for x, y in v.witnesses:
            if len(out) == MAX_WITNESSES:
                return out
            out.append(describe_pair(space, x, y, t))
    return out


def certify_block_multiflow(
    model: MultiflowModel,
    space: GridSpace,
    B: CellSet,
    times: TimeGrid,
    spot_checks: int = 8,
    seed: int = 0,
    threads: int = 1,
) -> BlockCertificate:
    """Check ``B`` at every sample in ``(0, T]`` and spot-check beyond.

    A set that is a block for every time in ``(0, T]`` is a block for every
    positive time, so once the window passes, random times in ``(T, 4T]`` must
    pass too; a failure there means the sampling is inconsistent and raises
    ``SamplingInconsistency``.
    """
    window = times.window
    verdicts = _block_checks(model, space, B, window, threads)
    ok = all(verdicts)
    spots: tuple[float, ...] = ()
    if ok and spot_checks > 0:
        T = window[-1]
        rng = np.random.default_rng(seed)
        spots = tuple(sorted(float(s) for s in rng.uniform(T, 4 * T, spot_checks)))
        spot_verdicts = _block_checks(model, space, B, spots, threads)
        failed = [t for t, v in zip(spots, spot_verdicts) if not v]
        if failed:
            raise SamplingInconsistency(
                f"{model.name}: block passed every sample up to {T} but fails at {failed}; "
                f"witnesses {_witness_list(space, spots, spot_verdicts)}"
            )
    rep = times.representative
    rel = sample_relation(model, space, rep, sources=B if ok else None)
    attractor = omega(rel, B).omega
    least = None
    for t, v in zip(reversed(window), reversed(verdicts)):
        if not v:
            break
        least = t
    return BlockCertificate(
        block=B,
        relation_times=tuple(window),
        attractor=attractor,
        strictly_confining_from=least,
        is_block=ok,
        witnesses=_witness_list(space, window, verdicts),
        representative_time=rep,
        spot_check_times=spots,
    )


def find_block_in_neighborhood(
    model: MultiflowModel,
    space: GridSpace,
    A: CellSet,
    V: CellSet,
    times: TimeGrid,
    budget: int = 64,
    spot_checks: int = 8,
    seed: int = 0,
    threads: int = 1,
) -> BlockCertificate:
    """Shrink ``V`` towards ``A`` until it becomes a certified block.

    Each round replaces the candidate ``B`` by ``B ∩ (⋂_s Φˢ(B) ∪ A)`` over the
    samples ``s`` of the window.  Raises ``BudgetExhausted`` carrying the
    last candidate when the budget runs out or the candidate stops changing.
    Invariance of ``A`` is the caller's responsibility and is not checked.
    """
    if not A <= interior(V):
        raise PreconditionViolation("A must lie in the interior of V")
    window = times.window
    B = V
    verdicts = []
    for _ in range(budget):
        verdicts = _block_checks(model, space, B, window, threads)
        if all(verdicts) and A <= interior(B):
            return certify_block_multiflow(model, space, B, times, spot_checks, seed, threads)
        hull = space.full()
        for s in window:
            hull = hull & sample_image(model, space, s, B)
        nxt = B & (hull | A)
        if nxt == B:
            break
        B = nxt
    raise BudgetExhausted(
        f"no block found between A ({len(A)} cells) and V ({len(V)} cells)",
        candidate=B,
        witnesses=_witness_list(space, window, verdicts),
    )


def maximality_check(model: MultiflowModel, space: GridSpace, A: CellSet, U: CellSet, times: TimeGrid) -> bool:
    """Whether ``A`` is the largest invariant subset of ``U`` at every sample."""
    if not A <= U:
        raise PreconditionViolation("A must be a subset of U")
    for t in times.samples:
        rel = sample_relation(model, space, t, sources=U)
        if maximal_invariant(rel, U) != A:
            return False
    return True
