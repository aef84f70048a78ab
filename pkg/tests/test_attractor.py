import math

import numpy as np
import pytest

from relflow import (
    BudgetExhausted,
    CellSet,
    FiniteRelation,
    GridSpace,
    PreconditionViolation,
    SamplingInconsistency,
    TimeGrid,
    certify_block_multiflow,
    find_block_in_neighborhood,
    get_model,
    interior,
    is_attractor_block,
    maximality_check,
    sample_relation,
    set_distance,
)
from relflow import shapes
from relflow.multiflow import MultiflowModel, Pieces

from conftest import cells, line

SPIRAL_SPACE = GridSpace(((-2.5, 2.5), (-2.5, 2.5)), (100, 100))
ORIGIN_CELLS = [4949, 4950, 5049, 5050]


def ce1_relation(space, alpha=0.1):
    return FiniteRelation.from_box_products(space, [
        (([0.8], [2 + alpha]), ([1.5], [1.5])),
        (([2 + alpha], [2 + alpha]), ([1.5], [3.0])),
    ])


def test_ce1_block_at_60_cells():
    sp = GridSpace(((0.0, 3.0),), (60,))
    B = CellSet.from_boxes(sp, [([1.0], [2.0])])
    assert is_attractor_block(ce1_relation(sp), B)


def test_full_space_is_always_a_block(rng):
    sp = line(6)
    f = FiniteRelation(sp, *np.nonzero(rng.random((6, 6)) < 0.5))
    assert is_attractor_block(f, sp.full()).is_block


def test_identity_is_not_a_block_for_a_proper_set():
    sp = GridSpace(((0.0, 3.0),), (3,))
    v = is_attractor_block(FiniteRelation.identity(sp), cells(sp, [0, 1]))
    assert not v and v.witnesses == [(1, 1)]


def test_block_verdict_matches_pair_scan(rng):
    sp = GridSpace(((0.0, 1.0), (0.0, 1.0)), (5, 5))
    for _ in range(50):
        f = FiniteRelation(sp, *np.nonzero(rng.random((25, 25)) < 0.05))
        B = CellSet(sp, rng.random(25) < 0.6)
        C = ~interior(B)
        bad = [(x, y) for x, y in f.pairs() if x in B and y in C]
        v = is_attractor_block(f, B)
        assert v.is_block == (not bad)
        assert v.witnesses == bad[:16]


def test_spiral_ball_is_certified_with_origin_attractor():
    model = get_model("spiral-contraction")
    B = CellSet.from_predicate(SPIRAL_SPACE, shapes.disk((0, 0), 1.0))
    cert = certify_block_multiflow(model, SPIRAL_SPACE, B, TimeGrid.uniform(2.0, 16), seed=3)
    assert cert.is_block and not cert.witnesses
    assert cert.attractor == cells(SPIRAL_SPACE, ORIGIN_CELLS)
    assert len(cert.spot_check_times) == 8
    assert all(2.0 < t <= 8.0 for t in cert.spot_check_times)
    assert cert.strictly_confining_from == pytest.approx(0.125)


def test_rotation_disk_is_never_a_block():
    model = get_model("rotation")
    sp = model.hint_space(64)
    B = CellSet.from_predicate(sp, shapes.disk((0, 0), 3.0))
    cert = certify_block_multiflow(model, sp, B, TimeGrid.uniform(2 * math.pi, 8))
    assert not cert.is_block and cert.witnesses
    assert cert.strictly_confining_from is None
    outside = ~B
    for w in cert.witnesses:
        src = cells(sp, [w["source"]])
        assert src <= B
        assert set_distance(src, outside) <= 2 * sp.pitch[0]


def test_restricted_drift_right_end_is_a_vacuous_block():
    model = get_model("restricted-drift")
    sp = model.hint_space(40)
    B = CellSet.from_boxes(sp, [([0.5], [1.0])])
    cert = certify_block_multiflow(model, sp, B, TimeGrid.uniform(1.0, 8))
    assert cert.is_block
    assert not cert.attractor


def test_spot_checks_are_reproducible():
    model = get_model("spiral-contraction")
    B = CellSet.from_predicate(SPIRAL_SPACE, shapes.disk((0, 0), 1.0))
    times = TimeGrid.uniform(1.0, 4)
    a = certify_block_multiflow(model, SPIRAL_SPACE, B, times, seed=11)
    b = certify_block_multiflow(model, SPIRAL_SPACE, B, times, seed=11)
    c = certify_block_multiflow(model, SPIRAL_SPACE, B, times, seed=12)
    assert a.spot_check_times == b.spot_check_times != c.spot_check_times


def test_spot_failure_beyond_the_window_is_reported():
    # contracts up to t = 1 and expands after: no true multiflow does this
    def evaluator(t, lo, hi):
        k = 0.5 if t <= 1.0 else 2.0
        return Pieces.boxes(np.arange(lo.shape[0]), k * lo, k * hi)

    model = MultiflowModel("switch", 2, ((-2.0, 2.0), (-2.0, 2.0)), evaluator)
    sp = model.hint_space(20)
    B = CellSet.from_predicate(sp, shapes.disk((0, 0), 1.0))
    with pytest.raises(SamplingInconsistency):
        certify_block_multiflow(model, sp, B, TimeGrid.uniform(1.0, 4))


def test_find_block_for_spiral_origin():
    model = get_model("spiral-contraction")
    A = cells(SPIRAL_SPACE, ORIGIN_CELLS)
    V = CellSet.from_predicate(SPIRAL_SPACE, shapes.disk((0, 0), 2.0))
    times = TimeGrid.uniform(2.0, 16)
    cert = find_block_in_neighborhood(model, SPIRAL_SPACE, A, V, times)
    assert A <= interior(cert.block) and cert.block <= V
    assert cert.is_block
    again = certify_block_multiflow(model, SPIRAL_SPACE, cert.block, times)
    assert again.is_block


def test_find_block_needs_room():
    model = get_model("spiral-contraction")
    A = cells(SPIRAL_SPACE, ORIGIN_CELLS)
    with pytest.raises(PreconditionViolation):
        find_block_in_neighborhood(model, SPIRAL_SPACE, A, A, TimeGrid.uniform(1.0, 4))


def test_find_block_fails_for_rotation():
    model = get_model("rotation")
    sp = model.hint_space(64)
    A = CellSet.from_predicate(sp, shapes.disk((0, 0), 2.0))
    V = CellSet.from_predicate(sp, shapes.disk((0, 0), 2.6))
    with pytest.raises(BudgetExhausted) as exc:
        find_block_in_neighborhood(model, sp, A, V, TimeGrid.uniform(2 * math.pi, 8), budget=16)
    assert A <= exc.value.candidate <= V
    assert exc.value.witnesses


def test_maximality_for_spiral_origin():
    model = get_model("spiral-contraction")
    A = cells(SPIRAL_SPACE, ORIGIN_CELLS)
    U = CellSet.from_predicate(SPIRAL_SPACE, shapes.disk((0, 0), 1.0))
    assert maximality_check(model, SPIRAL_SPACE, A, U, TimeGrid((1.0, 2.0)))
    assert maximality_check(model, SPIRAL_SPACE, A, A, TimeGrid((1.0, 2.0)))


def test_maximality_fails_for_rotation_annulus():
    model = get_model("rotation")
    sp = model.hint_space(64)
    times = TimeGrid.uniform(2 * math.pi, 8)
    ring = CellSet.from_predicate(sp, shapes.annulus((0, 0), 1.5, 2.0))
    big = CellSet.from_predicate(sp, shapes.disk((0, 0), 3.0))
    assert not maximality_check(model, sp, ring, big, times)


def test_maximality_requires_a_subset():
    model = get_model("rotation")
    sp = model.hint_space(16)
    with pytest.raises(PreconditionViolation):
        maximality_check(model, sp, sp.full(), sp.empty(), TimeGrid((1.0,)))
