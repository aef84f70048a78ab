import math

import numpy as np
import pytest

from relflow import (
    CellSet,
    EvaluatorDomain,
    FiniteRelation,
    GridSpace,
    TimeGrid,
    check_semigroup,
    classify_multiflow,
    compose,
    fixed_time_omega,
    get_model,
    omega_multiflow,
    parse_affine_table,
    sample_image,
    sample_relation,
    set_distance,
)
from relflow import shapes
from relflow.multiflow import Pieces, builtin_models, rasterize, sqrt_abs_point_image

from conftest import cells


def sqrt_abs_closed_form(t, x):
    """The three-branch reachable set for t > 0, written out independently."""
    if x < -t * t / 4:
        return (-(-t / 2 + math.sqrt(-x)) ** 2,) * 2
    if x <= 0:
        return 0.0, (t / 2 - math.sqrt(-x)) ** 2
    return ((t / 2 + math.sqrt(x)) ** 2,) * 2


@pytest.mark.parametrize("t", [0.5, 1.0, 7.0, 10.0])
@pytest.mark.parametrize("x", [-30.0, -12.25, -4.0, -1e-3, 0.0, 1e-3, 2.0, 40.0])
def test_sqrt_abs_point_images(t, x):
    assert sqrt_abs_point_image(t, x) == pytest.approx(sqrt_abs_closed_form(t, x), abs=1e-12)


def test_sqrt_abs_examples():
    assert sqrt_abs_point_image(7.0, -4.0) == pytest.approx((0.0, 2.25))
    assert sqrt_abs_point_image(1.0, 4.0) == pytest.approx((6.25, 6.25))


def test_sqrt_abs_row_matches_closed_form_at_256_cells():
    model = get_model("sqrt-abs")
    sp = model.hint_space(256)
    for t in (7.0, 10.0):
        rel = sample_relation(model, sp, t)
        for x in (-25.0, -4.0, -1.0, 0.5, 3.0, 20.0):
            k = sp.cell_of([x])
            lo, hi = sp.cell_box(k)
            # the source cell maps onto [low(lo), high(hi)], clipped to the domain
            a = sqrt_abs_closed_form(t, lo[0])[0]
            b = sqrt_abs_closed_form(t, hi[0])[1]
            want = CellSet.from_boxes(sp, [([a], [min(b, 40.0)])]) if a <= 40.0 else sp.empty()
            assert rel.row_set(k) == want


def test_sqrt_abs_t7_row_from_minus_four_covers_closed_form_within_a_cell():
    model = get_model("sqrt-abs")
    sp = model.hint_space(256)
    row = sample_relation(model, sp, 7.0).row_set(sp.cell_of([-4.0]))
    exact = CellSet.from_boxes(sp, [([0.0], [2.25])])
    assert exact <= row
    assert row <= exact.neighbourhood()


def test_rotation_full_period_contains_identity():
    model = get_model("rotation")
    sp = model.hint_space(32)
    rel = sample_relation(model, sp, 2 * math.pi)
    assert FiniteRelation.identity(sp) <= rel


def test_filippov_wedge_slides_along_the_axis():
    model = get_model("filippov-wedge")
    sp = model.hint_space(128)
    row = sample_relation(model, sp, 2.0).row_set(sp.cell_of([-2.0, 0.0]))
    segment = CellSet.from_boxes(sp, [([0.0, -2.0], [0.0, 2.0])])
    # the source cell lies left of x = -2, so its image is the column just left of x = 0
    assert row <= segment.neighbourhood()
    assert segment <= row.neighbourhood()


def test_filippov_wedge_off_axis_point_translates():
    model = get_model("filippov-wedge")
    (origin, frame), = model.evaluate(0.5, [-2.0, 1.0], [-2.0, 1.0])
    assert origin == pytest.approx([-1.5, 1.5])
    assert np.allclose(frame, 0)
    (origin, frame), = model.evaluate(0.5, [-2.0, -1.0], [-2.0, -1.0])
    assert origin == pytest.approx([-1.5, -1.5])


def test_restricted_drift_point_images():
    model = get_model("restricted-drift")
    assert model.evaluate(0.5, [0.2], [0.2])[0][0] == pytest.approx([0.7])
    assert model.evaluate(0.8, [0.2], [0.2])[0][0] == pytest.approx([1.0])
    assert model.evaluate(0.9, [0.2], [0.2]) == []


def test_restricted_drift_refuses_larger_grids():
    model = get_model("restricted-drift")
    with pytest.raises(EvaluatorDomain):
        sample_relation(model, GridSpace(((-2.0, 1.0),), (6,)), 0.5)


@pytest.mark.parametrize("t", [0.0, -1.0, math.inf, math.nan])
def test_models_reject_nonpositive_times(t):
    with pytest.raises(EvaluatorDomain):
        get_model("rotation").evaluate(t, [0.0, 0.0], [1.0, 1.0])


def test_models_reject_malformed_boxes():
    with pytest.raises(EvaluatorDomain):
        get_model("rotation").evaluate(1.0, [0.0], [1.0])
    with pytest.raises(EvaluatorDomain):
        get_model("rotation").evaluate(1.0, [1.0, 0.0], [0.0, 1.0])


def test_unknown_model_name():
    with pytest.raises(KeyError):
        get_model("lorenz")
    assert {m.name for m in builtin_models()} == {
        "sqrt-abs", "filippov-wedge", "rotation", "spiral-contraction", "restricted-drift"}


def test_rasterize_positive_overlap_and_rotated_pieces():
    sp = GridSpace(((0.0, 4.0), (0.0, 4.0)), (4, 4))
    owner, cell = rasterize(sp, Pieces.boxes([0], [[1.0, 1.0]], [[2.0, 2.0]]))
    assert cell.tolist() == [sp.flat_index((1, 1))]
    # the unit square around (1.5, 1.5) turned by 45 degrees pokes into the
    # four side neighbours but stays clear of the diagonal ones
    c = math.sqrt(0.5)
    lo = np.array([[1.0, 1.0]])
    sq = Pieces.affine([0], [[c, -c], [c, c]], [1.5, 1.5 - 3 * c], lo, lo + 1.0)
    _, hit = rasterize(sp, sq)
    want = {sp.flat_index(m) for m in [(1, 1), (0, 1), (2, 1), (1, 0), (1, 2)]}
    assert set(hit.tolist()) == want


def test_rasterize_is_a_superset_of_sampled_points(rng):
    sp = GridSpace(((-5.0, 5.0), (-5.0, 5.0)), (24, 24))
    model = get_model("rotation")
    for t in (0.3, 1.1, 2.5):
        rel = sample_relation(model, sp, t)
        c, s = math.cos(t), math.sin(t)
        pts = rng.uniform(-3.4, 3.4, size=(400, 2))
        img = pts @ np.array([[c, s], [-s, c]]).T
        src = sp.cells_of(pts)
        dst = sp.cells_of(img)
        assert all((int(a), int(b)) in rel for a, b in zip(src, dst))


def test_semigroup_containment_holds_for_equal_steps():
    for name, res, s in [("spiral-contraction", 24, 0.3),
                         ("filippov-wedge", 24, 0.5), ("restricted-drift", 40, 0.2)]:
        model = get_model(name)
        rep = check_semigroup(model, model.hint_space(res), s, s)
        assert rep.contained, name
        assert rep.n_violations == 0


def test_rotation_semigroup_fails_only_for_orbits_leaving_the_square():
    # the square is not invariant: corners rotate out and back in, and a
    # composition cannot pass through the outside
    model = get_model("rotation")
    sp = model.hint_space(24)
    rep = check_semigroup(model, sp, 0.4, 0.4)
    assert not rep.contained
    for x, _ in rep.violations:
        lo, hi = sp.cell_box(x)
        far = np.hypot(np.maximum(abs(lo), abs(hi))[0], np.maximum(abs(lo), abs(hi))[1])
        assert far > 5.0
    inner = CellSet.from_predicate(sp, shapes.disk((0, 0), 4.5))
    composed = compose(sample_relation(model, sp, 0.4), sample_relation(model, sp, 0.4))
    assert sample_relation(model, sp, 0.8, sources=inner) <= composed


def test_sqrt_abs_semigroup_excess_is_bounded():
    model = get_model("sqrt-abs")
    sp = model.hint_space(256)
    rep = check_semigroup(model, sp, 1.0, 1.0)
    assert rep.contained
    composed = compose(sample_relation(model, sp, 1.0), sample_relation(model, sp, 1.0))
    direct = sample_relation(model, sp, 2.0)
    # each row of the composition stays within a couple of cells of the direct row
    for x in range(0, 256, 7):
        a, b = composed.row_set(x), direct.row_set(x)
        if a:
            assert set_distance(a, b) <= 2 * sp.pitch[0] + 1e-12
            assert max(set_distance(cells(sp, [k]), b) for k in a) <= 3 * sp.pitch[0] + 1e-12
    assert rep.excess_pairs == len(composed - direct)


def test_semigroup_requires_positive_times():
    model = get_model("rotation")
    with pytest.raises(ValueError):
        check_semigroup(model, model.hint_space(8), 0.0, 1.0)


def test_rotation_invariant_disk_is_never_strictly_confining():
    model = get_model("rotation")
    sp = model.hint_space(48)
    disk = CellSet.from_predicate(sp, shapes.disk((0, 0), 3.0))
    from relflow.omega import confining_hull

    times = TimeGrid.uniform(2 * math.pi, 8)
    hull = confining_hull([sample_relation(model, sp, t) for t in times.samples], disk)
    rep = classify_multiflow(model, sp, hull, times)
    assert rep.confining
    assert not rep.strict_confining
    assert rep.failures["strict_confining"] == list(times.samples)
    assert rep.eventually_strictly_confining_at is None


def test_full_space_is_confining_at_all_times():
    model = get_model("spiral-contraction")
    sp = model.hint_space(20)
    rep = classify_multiflow(model, sp, sp.full(), TimeGrid.uniform(3.0, 6))
    assert rep.confining and rep.eventually_confining_at == 0.5


def test_eventual_verdict_uses_threshold():
    model = get_model("restricted-drift")
    sp = model.hint_space(40)
    B = CellSet.from_boxes(sp, [([0.5], [1.0])])
    rep = classify_multiflow(model, sp, B, TimeGrid((0.01, 0.2, 0.4, 0.6), threshold_T=0.2))
    assert rep.eventually_confining_at == 0.01
    assert rep.eventually_strictly_confining_at == 0.2


def test_fixed_time_omega_of_half_turn_is_the_ellipse():
    model = get_model("rotation")
    sp = model.hint_space(64)
    U = CellSet.from_predicate(sp, shapes.ellipse((0, 0), (2, 4)))
    rep = fixed_time_omega(model, sp, U, math.pi)
    assert rep.omega == U
    assert (rep.transient_length, rep.cycle_length) == (0, 1)


def test_invariant_set_is_its_own_omega_at_every_time():
    model = get_model("rotation")
    sp = model.hint_space(32)
    S = sp.full()
    rep = omega_multiflow(model, sp, S, TimeGrid.uniform(2.0, 4))
    assert all(r.omega == S for r in rep.per_time.values())
    assert rep.cross_time_equal and rep.omega == S


def test_per_time_results_do_not_depend_on_thread_count():
    model = get_model("spiral-contraction")
    sp = model.hint_space(40)
    B = CellSet.from_predicate(sp, shapes.disk((0, 0), 1.0))
    times = TimeGrid.uniform(2.0, 6)
    a = classify_multiflow(model, sp, B, times, threads=1)
    b = classify_multiflow(model, sp, B, times, threads=4)
    assert a == b
    ra = omega_multiflow(model, sp, B, times, threads=1)
    rb = omega_multiflow(model, sp, B, times, threads=3)
    assert ra.to_dict() == rb.to_dict()


def test_sample_image_equals_image_of_sampled_relation(rng):
    from relflow import image

    model = get_model("filippov-wedge")
    sp = model.hint_space(30)
    for _ in range(5):
        S = CellSet(sp, rng.random(sp.n_cells) < 0.05)
        assert sample_image(model, sp, 0.7, S) == image(sample_relation(model, sp, 0.7), S)


def test_time_grid_windows():
    tg = TimeGrid.uniform(2 * math.pi, 32, threshold_T=1.5 * math.pi)
    assert len(tg.samples) == 32 and tg.samples[-1] == pytest.approx(2 * math.pi)
    assert len(tg.window) == 24 and tg.representative == pytest.approx(1.5 * math.pi)
    assert tg.eventual_from == pytest.approx(1.5 * math.pi)
    plain = TimeGrid((1.0, 2.0, 4.0))
    assert plain.window == plain.samples and plain.eventual_from == 2.0
    for bad in [(), (0.0, 1.0), (2.0, 1.0)]:
        with pytest.raises(ValueError):
            TimeGrid(bad)
    with pytest.raises(ValueError):
        TimeGrid((1.0, 2.0), threshold_T=3.0)


TABLE = """
# contraction towards the origin on the left half, translation on the right
dimension 1
time 1.0
branch
  domain -1 0
  matrix 0.5
  offset 0
end
branch
  domain 0 1
  matrix 1
  offset -0.25
  radius 0.05
end
"""


def test_affine_table_model():
    model = parse_affine_table(TABLE, name="halves")
    assert model.name == "halves" and model.dimension == 1 and not model.exact
    assert model.space_hint == ((-1.0, 1.0),)
    (o, f), = model.evaluate(1.0, [-0.8], [-0.4])
    assert np.allclose(o, [-0.4]) and np.allclose(f, [[0.2]])
    pieces = model.evaluate(1.0, [-0.2], [0.4])
    spans = sorted((float(o[0]), float(o[0] + f[0, 0])) for o, f in pieces)
    assert spans == pytest.approx([(-0.3, 0.2), (-0.1, 0.0)])
    with pytest.raises(EvaluatorDomain):
        model.evaluate(2.0, [-0.2], [0.4])


@pytest.mark.parametrize("text", [
    "dimension 1\nbranch\n domain 0 1\n matrix 1\n offset 0\nend\n",
    "dimension 1\ntime 1\nbranch\n domain 0 1\n matrix 1\nend\n",
    "dimension 1\ntime 1\nbranch\n domain 0 1 2\n matrix 1\n offset 0\nend\n",
    "dimension 1\ntime 1\nbranch\n domain 0 1\n matrix 1\n offset 0\n",
    "dimension 1\ntime -1\n",
    "dimension 1\nwibble 3\n",
    "",
])
def test_affine_table_rejects_malformed_text(text):
    with pytest.raises(ValueError):
        parse_affine_table(text)
