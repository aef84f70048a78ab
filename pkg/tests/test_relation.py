import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relflow import CellSet, FiniteRelation, classify, compose, image, inverse_image, iterate, transpose

from conftest import cells, line, random_relation, random_set, rel

# a→0 … e→4
MAP_PER_ORBIT = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 2)]


def relations(max_cells=8):
    @st.composite
    def build(draw):
        n = draw(st.integers(1, max_cells))
        pairs = draw(st.sets(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1))))
        return n, sorted(pairs)

    return build()


def test_image_does_not_preserve_intersections():
    # X = {1,2,3} → cells 0,1,2
    f = FiniteRelation.from_rows(line(3), {0: [0, 1], 2: [1, 2]})
    A, A2 = cells(f.space, [0, 1]), cells(f.space, [1, 2])
    assert image(f, A & A2) == f.space.empty()
    assert image(f, A) & image(f, A2) == cells(f.space, [1])


def test_inverse_image_breaks_unions_but_transpose_does_not():
    f = rel(2, [(0, 0), (0, 1), (1, 0)])
    S0, S1 = cells(f.space, [0]), cells(f.space, [1])
    assert inverse_image(f, S0 | S1) == f.space.full()
    assert inverse_image(f, S0) == cells(f.space, [1])
    assert inverse_image(f, S1) == f.space.empty()
    ft = transpose(f)
    assert ft == rel(2, [(0, 0), (1, 0), (0, 1)])
    assert image(ft, S0 | S1) == f.space.full()
    assert image(ft, S0) | image(ft, S1) == f.space.full()


def test_orbit_stream_of_path_example():
    f = rel(3, [(0, 0), (0, 1), (1, 0), (1, 2), (2, 2)])
    one = cells(f.space, [0])
    assert image(f, one) == cells(f.space, [0, 1])
    assert image(iterate(f, 2), one) == f.space.full()
    assert image(compose(f, f), one) == f.space.full()
    assert image(iterate(f, 5), one) == f.space.full()


def test_identity_image_and_composition():
    sp = line(5)
    ident = FiniteRelation.identity(sp)
    S = cells(sp, [1, 3])
    assert image(ident, S) == S
    g = rel(5, [(0, 4), (2, 2), (4, 1)])
    assert compose(ident, g) == g == compose(g, ident)
    assert iterate(g, 0) == ident


def test_map_cycle_returns_after_three_steps():
    f = rel(5, MAP_PER_ORBIT)
    f3 = iterate(f, 3)
    for c in (2, 3, 4):
        assert f3.row(c).tolist() == [c]


def test_symmetric_relation_is_its_own_transpose():
    f = rel(4, [(0, 1), (1, 0), (2, 2), (3, 1), (1, 3)])
    assert transpose(f) == f


@settings(max_examples=150, deadline=None)
@given(relations(), st.integers(0, 255))
def test_image_matches_pair_scan(fr, bits):
    n, pairs = fr
    f = rel(n, pairs)
    S = {k for k in range(n) if bits >> k & 1}
    want = {y for x, y in pairs if x in S}
    assert set(image(f, cells(f.space, S)).indices().tolist()) == want


@settings(max_examples=150, deadline=None)
@given(relations(), st.integers(0, 255))
def test_transpose_laws(fr, bits):
    n, pairs = fr
    f = rel(n, pairs)
    assert transpose(transpose(f)) == f
    S = cells(f.space, [k for k in range(n) if bits >> k & 1])
    # complement law: the backward image of S misses exactly the cells whose image avoids S
    assert ~image(transpose(f), S) == inverse_image(f, ~S)
    want = {x for x in range(n) if all(y in S for y in f.row(x).tolist())}
    assert set(inverse_image(f, S).indices().tolist()) == want


@settings(max_examples=150, deadline=None)
@given(relations(), relations())
def test_compose_matches_triple_loop(fr, gr):
    n = min(fr[0], gr[0])
    fp = [(x, y) for x, y in fr[1] if x < n and y < n]
    gp = [(x, y) for x, y in gr[1] if x < n and y < n]
    want = {(x, z) for x, y in gp for y2, z in fp if y == y2}
    assert set(compose(rel(n, fp), rel(n, gp)).pairs()) == want


def test_iterate_semigroup_law(rng):
    sp = line(6)
    for _ in range(30):
        f = random_relation(rng, sp, 0.25)
        for m in range(4):
            for n in range(4 - m if m < 3 else 3):
                assert iterate(f, m + n) == compose(iterate(f, m), iterate(f, n))
    with pytest.raises(ValueError):
        iterate(f, -1)


def test_relation_construction_normalises_and_validates():
    f = FiniteRelation(line(3), [2, 0, 2, 0], [1, 1, 1, 0])
    assert f.pairs() == [(0, 0), (0, 1), (2, 1)]
    assert (2, 1) in f and (1, 2) not in f
    with pytest.raises(IndexError):
        rel(3, [(0, 3)])
    with pytest.raises(ValueError):
        FiniteRelation(line(3), [0, 1], [0])


def test_pair_algebra(rng):
    sp = line(7)
    f, g = random_relation(rng, sp, 0.3), random_relation(rng, sp, 0.3)
    fs, gs = set(f.pairs()), set(g.pairs())
    assert set((f | g).pairs()) == fs | gs
    assert set((f & g).pairs()) == fs & gs
    assert set((f - g).pairs()) == fs - gs
    assert (f & g) <= f and f | g >= g
    S = random_set(rng, sp)
    assert set(f.restrict(S).pairs()) == {(x, y) for x, y in fs if x in S}


def test_product_and_box_products():
    sp = line(5)
    P = FiniteRelation.product(cells(sp, [0, 1]), cells(sp, [3]))
    assert P.pairs() == [(0, 3), (1, 3)]
    Q = FiniteRelation.from_box_products(sp, [(([0.0], [2.0]), ([3.5], [3.5]))])
    assert Q == P


@pytest.mark.parametrize("codec", ["text", "bytes"])
def test_serialization_round_trip(rng, codec):
    sp = line(9)
    f = random_relation(rng, sp, 0.3)
    if codec == "text":
        assert FiniteRelation.from_text(sp, f.to_text()) == f
    else:
        assert FiniteRelation.from_bytes(sp, f.to_bytes()) == f
        with pytest.raises(ValueError):
            FiniteRelation.from_bytes(line(8), f.to_bytes())


def test_empty_relation_round_trips():
    sp = line(3)
    e = FiniteRelation.empty(sp)
    assert FiniteRelation.from_text(sp, e.to_text()) == e
    assert FiniteRelation.from_bytes(sp, e.to_bytes()) == e


def test_rows_and_matrix_agree():
    f = rel(4, [(0, 1), (0, 3), (2, 2)])
    assert f.row(0).tolist() == [1, 3]
    assert f.row(1).tolist() == []
    assert f.row_set(2) == cells(f.space, [2])
    assert f.matrix().toarray().tolist() == [[0, 1, 0, 1], [0, 0, 0, 0], [0, 0, 1, 0], [0, 0, 0, 0]]


def test_classify_cycle_is_invariant_but_not_star_invariant():
    f = rel(5, MAP_PER_ORBIT)
    rep = classify(f, cells(f.space, [2, 3, 4]))
    assert rep.invariant and rep.confining and rep.backward_complete
    assert not rep.star_invariant
    # the transpose lets c escape back to b
    assert image(transpose(f), cells(f.space, [2])) == cells(f.space, [1, 4])


def test_classify_full_space_under_total_surjective_relation():
    f = rel(4, [(0, 1), (1, 2), (2, 3), (3, 0), (3, 1)])
    rep = classify(f, f.space.full())
    assert rep.confining and rep.backward_complete


def test_classify_identity_sets_all_six_flags(rng):
    sp = line(6)
    ident = FiniteRelation.identity(sp)
    for _ in range(10):
        rep = classify(ident, random_set(rng, sp))
        assert all([rep.confining, rep.rejecting, rep.backward_complete,
                    rep.forward_complete, rep.invariant, rep.star_invariant])
        assert rep.eventually_confining_at == 1


def test_classify_eventual_flags_match_unrolled_images(rng):
    sp = line(7)
    for _ in range(60):
        f = random_relation(rng, sp, 0.2)
        S = random_set(rng, sp)
        rep = classify(f, S)
        terms = [S]
        for _ in range(2 * 2 ** 7):
            terms.append(image(f, terms[-1]))
        conf = [A <= S for A in terms]
        # least n >= 1 with every later image back inside S
        want = None
        for n in range(len(conf) - 1, 0, -1):
            if not conf[n]:
                break
            want = n
        # the sequence cycles within 2^7 steps, so persistence must start by then
        if want is not None and want > 2 ** 7:
            want = None
        assert rep.eventually_confining_at == want
