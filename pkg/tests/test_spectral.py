"""Exact bigraded complexes, their pages, and the small-eigenvalue count
predictions. Cross-checked three independent ways: total cohomology, the
closed-form circle answer (invariants plus coinvariants), and page-by-page
recursion on randomly generated flat complexes."""

from fractions import Fraction

import numpy as np
import pytest

from nilcollapse import lie, spectral
from nilcollapse.numerics import InputError, RationalMatrix, rank_exact
from tests.conftest import random_flat_complex

UNIP = RationalMatrix([[1, 1], [0, 1]])
SOL = RationalMatrix([[2, 1], [1, 1]])


def circle_model(g):
    """Torus fiber over the circle with holonomy g (an exact 2x2 matrix)."""
    ranks = [1, 2, 1]
    a0 = [RationalMatrix.zeros(2, 1), RationalMatrix.zeros(1, 2)]
    monos = [[spectral.form_action(g, b) for b in range(3)]]
    return spectral.flat_bundle_complex(ranks, a0, monos, "circle")


def circle_bundle_complex(coeff=Fraction(1)):
    """Invariant-forms model of an oriented circle bundle over the 2-torus."""
    ranks = [1, 1]
    a0 = [RationalMatrix.zeros(1, 1)]
    eye = RationalMatrix.identity(1)
    monos = [[eye, eye], [eye, eye]]
    return spectral.flat_bundle_complex(ranks, a0, monos, "torus2",
                                        a2=[RationalMatrix([[coeff]])])


# ---------------------------------------------------------------------------
# complex construction and validation
# ---------------------------------------------------------------------------

def test_complex_rejects_nonflat_differential():
    dims = {(0, 0): 1, (0, 1): 1, (0, 2): 1}
    maps = {0: {(0, 0): RationalMatrix([[1]]), (0, 1): RationalMatrix([[1]])}}
    with pytest.raises(InputError):
        spectral.BigradedComplex(dims, maps)


def test_complex_rejects_bad_shapes():
    dims = {(0, 0): 2, (0, 1): 1}
    maps = {0: {(0, 0): RationalMatrix([[1]])}}
    with pytest.raises(InputError):
        spectral.BigradedComplex(dims, maps)


def test_total_complex_bookkeeping():
    cx = spectral.from_algebra(lie.heisenberg(3))
    assert cx.total_dim(1) == 3
    assert cx.top_total_degree() == 3
    assert [cx.total_cohomology(p) for p in range(4)] == [1, 2, 2, 1]


def test_serialization_round_trip(tmp_path):
    cx = circle_model(UNIP)
    cx2 = spectral.BigradedComplex.from_dict(cx.to_dict())
    assert cx2.dims == cx.dims
    for i in cx.shifts():
        for spot in cx.dims:
            assert cx2.D(i, *spot) == cx.D(i, *spot)
    path = tmp_path / "cx.json"
    spectral.save_complex(cx, path)
    cx3 = spectral.load_complex(path)
    assert cx3.dims == cx.dims


# ---------------------------------------------------------------------------
# pages
# ---------------------------------------------------------------------------

def test_page_zero_returns_raw_dimensions():
    cx = spectral.from_algebra(lie.heisenberg(3))
    p0 = spectral.page(cx, 0)
    assert p0.dims == {(0, 0): 1, (0, 1): 3, (0, 2): 3, (0, 3): 1}


def test_one_column_complex_stabilizes_at_page_one():
    cx = spectral.from_algebra(lie.heisenberg(3))
    assert spectral.page(cx, 1).totals() == [1, 2, 2, 1]
    assert spectral.e_infinity(cx).totals() == [1, 2, 2, 1]


def test_unipotent_circle_model_pages():
    cx = circle_model(UNIP)
    p2 = spectral.page(cx, 2)
    assert p2.dim(0, 1) == 1
    assert p2.dim(1, 1) == 1
    assert p2.totals() == [1, 2, 2, 1]
    assert spectral.e_infinity(cx).totals() == [1, 2, 2, 1]


def test_hyperbolic_circle_model_pages():
    cx = circle_model(SOL)
    assert spectral.e_infinity(cx).totals() == [1, 1, 1, 1]
    # invariants of the degree-1 holonomy vanish
    p2 = spectral.page(cx, 2)
    assert p2.dim(0, 1) == 0 and p2.dim(1, 1) == 0


def test_circle_bundle_complex_degenerates_at_page_three():
    cx = circle_bundle_complex()
    p2 = spectral.page(cx, 2)
    pinf = spectral.e_infinity(cx)
    assert p2.totals() == [1, 3, 3, 1]
    assert pinf.totals() == [1, 2, 2, 1]
    assert p2.d_ranks.get((0, 1)) == 1  # the coupling differential is nonzero


def test_page_recursion_on_models():
    for cx in (circle_model(UNIP), circle_model(SOL), circle_bundle_complex()):
        for r in range(1, spectral.stabilization_index(cx)):
            spectral.verify_page_recursion(cx, r)


def test_random_flat_complexes_stabilize_to_total_cohomology():
    rng = np.random.default_rng(42)
    for _ in range(15):
        cx = random_flat_complex(rng)
        pinf = spectral.e_infinity(cx)  # verify=True checks the totals
        top = cx.top_total_degree()
        euler = sum((-1) ** p * cx.total_dim(p) for p in range(top + 1))
        for r in range(1, spectral.stabilization_index(cx) + 1):
            pr = spectral.page(cx, r)
            assert sum((-1) ** p * t for p, t in enumerate(pr.totals())) == euler
        # spot dimensions never grow from page to page
        prev = spectral.page(cx, 1)
        for r in range(2, spectral.stabilization_index(cx) + 1):
            cur = spectral.page(cx, r)
            for spot, d in cur.dims.items():
                assert d <= prev.dims.get(spot, 0) or prev.dims.get(spot, 0) == 0
            prev = cur


# ---------------------------------------------------------------------------
# circle closed form
# ---------------------------------------------------------------------------

def test_leray_circle_closed_form_unipotent():
    monos = [spectral.form_action(UNIP, b) for b in range(3)]
    assert [spectral.leray_circle(monos, p) for p in range(4)] == [1, 2, 2, 1]


def test_leray_circle_closed_form_hyperbolic():
    monos = [spectral.form_action(SOL, b) for b in range(3)]
    assert [spectral.leray_circle(monos, p) for p in range(4)] == [1, 1, 1, 1]


def test_leray_matches_stable_page_for_nil_fiber():
    # 3-dim nilpotent fiber over the circle with trivial holonomy
    alg = lie.heisenberg(3)
    ranks = [len(lie.multi_indices(3, b)) for b in range(4)]
    a0 = [lie.ce_differential(alg, b) for b in range(3)]
    eye = [RationalMatrix.identity(r) for r in ranks]
    cx = spectral.flat_bundle_complex(ranks, a0, [eye], "circle")
    betti = lie.betti_numbers(alg)
    monos = [RationalMatrix.identity(b) for b in betti]
    expect = [spectral.leray_circle(monos, p) for p in range(5)]
    assert spectral.e_infinity(cx).totals() == expect == [1, 3, 4, 3, 1]


def test_leray_matches_stable_page_random_holonomy():
    rng = np.random.default_rng(9)
    for _ in range(10):
        # random unimodular integer holonomy on a 2-torus fiber
        a, b, c = (int(x) for x in rng.integers(-2, 3, size=3))
        d = (1 + b * c) // a if a and (1 + b * c) % a == 0 else None
        if d is None:
            g = RationalMatrix([[1, a], [0, 1]]) @ RationalMatrix([[1, 0], [b, 1]])
        else:
            g = RationalMatrix([[a, b], [c, d]])
        cx = circle_model(g)
        monos = [spectral.form_action(g, q) for q in range(3)]
        assert spectral.e_infinity(cx).totals() == \
            [spectral.leray_circle(monos, p) for p in range(4)]


# ---------------------------------------------------------------------------
# holonomy invariants
# ---------------------------------------------------------------------------

def test_minimal_polynomial_ascending_coefficients():
    assert spectral.minimal_polynomial(RationalMatrix([[2]])) == \
        [Fraction(-2), Fraction(1)]
    assert spectral.minimal_polynomial(UNIP) == [1, -2, 1]       # (x-1)^2
    assert spectral.minimal_polynomial(SOL) == [1, -3, 1]        # x^2-3x+1
    assert spectral.minimal_polynomial(RationalMatrix.identity(3)) == [-1, 1]


def test_unipotent_factor_flags():
    rep = spectral.unipotent_factor(UNIP)
    assert rep.has_unipotent_block and not rep.semisimple
    rep = spectral.unipotent_factor(SOL)
    assert not rep.has_unipotent_block and rep.semisimple
    rep = spectral.unipotent_factor(RationalMatrix.identity(2))
    assert not rep.has_unipotent_block and rep.semisimple


def test_unipotent_factor_conjugation_invariant():
    S = RationalMatrix([[1, 2], [3, 7]])  # det 1
    Sinv = spectral.inverse_exact(S)
    for g in (UNIP, SOL):
        rep1 = spectral.unipotent_factor(g)
        rep2 = spectral.unipotent_factor(S @ g @ Sinv)
        assert rep1.semisimple == rep2.semisimple
        assert rep1.minimal_polynomial == rep2.minimal_polynomial


def test_generalized_one_eigenspace_dims():
    assert spectral.generalized_one_eigenspace_dim(UNIP) == 2
    assert spectral.generalized_one_eigenspace_dim(SOL) == 0
    assert spectral.generalized_one_eigenspace_dim(RationalMatrix.identity(3)) == 3
    assert spectral.joint_generalized_one_eigenspace_dim(
        [UNIP, RationalMatrix.identity(2)]) == 2
    assert spectral.joint_generalized_one_eigenspace_dim([UNIP, SOL]) == 0


def test_exact_matrix_helpers():
    g = SOL
    ginv = spectral.inverse_exact(g)
    assert g @ ginv == RationalMatrix.identity(2)
    # compound is multiplicative and matches the float version
    rng = np.random.default_rng(2)
    A = RationalMatrix.from_numpy(rng.integers(-2, 3, size=(3, 3)))
    for p in range(4):
        cf = spectral.compound_exact(A, p).to_numpy()
        assert np.allclose(cf, lie.compound_matrix(A.to_numpy(), p))


def test_form_action_is_multiplicative():
    for b in range(3):
        lhs = spectral.form_action(UNIP @ SOL, b)
        rhs = spectral.form_action(UNIP, b) @ spectral.form_action(SOL, b)
        assert lhs == rhs


# ---------------------------------------------------------------------------
# small-count predictions
# ---------------------------------------------------------------------------

def test_predict_nil_fiber_over_point():
    pred = spectral.predict_small_count(lie.heisenberg(3), "point", 1)
    assert pred.count == 3
    assert pred.obstruction_case == 1


def test_predict_unipotent_circle():
    pred = spectral.predict_small_count(lie.abelian(2), "circle", 1,
                                        monodromy_action=[UNIP])
    assert pred.count == 3
    assert pred.obstruction_case == 2
    assert pred.per_bidegree == {(0, 1): 2, (1, 0): 1}


def test_predict_hyperbolic_circle():
    pred = spectral.predict_small_count(lie.abelian(2), "circle", 1,
                                        monodromy_action=[SOL])
    assert pred.count == 1
    assert pred.obstruction_case is None
    assert pred.per_bidegree == {(1, 0): 1}


def test_predict_circle_bundle_over_torus():
    pred = spectral.predict_small_count(lie.abelian(1), "torus2", 1,
                                        T=[Fraction(1)])
    assert pred.count == 3
    assert pred.obstruction_case == 3
    # without the curvature data the obstruction is invisible
    pred0 = spectral.predict_small_count(lie.abelian(1), "torus2", 1)
    assert pred0.count == 3 and pred0.obstruction_case is None


def test_predict_product_bundle():
    pred = spectral.predict_small_count(lie.abelian(2), "circle", 1)
    assert pred.count == 3
    assert pred.obstruction_case is None


def test_predict_rejects_unknown_base():
    with pytest.raises(InputError):
        spectral.predict_small_count(lie.abelian(2), "sphere", 1)


def test_cohomology_action_unipotent():
    # induced holonomy on degree-1 fiber cohomology keeps the unipotent block
    act = spectral.cohomology_action(lie.abelian(2),
                                     spectral.form_action(UNIP, 1), 1)
    assert not spectral.unipotent_factor(act).semisimple
