"""Superconnection layer: flatness identities, the discretized complex, and
spectra checked against closed forms for flat and monodromy-twisted circles."""

import numpy as np
import pytest

from nilcollapse import lie
from nilcollapse import superconnection as sconn
from nilcollapse.numerics import InputError

SOL = np.array([[2.0, 1.0], [1.0, 1.0]])
MU = (3.0 + np.sqrt(5.0)) / 2.0  # larger eigenvalue of SOL


def circle(n=32):
    return sconn.BaseModel("circle", n)


def torus(n=12):
    return sconn.BaseModel("torus2", n)


# ---------------------------------------------------------------------------
# base model and bundle bookkeeping
# ---------------------------------------------------------------------------

def test_base_model_validation():
    with pytest.raises(InputError):
        sconn.BaseModel("line", 32)
    with pytest.raises(InputError):
        sconn.BaseModel("circle", 4)
    with pytest.raises(InputError):
        sconn.BaseModel("circle", 32, (1.0, 2.0))
    b = sconn.BaseModel("torus2", 16, (2.0, 3.0))
    assert b.dim == 2 and b.npoints == 256
    assert b.steps == (2.0 / 16, 3.0 / 16)
    assert b.cell_volume == pytest.approx(6.0 / 256)


def test_base_model_points_stagger():
    b = circle(8)
    pts = b.points()
    mid = b.points(stagger=(0,))
    assert pts.shape == (8, 1)
    assert np.allclose(mid - pts, 1.0 / 16)


def test_graded_bundle_validation():
    with pytest.raises(InputError):
        sconn.GradedBundle([])
    with pytest.raises(InputError):
        sconn.GradedBundle([2], [[np.array([[1.0, 1.0], [1.0, 1.0]])]])
    # torus monodromies must commute
    a = np.array([[1.0, 1.0], [0.0, 1.0]])
    b = np.array([[1.0, 0.0], [1.0, 1.0]])
    with pytest.raises(InputError):
        sconn.GradedBundle([2], [[a], [b]], generators=2)
    sconn.GradedBundle([2], [[a], [a]], generators=2)


def test_superconnection_shape_validation():
    bundle = sconn.GradedBundle([1, 1])
    with pytest.raises(InputError):
        sconn.Superconnection(bundle, circle(), a0=[np.zeros((2, 1))])
    with pytest.raises(InputError):
        # a2 needs a two-dimensional base
        sconn.Superconnection(bundle, circle(), a2=[np.ones((1, 1))])


# ---------------------------------------------------------------------------
# flatness
# ---------------------------------------------------------------------------

def test_flatness_of_affine_models():
    for alg, base in [(lie.heisenberg(3), circle(8)),
                      (lie.abelian(2), circle(8)),
                      (lie.abelian(3), torus(8))]:
        sc = sconn.from_affine_bundle(alg, base)
        assert sconn.check_flatness(sc).ok()


def test_flatness_of_twisted_circle():
    sc = sconn.from_affine_bundle(lie.abelian(2), circle(8),
                                  monodromy_action=[SOL])
    rep = sconn.check_flatness(sc)
    assert rep.ok() and rep.max_violation < 1e-12


def test_circle_bundle_model_is_flat():
    sc = sconn.circle_bundle_model(torus(8), 1.0)
    assert sconn.check_flatness(sc).ok()
    with pytest.raises(InputError):
        sconn.circle_bundle_model(circle(8), 1.0)


def test_from_affine_bundle_rejects_non_automorphism():
    bad = np.diag([1.0, 1.0, 2.0])  # scales the center only: not compatible
    with pytest.raises(sconn.FlatnessError):
        sconn.from_affine_bundle(lie.heisenberg(3), circle(8),
                                 monodromy_action=[bad])


def test_flatness_report_names_violated_identity():
    bundle = sconn.GradedBundle([1, 1], [[np.array([[1.0]]), np.array([[2.0]])]])
    sc = sconn.Superconnection(bundle, circle(8), a0=[np.array([[1.0]])])
    rep = sconn.check_flatness(sc)
    assert not rep.ok()
    assert rep.worst_identity() == "parallel_a0"

    bundle = sconn.GradedBundle([1, 1], generators=2)
    sc = sconn.Superconnection(bundle, torus(8), a0=[np.array([[1.0]])],
                               a2=[np.array([[1.0]])])
    rep = sconn.check_flatness(sc)
    assert not rep.ok()
    assert rep.worst_identity() == "curvature"


def test_contraction_matrix_matches_exact_blocks():
    from nilcollapse.spectral import contraction_blocks
    v = [1, -2, 3]
    blocks = contraction_blocks(v, 3)
    for b in range(1, 4):
        assert np.allclose(sconn.contraction_matrix(np.array(v, float), b),
                           blocks[b - 1].to_numpy())


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def test_identity_metric_fails_equivariance_for_twisted_bundle():
    bundle = sconn.GradedBundle([2], [[SOL]])
    h = sconn.MetricField.identity(bundle)
    with pytest.raises(InputError):
        h.check_equivariance(circle(16))


def test_equivariant_metric_passes_its_own_check():
    bundle = sconn.GradedBundle([2], [[SOL]])
    h = sconn.MetricField.equivariant(bundle, circle(16))
    h.check_equivariance(circle(16))
    # samples are symmetric positive definite
    g = h.sample(0, circle(16).points())
    assert np.abs(g - np.transpose(g, (0, 2, 1))).max() < 1e-12
    assert np.linalg.eigvalsh(g).min() > 0


def test_equivariant_metric_needs_real_logarithm():
    flip = np.array([[0.0, 1.0], [1.0, 0.0]])
    bundle = sconn.GradedBundle([2], [[flip]])
    with pytest.raises(InputError):
        sconn.MetricField.equivariant(bundle, circle(16))


# ---------------------------------------------------------------------------
# discrete complex
# ---------------------------------------------------------------------------

def test_discrete_differential_squares_to_zero():
    sc = sconn.circle_bundle_model(torus(8), 1.0)
    dc = sconn.DiscreteComplex(sc, sconn.MetricField.identity(sc.bundle))
    for p in range(3):
        prod = dc.differential(p + 1) @ dc.differential(p)
        assert prod.nnz == 0 or abs(prod).max() < 1e-13


def test_discrete_differential_squares_to_zero_twisted():
    sc = sconn.from_affine_bundle(lie.abelian(2), circle(8),
                                  monodromy_action=[SOL])
    h = sconn.MetricField.equivariant(sc.bundle, sc.base)
    dc = sconn.DiscreteComplex(sc, h)
    for p in range(2):
        prod = dc.differential(p + 1) @ dc.differential(p)
        assert abs(prod).max() < 1e-12


def test_component_bookkeeping():
    sc = sconn.circle_bundle_model(torus(8), 1.0)
    dc = sconn.DiscreteComplex(sc, sconn.MetricField.identity(sc.bundle))
    # degree p mixes base-form degree a and fiber degree b with a + b = p
    assert dc.components(0) == [((), 0)]
    assert len(dc.components(1)) == 3
    assert dc.dim(1) == 3 * 64


def test_flat_circle_function_spectrum():
    # untwisted rank-1 bundle: eigenvalues (2 pi k)^2 with O(N^-2) error
    bundle = sconn.GradedBundle([1])
    sc = sconn.Superconnection(bundle, circle(64))
    h = sconn.MetricField.identity(bundle)
    rep = sconn.spectrum(sc, h, 0, count=5)
    exact = np.array([0.0] + [(2 * np.pi) ** 2] * 2 + [(4 * np.pi) ** 2] * 2)
    assert np.allclose(rep.eigenvalues, exact, rtol=5e-3)
    assert rep.eigenvalues[0] < 1e-12


def test_twisted_circle_closed_form():
    # one-step holonomy 2 on a line bundle: lowest eigenvalue (ln 2)^2
    bundle = sconn.GradedBundle([1], [[np.array([[2.0]])]])
    sc = sconn.Superconnection(bundle, circle(128))
    h = sconn.MetricField.equivariant(bundle, circle(128))
    rep = sconn.spectrum(sc, h, 0, count=3)
    ln2 = np.log(2.0)
    exact = np.array([ln2 ** 2,
                      (2 * np.pi) ** 2 + ln2 ** 2,
                      (2 * np.pi) ** 2 + ln2 ** 2])
    assert np.allclose(rep.eigenvalues, exact, rtol=1e-2)


def test_hodge_kernel_dimensions_circle_bundle():
    # harmonic dimensions of the adiabatic model at delta = 1: (1, 2, 2, 1)
    sc = sconn.circle_bundle_model(torus(10), 1.0)
    h = sconn.MetricField.identity(sc.bundle)
    for p, expect in enumerate([1, 2, 2, 1]):
        rep = sconn.spectrum(sc, h, p, count=6)
        assert int(np.sum(rep.eigenvalues < 1e-10)) == expect


def test_spectrum_empty_degree():
    bundle = sconn.GradedBundle([1])
    sc = sconn.Superconnection(bundle, circle(8))
    h = sconn.MetricField.identity(bundle)
    rep = sconn.spectrum(sc, h, 5)
    assert rep.eigenvalues.size == 0


# ---------------------------------------------------------------------------
# stability checks
# ---------------------------------------------------------------------------

def test_perturbation_bound_on_coupling_pair():
    base = torus(10)
    sc1 = sconn.circle_bundle_model(base, 0.7)
    sc2 = sconn.circle_bundle_model(base, 0.9)
    h = sconn.MetricField.identity(sc1.bundle)
    rep = sconn.perturbation_check(sc1, sc2, h, 1)
    assert rep.holds
    assert rep.operator_norm == pytest.approx(0.2, rel=1e-6)
    assert rep.max_difference <= rep.bound
    assert rep.bound == pytest.approx(sconn.PERTURBATION_CONSTANT * 0.2)


def test_perturbation_check_requires_same_connection_part():
    base = circle(16)
    b1 = sconn.GradedBundle([2], [[SOL]])
    b2 = sconn.GradedBundle([2], [[np.eye(2)]])
    sc1 = sconn.Superconnection(b1, base)
    sc2 = sconn.Superconnection(b2, base)
    h = sconn.MetricField.equivariant(b1, base)
    with pytest.raises(InputError):
        sconn.perturbation_check(sc1, sc2, h, 0)


def test_metric_continuity_conformal():
    # a global conformal factor cancels out of the symmetrized operator
    sc = sconn.circle_bundle_model(torus(8), 0.5)
    h1 = sconn.MetricField.identity(sc.bundle)
    h2 = sconn.MetricField.conformal(h1, np.e)
    rep = sconn.metric_continuity_check(sc, h1, h2, 1, eps=1.0)
    assert rep.eps_out < 1e-8


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def test_load_bundle_fiber_form(tmp_path):
    payload = {
        "base": {"kind": "circle", "resolution": 16},
        "fiber": "heisenberg:3",
        "a0": "ce_differential",
        "metric": "identity",
    }
    import json
    path = tmp_path / "bundle.json"
    path.write_text(json.dumps(payload))
    sc, h = sconn.load_bundle(str(path))
    assert sc.bundle.ranks == (1, 3, 3, 1)
    assert sconn.check_flatness(sc).ok()


def test_load_bundle_explicit_form():
    payload = {
        "base": {"kind": "circle", "resolution": 16},
        "ranks": [2],
        "monodromy": [[[["2", "1"], ["1", "1"]]]],
        "metric": "equivariant",
    }
    sc, h = sconn.load_bundle(payload)
    assert np.allclose(sc.bundle.monodromy(0, 0), SOL)
    rep = sconn.spectrum(sc, h, 0, count=2)
    assert rep.eigenvalues[0] == pytest.approx(np.log(MU) ** 2, rel=1e-3)


def test_load_bundle_errors():
    with pytest.raises(InputError):
        sconn.load_bundle({"fiber": "heisenberg:3"})
    with pytest.raises(InputError):
        sconn.load_bundle({"base": {"kind": "circle", "resolution": 16},
                           "fiber": "heisenberg:3", "metric": "hyperbolic"})
    with pytest.raises(InputError):
        sconn.load_bundle({"base": {"kind": "circle", "resolution": 16}})
