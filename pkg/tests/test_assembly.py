from itertools import combinations

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sps

from iga_duallump.assembly import (
    BoundarySpec,
    MassInverse,
    ModelSpec,
    TestScheme,
    apply_dirichlet,
    assemble_mass,
    assemble_operators,
    assemble_stiffness,
    direction_constraint,
    invert_partial_lumped,
    row_sum_lump,
)
from iga_duallump.dual_basis import assemble_gramian, dual_inverse
from iga_duallump.dynamics import load_vector
from iga_duallump.errors import CapabilityError, ConfigurationError, LumpingError
from iga_duallump.geometry import affine_map, annulus_map
from iga_duallump.spline_core import SplineSpace, TensorSpace, make_open_knot_vector

BAR = ModelSpec("bar", rho=1.0, E=1.0)
BEAM = ModelSpec("euler-beam", rho=7840.0, E=2e11, d=0.01, A_cs=1e-3)
PLATE = ModelSpec("kirchhoff-plate", rho=2700.0, E=7e10, d=0.01, nu=0.3)
PETROV = TestScheme("petrov")
GALERKIN = TestScheme("galerkin")


def _square(p, n):
    s = make_open_knot_vector(0, 1, n, p)
    return TensorSpace((s, s))


def test_model_spec_validation():
    with pytest.raises(ConfigurationError):
        ModelSpec("shell", 1.0, 1.0)
    with pytest.raises(ConfigurationError):
        ModelSpec("bar", -1.0, 1.0)
    with pytest.raises(ConfigurationError):
        ModelSpec("kirchhoff-plate", 1.0, 1.0, nu=0.5)


def test_plate_bending_stiffness():
    assert PLATE.bending_stiffness == pytest.approx(7e10 * 1e-6 / (12 * (1 - 0.09)))
    assert PLATE.mass_coefficient == pytest.approx(27.0)


def test_scheme_validation():
    with pytest.raises(ConfigurationError):
        TestScheme("galerkin", 1)
    with pytest.raises(ConfigurationError):
        TestScheme("collocation")


def test_bar_single_linear_element():
    s = SplineSpace(1, [0, 0, 1, 1])
    K = assemble_stiffness(s, GALERKIN, affine_map(1.0), BAR).toarray()
    np.testing.assert_allclose(K, [[1, -1], [-1, 1]], atol=1e-14)
    M = assemble_mass(s, GALERKIN, affine_map(1.0), BAR).toarray()
    np.testing.assert_allclose(M, np.array([[2, 1], [1, 2]]) / 6, atol=1e-14)


@pytest.mark.parametrize("p", [0, 1])
def test_fourth_order_needs_degree_two(p):
    s = make_open_knot_vector(0, 1, 4, p)
    with pytest.raises(CapabilityError):
        assemble_operators(s, GALERKIN, affine_map(1.0), BEAM)


def test_plate_needs_tensor_space():
    with pytest.raises(ConfigurationError):
        assemble_operators(make_open_knot_vector(0, 1, 4, 2), GALERKIN, affine_map(1.0), PLATE)


@pytest.mark.parametrize("passes", [0, 1, 2])
def test_petrov_mass_kronecker_on_unit_square(passes):
    ts = _square(3, 5)
    spec = ModelSpec("kirchhoff-plate", rho=1.0, E=1.0, d=1.0)
    M = assemble_mass(ts, TestScheme("petrov", passes), affine_map((1.0, 1.0)), spec, mass_route="physical")
    s = ts.factors[0]
    G = assemble_gramian(s)
    X = (dual_inverse(s, passes, G).csr @ G.matrix).toarray()
    assert np.abs(M.toarray() - np.kron(X, X)).max() <= 1e-10


@pytest.mark.parametrize("p", [2, 3, 4, 5])
def test_petrov_beam_mass_is_scaled_biorthogonality(p):
    s = make_open_knot_vector(0, 1, 12, p)
    M = assemble_mass(s, PETROV, affine_map(1.0), BEAM, mass_route="physical").toarray()
    G = assemble_gramian(s)
    ref = BEAM.mass_coefficient * (dual_inverse(s).csr @ G.matrix).toarray()
    assert np.abs(M - ref).max() <= 1e-10 * np.abs(ref).max()


@pytest.mark.parametrize("gmap", [affine_map((1.0, 1.0)), annulus_map(2.0, 3.0)], ids=["square", "annulus"])
def test_petrov_row_sums_equal_mass_coefficient(gmap):
    ops = assemble_operators(_square(2, 6), PETROV, gmap, PLATE, mass_route="physical")
    np.testing.assert_allclose(np.asarray(ops.M.sum(axis=1)).ravel(), PLATE.mass_coefficient, rtol=1e-10)
    L = ops.lumped()
    assert L.mass_state == "row-sum"
    np.testing.assert_allclose(L.M.toarray(), PLATE.mass_coefficient * np.eye(ops.n), atol=1e-10 * PLATE.mass_coefficient)


def test_galerkin_lumped_positive_diagonal():
    ops = assemble_operators(make_open_knot_vector(0, 1, 10, 4), GALERKIN, affine_map(1.0), BEAM).lumped()
    d = ops.M.diagonal()
    assert np.all(d > 0)
    assert sps.csr_matrix(ops.M - sps.diags(d)).count_nonzero() == 0
    assert d.sum() == pytest.approx(BEAM.mass_coefficient, rel=1e-12)


def test_lumping_rejects_nonpositive_rows():
    with pytest.raises(LumpingError):
        row_sum_lump(np.array([[1.0, -2.0], [0.5, 1.0]]))


def test_protected_rows_unchanged():
    M = sps.csr_matrix(np.array([[4.0, 1.0, 0.0], [1.0, 4.0, 1.0], [0.0, 1.0, 4.0]]))
    L = row_sum_lump(M, [0]).toarray()
    np.testing.assert_array_equal(L[0], M.toarray()[0])
    np.testing.assert_allclose(L[1:], [[0, 6, 0], [0, 0, 5]])


@pytest.mark.parametrize("p", [2, 3, 4, 5])
def test_galerkin_stiffness_symmetric_and_annihilates_rigid_modes(p):
    s = make_open_knot_vector(0, 2, 9, p)
    gmap = affine_map(2.0)
    greville = np.array([s.knots[i + 1:i + p + 1].mean() for i in range(s.dim)])
    for scheme in (GALERKIN, PETROV):
        K = assemble_stiffness(s, scheme, gmap, BEAM).toarray()
        scale = np.abs(K).max()
        assert np.abs(K @ np.ones(s.dim)).max() <= 1e-9 * scale
        assert np.abs(K @ greville).max() <= 1e-9 * scale
        if scheme is GALERKIN:
            assert np.abs(K - K.T).max() <= 1e-10 * scale


@pytest.mark.parametrize("gmap", [affine_map((1.0, 0.5)), annulus_map(1.0, 2.5)], ids=["affine", "annulus"])
def test_free_plate_stiffness_annihilates_constants(gmap):
    for scheme in (GALERKIN, PETROV):
        K = assemble_stiffness(_square(3, 4), scheme, gmap, PLATE)
        assert np.abs(K @ np.ones(K.shape[0])).max() <= 1e-9 * abs(K).max()


def test_petrov_stiffness_is_nonsymmetric():
    K = assemble_stiffness(make_open_knot_vector(0, 1, 8, 3), PETROV, affine_map(1.0), BEAM).toarray()
    assert np.abs(K - K.T).max() > 1e-6 * np.abs(K).max()


def test_simply_supported_beam_eliminates_end_coefficients():
    s = make_open_knot_vector(0, 1, 10, 3)
    ops = assemble_operators(s, PETROV, affine_map(1.0), BEAM, BoundarySpec.uniform("pinned"))
    assert ops.n == s.dim - 2
    np.testing.assert_array_equal(ops.constraints[0].eliminated, [0, s.dim - 1])
    L = ops.lumped()
    assert L.mass_state == "partial"
    interior = np.setdiff1d(np.arange(ops.n), ops.protected)
    row = L.M.toarray()[interior]
    np.testing.assert_allclose(row[np.arange(interior.size), interior], BEAM.mass_coefficient, rtol=1e-12)
    assert MassInverse(L.M).block_sizes and max(MassInverse(L.M).block_sizes) <= 2 * (3 + 1)


def test_replaced_rows_are_bsplines():
    s = make_open_knot_vector(0, 1, 10, 2)
    c = direction_constraint(s.dim, "pinned", "free", dual_inverse(s))
    W = c.W.toarray()
    for i in c.replaced:
        if i in c.eliminated:
            continue
        k = int(np.nonzero(c.T.toarray()[i])[0][0])
        np.testing.assert_array_equal(W[k], np.eye(s.dim)[i])


def test_free_beam_full_lumping():
    ops = assemble_operators(make_open_knot_vector(0, 1, 10, 3), PETROV, affine_map(1.0), BEAM)
    assert ops.protected.size == 0
    assert MassInverse(ops.lumped().M).is_diagonal


def test_plate_boundary_ring_eliminated():
    ts = TensorSpace((make_open_knot_vector(0, 1, 5, 2), make_open_knot_vector(0, 1, 7, 3)))
    ops = assemble_operators(ts, PETROV, affine_map((1.0, 1.0)), PLATE, BoundarySpec.uniform("pinned", 2))
    N1, N2 = ts.shape
    assert ts.dim - ops.n == 2 * N1 + 2 * N2 - 4


def test_apply_dirichlet_matches_direct_assembly():
    s = make_open_knot_vector(0, 1, 8, 2)
    bc = BoundarySpec.uniform("pinned")
    free = assemble_operators(s, PETROV, affine_map(1.0), BEAM)
    a = apply_dirichlet(free, bc)
    b = assemble_operators(s, PETROV, affine_map(1.0), BEAM, bc)
    assert abs(a.M - b.M).max() == 0 and abs(a.K - b.K).max() == 0
    with pytest.raises(ConfigurationError):
        apply_dirichlet(b, bc)


def test_mass_inverse_diagonal():
    d = np.array([2.0, 4.0, 8.0])
    mi = invert_partial_lumped(sps.diags(d))
    assert mi.is_diagonal
    np.testing.assert_allclose(mi(np.ones(3)), 1 / d)


def test_mass_inverse_three_by_three_block():
    rng = np.random.default_rng(1)
    B = rng.random((3, 3)) + 3 * np.eye(3)
    M = np.diag(rng.uniform(1, 2, 7))
    M[2:5, 2:5] = B
    M[2, 0] = 0.3
    mi = MassInverse(sps.csr_matrix(M))
    assert mi.block_sizes == [3]
    dense = sla.inv(M)
    np.testing.assert_allclose(mi.explicit().toarray()[2:5, 2:5], dense[2:5, 2:5], atol=1e-12)
    np.testing.assert_allclose(mi.explicit().toarray(), dense, atol=1e-12)


@pytest.mark.parametrize("bc", [BoundarySpec.uniform("pinned"), BoundarySpec.uniform("clamped"),
                                BoundarySpec((("symmetry", "pinned"),))], ids=["pinned", "clamped", "mixed"])
def test_mass_inverse_round_trip(bc):
    ops = assemble_operators(make_open_knot_vector(0, 1, 16, 4), TestScheme("petrov", 1), affine_map(1.0), BEAM, bc)
    M = ops.lumped().M
    mi = MassInverse(M)
    v = np.random.default_rng(5).standard_normal(ops.n)
    np.testing.assert_allclose(mi(M @ v), v, rtol=1e-10, atol=1e-10)


@pytest.mark.parametrize("p", [2, 3, 4, 5])
def test_lumped_petrov_mass_reproduces_polynomials(p):
    s = make_open_knot_vector(0, 1, 11, p)
    ops = assemble_operators(s, PETROV, affine_map(1.0), BEAM)
    L = ops.lumped()
    # B-spline coefficients of x^k are averaged products of the inner knots (blossom)
    for k in range(p + 1):
        f = lambda x, k=k: x[:, 0] ** k
        a = L.mass_inverse()(load_vector(L, f) * BEAM.mass_coefficient)
        exact = []
        for i in range(s.dim):
            t = s.knots[i + 1:i + p + 1]
            combos = list(combinations(t, k))
            exact.append(np.mean([np.prod(c) for c in combos]) if k else 1.0)
        np.testing.assert_allclose(a, exact, atol=1e-9)


def test_lumped_petrov_mass_reproduces_polynomials_2d():
    ts = _square(2, 5)
    ops = assemble_operators(ts, PETROV, affine_map((1.0, 1.0)), PLATE).lumped()
    f = lambda x: 1.0 + 2 * x[:, 0] - x[:, 1]
    a = ops.mass_inverse()(load_vector(ops, f) * PLATE.mass_coefficient)
    s = ts.factors[0]
    g = np.array([s.knots[i + 1:i + 3].mean() for i in range(s.dim)])
    exact = (1.0 + 2 * g[:, None] - g[None, :]).ravel()
    np.testing.assert_allclose(a, exact, atol=1e-9)


def test_consistent_petrov_and_galerkin_spectra_coincide():
    s = make_open_knot_vector(0, 1, 20, 3)
    lam = []
    for scheme in (PETROV, GALERKIN):
        ops = assemble_operators(s, scheme, affine_map(1.0), BEAM, BoundarySpec.uniform("pinned"))
        w = np.sort(sla.eigvals(ops.K.toarray(), ops.M.toarray()).real)
        lam.append(w)
    np.testing.assert_allclose(lam[0], lam[1], rtol=1e-8)


def test_mass_routes_agree_on_annulus():
    ts = _square(3, 6)
    kw = dict(trial=ts, scheme=TestScheme("petrov", 1), gmap=annulus_map(2.0, 3.5), spec=PLATE)
    a = assemble_operators(**kw, mass_route="parametric")
    b = assemble_operators(**kw, mass_route="physical")
    assert abs(a.M - b.M).max() <= 1e-9 * abs(a.M).max()
