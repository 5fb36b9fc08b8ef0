import numpy as np
import pytest

from iga_duallump.assembly import TestScheme
from iga_duallump.benchmarks import ALUMINIUM_PLATE, STEEL_BEAM, fixed_bar, free_beam, ss_plate
from iga_duallump.errors import ConfigurationError, NumericalError, PairingError
from iga_duallump.spectral import (
    SpectrumResult,
    analytical_bar,
    analytical_beam_free,
    analytical_plate_ss,
    convergence_rate,
    eigenvalue_error,
    fraction_within,
    free_beam_roots,
    mode_l2_error,
    normalized_spectrum,
    rigid_mode_count,
    solve_gep,
    solve_operator_pair,
    write_spectrum_csv,
)


def test_two_by_two_gep():
    K = np.array([[6.0, -6.0], [-6.0, 6.0]])
    M = np.array([[2.0, 1.0], [1.0, 2.0]])
    res = solve_gep(K, M)
    np.testing.assert_allclose(res.eigenvalues, [0.0, 12.0], atol=1e-12)


def test_identity_mass_gives_standard_eigenvalues():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((7, 7))
    K = A + A.T
    res = solve_gep(K, np.eye(7))
    np.testing.assert_allclose(res.eigenvalues, np.linalg.eigvalsh(K), atol=1e-12)


def test_diagonal_mass_path_matches_dense():
    rng = np.random.default_rng(4)
    A = rng.standard_normal((6, 6))
    K = A @ A.T
    d = rng.uniform(0.5, 2.0, 6)
    lam = solve_gep(K, np.diag(d)).eigenvalues
    ref = np.sort(np.linalg.eigvals(np.diag(1 / d) @ K).real)
    np.testing.assert_allclose(lam, ref, rtol=1e-10)


def test_nonsymmetric_pair_with_real_spectrum():
    K = np.array([[2.0, 1.0], [0.0, 3.0]])
    res = solve_gep(K, np.eye(2))
    np.testing.assert_allclose(res.eigenvalues, [2.0, 3.0])
    assert res.n_complex == 0


def test_imaginary_eigenvalues_policy():
    K = np.array([[1.0, -1.0], [1.0, 1.0]])
    with pytest.raises(NumericalError):
        solve_gep(K, np.eye(2))
    res = solve_gep(K, np.eye(2), imag_policy="real")
    np.testing.assert_allclose(res.eigenvalues, [1.0, 1.0])
    assert res.n_complex == 2
    with pytest.raises(ConfigurationError):
        solve_gep(K, np.eye(2), imag_policy="ignore")


def test_shape_mismatch_rejected():
    with pytest.raises(ConfigurationError):
        solve_gep(np.eye(2), np.eye(3))


def test_residuals_small():
    ops = free_beam().operators(3, 12, TestScheme("petrov", 1)).lumped()
    res = solve_operator_pair(ops)
    assert res.residuals.max() <= 1e-8


def test_first_free_beam_root():
    assert free_beam_roots(1)[0] == pytest.approx(4.730040744862704, abs=1e-9)


def test_free_beam_roots_satisfy_frequency_equation():
    x = free_beam_roots(40)
    # cos x cosh x - 1 scaled by 1/cosh x to stay finite
    np.testing.assert_allclose(np.cos(x) - 1 / np.cosh(x), 0.0, atol=1e-13)
    assert np.all(np.diff(x) > 3.0)
    np.testing.assert_allclose(x[-5:], (np.arange(36, 41) + 0.5) * np.pi, rtol=1e-12)


def test_free_beam_reference():
    ref = analytical_beam_free(5, STEEL_BEAM)
    assert ref.n_rigid == 2
    np.testing.assert_array_equal(ref.eigenvalues[:2], 0.0)
    c = STEEL_BEAM.beam_EI / STEEL_BEAM.mass_coefficient
    assert ref.eigenvalues[2] == pytest.approx(c * 4.730040744862704**4, rel=1e-12)


def test_free_beam_mode_shapes_are_finite_for_high_modes():
    ref = analytical_beam_free(300, STEEL_BEAM)
    x = np.linspace(0, 1, 201)[:, None]
    for n in (2, 50, 299):
        v = ref.modes(n, x)
        assert np.all(np.isfinite(v))
        assert abs(abs(v[0]) - 2.0) < 1e-8 and abs(abs(v[-1]) - 2.0) < 1e-8


def test_plate_fundamental():
    ref = analytical_plate_ss(3, ALUMINIUM_PLATE)
    c = ALUMINIUM_PLATE.bending_stiffness / ALUMINIUM_PLATE.mass_coefficient
    assert ref.eigenvalues[0] == pytest.approx(4 * np.pi**4 * c, rel=1e-14)
    assert ref.eigenvalues[1] == ref.eigenvalues[2]
    assert len(ref.cluster_of(1)) == 2


def test_plate_ordering_against_brute_force():
    count = 300
    ref = analytical_plate_ss(count, ALUMINIUM_PLATE)
    c = ALUMINIUM_PLATE.bending_stiffness / ALUMINIUM_PLATE.mass_coefficient
    brute = np.sort([c * np.pi**4 * (m * m + n * n) ** 2 for m in range(1, 41) for n in range(1, 41)])
    np.testing.assert_allclose(ref.eigenvalues, brute[:count], rtol=1e-14)


def test_bar_reference():
    ref = analytical_bar(5)
    np.testing.assert_allclose(np.sqrt(ref.eigenvalues), np.pi * np.arange(1, 6), rtol=1e-15)


def test_discrete_bar_fundamental():
    prob = fixed_bar()
    res = solve_operator_pair(prob.operators(3, 64, TestScheme("galerkin")))
    assert np.sqrt(res.eigenvalues[0]) == pytest.approx(np.pi, rel=1e-8)


@pytest.mark.parametrize("scheme,lump", [("galerkin", False), ("galerkin", True), ("petrov", True)])
def test_free_beam_has_two_rigid_modes(scheme, lump):
    ops = free_beam().operators(3, 20, TestScheme(scheme))
    res = solve_operator_pair(ops.lumped() if lump else ops)
    assert rigid_mode_count(res) == 2
    assert np.abs(res.eigenvalues[:2]).max() < 1e-6 * res.eigenvalues[2]


def test_normalized_spectrum_of_exact_values():
    ref = analytical_beam_free(12, STEEL_BEAM)
    res = SpectrumResult(ref.eigenvalues.copy(), np.eye(12))
    rows = normalized_spectrum(res, ref)
    np.testing.assert_allclose(rows[:, 1], 1.0)
    np.testing.assert_allclose(rows[:, 0], np.arange(3, 13) / 12)
    assert fraction_within(rows[:, 1], 0.01) == 1.0
    freq = normalized_spectrum(res, ref, "frequency")
    np.testing.assert_allclose(freq[:, 1], 1.0)
    with pytest.raises(ConfigurationError):
        normalized_spectrum(res, ref, "period")


def test_fraction_within():
    assert fraction_within([1.0, 1.005, 1.02, 0.98], 0.01) == 0.5
    assert fraction_within([], 0.01) == 0.0


def test_mode_error_sign_invariant():
    prob = free_beam()
    ops = prob.operators(3, 24, TestScheme("galerkin"))
    res = solve_operator_pair(ops)
    ref = prob.reference(res.n_dof)
    e = mode_l2_error(res, ref, 4, ops)
    res.vectors[:, 4] *= -1
    assert mode_l2_error(res, ref, 4, ops) == pytest.approx(e, rel=1e-12)
    assert e < 1e-3


def test_mode_error_inside_degenerate_plate_pair():
    prob = ss_plate()
    ops = prob.operators(3, 8, TestScheme("galerkin"))
    res = solve_operator_pair(ops)
    ref = prob.reference(res.n_dof)
    v1, v2 = res.vectors[:, 1].copy(), res.vectors[:, 2].copy()
    e1 = mode_l2_error(res, ref, 1, ops)
    res.vectors[:, 1] = np.cos(0.7) * v1 + np.sin(0.7) * v2
    e2 = mode_l2_error(res, ref, 1, ops)
    assert e1 < 1e-2 and e2 < 1e-2


def test_mode_error_rejects_zero_vector():
    prob = free_beam()
    ops = prob.operators(2, 8, TestScheme("galerkin"))
    res = solve_operator_pair(ops)
    res.vectors[:, 3] = 0
    with pytest.raises(PairingError):
        mode_l2_error(res, prob.reference(res.n_dof), 3, ops)


def test_eigenvalue_error_converges_for_bar():
    prob = fixed_bar()
    pairs = []
    for n in (8, 16, 32):
        res = solve_operator_pair(prob.operators(2, n, TestScheme("galerkin")))
        pairs.append((1 / n, eigenvalue_error(res, prob.reference(res.n_dof), 0)))
    assert convergence_rate(pairs) == pytest.approx(4.0, abs=0.2)


def test_convergence_rate_exact_cubic():
    assert convergence_rate([(h, 2 * h**3) for h in (0.1, 0.05, 0.025, 0.0125)]) == pytest.approx(3.0, abs=1e-12)


def test_convergence_rate_noisy_cubic():
    noise = [1.02, 0.98, 1.02, 0.98]
    hs = [0.1, 0.05, 0.025, 0.0125]
    rate = convergence_rate([(h, h**3 * f) for h, f in zip(hs, noise)])
    assert 2.9 <= rate <= 3.1


def test_convergence_rate_constant_error():
    assert convergence_rate([(0.1, 1e-3), (0.05, 1e-3), (0.025, 1e-3)]) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("pairs", [[(0.1, 1.0), (0.05, 0.5)], [(0.1, 1.0), (0.05, 0.0), (0.02, 0.1)]])
def test_convergence_rate_rejects(pairs):
    with pytest.raises(ConfigurationError):
        convergence_rate(pairs)


def test_spectrum_csv(tmp_path):
    ref = analytical_bar(4)
    res = SpectrumResult(ref.eigenvalues * 1.01, np.eye(4))
    path = tmp_path / "s.csv"
    write_spectrum_csv(path, res, ref)
    lines = path.read_text().splitlines()
    assert lines[0] == "n,n_over_N,lambda_h,lambda_ref,ratio"
    assert len(lines) == 5
    assert float(lines[1].split(",")[-1]) == pytest.approx(1.01)
