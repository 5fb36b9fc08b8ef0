import numpy as np
import pytest
import scipy.sparse as sps

from iga_duallump.assembly import TestScheme
from iga_duallump.benchmarks import beam_like_plate, run_dynamics_case
from iga_duallump.dynamics import (
    FieldSampler,
    TimeIntegrationSetup,
    central_difference,
    critical_timestep_rule,
    l2_error,
    l2_error_against,
    project,
    run_dynamics,
    stable_timestep,
)
from iga_duallump.errors import ConfigurationError, StabilityError


@pytest.mark.parametrize("p,n,dt", [(2, 16, 0.00390625), (3, 8, 0.006591796875), (5, 64, (5 / 128) ** 5)])
def test_timestep_rule(p, n, dt):
    assert critical_timestep_rule(p, n) == pytest.approx(dt, rel=1e-15)


def test_timestep_rule_p5_magnitude():
    assert critical_timestep_rule(5, 64) == pytest.approx(9.1e-8, rel=0.01)


def test_timestep_rule_rejects():
    with pytest.raises(ConfigurationError):
        critical_timestep_rule(0, 4)


def test_setup_validation():
    with pytest.raises(ConfigurationError):
        TimeIntegrationSetup(0.0, 1.0, [0.0], [0.0])
    with pytest.raises(ConfigurationError):
        TimeIntegrationSetup(0.5, 0.1, [0.0], [0.0])
    with pytest.raises(ConfigurationError):
        TimeIntegrationSetup(0.1, 1.0, [0.0, 1.0], [0.0])


def _oscillator(dt, T=1.0):
    K = np.array([[np.pi**2]])
    setup = TimeIntegrationSetup(dt, T, np.array([1.0]), np.array([0.0]))
    return central_difference(K, lambda f: f, setup)


def test_harmonic_oscillator():
    h = _oscillator(1e-4)
    assert h.final[0] == pytest.approx(-1.0, abs=1e-3)


def test_second_order_in_time():
    # quarter period: the displacement error is the phase error
    e1 = abs(_oscillator(0.02, 0.5).final[0])
    e2 = abs(_oscillator(0.01, 0.5).final[0])
    assert e1 / e2 == pytest.approx(4.0, rel=0.05)


def test_free_flight_is_exact():
    setup = TimeIntegrationSetup(0.1, 1.0, np.array([1.0, -2.0]), np.array([0.5, 3.0]))
    h = central_difference(sps.csr_matrix((2, 2)), lambda f: f, setup)
    for t, u in zip(h.times, h.states):
        np.testing.assert_allclose(u, [1.0 + 0.5 * t, -2.0 + 3.0 * t], rtol=1e-13, atol=1e-13)


def test_history_layout(tmp_path):
    setup = TimeIntegrationSetup(1e-3, 1.0, np.array([1.0]), np.array([0.0]), stride=10)
    h = central_difference(np.array([[1.0]]), lambda f: f, setup)
    assert np.all(np.diff(h.times) > 0)
    assert h.times[0] == 0.0 and h.states[0, 0] == 1.0
    assert h.times[-1] == pytest.approx(1.0)
    path = tmp_path / "hist.csv"
    h.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,coeff_0"
    assert len(lines) == h.times.size + 1


def test_blow_up_names_step_size():
    setup = TimeIntegrationSetup(1.0, 50.0, np.array([1.0]), np.array([0.0]))
    with pytest.raises(StabilityError) as info:
        central_difference(np.array([[100.0]]), lambda f: f, setup)
    assert info.value.dt == pytest.approx(1.0)
    assert "dt=1" in str(info.value)


def test_reversibility():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((6, 6))
    K = A @ A.T + 6 * np.eye(6)
    u0, v0 = rng.standard_normal(6), rng.standard_normal(6)
    fwd = central_difference(K, lambda f: f, TimeIntegrationSetup(1e-3, 0.2, u0, v0))
    back = central_difference(K, lambda f: f, TimeIntegrationSetup(1e-3, 0.2, fwd.final, -fwd.final_velocity))
    assert np.linalg.norm(back.final - u0) <= 1e-6 * np.linalg.norm(u0)


def _plate_strip(p, n):
    prob = beam_like_plate()
    return prob, prob.operators(p, n, TestScheme("petrov"))


@pytest.mark.parametrize("p", [2, 3, 4, 5])
def test_polynomial_projection_is_exact(p):
    prob, ops = _plate_strip(p, 6)
    f = lambda x: x[:, 0] ** (p - 1) * (1 - x[:, 0])
    a = ops.full_coefficients(project(ops, f))
    sampler = FieldSampler(ops.trial, ops.gmap, p + 3)
    assert l2_error(sampler, a, f(sampler.x)).value <= 1e-10


def test_l2_error_self_and_zero_field():
    prob, ops = _plate_strip(3, 8)
    sampler = FieldSampler(ops.trial, ops.gmap, 6)
    a = ops.full_coefficients(project(ops, lambda x: prob.exact(x, 0.0)))
    vals = sampler.values(a)
    assert l2_error(sampler, a, vals).value == 0.0
    e = l2_error(sampler, a, np.zeros_like(vals))
    assert not e.relative and e.value > 0


def test_initial_error_is_projection_error():
    prob, ops = _plate_strip(3, 8)
    a0 = project(ops, lambda x: prob.exact(x, 0.0))
    lumped = ops.lumped()
    h = run_dynamics(lumped, TimeIntegrationSetup(1e-5, 1e-4, a0, np.zeros_like(a0)))
    e0 = l2_error_against(h, ops, prob.exact, 0.0).value
    sampler = FieldSampler(ops.trial, ops.gmap, 6)
    direct = l2_error(sampler, ops.full_coefficients(a0), prob.exact(sampler.x, 0.0)).value
    assert e0 == pytest.approx(direct, rel=1e-12)
    with pytest.raises(ConfigurationError):
        h.at(0.5)


def test_stable_timestep_caps_rule():
    prob, ops = _plate_strip(3, 8)
    dt, rule, limit = stable_timestep(ops.lumped(), 3, 8)
    assert dt == min(rule, 0.9 * limit)
    assert limit > 0


def test_petrov_lumped_strip_p3_32_elements():
    run = run_dynamics_case(beam_like_plate(), 3, 32, "petrov-lumped")
    assert 1e-6 < run.error < 1e-4


def test_timestep_rule_stable_for_petrov_lumped_strip():
    """Runs every (p, n) with the order-dependent rule; p = 5 stops at 32 elements."""
    prob = beam_like_plate()
    unstable = []
    for p in (2, 3, 4, 5):
        for n in (8, 16, 32, 64):
            if p == 5 and n == 64:
                continue
            ops = prob.operators(p, n, TestScheme("petrov")).lumped()
            a0 = project(ops, lambda x: prob.exact(x, 0.0))
            setup = TimeIntegrationSetup(critical_timestep_rule(p, n), prob.T, a0, np.zeros_like(a0))
            try:
                run_dynamics(ops, setup)
            except StabilityError:
                unstable.append((p, n))
    assert not unstable, f"rule step size diverged for (p, n) = {unstable}"
