"""Benchmark problems: materials, geometries, boundary conditions and exact fields."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import jn_zeros, jv

from .assembly import BoundarySpec, ModelSpec, OperatorPair, TestScheme, assemble_operators
from .dynamics import (
    TimeIntegrationSetup,
    l2_error_against,
    project,
    run_dynamics,
    stable_timestep,
)
from .errors import ConfigurationError
from .geometry import GeometryMap, affine_map, annulus_map
from .spectral import (
    AnalyticalReference,
    analytical_bar,
    analytical_beam_free,
    analytical_plate_ss,
)
from .spline_core import TensorSpace, make_open_knot_vector

STEEL_PLATE = ModelSpec("kirchhoff-plate", rho=7.84e3, E=2e11, d=0.01, nu=0.0)
STEEL_BEAM = ModelSpec("euler-beam", rho=7.84e3, E=2e11, d=0.01, A_cs=0.1 * 0.01)
ALUMINIUM_PLATE = ModelSpec("kirchhoff-plate", rho=2.7e3, E=7e10, d=0.01, nu=0.0)
UNIT_BAR = ModelSpec("bar", rho=1.0, E=1.0)

SCHEMES = ("galerkin-consistent", "galerkin-lumped", "petrov-consistent", "petrov-lumped")
DYNAMICS_MODELS = ("beam-plate", "annulus")
EIGEN_MODELS = ("bar", "beam", "plate")


def parse_scheme(name: str, passes: int = 0) -> tuple[TestScheme, bool]:
    """``'petrov-lumped'`` -> (TestScheme('petrov', passes), True)."""
    if name not in SCHEMES:
        raise ConfigurationError(f"unknown scheme {name!r}; expected one of {', '.join(SCHEMES)}")
    kind, state = name.split("-")
    if kind == "galerkin" and passes:
        raise ConfigurationError("corrector passes only apply to petrov schemes")
    return TestScheme(kind, passes if kind == "petrov" else 0), state == "lumped"


@dataclass
class DynamicsProblem:
    """Free vibration with a known standing-wave solution ``exact(x, t)``."""

    name: str
    spec: ModelSpec
    gmap: GeometryMap
    bc: BoundarySpec
    T: float
    exact: Callable
    shape: Callable[[int, int], TensorSpace]

    def operators(self, p: int, n: int, scheme: TestScheme) -> OperatorPair:
        return assemble_operators(self.shape(p, n), scheme, self.gmap, self.spec, self.bc)


def beam_like_plate() -> DynamicsProblem:
    """Plate strip 1.0 x 0.1 m, pinned short edges, zero slope across the long edges."""
    spec = STEEL_PLATE
    omega = np.pi**2 * np.sqrt(spec.bending_stiffness / spec.mass_coefficient)

    def exact(x, t):
        return np.sin(np.pi * x[:, 0]) * np.cos(omega * t)

    def shape(p, n):
        return TensorSpace((make_open_knot_vector(0, 1, n, p), make_open_knot_vector(0, 1, 1, p)))

    bc = BoundarySpec((("pinned", "pinned"), ("symmetry", "symmetry")))
    return DynamicsProblem("beam-plate", spec, affine_map((1.0, 0.1)), bc, 1.5, exact, shape)


def annulus() -> DynamicsProblem:
    """Quarter annulus whose radii are Bessel zeros, so ``J_4(r) cos(4 theta)`` is a mode."""
    spec = STEEL_PLATE
    omega = np.sqrt(spec.bending_stiffness / spec.mass_coefficient)
    zeros = jn_zeros(4, 4)
    gmap = annulus_map(zeros[1], zeros[3])

    def exact(x, t):
        r = np.hypot(x[:, 0], x[:, 1])
        th = np.arctan2(x[:, 1], x[:, 0])
        return jv(4, r) * np.cos(4 * th) * np.cos(omega * t)

    def shape(p, n):
        s = make_open_knot_vector(0, 1, n, p)
        return TensorSpace((s, s))

    bc = BoundarySpec((("pinned", "pinned"), ("symmetry", "symmetry")))
    return DynamicsProblem("annulus", spec, gmap, bc, 0.6, exact, shape)


DYNAMICS_PROBLEMS = {"beam-plate": beam_like_plate, "annulus": annulus}


@dataclass
class DynamicsRun:
    n_ele: int
    error: float
    dt: float
    dt_rule: float
    dt_limit: float
    n_steps: int


def run_dynamics_case(problem: DynamicsProblem, p: int, n: int, scheme: str, passes: int = 0,
                      dt: float | None = None, safety: float = 0.9) -> DynamicsRun:
    """Relative L2 error at the final time.

    Without ``dt`` the step is the order-dependent rule capped at ``safety``
    times the measured stability limit.
    """
    test, lump = parse_scheme(scheme, passes)
    ops = problem.operators(p, n, test)
    a0 = project(ops, lambda x: problem.exact(x, 0.0))
    run_ops = ops.lumped() if lump else ops
    step, rule, limit = stable_timestep(run_ops, p, n, safety)
    if dt is not None:
        step = dt
    setup = TimeIntegrationSetup(step, problem.T, a0, np.zeros_like(a0))
    hist = run_dynamics(run_ops, setup)
    err = l2_error_against(hist, ops, problem.exact, problem.T)
    return DynamicsRun(n, err.value, step, rule, limit, setup.n_steps)


@dataclass
class EigenProblem:
    name: str
    spec: ModelSpec
    gmap: GeometryMap
    bc: BoundarySpec
    reference: Callable[[int], AnalyticalReference]
    shape: Callable

    def operators(self, p: int, n: int, scheme: TestScheme) -> OperatorPair:
        return assemble_operators(self.shape(p, n), scheme, self.gmap, self.spec, self.bc)


def free_beam() -> EigenProblem:
    spec = STEEL_BEAM
    return EigenProblem(
        "beam", spec, affine_map(1.0), BoundarySpec.free(1),
        lambda count: analytical_beam_free(count, spec),
        lambda p, n: make_open_knot_vector(0, 1, n, p),
    )


def ss_plate() -> EigenProblem:
    spec = ALUMINIUM_PLATE

    def shape(p, n):
        s = make_open_knot_vector(0, 1, n, p)
        return TensorSpace((s, s))

    return EigenProblem(
        "plate", spec, affine_map((1.0, 1.0)), BoundarySpec.uniform("pinned", 2),
        lambda count: analytical_plate_ss(count, spec), shape,
    )


def fixed_bar() -> EigenProblem:
    return EigenProblem(
        "bar", UNIT_BAR, affine_map(1.0), BoundarySpec.uniform("pinned", 1),
        lambda count: analytical_bar(count),
        lambda p, n: make_open_knot_vector(0, 1, n, p),
    )


EIGEN_PROBLEMS = {"beam": free_beam, "plate": ss_plate, "bar": fixed_bar}
