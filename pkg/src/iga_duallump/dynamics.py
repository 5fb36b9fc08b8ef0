"""Explicit central-difference time integration and L2 error evaluation."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .assembly import MassInverse, OperatorPair, _factors, _point_batches
from .errors import ConfigurationError, StabilityError
from .geometry import GeometryMap

BLOWUP_FACTOR = 1e6
DEFAULT_FRAMES = 200


def critical_timestep_rule(p: int, n_ele: int) -> float:
    """Order-dependent step size ``(p / (2 n_ele))**p``."""
    if p < 1 or n_ele < 1:
        raise ConfigurationError("need p >= 1 and n_ele >= 1")
    return (p / (2.0 * n_ele)) ** p


@dataclass
class TimeIntegrationSetup:
    dt: float
    T: float
    u0: np.ndarray
    v0: np.ndarray
    force: Callable[[float], np.ndarray] | None = None
    stride: int | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if not self.T >= self.dt:
            raise ConfigurationError("final time must be at least one step")
        self.u0 = np.asarray(self.u0, dtype=float)
        self.v0 = np.asarray(self.v0, dtype=float)
        if self.u0.shape != self.v0.shape:
            raise ConfigurationError("u0 and v0 differ in shape")

    @property
    def n_steps(self) -> int:
        return int(np.ceil(self.T / self.dt - 1e-9))


@dataclass
class TimeHistory:
    times: np.ndarray
    states: np.ndarray  # (n_frames, n)
    dt: float = 0.0
    final_velocity: np.ndarray | None = None

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ConfigurationError(f"time {t} was not sampled")
        return self.states[k]

    def to_csv(self, path) -> None:
        n = self.states.shape[1]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"coeff_{i}" for i in range(n)])
            for t, row in zip(self.times, self.states):
                w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])


def central_difference(K, minv, setup: TimeIntegrationSetup) -> TimeHistory:
    """Leapfrog form of the central-difference scheme.

    ``K`` is the (reduced) stiffness, ``minv`` applies the inverse mass (a
    :class:`MassInverse`, a sparse matrix or a callable). The run uses
    ``n_steps`` steps of size ``T / n_steps`` (never larger than ``setup.dt``)
    so that the last frame lands on ``T``.
    """
    if isinstance(minv, MassInverse):
        Minv = minv.explicit()
        apply = Minv.__matmul__
    elif sps.issparse(minv):
        apply = minv.__matmul__
    else:
        apply = minv
    K = sps.csr_matrix(K) if sps.issparse(K) else np.asarray(K, dtype=float)
    nsteps = setup.n_steps
    dt = setup.T / nsteps
    stride = setup.stride or max(1, nsteps // DEFAULT_FRAMES)
    u = setup.u0.copy()
    force = setup.force

    def accel(t, u):
        f = -(K @ u)
        if force is not None:
            f = f + force(t)
        return apply(f)

    v_half = setup.v0 + 0.5 * dt * accel(0.0, u)
    norm0 = max(np.linalg.norm(u), np.linalg.norm(setup.v0) * dt, np.finfo(float).tiny)
    limit = BLOWUP_FACTOR * norm0
    times = [0.0]
    frames = [u.copy()]
    if force is None and sps.issparse(K):
        A = sps.csr_matrix(Minv @ K) if isinstance(minv, MassInverse) else None
    else:
        A = None
    # divergence is detected below, so overflow inside the loop is expected
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, nsteps + 1):
            u += dt * v_half
            a = -(A @ u) if A is not None else accel(k * dt, u)
            if k < nsteps:
                v_half += dt * a
            if k % stride == 0 or k == nsteps:
                nu = np.linalg.norm(u)
                if not np.isfinite(nu) or nu > limit:
                    raise StabilityError(f"central difference diverged at step {k} with dt={dt:.6g}", dt=dt)
                times.append(k * dt)
                frames.append(u.copy())
    v_end = v_half + 0.5 * dt * a
    return TimeHistory(np.array(times), np.array(frames), dt, v_end)


def run_dynamics(ops: OperatorPair, setup: TimeIntegrationSetup) -> TimeHistory:
    return central_difference(ops.K, ops.mass_inverse(), setup)


def load_vector(ops: OperatorPair, fn: Callable, nq: int | None = None) -> np.ndarray:
    """Reduced load ``int phi_i f dOmega`` for the test functions of ``ops``."""
    factors = _factors(ops.trial)
    dim = len(factors)
    p = max(s.degree for s in factors)
    nq = nq or p + 3
    N = int(np.prod([s.dim for s in factors]))
    out = np.zeros(N)
    for pd in _point_batches(factors, ops.gmap, nq, 0):
        x = ops.gmap.evaluate(pd.xi)
        val = pd.B[(0,) * dim]
        fx = fn(x)
        scale = pd.w if ops.scheme.is_petrov else pd.w * pd.J
        out += val.T @ (scale * fx)
    return ops.W @ out


def project(ops: OperatorPair, fn: Callable, nq: int | None = None) -> np.ndarray:
    """Reduced coefficients of ``fn`` from the consistent mass of ``ops``."""
    rhs = load_vector(ops, fn, nq) * ops.spec.mass_coefficient
    return spla.spsolve(sps.csc_matrix(ops.M_consistent), rhs)


@dataclass
class FieldSampler:
    """Evaluates a B-spline field and the physical measure at quadrature points."""

    trial: object
    gmap: GeometryMap
    nq: int

    def __post_init__(self):
        factors = _factors(self.trial)
        self.B = []
        self.x = []
        self.wJ = []
        for pd in _point_batches(factors, self.gmap, self.nq, 0):
            self.B.append(pd.B[(0,) * len(factors)])
            self.x.append(self.gmap.evaluate(pd.xi))
            self.wJ.append(pd.w * pd.J)
        self.B = sps.vstack(self.B, format="csr")
        self.x = np.vstack(self.x)
        self.wJ = np.concatenate(self.wJ)

    def values(self, coeffs) -> np.ndarray:
        return self.B @ coeffs

    def l2_norm(self, vals) -> float:
        return float(np.sqrt(np.sum(self.wJ * vals**2)))


@dataclass
class L2Error:
    value: float
    relative: bool


def l2_error(sampler: FieldSampler, coeffs, exact_values) -> L2Error:
    """Relative L2 error; falls back to the absolute error if the exact field vanishes."""
    diff = sampler.l2_norm(sampler.values(coeffs) - exact_values)
    ref = sampler.l2_norm(exact_values)
    if ref <= 1e-300 or ref < 1e-14 * max(diff, 1e-300):
        return L2Error(diff, False)
    return L2Error(diff / ref, True)


def l2_error_against(history: TimeHistory, ops: OperatorPair, exact: Callable, t: float, nq: int | None = None) -> L2Error:
    """Relative L2 displacement error at time ``t``; ``exact(x, t)`` takes physical points."""
    factors = _factors(ops.trial)
    nq = nq or max(s.degree for s in factors) + 3
    sampler = FieldSampler(ops.trial, ops.gmap, nq)
    coeffs = ops.full_coefficients(history.at(t))
    return l2_error(sampler, coeffs, exact(sampler.x, t))


def max_frequency(ops: OperatorPair, tol: float = 1e-6) -> float:
    """Largest ``sqrt|lambda|`` of ``M^{-1} K`` for the current mass state."""
    minv = ops.mass_inverse()
    A = sps.csr_matrix(minv.explicit() @ ops.K)
    n = A.shape[0]
    if n <= 400:
        lam = np.abs(np.linalg.eigvals(A.toarray())).max()
    else:
        v0 = np.ones(n) / np.sqrt(n)
        lam = np.abs(spla.eigs(A, k=1, which="LM", v0=v0, tol=tol, return_eigenvectors=False)).max()
    return float(np.sqrt(lam))


def stable_timestep(ops: OperatorPair, p: int, n_ele: int, safety: float = 0.9) -> tuple[float, float, float]:
    """Step size ``min(rule, safety * 2 / omega_max)``.

    Returns ``(dt, rule, limit)`` where ``limit = 2 / omega_max`` is the
    central-difference stability bound of this discretization.
    """
    rule = critical_timestep_rule(p, n_ele)
    limit = 2.0 / max_frequency(ops)
    return min(rule, safety * limit), rule, limit
