"""Generalized eigenproblems, analytical references and spectral error measures."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
from scipy.optimize import brentq

from .assembly import MassInverse, ModelSpec, OperatorPair, _factors
from .dynamics import FieldSampler
from .export import write_table
from .errors import ConfigurationError, NumericalError, PairingError

IMAG_RTOL = 1e-8
IMAG_FLOOR = 1e-12  # relative to the largest |lambda|
RESIDUAL_TOL = 1e-8
CLUSTER_RTOL = 1e-9


@dataclass
class SpectrumResult:
    """Eigenvalues ascending (real parts) and matching eigenvectors as columns."""

    eigenvalues: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n_complex: int = 0  # eigenvalues whose imaginary part was dropped

    @property
    def n_dof(self) -> int:
        return self.eigenvalues.size


def _dense(A) -> np.ndarray:
    return A.toarray() if sps.issparse(A) else np.asarray(A, dtype=float)


def _is_symmetric(A: np.ndarray) -> bool:
    scale = np.abs(A).max()
    return bool(np.abs(A - A.T).max() <= 1e-12 * (scale if scale else 1.0))


def solve_gep(K, M, check_residual: bool = True, imag_policy: str = "raise") -> SpectrumResult:
    """All eigenpairs of ``K v = lambda M v``.

    Diagonal ``M`` with symmetric ``K`` is reduced to a symmetric standard
    problem; other lumped states go through the explicit mass inverse; the
    consistent case uses a dense generalized solver.

    Imaginary parts up to ``1e-8 |lambda|`` are rounding noise and dropped.
    Larger ones raise :class:`NumericalError` unless ``imag_policy='real'``,
    which keeps the real parts, counts them in ``n_complex`` and exempts them
    from the residual check.
    """
    if imag_policy not in ("raise", "real"):
        raise ConfigurationError(f"unknown imag_policy {imag_policy!r}")
    Kd, Md = _dense(K), _dense(M)
    if Kd.shape != Md.shape or Kd.shape[0] != Kd.shape[1]:
        raise ConfigurationError("K and M must be square and of equal size")
    n = Kd.shape[0]
    offdiag = Md - np.diag(np.diag(Md))
    diagonal = not np.any(offdiag)
    symK = _is_symmetric(Kd)
    try:
        if diagonal and symK:
            d = np.diag(Md)
            if np.any(d <= 0):
                raise NumericalError("lumped mass has nonpositive entries")
            s = 1.0 / np.sqrt(d)
            lam, Y = sla.eigh(s[:, None] * Kd * s[None, :])
            V = s[:, None] * Y
        elif symK and _is_symmetric(Md):
            lam, V = sla.eigh(Kd, Md)
        else:
            mi = MassInverse(sps.csr_matrix(Md))
            if mi.P.size < n:
                lam, V = sla.eig(mi.apply(Kd))
            else:
                lam, V = sla.eig(Kd, Md)
    except (np.linalg.LinAlgError, ValueError) as exc:
        cond = np.linalg.cond(Md)
        raise NumericalError(f"eigensolver failed ({exc}); cond(M) = {cond:.3e}") from exc
    lam = np.asarray(lam)
    bad = np.zeros(lam.size, dtype=bool)
    if np.iscomplexobj(lam):
        big = np.abs(lam).max() if lam.size else 0.0
        bad = np.abs(lam.imag) > IMAG_RTOL * np.abs(lam) + IMAG_FLOOR * big
        if np.any(bad) and imag_policy == "raise":
            k = int(np.argmax(np.where(bad, np.abs(lam.imag), 0)))
            raise NumericalError(f"eigenvalue {lam[k]} has a significant imaginary part")
        lam = lam.real
        V = V.real
    order = np.argsort(lam, kind="stable")
    lam, V, bad = lam[order], V[:, order], bad[order]
    V = V / np.linalg.norm(V, axis=0)
    res = np.linalg.norm(Kd @ V - (Md @ V) * lam, axis=0) / np.linalg.norm(Kd, 2)
    if check_residual and np.any(res[~bad] > RESIDUAL_TOL):
        raise NumericalError(f"eigen residual {res[~bad].max():.3e} exceeds {RESIDUAL_TOL}")
    return SpectrumResult(lam, V, res, int(bad.sum()))


def solve_operator_pair(ops: OperatorPair, **kw) -> SpectrumResult:
    return solve_gep(ops.K, ops.M, **kw)


@dataclass
class AnalyticalReference:
    """Exact eigenvalues and mode shapes.

    ``modes(n, x)`` evaluates mode ``n`` (0-based, ascending) at physical
    points ``x`` of shape ``(npts, dim)``. ``n_rigid`` leading eigenvalues are
    zero.
    """

    kind: str
    eigenvalues: np.ndarray
    modes: Callable[[int, np.ndarray], np.ndarray]
    boundary: str
    n_rigid: int = 0

    def clusters(self, rtol: float = CLUSTER_RTOL) -> list[np.ndarray]:
        lam = self.eigenvalues
        out, start = [], 0
        for k in range(1, lam.size + 1):
            if k == lam.size or abs(lam[k] - lam[start]) > rtol * max(abs(lam[start]), abs(lam[k])):
                if k < lam.size and lam[start] == 0 and lam[k] == 0:
                    continue
                out.append(np.arange(start, k))
                start = k
        return out

    def cluster_of(self, n: int) -> np.ndarray:
        for c in self.clusters():
            if n in c:
                return c
        raise PairingError(f"mode {n} outside the reference range")


def free_beam_roots(count: int) -> np.ndarray:
    """First ``count`` positive roots of ``cos(x) cosh(x) = 1``."""
    f = lambda x: np.cos(x) - 2.0 * np.exp(-x) / (1.0 + np.exp(-2.0 * x))
    roots = []
    for k in range(1, count + 1):
        c = (k + 0.5) * np.pi
        lo, hi = c - 0.5, c + 0.5
        try:
            roots.append(brentq(f, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200))
        except ValueError as exc:
            raise NumericalError(f"root bracketing failed for k={k}") from exc
    return np.array(roots)


def _free_free_shape(beta: float, L: float, x: np.ndarray) -> np.ndarray:
    """Free-free mode ``cosh + cos - s (sinh + sin)`` evaluated without overflow."""
    bL = beta * L
    bx = beta * x
    if bL < 30:
        s = (np.cosh(bL) - np.cos(bL)) / (np.sinh(bL) - np.sin(bL))
        return np.cosh(bx) + np.cos(bx) - s * (np.sinh(bx) + np.sin(bx))
    # s = 1 + delta with delta tiny; cosh - s sinh = e^{-bx}(1+s)/2 - e^{bx} delta / 2
    e = np.exp(-bL)
    denom = 1.0 - e * e - 2.0 * np.sin(bL) * e
    delta_scaled = (e - np.cos(bL) + np.sin(bL)) * 2.0 / denom  # delta * e^{bL}
    s = 1.0 + delta_scaled * e
    hyper = 0.5 * (1.0 + s) * np.exp(-bx) - 0.5 * delta_scaled * np.exp(bx - bL)
    return hyper + np.cos(bx) - s * np.sin(bx)


def analytical_beam_free(count: int, spec: ModelSpec) -> AnalyticalReference:
    """Free-free Euler-Bernoulli beam: two rigid modes then ``(EI / rho A) beta^4``."""
    if count < 1:
        raise ConfigurationError("count must be >= 1")
    L = spec.L_x
    nflex = max(count - 2, 0)
    roots = free_beam_roots(nflex) / L if nflex else np.zeros(0)
    c = spec.beam_EI / spec.mass_coefficient
    lam = np.concatenate(([0.0, 0.0], c * roots**4))[:count]

    def modes(n, x):
        xs = np.asarray(x)[:, 0]
        if n == 0:
            return np.ones_like(xs)
        if n == 1:
            return xs - 0.5 * L
        return _free_free_shape(roots[n - 2], L, xs)

    return AnalyticalReference("euler-beam", lam, modes, "free", n_rigid=min(2, count))


def analytical_plate_ss(count: int, spec: ModelSpec, lengths=(1.0, 1.0)) -> AnalyticalReference:
    """Simply supported rectangular plate, ``(D/rho d) pi^4 ((m/a)^2 + (n/b)^2)^2``."""
    a, b = lengths
    c = spec.bending_stiffness / spec.mass_coefficient
    kmax = int(np.ceil(1.2 * np.sqrt(count) * max(a, b) / min(a, b))) + 3
    pairs = [(m, n) for m in range(1, kmax + 1) for n in range(1, kmax + 1)]
    vals = np.array([c * np.pi**4 * ((m / a) ** 2 + (n / b) ** 2) ** 2 for m, n in pairs])
    order = np.lexsort((np.array([m for m, _ in pairs]), vals))[:count]
    pairs = [pairs[k] for k in order]
    lam = vals[order]

    def modes(k, x):
        m, n = pairs[k]
        return np.sin(m * np.pi * x[:, 0] / a) * np.sin(n * np.pi * x[:, 1] / b)

    ref = AnalyticalReference("kirchhoff-plate", lam, modes, "simply-supported")
    ref.pairs = pairs
    return ref


def analytical_bar(count: int, length: float = 1.0, speed: float = 1.0) -> AnalyticalReference:
    """Fixed-fixed bar: ``omega_n = n pi c / L``."""
    n = np.arange(1, count + 1)
    lam = (n * np.pi * speed / length) ** 2

    def modes(k, x):
        return np.sin((k + 1) * np.pi * np.asarray(x)[:, 0] / length)

    return AnalyticalReference("bar", lam, modes, "fixed")


def normalized_spectrum(result: SpectrumResult, ref: AnalyticalReference, kind: str = "eigenvalue") -> np.ndarray:
    """Rows ``(n/N, ratio)`` pairing flexible modes in ascending order.

    ``kind='eigenvalue'`` gives ``lambda_h / lambda``; ``'frequency'`` gives the
    square root of that ratio.
    """
    skip = ref.n_rigid
    lam_h = result.eigenvalues[skip:]
    lam = ref.eigenvalues[skip:]
    if lam.size < lam_h.size:
        raise ConfigurationError(f"reference has {lam.size} flexible values, spectrum has {lam_h.size}")
    ratio = lam_h / lam[: lam_h.size]
    if kind == "frequency":
        ratio = np.sqrt(np.abs(ratio)) * np.sign(ratio)
    elif kind != "eigenvalue":
        raise ConfigurationError(f"unknown normalization {kind!r}")
    N = result.n_dof
    n = np.arange(skip + 1, skip + lam_h.size + 1)
    return np.column_stack((n / N, ratio))


def fraction_within(ratios, tol: float) -> float:
    r = np.asarray(ratios)
    return float(np.mean(np.abs(r - 1.0) <= tol)) if r.size else 0.0


def rigid_mode_count(result: SpectrumResult, rtol: float = 1e-6, anchor: int = 2) -> int:
    """Eigenvalues below ``rtol`` times the first clearly flexible one."""
    lam = np.abs(result.eigenvalues)
    if lam.size <= anchor:
        return 0
    ref = lam[anchor]
    return int(np.sum(lam < rtol * ref))


def mode_l2_error(result: SpectrumResult, ref: AnalyticalReference, n: int, ops: OperatorPair,
                  sampler: FieldSampler | None = None) -> float:
    """Relative L2 distance between discrete mode ``n`` and its reference eigenspace.

    Both fields are normalized to unit L2 norm; the discrete mode is compared
    with its normalized L2 projection onto the span of the reference cluster,
    which makes the error independent of sign and of rotations inside the
    eigenspace.
    """
    if sampler is None:
        nq = max(s.degree for s in _factors(ops.trial)) + 3
        sampler = FieldSampler(ops.trial, ops.gmap, nq)
    uh = sampler.values(ops.full_coefficients(result.vectors[:, n]))
    cluster = ref.cluster_of(n)
    basis = np.column_stack([ref.modes(k, sampler.x) for k in cluster])
    w = sampler.wJ
    G = basis.T @ (w[:, None] * basis)
    nu = np.sqrt(np.sum(w * uh**2))
    if nu == 0:
        raise PairingError(f"mode {n} has zero norm")
    uh = uh / nu
    coef = np.linalg.solve(G, basis.T @ (w * uh))
    proj = basis @ coef
    npj = np.sqrt(np.sum(w * proj**2))
    if npj < 1e-8:
        raise PairingError(f"mode {n} is orthogonal to reference cluster {cluster.tolist()}")
    return float(np.sqrt(np.sum(w * (uh - proj / npj) ** 2)))


def eigenvalue_error(result: SpectrumResult, ref: AnalyticalReference, n: int) -> float:
    return float(abs(result.eigenvalues[n] - ref.eigenvalues[n]) / abs(ref.eigenvalues[n]))


def convergence_rate(pairs) -> float:
    """Least-squares slope of ``log(error)`` against ``log(h)``."""
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 3:
        raise ConfigurationError("need at least three (h, error) pairs")
    if np.any(arr <= 0):
        raise ConfigurationError("h and error must be positive")
    return float(np.polyfit(np.log(arr[:, 0]), np.log(arr[:, 1]), 1)[0])


def write_spectrum_csv(path, result: SpectrumResult, ref: AnalyticalReference, kind: str = "eigenvalue") -> None:
    rows = normalized_spectrum(result, ref, kind)
    skip = ref.n_rigid
    table = (
        (skip + k + 1, frac, result.eigenvalues[skip + k], ref.eigenvalues[skip + k], ratio)
        for k, (frac, ratio) in enumerate(rows)
    )
    write_table(path, ["n", "n_over_N", "lambda_h", "lambda_ref", "ratio"], table)


def write_modes_csv(path, result: SpectrumResult, count: int | None = None) -> None:
    V = result.vectors[:, : count or result.n_dof]
    table = ([k + 1] + list(V[:, k]) for k in range(V.shape[1]))
    write_table(path, ["mode"] + [f"coeff_{i}" for i in range(V.shape[0])], table)
