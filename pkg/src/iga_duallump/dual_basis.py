"""Gramian, exact and approximate dual bases of a univariate spline space.

The approximate inverse of the Gramian is built without any matrix inversion
from knot-dependent diagonal scalings and weighted difference operators. It is
optionally improved by a fixed number of corrector passes, each of which widens
the band by ``2p``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps

from .banded import BandedSymmetricMatrix, measured_bandwidth
from .errors import CapabilityError, ConfigurationError, NumericalError
from .spline_core import (
    MAX_DEGREE,
    QuadratureRule,
    SplineSpace,
    basis_products,
    eval_basis,
    gauss_rule,
)


def assemble_gramian(space: SplineSpace, rule: QuadratureRule | int | None = None) -> BandedSymmetricMatrix:
    """Gramian ``G_ij = (B_i, B_j)`` on the parametric domain."""
    if rule is None:
        rule = gauss_rule(space.degree + 1)
    elif isinstance(rule, (int, np.integer)):
        rule = gauss_rule(int(rule))
    if rule.exactness < 2 * space.degree:
        raise ConfigurationError(
            f"{rule.n_points}-point rule integrates degree {rule.exactness} < {2 * space.degree}"
        )
    G = basis_products(space, 0, 0, rule.n_points)
    return BandedSymmetricMatrix(0.5 * (G + G.T))


def exact_dual_matrix(G) -> np.ndarray:
    """Dense ``G^{-1}``; coefficients of the exact (globally supported) dual basis."""
    A = G.toarray() if hasattr(G, "toarray") else np.asarray(G, dtype=float)
    try:
        c = sla.cho_factor(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Gramian is not positive definite: {exc}") from exc
    return sla.cho_solve(c, np.eye(A.shape[0]))


def _moments(x: np.ndarray, lmax: int) -> np.ndarray:
    d = x - x.mean()
    s = np.empty(lmax + 1)
    s[0] = 1.0
    pw = np.ones_like(d)
    for l in range(1, lmax + 1):
        pw = pw * d
        s[l] = pw.mean()
    return s


def homogeneous_poly_F(v: int, points) -> float:
    """Symmetric homogeneous polynomial ``F_v`` of degree ``2v`` in the given points.

    Evaluated through centered moments ``s_l = mean((x - mean(x))**l)``.
    """
    if v < 0 or v > MAX_DEGREE:
        raise CapabilityError(f"F_v is only available for 0 <= v <= {MAX_DEGREE}")
    x = np.asarray(points, dtype=float).ravel()
    if v == 0:
        return 1.0
    r = float(x.size)
    if r < 1:
        raise ValueError("need at least one point")
    s = _moments(x, 2 * v)
    s2, s3, s4, s5, s6 = (s[k] if k < s.size else 0.0 for k in (2, 3, 4, 5, 6))
    if v == 1:
        return r * r * s2
    if v == 2:
        return (r**2 * (r * r - 3 * r + 3) * s2**2 - r**2 * (r - 1) * s4) / 2
    if v == 3:
        return (
            r**3 * (r - 2) * (r * r - 7 * r + 15) * s2**3
            - 3 * r**2 * (r - 2) * (r * r - 5 * r + 10) * s4 * s2
            - 2 * r**2 * (3 * r * r - 15 * r + 20) * s3**2
            + 2 * r**2 * (r - 1) * (r - 2) * s6
        ) / 6
    s7, s8 = s[7], s[8]
    if v == 4:
        return (
            r**4 * (r**4 - 18 * r**3 + 125 * r**2 - 384 * r + 441) * s2**4
            - 6 * r**3 * (r**4 - 16 * r**3 + 104 * r**2 - 305 * r + 336) * s4 * s2**2
            + 3 * r**2 * (r**4 - 14 * r**3 + 95 * r**2 - 322 * r + 420) * s4**2
            + 8 * r**2 * (r - 2) * (r - 3) * (r**2 - 7 * r + 21) * s6 * s2
            - 8 * r**3 * (r - 3) * (3 * r**2 - 24 * r + 56) * s3**2 * s2
            + 48 * r**2 * (r - 3) * (r**2 - 7 * r + 14) * s5 * s3
            - 6 * r**2 * (r - 1) * (r - 2) * (r - 3) * s8
        ) / 24
    s10 = s[10]
    return (
        r**5 * (r - 4) * (r**4 - 26 * r**3 + 261 * r**2 - 1176 * r + 2025) * s2**5
        - 10 * r**4 * (r - 4) * (r**4 - 24 * r**3 + 230 * r**2 - 999 * r + 1674) * s4 * s2**3
        + 20 * r**3 * (r - 4) * (r**4 - 20 * r**3 + 168 * r**2 - 645 * r + 972) * s6 * s2**2
        + 15 * r**3 * (r - 4) * (r**4 - 22 * r**3 + 211 * r**2 - 942 * r + 1620) * s4**2 * s2
        - 20 * r**4 * (3 * r**4 - 60 * r**3 + 470 * r**2 - 1665 * r + 2232) * s3**2 * s2**2
        - 30 * r**2 * (r - 2) * (r - 3) * (r - 4) * (r**2 - 9 * r + 36) * s8 * s2
        - 20 * r**2 * (r - 4) * (r**4 - 18 * r**3 + 173 * r**2 - 828 * r + 1512) * s6 * s4
        + 240 * r**3 * (r**4 - 19 * r**3 + 143 * r**2 - 493 * r + 648) * s5 * s3 * s2
        + 20 * r**4 * (r - 4) * (3 * r**2 - 30 * r + 83) * s4 * s3**2
        - 24 * r**2 * (5 * r**4 - 90 * r**3 + 655 * r**2 - 2250 * r + 3024) * s5**2
        - 240 * r**2 * (r - 3) * (r - 4) * (r**2 - 9 * r + 24) * s7 * s3
        + 24 * r**2 * (r - 1) * (r - 2) * (r - 3) * (r - 4) * s10
    ) / 120


def _check_degree(space: SplineSpace):
    if space.degree > MAX_DEGREE:
        raise CapabilityError(f"degree {space.degree} exceeds the supported maximum {MAX_DEGREE}")


def compute_matrix_U(v: int, space: SplineSpace) -> sps.dia_matrix:
    """Diagonal scaling of size ``N - v`` for level ``v`` of the approximate inverse."""
    _check_degree(space)
    p, t, N = space.degree, space.knots, space.dim
    if v < 0 or v > p:
        raise CapabilityError(f"level v={v} must satisfy 0 <= v <= p={p}")
    c = factorial(p + 1) * factorial(p - v) / (factorial(p + v + 1) * factorial(p + v))
    diag = np.empty(N - v)
    for j in range(N - v):
        span = t[j + p + v + 1] - t[j]
        diag[j] = c * (p + v + 1) / span * homogeneous_poly_F(v, t[j + 1 : j + p + v + 1])
    return sps.diags(diag)


def compute_matrix_D(v: int, space: SplineSpace) -> sps.csr_matrix:
    """Weighted difference operator ``diag(d) @ Delta`` of shape ``(N+p+1-k, N+p-k)``, ``k = p + v``."""
    _check_degree(space)
    p, t, N = space.degree, space.knots, space.dim
    if v < 1 or v > p:
        raise CapabilityError(f"level v={v} must satisfy 1 <= v <= p={p}")
    k = p + v
    m = N + p + 1 - k
    span = t[k : k + m] - t[:m]
    if np.any(span <= 0):
        raise ConfigurationError("degenerate knot span in difference operator")
    d = k / span
    delta = sps.eye(m, m - 1) - sps.eye(m, m - 1, k=-1)
    return sps.csr_matrix(sps.diags(d) @ delta)


@dataclass(frozen=True, eq=False)
class ApproxInverse:
    """Banded approximate inverse of the Gramian after ``passes`` corrector passes.

    ``base`` holds the zero-pass matrix from which the passes were built.
    """

    matrix: BandedSymmetricMatrix
    passes: int
    base: BandedSymmetricMatrix

    @property
    def bandwidth(self) -> int:
        return self.matrix.bandwidth

    @property
    def csr(self) -> sps.csr_matrix:
        return self.matrix.matrix

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def approximate_inverse(space: SplineSpace) -> ApproxInverse:
    """Zero-pass approximate Gramian inverse; no linear solves involved."""
    _check_degree(space)
    acc = sps.csr_matrix(compute_matrix_U(0, space))
    chain = None
    for v in range(1, space.degree + 1):
        Dv = compute_matrix_D(v, space)
        chain = Dv if chain is None else chain @ Dv
        acc = acc + chain @ compute_matrix_U(v, space) @ chain.T
    acc = sps.csr_matrix(0.5 * (acc + acc.T))
    acc.eliminate_zeros()
    m = BandedSymmetricMatrix(acc)
    return ApproxInverse(m, 0, m)


def improved_inverse(inv: ApproxInverse, G, r: int) -> ApproxInverse:
    """Apply corrector passes so that the result equals ``Ginv0 @ sum_i (-A)^i``, ``A = G Ginv0 - I``.

    Uses ``S_0 = I, S_k = I - A S_{k-1}`` so that no power of ``A`` is formed.
    """
    if r < 0:
        raise ValueError("number of passes must be nonnegative")
    if r == 0:
        return inv
    base = inv.base.matrix
    Gm = G.matrix if isinstance(G, BandedSymmetricMatrix) else sps.csr_matrix(G)
    n = base.shape[0]
    eye = sps.identity(n, format="csr")
    A = sps.csr_matrix(Gm @ base) - eye
    S = eye
    for _ in range(r):
        S = eye - A @ S
    X = sps.csr_matrix(base @ S)
    X = sps.csr_matrix(0.5 * (X + X.T))
    X.eliminate_zeros()
    return ApproxInverse(BandedSymmetricMatrix(X), r, inv.base)


def dual_inverse(space: SplineSpace, r: int = 0, G=None) -> ApproxInverse:
    """Convenience: approximate inverse with ``r`` corrector passes."""
    inv = approximate_inverse(space)
    if r == 0:
        return inv
    return improved_inverse(inv, assemble_gramian(space) if G is None else G, r)


def corrector_matrix(G, inv: ApproxInverse) -> np.ndarray:
    """Dense ``A = G @ Ginv0 - I`` for diagnostics."""
    Gd = G.toarray() if hasattr(G, "toarray") else np.asarray(G)
    return Gd @ inv.base.toarray() - np.eye(Gd.shape[0])


def biorthogonality_matrix(inv: ApproxInverse, G) -> sps.csr_matrix:
    """``(lambda_i, B_j)`` over the parametric domain, i.e. ``Ginv_r @ G``."""
    Gm = G.matrix if isinstance(G, BandedSymmetricMatrix) else sps.csr_matrix(G)
    return sps.csr_matrix(inv.csr @ Gm)


def support_elements(inv: ApproxInverse, space: SplineSpace, i: int) -> int:
    """Number of knot spans on which ``lambda_i`` is supported."""
    row = inv.csr.getrow(i)
    cols = row.indices[row.data != 0.0]
    if cols.size == 0:
        return 0
    lo = space.support_elements(int(cols.min()))[0]
    hi = space.support_elements(int(cols.max()))[1]
    return hi - lo


def max_support_elements(inv: ApproxInverse, space: SplineSpace) -> int:
    return max(support_elements(inv, space, i) for i in range(space.dim))


@dataclass(frozen=True)
class DualEval:
    """Approximate dual functions at one point; ``ders[k, l]`` is the ``k``-th derivative of ``lambda_{indices[l]}``."""

    indices: np.ndarray
    ders: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.ders[0]


def eval_approx_dual(inv: ApproxInverse, space: SplineSpace, x: float, nderiv: int = 0) -> DualEval:
    be = eval_basis(space, x, nderiv)
    cols = inv.csr[:, be.indices]  # (N, p+1)
    vals = cols @ be.ders.T  # (N, nderiv+1)
    rows = np.unique(cols.nonzero()[0])
    return DualEval(rows, np.asarray(vals[rows]).T)


def dual_collocation(inv: ApproxInverse, space: SplineSpace, x, deriv: int = 0) -> sps.csr_matrix:
    """Sparse ``C[k, i] = lambda_i^{(deriv)}(x_k)``."""
    from .spline_core import collocation_matrix

    return sps.csr_matrix(collocation_matrix(space, x, deriv) @ inv.csr.T)


__all__ = [
    "ApproxInverse",
    "DualEval",
    "approximate_inverse",
    "assemble_gramian",
    "biorthogonality_matrix",
    "compute_matrix_D",
    "compute_matrix_U",
    "corrector_matrix",
    "dual_collocation",
    "dual_inverse",
    "eval_approx_dual",
    "exact_dual_matrix",
    "homogeneous_poly_F",
    "improved_inverse",
    "max_support_elements",
    "measured_bandwidth",
    "support_elements",
]
