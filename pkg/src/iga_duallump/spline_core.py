"""Univariate and tensor-product B-spline spaces.

Basis evaluation follows the sparse convention: only the ``p + 1`` functions
that are active on the knot span containing a point are returned, together
with the global index of the first of them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sps

from .errors import CapabilityError, ConfigurationError, DomainError

MAX_DEGREE = 5
MAX_GAUSS_POINTS = 30
KNOT_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class SplineSpace:
    """Maximally smooth spline space on an open knot vector.

    Attributes
    ----------
    degree : int
        Polynomial degree ``p``.
    knots : np.ndarray
        Open knot vector (end knots repeated ``p + 1`` times, interior knots
        simple). Stored read-only.
    """

    degree: int
    knots: np.ndarray

    def __post_init__(self):
        p = int(self.degree)
        kv = np.array(self.knots, dtype=float)
        kv.setflags(write=False)
        object.__setattr__(self, "degree", p)
        object.__setattr__(self, "knots", kv)
        if p < 0:
            raise ValueError("degree must be nonnegative")
        if kv.ndim != 1 or kv.size < 2 * (p + 1):
            raise ValueError(f"knot vector too short for degree {p}")
        a, b = kv[0], kv[-1]
        if not b > a:
            raise ValueError("knot vector must span a nonempty interval")
        tol = KNOT_RTOL * (b - a)
        if np.any(np.diff(kv) < -tol):
            raise ValueError("knot vector must be nondecreasing")
        if np.any(np.abs(kv[: p + 1] - a) > tol) or np.any(np.abs(kv[-p - 1 :] - b) > tol):
            raise ValueError("knot vector must be open (end multiplicity p + 1)")
        interior = kv[p + 1 : kv.size - p - 1]
        bps = np.concatenate(([a], interior, [b]))
        if np.any(np.diff(bps) <= tol):
            raise ValueError("interior knots must be simple and strictly inside the domain")

    @property
    def dim(self) -> int:
        """Number of basis functions ``N``."""
        return self.knots.size - self.degree - 1

    @property
    def breakpoints(self) -> np.ndarray:
        p = self.degree
        return self.knots[p : self.knots.size - p]

    @property
    def n_elements(self) -> int:
        return self.breakpoints.size - 1

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    @property
    def element_lengths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    def find_span(self, x) -> np.ndarray:
        """Knot-span index ``s`` with ``knots[s] <= x < knots[s + 1]`` (last span closed)."""
        x = np.asarray(x, dtype=float)
        a, b = self.domain
        tol = KNOT_RTOL * (b - a)
        if np.any(x < a - tol) or np.any(x > b + tol):
            raise DomainError(f"point outside [{a}, {b}]")
        s = np.searchsorted(self.knots, x, side="right") - 1
        return np.clip(s, self.degree, self.dim - 1)

    def element_of(self, x) -> np.ndarray:
        return self.find_span(x) - self.degree

    def support_elements(self, i: int) -> tuple[int, int]:
        """Half-open range of element indices in the support of ``B_i``."""
        p = self.degree
        return max(i - p, 0), min(i + 1, self.n_elements)


def make_open_knot_vector(a: float, b: float, n_elements: int, p: int) -> SplineSpace:
    """Uniform open knot vector on ``[a, b]``.

    Breakpoints are generated by affine indexing, not by accumulating ``h``.
    """
    if p > MAX_DEGREE:
        raise CapabilityError(f"degree {p} exceeds the supported maximum {MAX_DEGREE}")
    if p < 0:
        raise CapabilityError("degree must be nonnegative")
    if n_elements < 1:
        raise ValueError("n_elements must be >= 1")
    if not b > a:
        raise ValueError("need b > a")
    k = np.arange(n_elements + 1)
    bps = a + (b - a) * k / n_elements
    bps[-1] = b
    knots = np.concatenate((np.full(p, a), bps, np.full(p, b)))
    return SplineSpace(p, knots)


@dataclass(frozen=True)
class BasisEval:
    """Active basis functions at one point.

    ``ders[k, l]`` is the ``k``-th derivative of ``B_{first + l}``.
    """

    element: int
    first: int
    ders: np.ndarray

    @property
    def indices(self) -> np.ndarray:
        return self.first + np.arange(self.ders.shape[1])

    @property
    def values(self) -> np.ndarray:
        return self.ders[0]


def _basis_ders(knots, p, spans, x, n):
    """Vectorized Cox-de Boor values and derivatives (Piegl & Tiller A2.3).

    Returns an array of shape ``(npts, n + 1, p + 1)``.
    """
    npts = x.size
    ders = np.zeros((npts, n + 1, p + 1))
    ndu = np.zeros((npts, p + 1, p + 1))
    left = np.zeros((npts, p + 1))
    right = np.zeros((npts, p + 1))
    ndu[:, 0, 0] = 1.0
    for j in range(1, p + 1):
        left[:, j] = x - knots[spans + 1 - j]
        right[:, j] = knots[spans + j] - x
        saved = np.zeros(npts)
        for r in range(j):
            ndu[:, j, r] = right[:, r + 1] + left[:, j - r]
            temp = ndu[:, r, j - 1] / ndu[:, j, r]
            ndu[:, r, j] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        ndu[:, j, j] = saved
    ders[:, 0, :] = ndu[:, :, p]
    nmax = min(n, p)
    a = np.zeros((npts, 2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[:] = 0.0
        a[:, 0, 0] = 1.0
        for k in range(1, nmax + 1):
            d = np.zeros(npts)
            rk, pk = r - k, p - k
            if r >= k:
                a[:, s2, 0] = a[:, s1, 0] / ndu[:, pk + 1, rk]
                d = a[:, s2, 0] * ndu[:, rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[:, s2, j] = (a[:, s1, j] - a[:, s1, j - 1]) / ndu[:, pk + 1, rk + j]
                d = d + a[:, s2, j] * ndu[:, rk + j, pk]
            if r <= pk:
                a[:, s2, k] = -a[:, s1, k - 1] / ndu[:, pk + 1, r]
                d = d + a[:, s2, k] * ndu[:, r, pk]
            ders[:, k, r] = d
            s1, s2 = s2, s1
    fac = float(p)
    for k in range(1, nmax + 1):
        ders[:, k, :] *= fac
        fac *= p - k
    return ders


def eval_basis_array(space: SplineSpace, x, nderiv: int = 0):
    """Evaluate active basis functions at many points.

    Returns
    -------
    first : np.ndarray of int, shape (npts,)
        Global index of the first active function at each point.
    ders : np.ndarray, shape (npts, nderiv + 1, p + 1)
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    spans = space.find_span(x)
    ders = _basis_ders(space.knots, space.degree, spans, x, nderiv)
    return spans - space.degree, ders


def eval_basis(space: SplineSpace, x: float, nderiv: int = 0) -> BasisEval:
    """Values and derivatives of the ``p + 1`` functions active at ``x``."""
    if nderiv > space.degree:
        raise CapabilityError(f"nderiv={nderiv} exceeds degree {space.degree}")
    if nderiv < 0:
        raise ValueError("nderiv must be nonnegative")
    first, ders = eval_basis_array(space, [x], nderiv)
    return BasisEval(element=int(first[0]), first=int(first[0]), ders=ders[0])


def collocation_matrix(space: SplineSpace, x, deriv: int = 0) -> sps.csr_matrix:
    """Sparse matrix ``C[k, i] = B_i^{(deriv)}(x_k)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    first, ders = eval_basis_array(space, x, deriv)
    p = space.degree
    rows = np.repeat(np.arange(x.size), p + 1)
    cols = (first[:, None] + np.arange(p + 1)).ravel()
    return sps.csr_matrix((ders[:, deriv, :].ravel(), (rows, cols)), shape=(x.size, space.dim))


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre rule on the reference interval ``[-1, 1]``."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def n_points(self) -> int:
        return self.points.size

    @property
    def exactness(self) -> int:
        """Highest polynomial degree integrated exactly."""
        return 2 * self.n_points - 1

    def on_elements(self, breakpoints) -> tuple[np.ndarray, np.ndarray]:
        """Points and weights mapped to each element, shape ``(n_el, n_points)``."""
        bps = np.asarray(breakpoints, dtype=float)
        lo, hi = bps[:-1, None], bps[1:, None]
        half = 0.5 * (hi - lo)
        return lo + half * (self.points + 1.0), half * self.weights


def gauss_rule(n_points: int) -> QuadratureRule:
    if not 1 <= n_points <= MAX_GAUSS_POINTS:
        raise ConfigurationError(f"n_points must be in [1, {MAX_GAUSS_POINTS}]")
    x, w = np.polynomial.legendre.leggauss(n_points)
    return QuadratureRule(x, w)


@dataclass
class ElementData:
    """Basis data at every quadrature point of a 1D space, organized by element."""

    points: np.ndarray  # (n_el, nq)
    weights: np.ndarray  # (n_el, nq)
    first: np.ndarray  # (n_el,)
    ders: np.ndarray  # (n_el, nq, nderiv + 1, p + 1)


def element_data(space: SplineSpace, n_points: int, nderiv: int = 0) -> ElementData:
    rule = gauss_rule(n_points)
    pts, wts = rule.on_elements(space.breakpoints)
    n_el, nq = pts.shape
    spans = space.degree + np.repeat(np.arange(n_el), nq)
    ders = _basis_ders(space.knots, space.degree, spans, pts.ravel(), nderiv)
    ders = ders.reshape(n_el, nq, nderiv + 1, space.degree + 1)
    return ElementData(pts, wts, np.arange(n_el), ders)


def basis_products(space: SplineSpace, d_test: int = 0, d_trial: int = 0, n_points=None,
                   weight=None) -> sps.csr_matrix:
    """Sparse matrix of ``int w(x) B_i^{(d_test)} B_j^{(d_trial)} dx`` over the knot span domain."""
    p = space.degree
    nq = p + 1 if n_points is None else n_points
    ed = element_data(space, nq, max(d_test, d_trial))
    w = ed.weights if weight is None else ed.weights * weight(ed.points)
    bt = ed.ders[:, :, d_test, :]
    bu = ed.ders[:, :, d_trial, :]
    loc = np.einsum("eq,eqi,eqj->eij", w, bt, bu)
    idx = ed.first[:, None] + np.arange(p + 1)
    rows = np.broadcast_to(idx[:, :, None], loc.shape).ravel()
    cols = np.broadcast_to(idx[:, None, :], loc.shape).ravel()
    n = space.dim
    return sps.csr_matrix((loc.ravel(), (rows, cols)), shape=(n, n))


@dataclass(frozen=True, eq=False)
class TensorSpace:
    """Tensor product of two univariate spaces.

    Global index of ``B_i(xi_1) B_j(xi_2)`` is ``i * N2 + j`` so that Kronecker
    products ``kron(A1, A2)`` act on global coefficient vectors directly.
    """

    factors: tuple[SplineSpace, SplineSpace]
    _shape: tuple[int, int] = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.factors) != 2:
            raise ValueError("TensorSpace needs exactly two factors")
        object.__setattr__(self, "factors", tuple(self.factors))
        object.__setattr__(self, "_shape", (self.factors[0].dim, self.factors[1].dim))

    @property
    def shape(self) -> tuple[int, int]:
        return self._shape

    @property
    def dim(self) -> int:
        return self._shape[0] * self._shape[1]

    def global_index(self, i, j):
        return np.asarray(i) * self._shape[1] + np.asarray(j)

    def local_index(self, g):
        return np.divmod(np.asarray(g), self._shape[1])


@dataclass(frozen=True)
class TensorBasisEval:
    """Active tensor-product functions at one point.

    ``ders[a, b, l]`` is the derivative ``d^(a+b) / dxi1^a dxi2^b`` of the
    ``l``-th active function; entries with ``a + b > nderiv`` are zero.
    """

    indices: np.ndarray
    ders: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.ders[0, 0]


def tensor_eval(ts: TensorSpace, xi: Sequence[float], nderiv: int = 0) -> TensorBasisEval:
    s1, s2 = ts.factors
    e1 = eval_basis(s1, xi[0], min(nderiv, s1.degree))
    e2 = eval_basis(s2, xi[1], min(nderiv, s2.degree))
    n1, n2 = s1.degree + 1, s2.degree + 1
    ders = np.zeros((nderiv + 1, nderiv + 1, n1 * n2))
    for a in range(min(nderiv, s1.degree) + 1):
        for b in range(min(nderiv - a, s2.degree) + 1):
            ders[a, b] = np.outer(e1.ders[a], e2.ders[b]).ravel()
    idx = ts.global_index(e1.indices[:, None], e2.indices[None, :]).ravel()
    return TensorBasisEval(idx, ders)
