"""Geometry maps and test functions divided by the Jacobian determinant.

All map evaluators are vectorized: parametric points have shape ``(npts, dim)``
and derivative arrays follow the convention

* ``F[q, a, b] = d x_a / d xi_b``
* ``X[q, a, b, c] = d^2 x_a / d xi_b d xi_c``
* ``dJ[q, a]``, ``ddJ[q, a, b]`` for the determinant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dual_basis import ApproxInverse, eval_approx_dual
from .errors import GeometryError
from .spline_core import SplineSpace, TensorSpace


def _as_points(xi, dim: int) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if dim == 1:
        return xi.reshape(-1, 1)
    return np.atleast_2d(xi).reshape(-1, dim)


class GeometryMap:
    """Base class of a smooth invertible map from the unit parametric box."""

    kind: str = "abstract"
    dim: int = 2
    affine: bool = False

    def evaluate(self, xi) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, xi) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, xi) -> np.ndarray:
        raise NotImplementedError

    def det(self, xi) -> np.ndarray:
        F = self.jacobian(xi)
        return np.linalg.det(F)

    def det_grad(self, xi) -> np.ndarray:
        raise NotImplementedError

    def det_hess(self, xi) -> np.ndarray:
        raise NotImplementedError

    def check_positive(self, xi) -> np.ndarray:
        J = self.det(xi)
        if np.any(J <= 0):
            raise GeometryError("nonpositive Jacobian determinant")
        return J


@dataclass(frozen=True)
class AffineMap(GeometryMap):
    """Axis-aligned scaling ``x = origin + lengths * xi`` in one or two dimensions."""

    lengths: tuple
    origin: tuple | None = None
    kind = "affine"
    affine = True

    def __post_init__(self):
        L = tuple(float(v) for v in np.atleast_1d(self.lengths))
        if len(L) not in (1, 2):
            raise GeometryError("affine map needs one or two lengths")
        if any(v <= 0 for v in L):
            raise GeometryError("lengths must be positive")
        o = (0.0,) * len(L) if self.origin is None else tuple(float(v) for v in np.atleast_1d(self.origin))
        object.__setattr__(self, "lengths", L)
        object.__setattr__(self, "origin", o)

    @property
    def dim(self) -> int:
        return len(self.lengths)

    @property
    def J(self) -> float:
        return float(np.prod(self.lengths))

    def evaluate(self, xi):
        q = _as_points(xi, self.dim)
        return np.asarray(self.origin) + q * np.asarray(self.lengths)

    def jacobian(self, xi):
        q = _as_points(xi, self.dim)
        return np.broadcast_to(np.diag(self.lengths), (q.shape[0], self.dim, self.dim)).copy()

    def hessian(self, xi):
        q = _as_points(xi, self.dim)
        return np.zeros((q.shape[0],) + (self.dim,) * 3)

    def det(self, xi):
        q = _as_points(xi, self.dim)
        return np.full(q.shape[0], self.J)

    def det_grad(self, xi):
        q = _as_points(xi, self.dim)
        return np.zeros((q.shape[0], self.dim))

    def det_hess(self, xi):
        q = _as_points(xi, self.dim)
        return np.zeros((q.shape[0], self.dim, self.dim))


def affine_map(lengths) -> AffineMap:
    return AffineMap(tuple(np.atleast_1d(lengths)))


@dataclass(frozen=True)
class AnnulusMap(GeometryMap):
    """Quarter annulus ``r = a + (b - a) xi_1``, ``theta = (pi/2) xi_2``."""

    a: float
    b: float
    kind = "polar-annulus"
    dim = 2

    def __post_init__(self):
        if not (0 < self.a < self.b):
            raise GeometryError("annulus needs 0 < a < b")

    @property
    def dr(self) -> float:
        return self.b - self.a

    dth = np.pi / 2

    def _polar(self, xi):
        q = _as_points(xi, 2)
        return self.a + self.dr * q[:, 0], self.dth * q[:, 1]

    def evaluate(self, xi):
        r, th = self._polar(xi)
        return np.column_stack((r * np.cos(th), r * np.sin(th)))

    def jacobian(self, xi):
        r, th = self._polar(xi)
        c, s = np.cos(th), np.sin(th)
        F = np.empty((r.size, 2, 2))
        F[:, 0, 0] = self.dr * c
        F[:, 0, 1] = -r * self.dth * s
        F[:, 1, 0] = self.dr * s
        F[:, 1, 1] = r * self.dth * c
        return F

    def hessian(self, xi):
        r, th = self._polar(xi)
        c, s = np.cos(th), np.sin(th)
        X = np.zeros((r.size, 2, 2, 2))
        X[:, 0, 0, 1] = X[:, 0, 1, 0] = -self.dr * self.dth * s
        X[:, 0, 1, 1] = -r * self.dth**2 * c
        X[:, 1, 0, 1] = X[:, 1, 1, 0] = self.dr * self.dth * c
        X[:, 1, 1, 1] = -r * self.dth**2 * s
        return X

    def det(self, xi):
        r, _ = self._polar(xi)
        return self.dr * self.dth * r

    def det_grad(self, xi):
        r, _ = self._polar(xi)
        g = np.zeros((r.size, 2))
        g[:, 0] = self.dr**2 * self.dth
        return g

    def det_hess(self, xi):
        r, _ = self._polar(xi)
        return np.zeros((r.size, 2, 2))

    def polar(self, xi):
        """Physical polar coordinates ``(r, theta)``."""
        return self._polar(xi)


def annulus_map(a: float, b: float) -> AnnulusMap:
    return AnnulusMap(float(a), float(b))


@dataclass(frozen=True)
class QuarterCircleArc(GeometryMap):
    """Quarter circle of given radius as a rational quadratic Bezier curve.

    The curve is one-dimensional, so ``J`` is the speed ``|dx/dxi|``.
    """

    radius: float = 1.0
    kind = "quarter-circle-arc"
    dim = 1

    def __post_init__(self):
        if self.radius <= 0:
            raise GeometryError("radius must be positive")

    def _curve(self, xi):
        t = _as_points(xi, 1)[:, 0]
        P = self.radius * np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        w = np.array([1.0, np.sqrt(0.5), 1.0])
        bern = np.array([[1, -2, 1], [0, 2, -2], [0, 0, 1]], dtype=float)  # coefficients in 1, t, t^2
        tp = np.vstack((np.ones_like(t), t, t * t))
        dtp = np.vstack((np.zeros_like(t), np.ones_like(t), 2 * t))
        ddtp = np.vstack((np.zeros_like(t), np.zeros_like(t), 2 * np.ones_like(t)))
        out = []
        for powers in (tp, dtp, ddtp):
            Bk = bern @ powers  # (3, npts)
            out.append((Bk * w[:, None]).T)
        B0, B1, B2 = out
        Wt = B0.sum(1)
        dW = B1.sum(1)
        ddW = B2.sum(1)
        A = B0 @ P
        dA = B1 @ P
        ddA = B2 @ P
        x = A / Wt[:, None]
        dx = (dA - x * dW[:, None]) / Wt[:, None]
        ddx = (ddA - 2 * dx * dW[:, None] - x * ddW[:, None]) / Wt[:, None]
        # third derivative by one more quotient-rule step (denominator is quadratic)
        dddx = (-3 * ddx * dW[:, None] - 3 * dx * ddW[:, None]) / Wt[:, None]
        return x, dx, ddx, dddx

    def evaluate(self, xi):
        return self._curve(xi)[0]

    def jacobian(self, xi):
        return self.det(xi).reshape(-1, 1, 1)

    def hessian(self, xi):
        return self.det_grad(xi).reshape(-1, 1, 1, 1)

    def det(self, xi):
        _, dx, _, _ = self._curve(xi)
        return np.linalg.norm(dx, axis=1)

    def det_grad(self, xi):
        _, dx, ddx, _ = self._curve(xi)
        J = np.linalg.norm(dx, axis=1)
        return (np.einsum("qi,qi->q", dx, ddx) / J).reshape(-1, 1)

    def det_hess(self, xi):
        _, dx, ddx, dddx = self._curve(xi)
        J = np.linalg.norm(dx, axis=1)
        dJ = np.einsum("qi,qi->q", dx, ddx) / J
        val = (np.einsum("qi,qi->q", ddx, ddx) + np.einsum("qi,qi->q", dx, dddx) - dJ**2) / J
        return val.reshape(-1, 1, 1)


def quotient_rule(val, grad, hess, J, dJ, ddJ):
    """Parametric derivatives of ``f / J``.

    ``val`` has shape ``(npts, nf)``, ``grad`` ``(npts, dim, nf)``,
    ``hess`` ``(npts, dim, dim, nf)``; ``J`` ``(npts,)``, ``dJ`` ``(npts, dim)``,
    ``ddJ`` ``(npts, dim, dim)``.
    """
    iJ = 1.0 / J
    v = val * iJ[:, None]
    g = grad * iJ[:, None, None] - dJ[:, :, None] * (val * iJ[:, None] ** 2)[:, None, :]
    h = None
    if hess is not None:
        iJ2 = iJ**2
        iJ3 = iJ**3
        h = hess * iJ[:, None, None, None]
        h = h - (grad[:, :, None, :] * dJ[:, None, :, None] + grad[:, None, :, :] * dJ[:, :, None, None]) * iJ2[:, None, None, None]
        h = h - val[:, None, None, :] * ddJ[:, :, :, None] * iJ2[:, None, None, None]
        h = h + 2 * val[:, None, None, :] * (dJ[:, :, None] * dJ[:, None, :])[:, :, :, None] * iJ3[:, None, None, None]
    return v, g, h


def to_physical(grad, hess, F, X):
    """Map parametric gradients and Hessians to physical coordinates.

    Uses ``grad_x = F^{-T} grad_xi`` and
    ``H_x = F^{-T} (H_xi - sum_k (grad_x)_k X_k) F^{-1}``.
    """
    Finv = np.linalg.inv(F)
    FinvT = np.swapaxes(Finv, 1, 2)
    gx = np.einsum("qab,qbf->qaf", FinvT, grad)
    if hess is None:
        return gx, None
    corr = np.einsum("qkbc,qkf->qbcf", X, gx)
    inner = hess - corr
    hx = np.einsum("qab,qbcf,qcd->qadf", FinvT, inner, Finv)
    return gx, hx


@dataclass(frozen=True)
class TestFunctionEval:
    """Test functions at one point with physical derivatives.

    ``grad[a, l]`` and ``hess[a, b, l]`` refer to physical coordinates.
    """

    __test__ = False  # not a pytest class

    indices: np.ndarray
    values: np.ndarray
    grad: np.ndarray
    hess: np.ndarray

    @property
    def laplacian(self) -> np.ndarray:
        return np.trace(self.hess, axis1=0, axis2=1)


def tensor_dual_eval(inv: tuple[ApproxInverse, ApproxInverse], ts: TensorSpace, xi, nderiv: int = 2):
    """Products of univariate duals: returns global indices and parametric value, gradient, Hessian."""
    s1, s2 = ts.factors
    d1 = eval_approx_dual(inv[0], s1, xi[0], min(nderiv, s1.degree))
    d2 = eval_approx_dual(inv[1], s2, xi[1], min(nderiv, s2.degree))

    def der(e, k):
        return e.ders[k] if k < e.ders.shape[0] else np.zeros(e.ders.shape[1])

    val = np.outer(der(d1, 0), der(d2, 0)).ravel()
    grad = np.stack([np.outer(der(d1, 1), der(d2, 0)).ravel(), np.outer(der(d1, 0), der(d2, 1)).ravel()])
    hess = np.empty((2, 2, val.size))
    hess[0, 0] = np.outer(der(d1, 2), der(d2, 0)).ravel()
    hess[0, 1] = hess[1, 0] = np.outer(der(d1, 1), der(d2, 1)).ravel()
    hess[1, 1] = np.outer(der(d1, 0), der(d2, 2)).ravel()
    idx = ts.global_index(d1.indices[:, None], d2.indices[None, :]).ravel()
    return idx, val, grad, hess


def modified_test_eval(inv, space, gmap: GeometryMap, xi) -> TestFunctionEval:
    """Approximate duals divided by ``J`` with physical first and second derivatives.

    ``space`` is a :class:`SplineSpace` (with one :class:`ApproxInverse`) or a
    :class:`TensorSpace` (with a pair of them).
    """
    if isinstance(space, SplineSpace):
        d = eval_approx_dual(inv, space, float(np.ravel(xi)[0]), min(2, space.degree))
        ders = np.zeros((3, d.ders.shape[1]))
        ders[: d.ders.shape[0]] = d.ders
        idx, val, grad, hess = d.indices, ders[0], ders[1][None], ders[2][None, None]
        q = np.array([[float(np.ravel(xi)[0])]])
    else:
        inv_pair = inv if isinstance(inv, (tuple, list)) else (inv, inv)
        idx, val, grad, hess = tensor_dual_eval(inv_pair, space, xi)
        q = np.asarray(xi, dtype=float).reshape(1, 2)
    J = gmap.det(q)
    if np.any(J <= 0):
        raise GeometryError("nonpositive Jacobian determinant")
    v, g, h = quotient_rule(val[None], grad[None], hess[None], J, gmap.det_grad(q), gmap.det_hess(q))
    gx, hx = to_physical(g, h, gmap.jacobian(q), gmap.hessian(q))
    return TestFunctionEval(idx, v[0], gx[0], hx[0])
