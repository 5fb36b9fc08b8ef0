"""Mass and stiffness operators for bars, beams and plates.

Trial functions are B-splines. Test functions are either the same B-splines
(Galerkin) or approximate duals divided by the Jacobian determinant
(Petrov-Galerkin). Every test function is stored as a row of coefficients over
the B-spline basis, so both schemes share one quadrature path::

    M = W @ M_raw @ T,    K = W @ K_raw @ T

where ``M_raw``/``K_raw`` pair raw test functions (``B_i`` or ``B_i / J``) with
trial B-splines, ``T`` maps reduced unknowns to full coefficients, and ``W``
holds test-function coefficients after boundary treatment.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from .dual_basis import ApproxInverse, assemble_gramian, dual_inverse
from .errors import CapabilityError, ConfigurationError, GeometryError, LumpingError, NumericalError
from .geometry import GeometryMap
from .spline_core import SplineSpace, TensorSpace, collocation_matrix, gauss_rule

MODEL_KINDS = ("bar", "euler-beam", "kirchhoff-plate")


@dataclass(frozen=True)
class ModelSpec:
    """Material and cross-section data.

    For ``bar`` and ``euler-beam`` the mass per unit length is ``rho * A_cs``.
    The beam bending stiffness is ``EI`` if given, else ``E * d**3 * width / 12``
    with ``width = A_cs / d``. For the plate the mass per unit area is
    ``rho * d`` and the bending stiffness ``E d^3 / (12 (1 - nu^2))``.
    """

    kind: str
    rho: float
    E: float
    d: float = 1.0
    nu: float = 0.0
    A_cs: float | None = None
    EI: float | None = None
    L_x: float = 1.0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigurationError(f"unknown model kind {self.kind!r}")
        for name in ("rho", "E", "d", "L_x"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if not 0.0 <= self.nu < 0.5:
            raise ConfigurationError("nu must lie in [0, 0.5)")
        if self.A_cs is not None and not self.A_cs > 0:
            raise ConfigurationError("A_cs must be positive")
        if self.EI is not None and not self.EI > 0:
            raise ConfigurationError("EI must be positive")

    @property
    def area(self) -> float:
        return self.d if self.A_cs is None else self.A_cs

    @property
    def bending_stiffness(self) -> float:
        """Plate ``D_b``."""
        return self.E * self.d**3 / (12.0 * (1.0 - self.nu**2))

    @property
    def beam_EI(self) -> float:
        if self.EI is not None:
            return self.EI
        return self.E * self.area * self.d**2 / 12.0

    @property
    def mass_coefficient(self) -> float:
        if self.kind == "kirchhoff-plate":
            return self.rho * self.d
        return self.rho * self.area

    @property
    def stiffness_coefficient(self) -> float:
        if self.kind == "kirchhoff-plate":
            return self.bending_stiffness
        if self.kind == "euler-beam":
            return self.beam_EI
        return self.E * self.area

    @property
    def derivative_order(self) -> int:
        return 1 if self.kind == "bar" else 2


@dataclass(frozen=True)
class TestScheme:
    __test__ = False  # not a pytest class

    kind: str = "petrov"
    passes: int = 0

    def __post_init__(self):
        if self.kind not in ("galerkin", "petrov"):
            raise ConfigurationError(f"unknown test scheme {self.kind!r}")
        if self.passes < 0:
            raise ConfigurationError("passes must be nonnegative")
        if self.kind == "galerkin" and self.passes:
            raise ConfigurationError("corrector passes only apply to the petrov scheme")

    @property
    def is_petrov(self) -> bool:
        return self.kind == "petrov"


FREE, PINNED, SYMMETRY, CLAMPED = "free", "pinned", "symmetry", "clamped"
_ALIASES = {
    "free": FREE,
    "pinned": PINNED,
    "simply-supported": PINNED,
    "displacement-zero": PINNED,
    "u0": PINNED,
    "symmetry": SYMMETRY,
    "slope-zero": SYMMETRY,
    "clamped": CLAMPED,
}


def _norm_condition(c: str) -> str:
    try:
        return _ALIASES[c]
    except KeyError:
        raise ConfigurationError(f"unknown boundary condition {c!r}") from None


@dataclass(frozen=True)
class BoundarySpec:
    """Conditions on the two ends of each parametric direction.

    ``sides[k] = (at xi_k = 0, at xi_k = 1)`` with values ``free``, ``pinned``
    (``u = 0``), ``symmetry`` (zero normal slope) or ``clamped`` (both).
    """

    sides: tuple

    def __post_init__(self):
        sides = tuple((_norm_condition(a), _norm_condition(b)) for a, b in self.sides)
        object.__setattr__(self, "sides", sides)

    @classmethod
    def free(cls, dim: int = 1) -> "BoundarySpec":
        return cls(((FREE, FREE),) * dim)

    @classmethod
    def uniform(cls, condition: str, dim: int = 1) -> "BoundarySpec":
        return cls(((condition, condition),) * dim)

    @property
    def dim(self) -> int:
        return len(self.sides)

    @property
    def is_free(self) -> bool:
        return all(c == FREE for pair in self.sides for c in pair)


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i, j):
        a, b = self.find(i), self.find(j)
        if a != b:
            self.parent[max(a, b)] = min(a, b)


@dataclass
class DirectionConstraint:
    """Boundary treatment along one parametric direction.

    ``T`` (N x n) maps reduced unknowns to B-spline coefficients. ``W`` (n x N)
    holds the reduced test functions as coefficients over B-splines.
    ``replaced`` lists full indices whose dual test function was swapped for
    the B-spline; ``protected`` lists reduced rows containing one of them.
    """

    N: int
    T: sps.csr_matrix
    W: sps.csr_matrix
    eliminated: np.ndarray
    groups: list
    replaced: np.ndarray
    protected: np.ndarray


def direction_constraint(N: int, left: str, right: str, dual: ApproxInverse | None) -> DirectionConstraint:
    uf = _UnionFind(N)
    eliminated = set()
    for cond, ends in ((left, (0, 1)), (right, (N - 1, N - 2))):
        if cond == PINNED:
            eliminated.add(ends[0])
        elif cond == CLAMPED:
            eliminated.update(ends)
        elif cond == SYMMETRY:
            if N < 2:
                raise ConfigurationError("symmetry condition needs at least two functions")
            uf.union(*ends)
    if len(eliminated) >= N:
        raise ConfigurationError("boundary conditions eliminate every unknown")
    roots: dict[int, list[int]] = {}
    for i in range(N):
        roots.setdefault(uf.find(i), []).append(i)
    groups = [g for g in roots.values() if not eliminated.intersection(g)]
    groups.sort(key=min)
    n = len(groups)
    rows = [i for g in groups for i in g]
    cols = [k for k, g in enumerate(groups) for _ in g]
    T = sps.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(N, n))
    constrained = set(eliminated)
    for g in roots.values():
        if len(g) > 1:
            constrained.update(g)
    if dual is None:
        W = sps.csr_matrix(T.T)
        replaced = np.array([], dtype=int)
        protected = np.array([], dtype=int)
    else:
        X = sps.lil_matrix(dual.csr)
        touched = set()
        if constrained:
            Xc = dual.csr[:, sorted(constrained)]
            touched = set(np.unique(Xc.nonzero()[0]).tolist())
        for i in touched:
            X.rows[i] = [i]
            X.data[i] = [1.0]
        W = sps.csr_matrix(T.T @ sps.csr_matrix(X))
        replaced = np.array(sorted(touched), dtype=int)
        protected = np.array([k for k, g in enumerate(groups) if touched.intersection(g)], dtype=int)
    return DirectionConstraint(N, T, W, np.array(sorted(eliminated), dtype=int), groups, replaced, protected)


def _kron_all(mats):
    out = mats[0]
    for m in mats[1:]:
        out = sps.kron(out, m, format="csr")
    return sps.csr_matrix(out)


def _factors(trial) -> tuple[SplineSpace, ...]:
    if isinstance(trial, TensorSpace):
        return trial.factors
    return (trial,)


def _rowscale(c, A):
    return sps.diags(c) @ A


def _quad_points_1d(space: SplineSpace, nq: int):
    rule = gauss_rule(nq)
    pts, wts = rule.on_elements(space.breakpoints)
    return pts.ravel(), wts.ravel()


@dataclass
class _PointData:
    """B-spline derivatives and map data at a batch of quadrature points."""

    xi: np.ndarray
    B: dict  # multi-index -> sparse (npts x N)
    w: np.ndarray  # parametric weights
    J: np.ndarray
    dJ: np.ndarray
    ddJ: np.ndarray
    F: np.ndarray
    X: np.ndarray


def _point_batches(factors, gmap: GeometryMap, nq: int, nderiv: int, batch: int = 40000):
    """Yield :class:`_PointData` over slabs of the tensor quadrature grid."""
    dim = len(factors)
    pts, wts, colls = [], [], []
    for s in factors:
        x, w = _quad_points_1d(s, nq)
        pts.append(x)
        wts.append(w)
        colls.append([collocation_matrix(s, x, d) if d <= s.degree else sps.csr_matrix((x.size, s.dim))
                      for d in range(nderiv + 1)])
    if dim == 1:
        slabs = [np.arange(pts[0].size)]
    else:
        per = max(1, batch // pts[1].size)
        slabs = [np.arange(k, min(k + per, pts[0].size)) for k in range(0, pts[0].size, per)]
    for rows in slabs:
        if dim == 1:
            xi = pts[0][rows].reshape(-1, 1)
            w = wts[0][rows]
            B = {(a,): colls[0][a][rows] for a in range(nderiv + 1)}
        else:
            n2 = pts[1].size
            xi = np.column_stack((np.repeat(pts[0][rows], n2), np.tile(pts[1], rows.size)))
            w = np.kron(wts[0][rows], wts[1])
            B = {}
            for a in range(nderiv + 1):
                for b in range(nderiv + 1 - a):
                    B[(a, b)] = sps.kron(colls[0][a][rows], colls[1][b], format="csr")
        J = gmap.det(xi)
        if np.any(J <= 0):
            raise GeometryError("nonpositive Jacobian determinant at a quadrature point")
        yield _PointData(xi, B, w, J, gmap.det_grad(xi), gmap.det_hess(xi), gmap.jacobian(xi), gmap.hessian(xi))


def _unit(dim, *axes):
    idx = [0] * dim
    for a in axes:
        idx[a] += 1
    return tuple(idx)


def _param_derivs(pd: _PointData, dim: int, divide_by_J: bool, nderiv: int):
    """Value, gradient list and Hessian dict of raw test or trial functions."""
    val = pd.B[(0,) * dim]
    grad = [pd.B[_unit(dim, a)] for a in range(dim)] if nderiv >= 1 else None
    hess = None
    if nderiv >= 2:
        hess = {(a, b): pd.B[_unit(dim, a, b)] for a in range(dim) for b in range(a, dim)}
    if not divide_by_J:
        return val, grad, hess
    iJ = 1.0 / pd.J
    iJ2 = iJ**2
    v = _rowscale(iJ, val)
    g = None
    if grad is not None:
        g = [_rowscale(iJ, grad[a]) - _rowscale(pd.dJ[:, a] * iJ2, val) for a in range(dim)]
    h = None
    if hess is not None:
        h = {}
        for (a, b), Hab in hess.items():
            h[(a, b)] = (
                _rowscale(iJ, Hab)
                - _rowscale(pd.dJ[:, a] * iJ2, grad[b])
                - _rowscale(pd.dJ[:, b] * iJ2, grad[a])
                - _rowscale(pd.ddJ[:, a, b] * iJ2, val)
                + _rowscale(2.0 * pd.dJ[:, a] * pd.dJ[:, b] * iJ2 * iJ, val)
            )
    return v, g, h


def _physical_gradient(pd: _PointData, grad, dim: int):
    Finv = np.linalg.inv(pd.F)
    # d/dx_k = sum_a Finv[a, k] d/dxi_a
    return [sum(_rowscale(Finv[:, a, k], grad[a]) for a in range(dim)) for k in range(dim)]


def _physical_laplacian(pd: _PointData, grad, hess, dim: int):
    Finv = np.linalg.inv(pd.F)
    Ginv = np.einsum("qak,qbk->qab", Finv, Finv)
    c = np.einsum("qbc,qkbc->qk", Ginv, pd.X)
    e = np.einsum("qk,qak->qa", c, Finv)
    out = None
    for (a, b), H in hess.items():
        coef = Ginv[:, a, b] * (1.0 if a == b else 2.0)
        term = _rowscale(coef, H)
        out = term if out is None else out + term
    for a in range(dim):
        out = out - _rowscale(e[:, a], grad[a])
    return out


def _default_nq(factors, gmap: GeometryMap, nq):
    if nq is not None:
        return int(nq)
    p = max(s.degree for s in factors)
    return p + 1 if getattr(gmap, "affine", False) else p + 3


def raw_mass(factors, gmap: GeometryMap, divide_by_J: bool, nq=None) -> sps.csr_matrix:
    """``int t_i B_j dOmega`` by physical quadrature, ``t_i = B_i`` or ``B_i / J``."""
    dim = len(factors)
    nq = _default_nq(factors, gmap, nq)
    N = int(np.prod([s.dim for s in factors]))
    out = sps.csr_matrix((N, N))
    for pd in _point_batches(factors, gmap, nq, 0):
        val = pd.B[(0,) * dim]
        test = _rowscale(1.0 / pd.J, val) if divide_by_J else val
        out = out + test.T @ _rowscale(pd.w * pd.J, val)
    return sps.csr_matrix(out)


def raw_stiffness(factors, gmap: GeometryMap, divide_by_J: bool, order: int, nq=None) -> sps.csr_matrix:
    """Unit-coefficient stiffness ``int L(t_i) L(B_j) dOmega``.

    ``order == 1``: ``L`` is the physical gradient (bar). ``order == 2``:
    ``L`` is the physical Laplacian (beam, plate).
    """
    dim = len(factors)
    nq = _default_nq(factors, gmap, nq)
    N = int(np.prod([s.dim for s in factors]))
    out = sps.csr_matrix((N, N))
    for pd in _point_batches(factors, gmap, nq, order):
        _, gt, ht = _param_derivs(pd, dim, divide_by_J, order)
        _, gu, hu = _param_derivs(pd, dim, False, order)
        wJ = pd.w * pd.J
        if order == 1:
            lt = _physical_gradient(pd, gt, dim)
            lu = _physical_gradient(pd, gu, dim)
            for k in range(dim):
                out = out + lt[k].T @ _rowscale(wJ, lu[k])
        else:
            Lt = _physical_laplacian(pd, gt, ht, dim)
            Lu = _physical_laplacian(pd, gu, hu, dim)
            out = out + Lt.T @ _rowscale(wJ, Lu)
    return sps.csr_matrix(out)


@dataclass
class OperatorPair:
    """Reduced mass and stiffness of one discretization.

    ``row_sums`` are sums over all (unreduced) trial columns and are the
    diagonal used by row-sum lumping; lumping therefore happens before the
    constrained columns are dropped.
    """

    M: sps.csr_matrix
    K: sps.csr_matrix
    scheme: TestScheme
    mass_state: str
    protected: np.ndarray
    row_sums: np.ndarray
    T: sps.csr_matrix
    W: sps.csr_matrix
    M_consistent: sps.csr_matrix
    trial: object = None
    gmap: GeometryMap | None = None
    spec: ModelSpec | None = None
    duals: tuple = ()
    constraints: tuple = ()

    @property
    def n(self) -> int:
        return self.M.shape[0]

    def lumped(self) -> "OperatorPair":
        """Row-sum lump every row outside ``protected``."""
        M = row_sum_lump(self.M_consistent, self.protected, self.row_sums)
        state = "partial" if self.protected.size else "row-sum"
        return replace(self, M=M, mass_state=state)

    def consistent(self) -> "OperatorPair":
        return replace(self, M=self.M_consistent, mass_state="consistent")

    def with_mass(self, state: str) -> "OperatorPair":
        if state == "consistent":
            return self.consistent()
        if state in ("lumped", "row-sum", "partial"):
            return self.lumped()
        raise ConfigurationError(f"unknown mass state {state!r}")

    def mass_inverse(self) -> "MassInverse":
        return MassInverse(self.M)

    def full_coefficients(self, a) -> np.ndarray:
        """Expand reduced unknowns to B-spline coefficients."""
        return self.T @ np.asarray(a)


def row_sum_lump(M, protected: Sequence[int] = (), row_sums=None) -> sps.csr_matrix:
    """Replace every unprotected row by its row sum on the diagonal.

    ``row_sums`` overrides the sums taken from ``M`` (e.g. sums over
    unreduced columns).
    """
    M = sps.csr_matrix(M)
    n = M.shape[0]
    rs = np.asarray(M.sum(axis=1)).ravel() if row_sums is None else np.asarray(row_sums, dtype=float)
    prot = np.zeros(n, dtype=bool)
    prot[np.asarray(protected, dtype=int)] = True
    bad = (~prot) & (rs <= 0)
    if np.any(bad):
        raise LumpingError(f"nonpositive row sum in rows {np.nonzero(bad)[0][:10].tolist()}")
    keep = sps.diags(prot.astype(float)) @ M
    lumped = sps.diags(np.where(prot, 0.0, rs))
    out = sps.csr_matrix(keep + lumped)
    out.eliminate_zeros()
    return out


def assemble_operators(
    trial,
    scheme: TestScheme,
    gmap: GeometryMap,
    spec: ModelSpec,
    bc: BoundarySpec | None = None,
    nq: int | None = None,
    mass_route: str = "parametric",
) -> OperatorPair:
    """Assemble consistent reduced operators; call ``.lumped()`` for lumping."""
    factors = _factors(trial)
    dim = len(factors)
    if spec.kind == "kirchhoff-plate" and dim != 2:
        raise ConfigurationError("plate model needs a tensor-product space")
    if spec.kind != "kirchhoff-plate" and dim != 1:
        raise ConfigurationError(f"{spec.kind} model needs a univariate space")
    if gmap.dim != dim and not (dim == 1 and gmap.kind == "quarter-circle-arc"):
        raise ConfigurationError("geometry dimension does not match the trial space")
    order = spec.derivative_order
    if order == 2 and min(s.degree for s in factors) < 2:
        raise CapabilityError("fourth-order models need degree >= 2")
    if order == 1 and min(s.degree for s in factors) < 1:
        raise CapabilityError("second-order models need degree >= 1")
    bc = BoundarySpec.free(dim) if bc is None else bc
    if bc.dim != dim:
        raise ConfigurationError("boundary specification has wrong dimension")

    grams = [assemble_gramian(s) for s in factors]
    duals = ()
    if scheme.is_petrov:
        duals = tuple(dual_inverse(s, scheme.passes, G) for s, G in zip(factors, grams))
    cons = tuple(
        direction_constraint(s.dim, *bc.sides[k], duals[k] if duals else None) for k, s in enumerate(factors)
    )
    T = _kron_all([c.T for c in cons])
    W = _kron_all([c.W for c in cons])

    rho = spec.mass_coefficient
    if scheme.is_petrov and mass_route == "parametric":
        M_raw = rho * _kron_all([G.matrix for G in grams])
    else:
        M_raw = rho * raw_mass(factors, gmap, scheme.is_petrov, nq)
    K_raw = spec.stiffness_coefficient * raw_stiffness(factors, gmap, scheme.is_petrov, order, nq)

    WM = sps.csr_matrix(W @ M_raw)
    M = sps.csr_matrix(WM @ T)
    K = sps.csr_matrix(W @ K_raw @ T)
    row_sums = np.asarray(WM.sum(axis=1)).ravel()
    protected = _protected_rows(cons)
    return OperatorPair(
        M=M, K=K, scheme=scheme, mass_state="consistent", protected=protected, row_sums=row_sums,
        T=T, W=W, M_consistent=M, trial=trial, gmap=gmap, spec=spec, duals=duals, constraints=cons,
    )


def _protected_rows(cons) -> np.ndarray:
    sizes = [c.T.shape[1] for c in cons]
    masks = []
    for c, n in zip(cons, sizes):
        m = np.zeros(n, dtype=bool)
        m[c.protected] = True
        masks.append(m)
    if len(masks) == 1:
        full = masks[0]
    else:
        full = (masks[0][:, None] | masks[1][None, :]).ravel()
    return np.nonzero(full)[0]


def assemble_mass(trial, scheme, gmap, spec, bc=None, **kw) -> sps.csr_matrix:
    return assemble_operators(trial, scheme, gmap, spec, bc, **kw).M


def assemble_stiffness(trial, scheme, gmap, spec, bc=None, **kw) -> sps.csr_matrix:
    return assemble_operators(trial, scheme, gmap, spec, bc, **kw).K


def apply_dirichlet(ops: OperatorPair, bc: BoundarySpec, nq: int | None = None) -> OperatorPair:
    """Rebuild ``ops`` (assembled without constraints) under boundary conditions ``bc``."""
    if ops.T.shape[0] != ops.T.shape[1]:
        raise ConfigurationError("operators are already constrained")
    if ops.spec is None or ops.gmap is None:
        raise ConfigurationError("operator pair lacks model information")
    out = assemble_operators(ops.trial, ops.scheme, ops.gmap, ops.spec, bc, nq)
    return out if ops.mass_state == "consistent" else out.lumped()


DENSE_BLOCK_LIMIT = 400


class MassInverse:
    """Exact inverse of a mass matrix whose rows are diagonal except for a few blocks.

    Diagonal rows ``L`` are inverted by division. The remaining rows ``P``
    satisfy ``M_PP a_P = f_P - M_PL a_L`` and are solved block by block on the
    connected components of ``M_PP``.
    """

    def __init__(self, M):
        M = sps.csr_matrix(M)
        n = M.shape[0]
        self.n = n
        off = M - sps.diags(M.diagonal())
        off.eliminate_zeros()
        offcount = np.diff(off.indptr)
        self.L = np.nonzero(offcount == 0)[0]
        self.P = np.nonzero(offcount > 0)[0]
        dL = M.diagonal()[self.L]
        if np.any(dL == 0):
            raise NumericalError("zero diagonal entry in lumped rows")
        self.dL = dL
        self.blocks = []
        if self.P.size:
            MPP = M[self.P][:, self.P]
            self.MPL = M[self.P][:, self.L]
            ncomp, labels = csgraph.connected_components(MPP, directed=True, connection="weak")
            for c in range(ncomp):
                loc = np.nonzero(labels == c)[0]
                blk = MPP[loc][:, loc]
                if loc.size <= DENSE_BLOCK_LIMIT:
                    try:
                        inv = sla.inv(blk.toarray())
                    except (np.linalg.LinAlgError, ValueError) as exc:
                        raise NumericalError(f"singular mass block of size {loc.size}") from exc
                    if not np.all(np.isfinite(inv)):
                        raise NumericalError(f"singular mass block of size {loc.size}")
                    self.blocks.append((loc, inv, None))
                else:
                    try:
                        lu = spla.splu(sps.csc_matrix(blk))
                    except RuntimeError as exc:
                        raise NumericalError(f"singular mass block of size {loc.size}") from exc
                    self.blocks.append((loc, None, lu))
        else:
            self.MPL = sps.csr_matrix((0, self.L.size))

    @property
    def block_sizes(self) -> list[int]:
        return [b[0].size for b in self.blocks]

    @property
    def is_diagonal(self) -> bool:
        return self.P.size == 0

    def apply(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        out = np.empty_like(f)
        aL = f[self.L] / (self.dL if f.ndim == 1 else self.dL[:, None])
        out[self.L] = aL
        if self.P.size:
            rhs = f[self.P] - self.MPL @ aL
            aP = np.empty_like(rhs)
            for loc, inv, lu in self.blocks:
                aP[loc] = inv @ rhs[loc] if inv is not None else lu.solve(rhs[loc])
            out[self.P] = aP
        return out

    __call__ = apply

    def explicit(self) -> sps.csr_matrix:
        """Sparse ``M^{-1}``."""
        n = self.n
        parts = [sps.csr_matrix((1.0 / self.dL, (self.L, self.L)), shape=(n, n))]
        if self.P.size:
            rows, cols, vals = [], [], []
            for loc, inv, lu in self.blocks:
                if inv is None:
                    inv = lu.solve(np.eye(loc.size))
                r, c = np.meshgrid(loc, loc, indexing="ij")
                rows.append(r.ravel())
                cols.append(c.ravel())
                vals.append(inv.ravel())
            Bp = sps.csr_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(self.P.size, self.P.size)
            )
            EPP = sps.csr_matrix((np.ones(self.P.size), (self.P, np.arange(self.P.size))), shape=(n, self.P.size))
            ELL = sps.csr_matrix((np.ones(self.L.size), (self.L, np.arange(self.L.size))), shape=(n, self.L.size))
            coupling = -(Bp @ self.MPL @ sps.diags(1.0 / self.dL))
            parts.append(EPP @ Bp @ EPP.T)
            parts.append(EPP @ coupling @ ELL.T)
        out = sps.csr_matrix(sum(parts[1:], parts[0]))
        out.eliminate_zeros()
        return out


def invert_partial_lumped(M) -> MassInverse:
    return MassInverse(M)


def parametric_petrov_mass(factors, passes: int, rho: float = 1.0) -> sps.csr_matrix:
    """``rho * kron_k (Ginv_r G)_k``; the Petrov mass on any map, before constraints."""
    mats = []
    for s in factors:
        G = assemble_gramian(s)
        X = dual_inverse(s, passes, G)
        mats.append(sps.csr_matrix(X.csr @ G.matrix))
    return rho * _kron_all(mats)


def physical_petrov_mass(trial, gmap: GeometryMap, passes: int, rho: float = 1.0, nq=None) -> sps.csr_matrix:
    """Petrov mass from test functions ``lambda_i / J`` evaluated at mapped quadrature points."""
    factors = _factors(trial)
    dim = len(factors)
    nq = _default_nq(factors, gmap, nq)
    duals = [dual_inverse(s, passes) for s in factors]
    N = int(np.prod([s.dim for s in factors]))
    out = sps.csr_matrix((N, N))
    for pd in _point_batches(factors, gmap, nq, 0):
        val = pd.B[(0,) * dim]
        lam = val @ _kron_all([d.csr.T for d in duals])
        out = out + _rowscale(1.0 / pd.J, lam).T @ _rowscale(pd.w * pd.J, val)
    return rho * sps.csr_matrix(out)


__all__ = [
    "BoundarySpec",
    "DirectionConstraint",
    "MassInverse",
    "ModelSpec",
    "OperatorPair",
    "TestScheme",
    "apply_dirichlet",
    "assemble_mass",
    "assemble_operators",
    "assemble_stiffness",
    "direction_constraint",
    "invert_partial_lumped",
    "parametric_petrov_mass",
    "physical_petrov_mass",
    "raw_mass",
    "raw_stiffness",
    "row_sum_lump",
]
