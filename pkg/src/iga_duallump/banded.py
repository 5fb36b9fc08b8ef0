"""Sparse banded matrices with measured bandwidth metadata."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

ZERO_RTOL = 1e-13


def measured_bandwidth(mat, rtol: float = 0.0) -> int:
    """Largest ``|i - j|`` over entries with ``|a_ij| > rtol * max|a|``.

    The default counts every stored nonzero. Sparse products never create
    entries outside the structural band, while genuine band-edge entries of a
    corrected inverse can be as small as 1e-25 relative to the largest one.
    """
    coo = sps.coo_matrix(mat)
    if coo.nnz == 0:
        return 0
    vals = np.abs(coo.data)
    keep = vals > rtol * vals.max()
    if not keep.any():
        return 0
    return int(np.abs(coo.row[keep] - coo.col[keep]).max())


def prune(mat, rtol: float = ZERO_RTOL) -> sps.csr_matrix:
    """Drop entries that are structurally zero relative to the largest entry."""
    m = sps.csr_matrix(mat, copy=True)
    if m.nnz:
        m.data[np.abs(m.data) <= rtol * np.abs(m.data).max()] = 0.0
        m.eliminate_zeros()
    return m


@dataclass(frozen=True, eq=False)
class BandedSymmetricMatrix:
    """Symmetric matrix in CSR storage together with its measured bandwidth."""

    matrix: sps.csr_matrix

    def __post_init__(self):
        object.__setattr__(self, "matrix", sps.csr_matrix(self.matrix))

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def bandwidth(self) -> int:
        return measured_bandwidth(self.matrix)

    def symmetry_error(self) -> float:
        d = self.matrix - self.matrix.T
        return float(abs(d).max()) if d.nnz else 0.0

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def __matmul__(self, other):
        if isinstance(other, BandedSymmetricMatrix):
            other = other.matrix
        return self.matrix @ other
