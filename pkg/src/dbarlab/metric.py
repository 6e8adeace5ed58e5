"""Hermitian metric fields on a trivialized rank-r bundle.

A metric is an r x r hermitian positive matrix per grid point.  Singular
metrics carry an explicit boolean mask of points where det h has (numerically)
reached zero; all quantitative claims elsewhere in the package are made off
the mask.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormError, MetricError
from .grid import GridSpec

HERMITIAN_TOL = 1e-12

# mask threshold: det h below this multiple of the median determinant
DEFAULT_MASK_REL = 1e-12


def matrix_apply(mat: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """Pointwise h @ v for stacked matrices (..., r, r) and vectors (..., r)."""
    return np.einsum("...ab,...b->...a", mat, vec)


def vector_inner(mat: np.ndarray, s: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Pointwise (s, t)_h = t^H h s; linear in s, conjugate-linear in t."""
    return np.einsum("...a,...ab,...b->...", np.conj(t), mat, s)


@dataclass
class MetricField:
    """r x r hermitian matrix per grid point, with an optional singular mask.

    Metrics of the diagonal exponential form diag(exp(-phi_a)) may carry their
    exponents in ``diag_log_weights``; connection and curvature then
    differentiate the smooth exponents instead of forming h^{-1} dh, which
    avoids amplifying spectral truncation noise by the weight's dynamic range.
    """

    grid: GridSpec
    rank: int
    mat: np.ndarray
    mask: np.ndarray | None = None
    diag_log_weights: tuple | None = None

    def __post_init__(self):
        self.mat = np.asarray(self.mat, dtype=np.complex128)
        expected = self.grid.shape + (self.rank, self.rank)
        if self.mat.shape != expected:
            raise FormError(f"metric shape {self.mat.shape} does not match {expected}")
        scale = np.abs(self.mat).max()
        defect = np.abs(self.mat - np.conj(np.swapaxes(self.mat, -1, -2))).max()
        if scale > 0 and defect > HERMITIAN_TOL * scale * 10:
            raise MetricError(f"metric is not hermitian: defect {defect:.3e} vs scale {scale:.3e}")
        # symmetrize the roundoff away so downstream eigensolves stay clean
        self.mat = 0.5 * (self.mat + np.conj(np.swapaxes(self.mat, -1, -2)))
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.grid.shape:
                raise FormError("mask shape does not match the grid")
        if self.diag_log_weights is not None:
            if len(self.diag_log_weights) != self.rank:
                raise FormError("need one log-weight per diagonal entry")
            self.diag_log_weights = tuple(
                np.asarray(w, dtype=np.float64) for w in self.diag_log_weights
            )

    @classmethod
    def identity(cls, grid: GridSpec, rank: int = 1) -> "MetricField":
        mat = np.zeros(grid.shape + (rank, rank), dtype=np.complex128)
        for a in range(rank):
            mat[..., a, a] = 1.0
        zero = np.zeros(grid.shape)
        return cls(grid, rank, mat, diag_log_weights=(zero,) * rank)

    @classmethod
    def from_weight(
        cls, grid: GridSpec, weight: np.ndarray, rank: int = 1, log_weight: np.ndarray | None = None
    ) -> "MetricField":
        """Diagonal metric weight * I; pass log_weight when weight = exp(-log_weight)."""
        w = np.asarray(weight, dtype=np.complex128)
        if w.shape != grid.shape:
            raise FormError("weight shape does not match the grid")
        mat = np.zeros(grid.shape + (rank, rank), dtype=np.complex128)
        for a in range(rank):
            mat[..., a, a] = w
        payload = None if log_weight is None else (log_weight,) * rank
        return cls(grid, rank, mat, diag_log_weights=payload)

    @classmethod
    def from_diagonal(cls, grid: GridSpec, weights, log_weights=None) -> "MetricField":
        """Diagonal metric from positive scalar fields, optionally with exponents."""
        rank = len(weights)
        mat = np.zeros(grid.shape + (rank, rank), dtype=np.complex128)
        for a, w in enumerate(weights):
            mat[..., a, a] = np.asarray(w)
        payload = None if log_weights is None else tuple(log_weights)
        return cls(grid, rank, mat, diag_log_weights=payload)

    def det(self) -> np.ndarray:
        return np.linalg.det(self.mat).real

    def min_eigenvalue(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.mat)[..., 0]

    def with_default_mask(self, rel_threshold: float = DEFAULT_MASK_REL) -> "MetricField":
        """Mask points whose determinant sits below rel_threshold * median det."""
        det = self.det()
        mask = det < rel_threshold * np.median(det)
        return MetricField(
            self.grid,
            self.rank,
            self.mat,
            mask if mask.any() else None,
            diag_log_weights=self.diag_log_weights,
        )

    def unmasked(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.grid.shape, dtype=bool)
        return ~self.mask

    def inverse_mat(self) -> np.ndarray:
        """Pointwise inverse; raises on an exactly singular unmasked point."""
        try:
            return np.linalg.inv(self.mat)
        except np.linalg.LinAlgError as exc:
            raise MetricError("metric is singular at some grid point") from exc

    def sqrt_mat(self) -> np.ndarray:
        """Pointwise hermitian positive square root."""
        vals, vecs = np.linalg.eigh(self.mat)
        if vals.min() < 0:
            vals = np.clip(vals, 0.0, None)
        return np.einsum("...ab,...b,...cb->...ac", vecs, np.sqrt(vals), np.conj(vecs))


def dual_metric(h: MetricField) -> MetricField:
    """Metric induced on the dual bundle: entrywise transpose of the inverse."""
    inv = h.inverse_mat()
    payload = None
    if h.diag_log_weights is not None:
        payload = tuple(-w for w in h.diag_log_weights)
    return MetricField(h.grid, h.rank, np.swapaxes(inv, -1, -2), h.mask, payload)
