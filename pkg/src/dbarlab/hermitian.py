"""Chern connection, curvature, and the bundle operators D', dbar, dbar*_h.

The bundle is globally trivialized on the model domain, so dbar acts
componentwise and every curvature effect enters through the metric.  With
theta_j = h^{-1} d_j h the curvature coefficients are

    Theta_jk = -dbar_k(theta_j),

the sign coming from reordering dzbar_k wedge dz_j into the canonical frame;
for a line bundle this reduces to Theta_11 = -d ddbar log h entrywise, so the
weight e^{-|z|^2} has Theta_11 = 1 and i*Theta = omega.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormError
from .grid import GridSpec, dz_array
from .metric import MetricField, dual_metric, matrix_apply
from .exterior import (
    EForm,
    hodge_star,
    index_slot,
    insertion_sign,
    omega_power,
    wedge,
)

__all__ = [
    "MetricField",
    "dual_metric",
    "CurvatureField",
    "chern_connection",
    "curvature",
    "curvature_wedge",
    "dbar",
    "dpartial",
    "dprime",
    "dbar_star_formal",
]

CURVATURE_SYMMETRY_TOL = 1e-8


@dataclass
class CurvatureField:
    """Coefficient matrices Theta_jk of the curvature (1,1)-form.

    theta has shape grid.shape + (n, n, r, r); hermitian block symmetry
    h Theta_jk = (h Theta_kj)^H holds at unmasked points up to discretization.
    """

    grid: GridSpec
    rank: int
    theta: np.ndarray

    def __post_init__(self):
        n = self.grid.n
        expected = self.grid.shape + (n, n, self.rank, self.rank)
        self.theta = np.asarray(self.theta, dtype=np.complex128)
        if self.theta.shape != expected:
            raise FormError(f"curvature shape {self.theta.shape} does not match {expected}")

    @classmethod
    def constant(cls, grid: GridSpec, rank: int, blocks: np.ndarray) -> "CurvatureField":
        """Curvature with the same (n, n, r, r) coefficient blocks at every point."""
        blocks = np.asarray(blocks, dtype=np.complex128)
        theta = np.broadcast_to(blocks, grid.shape + blocks.shape).copy()
        return cls(grid, rank, theta)

    def hermitian_defect(self, h: MetricField) -> float:
        """Max relative violation of h Theta_jk = (h Theta_kj)^H off the mask."""
        hT = np.einsum("...ac,...jkcb->...jkab", h.mat, self.theta)
        swapped = np.conj(np.swapaxes(hT, -1, -2)).swapaxes(-4, -3)
        defect = np.abs(hT - swapped).max(axis=(-4, -3, -2, -1))
        scale = np.abs(hT).max(axis=(-4, -3, -2, -1))
        keep = h.unmasked()
        top = defect[keep].max()
        denom = max(scale[keep].max(), 1e-300)
        return float(top / denom)


def chern_connection(h: MetricField) -> np.ndarray:
    """Connection coefficients theta_j = h^{-1} d_j h, shape grid + (n, r, r).

    For metrics carrying diagonal exponents this is diag(-d_j phi_a), the same
    quantity computed from the smooth exponent instead of the matrix entries.
    """
    n = h.grid.n
    out = np.zeros(h.grid.shape + (n, h.rank, h.rank), dtype=np.complex128)
    if h.diag_log_weights is not None:
        for j in range(n):
            for a, phi in enumerate(h.diag_log_weights):
                out[..., j, a, a] = -dz_array(h.grid, phi.astype(np.complex128), j)
        return out
    hinv = h.inverse_mat()
    for j in range(n):
        dh = dz_array(h.grid, h.mat, j, conjugate=False)
        out[..., j, :, :] = hinv @ dh
    return out


def curvature(h: MetricField) -> CurvatureField:
    """Curvature coefficients Theta_jk = -dbar_k(h^{-1} d_j h).

    Diagonal-exponent metrics reduce entrywise to d_j dbar_k phi_a.
    """
    n = h.grid.n
    out = np.zeros(h.grid.shape + (n, n, h.rank, h.rank), dtype=np.complex128)
    if h.diag_log_weights is not None:
        for a, phi in enumerate(h.diag_log_weights):
            for j in range(n):
                dphi = dz_array(h.grid, phi.astype(np.complex128), j)
                for k in range(n):
                    out[..., j, k, a, a] = dz_array(h.grid, dphi, k, conjugate=True)
        return CurvatureField(h.grid, h.rank, out)
    theta_conn = chern_connection(h)
    for j in range(n):
        for k in range(n):
            out[..., j, k, :, :] = -dz_array(
                h.grid, theta_conn[..., j, :, :], k, conjugate=True
            )
    return CurvatureField(h.grid, h.rank, out)


def dbar(a: EForm) -> EForm:
    """Componentwise spectral dbar with multi-index insertion signs.

    dbar of a (p,n)-form vanishes identically and has no representable
    bidegree, so that call raises; closedness checks treat q = n as closed.
    """
    n = a.grid.n
    if a.q == n:
        raise FormError(
            f"dbar target bidegree ({a.p},{a.q + 1}) exceeds n={n}; "
            "a top-degree form is automatically dbar-closed"
        )
    out = EForm.zeros(a.grid, a.rank, a.p, a.q + 1)
    pos_J = index_slot(n, a.q + 1)
    sign_p = (-1) ** a.p
    for Ipos, I in enumerate(a.dz_slots()):
        for Jpos, J in enumerate(a.dzbar_slots()):
            c = a.coeffs[..., Ipos, Jpos, :]
            for k in range(n):
                if k in J:
                    continue
                s = sign_p * insertion_sign(k, J)
                target = tuple(sorted(J + (k,)))
                out.coeffs[..., Ipos, pos_J[target], :] += s * dz_array(
                    a.grid, c, k, conjugate=True
                )
    return out


def dpartial(a: EForm) -> EForm:
    """Componentwise spectral del (the (1,0)-differential, no connection term)."""
    n = a.grid.n
    if a.p == n:
        raise FormError(
            f"del target bidegree ({a.p + 1},{a.q}) exceeds n={n}; "
            "top-holomorphic-degree del vanishes identically"
        )
    out = EForm.zeros(a.grid, a.rank, a.p + 1, a.q)
    pos_I = index_slot(n, a.p + 1)
    for Ipos, I in enumerate(a.dz_slots()):
        for Jpos, J in enumerate(a.dzbar_slots()):
            c = a.coeffs[..., Ipos, Jpos, :]
            for k in range(n):
                if k in I:
                    continue
                s = insertion_sign(k, I)
                target = tuple(sorted(I + (k,)))
                out.coeffs[..., pos_I[target], Jpos, :] += s * dz_array(
                    a.grid, c, k, conjugate=False
                )
    return out


def dprime(a: EForm, h: MetricField) -> EForm:
    """D' = del + theta wedge on (q,0)-forms, the (1,0)-part of the Chern connection."""
    if a.q != 0:
        raise FormError(
            f"D' is only applied to (q,0)-forms here, got bidegree ({a.p},{a.q})"
        )
    if h.grid != a.grid or h.rank != a.rank:
        raise FormError("metric does not match the form")
    n = a.grid.n
    out = dpartial(a)
    theta_conn = chern_connection(h)
    pos_I = index_slot(n, a.p + 1)
    for Ipos, I in enumerate(a.dz_slots()):
        c = a.coeffs[..., Ipos, 0, :]
        for j in range(n):
            if j in I:
                continue
            s = insertion_sign(j, I)
            target = tuple(sorted(I + (j,)))
            out.coeffs[..., pos_I[target], 0, :] += s * matrix_apply(
                theta_conn[..., j, :, :], c
            )
    return out


def curvature_wedge(theta: CurvatureField, a: EForm) -> EForm:
    """Theta wedge a for a (q,0)-form a: apply each Theta_jk and wedge dz_j ^ dzbar_k."""
    if a.q != 0:
        raise FormError(f"curvature wedge expects a (q,0)-form, got ({a.p},{a.q})")
    if theta.grid != a.grid or theta.rank != a.rank:
        raise FormError("curvature does not match the form")
    n = a.grid.n
    if a.p + 1 > n:
        raise FormError("curvature wedge target degree exceeds n")
    out = EForm.zeros(a.grid, a.rank, a.p + 1, 1)
    pos_I = index_slot(n, a.p + 1)
    pos_J = index_slot(n, 1)
    sign_q = (-1) ** a.p  # dzbar_k crossing dz_I
    for Ipos, I in enumerate(a.dz_slots()):
        c = a.coeffs[..., Ipos, 0, :]
        for j in range(n):
            if j in I:
                continue
            s = sign_q * insertion_sign(j, I)
            target = tuple(sorted(I + (j,)))
            for k in range(n):
                out.coeffs[..., pos_I[target], pos_J[(k,)], :] += s * matrix_apply(
                    theta.theta[..., j, k, :, :], c
                )
    return out


def dbar_star_formal(beta: EForm, h: MetricField) -> EForm:
    """Formal adjoint of dbar on (n,p)-forms via D' gamma_beta = -i gamma_(dbar* beta).

    Computes gamma_beta, applies D', multiplies by i, and reconstructs the
    (n,p-1)-form by wedging back with omega^(p-1)/(p-1)!.
    """
    n = beta.grid.n
    if beta.p != n:
        raise FormError(f"dbar* expects an (n,p)-form, got ({beta.p},{beta.q})")
    p = beta.q
    if p < 1:
        raise FormError("dbar* requires p >= 1")
    gamma = hodge_star(beta)
    dga = dprime(gamma, h)
    gamma_star = 1j * dga
    return wedge(gamma_star, omega_power(beta.grid, p - 1))
