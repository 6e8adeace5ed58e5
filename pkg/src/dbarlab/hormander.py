"""Weighted Hilbert spaces, the exact discrete adjoint, and minimal-norm solves.

T is the spectral dbar from (n,p-1)-forms to (n,p)-forms.  Because the bundle
is trivialized, T is a fixed Fourier-multiplier structure and the metric only
enters through the Gram weights, so the Hilbert-space adjoint is computed
exactly as T* = h^{-1} dbar^T (h .), with dbar^T the unweighted transpose
built from conjugated multipliers and the same insertion signs.

The minimal-norm solve uses the normal equations T T* y = f.  Substituting
z = h y turns them into A z = f with A = dbar (h^{-1} dbar^T z), which is
symmetric positive semidefinite in the plain l2 inner product and, crucially,
has its range inside the dbar-multiplier range: residuals never leave the
solvable subspace, so conjugate gradients with a flat-symbol preconditioner
converges without touching the cokernel.  The returned u = h^{-1} dbar^T z
lies in Range(T*), hence is Gram-orthogonal to Ker(T) to machine precision
regardless of how accurately the iteration converged.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import FormError, PreconditionError, SolverError
from .exterior import EForm, index_slot, index_tuples, inner_product, insertion_sign, norm_sq
from .grid import GridSpec, _dz_multiplier, dz_array, integrate, seam_leakage
from .hermitian import MetricField, dbar


@dataclass
class HilbertStructure:
    """Weighted L2 structure on (p,q)-forms: pointwise Gram h, lattice quadrature."""

    grid: GridSpec
    rank: int
    p: int
    q: int
    metric: MetricField

    def inner(self, a: EForm, b: EForm) -> complex:
        return integrate(inner_product(a, b, self.metric))

    def norm2(self, a: EForm) -> float:
        return float(integrate(norm_sq(a, self.metric)).real)

    def gram_apply(self, a: EForm) -> EForm:
        out = a.copy()
        out.coeffs = np.einsum("...ab,...ijb->...ija", self.metric.mat, a.coeffs)
        return out

    def gram_solve(self, a: EForm) -> EForm:
        out = a.copy()
        hinv = self.metric.inverse_mat()
        out.coeffs = np.einsum("...ab,...ijb->...ija", hinv, a.coeffs)
        return out


@dataclass
class SolveReport:
    """Norms, bound, and diagnostics for one minimal-norm dbar solve."""

    u_norm2: float
    f_norm2: float
    p: int
    delta: float | None
    bound: float | None          # 1/(p*delta) when a positive floor is certified
    ratio: float                 # u_norm2 / f_norm2
    residual: float              # |T u - f|_H2 / |f|_H2
    iterations: int
    seam_leakage: float
    converged: bool
    bound_claimed: bool

    def row(self) -> dict:
        return {
            "u_norm2": self.u_norm2,
            "f_norm2": self.f_norm2,
            "p": self.p,
            "delta": "" if self.delta is None else self.delta,
            "bound": "" if self.bound is None else self.bound,
            "ratio": self.ratio,
            "residual": self.residual,
            "iterations": self.iterations,
            "seam_leakage": self.seam_leakage,
            "converged": int(self.converged),
            "bound_claimed": int(self.bound_claimed),
        }


def apply_T(u: EForm) -> EForm:
    """The closed densely defined operator: spectral dbar."""
    return dbar(u)


def dbar_transpose(v: EForm) -> EForm:
    """Unweighted l2 transpose of the dbar coefficient map.

    (dbar^T v)_{I,J} = sum_{k not in J} (-1)^p ins(k,J) (-d_k) v_{I, J+k};
    exact because the Nyquist-zeroed multipliers make each d_k skew-adjoint.
    """
    n = v.grid.n
    if v.q == 0:
        raise FormError("transpose of dbar maps q = 0 forms to nothing")
    out = EForm.zeros(v.grid, v.rank, v.p, v.q - 1)
    pos_J = index_slot(n, v.q - 1)
    sign_p = (-1) ** v.p
    for Ipos, _I in enumerate(index_tuples(n, v.p)):
        for Jpos, J in enumerate(index_tuples(n, v.q)):
            c = v.coeffs[..., Ipos, Jpos, :]
            for k in J:
                Jm = tuple(i for i in J if i != k)
                s = sign_p * insertion_sign(k, Jm)
                out.coeffs[..., Ipos, pos_J[Jm], :] += s * (
                    -dz_array(v.grid, c, k, conjugate=False)
                )
    return out


def apply_Tstar(v: EForm, h1: HilbertStructure, h2: HilbertStructure) -> EForm:
    """Exact discrete adjoint: <T u, v>_H2 = <u, T* v>_H1 to roundoff."""
    return h1.gram_solve(dbar_transpose(h2.gram_apply(v)))


# ---------------------------------------------------------------------------
# flat symbol machinery: range projection and preconditioner
# ---------------------------------------------------------------------------

@lru_cache(maxsize=16)
def _flat_symbol(grid: GridSpec, p: int) -> np.ndarray:
    """Stacked multiplier matrices D[J', J](mode) of dbar: (n,p-1) -> (n,p)."""
    n = grid.n
    rows = index_tuples(n, p)
    cols = index_tuples(n, p - 1)
    D = np.zeros(grid.shape + (len(rows), len(cols)), dtype=np.complex128)
    sign_p = (-1) ** n
    for cpos, J in enumerate(cols):
        for k in range(n):
            if k in J:
                continue
            target = tuple(sorted(J + (k,)))
            rpos = index_slot(n, p)[target]
            mu = np.broadcast_to(_dz_multiplier(grid, k, True), grid.shape)
            D[..., rpos, cpos] += sign_p * insertion_sign(k, J) * mu
    return D


@lru_cache(maxsize=16)
def _symbol_eig(grid: GridSpec, p: int) -> tuple:
    """Eigen-decomposition of B = D D^H per mode, for projection and pinv.

    Directions with eigenvalue below 1e-20 of the global top are the exact
    cokernel bins (zeroed Nyquist/zero modes and transverse directions); the
    smallest genuine eigenvalue is (2 pi/L)^2/4, far above that floor.
    """
    D = _flat_symbol(grid, p)
    B = D @ np.conj(np.swapaxes(D, -1, -2))
    vals, vecs = np.linalg.eigh(B)
    keep = vals > vals.max() * 1e-20
    return vals, vecs, keep


def _mode_transform(grid: GridSpec, coeffs: np.ndarray, forward: bool) -> np.ndarray:
    axes = tuple(range(2 * grid.n))
    return np.fft.fftn(coeffs, axes=axes) if forward else np.fft.ifftn(coeffs, axes=axes)


def range_projection_defect(f: EForm) -> float:
    """Relative l2 mass of f outside the exact discrete range of dbar."""
    grid = f.grid
    p = f.q
    vals, vecs, keep = _symbol_eig(grid, p)
    spec = _mode_transform(grid, f.coeffs, True)
    # components along eigenvectors, per rank channel
    comp = np.einsum("...mj,...jr->...mr", np.conj(np.swapaxes(vecs, -1, -2)), spec[..., 0, :, :])
    proj = np.where(keep[..., None], comp, 0.0)
    kept = np.einsum("...jm,...mr->...jr", vecs, proj)
    total = np.linalg.norm(spec)
    lost = np.linalg.norm(spec[..., 0, :, :] - kept)
    return float(lost / max(total, 1e-300))


def project_to_range(f: EForm) -> EForm:
    """Remove the (measure-zero) cokernel bins: zero/Nyquist modes and
    directions transverse to the dbar multiplier."""
    grid = f.grid
    p = f.q
    vals, vecs, keep = _symbol_eig(grid, p)
    spec = _mode_transform(grid, f.coeffs, True)
    comp = np.einsum("...mj,...jr->...mr", np.conj(np.swapaxes(vecs, -1, -2)), spec[..., 0, :, :])
    comp = np.where(keep[..., None], comp, 0.0)
    spec[..., 0, :, :] = np.einsum("...jm,...mr->...jr", vecs, comp)
    out = f.copy()
    out.coeffs = _mode_transform(grid, spec, False)
    return out


def _flat_pinv_apply(grid: GridSpec, p: int, coeffs: np.ndarray) -> np.ndarray:
    """Per-mode pseudoinverse of the flat normal-equation symbol B = D D^H.

    Exact inverse of the constant-weight normal operator on its range; the
    cokernel directions are projected out, which is safe because residuals of
    the substituted system never leave the range.
    """
    vals, vecs, keep = _symbol_eig(grid, p)
    inv_vals = np.where(keep, 1.0 / np.where(keep, vals, 1.0), 0.0)
    spec = _mode_transform(grid, coeffs, True)
    comp = np.einsum("...mj,...jr->...mr", np.conj(np.swapaxes(vecs, -1, -2)), spec[..., 0, :, :])
    comp = comp * inv_vals[..., None]
    spec[..., 0, :, :] = np.einsum("...jm,...mr->...jr", vecs, comp)
    return _mode_transform(grid, spec, False)


def closedness_defect(f: EForm, h: MetricField) -> float:
    """Dimensionless closedness measure |dbar f| / (k_1 |f|), k_1 = 2 pi / L.

    Scaling by the lowest nonzero wavenumber makes the defect comparable to a
    relative coefficient error; it vanishes identically at top degree.
    """
    if f.q == f.grid.n:
        return 0.0
    num = integrate(norm_sq(dbar(f), h)).real
    den = integrate(norm_sq(f, h)).real
    return float(np.sqrt(num / max(den, 1e-300))) * f.grid.L / (2 * np.pi)


# ---------------------------------------------------------------------------
# the solver
# ---------------------------------------------------------------------------

def solve_min_norm(
    f: EForm,
    h: MetricField,
    delta: float | None = None,
    tol: float = 1e-10,
    maxiter_factor: int = 10,
    precond: str = "flat",
    range_tol: float = 1e-8,
    closed_tol: float = 1e-8,
    margin: float = 0.125,
) -> tuple:
    """Minimal-norm u with dbar u = f, plus a SolveReport.

    f must be an (n,p)-form, dbar-closed and inside the discrete range (up to
    range_tol); curvature hypotheses enter only through the reported delta.
    """
    grid = f.grid
    n = grid.n
    p = f.q
    if f.p != n or p < 1:
        raise FormError(f"source must be an (n,p)-form with p >= 1, got ({f.p},{f.q})")
    if h.grid != grid or h.rank != f.rank:
        raise FormError("metric does not match the source")

    H1 = HilbertStructure(grid, f.rank, n, p - 1, h)
    H2 = HilbertStructure(grid, f.rank, n, p, h)
    f_norm2 = H2.norm2(f)
    if f_norm2 == 0.0:
        u = EForm.zeros(grid, f.rank, n, p - 1)
        report = SolveReport(0.0, 0.0, p, delta, _bound(delta, p), 0.0, 0.0, 0, 0.0, True,
                             _bound(delta, p) is not None)
        return u, report

    closed = closedness_defect(f, h)
    if closed > closed_tol:
        raise PreconditionError(
            f"source is not dbar-closed: relative defect {closed:.3e}", measured=closed
        )
    range_defect = range_projection_defect(f)
    if range_defect > range_tol:
        raise PreconditionError(
            f"source lies outside the discrete range of dbar by {range_defect:.3e} "
            "(zero-mode or Nyquist content); clean the source first",
            measured=range_defect,
        )

    hinv = h.inverse_mat()

    def apply_A(z: np.ndarray) -> np.ndarray:
        v = EForm(grid, f.rank, n, p, z)
        w = dbar_transpose(v)
        w.coeffs = np.einsum("...ab,...ijb->...ija", hinv, w.coeffs)
        return dbar(w).coeffs

    def apply_M(r: np.ndarray) -> np.ndarray:
        if precond == "none":
            return r
        return _flat_pinv_apply(grid, p, r)

    def h2_norm(res: np.ndarray) -> float:
        form = EForm(grid, f.rank, n, p, res)
        return np.sqrt(max(H2.norm2(form), 0.0))

    dim = f.coeffs.size
    maxiter = int(maxiter_factor * np.ceil(np.sqrt(dim)))
    f_norm = np.sqrt(f_norm2)

    z = np.zeros_like(f.coeffs)
    r = f.coeffs.copy()
    Mr = apply_M(r)
    rho = np.vdot(r, Mr).real
    pdir = Mr.copy()
    iterations = 0
    resid = h2_norm(r) / f_norm
    best_resid = resid
    best_z = z.copy()
    restarts = 0
    while resid > tol:
        if iterations >= maxiter:
            raise SolverError(
                f"conjugate gradients hit the iteration cap {maxiter} at residual {resid:.3e}"
                f" (best seen {best_resid:.3e})",
                iterations=iterations,
                residual=resid,
            )
        Ap = apply_A(pdir)
        pAp = np.vdot(pdir, Ap).real
        if pAp <= 0.0:
            raise SolverError(
                "conjugate gradients broke down on a nonpositive curvature direction "
                "(near-kernel of the normal operator)",
                near_null=EForm(grid, f.rank, n, p, pdir.copy()),
                iterations=iterations,
                residual=resid,
            )
        alpha = rho / pAp
        z += alpha * pdir
        r -= alpha * Ap
        Mr = apply_M(r)
        rho_new = np.vdot(r, Mr).real
        beta = rho_new / rho
        rho = rho_new
        pdir = Mr + beta * pdir
        iterations += 1
        resid = h2_norm(r) / f_norm
        if resid < best_resid:
            best_resid = resid
            best_z = z.copy()
        elif resid > 10.0 * best_resid:
            # accumulated roundoff has broken conjugacy; restart the recurrence
            # from the best iterate with a fresh residual
            if restarts >= 5:
                raise SolverError(
                    f"conjugate gradients stalled at residual {best_resid:.3e} "
                    f"after {restarts} restarts",
                    iterations=iterations,
                    residual=best_resid,
                )
            restarts += 1
            z = best_z.copy()
            r = f.coeffs - apply_A(z)
            Mr = apply_M(r)
            rho = np.vdot(r, Mr).real
            pdir = Mr.copy()
            resid = h2_norm(r) / f_norm

    zform = EForm(grid, f.rank, n, p, best_z if best_resid < resid else z)
    u = dbar_transpose(zform)
    u.coeffs = np.einsum("...ab,...ijb->...ija", hinv, u.coeffs)

    true_resid_form = dbar(u)
    true_resid_form.coeffs -= f.coeffs
    residual = np.sqrt(max(H2.norm2(true_resid_form), 0.0)) / f_norm
    u_norm2 = H1.norm2(u)
    leak = seam_leakage(norm_sq(u, h).values.real, grid, margin)
    bound = _bound(delta, p)
    report = SolveReport(
        u_norm2=u_norm2,
        f_norm2=f_norm2,
        p=p,
        delta=delta,
        bound=bound,
        ratio=u_norm2 / f_norm2,
        residual=float(residual),
        iterations=iterations,
        seam_leakage=float(leak),
        converged=True,
        bound_claimed=bound is not None,
    )
    return u, report


def _bound(delta, p):
    if delta is None or delta <= 0.0:
        return None
    return 1.0 / (delta * p)


def verify_hormander(report: SolveReport, delta: float, p: int, tol: float = 0.05) -> dict:
    """Check u_norm2 <= (1 + tol)/(p delta) * f_norm2 against a certified floor."""
    if delta is None or delta <= 0.0 or not np.isfinite(delta):
        return {
            "claimed": False,
            "passed": None,
            "slack": None,
            "bound": None,
            "normalized_ratio": None,
        }
    bound = 1.0 / (delta * p)
    limit = bound * (1.0 + tol) * report.f_norm2
    slack = limit - report.u_norm2
    return {
        "claimed": True,
        "passed": bool(report.u_norm2 <= limit),
        "slack": float(slack),
        "bound": bound,
        "normalized_ratio": report.u_norm2 / (bound * report.f_norm2),
    }


def dense_min_norm(f: EForm, h: MetricField) -> EForm:
    """Dense minimal-norm oracle for small grids: pinv of the whitened matrix.

    Builds W2 T W1^{-1} column by column (W = pointwise sqrt of h) and solves
    with the Moore-Penrose inverse; practical for N <= 16 at n = 1.
    """
    grid = f.grid
    n = grid.n
    p = f.q
    if grid.num_points * f.rank * len(index_tuples(n, p - 1)) > 1024:
        raise PreconditionError("dense oracle restricted to small grids")
    sqrt_h = MetricField(grid, h.rank, h.sqrt_mat())
    inv_sqrt = np.linalg.inv(sqrt_h.mat)

    shape1 = grid.shape + (1, len(index_tuples(n, p - 1)), f.rank)
    dim1 = int(np.prod(shape1))
    shape2 = f.coeffs.shape
    dim2 = int(np.prod(shape2))
    cols = np.zeros((dim2, dim1), dtype=np.complex128)
    basis = np.zeros(dim1, dtype=np.complex128)
    for i in range(dim1):
        basis[:] = 0.0
        basis[i] = 1.0
        u = EForm(grid, f.rank, n, p - 1, basis.reshape(shape1).copy())
        u.coeffs = np.einsum("...ab,...ijb->...ija", inv_sqrt, u.coeffs)
        Tu = dbar(u)
        Tu.coeffs = np.einsum("...ab,...ijb->...ija", sqrt_h.mat, Tu.coeffs)
        cols[:, i] = Tu.coeffs.ravel()
    f_white = np.einsum("...ab,...ijb->...ija", sqrt_h.mat, f.coeffs).ravel()
    u_white, *_ = np.linalg.lstsq(cols, f_white, rcond=1e-12)
    u = EForm(grid, f.rank, n, p - 1, u_white.reshape(shape1).copy())
    u.coeffs = np.einsum("...ab,...ijb->...ija", inv_sqrt, u.coeffs)
    return u
