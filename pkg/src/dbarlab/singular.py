"""Singular hermitian metrics, mollification, and the regularized solve pipeline.

Positively curved singular metrics are regularized through their duals: the
dual of a positively curved metric has plurisubharmonic section norms, so
entrywise convolution with a radial approximate identity produces a family
that decreases in the quadratic-form order as the radius shrinks, and
dualizing back gives smooth metrics increasing pointwise to the original.

Log-pole catalog metrics use the periodic Green's function of the lattice
Laplacian instead of a bare log |z - z0|: the factor exp(a * lambda(z)) with
Delta lambda = 2 pi (delta_z0 - 1/L^2) scales so exp(2 a lambda) behaves like |z - z0|^(2a) near the
pole, is exactly periodic, and costs only a uniform curvature background
a*pi/L^2 spread over the box.  The pole is placed off-lattice; the grid point
nearest each pole is masked as the computable stand-in for the det h = 0 set,
and h-weighted quadrature excludes masked cells.

All quantitative monotonicity claims are made on the region where the
averaging argument actually applies: points whose kernel ball stays inside
the plurisubharmonic zone of the dual and clear of the pole cells.  At coarse
kernel radii that region can be empty on a small box; such pairs are reported
as unchecked rather than silently passed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import CurvatureFloorError, PreconditionError, ValidationError
from .exterior import EForm, norm_sq
from .grid import GridSpec, ScalarField, convolve, integrate
from .hermitian import MetricField, curvature, dual_metric
from .hormander import solve_min_norm
from .positivity import nakano_delta
from .weights import apodized_quadratic_weight, default_plateau_radius, default_smoothing_scale


# ---------------------------------------------------------------------------
# mollifiers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MollifierSchedule:
    """Shrinking family of radial bump kernels, eps_nu = eps0 / nu."""

    eps0: float
    nu_max: int = 8

    def __post_init__(self):
        if self.eps0 <= 0 or self.nu_max < 1:
            raise ValidationError("schedule needs eps0 > 0 and nu_max >= 1")

    @property
    def radii(self) -> tuple:
        return tuple(self.eps0 / nu for nu in range(1, self.nu_max + 1))


@lru_cache(maxsize=64)
def _kernel_cached(grid: GridSpec, eps: float) -> tuple:
    if eps < 2.0 * grid.spacing:
        raise PreconditionError(
            f"mollifier radius {eps} under-resolved: needs at least 2 grid spacings "
            f"({2 * grid.spacing})",
            measured=eps,
        )
    if eps >= 0.5 * grid.L:
        raise ValidationError("mollifier radius must be smaller than half the box")
    rho2 = np.zeros(grid.shape, dtype=np.float64)
    t = grid.axis_coordinates()
    d_axis = np.minimum(t, grid.L - t)
    dims = 2 * grid.n
    for axis in range(dims):
        shape = [1] * dims
        shape[axis] = grid.N
        rho2 = rho2 + (d_axis.reshape(shape)) ** 2
    u = rho2 / (eps * eps)
    vals = np.zeros(grid.shape)
    inside = u < 1.0
    vals[inside] = np.exp(-1.0 / (1.0 - u[inside]))
    mass = vals.sum() * grid.cell_volume
    if mass <= 0:
        raise PreconditionError("mollifier kernel has no interior samples")
    vals /= mass
    return vals, np.fft.fftn(vals)


def mollifier_kernel(grid: GridSpec, eps: float) -> ScalarField:
    """Radial bump exp(-1/(1-(rho/eps)^2)) on rho < eps, unit discrete mass."""
    vals, _ = _kernel_cached(grid, eps)
    return ScalarField(grid, vals.astype(np.complex128))


def mollify(h: MetricField, eps: float) -> MetricField:
    """Entrywise periodic convolution with the radius-eps kernel.

    Hermiticity and positive semidefiniteness survive exactly (averaging with
    nonnegative weights stays in the psd cone); the result is unmasked.
    """
    _, spec_k = _kernel_cached(h.grid, eps)
    out = np.empty_like(h.mat)
    axes = tuple(range(2 * h.grid.n))
    for a in range(h.rank):
        for b in range(h.rank):
            conv = np.fft.ifftn(np.fft.fftn(h.mat[..., a, b], axes=axes) * spec_k, axes=axes)
            out[..., a, b] = conv * h.grid.cell_volume
    out = 0.5 * (out + np.conj(np.swapaxes(out, -1, -2)))
    return MetricField(h.grid, h.rank, out)


def mollify_scalar(f: ScalarField, eps: float) -> ScalarField:
    return convolve(f, mollifier_kernel(f.grid, eps))


# ---------------------------------------------------------------------------
# the catalog
# ---------------------------------------------------------------------------

def periodic_log_pole(grid: GridSpec, z0: complex) -> np.ndarray:
    """Periodic counterpart of log |z - z0| via the lattice Green's function.

    Solves Delta lambda = 2 pi (src - 1/L^2) spectrally, where src is the
    band-limited unit point mass at z0; lambda ~ log |z - z0| + smooth near
    the pole and is exactly periodic.  Only n = 1.
    """
    if grid.n != 1:
        raise ValidationError("log-pole weights are a Riemann-surface (n = 1) construction")
    x = grid.coordinate(0)
    y = grid.coordinate(1)
    k = np.fft.fftfreq(grid.N, d=grid.spacing) * 2.0 * np.pi
    # band-limited point mass: product of shifted Dirichlet kernels
    sx = np.zeros(grid.N, dtype=np.complex128)
    sy = np.zeros(grid.N, dtype=np.complex128)
    t = grid.axis_coordinates()
    for kk in np.fft.fftfreq(grid.N) * grid.N:
        w = 2.0 * np.pi * kk / grid.L
        sx += np.exp(1j * w * (t - z0.real))
        sy += np.exp(1j * w * (t - z0.imag))
    src = np.outer(sx.real, sy.real) / grid.L ** 2
    spec = np.fft.fftn(src)
    kx = k.reshape(-1, 1)
    ky = k.reshape(1, -1)
    k2 = kx * kx + ky * ky
    k2[0, 0] = 1.0
    lam_spec = -2.0 * np.pi * spec / k2
    lam_spec[0, 0] = 0.0
    lam = np.fft.ifftn(lam_spec).real
    return lam


@dataclass
class CatalogMetric:
    """A catalog entry: the metric plus the geometry its guarantees live on."""

    name: str
    metric: MetricField
    poles: tuple = ()
    delta_target: float = 1.0
    plateau_radius: float = 0.0
    smoothing: float = 0.0
    notes: str = ""


def singular_catalog(name: str, grid: GridSpec, **params) -> CatalogMetric:
    """Built-in singular metrics, each documented with singular set and sign.

    * "log_pole" (r=1): |z - z0|^(2a)-type factor times the apodized Gaussian
      weight; positively curved off the pole with floor ~ delta = c, vanishing
      determinant at the pole.  Params: a (default 0.5), c (1.0), offset.
    * "log_pole_pair" (r=2): diagonal of two such weights with distinct poles
      and exponents.
    * "matrix_psh_dual" (r=2): dual of the Griffiths-negative F^H F + e^phi I
      built from holomorphic-section norms; smooth, positively curved, empty
      mask.
    * "gaussian" (r=1): the a = 0 degenerate member (smooth, no mask).
    """
    c = float(params.get("c", 1.0))
    budget = float(params.get("budget", 7.0))
    # c = 0 is the flat degenerate member; size its (inactive) plateau as c = 1
    c_geom = c if c > 0 else 1.0
    r0 = params.get("r0") or default_plateau_radius(grid, c_geom, budget=budget)
    s = params.get("s") or default_smoothing_scale(grid, c_geom)
    phi = apodized_quadratic_weight(grid, c, r0=r0, s=s).values.real

    if name == "gaussian":
        h = MetricField.from_weight(grid, np.exp(-phi), 1, log_weight=phi)
        return CatalogMetric(name, h, (), c, r0, s, "smooth degenerate member, empty mask")

    if name == "log_pole":
        a = float(params.get("a", 0.5))
        if not 0.0 <= a < 1.0:
            raise ValidationError(f"log-pole exponent must lie in [0,1), got {a}")
        offset = params.get("offset", 0.55 + 0.35j)
        z0 = complex(grid.center + offset.real, grid.center + offset.imag)
        if a == 0.0:
            h = MetricField.from_weight(grid, np.exp(-phi), 1, log_weight=phi)
            return CatalogMetric(name, h, (), c, r0, s, "a = 0: smooth Gaussian weight")
        lam = periodic_log_pole(grid, z0)
        w = np.exp(2.0 * a * lam - phi)
        h = MetricField.from_weight(grid, w, 1)
        h = _mask_nearest(h, (z0,))
        return CatalogMetric(
            name, h, (z0,), c, r0, s,
            f"log-pole exponent a={a}: positively curved off the pole, det -> 0 at it",
        )

    if name == "log_pole_pair":
        a1 = float(params.get("a1", 0.5))
        a2 = float(params.get("a2", 0.3))
        off1 = params.get("offset", 0.55 + 0.35j)
        off2 = params.get("offset2", -0.62 - 0.41j)
        z1 = complex(grid.center + off1.real, grid.center + off1.imag)
        z2 = complex(grid.center + off2.real, grid.center + off2.imag)
        lam1 = periodic_log_pole(grid, z1)
        lam2 = periodic_log_pole(grid, z2)
        w1 = np.exp(2.0 * a1 * lam1 - phi)
        w2 = np.exp(2.0 * a2 * lam2 - phi)
        h = MetricField.from_diagonal(grid, [w1, w2])
        h = _mask_nearest(h, (z1, z2))
        return CatalogMetric(
            name, h, (z1, z2), c, r0, s,
            "diagonal pair of log-pole weights; det vanishes at both poles",
        )

    if name == "matrix_psh_dual":
        # Griffiths-negative g = F^H F + e^phi I with F = [[1, w],[0, 1]] and w
        # holomorphic on the plateau box; section norms |F u|^2 + e^phi |u|^2
        # are plurisubharmonic there, so the dual is positively curved on it.
        from .weights import plateau_coordinate

        w_entry = plateau_coordinate(grid, 0, r0, s)
        g = np.zeros(grid.shape + (2, 2), dtype=np.complex128)
        g[..., 0, 0] = 1.0 + np.exp(phi)
        g[..., 0, 1] = np.conj(w_entry)
        g[..., 1, 0] = w_entry
        g[..., 1, 1] = np.abs(w_entry) ** 2 + 1.0 + np.exp(phi)
        gm = MetricField(grid, 2, g)
        h = dual_metric(gm)
        return CatalogMetric(
            name, h, (), 0.0, r0, s,
            "dual of a Griffiths-negative matrix metric with psh section norms; empty mask",
        )

    raise ValidationError(f"unknown catalog metric {name!r}")


def _mask_nearest(h: MetricField, poles: tuple) -> MetricField:
    """Mask the grid point nearest each pole: the det h = 0 stand-in."""
    mask = np.zeros(h.grid.shape, dtype=bool)
    t = h.grid.axis_coordinates()
    for z0 in poles:
        ix = int(np.argmin(np.abs((t - z0.real + 0.5 * h.grid.L) % h.grid.L - 0.5 * h.grid.L)))
        iy = int(np.argmin(np.abs((t - z0.imag + 0.5 * h.grid.L) % h.grid.L - 0.5 * h.grid.L)))
        mask[ix, iy] = True
    return MetricField(h.grid, h.rank, h.mat, mask, h.diag_log_weights)


def masked_norm2(f: EForm, h: MetricField) -> float:
    """h-weighted squared norm with masked cells excluded from the quadrature."""
    dens = norm_sq(f, h).values.real
    if h.mask is not None:
        dens = np.where(h.mask, 0.0, dens)
    return float(dens.sum() * f.grid.cell_volume)


# ---------------------------------------------------------------------------
# monotonicity
# ---------------------------------------------------------------------------

@dataclass
class MonotoneReport:
    """Worst quadratic-form ordering violation per consecutive kernel pair."""

    side: str
    pair_defects: list = field(default_factory=list)   # (nu, defect, points_checked)
    max_defect: float = 0.0
    unchecked_pairs: list = field(default_factory=list)


def _psh_zone_halfwidth(cat: CatalogMetric) -> float:
    # the dual exponent keeps nonnegative complex Hessian out to ~4 smoothing
    # scales past the quadratic radius
    return cat.plateau_radius + 4.0 * cat.smoothing


def monotone_region(
    grid: GridSpec, cat: CatalogMetric, eps: float, pole_clear: float | None = None
) -> np.ndarray:
    """Points whose eps-ball stays in the dual's psh zone and off the pole cells."""
    half = _psh_zone_halfwidth(cat) - eps
    t = grid.axis_coordinates() - grid.center
    ok_axis = np.abs(t) <= half
    region = np.ones(grid.shape, dtype=bool)
    dims = 2 * grid.n
    for axis in range(dims):
        shape = [1] * dims
        shape[axis] = grid.N
        region &= ok_axis.reshape(shape)
    clear = (pole_clear if pole_clear is not None else eps) + 3.0 * grid.spacing
    x = grid.coordinate(0)
    y = grid.coordinate(1)
    for z0 in cat.poles:
        d2 = (x - z0.real) ** 2 + (y - z0.imag) ** 2
        region &= d2 > clear * clear
    return region


def check_monotone(
    cat: CatalogMetric,
    schedule: MollifierSchedule,
    side: str = "dual",
) -> MonotoneReport:
    """Quadratic-form ordering of the mollified family on the negatively curved side.

    For the dual side (positively curved input) the mollifications must be
    non-increasing along the shrinking schedule: g * chi_(eps_{nu+1}) <=
    g * chi_(eps_nu) pointwise as forms.  The defect is the worst positive
    eigenvalue of the difference, relative to the local scale, measured where
    the averaging argument applies; pairs whose region is empty are reported
    unchecked.
    """
    if side not in ("dual", "primal"):
        raise ValidationError("side must be 'dual' or 'primal'")
    g = dual_metric(cat.metric) if side == "dual" else cat.metric
    grid = g.grid
    report = MonotoneReport(side=side)
    radii = schedule.radii
    mollified = [mollify(g, eps) for eps in radii]
    for idx in range(len(radii) - 1):
        eps_coarse = radii[idx]
        region = monotone_region(grid, cat, eps_coarse)
        if not region.any():
            report.unchecked_pairs.append(idx + 1)
            continue
        diff = mollified[idx + 1].mat[region] - mollified[idx].mat[region]
        diff = 0.5 * (diff + np.conj(np.swapaxes(diff, -1, -2)))
        top = np.linalg.eigvalsh(diff)[..., -1]
        scale = np.abs(np.linalg.eigvalsh(mollified[idx].mat[region])).max()
        defect = float(max(top.max(), 0.0) / max(scale, 1e-300))
        report.pair_defects.append((idx + 1, defect, int(region.sum())))
        report.max_defect = max(report.max_defect, defect)
    return report


# ---------------------------------------------------------------------------
# the regularized solve pipeline
# ---------------------------------------------------------------------------

@dataclass
class RegularizationReport:
    """Everything the shrinking-kernel solve family produced."""

    eps_values: tuple
    delta_values: list
    eps_floor: float                  # 1 - min delta_nu, clipped at 0
    monotone: MonotoneReport | None
    f_norm_h: float
    bound_matrix: dict                # (nu0, nu) -> |u_nu|^2 in the h_nu0 norm
    uniform_bound_ok: bool
    worst_pair: tuple | None
    cauchy_defects: list
    final_ratio: float
    solve_reports: list


def regularized_solve(
    f: EForm,
    cat: CatalogMetric,
    schedule: MollifierSchedule,
    eps_required: float = 0.1,
    interior_halfwidth: float | None = None,
    solve_kwargs: dict | None = None,
    check_monotonicity: bool = True,
    strict: bool = True,
) -> tuple:
    """Solve dbar u = f against the shrinking mollified family of a singular metric.

    For each kernel radius the dual is mollified and dualized back, the
    curvature floor delta_nu is extracted over the interior region, and the
    weighted minimal-norm solve runs with the smooth metric.  The returned u
    is the finest-radius solution; the report carries the uniform-bound family
    |u_nu|^2_(h_nu0) <= (1/(1-eps)) |f|^2_h, the cross-radius Cauchy defects,
    and the final ratio |u|^2_h / |f|^2_h.
    """
    h = cat.metric
    grid = h.grid
    if grid.n != 1:
        raise ValidationError("the regularized pipeline is a Riemann-surface (n=1) run")
    solve_kwargs = dict(solve_kwargs or {})
    # the pipeline's inequalities live at the few-percent level; a 1e-9
    # relative solve keeps the deepest mollified weights inside the cap
    solve_kwargs.setdefault("tol", 1e-9)
    f_norm_h = masked_norm2(f, h)
    if not np.isfinite(f_norm_h) or f_norm_h == 0.0:
        raise PreconditionError("source must have finite nonzero h-weighted norm")

    g = dual_metric(h)
    radii = schedule.radii
    metrics, deltas, solves, us = [], [], [], []
    if interior_halfwidth is None:
        # the coarsest kernel's averaging ball must stay inside the certified
        # zone, which at desk scale leaves about half the plateau radius
        interior_halfwidth = 0.5 * cat.plateau_radius
    t = grid.axis_coordinates() - grid.center
    ok_axis = np.abs(t) <= interior_halfwidth
    region = np.ones(grid.shape, dtype=bool)
    for axis in range(2):
        shape = [1, 1]
        shape[axis] = grid.N
        region &= ok_axis.reshape(shape)

    for nu, eps in enumerate(radii, start=1):
        h_nu = dual_metric(mollify(g, eps))
        if h.rank == 1:
            # rank one: curvature through the exponent -log h_nu, which tames
            # the mollified spike's dynamic range in the spectral derivatives
            w = h_nu.mat[..., 0, 0].real
            h_nu = MetricField.from_weight(grid, w, 1, log_weight=-np.log(w))
        metrics.append(h_nu)
        x = grid.coordinate(0)
        y = grid.coordinate(1)
        reg_nu = region.copy()
        for z0 in cat.poles:
            clear = eps + 3.0 * grid.spacing
            reg_nu &= (x - z0.real) ** 2 + (y - z0.imag) ** 2 > clear * clear
        # mollified spikes carry ~1e-4 discretization asymmetry; immaterial at
        # the 0.1-level floor tolerance of this pipeline
        delta_nu = nakano_delta(h_nu, curvature(h_nu), region=reg_nu, symmetry_tol=1e-2)
        deltas.append(float(delta_nu))
        if strict and delta_nu < cat.delta_target - eps_required:
            raise CurvatureFloorError(
                f"mollified metric at radius {eps:.4f} (step {nu}) has floor "
                f"{delta_nu:.4f} < {cat.delta_target - eps_required:.4f}",
                measured=float(delta_nu),
            )
        u_nu, rep = solve_min_norm(f, h_nu, delta=float(delta_nu), **solve_kwargs)
        us.append(u_nu)
        solves.append(rep)

    eps_floor = max(0.0, cat.delta_target - min(deltas))
    bound_limit = (1.0 / max(cat.delta_target - eps_floor, 1e-12)) * f_norm_h
    bound_matrix = {}
    uniform_ok = True
    worst = None
    for nu0 in range(1, len(radii) + 1):
        h0 = metrics[nu0 - 1]
        for nu in range(nu0, len(radii) + 1):
            val = float(integrate(norm_sq(us[nu - 1], h0)).real)
            bound_matrix[(nu0, nu)] = val
            ok = val <= bound_limit * (1.0 + 1e-9)
            if not ok and (worst is None or val > bound_matrix.get(worst, -np.inf)):
                worst = (nu0, nu)
            uniform_ok &= ok

    cauchy = []
    h_coarsest = metrics[0]
    for nu in range(2, len(radii) + 1):
        diff = us[nu - 1].coeffs - us[nu - 2].coeffs
        dform = EForm(grid, f.rank, f.p, f.q - 1, diff)
        cauchy.append(float(np.sqrt(integrate(norm_sq(dform, h_coarsest)).real)))

    final_ratio = masked_norm2(us[-1], h) / f_norm_h
    monotone = check_monotone(cat, schedule, "dual") if check_monotonicity else None
    report = RegularizationReport(
        eps_values=radii,
        delta_values=deltas,
        eps_floor=eps_floor,
        monotone=monotone,
        f_norm_h=f_norm_h,
        bound_matrix=bound_matrix,
        uniform_bound_ok=uniform_ok,
        worst_pair=worst,
        cauchy_defects=cauchy,
        final_ratio=final_ratio,
        solve_reports=solves,
    )
    return us[-1], report
