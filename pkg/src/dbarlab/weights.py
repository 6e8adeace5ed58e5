"""Periodic model weights, bumps, and random band-limited test fields.

Gaussian-type weights are apodized so every field is genuinely periodic: the
per-axis exponent profile m(t) equals t^2 on |t| <= r0, then its derivative
is switched off by an erfc ramp,

    m'(t) = 2 t * q(t),   q(t) = erfc((t - tm)/s) / 2,

so m saturates to a constant well before the seam.  The erfc ramp is the
Gaussian-smoothed indicator, whose spectrum decays like exp(-(k s)^2 / 2); s
is chosen as a fraction of the box size, independent of resolution, so one
fixed continuum weight can be sampled across a convergence study.  q is
below 1e-14 at the nominal saturation radius, which makes the profile
constant near the seam to machine precision.

Inside the box where every axis offset satisfies |t| <= r0 the weight is
exactly exp(-c|z - z_c|^2); all curvature claims are made on that region.
The saturation keeps the weight's dynamic range bounded, with the exponent
budget split evenly across the 2n real axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import erfc

from .errors import ValidationError
from .grid import GridSpec, ScalarField
from .metric import MetricField

RAMP_REACH = 5.5   # erfc(5.5) ~ 7e-15: the ramp has saturated to 0 beyond this
CORE_REACH = 4.5   # erfc(4.5)/2 ~ 1e-10: the ramp is still 1 to within 1e-10 here


def smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity step with exact endpoints: 0 for t <= 0, 1 for t >= 1.

    Used where exact compact support matters more than spectral decay.
    """
    t = np.asarray(t, dtype=np.float64)
    a = np.zeros_like(t)
    b = np.zeros_like(t)
    pos = t > 0
    a[pos] = np.exp(-1.0 / t[pos])
    neg = t < 1
    b[neg] = np.exp(-1.0 / (1.0 - t[neg]))
    return a / (a + b)


def _ramp_down(t: np.ndarray, tm: float, s: float) -> np.ndarray:
    """erfc ramp from 1 to 0 centered at tm with smoothing scale s."""
    return 0.5 * erfc((np.asarray(t, dtype=np.float64) - tm) / s)


@lru_cache(maxsize=64)
def saturating_square_profile(N: int, L: float, r0: float, s: float) -> tuple:
    """Sampled profile m(|t|) at the N centered axis offsets; m = t^2 on [0, r0].

    Beyond r0 the profile continues as the Gauss-Legendre integral of
    m'(t) = 2 t * ramp(t), saturating by r0 + (CORE_REACH + RAMP_REACH) * s.
    Returned as tuples to stay hashable.
    """
    tm = r0 + CORE_REACH * s
    r1 = tm + RAMP_REACH * s
    if not 0 < r0 and r1 <= 0.5 * L:
        raise ValidationError(
            f"profile does not fit the box: r0={r0}, s={s}, saturation {r1} vs L/2={L / 2}"
        )
    t_axis = np.arange(N) * (L / N) - 0.5 * L
    a = np.abs(t_axis)

    def mprime(u):
        return 2.0 * u * _ramp_down(u, tm, s)

    vals = np.empty_like(a)
    core = a <= r0
    vals[core] = a[core] ** 2
    tail_points = np.unique(a[~core])
    if tail_points.size:
        nodes, gl_weights = np.polynomial.legendre.leggauss(10)
        tails = {}
        for tp in tail_points:
            edges = np.linspace(r0, min(tp, r1), 129)
            mid = 0.5 * (edges[:-1] + edges[1:])
            half = 0.5 * (edges[1:] - edges[:-1])
            x = mid[:, None] + half[:, None] * nodes[None, :]
            tails[tp] = r0 * r0 + float(
                np.sum(half[:, None] * gl_weights[None, :] * mprime(x))
            )
        vals[~core] = np.array([tails[tp] for tp in a[~core]])
    return tuple(t_axis), tuple(vals)


def _axis_profile(grid: GridSpec, r0: float, s: float, center: float) -> np.ndarray:
    """Profile m(t - center) sampled on the axis, wrapped periodically."""
    _, vals = saturating_square_profile(grid.N, grid.L, r0, s)
    vals = np.asarray(vals)
    t = np.arange(grid.N) * grid.spacing
    d = (t - center + 0.5 * grid.L) % grid.L - 0.5 * grid.L
    idx = np.round((d + 0.5 * grid.L) / grid.spacing).astype(int) % grid.N
    return vals[idx]


def _saturation_value(r0: float, s: float) -> float:
    """Limit value of the saturating profile: r0^2 plus the ramp's mass."""
    tm = r0 + CORE_REACH * s
    r1 = tm + RAMP_REACH * s
    nodes, gl_weights = np.polynomial.legendre.leggauss(10)
    edges = np.linspace(r0, r1, 129)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    x = mid[:, None] + half[:, None] * nodes[None, :]
    integrand = 2.0 * x * _ramp_down(x, tm, s)
    return r0 * r0 + float(np.sum(half[:, None] * gl_weights[None, :] * integrand))


def default_smoothing_scale(grid: GridSpec, c: float = 1.0) -> float:
    """Ramp smoothing scale: a box fraction, mildly tightened for deeper weights."""
    return 0.0275 * grid.L / max(c, 1.0e-6) ** 0.25


def default_plateau_radius(grid: GridSpec, c: float = 1.0, budget: float = 7.0) -> float:
    """Quadratic-zone radius r0 keeping the weight's exponent range near budget.

    The separable exponent is c * sum over 2n axes of m(t); each axis
    saturates at _saturation_value(r0, s), so r0 is solved by bisection.
    Larger c gets a smaller exactly-quadratic zone instead of a deeper well.
    """
    if c <= 0:
        # a flat weight has no well to budget; any plateau radius works
        return 0.25 * grid.L
    s = default_smoothing_scale(grid, c)
    target = budget / (2.0 * grid.n * c)
    lo = 1e-3
    if _saturation_value(lo, s) > target:
        raise ValidationError(
            f"weight too deep for the box: budget {budget} unreachable at c={c}, L={grid.L}"
        )
    hi = 0.5 * grid.L - (CORE_REACH + RAMP_REACH) * s - 1e-9
    if hi <= lo:
        raise ValidationError(f"box too small for the apodization ramp: L={grid.L}")
    if _saturation_value(hi, s) < target:
        return hi
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _saturation_value(mid, s) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def apodized_quadratic_weight(
    grid: GridSpec,
    c: float = 1.0,
    r0: float | None = None,
    s: float | None = None,
) -> ScalarField:
    """Apodized weight exponent phi with phi = c|z - z_c|^2 on the plateau box.

    phi(z) = c * sum_axes m(t_axis - L/2), separable per real axis, constant
    near the seam to machine precision.
    """
    if s is None:
        s = default_smoothing_scale(grid, c)
    if r0 is None:
        r0 = default_plateau_radius(grid, c)
    phi = np.zeros(grid.shape, dtype=np.float64)
    dims = 2 * grid.n
    prof = _axis_profile(grid, r0, s, grid.center)
    for axis in range(dims):
        shape = [1] * dims
        shape[axis] = grid.N
        phi = phi + prof.reshape(shape)
    return ScalarField(grid, c * phi)


def quadratic_box_margin(grid: GridSpec, r0: float) -> float:
    """Interior margin fraction whose box sits inside the exactly quadratic zone."""
    frac = 0.5 - r0 / grid.L + 1.0 / grid.N
    return max(frac, 0.0)


def gaussian_metric(
    grid: GridSpec,
    c: float = 1.0,
    rank: int = 1,
    r0: float | None = None,
    s: float | None = None,
):
    """Metric exp(-phi) * I with the apodized quadratic weight; returns (h, r0).

    On the plateau box this is exactly exp(-c|z - z_c|^2) I, with curvature
    Theta_jk = c * delta_jk * I there.
    """
    if s is None:
        s = default_smoothing_scale(grid, c)
    if r0 is None:
        r0 = default_plateau_radius(grid, c)
    phi = apodized_quadratic_weight(grid, c, r0, s)
    h = MetricField.from_weight(
        grid, np.exp(-phi.values.real), rank, log_weight=phi.values.real
    )
    return h, r0


@lru_cache(maxsize=64)
def _tapered_linear_profile(N: int, L: float, r0: float, s: float) -> tuple:
    """Odd periodic profile w(t) = t on |t| <= r0, tapered back to 0 at the seam.

    w(t) = t * ramp(|t|): odd, continuous across the seam (both sides vanish),
    linear exactly on the core where the erfc ramp is still 1.
    """
    tm = r0 + CORE_REACH * s
    if tm + RAMP_REACH * s > 0.5 * L:
        raise ValidationError(
            f"tapered coordinate does not fit the box: r0={r0}, s={s}, L={L}"
        )
    t_axis = np.arange(N) * (L / N) - 0.5 * L
    vals = t_axis * _ramp_down(np.abs(t_axis), tm, s)
    return tuple(t_axis), tuple(vals)


def plateau_coordinate(grid: GridSpec, j: int, r0: float, s: float | None = None) -> np.ndarray:
    """Periodic complex field equal to z_j - z_c on the plateau box.

    Holomorphic exactly where both real-axis profiles are in their linear
    core; tapers smoothly back to zero near the seam so the field stays
    spectrally clean and periodic.
    """
    if s is None:
        s = default_smoothing_scale(grid)
    _, vals = _tapered_linear_profile(grid.N, grid.L, r0, s)
    vals = np.asarray(vals)
    dims = 2 * grid.n
    sx = [1] * dims
    sx[2 * j] = grid.N
    sy = [1] * dims
    sy[2 * j + 1] = grid.N
    return np.broadcast_to(vals.reshape(sx), grid.shape) + 1j * np.broadcast_to(
        vals.reshape(sy), grid.shape
    )


def plateau_bump(
    grid: GridSpec,
    center: tuple | None = None,
    r_flat: float | None = None,
    r_zero: float | None = None,
) -> ScalarField:
    """Radial C-infinity bump: 1 inside r_flat, 0 outside r_zero, exact support.

    Distances are Euclidean in the 2n real coordinates, measured from `center`
    (defaults to the box center) without periodic wrap, so the support never
    touches the seam as long as r_zero < L/2.
    """
    if r_zero is None:
        r_zero = 0.42 * grid.L
    if r_flat is None:
        r_flat = 0.7 * r_zero
    if not 0 < r_flat < r_zero < 0.5 * grid.L:
        raise ValidationError("need 0 < r_flat < r_zero < L/2")
    if center is None:
        center = (grid.center,) * (2 * grid.n)
    rho = _radial_distance(grid, center)
    vals = 1.0 - smooth_step((rho - r_flat) / (r_zero - r_flat))
    vals[rho >= r_zero] = 0.0
    return ScalarField(grid, vals)


def smooth_source_bump(
    grid: GridSpec,
    center: tuple,
    sigma: float,
    cut_start: float = 5.0,
    cut_end: float = 6.5,
) -> ScalarField:
    """Gaussian profile with an exactly-supported smooth cutoff.

    The cutoff engages at cut_start*sigma, where the Gaussian has already
    dropped to e^(-cut_start^2/2), so the bump keeps near-Gaussian spectral
    decay while having exactly compact support of radius cut_end*sigma.
    """
    rho = _radial_distance(grid, center)
    vals = np.exp(-rho * rho / (2.0 * sigma * sigma))
    vals *= 1.0 - smooth_step((rho - cut_start * sigma) / ((cut_end - cut_start) * sigma))
    vals[rho >= cut_end * sigma] = 0.0
    return ScalarField(grid, vals)


def _radial_distance(grid: GridSpec, center: tuple) -> np.ndarray:
    rho2 = np.zeros(grid.shape, dtype=np.float64)
    for axis in range(2 * grid.n):
        rho2 = rho2 + (grid.coordinate(axis) - center[axis]) ** 2
    return np.sqrt(rho2)


def random_band_limited(
    grid: GridSpec,
    rng: np.random.Generator,
    kmax_frac: float = 0.25,
    real: bool = False,
) -> ScalarField:
    """Random field with spectrum supported on |k_axis| <= kmax_frac * N/2."""
    kmax = max(1, int(kmax_frac * grid.N / 2))
    spec = np.zeros(grid.shape, dtype=np.complex128)
    freqs = np.fft.fftfreq(grid.N) * grid.N
    keep_axis = np.abs(freqs) <= kmax
    keep = np.ones(grid.shape, dtype=bool)
    dims = 2 * grid.n
    for axis in range(dims):
        shape = [1] * dims
        shape[axis] = grid.N
        keep &= keep_axis.reshape(shape)
    count = int(keep.sum())
    spec[keep] = rng.standard_normal(count) + 1j * rng.standard_normal(count)
    vals = np.fft.ifftn(spec) * grid.N ** grid.n
    if real:
        vals = vals.real.astype(np.complex128)
    return ScalarField(grid, vals)


def random_form(
    grid: GridSpec,
    rank: int,
    p: int,
    q: int,
    rng: np.random.Generator,
    kmax_frac: float = 0.25,
    interior: bool = False,
):
    """Random band-limited (p,q)-form; interior=True multiplies a plateau bump."""
    from .exterior import EForm, scale_by_field

    form = EForm.zeros(grid, rank, p, q)
    flat = form.coeffs.reshape(grid.shape + (-1,))
    for comp in range(flat.shape[-1]):
        flat[..., comp] = random_band_limited(grid, rng, kmax_frac).values
    if interior:
        form = scale_by_field(form, plateau_bump(grid))
    return form


@dataclass
class WeightFamily:
    """One member of the Gaussian weight sweep exp(-c|z|^2)."""

    c: float
    metric: MetricField
    r0: float
    interior_margin: float
