"""Periodic computational box with spectral complex calculus.

The domain is the torus [0, L)^(2n) sampled on a uniform lattice, with the
2n real axes ordered (x_1, y_1, ..., x_n, y_n) and complex coordinates
z_j = x_j + i*y_j.  Differentiation is spectral: forward FFT, multiplication
by signed wavenumbers 2*pi*k/L with the Nyquist mode zeroed, inverse FFT.
Zeroing the Nyquist mode keeps every derivative operator exactly
skew-adjoint on the lattice, which is what makes the discrete
integration-by-parts identities hold to roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import FormError, ValidationError


def _is_power_of_two(m: int) -> bool:
    return m >= 1 and (m & (m - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Periodic box in complex dimension n with N samples per real axis.

    Attributes:
        n: complex dimension (1 or 2).
        N: samples per real axis, a power of two >= 8.
        L: box side length.
    """

    n: int
    N: int
    L: float

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValidationError(f"complex dimension must be 1 or 2, got {self.n}")
        if self.N < 8 or not _is_power_of_two(int(self.N)):
            raise ValidationError(f"N must be a power of two >= 8, got {self.N}")
        if not self.L > 0:
            raise ValidationError(f"box side must be positive, got {self.L}")

    @property
    def shape(self) -> tuple:
        return (self.N,) * (2 * self.n)

    @property
    def num_points(self) -> int:
        return self.N ** (2 * self.n)

    @property
    def spacing(self) -> float:
        return self.L / self.N

    @property
    def cell_volume(self) -> float:
        return (self.L / self.N) ** (2 * self.n)

    @property
    def center(self) -> float:
        return 0.5 * self.L

    def axis_coordinates(self) -> np.ndarray:
        """1D lattice coordinates 0, L/N, ..., L - L/N."""
        return np.arange(self.N) * self.spacing

    def coordinate(self, axis: int) -> np.ndarray:
        """Full-shape array of the coordinate along one real axis (0-based)."""
        if not 0 <= axis < 2 * self.n:
            raise FormError(f"real axis {axis} out of range for n={self.n}")
        t = self.axis_coordinates()
        shape = [1] * (2 * self.n)
        shape[axis] = self.N
        return np.broadcast_to(t.reshape(shape), self.shape).copy()

    def z(self, j: int, centered: bool = True) -> np.ndarray:
        """Complex coordinate z_j = x_j + i*y_j, optionally centered at L/2."""
        if not 0 <= j < self.n:
            raise FormError(f"complex axis {j} out of range for n={self.n}")
        x = self.coordinate(2 * j)
        y = self.coordinate(2 * j + 1)
        off = self.center if centered else 0.0
        return (x - off) + 1j * (y - off)

    def wavenumbers(self) -> np.ndarray:
        """Signed 1D wavenumbers 2*pi*k/L with the Nyquist entry zeroed."""
        w = 2.0 * np.pi * np.fft.fftfreq(self.N, d=self.spacing)
        w[self.N // 2] = 0.0
        return w


@dataclass
class ScalarField:
    """Complex scalar samples on a GridSpec lattice."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.values.shape != self.grid.shape:
            raise FormError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    @classmethod
    def constant(cls, grid: GridSpec, value: complex) -> "ScalarField":
        return cls(grid, np.full(grid.shape, value, dtype=np.complex128))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())

    def __add__(self, other):
        if isinstance(other, ScalarField):
            _check_same_grid(self.grid, other.grid)
            return ScalarField(self.grid, self.values + other.values)
        return ScalarField(self.grid, self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        other_values = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.grid, self.values - other_values)

    def __mul__(self, other):
        other_values = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.grid, self.values * other_values)

    __rmul__ = __mul__


def _check_same_grid(a: GridSpec, b: GridSpec):
    if a != b:
        raise FormError(f"grid mismatch: {a} vs {b}")


@lru_cache(maxsize=32)
def _dz_multiplier(grid: GridSpec, j: int, conjugate: bool) -> np.ndarray:
    """Fourier multiplier of d/dz_j (or d/dzbar_j), broadcastable to grid shape.

    d/dz_j    -> (i*kx + ky)/2
    d/dzbar_j -> (i*kx - ky)/2
    """
    w = grid.wavenumbers()
    dims = 2 * grid.n
    sx = [1] * dims
    sx[2 * j] = grid.N
    sy = [1] * dims
    sy[2 * j + 1] = grid.N
    kx = w.reshape(sx)
    ky = w.reshape(sy)
    sign = -1.0 if conjugate else 1.0
    return 0.5 * (1j * kx + sign * ky)


def dz_array(grid: GridSpec, arr: np.ndarray, j: int, conjugate: bool = False) -> np.ndarray:
    """Spectral d/dz_j (conjugate=False) or d/dzbar_j (True) of an array.

    Leading axes must be the grid axes; any trailing axes are treated as
    components and differentiated entrywise.
    """
    if not 0 <= j < grid.n:
        raise FormError(f"complex axis {j} out of range for n={grid.n}")
    dims = 2 * grid.n
    if arr.shape[:dims] != grid.shape:
        raise FormError(f"array shape {arr.shape} does not start with grid {grid.shape}")
    mult = _dz_multiplier(grid, j, conjugate)
    mult = mult.reshape(mult.shape + (1,) * (arr.ndim - dims))
    spec = np.fft.fftn(arr, axes=tuple(range(dims)))
    return np.fft.ifftn(mult * spec, axes=tuple(range(dims)))


def partial_z(f: ScalarField, j: int, conjugate: bool = False) -> ScalarField:
    """df/dz_j (or df/dzbar_j when conjugate is set), exact on band-limited data."""
    return ScalarField(f.grid, dz_array(f.grid, f.values, j, conjugate))


def integrate(f: ScalarField) -> complex:
    """Lattice integral: mean times box volume, exact for periodic band-limited data."""
    return complex(f.values.sum() * f.grid.cell_volume)


def convolve(f: ScalarField, kernel: ScalarField) -> ScalarField:
    """Periodic convolution with a nonnegative unit-mass kernel, computed spectrally."""
    _check_same_grid(f.grid, kernel.grid)
    kv = kernel.values
    if np.abs(kv.imag).max() > 1e-13 * max(np.abs(kv.real).max(), 1e-300):
        raise ValidationError("convolution kernel must be real")
    kr = kv.real
    if kr.min() < -1e-13 * max(kr.max(), 1e-300):
        raise ValidationError(f"convolution kernel has negative entries (min {kr.min():.3e})")
    mass = kr.sum() * f.grid.cell_volume
    if abs(mass - 1.0) > 1e-10:
        raise ValidationError(f"convolution kernel mass is {mass!r}, expected 1")
    spec = np.fft.fftn(f.values) * np.fft.fftn(kr)
    out = np.fft.ifftn(spec) * f.grid.cell_volume
    if np.abs(f.values.imag).max() == 0.0:
        out = out.real.astype(np.complex128)
    return ScalarField(f.grid, out)


def interior_mask(grid: GridSpec, margin_frac: float = 0.125) -> np.ndarray:
    """Boolean mask of the central box obtained by trimming margin_frac*L per side."""
    if not 0 <= margin_frac < 0.5:
        raise ValidationError(f"margin fraction must lie in [0, 0.5), got {margin_frac}")
    t = grid.axis_coordinates()
    lo = margin_frac * grid.L
    hi = (1.0 - margin_frac) * grid.L
    axis_ok = (t >= lo) & (t < hi)
    mask = np.ones(grid.shape, dtype=bool)
    dims = 2 * grid.n
    for axis in range(dims):
        shape = [1] * dims
        shape[axis] = grid.N
        mask &= axis_ok.reshape(shape)
    return mask


def seam_leakage(density: np.ndarray, grid: GridSpec, margin_frac: float = 0.125) -> float:
    """Fraction of a nonnegative density living outside the interior box."""
    d = np.abs(np.asarray(density))
    total = d.sum()
    if total == 0.0:
        return 0.0
    inner = d[interior_mask(grid, margin_frac)].sum()
    return float((total - inner) / total)
