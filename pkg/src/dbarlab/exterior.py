"""Bundle-valued (p,q)-form algebra: wedge, pairing, norms, Hodge star.

Coefficients are stored only on strictly increasing multi-indices, in the
global frame dz_I wedge dzbar_J; every other ordering is resolved through an
explicit sign computation.  The ambient Kahler form is always the flat
omega = i * sum_j dz_j wedge dzbar_j, so this frame is orthonormal at every
point and the volume form is omega^n / n!.

Sign bookkeeping is concentrated in two primitives:

* ``merge_sign(a, b)``: the permutation sign for sorting the concatenation of
  two increasing index tuples (0 if they collide);
* ``wedge_basis``: the sign and target slot for the product of two frame
  elements, including the (-1)^(q1*p2) crossing of dzbar factors past dz
  factors.

Everything else (Hodge star epsilon constants, dbar/del insertion signs,
pairing expansion) is derived from these, never from closed-form tables.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np

from .errors import FormError
from .grid import GridSpec, ScalarField
from .metric import MetricField, vector_inner


# ---------------------------------------------------------------------------
# unimodular constants and multi-index tables
# ---------------------------------------------------------------------------

def c_const(p: int) -> complex:
    """The unimodular normalizer i**(p*p) in {1, i, -1, -i}."""
    if p < 0:
        raise FormError(f"degree must be nonnegative, got {p}")
    return 1j ** ((p * p) % 4)


@dataclass(frozen=True)
class UnimodularConstant:
    """Degree-tagged value of i**(p*p)."""

    p: int
    value: complex

    @classmethod
    def of(cls, p: int) -> "UnimodularConstant":
        return cls(p, c_const(p))


@lru_cache(maxsize=64)
def index_tuples(n: int, k: int) -> tuple:
    """All strictly increasing k-tuples from {0, ..., n-1}, lexicographic."""
    if k < 0 or k > n:
        return ()
    return tuple(combinations(range(n), k))


@lru_cache(maxsize=64)
def index_slot(n: int, k: int) -> dict:
    return {idx: pos for pos, idx in enumerate(index_tuples(n, k))}


def merge_sign(a: tuple, b: tuple):
    """Sign of sorting a+b into increasing order; (0, None) on a collision."""
    if set(a) & set(b):
        return 0, None
    inversions = sum(1 for x in a for y in b if x > y)
    return (-1) ** inversions, tuple(sorted(a + b))


def insertion_sign(k: int, idx: tuple) -> int:
    """Sign of dz_k wedge dz_idx -> dz_(idx + {k}); idx must not contain k."""
    sign, _ = merge_sign((k,), idx)
    return sign


def wedge_basis(I1: tuple, J1: tuple, I2: tuple, J2: tuple):
    """Sign and target (I, J) for (dz_I1 ^ dzbar_J1) ^ (dz_I2 ^ dzbar_J2).

    Returns (0, None, None) when the product vanishes.
    """
    cross = (-1) ** (len(J1) * len(I2))
    si, I = merge_sign(I1, I2)
    if si == 0:
        return 0, None, None
    sj, J = merge_sign(J1, J2)
    if sj == 0:
        return 0, None, None
    return cross * si * sj, I, J


# ---------------------------------------------------------------------------
# the form container
# ---------------------------------------------------------------------------

@dataclass
class EForm:
    """A (p,q)-form with values in a rank-r trivialized bundle.

    coeffs has shape grid.shape + (C(n,p), C(n,q), rank); slot ordering is the
    lexicographic one of ``index_tuples``.
    """

    grid: GridSpec
    rank: int
    p: int
    q: int
    coeffs: np.ndarray

    def __post_init__(self):
        n = self.grid.n
        if not (0 <= self.p <= n and 0 <= self.q <= n):
            raise FormError(f"bidegree ({self.p},{self.q}) out of range for n={n}")
        if self.rank < 1:
            raise FormError(f"rank must be positive, got {self.rank}")
        expected = self.grid.shape + (
            len(index_tuples(n, self.p)),
            len(index_tuples(n, self.q)),
            self.rank,
        )
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if self.coeffs.shape != expected:
            raise FormError(
                f"coefficient shape {self.coeffs.shape} does not match {expected}"
            )

    @classmethod
    def zeros(cls, grid: GridSpec, rank: int, p: int, q: int) -> "EForm":
        n = grid.n
        shape = grid.shape + (len(index_tuples(n, p)), len(index_tuples(n, q)), rank)
        return cls(grid, rank, p, q, np.zeros(shape, dtype=np.complex128))

    @property
    def bidegree(self) -> tuple:
        return (self.p, self.q)

    def dz_slots(self) -> tuple:
        return index_tuples(self.grid.n, self.p)

    def dzbar_slots(self) -> tuple:
        return index_tuples(self.grid.n, self.q)

    def slot(self, I: tuple, J: tuple) -> np.ndarray:
        """Coefficient field (grid shape + rank axis) of dz_I wedge dzbar_J."""
        n = self.grid.n
        return self.coeffs[..., index_slot(n, self.p)[I], index_slot(n, self.q)[J], :]

    def copy(self) -> "EForm":
        return EForm(self.grid, self.rank, self.p, self.q, self.coeffs.copy())

    def __add__(self, other: "EForm") -> "EForm":
        _check_compatible(self, other)
        return EForm(self.grid, self.rank, self.p, self.q, self.coeffs + other.coeffs)

    def __sub__(self, other: "EForm") -> "EForm":
        _check_compatible(self, other)
        return EForm(self.grid, self.rank, self.p, self.q, self.coeffs - other.coeffs)

    def __mul__(self, scalar) -> "EForm":
        return EForm(self.grid, self.rank, self.p, self.q, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "EForm":
        return EForm(self.grid, self.rank, self.p, self.q, -self.coeffs)


def _check_compatible(a: EForm, b: EForm):
    if a.grid != b.grid:
        raise FormError("forms live on different grids")
    if (a.p, a.q, a.rank) != (b.p, b.q, b.rank):
        raise FormError(
            f"form mismatch: ({a.p},{a.q}) rank {a.rank} vs ({b.p},{b.q}) rank {b.rank}"
        )


def scale_by_field(a: EForm, field) -> EForm:
    """Multiply every coefficient by a scalar field (cutoffs, weights)."""
    values = field.values if isinstance(field, ScalarField) else np.asarray(field)
    if values.shape != a.grid.shape:
        raise FormError("scaling field shape does not match the grid")
    return EForm(a.grid, a.rank, a.p, a.q, a.coeffs * values[..., None, None, None])


def conjugate_form(a: EForm) -> EForm:
    """Complex conjugate form: bidegree (q,p), coefficients conj with crossing sign."""
    out = EForm.zeros(a.grid, a.rank, a.q, a.p)
    sign = (-1) ** (a.p * a.q)
    n = a.grid.n
    for I in a.dz_slots():
        for J in a.dzbar_slots():
            out.coeffs[..., index_slot(n, a.q)[J], index_slot(n, a.p)[I], :] = (
                sign * np.conj(a.slot(I, J))
            )
    return out


# ---------------------------------------------------------------------------
# wedge and the flat Kahler form
# ---------------------------------------------------------------------------

def wedge(a: EForm, b: EForm) -> EForm:
    """Graded wedge product; at most one operand may be bundle-valued (rank > 1)."""
    if a.grid != b.grid:
        raise FormError("forms live on different grids")
    if a.rank > 1 and b.rank > 1:
        raise FormError(
            "wedge of two bundle-valued forms is not defined; use pairing instead"
        )
    n = a.grid.n
    p, q = a.p + b.p, a.q + b.q
    if p > n or q > n:
        raise FormError(f"wedge target bidegree ({p},{q}) exceeds n={n}")
    rank = max(a.rank, b.rank)
    out = EForm.zeros(a.grid, rank, p, q)
    pos_I = index_slot(n, p)
    pos_J = index_slot(n, q)
    for Ia in a.dz_slots():
        for Ja in a.dzbar_slots():
            ca = a.slot(Ia, Ja)
            for Ib in b.dz_slots():
                for Jb in b.dzbar_slots():
                    sign, I, J = wedge_basis(Ia, Ja, Ib, Jb)
                    if sign == 0:
                        continue
                    out.coeffs[..., pos_I[I], pos_J[J], :] += sign * ca * b.slot(Ib, Jb)
    return out


@lru_cache(maxsize=32)
def _omega_p_table(n: int, p: int) -> tuple:
    """(slot, value) entries of omega^p/p! = sum_K c_p dz_K wedge dzbar_K."""
    cp = c_const(p)
    return tuple((K, cp) for K in index_tuples(n, p))


def omega(grid: GridSpec) -> EForm:
    """The flat Kahler form i * sum_j dz_j wedge dzbar_j."""
    return omega_power(grid, 1)


def omega_power(grid: GridSpec, p: int) -> EForm:
    """omega^p / p! as a rank-1 (p,p)-form with constant coefficients."""
    n = grid.n
    if not 0 <= p <= n:
        raise FormError(f"omega power {p} out of range for n={n}")
    out = EForm.zeros(grid, 1, p, p)
    for K, value in _omega_p_table(n, p):
        out.coeffs[..., index_slot(n, p)[K], index_slot(n, p)[K], 0] = value
    return out


def volume_form(grid: GridSpec) -> EForm:
    return omega_power(grid, grid.n)


def dv_density(a: EForm) -> ScalarField:
    """Density of an (n,n)-form against the volume form omega^n/n!."""
    n = a.grid.n
    if (a.p, a.q) != (n, n):
        raise FormError(f"density requires a top-degree form, got ({a.p},{a.q})")
    if a.rank != 1:
        raise FormError("density of a bundle-valued form is undefined")
    return ScalarField(a.grid, a.coeffs[..., 0, 0, 0] / c_const(n))


# ---------------------------------------------------------------------------
# metric pairing, norms, Hodge star
# ---------------------------------------------------------------------------

def pairing(a: EForm, b: EForm, h: MetricField) -> EForm:
    """Sesquilinear pairing <a, b>_h, a scalar form of bidegree (pa+qb, qa+pb).

    On decomposables alpha (x) s, beta (x) t this is alpha ^ conj(beta) (s,t)_h;
    the second argument enters conjugated.
    """
    if a.grid != b.grid:
        raise FormError("forms live on different grids")
    if a.rank != b.rank:
        raise FormError(f"rank mismatch in pairing: {a.rank} vs {b.rank}")
    if h.grid != a.grid or h.rank != a.rank:
        raise FormError("metric does not match the forms")
    n = a.grid.n
    p, q = a.p + b.q, a.q + b.p
    if p > n or q > n:
        raise FormError(f"pairing target bidegree ({p},{q}) exceeds n={n}")
    out = EForm.zeros(a.grid, 1, p, q)
    pos_I = index_slot(n, p)
    pos_J = index_slot(n, q)
    conj_sign = (-1) ** (b.p * b.q)
    for Ia in a.dz_slots():
        for Ja in a.dzbar_slots():
            ca = a.slot(Ia, Ja)
            for Ib in b.dz_slots():
                for Jb in b.dzbar_slots():
                    # conj(dz_Ib ^ dzbar_Jb) = (-1)^(pb*qb) dz_Jb ^ dzbar_Ib
                    sign, I, J = wedge_basis(Ia, Ja, Jb, Ib)
                    if sign == 0:
                        continue
                    scalar = vector_inner(h.mat, ca, b.slot(Ib, Jb))
                    out.coeffs[..., pos_I[I], pos_J[J], 0] += conj_sign * sign * scalar
    return out


def norm_sq(a: EForm, h: MetricField) -> ScalarField:
    """Pointwise squared norm sum_IJ ||a_IJ||_h^2 in the orthonormal frame."""
    if h.grid != a.grid or h.rank != a.rank:
        raise FormError("metric does not match the form")
    total = np.zeros(a.grid.shape, dtype=np.float64)
    for I in a.dz_slots():
        for J in a.dzbar_slots():
            c = a.slot(I, J)
            total += vector_inner(h.mat, c, c).real
    return ScalarField(a.grid, total)


def inner_product(a: EForm, b: EForm, h: MetricField) -> ScalarField:
    """Pointwise hermitian inner product sum_IJ (a_IJ, b_IJ)_h."""
    _check_compatible(a, b)
    if h.grid != a.grid or h.rank != a.rank:
        raise FormError("metric does not match the forms")
    total = np.zeros(a.grid.shape, dtype=np.complex128)
    for I in a.dz_slots():
        for J in a.dzbar_slots():
            total += vector_inner(h.mat, a.slot(I, J), b.slot(I, J))
    return ScalarField(a.grid, total)


@lru_cache(maxsize=32)
def hodge_star_table(n: int, p: int) -> tuple:
    """Unimodular constants eps_J with gamma = sum_J eps_J alpha_J dz_(J^c).

    Solved from the defining relation gamma ^ omega_p = alpha rather than
    written down: for each J the wedge of dz_(J^c) with the (J,J) term of
    omega_p lands on dz_(0..n-1) ^ dzbar_J with a known sign, and eps_J is
    whatever cancels it.
    """
    cp = c_const(p)
    full = tuple(range(n))
    entries = []
    for J in index_tuples(n, p):
        Jc = tuple(sorted(set(full) - set(J)))
        sign, I, Jt = wedge_basis(Jc, (), J, J)
        if sign == 0 or I != full or Jt != J:
            raise FormError("hodge star table construction failed")
        entries.append((J, Jc, 1.0 / (cp * sign)))
    return tuple(entries)


def hodge_star(a: EForm) -> EForm:
    """The (n-p,0)-form gamma with gamma ^ omega^p/p! = a, for a of bidegree (n,p)."""
    n = a.grid.n
    if a.p != n:
        raise FormError(f"hodge star requires an (n,p)-form, got ({a.p},{a.q})")
    p = a.q
    out = EForm.zeros(a.grid, a.rank, n - p, 0)
    full = tuple(range(n))
    pos = index_slot(n, n - p)
    for J, Jc, eps in hodge_star_table(n, p):
        out.coeffs[..., pos[Jc], 0, :] = eps * a.slot(full, J)
    return out
