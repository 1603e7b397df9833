"""Sampled functions on the d-torus with exactness bookkeeping.

A GridFunction holds complex samples at the nodes (j_1/G_1, ..., j_d/G_d)
together with three pieces of metadata about the *underlying* function it was
sampled from:

* ``freq_bound`` - per-axis frequency band M_i (the function is a trigonometric
  polynomial with axis-i frequencies in [-M_i, M_i]), or None when unknown;
* ``sup_bound`` / ``lip_bounds`` - an analytic sup bound and per-axis Lipschitz
  bounds, used to attach rigorous quadrature error bounds when a grid sum is
  not exact;
* ``aliased`` - True when the grid is too small to represent the declared band
  faithfully (G_i <= 2*M_i on some axis), in which case on-grid spectral
  checks of the band are meaningless even though the samples themselves are
  still exact values of the underlying function.

Grid sums integrate a product f*conj(g) exactly iff on every axis the band sum
M_f + M_g stays below G; axes that fail the test contribute a midpoint-rule
error term Lip/(2G) instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import LIMITS
from .errors import BudgetError, ValidationError
from .lattice import LatticeSet


def next_pow2(n: int) -> int:
    if n < 1:
        return 1
    return 1 << (n - 1).bit_length()


def _total(sizes: Sequence[int]) -> int:
    t = 1
    for g in sizes:
        t *= int(g)
    return t


def check_sizes(sizes: Sequence[int]) -> tuple[int, ...]:
    sizes = tuple(int(g) for g in sizes)
    if not sizes or len(sizes) > 3:
        raise ValidationError("grid rank must be 1, 2 or 3")
    if any(g < 1 for g in sizes):
        raise ValidationError("grid sizes must be positive")
    if _total(sizes) > LIMITS.samples_budget:
        raise BudgetError(
            f"grid of {_total(sizes)} samples exceeds the budget "
            f"{LIMITS.samples_budget}; use the streaming L1 path"
        )
    return sizes


@dataclass(frozen=True, eq=False)
class GridFunction:
    sizes: tuple[int, ...]
    samples: np.ndarray
    freq_bound: tuple[int | None, ...]
    aliased: bool
    sup_bound: float | None = None
    lip_bounds: tuple[float | None, ...] | None = None

    def __post_init__(self) -> None:
        if tuple(self.samples.shape) != tuple(self.sizes):
            raise ValidationError("sample array shape does not match grid sizes")
        if len(self.freq_bound) != len(self.sizes):
            raise ValidationError("freq_bound rank mismatch")

    @property
    def dim(self) -> int:
        return len(self.sizes)

    def lip(self, axis: int) -> float | None:
        if self.lip_bounds is None:
            return None
        return self.lip_bounds[axis]


def _band_ok(sizes: Sequence[int], bound: Sequence[int | None]) -> bool:
    return all(m is not None and g > 2 * m for g, m in zip(sizes, bound))


def evaluate_fft(A: LatticeSet, sizes: Sequence[int]) -> GridFunction:
    """Sample F_A(x) = sum_{a in A} e(a.x) at every grid node via an inverse DFT.

    Unit masses are scattered at the residues a mod G; the result equals F_A at
    each node exactly (it is the restriction of F_A to the grid even when
    residues collide).  The aliased flag is set when some axis has G <= 2*max|a|.
    """
    sizes = check_sizes(sizes)
    if len(sizes) != A.dim:
        raise ValidationError("grid rank must match the set dimension")
    coords = A.coords_array()
    masses = np.zeros(sizes, dtype=np.complex128)
    idx = tuple(np.mod(coords[:, i], sizes[i]) for i in range(A.dim))
    np.add.at(masses, idx, 1.0)
    samples = np.fft.ifftn(masses) * _total(sizes)
    bound = tuple(A.max_abs_coord(i) for i in range(A.dim))
    lips = tuple(2.0 * math.pi * float(np.abs(coords[:, i]).sum()) for i in range(A.dim))
    return GridFunction(
        sizes=sizes,
        samples=samples,
        freq_bound=bound,
        aliased=not _band_ok(sizes, bound),
        sup_bound=float(A.size),
        lip_bounds=lips,
    )


def evaluate_naive(A: LatticeSet, points: Sequence[Sequence[float]]) -> np.ndarray:
    """Directly evaluate F_A at arbitrary points with compensated summation."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, A.dim)
    coords = A.coords_array().astype(np.float64)
    out = np.empty(len(pts), dtype=np.complex128)
    for k, x in enumerate(pts):
        phases = coords @ x
        terms = np.exp(2j * np.pi * phases)
        out[k] = complex(math.fsum(terms.real), math.fsum(terms.imag))
    return out


# ---------------------------------------------------------------------------
# pointwise algebra with band/metadata propagation
# ---------------------------------------------------------------------------

def _same_grid(f: GridFunction, g: GridFunction) -> None:
    if f.sizes != g.sizes:
        raise ValidationError("grid size mismatch")


def multiply(f: GridFunction, g: GridFunction) -> GridFunction:
    _same_grid(f, g)
    bound = tuple(
        None if (a is None or b is None) else a + b
        for a, b in zip(f.freq_bound, g.freq_bound)
    )
    sup = None if (f.sup_bound is None or g.sup_bound is None) else f.sup_bound * g.sup_bound
    lips: list[float | None] = []
    for ax in range(f.dim):
        lf, lg = f.lip(ax), g.lip(ax)
        if lf is None or lg is None or f.sup_bound is None or g.sup_bound is None:
            lips.append(None)
        else:
            lips.append(f.sup_bound * lg + g.sup_bound * lf)
    return GridFunction(
        sizes=f.sizes,
        samples=f.samples * g.samples,
        freq_bound=bound,
        aliased=not _band_ok(f.sizes, bound),
        sup_bound=sup,
        lip_bounds=tuple(lips),
    )


def add(f: GridFunction, g: GridFunction) -> GridFunction:
    _same_grid(f, g)
    bound = tuple(
        None if (a is None or b is None) else max(a, b)
        for a, b in zip(f.freq_bound, g.freq_bound)
    )
    sup = None if (f.sup_bound is None or g.sup_bound is None) else f.sup_bound + g.sup_bound
    lips = tuple(
        None if (f.lip(ax) is None or g.lip(ax) is None) else f.lip(ax) + g.lip(ax)
        for ax in range(f.dim)
    )
    return GridFunction(
        sizes=f.sizes,
        samples=f.samples + g.samples,
        freq_bound=bound,
        aliased=not _band_ok(f.sizes, bound),
        sup_bound=sup,
        lip_bounds=lips,
    )


def scale(f: GridFunction, c: complex) -> GridFunction:
    mag = abs(c)
    return GridFunction(
        sizes=f.sizes,
        samples=f.samples * c,
        freq_bound=f.freq_bound,
        aliased=f.aliased,
        sup_bound=None if f.sup_bound is None else f.sup_bound * mag,
        lip_bounds=None
        if f.lip_bounds is None
        else tuple(None if l is None else l * mag for l in f.lip_bounds),
    )


def conjugate(f: GridFunction) -> GridFunction:
    return GridFunction(
        sizes=f.sizes,
        samples=np.conj(f.samples),
        freq_bound=f.freq_bound,
        aliased=f.aliased,
        sup_bound=f.sup_bound,
        lip_bounds=f.lip_bounds,
    )


# ---------------------------------------------------------------------------
# compensated accumulation and inner products
# ---------------------------------------------------------------------------

def compensated_sum(arr: np.ndarray) -> complex | float:
    """Chunked sum: fixed-size chunks reduced by numpy, chunk totals by fsum.

    Deterministic for a fixed chunk size regardless of array length.
    """
    flat = arr.reshape(-1)
    n = flat.shape[0]
    chunk = LIMITS.chunk
    parts_re: list[float] = []
    parts_im: list[float] = []
    is_complex = np.iscomplexobj(flat)
    for start in range(0, n, chunk):
        block = flat[start : start + chunk]
        if is_complex:
            parts_re.append(float(np.add.reduce(block.real)))
            parts_im.append(float(np.add.reduce(block.imag)))
        else:
            parts_re.append(float(np.add.reduce(block)))
    if is_complex:
        return complex(math.fsum(parts_re), math.fsum(parts_im))
    return math.fsum(parts_re)


@dataclass(frozen=True)
class InnerProductResult:
    value: complex
    exact: bool
    error_bound: float


def axis_exact(f: GridFunction, g: GridFunction, axis: int) -> bool:
    a, b = f.freq_bound[axis], g.freq_bound[axis]
    return a is not None and b is not None and a + b < f.sizes[axis]


def inner_product(f: GridFunction, g: GridFunction) -> InnerProductResult:
    """Grid average of f*conj(g) with per-axis exactness accounting.

    The average equals the true integral when every axis satisfies the band
    condition M_f + M_g < G; otherwise each failing axis contributes a
    midpoint-rule term (sup_f*Lip_g + sup_g*Lip_f)/(2G) to the error bound.
    """
    _same_grid(f, g)
    total = _total(f.sizes)
    value = compensated_sum(f.samples * np.conj(g.samples)) / total
    err = 0.0
    exact = True
    for ax in range(f.dim):
        if axis_exact(f, g, ax):
            continue
        exact = False
        lf, lg = f.lip(ax), g.lip(ax)
        if None in (lf, lg, f.sup_bound, g.sup_bound):
            err = math.inf
            break
        err += (f.sup_bound * lg + g.sup_bound * lf) / (2.0 * f.sizes[ax])
    return InnerProductResult(value=value, exact=exact, error_bound=0.0 if exact else err)


def grid_abs_mean(f: GridFunction) -> float:
    """Chunk-compensated mean of |f| over the grid."""
    return compensated_sum(np.abs(f.samples)) / _total(f.sizes)


def spectrum(f: GridFunction, tol: float = 0.0) -> dict[tuple[int, ...], complex]:
    """Forward DFT normalized so unit masses come back as unit coefficients.

    Frequencies are reported by their centered representatives in
    [-G/2, G/2); entries with |coefficient| <= tol are dropped.
    """
    coeffs = np.fft.fftn(f.samples) / _total(f.sizes)
    out: dict[tuple[int, ...], complex] = {}
    nz = np.argwhere(np.abs(coeffs) > tol)
    for idx in nz:
        # centered representative: k -> k - G for k >= ceil(G/2)
        key = tuple(int(k) - g if k >= (g + 1) // 2 else int(k) for k, g in zip(idx, f.sizes))
        out[key] = complex(coeffs[tuple(idx)])
    return out


def check_band(f: GridFunction, tol: float = 1e-9) -> bool:
    """Verify on demand that the DFT is supported inside the declared band.

    Not applicable to aliased grids (the on-grid DFT wraps); returns True
    vacuously when no band is declared.
    """
    if f.aliased:
        raise ValidationError("band check is not applicable to an aliased grid")
    if all(m is None for m in f.freq_bound):
        return True
    scale_ref = max(1.0, float(np.max(np.abs(f.samples))))
    for key, c in spectrum(f, tol=tol * scale_ref).items():
        for k, m in zip(key, f.freq_bound):
            if m is not None and abs(k) > m:
                return False
    return True
