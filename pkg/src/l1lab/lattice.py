"""Finite sets of integer lattice points and their structural decompositions.

Everything in this module is exact integer arithmetic.  Sets are canonical
(sorted, distinct) tuples of points, decompositions partition their parent
set, and generators refuse coordinates beyond the configured magnitude bound
so downstream bookkeeping never silently overflows an approximate type.

Dimension is 1, 2 or 3.  A "row" fixes every coordinate except one axis and
is itself a 1-D set; a "planar slice" of a 3-D set fixes one coordinate and
is a 2-D set.  The structure profile tabulates row/slice sizes so callers can
quantify how genuinely two- or three-dimensional a set is.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Iterable, Sequence

import numpy as np

from .config import LIMITS
from .errors import BudgetError, ValidationError

Point = tuple[int, ...]


def _as_point(p, dim: int | None) -> Point:
    if isinstance(p, int):
        p = (p,)
    else:
        p = tuple(int(c) for c in p)
    if dim is not None and len(p) != dim:
        raise ValidationError(f"point {p!r} has dimension {len(p)}, expected {dim}")
    return p


@dataclass(frozen=True, eq=True)
class LatticeSet:
    """Canonical finite set of integer points in Z^dim (dim in 1..3)."""

    dim: int
    points: tuple[Point, ...]
    lo: Point = field(init=False, compare=False)
    hi: Point = field(init=False, compare=False)

    def __post_init__(self) -> None:
        if self.dim not in (1, 2, 3):
            raise ValidationError(f"dimension must be 1, 2 or 3, got {self.dim}")
        if not self.points:
            raise ValidationError("a lattice set must be non-empty")
        seen = set()
        bound = LIMITS.coord_bound
        for p in self.points:
            if len(p) != self.dim:
                raise ValidationError(f"point {p!r} does not have dimension {self.dim}")
            if p in seen:
                raise ValidationError(f"duplicate point {p!r}")
            seen.add(p)
            for c in p:
                if abs(c) > bound:
                    raise ValidationError(
                        f"coordinate {c} exceeds the magnitude bound {bound}"
                    )
        ordered = tuple(sorted(self.points))
        object.__setattr__(self, "points", ordered)
        object.__setattr__(
            self, "lo", tuple(min(p[i] for p in ordered) for i in range(self.dim))
        )
        object.__setattr__(
            self, "hi", tuple(max(p[i] for p in ordered) for i in range(self.dim))
        )

    @classmethod
    def of(cls, points: Iterable, dim: int | None = None) -> "LatticeSet":
        pts = list(points)
        if not pts:
            raise ValidationError("a lattice set must be non-empty")
        first = _as_point(pts[0], dim)
        d = dim if dim is not None else len(first)
        return cls(d, tuple(_as_point(p, d) for p in pts))

    @property
    def size(self) -> int:
        return len(self.points)

    def values(self) -> tuple[int, ...]:
        """The coordinates of a 1-D set, in increasing order."""
        if self.dim != 1:
            raise ValidationError("values() is only defined for 1-D sets")
        return tuple(p[0] for p in self.points)

    def coords_array(self) -> np.ndarray:
        """Points as an (n, dim) int64 array."""
        return np.array(self.points, dtype=np.int64).reshape(self.size, self.dim)

    def translate(self, shift: Sequence[int]) -> "LatticeSet":
        v = tuple(int(s) for s in shift)
        if len(v) != self.dim:
            raise ValidationError("shift dimension mismatch")
        return LatticeSet(self.dim, tuple(tuple(c + s for c, s in zip(p, v)) for p in self.points))

    def max_abs_coord(self, axis: int) -> int:
        return max(abs(self.lo[axis]), abs(self.hi[axis]))

    def __contains__(self, p) -> bool:
        try:
            q = _as_point(p, self.dim)
        except ValidationError:
            return False
        return q in set(self.points)


# ---------------------------------------------------------------------------
# decompositions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RowDecomposition:
    """Rows of a set along `axis`: all coordinates except `axis` are fixed.

    `rows` maps each fixed-coordinate label to the 1-D content along the free
    axis.  `r` counts kept rows, `s` is the smallest kept row size.  Rows
    smaller than the requested minimum are recorded in `dropped`.
    """

    axis: int
    rows: tuple[tuple[Point, "LatticeSet"], ...]
    dropped: tuple[tuple[Point, int], ...]
    r: int
    s: int

    def labels(self) -> tuple[Point, ...]:
        return tuple(label for label, _ in self.rows)


@dataclass(frozen=True)
class SliceDecomposition:
    """Planar slices of a 3-D set: coordinate on `axis` is fixed per slice."""

    axis: int
    slices: tuple[tuple[int, "LatticeSet"], ...]
    p: int


def rows(A: LatticeSet, axis: int, min_size: int = 1) -> RowDecomposition:
    """Group A into rows along `axis`, dropping rows smaller than min_size."""
    if A.dim < 2:
        raise ValidationError("row decomposition needs dimension >= 2")
    if not 0 <= axis < A.dim:
        raise ValidationError(f"axis {axis} out of range for dimension {A.dim}")
    groups: dict[Point, list[int]] = {}
    for p in A.points:
        label = tuple(c for i, c in enumerate(p) if i != axis)
        groups.setdefault(label, []).append(p[axis])
    kept = []
    dropped = []
    for label in sorted(groups):
        content = groups[label]
        if len(content) >= min_size:
            kept.append((label, LatticeSet.of(content, dim=1)))
        else:
            dropped.append((label, len(content)))
    if not kept:
        raise ValidationError("no row reaches the requested minimum size")
    return RowDecomposition(
        axis=axis,
        rows=tuple(kept),
        dropped=tuple(dropped),
        r=len(kept),
        s=min(row.size for _, row in kept),
    )


def planar_slices(A: LatticeSet, axis: int) -> SliceDecomposition:
    """Split a 3-D set into 2-D slices by the coordinate on `axis`."""
    if A.dim != 3:
        raise ValidationError("planar slices need dimension 3")
    if not 0 <= axis < 3:
        raise ValidationError(f"axis {axis} out of range")
    groups: dict[int, list[Point]] = {}
    other = [i for i in range(3) if i != axis]
    for p in A.points:
        groups.setdefault(p[axis], []).append(tuple(p[i] for i in other))
    sl = tuple(
        (label, LatticeSet.of(groups[label], dim=2)) for label in sorted(groups)
    )
    return SliceDecomposition(axis=axis, slices=sl, p=len(sl))


@dataclass(frozen=True)
class StructureProfile:
    """Row-size (and, for 3-D, slice-size) histograms per axis."""

    dim: int
    row_hist: tuple[tuple[int, tuple[tuple[int, int], ...]], ...]
    slice_hist: tuple[tuple[int, tuple[tuple[int, int], ...]], ...]

    def rows_at_least(self, axis: int) -> tuple[tuple[int, int], ...]:
        """Table of (threshold s, number of rows of size >= s) for one axis."""
        hist = dict(self.row_hist)[axis]
        sizes = sorted({sz for sz, _ in hist})
        out = []
        for s in sizes:
            out.append((s, sum(c for sz, c in hist if sz >= s)))
        return tuple(out)

    def slice_count(self, axis: int) -> int:
        return sum(c for _, c in dict(self.slice_hist)[axis])


def structure_profile(A: LatticeSet) -> StructureProfile:
    """Exact histograms of row sizes per axis; slice sizes too in 3-D."""
    row_part = []
    if A.dim == 1:
        row_part.append((0, ((A.size, 1),)))
    else:
        for axis in range(A.dim):
            dec = rows(A, axis)
            hist: dict[int, int] = {}
            for _, row in dec.rows:
                hist[row.size] = hist.get(row.size, 0) + 1
            row_part.append((axis, tuple(sorted(hist.items()))))
    slice_part = []
    if A.dim == 3:
        for axis in range(3):
            dec = planar_slices(A, axis)
            hist = {}
            for _, sl in dec.slices:
                hist[sl.size] = hist.get(sl.size, 0) + 1
            slice_part.append((axis, tuple(sorted(hist.items()))))
    return StructureProfile(A.dim, tuple(row_part), tuple(slice_part))


def translate_to_positive(A: LatticeSet) -> tuple[LatticeSet, Point]:
    """Shift A so every coordinate is >= 1; returns (shifted set, shift)."""
    shift = tuple(1 - lo if lo < 1 else 0 for lo in A.lo)
    if all(s == 0 for s in shift):
        return A, shift
    return A.translate(shift), shift


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def _check_count(n: int) -> None:
    if n > LIMITS.set_points_budget:
        raise BudgetError(
            f"generator would materialize {n} points; budget is {LIMITS.set_points_budget}"
        )


def gen_cube(N: int, d: int) -> LatticeSet:
    """The discrete cube {1..N}^d."""
    if N < 1:
        raise ValidationError("N must be >= 1")
    if d not in (1, 2, 3):
        raise ValidationError("d must be 1, 2 or 3")
    if N > LIMITS.coord_bound:
        raise ValidationError(f"N={N} exceeds the coordinate bound")
    _check_count(N**d)
    rng = range(1, N + 1)
    return LatticeSet.of(product(*([rng] * d)), dim=d)


def gen_ap(c: int, q: int, N: int) -> LatticeSet:
    """Arithmetic progression {c + x*q : 0 <= x < N} as a 1-D set."""
    if q == 0:
        raise ValidationError("step q must be non-zero")
    if N < 1:
        raise ValidationError("N must be >= 1")
    _check_count(N)
    return LatticeSet.of([c + x * q for x in range(N)], dim=1)


@dataclass(frozen=True)
class BoxProgression:
    """A multi-step progression collapsed to 1-D, plus a properness flag."""

    set: LatticeSet
    proper: bool


def gen_box_progression(c: int, steps: Sequence[int], extents: Sequence[int]) -> BoxProgression:
    """Values c + sum_i x_i*q_i over 0 <= x_i < N_i; proper iff all sums distinct."""
    steps = tuple(int(q) for q in steps)
    extents = tuple(int(n) for n in extents)
    if len(steps) != len(extents) or not steps:
        raise ValidationError("steps and extents must be equal-length and non-empty")
    if any(n < 1 for n in extents):
        raise ValidationError("extents must be >= 1")
    total = 1
    for n in extents:
        total *= n
    _check_count(total)
    vals = set()
    for xs in product(*(range(n) for n in extents)):
        vals.add(c + sum(x * q for x, q in zip(xs, steps)))
    return BoxProgression(LatticeSet.of(sorted(vals), dim=1), proper=len(vals) == total)


def gen_lacunary(N: int) -> LatticeSet:
    """Powers of two {2^i : 1 <= i <= N}."""
    if N < 1:
        raise ValidationError("N must be >= 1")
    bit_bound = LIMITS.coord_bound.bit_length() - 1
    if N > bit_bound:
        raise ValidationError(f"N={N} exceeds the bit bound {bit_bound}")
    xs = [2**i for i in range(1, N + 1)]
    # the doubling sequence satisfies x_{i+1} = x_i + 2*(x_i - x_{i-1})
    for i in range(1, len(xs) - 1):
        assert xs[i + 1] == xs[i] + 2 * (xs[i] - xs[i - 1])
    return LatticeSet.of(xs, dim=1)


def _primes_from(start: int, upto: int) -> list[int]:
    sieve = np.ones(upto + 1, dtype=bool)
    sieve[:2] = False
    for p in range(2, int(upto**0.5) + 1):
        if sieve[p]:
            sieve[p * p :: p] = False
    return [int(p) for p in np.nonzero(sieve)[0] if p >= start]


@dataclass(frozen=True)
class PrimeResidueResult:
    """Residue-class union construction report.

    `primes` is the minimal window of consecutive primes starting at the first
    prime >= L whose reciprocal sum reaches 1/2, `modulus` their product, and
    `set` the union of classes {x in [1, modulus] : x = 1 mod p} - materialized
    only when the modulus is within budget.  `size` is always exact (by
    inclusion-exclusion when the set is too large to list).
    """

    primes: tuple[int, ...]
    modulus: int
    set: LatticeSet | None
    size: int

    @property
    def materialized(self) -> bool:
        return self.set is not None


def gen_prime_residue(L: int) -> PrimeResidueResult:
    """Union of residue classes 1 mod p over the minimal prime window from L."""
    if L < 2:
        raise ValidationError("L must be >= 2")
    from fractions import Fraction

    window: list[int] = []
    acc = Fraction(0)
    upto = max(2 * L, 64)
    while acc < Fraction(1, 2):
        for p in _primes_from(window[-1] + 1 if window else L, upto):
            window.append(p)
            acc += Fraction(1, p)
            if acc >= Fraction(1, 2):
                break
        else:
            upto *= 2
            if upto > 2**26:
                raise BudgetError("prime window search exceeded the sieve budget")
    N = 1
    for p in window:
        N *= p
    # exact count by inclusion-exclusion over subsets of the window (CRT gives
    # exactly N/prod residues = 1 mod every prime of the subset in [1, N])
    size = 0
    for k in range(1, len(window) + 1):
        for T in combinations(window, k):
            prod_T = 1
            for p in T:
                prod_T *= p
            size += (-1) ** (k + 1) * (N // prod_T)
    if N > LIMITS.coord_bound:
        raise ValidationError(f"modulus {N} exceeds the coordinate bound")
    if N > LIMITS.set_points_budget:
        return PrimeResidueResult(tuple(window), N, None, size)
    members = sorted(
        x for x in range(1, N + 1) if any(x % p == 1 for p in window)
    )
    return PrimeResidueResult(tuple(window), N, LatticeSet.of(members, dim=1), size)


@dataclass(frozen=True)
class RandomSubsetResult:
    set: LatticeSet
    retries: int


def gen_random_subset(N: int, density: float, seed: int) -> RandomSubsetResult:
    """Random subset of {1..N}, each point kept with probability `density`.

    Reproducible for a fixed seed; an empty draw is retried (count recorded).
    """
    if N < 1:
        raise ValidationError("N must be >= 1")
    if not 0.0 < density <= 1.0:
        raise ValidationError("density must be in (0, 1]")
    _check_count(N)
    rng = np.random.default_rng(seed)
    retries = 0
    while True:
        mask = rng.random(N) < density
        if mask.any():
            vals = (np.nonzero(mask)[0] + 1).tolist()
            return RandomSubsetResult(LatticeSet.of(vals, dim=1), retries)
        retries += 1
        if retries > 10_000:
            raise BudgetError("random subset retried too many times; raise density")


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def set_to_dict(A: LatticeSet) -> dict:
    return {"dim": A.dim, "points": [list(p) for p in A.points]}


def set_from_dict(obj: dict) -> LatticeSet:
    if not isinstance(obj, dict) or "dim" not in obj or "points" not in obj:
        raise ValidationError("set file must contain 'dim' and 'points'")
    dim = obj["dim"]
    pts = obj["points"]
    if not isinstance(pts, list) or not pts:
        raise ValidationError("'points' must be a non-empty list")
    seen = set()
    for p in pts:
        t = tuple(p) if isinstance(p, list) else None
        if t is None:
            raise ValidationError(f"bad point entry {p!r}")
        if t in seen:
            raise ValidationError(f"duplicate point {p!r} in set file")
        seen.add(t)
    return LatticeSet.of([tuple(p) for p in pts], dim=dim)


def save_set(A: LatticeSet, path: str) -> None:
    """Write the canonical JSON form (points sorted lexicographically)."""
    with open(path, "w") as fh:
        json.dump(set_to_dict(A), fh, separators=(",", ":"))
        fh.write("\n")


def load_set(path: str) -> LatticeSet:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON in {path}: {exc}") from exc
    return set_from_dict(obj)
