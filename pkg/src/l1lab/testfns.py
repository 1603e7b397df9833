"""Base test functions fed to the iteration engine.

Two payload families:

* pure exponentials e(a.x), possibly with a vector frequency (the pullback of
  a 1-D exponential through a base-B embedding lands here), and
* row-sign profiles: Phi(x) = e(n x_label) * phi(x_free) where phi clamps the
  row's own exponential sum to the unit disc, phi = f / max(|f|, eps).

Both have |Phi| <= 1 analytically.  Floors K are guaranteed values of
Re<Phi, F> against the designated target sum: exponentials pair to exactly 1
with their own frequency, row-sign functions give the row's L1 mass up to an
explicit eps + quadrature penalty.  Floors are computed analytically (fine
1-D quadrature with a Lipschitz error bound), never from the working grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import LIMITS
from .errors import ValidationError, VerificationError
from .grid import GridFunction, InnerProductResult, axis_exact, compensated_sum, inner_product, next_pow2
from .lattice import LatticeSet, rows

TWO_PI = 2.0 * math.pi


def _phase_vector(freq: int, size: int) -> np.ndarray:
    """e(freq * j / size) for j = 0..size-1 with exact integer phases."""
    r = freq % size
    ph = (r * np.arange(size, dtype=np.int64)) % size
    return np.exp((2j * np.pi / size) * ph)


def _phase_at_nodes(freq: int, nums: np.ndarray, den: int) -> np.ndarray:
    """Fractional part of freq * nums / den, exactly, as float in [0, 1)."""
    r = freq % den
    return ((r * nums.astype(np.int64)) % den) / den


@dataclass(frozen=True)
class ExponentialPayload:
    """e(a . x) with integer frequency vector a."""

    freq: tuple[int, ...]

    @property
    def dim(self) -> int:
        return len(self.freq)

    def sample(self, sizes: tuple[int, ...]) -> GridFunction:
        if len(sizes) != self.dim:
            raise ValidationError("grid rank does not match payload dimension")
        vecs = [_phase_vector(f, g) for f, g in zip(self.freq, sizes)]
        out = vecs[0]
        for v in vecs[1:]:
            out = np.multiply.outer(out, v)
        band = tuple(abs(f) for f in self.freq)
        aliased = any(g <= 2 * m for g, m in zip(sizes, band))
        return GridFunction(
            sizes=tuple(sizes),
            samples=out,
            freq_bound=band,
            aliased=aliased,
            sup_bound=1.0,
            lip_bounds=tuple(TWO_PI * abs(f) for f in self.freq),
        )

    def eval_at_nodes(self, nums: tuple[np.ndarray, ...], dens: tuple[int, ...]) -> np.ndarray:
        phase = np.zeros(np.broadcast(*nums).shape if len(nums) > 1 else nums[0].shape)
        for f, n, d in zip(self.freq, nums, dens):
            phase = phase + _phase_at_nodes(f, n, d)
        return np.exp(2j * np.pi * phase)

    def freq_interval(self, axis: int) -> tuple[int, int]:
        f = self.freq[axis]
        return (f, f)

    def support_1d(self) -> set[int]:
        if self.dim != 1:
            raise ValidationError("1-D support requested from a multi-axis payload")
        return {self.freq[0]}

    def lip_bounds(self) -> tuple[float, ...]:
        return tuple(TWO_PI * abs(f) for f in self.freq)

    def to_dict(self) -> dict:
        return {"kind": "exponential", "freq": list(self.freq)}


@dataclass(frozen=True)
class RowSignPayload:
    """e(label * x_label) * clamp(f_row)(x_free) for one row of a 2-D set.

    The profile is recomputed deterministically from the stored row values at
    whatever grid size is requested, so certificates stay replayable without
    shipping sample arrays.  profile_grid records the quadrature size the
    floor was computed on.
    """

    free_axis: int
    label_axis: int
    label: int
    row_values: tuple[int, ...]
    eps: float
    profile_grid: int

    @property
    def dim(self) -> int:
        return 2

    def _row_sum(self, size: int) -> np.ndarray:
        masses = np.zeros(size, dtype=np.complex128)
        idx = np.array([v % size for v in self.row_values], dtype=np.int64)
        np.add.at(masses, idx, 1.0)
        return np.fft.ifft(masses) * size

    def profile(self, size: int) -> np.ndarray:
        f = self._row_sum(size)
        a = np.abs(f)
        phi = f / np.maximum(a, self.eps)
        m = np.abs(phi)
        # division rounding can leave 1 + few ulp; pull those back onto the disc
        over = m > 1.0
        if over.any():
            phi[over] /= m[over]
        return phi

    def sample(self, sizes: tuple[int, ...]) -> GridFunction:
        if len(sizes) != 2:
            raise ValidationError("row-sign payloads are 2-D")
        g_free = sizes[self.free_axis]
        g_lab = sizes[self.label_axis]
        phi = self.profile(g_free)
        lab = _phase_vector(self.label, g_lab)
        if self.free_axis == 0:
            out = np.multiply.outer(phi, lab)
        else:
            out = np.multiply.outer(lab, phi)
        band: list[int | None] = [None, None]
        band[self.label_axis] = abs(self.label)
        aliased = g_lab <= 2 * abs(self.label)
        lips: list[float] = [0.0, 0.0]
        lips[self.free_axis] = 2.0 * self.row_lip() / self.eps
        lips[self.label_axis] = TWO_PI * abs(self.label)
        return GridFunction(
            sizes=tuple(sizes),
            samples=out,
            freq_bound=tuple(band),
            aliased=aliased,
            sup_bound=1.0,
            lip_bounds=tuple(lips),
        )

    def eval_at_nodes(self, nums: tuple[np.ndarray, ...], dens: tuple[int, ...]) -> np.ndarray:
        nf, df = nums[self.free_axis], dens[self.free_axis]
        f = np.zeros(nf.shape, dtype=np.complex128)
        for v in self.row_values:
            f += np.exp(2j * np.pi * _phase_at_nodes(v, nf, df))
        a = np.abs(f)
        phi = f / np.maximum(a, self.eps)
        m = np.abs(phi)
        over = m > 1.0
        if over.any():
            phi[over] /= m[over]
        lab = np.exp(2j * np.pi * _phase_at_nodes(self.label, nums[self.label_axis], dens[self.label_axis]))
        return phi * lab

    def freq_interval(self, axis: int) -> tuple[int, int] | None:
        if axis == self.label_axis:
            return (self.label, self.label)
        return None  # clamping is not band-limited

    def row_lip(self) -> float:
        """Lipschitz bound for the raw row sum, translation-reduced."""
        lo, hi = min(self.row_values), max(self.row_values)
        c = (lo + hi) // 2
        return TWO_PI * sum(abs(v - c) for v in self.row_values)

    def lip_bounds(self) -> tuple[float, ...]:
        out = [0.0, 0.0]
        out[self.free_axis] = 2.0 * self.row_lip() / self.eps
        out[self.label_axis] = TWO_PI * abs(self.label)
        return tuple(out)

    def to_dict(self) -> dict:
        return {
            "kind": "row_sign",
            "free_axis": self.free_axis,
            "label_axis": self.label_axis,
            "label": self.label,
            "row": list(self.row_values),
            "eps": self.eps,
            "profile_grid": self.profile_grid,
        }


@dataclass(frozen=True, eq=False)
class TreePayload:
    """A certified combination of simpler test functions, usable as a base.

    The multi-level pipeline feeds the output of one run as a base function
    of the next; this payload carries the combination tree plus the inner
    bases so sampling, node evaluation and band bookkeeping all recurse.
    sup_cap is the certified sup bound of the combination (1 for any run
    whose contraction was certified); sampling asserts it loudly.
    """

    bases: tuple  # of BaseTestFn
    root: object  # tree node over those bases
    sup_cap: float = 1.0

    @property
    def dim(self) -> int:
        return self.bases[0].payload.dim

    def sample(self, sizes: tuple[int, ...]) -> GridFunction:
        from . import tree as tr

        vals = [b.payload.sample(sizes).samples for b in self.bases]
        arr = tr.evaluate(self.root, vals)
        del vals
        m = float(np.abs(arr).max())
        if m > self.sup_cap + 1e-9:
            raise VerificationError(
                f"combination sample reached {m}, above its certified sup {self.sup_cap}"
            )
        sup, lips = tr.analytic_bounds(
            self.root,
            [1.0 for _ in self.bases],
            [tuple(b.payload.lip_bounds()) for b in self.bases],
        )
        band = tuple(
            tr.iv_max_abs(tr.freq_interval(self.root, [b.payload.freq_interval(ax) for b in self.bases]))
            for ax in range(len(sizes))
        )
        aliased = any(mb is None or g <= 2 * mb for g, mb in zip(sizes, band))
        return GridFunction(
            sizes=tuple(sizes),
            samples=arr,
            freq_bound=band,
            aliased=aliased,
            sup_bound=min(self.sup_cap, sup),
            lip_bounds=lips,
        )

    def eval_at_nodes(self, nums: tuple[np.ndarray, ...], dens: tuple[int, ...]) -> np.ndarray:
        from . import tree as tr

        vals = [b.payload.eval_at_nodes(nums, dens) for b in self.bases]
        return tr.evaluate(self.root, vals)

    def freq_interval(self, axis: int) -> tuple[int, int] | None:
        from . import tree as tr

        return tr.freq_interval(self.root, [b.payload.freq_interval(axis) for b in self.bases])

    def lip_bounds(self) -> tuple[float, ...]:
        from . import tree as tr

        _, lips = tr.analytic_bounds(
            self.root,
            [1.0 for _ in self.bases],
            [tuple(b.payload.lip_bounds()) for b in self.bases],
        )
        return lips

    def to_dict(self) -> dict:
        from . import tree as tr

        return {
            "kind": "tree",
            "sup_cap": self.sup_cap,
            "bases": [b.to_dict() for b in self.bases],
            "tree": tr.serialize(self.root),
        }


Payload = ExponentialPayload | RowSignPayload | TreePayload


def payload_from_dict(obj: dict) -> Payload:
    kind = obj.get("kind")
    if kind == "exponential":
        return ExponentialPayload(tuple(int(f) for f in obj["freq"]))
    if kind == "row_sign":
        return RowSignPayload(
            free_axis=int(obj["free_axis"]),
            label_axis=int(obj["label_axis"]),
            label=int(obj["label"]),
            row_values=tuple(int(v) for v in obj["row"]),
            eps=float(obj["eps"]),
            profile_grid=int(obj["profile_grid"]),
        )
    if kind == "tree":
        from . import tree as tr

        return TreePayload(
            bases=tuple(BaseTestFn.from_dict(b) for b in obj["bases"]),
            root=tr.deserialize(obj["tree"]),
            sup_cap=float(obj["sup_cap"]),
        )
    raise ValidationError(f"unknown payload kind {kind!r}")


@dataclass(frozen=True)
class BaseTestFn:
    """A labelled unit-sup test function with a guaranteed pairing floor."""

    label: int
    payload: Payload
    floor: float
    floor_error: float
    sup_bound: float = 1.0
    sup_analytic: bool = True

    def __post_init__(self) -> None:
        if self.sup_bound > 1.0 + 1e-12:
            raise ValidationError(f"sup_bound {self.sup_bound} exceeds 1")

    def sample(self, sizes: tuple[int, ...]) -> GridFunction:
        return self.payload.sample(sizes)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "payload": self.payload.to_dict(),
            "floor": self.floor,
            "floor_error": self.floor_error,
            "sup_bound": self.sup_bound,
            "sup_analytic": self.sup_analytic,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "BaseTestFn":
        return cls(
            label=int(obj["label"]),
            payload=payload_from_dict(obj["payload"]),
            floor=float(obj["floor"]),
            floor_error=float(obj["floor_error"]),
            sup_bound=float(obj["sup_bound"]),
            sup_analytic=bool(obj["sup_analytic"]),
        )


def exponential_basis(E: LatticeSet) -> list[BaseTestFn]:
    """One unit exponential per element of a 1-D set, labels descending."""
    if E.dim != 1:
        raise ValidationError("exponential basis needs a 1-D set")
    out = [
        BaseTestFn(label=v, payload=ExponentialPayload((v,)), floor=1.0, floor_error=0.0)
        for v in sorted(E.values(), reverse=True)
    ]
    return out


def _auto_profile_grid(abs_lip: float, span: int) -> int:
    # aim the quadrature penalty at ~1e-3, stay unaliased, cap the FFT size
    by_err = int(math.ceil(abs_lip / (2.0 * 1e-3))) if abs_lip > 0 else 0
    g = max(1024, 2 * span + 2, by_err)
    return min(next_pow2(g), 1 << 24)


def row_sign_basis(
    A: LatticeSet,
    axis: int = 0,
    eps: float = 1e-3,
    profile_grid: int | None = None,
    min_row_size: int = 1,
) -> list[BaseTestFn]:
    """Row-sign test functions for every row of a 2-D set along `axis`.

    The row label is the fixed coordinate (the one not on `axis`).  The floor
    is K = (grid mean of |f_row|) - eps with the quadrature error reported
    separately; the mean is taken on a fine 1-D grid sized so the Lipschitz
    error bound is small.
    """
    if A.dim != 2:
        raise ValidationError("row-sign basis needs a 2-D set")
    if not 0.0 < eps < 1.0:
        raise ValidationError("eps must lie in (0, 1)")
    label_axis = 1 - axis
    dec = rows(A, axis, min_size=min_row_size)
    out: list[BaseTestFn] = []
    for label_pt, row in dec.rows:
        vals = row.values()
        lo, hi = min(vals), max(vals)
        c = (lo + hi) // 2
        abs_lip = TWO_PI * sum(abs(v - c) for v in vals)
        g = profile_grid if profile_grid is not None else _auto_profile_grid(abs_lip, hi - lo)
        payload = RowSignPayload(
            free_axis=axis,
            label_axis=label_axis,
            label=label_pt[0],
            row_values=vals,
            eps=eps,
            profile_grid=g,
        )
        f = payload._row_sum(g)
        mean_abs = float(compensated_sum(np.abs(f))) / g
        ferr = abs_lip / (2.0 * g)
        out.append(
            BaseTestFn(
                label=label_pt[0],
                payload=payload,
                floor=mean_abs - eps,
                floor_error=ferr,
            )
        )
    out.sort(key=lambda b: b.label, reverse=True)
    return out


def floor_check(base: BaseTestFn, F: GridFunction, slack: float = 1e-9) -> float:
    """Measure Re<Phi, F> on F's grid and assert it clears the floor.

    When the inner-product budget is finite the threshold is
    floor - floor_error - budget - slack.  Row-sign profiles carry no finite
    free-axis budget; there the label-axis exactness identity reduces the
    grid pairing to the row's own 1-D quadrature, whose error is bounded by
    the row Lipschitz constant over the working grid size.
    """
    phi = base.sample(F.sizes)
    ip: InnerProductResult = inner_product(phi, F)
    r = float(ip.value.real)
    budget = ip.error_bound
    if isinstance(base.payload, RowSignPayload):
        pay = base.payload
        if axis_exact(phi, F, pay.label_axis):
            # cross rows cancel exactly, leaving the row's own 1-D quadrature
            budget = min(budget, pay.row_lip() / (2.0 * F.sizes[pay.free_axis]))
    if not math.isfinite(budget):
        raise VerificationError(
            f"floor check for label {base.label}: no finite error budget available"
        )
    threshold = base.floor - base.floor_error - budget - slack
    if r < threshold:
        raise VerificationError(
            f"floor violation for label {base.label}: measured {r:.6g} < "
            f"floor {base.floor:.6g} - budgets {base.floor_error + budget:.3g}"
        )
    return r
