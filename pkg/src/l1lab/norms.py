"""Norms of exponential sums: exact L2/Linf, rigorously bounded L1.

For F_A(x) = sum_{a in A} e(a.x) the L2 norm is sqrt(|A|) and the sup norm is
|A| (attained at x = 0), both exact.  The L1 norm has no closed form; it is
estimated by the midpoint rule on dyadic grids that are refined until the
rigorous error bound

    |grid mean of |F_A|  -  integral|  <=  sum_i Lip_i / (2 G_i)

meets the requested relative target, where Lip_i <= 2*pi*sum_a |a_i| is a
per-axis Lipschitz bound.  Since |F_A| is invariant under integer translation
of A, coordinates are re-centered first to minimize the constant.  Grids past
the streaming threshold are evaluated block-by-block (a decimation-in-sample
splitting of the inverse DFT) so memory stays bounded while the accumulation
remains chunked and deterministic.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .config import LIMITS
from .errors import ValidationError
from .grid import GridFunction, compensated_sum, grid_abs_mean, next_pow2
from .lattice import LatticeSet


def l2_exact(A: LatticeSet) -> float:
    """sqrt(|A|), by orthonormality of the exponentials."""
    return math.sqrt(A.size)


def linf_exact(A: LatticeSet) -> float:
    """|A|, attained at the origin."""
    return float(A.size)


def l1_grid(f: GridFunction) -> float:
    """Plain grid average of |f| (chunk-compensated), no error accounting."""
    return grid_abs_mean(f)


@dataclass(frozen=True)
class NormEstimate:
    value: float
    error_bound: float
    grid: tuple[int, ...]
    trace: tuple[tuple[tuple[int, ...], float, float], ...]
    met_target: bool
    p: str = "1"


def write_trace_csv(est: NormEstimate, path: str) -> None:
    """Refinement trace as CSV with columns grid_size, value, error_bound."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["grid_size", "value", "error_bound"])
        for sizes, value, bound in est.trace:
            w.writerow(["x".join(str(g) for g in sizes), repr(value), repr(bound)])


def recenter(A: LatticeSet) -> LatticeSet:
    """Translate each axis by its integer midrange; |F| is unchanged."""
    shift = tuple(-((lo + hi) // 2) for lo, hi in zip(A.lo, A.hi))
    return A.translate(shift)


def _lip_bounds(A: LatticeSet) -> tuple[float, ...]:
    coords = A.coords_array()
    return tuple(2.0 * math.pi * float(np.abs(coords[:, i]).sum()) for i in range(A.dim))


def _abs_mean_materialized(coords: np.ndarray, sizes: tuple[int, ...]) -> float:
    masses = np.zeros(sizes, dtype=np.complex128)
    idx = tuple(np.mod(coords[:, i], sizes[i]) for i in range(len(sizes)))
    np.add.at(masses, idx, 1.0)
    total = 1
    for g in sizes:
        total *= g
    samples = np.fft.ifftn(masses) * total
    return compensated_sum(np.abs(samples)) / total


def _abs_mean_streamed(coords: np.ndarray, sizes: tuple[int, ...], blocks: int) -> float:
    """Mean of |F_A| over the grid, decimating axis 0 into `blocks` residues.

    For nodes with j_0 = q*blocks + r the value of F_A is the size-(G_0/blocks)
    inverse DFT of the masses twiddled by e(a_0 * r / G_0); folding residues
    mod G_0/blocks is exact because the remaining phase is periodic there.
    """
    g0 = sizes[0]
    if g0 % blocks != 0:
        raise ValidationError("block count must divide the leading grid size")
    sub = (g0 // blocks,) + tuple(sizes[1:])
    sub_total = 1
    for g in sub:
        sub_total *= g
    a0 = coords[:, 0]
    rest_idx = tuple(np.mod(coords[:, i], sizes[i]) for i in range(1, len(sizes)))
    partials: list[float] = []
    for r in range(blocks):
        w = np.exp(2j * np.pi * (np.mod(a0 * r, g0)) / g0)
        masses = np.zeros(sub, dtype=np.complex128)
        np.add.at(masses, (np.mod(a0, sub[0]),) + rest_idx, w)
        block = np.fft.ifftn(masses) * sub_total
        partials.append(compensated_sum(np.abs(block)))
    total = sub_total * blocks
    return math.fsum(partials) / total


def _abs_mean(A: LatticeSet, sizes: tuple[int, ...]) -> float:
    coords = A.coords_array()
    total = 1
    for g in sizes:
        total *= g
    if total <= LIMITS.stream_threshold:
        return _abs_mean_materialized(coords, sizes)
    blocks = 1
    while total // blocks > LIMITS.stream_threshold and blocks < sizes[0]:
        blocks *= 2
    return _abs_mean_streamed(coords, sizes, blocks)


def l1_estimate(
    A: LatticeSet,
    target_rel_err: float = 1e-4,
    max_samples: int | None = None,
) -> NormEstimate:
    """L1 norm of F_A with a rigorous error bound and a refinement trace.

    Grids start just past alias-free size and double the axis with the largest
    error contribution until the bound meets target_rel_err * value or the
    sample budget is exhausted (in which case the best estimate is returned
    with met_target=False).
    """
    if target_rel_err <= 0:
        raise ValidationError("target_rel_err must be positive")
    budget = max_samples if max_samples is not None else LIMITS.samples_budget
    At = recenter(A)
    lips = _lip_bounds(At)
    sizes = tuple(
        next_pow2(max(2 * At.max_abs_coord(i) + 1, 8)) for i in range(At.dim)
    )
    total = 1
    for g in sizes:
        total *= g
    if total > budget:
        raise ValidationError(
            "even the alias-free starting grid exceeds the sample budget"
        )
    trace: list[tuple[tuple[int, ...], float, float]] = []
    met = False
    while True:
        value = _abs_mean(At, sizes)
        bound = math.fsum(l / (2.0 * g) for l, g in zip(lips, sizes))
        trace.append((sizes, value, bound))
        if bound <= target_rel_err * max(value, 1e-300):
            met = True
            break
        # double the axis with the dominant error term
        axis = max(range(At.dim), key=lambda i: lips[i] / sizes[i])
        if lips[axis] == 0.0:
            met = True
            break
        nxt = tuple(g * 2 if i == axis else g for i, g in enumerate(sizes))
        nxt_total = 1
        for g in nxt:
            nxt_total *= g
        if nxt_total > budget:
            break
        sizes = nxt
    return NormEstimate(
        value=trace[-1][1],
        error_bound=trace[-1][2],
        grid=trace[-1][0],
        trace=tuple(trace),
        met_target=met,
        p="1",
    )
