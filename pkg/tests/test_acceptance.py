"""End-to-end acceptance checks, one test per criterion.

Each test prints a single pass/fail line (visible with -s) and enforces the
stated tolerance and runtime budget.  Oracle constants are computed offline
from closed forms or fine quadrature and frozen here.
"""

import itertools
import math
import random
import time

import numpy as np
import pytest

from l1lab import (
    LatticeSet,
    canonical_embedding,
    evaluate_fft,
    gen_ap,
    gen_cube,
    gen_lacunary,
    gen_prime_residue,
    image_set,
    l1_estimate,
    verify_freiman,
)
from l1lab.cdp import (
    SelectionState,
    apply_round,
    bound_1d_exponential,
    bound_2d,
    pichorides_lhs,
    verify_selection,
)
from l1lab.errors import ValidationError
from l1lab.freiman import bound_3d_via_embedding, mark_verified, recenter_to_box
from l1lab.grid import inner_product
from l1lab.norms import l1_grid

FOUR_OVER_PI = 4.0 / math.pi


def report(n, ok, detail):
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {n}: {detail}"


def test_criterion_01_parseval_random_sets():
    t0 = time.monotonic()
    rng = random.Random(1)
    worst = 0.0
    for _ in range(50):
        d = rng.randint(1, 3)
        # only 129 distinct 1-D coordinates exist in [-64, 64]
        n = rng.randint(1, 129 if d == 1 else 200)
        pts = set()
        while len(pts) < n:
            pts.add(tuple(rng.randint(-64, 64) for _ in range(d)))
        A = LatticeSet.of(sorted(pts), dim=d)
        G = 136 if d == 3 else 256
        f = evaluate_fft(A, (G,) * d)
        assert not f.aliased
        ip = inner_product(f, f)
        assert ip.exact
        worst = max(worst, abs(ip.value.real - A.size) / A.size + abs(ip.value.imag) / A.size)
    dt = time.monotonic() - t0
    report(1, worst <= 1e-9 and dt < 10, f"50 sets, worst rel dev {worst:.3g}, {dt:.2f}s")


def test_criterion_02_two_point_closed_form():
    t0 = time.monotonic()
    A = LatticeSet.of([(0,), (1,)], dim=1)
    est = l1_estimate(A, target_rel_err=1e-4)
    rel = abs(est.value - FOUR_OVER_PI) / FOUR_OVER_PI
    dt = time.monotonic() - t0
    report(2, rel <= 1e-4 and dt < 1, f"value {est.value:.10f} vs 4/pi, rel {rel:.3g}, {dt:.2f}s")


def test_criterion_03_cube_factorization():
    t0 = time.monotonic()
    v1 = l1_grid(evaluate_fft(gen_cube(8, 1), (1024,)))
    v2 = l1_grid(evaluate_fft(gen_cube(8, 2), (1024, 1024)))
    w1 = l1_grid(evaluate_fft(gen_cube(8, 1), (128,)))
    w3 = l1_grid(evaluate_fft(gen_cube(8, 3), (128, 128, 128)))
    r2 = abs(v2 - v1 ** 2) / v1 ** 2
    r3 = abs(w3 - w1 ** 3) / w1 ** 3
    dt = time.monotonic() - t0
    report(3, r2 <= 1e-9 and r3 <= 1e-9 and dt < 30, f"d=2 rel {r2:.3g}, d=3 rel {r3:.3g}, {dt:.2f}s")


def test_criterion_04_dirichlet_growth_slope():
    t0 = time.monotonic()
    Ns = (16, 64, 256, 1024)
    vals = [l1_estimate(gen_ap(1, 1, N), target_rel_err=1e-3, max_samples=2 ** 22).value for N in Ns]
    slope = float(np.polyfit([math.log(N) for N in Ns], vals, 1)[0])
    dev = abs(slope - 0.4053) / 0.4053
    dt = time.monotonic() - t0
    report(4, dev <= 0.10 and dt < 120, f"slope {slope:.5f} vs 0.4053, rel dev {dev:.3g}, {dt:.1f}s")


def test_criterion_05_pichorides_domain_property():
    t0 = time.monotonic()
    rng = random.Random(5)
    checked = 0
    worst = -math.inf
    while checked < 10 ** 5:
        t = rng.uniform(100.0, 1e5)
        r = t * t / 2 * math.sqrt(rng.random())
        phi = rng.uniform(0.0, 2.0 * math.pi)
        P, Q = r * math.cos(phi), r * math.sin(phi)
        if t + 2 * P < 0:
            continue
        worst = max(worst, pichorides_lhs(t, P, Q))
        checked += 1
    dt = time.monotonic() - t0
    report(5, worst <= 1.0 + 1e-12 and dt < 5, f"{checked} points, max lhs {worst:.12f}, {dt:.2f}s")


def feasible_pairs(labels, S):
    Eset = set(labels)
    out = []
    for m1, m2 in itertools.combinations(labels, 2):
        d2 = m1 - m2
        if all(p + d1 + d2 not in Eset for p in S for d1 in (0, m1 - m2)):
            out.append((m1, m2))
    return out


def test_criterion_06_selection_matches_exhaustive_oracle():
    t0 = time.monotonic()
    E = gen_lacunary(10)
    cert = bound_1d_exponential(E, t_override=2)
    assert len(cert.rounds) >= 1
    state = SelectionState.start(cert.labels, 2)
    for rec in cert.rounds:
        ok, msg = verify_selection(cert.labels, set(state.S), rec.T)
        assert ok, msg
        feas = feasible_pairs(cert.labels, state.S)
        assert tuple(rec.T) == feas[0]
        apply_round(state, rec.T)
    dt = time.monotonic() - t0
    report(6, dt < 10, f"{len(cert.rounds)} rounds re-verified and oracle-matched, {dt:.2f}s")


def test_criterion_07_ledger_on_lacunary_2_16():
    t0 = time.monotonic()
    cert = bound_1d_exponential(gen_lacunary(16), t_override=2)
    formula_ok = cert.achieved >= 1 and cert.measured_re >= cert.bound_formula_value
    resid = max(rec.residual_middle for rec in cert.rounds)
    sup_ok = cert.sup_sampled <= 1.0 + 1e-9
    dt = time.monotonic() - t0
    report(
        7,
        formula_ok and resid <= 1e-8 and sup_ok and dt < 60,
        f"measured {cert.measured_re:.6f} >= formula {cert.bound_formula_value:.6f}, "
        f"max residual {resid:.2e}, sup {cert.sup_sampled:.9f}, {dt:.2f}s",
    )


def test_criterion_08_2d_soundness_random_sets():
    t0 = time.monotonic()
    rng = random.Random(8)
    for run in range(10):
        pts = []
        for y in range(1, 17):
            for x in rng.sample(range(1, 25), 16):
                pts.append((x, y))
        A = LatticeSet.of(pts, dim=2)
        cert = bound_2d(A)
        est = l1_estimate(A, target_rel_err=0.05, max_samples=2 ** 20)
        budget = cert.floor_budget + cert.measured_budget
        assert cert.certified_bound - budget <= est.value + est.error_bound, run
    dt = time.monotonic() - t0
    report(8, dt < 300, f"10 sets sound, {dt:.1f}s")


def test_criterion_09_box_pipeline_and_degree_refusal():
    t0 = time.monotonic()
    A0, extents, _ = recenter_to_box(gen_cube(3, 3))
    m = canonical_embedding(extents, 62)
    fmap = mark_verified(m, verify_freiman(m, 62))
    cert = bound_3d_via_embedding(A0, fmap)
    est = l1_estimate(image_set(fmap, A0), target_rel_err=0.2, max_samples=2 ** 22)
    upper_ok = cert.certified_bound <= est.value + est.error_bound
    low = canonical_embedding(extents, 61)
    with pytest.raises(ValidationError, match="61"):
        bound_3d_via_embedding(A0, mark_verified(low, verify_freiman(low, 61)))
    dt = time.monotonic() - t0
    report(
        9,
        upper_ok and dt < 600,
        f"certified {cert.certified_bound:.4f} <= measured {est.value:.4f}+{est.error_bound:.4f}, "
        f"k=61 refused, {dt:.1f}s",
    )


def test_criterion_10_generator_constructions():
    t0 = time.monotonic()
    r = gen_prime_residue(3)
    size_ok = r.set.size == 7 and r.set.size >= r.modulus / 4
    xs = gen_lacunary(20).values()
    rec_ok = all(xs[i + 1] == xs[i] + 2 * (xs[i] - xs[i - 1]) for i in range(1, len(xs) - 1))
    dt = time.monotonic() - t0
    report(10, size_ok and rec_ok and dt < 1, f"|A|={r.set.size} >= {r.modulus}/4, recurrence holds, {dt:.2f}s")


def test_criterion_11_removal_comparison():
    t0 = time.monotonic()
    rng = random.Random(11)
    X = set(rng.sample(range(1, 4097), 140))
    full = gen_ap(1, 1, 4096)
    kept = LatticeSet.of([(v,) for v in range(1, 4097) if v not in X], dim=1)
    ef = l1_estimate(full, target_rel_err=1e-3, max_samples=2 ** 22)
    ek = l1_estimate(kept, target_rel_err=1e-3, max_samples=2 ** 22)
    lhs = ek.value - ek.error_bound
    rhs = ef.value + ef.error_bound + math.sqrt(140)
    dt = time.monotonic() - t0
    report(11, lhs <= rhs and dt < 120, f"{lhs:.4f} <= {rhs:.4f}, {dt:.1f}s")
