import csv
import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from l1lab import (
    LatticeSet,
    evaluate_fft,
    gen_ap,
    gen_cube,
    l1_estimate,
    l2_exact,
    linf_exact,
)
from l1lab.norms import l1_grid, write_trace_csv

FOUR_OVER_PI = 4.0 / math.pi


def test_l2_exact():
    assert l2_exact(gen_cube(3, 2)) == 3.0
    assert l2_exact(LatticeSet(1, ((7,),))) == 1.0


def test_l2_matches_grid():
    A = gen_ap(0, 3, 7)
    F = evaluate_fft(A, (64,))
    from l1lab import inner_product

    r = inner_product(F, F)
    assert abs(math.sqrt(r.value.real) - l2_exact(A)) < 1e-9


def test_linf_exact():
    assert linf_exact(gen_cube(3, 2)) == 9.0
    assert linf_exact(LatticeSet(1, ((5,),))) == 1.0


def test_linf_attained_at_origin():
    A = gen_ap(1, 2, 9)
    f = evaluate_fft(A, (256,))
    m = max(abs(v) for v in f.samples)
    assert m <= linf_exact(A) + 1e-9
    assert abs(abs(f.samples[0]) - linf_exact(A)) < 1e-9


def test_l1_two_point_closed_form():
    # integral of |1 + e(x)| = integral of 2|cos(pi x)| = 4/pi
    est = l1_estimate(LatticeSet(1, ((0,), (1,))), target_rel_err=1e-5)
    assert est.error_bound <= 1e-4 * est.value
    assert abs(est.value - FOUR_OVER_PI) <= est.error_bound + 1e-9


def test_l1_singleton_exact():
    est = l1_estimate(LatticeSet(1, ((42,),)))
    assert abs(est.value - 1.0) <= est.error_bound + 1e-12


def test_l1_square_factorizes():
    one = l1_estimate(gen_ap(1, 1, 8), target_rel_err=1e-5)
    two = l1_estimate(gen_cube(8, 2), target_rel_err=1e-2, max_samples=2 ** 21)
    # |F(x,y)| = |F1(x)| |F1(y)|, so the 2-D value is the square of the 1-D one
    slack = two.error_bound + (2 * one.value + one.error_bound) * one.error_bound
    assert abs(two.value - one.value ** 2) <= slack + 1e-9


def test_l1_trace_monotone_consistency():
    est = l1_estimate(gen_ap(1, 1, 16), target_rel_err=1e-4)
    assert len(est.trace) >= 2
    # successive refinements agree within their combined rigorous bounds
    for (g1, v1, e1), (g2, v2, e2) in zip(est.trace, est.trace[1:]):
        assert abs(v1 - v2) <= e1 + e2


def test_l1_budget_flag():
    # impossible relative target with a capped budget: flagged, not raised
    A = gen_ap(1, 7, 37)
    est = l1_estimate(A, target_rel_err=1e-12, max_samples=2 ** 12)
    assert not est.met_target
    assert est.error_bound > 0


def test_l1_norm_chain():
    rng = random.Random(3)
    for _ in range(5):
        vals = rng.sample(range(-60, 61), rng.randrange(2, 12))
        A = LatticeSet(1, tuple((v,) for v in vals))
        est = l1_estimate(A, target_rel_err=1e-3)
        assert est.value - est.error_bound <= l2_exact(A) + 1e-9
        assert l2_exact(A) <= linf_exact(A)
        # mass at least 1: |F|_1 >= |F|_2^2 / |F|_inf = 1
        assert est.value + est.error_bound >= 1.0 - 1e-9


def test_l1_translation_invariance():
    A = gen_ap(0, 5, 9)
    B = A.translate((-17,))
    ea = l1_estimate(A, target_rel_err=1e-4)
    eb = l1_estimate(B, target_rel_err=1e-4)
    assert abs(ea.value - eb.value) <= ea.error_bound + eb.error_bound + 1e-12


def test_l1_dilation_invariance():
    A = gen_ap(1, 1, 6)
    B = LatticeSet(1, tuple((3 * v,) for (v,) in A.points))
    ea = l1_estimate(A, target_rel_err=1e-4)
    eb = l1_estimate(B, target_rel_err=1e-4)
    assert abs(ea.value - eb.value) <= ea.error_bound + eb.error_bound + 1e-12


def test_l1_grid_examples():
    const = evaluate_fft(LatticeSet(1, ((0,),)), (32,))
    assert abs(l1_grid(const) - 1.0) < 1e-12
    wave = evaluate_fft(LatticeSet(1, ((9,),)), (64,))
    assert abs(l1_grid(wave) - 1.0) < 1e-12
    two = evaluate_fft(LatticeSet(1, ((0,), (1,))), (4096,))
    # midpoint value of the 4/pi integral; bound Lip/(2G) with Lip <= 2*pi
    assert abs(l1_grid(two) - FOUR_OVER_PI) <= 2 * math.pi / (2 * 4096) + 1e-12


def test_trace_csv(tmp_path):
    est = l1_estimate(gen_ap(0, 1, 4), target_rel_err=1e-3)
    path = tmp_path / "trace.csv"
    write_trace_csv(est, str(path))
    with open(path, newline="") as fh:
        rows_ = list(csv.reader(fh))
    assert rows_[0] == ["grid_size", "value", "error_bound"]
    assert len(rows_) == len(est.trace) + 1


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(-40, 40), min_size=1, max_size=10, unique=True))
def test_l1_lower_mass_property(vals):
    A = LatticeSet(1, tuple((v,) for v in vals))
    est = l1_estimate(A, target_rel_err=1e-2)
    assert est.value + est.error_bound >= 1.0 - 1e-9
    assert est.value - est.error_bound <= math.sqrt(len(vals)) + 1e-9
