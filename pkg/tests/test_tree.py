import json

import numpy as np
from hypothesis import given, settings, strategies as st

import l1lab.tree as tr
from l1lab import LatticeSet, evaluate_fft


def exp_samples(freq: int, G: int) -> np.ndarray:
    return evaluate_fft(LatticeSet(1, ((freq,),)), (G,)).samples


def small_tree():
    # (1/2) * (B0 * conj(B1)) + B2
    return tr.Sum(
        (
            tr.Scale(0.5, tr.Prod((tr.BaseRef(0), tr.Conj(tr.BaseRef(1))))),
            tr.BaseRef(2),
        )
    )


def test_evaluate_matches_direct():
    G = 64
    vals = [exp_samples(2, G), exp_samples(5, G), exp_samples(9, G)]
    got = tr.evaluate(small_tree(), vals)
    want = 0.5 * vals[0] * np.conj(vals[1]) + vals[2]
    assert np.max(np.abs(got - want)) < 1e-12


def test_serialize_round_trip():
    root = small_tree()
    blob = json.dumps(tr.serialize(root))
    back = tr.deserialize(json.loads(blob))
    assert tr.tree_equal(root, back)


def test_tree_equal_detects_difference():
    a = small_tree()
    b = tr.Sum(
        (
            tr.Scale(0.5, tr.Prod((tr.BaseRef(0), tr.Conj(tr.BaseRef(2))))),
            tr.BaseRef(2),
        )
    )
    assert not tr.tree_equal(a, b)


def test_freq_interval_arithmetic():
    # product adds intervals, conjugation negates, sum takes the hull
    iv = tr.freq_interval(small_tree(), [(2, 2), (5, 5), (9, 9)])
    # 0.5*(2 - 5) = -3 from the product branch, 9 from the bare leaf
    assert iv == (-3, 9)


def test_freq_interval_respects_ranges():
    root = tr.Prod((tr.BaseRef(0), tr.BaseRef(1)))
    iv = tr.freq_interval(root, [(-2, 3), (10, 20)])
    assert iv == (8, 23)


def test_analytic_bounds_scale_and_prod():
    root = tr.Scale(0.25, tr.Prod((tr.BaseRef(0), tr.BaseRef(1))))
    sup, lips = tr.analytic_bounds(root, [1.0, 1.0], [(6.0,), (8.0,)])
    assert sup <= 0.25 + 1e-15
    # product rule: lip(fg) <= sup(f) lip(g) + sup(g) lip(f), then scaled
    assert lips[0] is not None and lips[0] <= 0.25 * (6.0 + 8.0) + 1e-12


def test_support_set_matches_spectrum():
    G = 128
    vals = [exp_samples(2, G), exp_samples(5, G), exp_samples(9, G)]
    root = small_tree()
    supp = tr.support_set(root, [{2}, {5}, {9}])
    got = tr.evaluate(root, vals)
    spec = np.fft.fft(got) / G
    hot = {int(k) if k < G // 2 else int(k) - G for k in np.nonzero(np.abs(spec) > 1e-10)[0]}
    assert hot <= supp
    assert supp == {-3, 9}


def test_support_set_cap_degrades_to_unknown():
    big = {i * 3 for i in range(1000)}
    root = tr.Prod((tr.BaseRef(0), tr.BaseRef(1)))
    assert tr.support_set(root, [big, big], cap=1000) is None


def test_substitute_composition():
    inner = tr.Scale(0.5, tr.BaseRef(0))
    outer = tr.Sum((tr.BaseRef(0), tr.Scale(2.0, tr.BaseRef(1))))
    combined = tr.substitute(outer, [inner, tr.BaseRef(1)])
    G = 32
    vals = [exp_samples(3, G), exp_samples(7, G)]
    got = tr.evaluate(combined, vals)
    want = 0.5 * vals[0] + 2.0 * vals[1]
    assert np.max(np.abs(got - want)) < 1e-12


def test_interval_helpers():
    assert tr.iv_add((1, 2), (10, 20)) == (11, 22)
    assert tr.iv_union((1, 5), (-2, 3)) == (-2, 5)
    assert tr.iv_neg((3, 7)) == (-7, -3)
    assert tr.iv_max_abs((-9, 4)) == 9


@settings(max_examples=50)
@given(st.integers(-30, 30), st.integers(-30, 30), st.integers(-30, 30))
def test_product_support_is_sum_of_frequencies(a, b, c):
    root = tr.Prod((tr.BaseRef(0), tr.BaseRef(1), tr.Conj(tr.BaseRef(2))))
    supp = tr.support_set(root, [{a}, {b}, {c}])
    assert supp == {a + b - c}
    iv = tr.freq_interval(root, [(a, a), (b, b), (c, c)])
    assert iv == (a + b - c, a + b - c)
