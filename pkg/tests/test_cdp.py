import itertools
import json
import math
import random

import pytest
from hypothesis import given, settings, strategies as st

import l1lab.tree as tr
from l1lab import (
    LatticeSet,
    evaluate_fft,
    exponential_basis,
    gen_ap,
    gen_cube,
    gen_lacunary,
    l1_estimate,
)
from l1lab.cdp import (
    CdpCertificate,
    SelectionState,
    bound_1d_exponential,
    bound_2d,
    cdp_iterate,
    choose_t,
    davenport_select,
    feasibility_gauge,
    pichorides_lhs,
    plan_combination,
    run_test_function,
    sup_contraction_certified,
    tree_pairing_floor,
    verify_certificate,
    verify_selection,
)
from l1lab.errors import ValidationError


# --- Pichorides inequality ------------------------------------------------

def test_pichorides_point_values():
    assert abs(pichorides_lhs(100.0, 0.0, 0.0) - 0.9925) < 1e-12
    assert abs(pichorides_lhs(100.0, -50.0, 0.0) - 0.995025) < 1e-12


def test_pichorides_domain_errors():
    with pytest.raises(ValidationError):
        pichorides_lhs(100.0, -51.0, 0.0)  # t + 2P < 0
    with pytest.raises(ValidationError):
        pichorides_lhs(100.0, 0.0, 100.0 ** 2)  # P^2 + Q^2 > t^4/4


def test_pichorides_random_domain():
    rng = random.Random(42)
    for _ in range(2000):
        t = rng.uniform(100.0, 1e5)
        r = t * t / 2 * math.sqrt(rng.random())
        phi = rng.uniform(0, 2 * math.pi)
        P, Q = r * math.cos(phi), r * math.sin(phi)
        if t + 2 * P < 0:
            continue
        assert pichorides_lhs(t, P, Q) <= 1.0 + 1e-12


def test_small_t_contraction_certified():
    # below the analytic threshold the bound comes from a rigorous domain scan
    ok1, m1 = sup_contraction_certified(1)
    assert ok1 and abs(m1 - 0.25) < 1e-12
    ok2, m2 = sup_contraction_certified(2)
    assert ok2 and m2 <= 1.0
    ok10, m10 = sup_contraction_certified(10)
    assert ok10 and m10 <= 1.0


# --- t selection ------------------------------------------------------------

def test_choose_t_guard_values():
    assert choose_t(2) == 1
    assert choose_t(10 ** 6) == 1  # formula gives 0, guard lifts to 1
    assert choose_t(1) == 1
    R = math.ceil(math.e ** 100)
    assert choose_t(R) == 2


# --- Davenport selection ----------------------------------------------------

def test_select_t1_takes_max():
    st_ = SelectionState.start([3, 9, 27], t=1)
    sel = davenport_select(st_)
    assert sel is not None and sel.T == (27,)


def exhaustive_pairs(E, S):
    """All (m1, m2) pairs passing the exclusion, scanning descending.

    For an accepted pair in order, the a<=b differences are {0, m1-m2} and
    the single g<d difference is m1-m2.
    """
    Eset = set(E)
    out = []
    desc = sorted(E, reverse=True)
    for m1, m2 in itertools.combinations(desc, 2):
        d2 = m1 - m2
        ok = all(
            p + d1 + d2 not in Eset for p in S for d1 in (0, m1 - m2)
        )
        if ok:
            out.append((m1, m2))
    return out


def test_select_lacunary_pair_matches_oracle():
    E = [2 ** i for i in range(1, 11)]
    st_ = SelectionState.start(E, t=2)
    sel = davenport_select(st_)
    assert sel is not None
    feasible = exhaustive_pairs(E, {1024})
    assert feasible, "oracle: a valid pair exists"
    assert tuple(sorted(sel.T, reverse=True)) in [
        tuple(sorted(p, reverse=True)) for p in feasible
    ]
    ok, msg = verify_selection(E, {1024}, sel.T)
    assert ok, msg


def test_select_dense_failure():
    # with the whole interval in the exclusion set, p=1 + (m1-m2) always
    # lands back inside E, so no pair survives
    E = tuple(range(10, 0, -1))
    st_ = SelectionState(E=E, t=2, S=set(E), history=[])
    assert davenport_select(st_) is None
    assert not exhaustive_pairs(E, set(E))


def test_verify_selection_rejects_violation():
    E = [2, 4, 8, 16]
    # T=(4,2) against p=2: 2 + 0 + (4-2) = 4 lands back in E
    ok, msg = verify_selection(E, {2}, (4, 2))
    assert not ok and "lands in the label set" in msg


def test_verify_selection_rejects_foreign_label():
    ok, msg = verify_selection([2, 4], {4}, (3,))
    assert not ok


# --- feasibility gauge -------------------------------------------------------

def test_gauge_initial_state():
    st_ = SelectionState.start([2, 4, 8], t=1)
    rep = feasibility_gauge(st_)
    assert rep.sum_N == 0  # S = {max}, nothing above it
    assert rep.condition_ok


def test_gauge_matches_brute_recount():
    rng = random.Random(1)
    E = sorted(rng.sample(range(1, 200), 12))
    st_ = SelectionState.start(E, t=1)
    sel = davenport_select(st_)
    from l1lab.cdp import apply_round

    apply_round(st_, sel.T)
    rep = feasibility_gauge(st_)
    brute = sum(sum(1 for e in E if e > p) for p in st_.S)
    assert rep.sum_N == brute
    # after one round with t=1 the induction bound t^{5i} = 1 need not hold
    # for the running sum, but the report must expose both numbers
    assert rep.induction_bound == 1


# --- the iteration and certificates ------------------------------------------

def test_single_base_certificate():
    E = LatticeSet(1, ((7,),))
    cert = bound_1d_exponential(E)
    assert cert.certified_bound == 1.0
    assert cert.achieved == 0 or cert.achieved == 1
    assert isinstance(cert.root, tr.BaseRef) or cert.rounds
    assert verify_certificate(cert).ok


def test_lacunary_run_t2_ledger():
    E = gen_lacunary(16)
    cert = bound_1d_exponential(E, t_override=2)
    assert cert.achieved >= 1
    assert cert.measured_re >= cert.bound_formula_value - 1e-9
    for r in cert.rounds:
        assert r.residual_middle <= 1e-8
        # per-round pairing obeys the contraction ledger within slack
        assert r.ledger_after >= r.predicted_after - 1e-7
    assert cert.sup_sampled <= 1.0 + 1e-9


def test_monotone_ledger_per_round():
    E = gen_lacunary(14)
    cert = bound_1d_exponential(E, t_override=2)
    t = cert.t
    for r in cert.rounds:
        floor_sum = cert.declared_floor * t
        want = (1 - 1 / t) * r.ledger_before + floor_sum / (4 * t ** 1.5)
        assert r.ledger_after >= want - 1e-7


def test_iterate_rejects_duplicate_labels():
    E = gen_ap(1, 1, 4)
    bases = exponential_basis(E) + exponential_basis(LatticeSet(1, ((2,),)))
    F = evaluate_fft(E, (32,))
    with pytest.raises(ValidationError):
        cdp_iterate(F, bases, K=1.0)


def test_declared_floor_cannot_exceed_min():
    E = gen_ap(1, 1, 4)
    bases = exponential_basis(E)
    F = evaluate_fft(E, (32,))
    with pytest.raises(ValidationError):
        cdp_iterate(F, bases, K=2.0)


def test_certificate_json_round_trip():
    cert = bound_1d_exponential(gen_ap(1, 1, 8))
    d = json.loads(json.dumps(cert.to_dict()))
    back = CdpCertificate.from_dict(d)
    assert back.certified_bound == cert.certified_bound
    assert tr.tree_equal(back.root, cert.root)
    assert verify_certificate(back).ok


def test_verify_catches_tampered_round():
    cert = bound_1d_exponential(gen_lacunary(10), t_override=2)
    d = cert.to_dict()
    bad = json.loads(json.dumps(d))
    # swap one selected label for a colliding one
    bad["rounds"][0]["T"][0] = int(bad["labels"][1])
    rep = verify_certificate(CdpCertificate.from_dict(bad))
    assert not rep.ok
    failed = {e.name for e in rep.entries if not e.passed}
    assert failed & {"selection", "tree", "measured"}


def test_verify_catches_inflated_bound():
    cert = bound_1d_exponential(gen_ap(1, 1, 8))
    d = json.loads(json.dumps(cert.to_dict()))
    d["certified_bound"] = 3.5
    rep = verify_certificate(CdpCertificate.from_dict(d))
    failed = {e.name for e in rep.entries if not e.passed}
    assert "formula" in failed or "soundness" in failed


def test_replay_on_finer_grid_agrees():
    cert = bound_1d_exponential(gen_lacunary(8), t_override=2)
    rep = verify_certificate(cert, grid_factor=4)
    assert rep.ok


# --- combination planning and promotion --------------------------------------

def test_plan_combination_single_label():
    E, root = plan_combination([5], t=1)
    assert E == (5,) and isinstance(root, tr.BaseRef)


def test_tree_pairing_floor_quarter_at_t1():
    cert = bound_1d_exponential(gen_ap(1, 1, 8))
    assert cert.t == 1
    # at t=1 the lead term dies and one round pairs K/4
    assert abs(tree_pairing_floor(cert) - 0.25) < 1e-12
    node, floor = run_test_function(cert)
    # the single base beats the one-round tree
    assert isinstance(node, tr.BaseRef)
    assert abs(floor - 1.0) < 1e-12


def test_run_test_function_prefers_tree_when_sum_saturates():
    # the geometric sum approaches t, and sqrt(t)/4 > 1 past t=16; feed the
    # decision rule a deep-run ledger and check it switches to the tree
    from dataclasses import replace

    cert = bound_1d_exponential(gen_ap(1, 1, 8))
    deep = replace(cert, t=17, achieved=60)
    tpf = tree_pairing_floor(deep)
    s_geo = sum((1 - 1 / 17.0) ** n for n in range(60))
    want = (1 - 1 / 17.0) ** 60 * 1.0 + 1.0 / (4 * math.sqrt(17)) * s_geo
    assert abs(tpf - want) < 1e-12
    assert tpf > 1.0
    node, floor = run_test_function(deep)
    assert node is deep.root and abs(floor - tpf) < 1e-12


# --- 2-D front door -----------------------------------------------------------

def test_bound_2d_single_row_degenerate():
    A = LatticeSet(2, tuple((x, 4) for x in range(1, 9)))
    cert = bound_2d(A)
    row_l1 = l1_estimate(gen_ap(1, 1, 8), target_rel_err=1e-4)
    # certified = the one row's floor = row L1 (grid) - eps
    assert cert.certified_bound <= row_l1.value + row_l1.error_bound + 1e-6
    assert cert.certified_bound >= row_l1.value - row_l1.error_bound - 2e-3
    assert verify_certificate(cert).ok


def test_bound_2d_cube_certified_below_l1():
    A = gen_cube(16, 2).translate((1, 1))
    cert = bound_2d(A)
    est = l1_estimate(A, target_rel_err=1e-2, max_samples=2 ** 21)
    total = cert.floor_budget + cert.measured_budget
    assert cert.certified_bound - total <= est.value + est.error_bound
    assert verify_certificate(cert).ok


def test_bound_2d_lacunary_rows_t2():
    # rows live at labels 2, 4, ..., 2^6; the pair selection has room
    pts = []
    for j in range(1, 7):
        label = 2 ** j
        pts += [(x, label) for x in range(1, 9)]
    A = LatticeSet(2, tuple(pts))
    cert = bound_2d(A, t_override=2)
    assert cert.achieved >= 1
    single = max(b.floor - b.floor_error for b in cert.bases)
    s_geo = sum((1 - 1 / 2.0) ** n for n in range(cert.achieved))
    formula = cert.declared_floor / (4 * math.sqrt(2)) * s_geo
    assert abs(cert.bound_formula_value - formula) < 1e-12
    assert cert.certified_bound >= max(single, formula) - 1e-12
    assert verify_certificate(cert).ok


def test_bound_2d_needs_dim2():
    with pytest.raises(ValidationError):
        bound_2d(gen_cube(3, 3))


def test_bound_2d_translation_recorded():
    A = LatticeSet(2, ((-5, -2), (-4, -2), (-5, 0), (-4, 0)))
    cert = bound_2d(A)
    assert cert.context["translation"] == [6, 3]
    assert verify_certificate(cert).ok


# --- certified bound is a genuine lower bound --------------------------------

@settings(max_examples=8, deadline=None)
@given(st.integers(2, 9), st.integers(0, 10 ** 6))
def test_certified_sound_against_measured_l1(n, seed):
    rng = random.Random(seed)
    vals = rng.sample(range(1, 60), n)
    E = LatticeSet(1, tuple((v,) for v in vals))
    cert = bound_1d_exponential(E)
    est = l1_estimate(E, target_rel_err=1e-3)
    total = cert.floor_budget + cert.measured_budget
    assert cert.certified_bound - total <= est.value + est.error_bound + 1e-9
