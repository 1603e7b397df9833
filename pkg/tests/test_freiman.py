import functools
import json
import math
import random

import numpy as np
import pytest

import l1lab.tree as tr
from l1lab import (
    LatticeSet,
    canonical_embedding,
    choose_k_reference,
    evaluate_fft,
    explicit_map,
    gen_cube,
    image_set,
    l1_estimate,
    verify_freiman,
)
from l1lab.cdp import CdpCertificate, verify_certificate
from l1lab.errors import BudgetError, ValidationError, VerificationError
from l1lab.freiman import (
    FreimanMap,
    bound_3d_via_embedding,
    degree_counts,
    lift_to_3d,
    mark_verified,
    recenter_to_box,
    required_degree,
)


def verified_map(extents, k):
    m = canonical_embedding(extents, k)
    return mark_verified(m, verify_freiman(m, k))


# --- embeddings ---------------------------------------------------------------

def test_canonical_embedding_basics():
    m = canonical_embedding((3, 3, 3), 2)
    assert m.base == 5
    assert m.apply((1, 2, 0)) == 11
    assert m.apply((0, 0, 0)) == 0
    assert m.verified == "analytic"


def test_canonical_k1_is_plain_bijection():
    m = canonical_embedding((4, 2, 2), 1)
    assert m.base == 4
    imgs = sorted(m.forward().values())
    assert len(imgs) == 16 and len(set(imgs)) == 16


def test_brute_force_agrees_with_analytic():
    # same pairs, stripped of the canonical tag: the exhaustive path must
    # reach the same verdict as the containment argument
    m = canonical_embedding((3, 3, 3), 2)
    ex = explicit_map(m.pairs, k=2)
    chk = verify_freiman(ex, 2)
    assert chk.passed and chk.method == "brute"
    assert chk.checked > 0


def test_canonical_overflow_refused():
    # 2^20 * 1 * 2 points fits the set budget, but the top image coordinate
    # is roughly B^2 ~ 2^42, past the magnitude bound.
    with pytest.raises(ValidationError):
        canonical_embedding((2 ** 20, 1, 2), 2)


def test_verify_identity_style_maps():
    A = LatticeSet(1, ((0,), (1,), (3,)))
    lifted = lift_to_3d(A)
    ident = explicit_map([(p, p[0]) for p in lifted.points], k=2)
    assert verify_freiman(ident, 2).passed

    doubled = explicit_map([(p, 2 * p[0]) for p in lifted.points], k=2)
    assert verify_freiman(doubled, 2).passed


def test_verify_catches_carry_collision():
    m = canonical_embedding((2, 2, 1), 2, B_override=2)
    chk = verify_freiman(m, 2)
    assert not chk.passed
    w = chk.witness
    assert w["direction"] == "backward"
    # image sums collide while the vector sums differ
    fwd = m.forward()
    lhs = [tuple(v) for v in w["lhs"]]
    rhs = [tuple(v) for v in w["rhs"]]
    sums = lambda vs: tuple(sum(c) for c in zip(*vs))
    assert sums(lhs) != sums(rhs)
    assert sum(fwd[p] for p in lhs) == sum(fwd[p] for p in rhs)


def test_verify_budget_refusal():
    m = canonical_embedding((4, 4, 4), 3)
    ex = explicit_map(m.pairs, k=3)
    with pytest.raises(BudgetError):
        verify_freiman(ex, 3, budget=10 ** 4)


def test_random_tuple_transfer_property():
    # canonical maps must transfer sum equalities in both directions
    m = canonical_embedding((3, 4, 2), 5)
    fwd = m.forward()
    rng = random.Random(31)
    dom = list(fwd)
    k = 5
    for _ in range(2000):
        left = [rng.choice(dom) for _ in range(k)]
        right = [rng.choice(dom) for _ in range(k)]
        vec_eq = tuple(
            sum(p[i] for p in left) for i in range(3)
        ) == tuple(sum(p[i] for p in right) for i in range(3))
        img_eq = sum(fwd[p] for p in left) == sum(fwd[p] for p in right)
        assert vec_eq == img_eq


def test_image_set_and_domain_guard():
    m = verified_map((3, 3, 3), 2)
    box = LatticeSet(3, tuple(m.forward()))
    img = image_set(m, box)
    assert img.dim == 1 and len(img.points) == 27

    with pytest.raises(ValidationError):
        image_set(m, LatticeSet(3, ((9, 9, 9),)))


def test_map_json_round_trip():
    m = verified_map((3, 3, 3), 62)
    d = json.loads(json.dumps(m.to_dict()))
    back = FreimanMap.from_dict(d)
    assert back.base == m.base and back.degree == m.degree
    assert back.pairs == m.pairs
    assert back.verified == m.verified


# --- degree bookkeeping ---------------------------------------------------------

def test_degree_counts_formula():
    c = degree_counts(1, 1, 1)
    assert c == {"alpha": 2, "beta": 2, "l": 2, "gamma": 12, "delta": 62}
    assert required_degree(1, 1, 1) == 62
    # delta = 2*l*gamma + l + gamma with the recorded l, gamma
    c2 = degree_counts(2, 1, 1)
    assert c2["delta"] == 2 * c2["l"] * c2["gamma"] + c2["l"] + c2["gamma"]


def test_choose_k_reference_values():
    assert choose_k_reference(3, 3, 3) == 83
    assert choose_k_reference(2, 2, 2) == 21
    assert choose_k_reference(4, 3, 3) <= choose_k_reference(5, 3, 3)
    with pytest.raises(ValidationError):
        choose_k_reference(1, 3, 3)


# --- the three-level pipeline ----------------------------------------------------

@functools.lru_cache(maxsize=1)
def cube_cert():
    A0, extents, _ = recenter_to_box(gen_cube(3, 3))
    fmap = verified_map(extents, 62)
    return bound_3d_via_embedding(A0, fmap), fmap, A0


def test_pipeline_cube_completes_and_verifies():
    cert, fmap, A0 = cube_cert()
    assert cert.kind == "cdp3d"
    assert cert.certified_bound > 0
    assert cert.context["delta"] == 62
    assert cert.context["grid_exact"] is True
    rep = verify_certificate(cert)
    assert rep.ok, [e.detail for e in rep.entries if not e.passed]


def test_pipeline_certified_below_measured_image_norm():
    cert, fmap, A0 = cube_cert()
    theta = image_set(fmap, A0)
    est = l1_estimate(theta, target_rel_err=0.2, max_samples=2 ** 22)
    total = cert.floor_budget + cert.measured_budget
    assert cert.certified_bound - total <= est.value + est.error_bound


def test_pipeline_single_row_degenerates():
    A = LatticeSet(3, tuple((x, 0, 0) for x in range(5)))
    A0, extents, _ = recenter_to_box(A)
    cert = bound_3d_via_embedding(A0, verified_map(extents, 62))
    assert cert.certified_bound == 1.0
    assert verify_certificate(cert).ok


def test_pipeline_degree_refusal():
    A0, extents, _ = recenter_to_box(gen_cube(3, 3))
    fmap = verified_map((3, 3, 3), 61)
    with pytest.raises(ValidationError, match="61"):
        bound_3d_via_embedding(A0, fmap)


def test_pipeline_requires_verified_map():
    A0, extents, _ = recenter_to_box(gen_cube(3, 3))
    from dataclasses import replace

    unverified = replace(canonical_embedding(extents, 62), verified="unverified")
    with pytest.raises(ValidationError):
        bound_3d_via_embedding(A0, unverified)


def test_level1_product_spectrum_on_predicted_support():
    # audit one level-1 row tree numerically: its spectrum must vanish off
    # the sumset (alpha+1)*theta(row) - alpha*theta(row)
    cert, fmap, A0 = cube_cert()
    lvl1 = cert.context["levels"]["level1"]
    c1 = CdpCertificate.from_dict(lvl1[0])
    own = set(c1.labels)
    alpha = 2 * c1.t
    allowed = set(own)
    for _ in range(alpha):
        allowed = {a + b for a in allowed for b in own} | {
            a - b for a in allowed for b in own
        }
    G = 1 << 14
    base_vals = [b.sample((G,)).samples for b in c1.bases]
    g = tr.evaluate(c1.root, base_vals)
    spec = np.fft.fft(g) / G
    hot = {
        int(i) if i < G // 2 else int(i) - G
        for i in np.nonzero(np.abs(spec) > 1e-8)[0]
    }
    assert hot <= allowed


def test_pipeline_certificate_round_trip():
    cert, _, _ = cube_cert()
    d = json.loads(json.dumps(cert.to_dict()))
    back = CdpCertificate.from_dict(d)
    rep = verify_certificate(back)
    assert rep.ok, [e.detail for e in rep.entries if not e.passed]


def test_pipeline_tamper_detection():
    cert, _, _ = cube_cert()
    d = json.loads(json.dumps(cert.to_dict()))
    d["certified_bound"] = d["certified_bound"] * 2 + 1
    rep = verify_certificate(CdpCertificate.from_dict(d))
    assert not rep.ok

    d2 = json.loads(json.dumps(cert.to_dict()))
    d2["context"]["delta"] = 5
    rep2 = verify_certificate(CdpCertificate.from_dict(d2))
    assert not rep2.ok


def test_recenter_to_box():
    A = LatticeSet(3, ((5, -1, 7), (6, 3, 7)))
    A0, extents, shift = recenter_to_box(A)
    assert extents == (2, 5, 1)
    assert shift == (-5, 1, -7)
    assert all(c >= 0 for p in A0.points for c in p)
