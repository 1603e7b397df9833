"""Degree-k sum-preserving embeddings of 3-D boxes into Z, and the
three-level pipeline that turns them into certified 1-D lower bounds.

The canonical embedding theta(x,y,z) = x + B*y + B^2*z with B = k*(N-1)+1
keeps k-fold coordinate sums inside one base-B digit each, so equality of
k-fold sums transfers exactly in both directions.  The pipeline decomposes a
3-D set into planar slices and rows, runs the iteration engine per row
against the embedded target, hands each run's strongest certified test
function up as a base of the per-slice runs, and those up to one final run.
Labels at the upper levels are the integer row/slice coordinates, so all
exclusion arithmetic stays in Z; cross-line orthogonality is audited both
exactly (sumset support checks) and numerically (pairing residuals).
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import tree as tr
from .cdp import (
    CdpCertificate,
    CheckEntry,
    VerifyReport,
    cdp_iterate,
    choose_t,
    plan_combination,
    run_test_function,
    tree_product_degree,
    verify_certificate,
)
from .config import LIMITS
from .errors import BudgetError, ValidationError, VerificationError
from .grid import check_sizes, compensated_sum, evaluate_fft, next_pow2
from .lattice import LatticeSet, planar_slices, rows
from .testfns import BaseTestFn, ExponentialPayload, TreePayload, exponential_basis

Point3 = tuple[int, int, int]


# ---------------------------------------------------------------------------
# maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FreimanMap:
    """A bijection from a 3-D domain onto integers, tagged with the degree
    up to which sum equality is promised to transfer."""

    kind: str  # "canonical" | "explicit"
    degree: int
    base: int | None
    extents: tuple[int, int, int] | None
    domain: LatticeSet
    image: LatticeSet
    pairs: tuple[tuple[Point3, int], ...]
    verified: str  # "analytic" | "brute:<k>" | "unverified"

    def forward(self) -> dict[Point3, int]:
        return dict(self.pairs)

    def inverse(self) -> dict[int, Point3]:
        return {v: p for p, v in self.pairs}

    def apply(self, p: Point3) -> int:
        fwd = self.forward()
        if tuple(p) not in fwd:
            raise ValidationError(f"point {p!r} outside the map's domain")
        return fwd[tuple(p)]

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "B": self.base,
            "k": self.degree,
            "extents": None if self.extents is None else list(self.extents),
            "verified": self.verified,
        }
        if self.kind != "canonical":
            out["pairs"] = [[list(p), v] for p, v in self.pairs]
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "FreimanMap":
        if obj["kind"] == "canonical":
            m = canonical_embedding(
                tuple(int(e) for e in obj["extents"]),
                int(obj["k"]),
                B_override=int(obj["B"]) if obj.get("B") is not None else None,
            )
            return replace(m, verified=str(obj.get("verified", m.verified)))
        pairs = tuple((tuple(int(c) for c in p), int(v)) for p, v in obj["pairs"])
        m = explicit_map(pairs, int(obj["k"]))
        return replace(m, verified=str(obj.get("verified", "unverified")))


def canonical_embedding(
    extents: tuple[int, int, int], k: int, B_override: int | None = None
) -> FreimanMap:
    """theta(x,y,z) = x + B*y + B^2*z on the zero-based box of given extents.

    B = k*(max extent - 1) + 1 keeps every k-fold digit sum below the next
    digit, which is the whole argument; that containment is checked per axis
    and recorded as the analytic verification.
    """
    ext = tuple(int(e) for e in extents)
    if len(ext) != 3 or any(e < 1 for e in ext):
        raise ValidationError("extents must be three integers >= 1")
    if k < 1:
        raise ValidationError("degree must be >= 1")
    count = ext[0] * ext[1] * ext[2]
    if count > LIMITS.set_points_budget:
        raise BudgetError(f"domain of {count} points exceeds the set budget")
    B = int(B_override) if B_override is not None else k * (max(ext) - 1) + 1
    if B < 1:
        raise ValidationError("base must be >= 1")
    top = (ext[0] - 1) + B * (ext[1] - 1) + B * B * (ext[2] - 1)
    if top > LIMITS.coord_bound:
        raise ValidationError(
            f"image coordinate {top} would exceed the magnitude bound {LIMITS.coord_bound}"
        )
    pairs = tuple(
        ((x, y, z), x + B * y + B * B * z)
        for z in range(ext[2])
        for y in range(ext[1])
        for x in range(ext[0])
    )
    analytic = all(k * (e - 1) <= B - 1 for e in ext)
    return FreimanMap(
        kind="canonical",
        degree=k,
        base=B,
        extents=ext,
        domain=LatticeSet.of([p for p, _ in pairs], dim=3),
        image=LatticeSet.of([v for _, v in pairs], dim=1),
        pairs=pairs,
        verified="analytic" if analytic else "unverified",
    )


def explicit_map(pairs, k: int) -> FreimanMap:
    """Wrap an explicit bijection table as a degree-k candidate (unverified)."""
    tab = tuple((tuple(int(c) for c in p), int(v)) for p, v in pairs)
    if len({p for p, _ in tab}) != len(tab) or len({v for _, v in tab}) != len(tab):
        raise ValidationError("pairs must be a bijection table")
    return FreimanMap(
        kind="explicit",
        degree=int(k),
        base=None,
        extents=None,
        domain=LatticeSet.of([p for p, _ in tab], dim=3),
        image=LatticeSet.of([v for _, v in tab], dim=1),
        pairs=tab,
        verified="unverified",
    )


def lift_to_3d(A: LatticeSet) -> LatticeSet:
    """View a 1-D set inside Z^3 as {(v, 0, 0)}."""
    if A.dim != 1:
        raise ValidationError("expected a 1-D set")
    return LatticeSet.of([(v, 0, 0) for v in A.values()], dim=3)


def recenter_to_box(A: LatticeSet) -> tuple[LatticeSet, tuple[int, int, int], Point3]:
    """Translate a 3-D set to zero-based coordinates; returns the moved set,
    the bounding-box extents, and the shift applied."""
    if A.dim != 3:
        raise ValidationError("expected a 3-D set")
    coords = A.coords_array()
    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    shift = tuple(int(-v) for v in lo)
    ext = tuple(int(h - l) + 1 for l, h in zip(lo, hi))
    return A.translate(shift), ext, shift


@dataclass(frozen=True)
class FreimanCheck:
    passed: bool
    method: str
    k: int
    checked: int
    witness: dict | None

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "method": self.method,
            "k": self.k,
            "checked": self.checked,
            "witness": self.witness,
        }


def verify_freiman(
    fmap: FreimanMap, k: int | None = None, budget: int = 10 ** 8
) -> FreimanCheck:
    """Check that equality of k-fold sums transfers both ways.

    Canonical maps with the digit-containment property short-circuit to the
    analytic path at any size.  Otherwise every pair of k-tuples is covered
    by hashing tuple sums on both sides; the tuple-pair count |A|^(2k) must
    fit the budget.
    """
    kk = int(k if k is not None else fmap.degree)
    if kk < 1:
        raise ValidationError("degree must be >= 1")
    if fmap.kind == "canonical" and fmap.extents is not None and fmap.base is not None:
        if all(kk * (e - 1) <= fmap.base - 1 for e in fmap.extents):
            return FreimanCheck(True, "analytic", kk, 0, None)
    n = fmap.domain.size
    if n ** (2 * kk) > budget:
        raise BudgetError(
            f"brute-force verification needs {n}^{2 * kk} pair checks, over the budget {budget}"
        )
    fwd = fmap.forward()
    pts = list(fwd)
    by_vec: dict[Point3, tuple[int, tuple]] = {}
    by_img: dict[int, tuple[Point3, tuple]] = {}
    checked = 0
    for tup in itertools.product(pts, repeat=kk):
        checked += 1
        vec = tuple(sum(p[i] for p in tup) for i in range(3))
        img = sum(fwd[p] for p in tup)
        prev = by_vec.get(vec)
        if prev is None:
            by_vec[vec] = (img, tup)
        elif prev[0] != img:
            return FreimanCheck(
                False,
                "brute",
                kk,
                checked,
                {
                    "direction": "forward",
                    "lhs": [list(p) for p in prev[1]],
                    "rhs": [list(p) for p in tup],
                    "images": [prev[0], img],
                },
            )
        prev_i = by_img.get(img)
        if prev_i is None:
            by_img[img] = (vec, tup)
        elif prev_i[0] != vec:
            return FreimanCheck(
                False,
                "brute",
                kk,
                checked,
                {
                    "direction": "backward",
                    "lhs": [list(p) for p in prev_i[1]],
                    "rhs": [list(p) for p in tup],
                    "image_sum": img,
                },
            )
    return FreimanCheck(True, "brute", kk, checked, None)


def mark_verified(fmap: FreimanMap, check: FreimanCheck) -> FreimanMap:
    if not check.passed:
        return fmap
    tag = "analytic" if check.method == "analytic" else f"brute:{check.k}"
    return replace(fmap, verified=tag)


def image_set(fmap: FreimanMap, A: LatticeSet) -> LatticeSet:
    if A.dim != 3:
        raise ValidationError("expected a 3-D set")
    fwd = fmap.forward()
    vals = []
    for p in A.points:
        if p not in fwd:
            raise ValidationError(f"point {p!r} outside the map's domain")
        vals.append(fwd[p])
    return LatticeSet.of(vals, dim=1)


# ---------------------------------------------------------------------------
# degree bookkeeping
# ---------------------------------------------------------------------------

def degree_counts(t1: int, t2: int, t3: int) -> dict:
    """Factor-count ledger for nested runs with the given round widths."""
    alpha = 2 * t1
    beta = 2 * t2
    ell = 2 * t3
    gamma = 2 * alpha * beta + alpha + beta
    delta = 2 * ell * gamma + ell + gamma
    return {"alpha": alpha, "beta": beta, "l": ell, "gamma": gamma, "delta": delta}


def required_degree(t1: int, t2: int, t3: int) -> int:
    return degree_counts(t1, t2, t3)["delta"]


def choose_k_reference(p: int, r: int, s: int) -> int:
    """Worst-case reference degree ceil(62 ln r ln s ln p); reporting only."""
    if min(p, r, s) < 2:
        raise ValidationError("reference degree needs p, r, s >= 2")
    return int(math.ceil(62.0 * math.log(r) * math.log(s) * math.log(p)))


def _verified_degree(fmap: FreimanMap) -> int:
    if fmap.verified == "analytic":
        return fmap.degree
    if fmap.verified.startswith("brute:"):
        return int(fmap.verified.split(":", 1)[1])
    return 0


# ---------------------------------------------------------------------------
# the three-level pipeline
# ---------------------------------------------------------------------------

def _shift_to_positive(values) -> tuple[list[int], int]:
    lo = min(values)
    sigma = 1 - lo if lo < 1 else 0
    return [v + sigma for v in values], sigma


def _promote(cert: CdpCertificate, label: int) -> BaseTestFn:
    """Package a finished run's strongest test function as a base for the
    next level; its floor is the run's own analytic pairing bound."""
    node, fl = run_test_function(cert)
    if isinstance(node, tr.BaseRef):
        analytic = cert.bases[node.index].sup_analytic
    else:
        analytic = cert.sup_analytic
    return BaseTestFn(
        label=label,
        payload=TreePayload(bases=cert.bases, root=node, sup_cap=1.0),
        floor=fl,
        floor_error=0.0,
        sup_analytic=analytic,
    )


def _support_audit(
    root: tr.Node, labels: tuple[int, ...], own: set[int], target: set[int]
) -> dict:
    supp = tr.support_set(root, [{v} for v in labels])
    if supp is None:
        return {"exact": False, "contained": None, "hits": None}
    hits = supp & target
    return {"exact": True, "contained": hits <= own, "hits": len(hits)}


def bound_3d_via_embedding(
    A: LatticeSet,
    fmap: FreimanMap,
    t_override: int | None = None,
) -> CdpCertificate:
    """Rows, then slices, then one final run, all against the embedded target.

    Refuses to run when the factor-count degree delta of the planned rounds
    exceeds the map's verified degree.  The working grid is sized from the
    planned combination spectra; when that grid exceeds the sample budget the
    run continues on a smaller grid with exactness flags cleared.
    """
    if A.dim != 3:
        raise ValidationError("expected a 3-D set")
    if fmap.verified == "unverified":
        raise ValidationError("the embedding must be verified before use")

    full_image = image_set(fmap, A)
    shifted, sigma = _shift_to_positive(full_image.values())
    T_full = LatticeSet.of(shifted, dim=1)
    target_set = set(T_full.values())
    fwd = fmap.forward()

    def theta(x: int, y: int, z: int) -> int:
        return fwd[(x, y, z)] + sigma

    sl = planar_slices(A, axis=2)
    level1_plan = []  # (slice label, [(row label, embedded row labels)])
    t1_max = 1
    t2_max = 1
    for a_lab, sl_set in sl.slices:
        dec = rows(sl_set, axis=0)
        t2_max = max(t2_max, t_override if t_override is not None else choose_t(dec.r))
        per_row = []
        for (b_lab,), row1d in dec.rows:
            t1_max = max(
                t1_max, t_override if t_override is not None else choose_t(row1d.size)
            )
            e_row = tuple(
                sorted((theta(x, b_lab, a_lab) for x in row1d.values()), reverse=True)
            )
            per_row.append((b_lab, e_row))
        level1_plan.append((a_lab, per_row))
    t3 = t_override if t_override is not None else choose_t(sl.p)
    counts = degree_counts(t1_max, t2_max, t3)
    delta = counts["delta"]
    if delta > fmap.degree:
        raise ValidationError(
            f"embedding degree {fmap.degree} is below the required delta {delta}"
        )
    if _verified_degree(fmap) < delta:
        raise ValidationError(
            f"map verified only to degree {_verified_degree(fmap)}, the run needs {delta}"
        )

    # label shifts for the upper levels (exclusion arithmetic is translation
    # invariant, the engine wants positive labels)
    a_labels = [a for a, _ in level1_plan]
    _, sigma_a = _shift_to_positive(a_labels)
    b_all = [b for _, per_row in level1_plan for b, _ in per_row]
    _, sigma_b = _shift_to_positive(b_all)

    # size the grid from the planned spectra: selections depend on labels
    # only, so the whole three-level tree is known before anything is
    # sampled; single-base promotions stay inside each level's label hull
    m_f = max(abs(v) for v in target_set)
    slice_ivs = []
    for a_lab, per_row in level1_plan:
        row_ivs = []
        for b_lab, e_row in per_row:
            t1 = t_override if t_override is not None else choose_t(len(e_row))
            E_row, root1 = plan_combination(e_row, t1)
            iv1 = tr.freq_interval(root1, [(v, v) for v in E_row])
            row_ivs.append(tr.iv_union(iv1, (min(e_row), max(e_row))))
        labels2 = [b + sigma_b for b, _ in per_row]
        t2 = t_override if t_override is not None else choose_t(len(labels2))
        E2, root2 = plan_combination(labels2, t2)
        order2 = {lab: i for i, lab in enumerate(E2)}
        ordered = [None] * len(E2)
        for (b_lab, _), iv in zip(per_row, row_ivs):
            ordered[order2[b_lab + sigma_b]] = iv
        iv2 = tr.freq_interval(root2, ordered)
        for iv in row_ivs:
            iv2 = tr.iv_union(iv2, iv)
        slice_ivs.append(iv2)
    labels3 = [a + sigma_a for a in a_labels]
    E3, root3 = plan_combination(labels3, t3)
    order3 = {lab: i for i, lab in enumerate(E3)}
    ordered3 = [None] * len(E3)
    for a_lab, iv in zip(a_labels, slice_ivs):
        ordered3[order3[a_lab + sigma_a]] = iv
    iv_master = tr.freq_interval(root3, ordered3)
    for iv in slice_ivs:
        iv_master = tr.iv_union(iv_master, iv)
    m_plan = tr.iv_max_abs(iv_master)
    if m_plan is None:
        m_plan = m_f

    G = next_pow2(2 * (max(m_plan, m_f) + m_f) + 2)
    exact_mode = G <= LIMITS.samples_budget
    if not exact_mode:
        G = 1 << (LIMITS.samples_budget.bit_length() - 1)
    check_sizes((G,))
    F = evaluate_fft(T_full, (G,))
    F_conj = np.conj(F.samples)

    def cross_residual(root: tr.Node, bases, own_labels) -> float:
        own = LatticeSet.of(sorted(own_labels), dim=1)
        F_own = evaluate_fft(own, (G,))
        vals = [b.payload.sample((G,)).samples for b in bases]
        arr = tr.evaluate(root, vals)
        del vals
        full = complex(compensated_sum(arr * F_conj)) / G
        part = complex(compensated_sum(arr * np.conj(F_own.samples))) / G
        del arr
        return abs(full - part)

    def run_row(job) -> CdpCertificate:
        a_lab, b_lab, e_row = job
        bases_row = exponential_basis(LatticeSet.of(e_row, dim=1))
        return cdp_iterate(
            F,
            bases_row,
            K=1.0,
            t_override=t_override,
            target=T_full,
            context={"level": 1, "slice": a_lab, "row": b_lab},
            check_floors=exact_mode,
        )

    jobs = [
        (a_lab, b_lab, e_row)
        for a_lab, per_row in level1_plan
        for b_lab, e_row in per_row
    ]
    if LIMITS.threads > 1:
        with ThreadPoolExecutor(max_workers=LIMITS.threads) as pool:
            flat_certs = list(pool.map(run_row, jobs))
    else:
        flat_certs = [run_row(j) for j in jobs]

    audits = []
    level1_certs: list[list[CdpCertificate]] = []
    it = iter(flat_certs)
    for a_lab, per_row in level1_plan:
        certs_here = []
        for b_lab, e_row in per_row:
            cert = next(it)
            audit = _support_audit(cert.root, cert.labels, set(e_row), target_set)
            audit.update({"level": 1, "slice": a_lab, "row": b_lab})
            audit["cross_residual"] = cross_residual(cert.root, cert.bases, e_row)
            if audit["exact"] and audit["contained"] is False:
                raise VerificationError(
                    f"row ({a_lab},{b_lab}): combination spectrum leaks onto other rows"
                )
            audits.append(audit)
            certs_here.append(cert)
        level1_certs.append(certs_here)

    global_labels = tuple(sorted(target_set, reverse=True))
    g_index = {lab: i for i, lab in enumerate(global_labels)}

    level2_certs: list[CdpCertificate] = []
    slice_nodes: list[tr.Node] = []  # composed chosen trees over global refs
    for (a_lab, per_row), certs_here in zip(level1_plan, level1_certs):
        bases_slice = tuple(
            _promote(c, b_lab + sigma_b) for (b_lab, _), c in zip(per_row, certs_here)
        )
        cert2 = cdp_iterate(
            F,
            bases_slice,
            t_override=t_override,
            target=T_full,
            context={"level": 2, "slice": a_lab, "label_shift": sigma_b},
            check_floors=exact_mode,
        )
        repl = []
        own_labels: set[int] = set()
        for b in cert2.bases:
            pay = b.payload
            repl.append(
                tr.substitute(
                    pay.root, [tr.BaseRef(g_index[bb.label]) for bb in pay.bases]
                )
            )
            own_labels |= {bb.label for bb in pay.bases}
        node2, _ = run_test_function(cert2)
        comp2 = tr.substitute(node2, repl)
        audit = _support_audit(comp2, global_labels, own_labels, target_set)
        audit.update({"level": 2, "slice": a_lab})
        audit["cross_residual"] = cross_residual(
            cert2.root, cert2.bases, sorted(own_labels)
        )
        if audit["exact"] and audit["contained"] is False:
            raise VerificationError(
                f"slice {a_lab}: combination spectrum leaks onto other slices"
            )
        audits.append(audit)
        level2_certs.append(cert2)
        slice_nodes.append(comp2)

    bases_top = tuple(
        _promote(c, a_lab + sigma_a) for a_lab, c in zip(a_labels, level2_certs)
    )
    cert3 = cdp_iterate(
        F,
        bases_top,
        t_override=t_override,
        target=T_full,
        context={"level": 3, "label_shift": sigma_a},
        check_floors=exact_mode,
    )

    # master tree: each top-level base replaced by its composition down to
    # the global exponentials
    repl3 = []
    for b in cert3.bases:
        inner = []
        for bb in b.payload.bases:
            inner.append(
                tr.substitute(
                    bb.payload.root,
                    [tr.BaseRef(g_index[e.label]) for e in bb.payload.bases],
                )
            )
        repl3.append(tr.substitute(b.payload.root, inner))
    master_root = tr.substitute(cert3.root, repl3)

    global_bases = tuple(
        BaseTestFn(label=v, payload=ExponentialPayload((v,)), floor=1.0, floor_error=0.0)
        for v in global_labels
    )

    ctx = {
        "pipeline": "freiman_3d",
        "map": fmap.to_dict(),
        "k": fmap.degree,
        "B": fmap.base,
        "delta": delta,
        "degree_counts": counts,
        "image_shift": sigma,
        "label_shifts": {"slice": sigma_a, "row": sigma_b},
        "p": sl.p,
        "grid_exact": exact_mode,
        "support_audits": audits,
        "levels": {
            "level1": [c.to_dict() for certs in level1_certs for c in certs],
            "level2": [c.to_dict() for c in level2_certs],
            "level3": cert3.to_dict(),
        },
    }
    return CdpCertificate(
        kind="cdp3d",
        labels=global_labels,
        t=cert3.t,
        t_source=cert3.t_source,
        achieved=cert3.achieved,
        rounds=cert3.rounds,
        declared_floor=cert3.declared_floor,
        floor_budget=cert3.floor_budget,
        bound_formula_value=cert3.bound_formula_value,
        certified_bound=cert3.certified_bound,
        measured_re=cert3.measured_re,
        measured_im=cert3.measured_im,
        measured_budget=cert3.measured_budget,
        measured_exact=cert3.measured_exact,
        sup_sampled=cert3.sup_sampled,
        sup_analytic=cert3.sup_analytic,
        sup_domain_certified=cert3.sup_domain_certified,
        grid=(G,),
        exact_axes=cert3.exact_axes,
        tree_degree=tree_product_degree(master_root),
        bases=global_bases,
        root=master_root,
        target_points=T_full.points,
        target_dim=1,
        context=ctx,
    )


def verify_certificate_3d(cert: CdpCertificate, grid_factor: int = 2) -> VerifyReport:
    """Replay of a pipeline certificate: per-level replays, floor linkage,
    composition equality, degree arithmetic, support audits, and the final
    sup and pairing of the master tree."""
    entries: list[CheckEntry] = []

    def add(name: str, passed: bool, detail: str) -> None:
        entries.append(CheckEntry(name=name, passed=bool(passed), detail=detail))

    ctx = cert.context
    counts = ctx.get("degree_counts", {})
    delta = ctx.get("delta")
    ok_delta = bool(
        counts
        and delta == 2 * counts["l"] * counts["gamma"] + counts["l"] + counts["gamma"]
        and delta <= ctx.get("k", -1)
    )
    add("degree", ok_delta, f"delta {delta} against map degree {ctx.get('k')}")

    mp = ctx.get("map", {})
    if mp.get("kind") == "canonical" and mp.get("B") is not None:
        ext = mp.get("extents") or []
        b_ok = all(mp["k"] * (e - 1) <= mp["B"] - 1 for e in ext)
        add("embedding", b_ok, f"base {mp['B']} covers degree-{mp['k']} digit sums")

    levels = ctx.get("levels", {})
    try:
        lvl1 = [CdpCertificate.from_dict(o) for o in levels.get("level1", [])]
        lvl2 = [CdpCertificate.from_dict(o) for o in levels.get("level2", [])]
        lvl3 = CdpCertificate.from_dict(levels["level3"])
    except (KeyError, ValidationError) as exc:
        add("levels", False, f"nested certificates unreadable: {exc}")
        return VerifyReport(entries=tuple(entries))

    try:
        F = evaluate_fft(LatticeSet(cert.target_dim, cert.target_points), cert.grid)
    except (ValidationError, BudgetError) as exc:
        add("target", False, f"cannot rebuild the target: {exc}")
        return VerifyReport(entries=tuple(entries))

    all_ok = True
    worst = "all nested replays passed"
    for c in lvl1 + lvl2 + [lvl3]:
        rep = verify_certificate(c, F=F, grid_factor=grid_factor)
        if not rep.ok:
            all_ok = False
            bad = [e for e in rep.entries if not e.passed][0]
            worst = f"level {c.context.get('level')}: {bad.name}: {bad.detail}"
            break
    add("nested", all_ok, worst)

    shift_a = ctx.get("label_shifts", {}).get("slice", 0)
    shift_b = ctx.get("label_shifts", {}).get("row", 0)
    g_index = {lab: i for i, lab in enumerate(cert.labels)}
    target = set(cert.labels)
    by_key = {(c.context["slice"], c.context["row"]): c for c in lvl1}

    link_ok = True
    link_msg = "promoted floors match the runs that produced them"
    supp_ok = True
    supp_msg = "composed spectra stay on their own lines"
    comp_ok = True
    comp_msg = "master tree recomposed"
    try:
        for c1 in lvl1:
            supp = tr.support_set(c1.root, [{v} for v in c1.labels])
            if supp is None:
                supp_msg = "support too large for the exact audit; skipped"
            elif not (supp & target) <= set(c1.labels):
                supp_ok = False
                supp_msg = f"row {c1.context.get('row')} leaks onto other rows"

        for c2 in lvl2:
            s_lab = c2.context["slice"]
            repl = []
            own: set[int] = set()
            for b in c2.bases:
                pay = b.payload
                c1 = by_key.get((s_lab, b.label - shift_b))
                if c1 is None or not isinstance(pay, TreePayload):
                    raise VerificationError(
                        f"slice {s_lab}: no level-1 run matches base {b.label}"
                    )
                node, fl = run_test_function(c1)
                if not tr.tree_equal(node, pay.root):
                    link_ok = False
                    link_msg = f"slice {s_lab}: base {b.label} tree differs from its run"
                if abs(fl - b.floor) > 1e-12 or b.floor_error != 0.0:
                    link_ok = False
                    link_msg = (
                        f"slice {s_lab}: base {b.label} floor {b.floor} vs replayed {fl}"
                    )
                if tuple(bb.label for bb in pay.bases) != c1.labels:
                    link_ok = False
                    link_msg = f"slice {s_lab}: base {b.label} label order drifted"
                repl.append(
                    tr.substitute(pay.root, [tr.BaseRef(g_index[v]) for v in c1.labels])
                )
                own |= set(c1.labels)
            node2, _ = run_test_function(c2)
            comp2 = tr.substitute(node2, repl)
            supp = tr.support_set(comp2, [{v} for v in cert.labels])
            if supp is None:
                supp_msg = "support too large for the exact audit; skipped"
            elif not (supp & target) <= own:
                supp_ok = False
                supp_msg = f"slice {s_lab} leaks onto other slices"

        repl3 = []
        for b in lvl3.bases:
            s_lab = b.label - shift_a
            c2 = next((c for c in lvl2 if c.context["slice"] == s_lab), None)
            if c2 is None or not isinstance(b.payload, TreePayload):
                raise VerificationError(f"no level-2 run matches top base {b.label}")
            node, fl = run_test_function(c2)
            if not tr.tree_equal(node, b.payload.root):
                link_ok = False
                link_msg = f"top base {b.label} tree differs from its run"
            if abs(fl - b.floor) > 1e-12 or b.floor_error != 0.0:
                link_ok = False
                link_msg = f"top base {b.label} floor {b.floor} vs replayed {fl}"
            inner = []
            for bb in b.payload.bases:
                inner.append(
                    tr.substitute(
                        bb.payload.root,
                        [tr.BaseRef(g_index[e.label]) for e in bb.payload.bases],
                    )
                )
            repl3.append(tr.substitute(b.payload.root, inner))
        rebuilt = tr.substitute(lvl3.root, repl3)
        comp_ok = tr.tree_equal(rebuilt, cert.root)
        if not comp_ok:
            comp_msg = "recomposed master differs from the stored tree"
    except (KeyError, VerificationError, ValidationError) as exc:
        comp_ok = False
        comp_msg = f"recomposition failed: {exc}"

    add("linkage", link_ok, link_msg)
    add("support", supp_ok, supp_msg)
    add("composition", comp_ok, comp_msg)

    try:
        vals = [b.payload.sample(cert.grid).samples for b in cert.bases]
        g = tr.evaluate(cert.root, vals)
        del vals
        total = int(np.prod(cert.grid))
        val = complex(compensated_sum(g * np.conj(F.samples))) / total
        sup_here = float(np.abs(g).max())
        del g
        drift = abs(val.real - cert.measured_re) + abs(val.imag - cert.measured_im)
        add(
            "measured",
            drift <= 1e-7 * max(1.0, abs(cert.measured_re)),
            f"drift {drift:.3g}",
        )
        limit = 1.0 if cert.sup_analytic else max(1.0, cert.sup_domain_certified or 1.0)
        add("sup", sup_here <= limit + 1e-9, f"master sup {sup_here:.12g}")
    except (ValidationError, BudgetError, MemoryError) as exc:
        add("measured", False, f"master replay failed: {exc}")

    ok_bound = cert.certified_bound == lvl3.certified_bound
    add("bound", ok_bound, "certified bound equals the final-level bound")

    return VerifyReport(entries=tuple(entries))
