"""Iteration engine for certified L1 lower bounds.

The pieces, bottom up:

* the unit-disc inequality on the recursion multiplier (pichorides_lhs), plus
  a rigorous grid certification of the same maximum for small round widths;
* greedy label selection under the shift-exclusion rule, with exhaustive
  re-verification of every accepted tuple;
* the g recursion itself, which combines unit-sup base test functions into a
  new one without leaving the unit ball, while a ledger of inner products
  against the target accumulates the certified floor;
* replayable certificates carrying the full combination tree, all selection
  data, measured values and error budgets.

Soundness splits cleanly: the certified bound rests only on analytic facts
(|Phi| <= 1, pairing floors with explicit quadrature budgets, exclusion
arithmetic on integer labels, and the multiplier maximum), while grid
measurements are diagnostics with their own honest budgets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import tree as tr
from .config import LIMITS
from .errors import BudgetError, ValidationError, VerificationError
from .grid import (
    GridFunction,
    check_sizes,
    compensated_sum,
    evaluate_fft,
    inner_product,
    next_pow2,
)
from .lattice import LatticeSet, rows, translate_to_positive
from .testfns import BaseTestFn, exponential_basis, floor_check, row_sign_basis


# ---------------------------------------------------------------------------
# the unit-disc inequality
# ---------------------------------------------------------------------------

def pichorides_lhs(t: float, P: float, Q: float) -> float:
    """|1 - 1/t - z/t^2 + z^2/t^4| + (t+2P)^(1/2)/(4 t^(3/2)), z = P+iQ.

    Defined for t >= 100 with t + 2P >= 0 and P^2 + Q^2 <= t^4/4; the value
    never exceeds 1 there.
    """
    if t < 100:
        raise ValidationError(f"t must be >= 100, got {t}")
    if t + 2.0 * P < 0:
        raise ValidationError(f"t + 2P = {t + 2 * P} is negative")
    if P * P + Q * Q > (t ** 4) / 4.0:
        raise ValidationError("P^2 + Q^2 exceeds t^4/4")
    z = complex(P, Q)
    w = z / (t * t)
    main = abs(1.0 - 1.0 / t - w + w * w)
    root = math.sqrt(t + 2.0 * P) / (4.0 * t ** 1.5)
    return main + root


@dataclass(frozen=True)
class DomainMax:
    t: int
    sampled: float
    certified: float

    @property
    def contraction(self) -> bool:
        return self.certified <= 1.0


@lru_cache(maxsize=None)
def pichorides_domain_max(t: int, cells: int = 1024) -> DomainMax:
    """Rigorous maximum of the recursion multiplier over its reachable domain.

    In w = z/t^2 coordinates the reachable set is |w| <= (t-1)/(2t) (at most
    t(t-1)/2 pairwise products of unit-sup factors) intersected with
    Re w >= -1/(2t).  The polynomial part is 1+2|w|-Lipschitz, and the root
    term is monotone in Re w, so evaluating centers with a Lipschitz margin
    and the root at each cell's right edge upper-bounds every cell.
    """
    if t < 1:
        raise ValidationError("round width must be >= 1")
    rad = (t - 1) / (2.0 * t)
    inv = 1.0 / (4.0 * t)

    def value(wr: float, wi: float) -> float:
        w = complex(wr, wi)
        main = abs(1.0 - 1.0 / t - w + w * w)
        root = inv * math.sqrt(max(1.0 + 2.0 * t * wr, 0.0))
        return main + root

    if rad == 0.0:
        v = value(0.0, 0.0)
        return DomainMax(t=t, sampled=v, certified=v)

    lo_re = -1.0 / (2.0 * t)
    re_edges = np.linspace(lo_re, rad, cells + 1)
    im_edges = np.linspace(-rad, rad, cells + 1)
    rc = (re_edges[:-1] + re_edges[1:]) / 2.0
    ic = (im_edges[:-1] + im_edges[1:]) / 2.0
    half_re = (re_edges[1] - re_edges[0]) / 2.0
    half_im = (im_edges[1] - im_edges[0]) / 2.0
    halfdiag = math.hypot(half_re, half_im)

    W = rc[:, None] + 1j * ic[None, :]
    main = np.abs(1.0 - 1.0 / t - W + W * W)
    dist = np.abs(W)
    root_center = inv * np.sqrt(np.maximum(1.0 + 2.0 * t * W.real, 0.0))
    root_edge = inv * np.sqrt(np.maximum(1.0 + 2.0 * t * (W.real + half_re), 0.0))

    inside = dist <= rad
    sampled = float(np.max(np.where(inside, main + root_center, 0.0)))

    touches = dist <= rad + halfdiag
    lip = 1.0 + 2.0 * (dist + halfdiag)
    cert_cells = main + lip * halfdiag + root_edge
    certified = float(np.max(np.where(touches, cert_cells, 0.0)))
    return DomainMax(t=t, sampled=sampled, certified=certified)


def sup_contraction_certified(t: int) -> tuple[bool, float | None]:
    """Whether one recursion round provably keeps the sup norm at <= 1."""
    if t >= 100:
        return True, None
    dm = pichorides_domain_max(t)
    return dm.contraction, dm.certified


def choose_t(R: int) -> int:
    """Round width from the label count; guarded to >= 1 at desk scale.

    The formula floor(ln R / (10 ln ln R)) only leaves the guard around
    R ~ e^20; the adaptive stop-on-failure loop is the operative control.
    """
    if R < 1:
        raise ValidationError("label count must be >= 1")
    if R == 1:
        return 1
    inner = math.log(R)
    denom = 10.0 * math.log(inner)  # negative for R < 15, never zero at integers
    if denom <= 0.0:
        return 1
    return max(1, int(math.floor(inner / denom)))


# ---------------------------------------------------------------------------
# label selection
# ---------------------------------------------------------------------------

@dataclass
class SelectionState:
    """Mutable bookkeeping for the selection rounds over a label set."""

    E: tuple[int, ...]
    t: int
    S: set[int]
    history: list[tuple[tuple[int, ...], frozenset[int]]] = field(default_factory=list)

    @classmethod
    def start(cls, labels, t: int) -> "SelectionState":
        E = tuple(sorted(set(int(v) for v in labels), reverse=True))
        if len(E) != len(tuple(labels)):
            raise ValidationError("labels must be distinct")
        if any(v < 1 for v in E):
            raise ValidationError("labels must be positive integers")
        if t < 1:
            raise ValidationError("round width must be >= 1")
        return cls(E=E, t=t, S={E[0]}, history=[])

    @property
    def iteration(self) -> int:
        return len(self.history) + 1

    def count_above(self, p: int) -> int:
        return sum(1 for e in self.E if e > p)

    def sum_N(self) -> int:
        return sum(self.count_above(p) for p in self.S)


def _exclusion_witness(
    S, ms: list[int], Eset: set[int]
) -> tuple[int, int, int, int, int] | None:
    """First configuration p+(m_a-m_b)+(m_g-m_d) landing in E, or None.

    Indices run 1 <= a <= b <= k and 1 <= g < d <= k over the accepted list.
    """
    k = len(ms)
    d1 = []
    for a in range(k):
        for b in range(a, k):
            d1.append((ms[a] - ms[b], a, b))
    d2 = []
    for g in range(k):
        for d in range(g + 1, k):
            d2.append((ms[g] - ms[d], g, d))
    if not d2:
        return None
    for p in S:
        for v1, a, b in d1:
            base = p + v1
            for v2, g, d in d2:
                if base + v2 in Eset:
                    return (p, a + 1, b + 1, g + 1, d + 1)
    return None


@dataclass(frozen=True)
class Selection:
    T: tuple[int, ...]
    q_indices: tuple[int, ...]
    sum_N_before: int
    advisory_ok: bool


def davenport_select(state: SelectionState) -> Selection | None:
    """Greedy descending scan; accept while the exclusion stays clean.

    Returns None (Failure) when fewer than t labels can be accepted.  The
    index-bound comparison q(a) <= a^4 * sum N(p) is reported as an advisory
    flag only; the greedy witness need not match the existence argument.
    """
    Eset = set(state.E)
    ms: list[int] = []
    qs: list[int] = []
    for pos, cand in enumerate(state.E, start=1):
        trial = ms + [cand]
        if _exclusion_witness(state.S, trial, Eset) is None:
            ms.append(cand)
            qs.append(pos)
            if len(ms) == state.t:
                break
    if len(ms) < state.t:
        return None
    sn = state.sum_N()
    advisory = all(q <= (a ** 4) * sn for a, q in enumerate(qs, start=1))
    return Selection(
        T=tuple(ms), q_indices=tuple(qs), sum_N_before=sn, advisory_ok=advisory
    )


def generate_U(S, T: tuple[int, ...]) -> frozenset[int]:
    """All shift configurations added to the exclusion set by one round."""
    k = len(T)
    d1 = {T[a] - T[b] for a in range(k) for b in range(a, k)}
    d2 = {T[g] - T[d] for g in range(k) for d in range(g + 1, k)}
    return frozenset(p + v1 + v2 for p in S for v1 in d1 for v2 in d2)


def apply_round(state: SelectionState, T: tuple[int, ...]) -> frozenset[int]:
    U = generate_U(state.S, T)
    state.history.append((T, U))
    state.S |= set(T)
    state.S |= U
    return U


def verify_selection(
    E, S, T: tuple[int, ...]
) -> tuple[bool, str]:
    """Exhaustive post-hoc re-verification of one accepted tuple."""
    Eset = set(E)
    if len(set(T)) != len(T):
        return False, "selected labels are not distinct"
    if any(m not in Eset for m in T):
        return False, "selected label outside the label set"
    w = _exclusion_witness(S, list(T), Eset)
    if w is not None:
        p, a, b, g, d = w
        return False, (
            f"configuration p={p} + (m{a}-m{b}) + (m{g}-m{d}) lands in the label set"
        )
    return True, "ok"


@dataclass(frozen=True)
class FeasibilityReport:
    sum_N: int
    R: int
    t: int
    iteration: int
    condition_ok: bool
    induction_bound: int
    within_induction: bool
    predicted_max_rounds: int

    def to_dict(self) -> dict:
        return {
            "sum_N": self.sum_N,
            "R": self.R,
            "t": self.t,
            "iteration": self.iteration,
            "condition_ok": self.condition_ok,
            "induction_bound": self.induction_bound,
            "within_induction": self.within_induction,
            "predicted_max_rounds": self.predicted_max_rounds,
        }


def feasibility_gauge(state: SelectionState) -> FeasibilityReport:
    """Exact running exclusion mass against the sufficient-condition ledger."""
    sn = state.sum_N()
    R = len(state.E)
    t = state.t
    i = state.iteration
    bound = t ** (5 * i)
    if t == 1:
        predicted = 1
    else:
        predicted = min(t, int((math.log(R, t) + 1) // 5))
    return FeasibilityReport(
        sum_N=sn,
        R=R,
        t=t,
        iteration=i,
        condition_ok=(t ** 4) * sn <= R,
        induction_bound=bound,
        within_induction=sn <= bound,
        predicted_max_rounds=predicted,
    )


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RoundRecord:
    index: int
    T: tuple[int, ...]
    q_indices: tuple[int, ...]
    advisory_ok: bool
    sum_N_before: int
    u_size: int
    residual_middle: float
    ledger_before: float
    ledger_after: float
    predicted_after: float
    imag_after: float
    min_t_plus_2P: float
    max_abs_M: float

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "T": list(self.T),
            "q_indices": list(self.q_indices),
            "advisory_ok": self.advisory_ok,
            "sum_N_before": self.sum_N_before,
            "u_size": self.u_size,
            "residual_middle": self.residual_middle,
            "ledger_before": self.ledger_before,
            "ledger_after": self.ledger_after,
            "predicted_after": self.predicted_after,
            "imag_after": self.imag_after,
            "min_t_plus_2P": self.min_t_plus_2P,
            "max_abs_M": self.max_abs_M,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "RoundRecord":
        return cls(
            index=int(obj["index"]),
            T=tuple(int(v) for v in obj["T"]),
            q_indices=tuple(int(v) for v in obj["q_indices"]),
            advisory_ok=bool(obj["advisory_ok"]),
            sum_N_before=int(obj["sum_N_before"]),
            u_size=int(obj["u_size"]),
            residual_middle=float(obj["residual_middle"]),
            ledger_before=float(obj["ledger_before"]),
            ledger_after=float(obj["ledger_after"]),
            predicted_after=float(obj["predicted_after"]),
            imag_after=float(obj["imag_after"]),
            min_t_plus_2P=float(obj["min_t_plus_2P"]),
            max_abs_M=float(obj["max_abs_M"]),
        )


@dataclass(frozen=True)
class CdpCertificate:
    kind: str
    labels: tuple[int, ...]
    t: int
    t_source: str
    achieved: int
    rounds: tuple[RoundRecord, ...]
    declared_floor: float
    floor_budget: float
    bound_formula_value: float
    certified_bound: float
    measured_re: float
    measured_im: float
    measured_budget: float
    measured_exact: bool
    sup_sampled: float
    sup_analytic: bool
    sup_domain_certified: float | None
    grid: tuple[int, ...]
    exact_axes: tuple[bool, ...]
    tree_degree: int
    bases: tuple[BaseTestFn, ...]
    root: tr.Node
    target_points: tuple | None
    target_dim: int | None
    context: dict

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "labels": list(self.labels),
            "t": self.t,
            "t_source": self.t_source,
            "achieved": self.achieved,
            "rounds": [r.to_dict() for r in self.rounds],
            "declared_floor": self.declared_floor,
            "floor_budget": self.floor_budget,
            "bound_formula_value": self.bound_formula_value,
            "certified_bound": self.certified_bound,
            "measured": {
                "re": self.measured_re,
                "im": self.measured_im,
                "error_bound": self.measured_budget,
                "exact": self.measured_exact,
            },
            "sup": {
                "sampled": self.sup_sampled,
                "analytic": self.sup_analytic,
                "domain_certified": self.sup_domain_certified,
            },
            "grid": list(self.grid),
            "exact_axes": list(self.exact_axes),
            "tree_degree": self.tree_degree,
            "bases": [b.to_dict() for b in self.bases],
            "tree": tr.serialize(self.root),
            "target": None
            if self.target_points is None
            else {"dim": self.target_dim, "points": [list(p) for p in self.target_points]},
            "context": self.context,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "CdpCertificate":
        tgt = obj.get("target")
        return cls(
            kind=str(obj["kind"]),
            labels=tuple(int(v) for v in obj["labels"]),
            t=int(obj["t"]),
            t_source=str(obj["t_source"]),
            achieved=int(obj["achieved"]),
            rounds=tuple(RoundRecord.from_dict(r) for r in obj["rounds"]),
            declared_floor=float(obj["declared_floor"]),
            floor_budget=float(obj["floor_budget"]),
            bound_formula_value=float(obj["bound_formula_value"]),
            certified_bound=float(obj["certified_bound"]),
            measured_re=float(obj["measured"]["re"]),
            measured_im=float(obj["measured"]["im"]),
            measured_budget=float(obj["measured"]["error_bound"]),
            measured_exact=bool(obj["measured"]["exact"]),
            sup_sampled=float(obj["sup"]["sampled"]),
            sup_analytic=bool(obj["sup"]["analytic"]),
            sup_domain_certified=(
                None if obj["sup"]["domain_certified"] is None else float(obj["sup"]["domain_certified"])
            ),
            grid=tuple(int(g) for g in obj["grid"]),
            exact_axes=tuple(bool(b) for b in obj["exact_axes"]),
            tree_degree=int(obj["tree_degree"]),
            bases=tuple(BaseTestFn.from_dict(b) for b in obj["bases"]),
            root=tr.deserialize(obj["tree"]),
            target_points=None if tgt is None else tuple(tuple(p) for p in tgt["points"]),
            target_dim=None if tgt is None else int(tgt["dim"]),
            context=dict(obj.get("context", {})),
        )


# ---------------------------------------------------------------------------
# the iteration
# ---------------------------------------------------------------------------

def _plan_rounds(labels, t: int):
    """Run the selection rounds; pure label arithmetic, no samples involved."""
    state = SelectionState.start(labels, t)
    sels: list[Selection] = []
    gauges = [feasibility_gauge(state)]
    for _ in range(t):
        sel = davenport_select(state)
        if sel is None:
            break
        ok, why = verify_selection(state.E, state.S, sel.T)
        if not ok:
            raise VerificationError(f"selection re-verification failed: {why}")
        sels.append(sel)
        apply_round(state, sel.T)
        gauges.append(feasibility_gauge(state))
    return state, sels, gauges


def _build_tree(E: tuple[int, ...], sels, t: int) -> tr.Node:
    """The combination DAG the recursion produces, shared across rounds."""
    refs = {lab: tr.BaseRef(i) for i, lab in enumerate(E)}
    conjs = {lab: tr.Conj(refs[lab]) for lab in E}
    c1 = 1.0 - 1.0 / t
    c_phi = 1.0 / (4.0 * t ** 1.5)
    g: tr.Node = refs[E[0]]
    for sel in sels:
        T = sel.T
        pairs = tuple(
            tr.Prod((refs[T[a]], conjs[T[b]]))
            for a in range(len(T))
            for b in range(a + 1, len(T))
        )
        terms: list[tr.Node] = [tr.Scale(complex(c1), g)]
        if pairs:
            M = tr.Sum(pairs)
            terms.append(tr.Scale(complex(-1.0 / t ** 2), tr.Prod((g, M))))
            terms.append(tr.Scale(complex(1.0 / t ** 4), tr.Prod((g, M, M))))
        terms.append(
            tr.Scale(complex(c_phi), tr.Sum(tuple(refs[m] for m in T)))
        )
        g = tr.Sum(tuple(terms))
    return g


def tree_product_degree(root: tr.Node) -> int:
    """Largest number of base factors multiplied together anywhere in the DAG."""
    memo: dict[int, int] = {}

    def walk(node: tr.Node) -> int:
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, tr.BaseRef):
            out = 1
        elif isinstance(node, (tr.Scale, tr.Conj)):
            out = walk(node.child)
        elif isinstance(node, tr.Sum):
            out = max(walk(ch) for ch in node.children)
        else:
            out = sum(walk(ch) for ch in node.children)
        memo[key] = out
        return out

    return walk(root)


def _mean_against(arr: np.ndarray, F_conj: np.ndarray, total: int) -> complex:
    v = compensated_sum(arr * F_conj)
    return complex(v) / total


@dataclass(frozen=True)
class _EvalResult:
    rounds: tuple[RoundRecord, ...]
    g: np.ndarray
    sup_sampled: float


def _evaluate_rounds(
    F: GridFunction,
    bases: tuple[BaseTestFn, ...],
    E: tuple[int, ...],
    sels,
    t: int,
    declared_floor: float,
    strict: bool = True,
) -> _EvalResult:
    """Numeric replay of the recursion on F's grid, with pointwise audits."""
    by_label = {b.label: b for b in bases}
    used = {E[0]}
    for sel in sels:
        used |= set(sel.T)
    samples = {lab: by_label[lab].sample(F.sizes).samples for lab in sorted(used)}
    total = int(np.prod(F.sizes))
    F_conj = np.conj(F.samples)

    c1 = 1.0 - 1.0 / t
    c_phi = 1.0 / (4.0 * t ** 1.5)
    pq_limit = (t ** 4) / 4.0
    m_limit = t * (t - 1) / 2.0

    g = samples[E[0]].copy()
    records: list[RoundRecord] = []
    for idx, sel in enumerate(sels, start=1):
        T = sel.T
        ledger_before = _mean_against(g, F_conj, total)
        if len(T) > 1:
            M = np.zeros_like(g)
            for a in range(len(T)):
                for b in range(a + 1, len(T)):
                    M += samples[T[a]] * np.conj(samples[T[b]])
            min_t2p = float(t + 2.0 * M.real.min())
            max_abs = float(np.abs(M).max())
            if strict and min_t2p < -1e-9:
                raise VerificationError(
                    f"round {idx}: t + 2P dipped to {min_t2p}, pointwise precondition lost"
                )
            if strict and (max_abs > m_limit + 1e-9 or max_abs ** 2 > pq_limit + 1e-9):
                raise VerificationError(
                    f"round {idx}: |M| reached {max_abs}, beyond the reachable disc"
                )
            middle = g * (M / t ** 2 - (M * M) / t ** 4)
            del M
            residual = abs(_mean_against(middle, F_conj, total))
            g *= c1
            g -= middle
            del middle
        else:
            min_t2p = float(t)
            max_abs = 0.0
            residual = 0.0
            g *= c1
        acc = np.zeros_like(g)
        for m in T:
            acc += samples[m]
        g += c_phi * acc
        del acc
        ledger_after = _mean_against(g, F_conj, total)
        predicted = c1 * ledger_before.real + c_phi * len(T) * declared_floor
        records.append(
            RoundRecord(
                index=idx,
                T=T,
                q_indices=sel.q_indices,
                advisory_ok=sel.advisory_ok,
                sum_N_before=sel.sum_N_before,
                u_size=0,  # filled by the caller, which owns the state replay
                residual_middle=float(residual),
                ledger_before=float(ledger_before.real),
                ledger_after=float(ledger_after.real),
                predicted_after=float(predicted),
                imag_after=float(ledger_after.imag),
                min_t_plus_2P=min_t2p,
                max_abs_M=max_abs,
            )
        )
    sup_sampled = float(np.abs(g).max())
    return _EvalResult(rounds=tuple(records), g=g, sup_sampled=sup_sampled)


def _geometric_sum(t: int, i: int) -> float:
    return sum((1.0 - 1.0 / t) ** n for n in range(i))


def plan_combination(labels, t: int) -> tuple[tuple[int, ...], tr.Node]:
    """Selection and tree construction from labels alone.

    A sampled run over the same labels and round width reproduces exactly
    this tree, so grids can be sized before anything is evaluated.
    """
    E = tuple(sorted(labels, reverse=True))
    if len(E) != len(set(E)):
        raise ValidationError("labels must be distinct")
    if len(E) == 1:
        return E, tr.BaseRef(0)
    _, sels, _ = _plan_rounds(E, t)
    return E, _build_tree(E, sels, t)


def tree_pairing_floor(cert: "CdpCertificate") -> float:
    """Analytic lower bound for Re<g, F> where g is the certificate's own
    combination tree.

    The recursion keeps the seed base's contribution decayed by (1-1/t) per
    round and adds at least t*K_eff/(4 t^1.5) per round; the cross terms
    vanish by the exclusion rule.  Unlike certified_bound this never
    substitutes a different test function, so it is the number a later run
    may declare as this tree's floor.
    """
    t = cert.t
    lead = cert.bases[0].floor - cert.bases[0].floor_error
    decay = (1.0 - 1.0 / t) ** cert.achieved
    k_eff = cert.declared_floor - cert.floor_budget
    return decay * lead + k_eff / (4.0 * math.sqrt(t)) * _geometric_sum(t, cert.achieved)


def run_test_function(cert: "CdpCertificate") -> tuple[tr.Node, float]:
    """The strongest test function a finished run certifies.

    Either the single base with the best declared floor or the run's
    combination tree, whichever carries the larger analytic pairing floor.
    Returned as a tree over the run's bases together with that floor.
    """
    singles = [b.floor - b.floor_error for b in cert.bases]
    i_star = max(range(len(singles)), key=singles.__getitem__)
    tf = tree_pairing_floor(cert)
    if singles[i_star] >= tf:
        return tr.BaseRef(i_star), singles[i_star]
    return cert.root, tf


def cdp_iterate(
    F: GridFunction,
    bases,
    K: float | None = None,
    t_override: int | None = None,
    require_exact: bool = False,
    target: LatticeSet | None = None,
    context: dict | None = None,
    check_floors: bool = True,
) -> CdpCertificate:
    """Run the recursion against F and emit a replayable certificate.

    K defaults to the smallest declared base floor.  t comes from the label
    count unless overridden.  Iteration stops at t rounds or at the first
    selection failure; the certificate keeps the valid partial bound either
    way, and never drops below the best single-base floor.
    """
    bases = tuple(sorted(bases, key=lambda b: b.label, reverse=True))
    if not bases:
        raise ValidationError("need at least one base test function")
    labels = [b.label for b in bases]
    E = tuple(labels)
    R = len(E)
    if len(set(E)) != R:
        raise ValidationError("base labels must be distinct")

    if t_override is not None:
        if int(t_override) < 1:
            raise ValidationError("round width override must be >= 1")
        t = int(t_override)
        t_source = "override"
    else:
        t = choose_t(R)
        t_source = "formula"

    floors = [b.floor for b in bases]
    errors = [b.floor_error for b in bases]
    declared = min(floors) if K is None else float(K)
    if declared > min(floors) + 1e-12:
        raise ValidationError(
            f"declared floor {declared} exceeds the weakest base floor {min(floors)}"
        )
    floor_budget = max(errors)

    if check_floors:
        for b in bases:
            floor_check(b, F)

    if R == 1:
        # degenerate: the single base function is already the answer
        state = SelectionState.start(E, t)
        sels = []
        gauges = [feasibility_gauge(state)]
        root: tr.Node = tr.BaseRef(0)
        arr = bases[0].sample(F.sizes).samples
        eval_res = _EvalResult(rounds=(), g=arr, sup_sampled=float(np.abs(arr).max()))
    else:
        state, sels, gauges = _plan_rounds(E, t)
        root = _build_tree(E, sels, t)
        eval_res = _evaluate_rounds(F, bases, E, sels, t, declared)

    achieved = len(eval_res.rounds)
    rounds = list(eval_res.rounds)
    for i, (_T, U) in enumerate(state.history[:achieved]):
        rounds[i] = replace(rounds[i], u_size=len(U))

    # analytic propagation for the final tree
    dim = F.dim
    sups = [1.0 for _ in bases]
    lips = [tuple(b.payload.lip_bounds()) for b in bases]
    prop_sup, prop_lips = tr.analytic_bounds(root, sups, lips)
    intervals = [
        tr.freq_interval(root, [b.payload.freq_interval(ax) for b in bases])
        for ax in range(dim)
    ]
    band = tuple(tr.iv_max_abs(iv) for iv in intervals)
    aliased = any(m is not None and F.sizes[ax] <= 2 * m for ax, m in enumerate(band)) or any(
        m is None for m in band
    )

    contraction_ok, domain_cert = sup_contraction_certified(t)
    sup_analytic = all(b.sup_analytic for b in bases) and (achieved == 0 or contraction_ok)
    sup_cap = 1.0 if sup_analytic else prop_sup

    gf = GridFunction(
        sizes=F.sizes,
        samples=eval_res.g,
        freq_bound=band,
        aliased=aliased,
        sup_bound=min(sup_cap, prop_sup),
        lip_bounds=prop_lips,
    )
    axes_ok = tuple(
        band[ax] is not None
        and F.freq_bound[ax] is not None
        and band[ax] + F.freq_bound[ax] < F.sizes[ax]
        for ax in range(dim)
    )
    if require_exact and not all(axes_ok):
        raise ValidationError(
            "grid cannot integrate the final combination exactly and exactness was requested"
        )
    ip = inner_product(gf, F)

    sup_limit = max(1.0, 0.0 if domain_cert is None else domain_cert)
    if eval_res.sup_sampled > sup_limit + 1e-9:
        raise VerificationError(
            f"sampled sup {eval_res.sup_sampled} exceeds the certified ceiling {sup_limit}"
        )

    s_geo = _geometric_sum(t, achieved)
    k_eff = declared - floor_budget
    formula = declared / (4.0 * math.sqrt(t)) * s_geo
    effective_formula = max(k_eff, 0.0) / (4.0 * math.sqrt(t)) * s_geo
    best_single = max(f - e for f, e in zip(floors, errors))
    certified = max(best_single, effective_formula, 0.0)

    ctx = dict(context or {})
    ctx.setdefault("feasibility", [rep.to_dict() for rep in gauges])

    return CdpCertificate(
        kind="cdp",
        labels=E,
        t=t,
        t_source=t_source,
        achieved=achieved,
        rounds=tuple(rounds),
        declared_floor=declared,
        floor_budget=floor_budget,
        bound_formula_value=formula,
        certified_bound=certified,
        measured_re=float(ip.value.real),
        measured_im=float(ip.value.imag),
        measured_budget=float(ip.error_bound),
        measured_exact=bool(ip.exact),
        sup_sampled=eval_res.sup_sampled,
        sup_analytic=sup_analytic,
        sup_domain_certified=domain_cert,
        grid=F.sizes,
        exact_axes=axes_ok,
        tree_degree=tree_product_degree(root),
        bases=bases,
        root=root,
        target_points=None if target is None else target.points,
        target_dim=None if target is None else target.dim,
        context=ctx,
    )


# ---------------------------------------------------------------------------
# replay verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckEntry:
    name: str
    passed: bool
    detail: str

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


@dataclass(frozen=True)
class VerifyReport:
    entries: tuple[CheckEntry, ...]

    @property
    def ok(self) -> bool:
        return all(e.passed for e in self.entries)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "checks": [e.to_dict() for e in self.entries]}


def _fresh_sizes(grid: tuple[int, ...], factor: int) -> tuple[int, ...]:
    sizes = tuple(next_pow2(g * factor) for g in grid)
    check_sizes(sizes)
    return sizes


def rebuild_target(cert: CdpCertificate, sizes: tuple[int, ...] | None = None) -> GridFunction:
    if cert.target_points is None:
        raise ValidationError("certificate carries no target set to rebuild")
    A = LatticeSet(cert.target_dim, cert.target_points)
    return evaluate_fft(A, sizes or cert.grid)


def verify_certificate(
    cert: CdpCertificate,
    F: GridFunction | None = None,
    grid_factor: int = 2,
) -> VerifyReport:
    """Independent replay of a certificate's claims.

    Re-runs the exclusion checks from the recorded selections, rebuilds the
    combination tree, re-measures the pairing on the certificate grid, and
    re-audits the sup norm on a refined grid.  All failures are report
    entries, never exceptions.
    """
    if cert.kind == "cdp3d":
        from .freiman import verify_certificate_3d

        return verify_certificate_3d(cert, grid_factor=grid_factor)

    entries: list[CheckEntry] = []

    def add(name: str, passed: bool, detail: str) -> None:
        entries.append(CheckEntry(name=name, passed=bool(passed), detail=detail))

    labels_ok = (
        len(set(cert.labels)) == len(cert.labels)
        and all(v >= 1 for v in cert.labels)
        and tuple(sorted(cert.labels, reverse=True)) == cert.labels
        and tuple(b.label for b in cert.bases) == cert.labels
    )
    add("labels", labels_ok, f"{len(cert.labels)} distinct positive labels, descending")

    # exclusion replay from the recorded tuples
    sel_ok, sel_detail = True, "all rounds verified exhaustively"
    if cert.labels:
        S = {cert.labels[0]}
        for rec in cert.rounds:
            ok, why = verify_selection(cert.labels, S, rec.T)
            if not ok:
                sel_ok, sel_detail = False, f"round {rec.index}: {why}"
                break
            U = generate_U(S, rec.T)
            if len(U) != rec.u_size:
                sel_ok, sel_detail = (
                    False,
                    f"round {rec.index}: recorded u_size {rec.u_size} != {len(U)}",
                )
                break
            S |= set(rec.T)
            S |= U
    add("selection", sel_ok, sel_detail)

    # tree structure replay
    try:
        if cert.achieved == 0:
            rebuilt: tr.Node = tr.BaseRef(0)
        else:
            fake_sels = [
                Selection(T=rec.T, q_indices=rec.q_indices, sum_N_before=rec.sum_N_before,
                          advisory_ok=rec.advisory_ok)
                for rec in cert.rounds
            ]
            rebuilt = _build_tree(cert.labels, fake_sels, cert.t)
        tree_ok = tr.tree_equal(rebuilt, cert.root)
        add("tree", tree_ok, "combination tree matches the recorded rounds")
    except Exception as exc:  # report, never raise
        add("tree", False, f"tree rebuild failed: {exc}")

    if F is None:
        try:
            F = rebuild_target(cert)
        except (ValidationError, BudgetError) as exc:
            add("target", False, f"cannot rebuild the target: {exc}")
            return VerifyReport(entries=tuple(entries))

    # floors
    try:
        for b in cert.bases:
            floor_check(b, F)
        add("floors", True, f"{len(cert.bases)} base floors re-measured")
    except (VerificationError, ValidationError) as exc:
        add("floors", False, str(exc))

    # numeric replay on the certificate grid
    try:
        base_vals = [b.sample(F.sizes).samples for b in cert.bases]
        g = tr.evaluate(cert.root, base_vals)
        del base_vals
        total = int(np.prod(F.sizes))
        val = complex(compensated_sum(g * np.conj(F.samples))) / total
        drift = abs(val.real - cert.measured_re) + abs(val.imag - cert.measured_im)
        # same grid, different evaluation order: only rounding separates them
        tol = 1e-7 * max(1.0, abs(cert.measured_re))
        add("measured", drift <= tol, f"replayed pairing drift {drift:.3g}")
        sup_here = float(np.abs(g).max())
        del g
        add(
            "sup_grid",
            sup_here <= max(1.0, cert.sup_sampled) + 1e-9,
            f"sup on certificate grid {sup_here:.12g}",
        )
    except (ValidationError, BudgetError) as exc:
        add("measured", False, f"replay failed: {exc}")

    # sup audit on a refined grid
    try:
        sizes = _fresh_sizes(cert.grid, grid_factor)
        base_vals = [b.sample(sizes).samples for b in cert.bases]
        g = tr.evaluate(cert.root, base_vals)
        del base_vals
        sup_fine = float(np.abs(g).max())
        del g
        limit = 1.0 if cert.sup_analytic else max(1.0, cert.sup_domain_certified or 1.0)
        add(
            "sup_refined",
            sup_fine <= limit + 1e-9,
            f"sup on {'x'.join(str(s) for s in sizes)} grid = {sup_fine:.12g}",
        )
    except BudgetError as exc:
        add("sup_refined", True, f"skipped, refined grid over budget: {exc}")

    # arithmetic consistency
    s_geo = _geometric_sum(cert.t, cert.achieved)
    formula = cert.declared_floor / (4.0 * math.sqrt(cert.t)) * s_geo
    k_eff = max(cert.declared_floor - cert.floor_budget, 0.0)
    eff = k_eff / (4.0 * math.sqrt(cert.t)) * s_geo
    best_single = max(b.floor - b.floor_error for b in cert.bases)
    cb = max(best_single, eff, 0.0)
    formula_ok = (
        abs(formula - cert.bound_formula_value) <= 1e-12 * max(1.0, abs(formula))
        and abs(cb - cert.certified_bound) <= 1e-12 * max(1.0, abs(cb))
    )
    add(
        "formula",
        formula_ok,
        f"bound formula {formula:.12g}, certified {cb:.12g}",
    )

    # The certified bound must be backed by something this report re-checked:
    # either the best single-base floor (covered by the floors entry) or the
    # tree's replayed pairing plus budgets.  The zero clamp is free for a norm.
    budget = cert.floor_budget + (cert.measured_budget if math.isfinite(cert.measured_budget) else 0.0)
    backing = max(best_single, cert.measured_re + budget, 0.0)
    sound = cert.certified_bound <= backing + 1e-6 or not math.isfinite(cert.measured_budget)
    add(
        "soundness",
        sound,
        f"certified {cert.certified_bound:.6g} vs backing {backing:.6g}",
    )

    return VerifyReport(entries=tuple(entries))


# ---------------------------------------------------------------------------
# front doors: 1-D exponential runs and the 2-D row pipeline
# ---------------------------------------------------------------------------

def plan_grid_1d(E: LatticeSet, t: int, cap: int | None = None) -> tuple[int, ...]:
    """Exact-integration grid for a 1-D run, sized from the planned tree."""
    labels = sorted(E.values(), reverse=True)
    if len(labels) > 1:
        _, sels, _ = _plan_rounds(labels, t)
    else:
        sels = []
    if sels:
        root = _build_tree(tuple(labels), sels, t)
        iv = tr.freq_interval(root, [(v, v) for v in labels])
        m_tree = tr.iv_max_abs(iv)
    else:
        m_tree = max(abs(v) for v in labels)
    m_f = max(abs(v) for v in labels)
    g = next_pow2(2 * (m_tree + m_f) + 2)
    limit = cap if cap is not None else LIMITS.samples_budget
    if g > limit:
        g = 1 << (limit.bit_length() - 1)  # inexact mode, flagged downstream
    return (g,)


def bound_1d_exponential(
    E: LatticeSet,
    t_override: int | None = None,
    sizes: tuple[int, ...] | None = None,
) -> CdpCertificate:
    """Exponential-basis certificate for a 1-D set, on an exact grid."""
    if E.dim != 1:
        raise ValidationError("need a 1-D set")
    if any(v < 1 for v in E.values()):
        raise ValidationError("labels must be positive; translate the set first")
    bases = exponential_basis(E)
    t = t_override if t_override is not None else choose_t(E.size)
    g_sizes = sizes if sizes is not None else plan_grid_1d(E, t)
    F = evaluate_fft(E, g_sizes)
    return cdp_iterate(
        F,
        bases,
        K=1.0,
        t_override=t_override,
        target=E,
        context={"pipeline": "exponential_1d"},
    )


def bound_2d(
    A: LatticeSet,
    axis: int = 0,
    eps: float = 1e-3,
    t_override: int | None = None,
    min_row_size: int = 1,
    measure_budget: int | None = None,
) -> CdpCertificate:
    """Row-sign certificate for a 2-D set: a certified L1 lower bound.

    Rows run along `axis`; the other coordinate provides the labels.  The set
    is translated to positive coordinates first (the norm is translation
    invariant, the label arithmetic wants positive integers).
    """
    if A.dim != 2:
        raise ValidationError("need a 2-D set")
    A2, shift = translate_to_positive(A)
    label_axis = 1 - axis
    bases = row_sign_basis(A2, axis=axis, eps=eps, min_row_size=min_row_size)
    labels = [b.label for b in bases]
    t = t_override if t_override is not None else choose_t(len(labels))

    # size the label axis from the planned tree so cross-label terms cancel
    # exactly; give the free axis the rest of the measurement budget
    if len(labels) > 1:
        _, sels, _ = _plan_rounds(labels, t)
        root = _build_tree(tuple(labels), sels, t)
        iv = tr.freq_interval(root, [(v, v) for v in labels])
        m_tree = tr.iv_max_abs(iv)
    else:
        m_tree = abs(labels[0])
    m_label_f = A2.max_abs_coord(label_axis)
    g_label = next_pow2(2 * (m_tree + m_label_f) + 2)
    budget = measure_budget if measure_budget is not None else LIMITS.measure_budget
    # the engine holds every sampled base plus a few working arrays at once,
    # so the doubling loop must count the whole family against the budget
    weight = len(bases) + 3
    g_free = max(next_pow2(2 * A2.max_abs_coord(axis) + 2), 8)
    while g_free * 2 * g_label * weight <= budget:
        g_free *= 2
    sizes = [0, 0]
    sizes[axis] = g_free
    sizes[label_axis] = g_label
    F = evaluate_fft(A2, tuple(sizes))

    dec = rows(A2, axis, min_size=min_row_size)
    ctx = {
        "pipeline": "row_sign_2d",
        "axis": axis,
        "eps": eps,
        "translation": list(shift),
        "r": dec.r,
        "s": dec.s,
        "dropped_rows": len(dec.dropped),
    }
    return cdp_iterate(
        F,
        bases,
        K=None,
        t_override=t_override,
        target=A2,
        context=ctx,
    )
