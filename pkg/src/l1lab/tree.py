"""Symbolic combination trees over a list of base test functions.

The iteration engine records the function it builds as a DAG of scale / sum /
product / conjugate nodes over base references, so a certificate can be
replayed on any grid later.  Walkers here evaluate a tree against concrete
base samples, propagate analytic sup/Lipschitz bounds, and compute exact
per-axis frequency intervals (and, in one dimension, exact integer support
sets) by sumset arithmetic.

Sharing matters: the recursion references the previous iterate several times
per round, so serialization flattens the DAG into an indexed node list rather
than nesting (which would blow up exponentially in the round count).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ValidationError

Interval = tuple[int, int]


@dataclass(frozen=True, eq=False)
class BaseRef:
    index: int


@dataclass(frozen=True, eq=False)
class Scale:
    coef: complex
    child: "Node"


@dataclass(frozen=True, eq=False)
class Sum:
    children: tuple["Node", ...]


@dataclass(frozen=True, eq=False)
class Prod:
    children: tuple["Node", ...]


@dataclass(frozen=True, eq=False)
class Conj:
    child: "Node"


Node = BaseRef | Scale | Sum | Prod | Conj


def evaluate(root: Node, base_values: list[np.ndarray]) -> np.ndarray:
    """Evaluate the tree given an array of samples per base (any shape)."""
    memo: dict[int, np.ndarray] = {}

    def walk(node: Node) -> np.ndarray:
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, BaseRef):
            out = base_values[node.index]
        elif isinstance(node, Scale):
            out = node.coef * walk(node.child)
        elif isinstance(node, Sum):
            acc = walk(node.children[0]).copy()
            for ch in node.children[1:]:
                acc += walk(ch)
            out = acc
        elif isinstance(node, Prod):
            acc = walk(node.children[0]).copy()
            for ch in node.children[1:]:
                acc *= walk(ch)
            out = acc
        elif isinstance(node, Conj):
            out = np.conj(walk(node.child))
        else:
            raise ValidationError(f"unknown tree node {node!r}")
        memo[key] = out
        return out

    return walk(root)


def analytic_bounds(
    root: Node,
    base_sups: list[float],
    base_lips: list[tuple[float | None, ...]],
) -> tuple[float, tuple[float | None, ...]]:
    """Propagate (sup, per-axis Lipschitz) bounds through the tree."""
    dim = len(base_lips[0])
    memo: dict[int, tuple[float, tuple[float | None, ...]]] = {}

    def walk(node: Node):
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, BaseRef):
            out = (base_sups[node.index], base_lips[node.index])
        elif isinstance(node, Scale):
            s, l = walk(node.child)
            m = abs(node.coef)
            out = (s * m, tuple(None if x is None else x * m for x in l))
        elif isinstance(node, Sum):
            parts = [walk(ch) for ch in node.children]
            sup = sum(p[0] for p in parts)
            lips = tuple(
                None if any(p[1][ax] is None for p in parts) else sum(p[1][ax] for p in parts)
                for ax in range(dim)
            )
            out = (sup, lips)
        elif isinstance(node, Prod):
            parts = [walk(ch) for ch in node.children]
            sup = 1.0
            for p in parts:
                sup *= p[0]
            lips = []
            for ax in range(dim):
                if any(p[1][ax] is None for p in parts):
                    lips.append(None)
                    continue
                total = 0.0
                for i, p in enumerate(parts):
                    others = 1.0
                    for j, q in enumerate(parts):
                        if j != i:
                            others *= q[0]
                    total += others * p[1][ax]
                lips.append(total)
            out = (sup, tuple(lips))
        elif isinstance(node, Conj):
            out = walk(node.child)
        else:
            raise ValidationError(f"unknown tree node {node!r}")
        memo[key] = out
        return out

    return walk(root)


# interval helpers (exact integer sumset hulls) --------------------------------

def iv_add(a: Interval | None, b: Interval | None) -> Interval | None:
    if a is None or b is None:
        return None
    return (a[0] + b[0], a[1] + b[1])


def iv_union(a: Interval | None, b: Interval | None) -> Interval | None:
    if a is None or b is None:
        return None
    return (min(a[0], b[0]), max(a[1], b[1]))


def iv_neg(a: Interval | None) -> Interval | None:
    if a is None:
        return None
    return (-a[1], -a[0])


def iv_max_abs(a: Interval | None) -> int | None:
    if a is None:
        return None
    return max(abs(a[0]), abs(a[1]))


def freq_interval(
    root: Node, base_intervals: list[Interval | None]
) -> Interval | None:
    """Hull of the tree's frequency support on one axis (None = unbounded)."""
    memo: dict[int, Interval | None] = {}

    def walk(node: Node) -> Interval | None:
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, BaseRef):
            out = base_intervals[node.index]
        elif isinstance(node, Scale):
            out = walk(node.child)
        elif isinstance(node, Sum):
            out = walk(node.children[0])
            for ch in node.children[1:]:
                out = iv_union(out, walk(ch))
        elif isinstance(node, Prod):
            out = walk(node.children[0])
            for ch in node.children[1:]:
                out = iv_add(out, walk(ch))
        elif isinstance(node, Conj):
            out = iv_neg(walk(node.child))
        else:
            raise ValidationError(f"unknown tree node {node!r}")
        memo[key] = out
        return out

    return walk(root)


def support_set(
    root: Node, base_supports: list[set[int] | None], cap: int = 200_000
) -> set[int] | None:
    """Exact 1-D frequency support by sumset arithmetic; None past the cap."""
    memo: dict[int, set[int] | None] = {}

    def walk(node: Node) -> set[int] | None:
        key = id(node)
        if key in memo:
            return memo[key]
        out: set[int] | None
        if isinstance(node, BaseRef):
            out = base_supports[node.index]
        elif isinstance(node, Scale):
            out = walk(node.child)
        elif isinstance(node, Sum):
            out = set()
            for ch in node.children:
                part = walk(ch)
                if part is None:
                    out = None
                    break
                out |= part
        elif isinstance(node, Prod):
            out = {0}
            for ch in node.children:
                part = walk(ch)
                if part is None or out is None:
                    out = None
                    break
                nxt = {a + b for a in out for b in part}
                out = nxt
                if len(out) > cap:
                    out = None
                    break
        elif isinstance(node, Conj):
            part = walk(node.child)
            out = None if part is None else {-a for a in part}
        else:
            raise ValidationError(f"unknown tree node {node!r}")
        if out is not None and len(out) > cap:
            out = None
        memo[key] = out
        return out

    return walk(root)


def substitute(root: Node, repl: list[Node]) -> Node:
    """Replace BaseRef(i) by repl[i] throughout, keeping DAG sharing."""
    memo: dict[int, Node] = {}

    def walk(node: Node) -> Node:
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, BaseRef):
            out = repl[node.index]
        elif isinstance(node, Scale):
            out = Scale(node.coef, walk(node.child))
        elif isinstance(node, Sum):
            out = Sum(tuple(walk(ch) for ch in node.children))
        elif isinstance(node, Prod):
            out = Prod(tuple(walk(ch) for ch in node.children))
        elif isinstance(node, Conj):
            out = Conj(walk(node.child))
        else:
            raise ValidationError(f"unknown tree node {node!r}")
        memo[key] = out
        return out

    return walk(root)


# serialization ----------------------------------------------------------------

def serialize(root: Node) -> dict:
    nodes: list[list] = []
    memo: dict[int, int] = {}

    def walk(node: Node) -> int:
        key = id(node)
        if key in memo:
            return memo[key]
        if isinstance(node, BaseRef):
            enc = ["base", node.index]
        elif isinstance(node, Scale):
            enc = ["scale", float(node.coef.real), float(node.coef.imag), walk(node.child)]
        elif isinstance(node, Sum):
            enc = ["sum", [walk(ch) for ch in node.children]]
        elif isinstance(node, Prod):
            enc = ["prod", [walk(ch) for ch in node.children]]
        elif isinstance(node, Conj):
            enc = ["conj", walk(node.child)]
        else:
            raise ValidationError(f"unknown tree node {node!r}")
        nodes.append(enc)
        idx = len(nodes) - 1
        memo[key] = idx
        return idx

    root_idx = walk(root)
    return {"nodes": nodes, "root": root_idx}


def deserialize(obj: dict) -> Node:
    raw = obj["nodes"]
    built: list[Node] = []
    for enc in raw:
        op = enc[0]
        if op == "base":
            built.append(BaseRef(int(enc[1])))
        elif op == "scale":
            built.append(Scale(complex(enc[1], enc[2]), built[enc[3]]))
        elif op == "sum":
            built.append(Sum(tuple(built[i] for i in enc[1])))
        elif op == "prod":
            built.append(Prod(tuple(built[i] for i in enc[1])))
        elif op == "conj":
            built.append(Conj(built[enc[1]]))
        else:
            raise ValidationError(f"unknown serialized node op {op!r}")
    return built[obj["root"]]


def tree_equal(a: Node, b: Node) -> bool:
    """Structural equality of two DAGs built by the same deterministic builder."""
    return serialize(a) == serialize(b)
