"""Plan property inference: icols, const, key and set.

``icols`` and ``set`` flow top-down from the serialization root and are
accumulated over all consumers of a shared node (union resp. conjunction).
``const`` and ``key`` flow bottom-up from the leaves.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass
from itertools import combinations, product
from typing import Iterable, Mapping

from .algebra import (
    Attach,
    Cross,
    Distinct,
    DocRef,
    Join,
    LitTable,
    Node,
    Plan,
    Project,
    Rank,
    RowId,
    Select,
    Ser,
    equi_columns,
    pred_columns,
)

Key = frozenset  # frozenset[str]

MAX_KEYS = 24


@dataclass
class NodeProps:
    icols: frozenset[str]
    const: dict[str, object]
    key: frozenset[Key]
    set: bool

    def describe(self) -> str:
        keys = " ".join("{" + ",".join(sorted(k)) + "}" for k in sorted(self.key, key=sorted))
        consts = ",".join(f"{c}={v!r}" for c, v in sorted(self.const.items()))
        return f"icols={{{','.join(sorted(self.icols))}}} const={{{consts}}} key=[{keys}] set={self.set}"


class PropertyStore:
    """Per-node properties of one plan."""

    def __init__(self, plan: Plan, distinct_guard: bool = False):
        self.plan = plan
        self.set_of = infer_set(plan)
        self.icols_of = infer_icols(plan, self.set_of if distinct_guard else None)

    def icols(self, node: Node) -> frozenset[str]:
        return self.icols_of.get(id(node), frozenset())

    def const(self, node: Node) -> dict[str, object]:
        return node_const(node)

    def key(self, node: Node) -> frozenset[Key]:
        return node_key(node)

    def set(self, node: Node) -> bool:
        return self.set_of.get(id(node), True)

    def __getitem__(self, node: Node) -> NodeProps:
        return NodeProps(self.icols(node), self.const(node), self.key(node), self.set(node))

    def annotations(self) -> dict[int, str]:
        return {id(n): self[n].describe() for n in self.plan.nodes}

    def dump(self) -> str:
        return self.plan.dump(self.annotations())


def infer(plan: Plan) -> PropertyStore:
    return PropertyStore(plan)


# ---------------------------------------------------------------------------
# icols


def infer_icols(plan: Plan, set_of: Mapping[int, bool] | None = None) -> dict[int, frozenset[str]]:
    """Columns each node must provide to its consumers.

    With ``set_of`` given, a duplicate elimination whose output multiplicity
    matters (set is false) also demands every non-constant input column:
    dropping such a column would merge rows the elimination keeps apart.
    """
    icols: dict[int, set[str]] = {id(n): set() for n in plan.nodes}
    # consumers come after their operands in plan.nodes
    for node in reversed(plan.nodes):
        for child, demand in icols_demand(node, frozenset(icols[id(node)])):
            icols[id(child)] |= demand
        if set_of is not None and isinstance(node, Distinct) and not set_of[id(node)]:
            child = node.child
            icols[id(child)] |= frozenset(child.cols) - frozenset(node_const(child))
    return {k: frozenset(v) for k, v in icols.items()}


def icols_demand(node: Node, icols: frozenset[str]) -> list[tuple[Node, frozenset[str]]]:
    """Demand ``node`` places on each operand, given its own icols."""
    if isinstance(node, Ser):
        return [(node.child, frozenset(("pos", "item")))]
    if isinstance(node, Project):
        return [(node.child, frozenset(b for a, b in node.mapping if a in icols))]
    if isinstance(node, Select):
        return [(node.child, icols | pred_columns(node.pred))]
    if isinstance(node, Join):
        need = icols | pred_columns(node.pred)
        return [(c, need & frozenset(c.cols)) for c in node.children]
    if isinstance(node, Cross):
        return [(c, icols & frozenset(c.cols)) for c in node.children]
    if isinstance(node, Distinct):
        return [(node.child, icols)]
    if isinstance(node, (Attach, RowId)):
        return [(node.child, icols - {node.col})]
    if isinstance(node, Rank):
        return [(node.child, (icols - {node.col}) | frozenset(node.order))]
    return []


# ---------------------------------------------------------------------------
# const


_CONST: "weakref.WeakKeyDictionary[Node, dict]" = weakref.WeakKeyDictionary()
_KEY: "weakref.WeakKeyDictionary[Node, frozenset]" = weakref.WeakKeyDictionary()


def node_const(node: Node) -> dict[str, object]:
    """const of ``node``; a pure function of its (immutable) subplan, so cached per node."""
    hit = _CONST.get(node)
    if hit is None:
        for n in _pending(node, _CONST):
            _CONST[n] = const_of(n, [_CONST[c] for c in n.children])
        hit = _CONST[node]
    return hit


def node_key(node: Node) -> frozenset[Key]:
    hit = _KEY.get(node)
    if hit is None:
        for n in _pending(node, _KEY):
            raw = key_of(n, [_KEY[c] for c in n.children])
            # a constant column never distinguishes two rows
            fixed = frozenset(node_const(n))
            _KEY[n] = minimize(k - fixed for k in raw)
        hit = _KEY[node]
    return hit


def _pending(root: Node, cache) -> list[Node]:
    out: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        n, expanded = stack.pop()
        if expanded:
            out.append(n)
        elif id(n) not in seen and n not in cache:
            seen.add(id(n))
            stack.append((n, True))
            stack.extend((c, False) for c in reversed(n.children))
    return out


def infer_const(plan: Plan) -> dict[int, dict[str, object]]:
    return {id(n): node_const(n) for n in plan.nodes}


def const_of(node: Node, inputs: list[dict[str, object]]) -> dict[str, object]:
    if isinstance(node, DocRef):
        return {}
    if isinstance(node, LitTable):
        if not node.rows:
            return {}
        out = {}
        for i, c in enumerate(node.columns):
            values = {(type(r[i]), r[i]) for r in node.rows}
            if len(values) == 1:
                out[c] = node.rows[0][i]
        return out
    if isinstance(node, Project):
        child = inputs[0]
        return {a: child[b] for a, b in node.mapping if b in child}
    if isinstance(node, (Join, Cross)):
        return {**inputs[0], **inputs[1]}
    if isinstance(node, Attach):
        return {**inputs[0], node.col: node.value}
    # Ser narrows the schema to pos|item
    return {c: v for c, v in inputs[0].items() if c in node.cols}


# ---------------------------------------------------------------------------
# key


def minimize(keys: Iterable[Key], limit: int = MAX_KEYS) -> frozenset[Key]:
    """Drop keys that are supersets of other keys; keep at most ``limit``."""
    ordered = sorted(set(keys), key=lambda k: (len(k), sorted(k)))
    kept: list[Key] = []
    for k in ordered:
        if not any(m <= k for m in kept):
            kept.append(k)
            if len(kept) >= limit:
                break
    return frozenset(kept)


def is_key(keys: Iterable[Key], cols: Iterable[str]) -> bool:
    """True when ``cols`` contain one of the (minimal) keys."""
    cols = frozenset(cols)
    return any(k <= cols for k in keys)


def infer_key(plan: Plan) -> dict[int, frozenset[Key]]:
    return {id(n): node_key(n) for n in plan.nodes}


def key_of(node: Node, inputs: list[frozenset[Key]]) -> set[Key]:
    if isinstance(node, DocRef):
        return {frozenset(("pre",))}
    if isinstance(node, LitTable):
        return _literal_keys(node)
    if isinstance(node, Project):
        return _project_keys(node, inputs[0])
    if isinstance(node, Join):
        k1s, k2s = inputs
        ab = equi_columns(node.pred)
        if ab is not None:
            a, b = ab
            if a not in node.left.cols:
                a, b = b, a
            return _equijoin_keys(a, b, k1s, k2s)
        return {k1 | k2 for k1, k2 in product(k1s, k2s)}
    if isinstance(node, Cross):
        k1s, k2s = inputs
        return {k1 | k2 for k1, k2 in product(k1s, k2s)}
    if isinstance(node, Distinct):
        return set(inputs[0]) | {frozenset(node.cols)}
    if isinstance(node, RowId):
        return set(inputs[0]) | {frozenset((node.col,))}
    if isinstance(node, Rank):
        order = frozenset(node.order)
        extra = {frozenset((node.col,)) | (k - order) for k in inputs[0] if k & order}
        return set(inputs[0]) | extra
    return {k for k in inputs[0] if k <= set(node.cols)}


def _equijoin_keys(a: str, b: str, k1s: frozenset[Key], k2s: frozenset[Key]) -> set[Key]:
    out: set[Key] = set()
    b_key = is_key(k2s, (b,))
    a_key = is_key(k1s, (a,))
    if b_key:
        out.update(k1s)
        out.update((k1 - {a}) | k2 for k1, k2 in product(k1s, k2s))
    if a_key:
        out.update(k2s)
        out.update(k1 | (k2 - {b}) for k1, k2 in product(k1s, k2s))
    if not out:
        # the general join row still applies to an equi-join
        out.update(k1 | k2 for k1, k2 in product(k1s, k2s))
    return out


def _project_keys(node: Project, child_keys: frozenset[Key]) -> set[Key]:
    outputs: dict[str, list[str]] = {}
    for a, b in node.mapping:
        outputs.setdefault(b, []).append(a)
    out: set[Key] = set()
    for k in child_keys:
        if not k <= outputs.keys():
            continue
        cols = sorted(k)
        # a source column copied to several outputs yields one key per choice
        for choice in product(*(outputs[c] for c in cols)):
            out.add(frozenset(choice))
            if len(out) > 4 * MAX_KEYS:
                return out
    return out


def _literal_keys(node: LitTable) -> set[Key]:
    cols = node.columns
    if len(node.rows) <= 1:
        return {frozenset()}
    out: set[Key] = set()
    for n in range(1, len(cols) + 1):
        for combo in combinations(range(len(cols)), n):
            seen = {tuple(r[i] for i in combo) for r in node.rows}
            if len(seen) == len(node.rows):
                out.add(frozenset(cols[i] for i in combo))
    return out


# ---------------------------------------------------------------------------
# set


def infer_set(plan: Plan) -> dict[int, bool]:
    """True where upstream duplicate elimination makes row multiplicity irrelevant."""
    flag: dict[int, bool] = {id(n): True for n in plan.nodes}
    for node in reversed(plan.nodes):
        mine = flag[id(node)]
        for child in node.children:
            if isinstance(node, Ser):
                flag[id(child)] = False
            elif isinstance(node, Distinct):
                flag[id(child)] = flag[id(child)] and True
            else:
                flag[id(child)] = flag[id(child)] and mine
    if isinstance(plan.root, Ser):
        flag[id(plan.root)] = False
    return flag


# ---------------------------------------------------------------------------
# interpreter-backed soundness checks


def soundness_violations(plan: Plan, doc, props: PropertyStore | None = None) -> list[str]:
    """Check the inferred properties against actual evaluation over ``doc``.

    * icols: blanking every column outside a node's icols keeps the result;
    * const: every constant binding holds on every row;
    * key: no inferred key has duplicate values;
    * set: deduplicating a node with set=true keeps the result.
    """
    from .evaluator import Interpreter, Table

    props = props or PropertyStore(plan)
    base = Interpreter(doc)
    # rank values only encode order, so compare the serialized item sequence
    expected = base(plan).column("item")
    tables = {id(n): base.memo[id(n)] for n in plan.nodes}
    ancestors = _ancestor_sets(plan)
    problems: list[str] = []

    def replay(node: Node, table: Table) -> list:
        run = Interpreter(doc)
        skip = ancestors[id(node)]
        run.memo = {k: v for k, v in tables.items() if k not in skip}
        run.memo[id(node)] = table
        return run(plan).column("item")

    for node in plan.nodes:
        if isinstance(node, Ser):
            continue
        table = tables[id(node)]
        label = node.describe()
        for c, v in props.const(node).items():
            i = table.columns.index(c)
            if any(r[i] != v or type(r[i]) is not type(v) for r in table.rows):
                problems.append(f"const {c}={v!r} fails at {label}")
        for k in props.key(node):
            idx = [table.columns.index(c) for c in sorted(k)]
            seen = {tuple(r[i] for i in idx) for r in table.rows}
            if len(seen) != len(table.rows):
                problems.append(f"key {{{','.join(sorted(k))}}} fails at {label}")
        icols = props.icols(node)
        blank = [i for i, c in enumerate(table.columns) if c not in icols]
        if blank:
            rows = [tuple(None if i in blank else v for i, v in enumerate(r)) for r in table.rows]
            if replay(node, Table(table.columns, rows)) != expected:
                problems.append(f"icols {{{','.join(sorted(icols))}}} insufficient at {label}")
        if props.set(node) and len(set(table.rows)) != len(table.rows):
            deduped = Table(table.columns, list(dict.fromkeys(table.rows)))
            if replay(node, deduped) != expected:
                problems.append(f"set=true unsound at {label}")
    return problems


def _ancestor_sets(plan: Plan) -> dict[int, frozenset[int]]:
    """For each node, the ids of all nodes that (transitively) consume it, itself included."""
    up: dict[int, set[int]] = {}
    for node in reversed(plan.nodes):
        acc = {id(node)}
        for parent in plan.parents(node):
            acc |= up[id(parent)]
        up[id(node)] = acc
    return {k: frozenset(v) for k, v in up.items()}
