"""Reference interpreter for plans, a tree-walking XQuery oracle, and a query generator."""

from __future__ import annotations

import random
from bisect import bisect_left
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Iterable, Mapping, Sequence

from . import frontend as fe
from .algebra import (
    Add,
    Atom,
    Attach,
    Col,
    Const,
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
)
from .infoset import ATTR, DOC, ELEM, TEXT, DocTable, NodeTest


class EvaluationError(RuntimeError):
    pass


@dataclass
class Table:
    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(set(self.columns)) != len(self.columns):
            raise EvaluationError(f"duplicate column in {self.columns}")

    def index(self) -> dict[str, int]:
        return {c: i for i, c in enumerate(self.columns)}

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def project(self, names: Sequence[str]) -> "Table":
        idx = [self.columns.index(n) for n in names]
        return Table(tuple(names), [tuple(r[i] for i in idx) for r in self.rows])

    def __len__(self) -> int:
        return len(self.rows)


def sort_key(v) -> tuple:
    """Total order over NULL, numbers and strings."""
    if v is None:
        return (0, 0)
    if isinstance(v, str):
        return (2, v)
    return (1, v)


def row_key(row: Iterable) -> tuple:
    return tuple(sort_key(v) for v in row)


# ---------------------------------------------------------------------------
# predicate compilation


def _term_fn(term, index: Mapping[str, int]) -> Callable:
    if isinstance(term, Col):
        i = index[term.name]
        return lambda r: r[i]
    if isinstance(term, Const):
        v = term.value
        return lambda r: v
    lf, rf = _term_fn(term.left, index), _term_fn(term.right, index)

    def add(r):
        a, b = lf(r), rf(r)
        return None if a is None or b is None else a + b

    return add


_OPS = {
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def compile_pred(pred: Sequence[Atom], index: Mapping[str, int]) -> Callable[[tuple], bool]:
    fns = []
    for atom in pred:
        lf, rf, op = _term_fn(atom.left, index), _term_fn(atom.right, index), _OPS[atom.op]

        def test(r, lf=lf, rf=rf, op=op):
            a, b = lf(r), rf(r)
            if a is None or b is None or isinstance(a, str) != isinstance(b, str):
                return False
            return op(a, b)

        fns.append(test)
    if len(fns) == 1:
        return fns[0]
    return lambda r: all(f(r) for f in fns)


# ---------------------------------------------------------------------------
# plan interpreter


class Interpreter:
    """Memoizing bottom-up evaluator; one instance per document."""

    def __init__(self, doc: DocTable):
        self.doc = doc
        self.doc_rows = [tuple(r) for r in doc.rows]
        self.memo: dict[int, Table] = {}
        self._keep: list[Node] = []  # pin memoized nodes so ids stay valid

    def __call__(self, node: Node | Plan) -> Table:
        if isinstance(node, Plan):
            node = node.root
        return self.eval(node)

    def eval(self, node: Node) -> Table:
        hit = self.memo.get(id(node))
        if hit is not None:
            return hit
        for n in _postorder(node, self.memo):
            self.memo[id(n)] = self.apply(n, [self.memo[id(c)] for c in n.children])
            self._keep.append(n)
        return self.memo[id(node)]

    def apply(self, node: Node, inputs: list[Table]) -> Table:
        if isinstance(node, DocRef):
            return Table(node.cols, self.doc_rows)
        if isinstance(node, LitTable):
            return Table(node.cols, list(node.rows))
        return apply_operator(node, inputs)


def _postorder(root: Node, done: Mapping[int, object]) -> list[Node]:
    out: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        n, expanded = stack.pop()
        if expanded:
            out.append(n)
            continue
        if id(n) in seen or id(n) in done:
            continue
        seen.add(id(n))
        stack.append((n, True))
        for c in reversed(n.children):
            if id(c) not in seen and id(c) not in done:
                stack.append((c, False))
    return out


def apply_operator(node: Node, inputs: list[Table]) -> Table:
    """Evaluate one non-leaf operator over already evaluated operands."""
    if isinstance(node, Ser):
        t = inputs[0]
        ip, ii = t.columns.index("pos"), t.columns.index("item")
        rows = sorted(((r[ip], r[ii]) for r in t.rows), key=row_key)
        return Table(("pos", "item"), rows)
    if isinstance(node, Project):
        t = inputs[0]
        idx = [t.columns.index(src) for _, src in node.mapping]
        return Table(node.cols, [tuple(r[i] for i in idx) for r in t.rows])
    if isinstance(node, Select):
        t = inputs[0]
        test = compile_pred(node.pred, t.index())
        return Table(t.columns, [r for r in t.rows if test(r)])
    if isinstance(node, Cross):
        left, right = inputs
        return Table(node.cols, [l + r for l, r in product(left.rows, right.rows)])
    if isinstance(node, Join):
        return Table(node.cols, join_rows(node.pred, inputs[0], inputs[1]))
    if isinstance(node, Distinct):
        return Table(inputs[0].columns, list(dict.fromkeys(inputs[0].rows)))
    if isinstance(node, Attach):
        v = node.value
        return Table(node.cols, [r + (v,) for r in inputs[0].rows])
    if isinstance(node, RowId):
        t = inputs[0]
        order = _rowid_order(t.columns)
        ranked = sorted(t.rows, key=lambda r: row_key(r[i] for i in order))
        return Table(node.cols, [r + (i,) for i, r in enumerate(ranked, start=1)])
    if isinstance(node, Rank):
        t = inputs[0]
        idx = [t.columns.index(c) for c in node.order]
        keys = [row_key(r[i] for i in idx) for r in t.rows]
        ordered = sorted(keys)
        # RANK(): one plus the number of strictly smaller keys
        return Table(node.cols, [r + (bisect_left(ordered, k) + 1,) for r, k in zip(t.rows, keys)])
    raise EvaluationError(f"cannot evaluate {node.describe()}")


def _rowid_order(columns: Sequence[str]) -> list[int]:
    first = [c for c in ("iter", "pos") if c in columns]
    rest = [c for c in columns if c not in first]
    return [columns.index(c) for c in first + rest]


def join_rows(pred: Sequence[Atom], left: Table, right: Table) -> list[tuple]:
    lidx, ridx = left.index(), right.index()
    both = {**lidx, **{c: i + len(left.columns) for c, i in ridx.items()}}
    equi: list[tuple[int, int]] = []
    rest: list[Atom] = []
    for atom in pred:
        pair = _equi_pair(atom, lidx, ridx)
        if pair is None:
            rest.append(atom)
        else:
            equi.append(pair)
    check = compile_pred(rest, both) if rest else None
    out: list[tuple] = []
    if equi:
        li = [a for a, _ in equi]
        ri = [b for _, b in equi]
        buckets: dict[tuple, list[tuple]] = {}
        for r in right.rows:
            k = tuple(r[i] for i in ri)
            if None not in k:
                buckets.setdefault(k, []).append(r)
        for l in left.rows:
            for r in buckets.get(tuple(l[i] for i in li), ()):
                row = l + r
                if check is None or check(row):
                    out.append(row)
        return out
    band = _band(rest, lidx, ridx)
    if band is not None:
        return _band_join(band, left, right, check)
    for l in left.rows:
        for r in right.rows:
            row = l + r
            if check is None or check(row):
                out.append(row)
    return out


def _equi_pair(atom: Atom, lidx, ridx) -> tuple[int, int] | None:
    if atom.op != "=" or not isinstance(atom.left, Col) or not isinstance(atom.right, Col):
        return None
    a, b = atom.left.name, atom.right.name
    if a in lidx and b in ridx:
        return lidx[a], ridx[b]
    if b in lidx and a in ridx:
        return lidx[b], ridx[a]
    return None


def _band(rest: list[Atom], lidx, ridx):
    """Find a column of one side bounded below by a term of the other side.

    Returns (side, column index, lower term fn, strict) or None.  Used to
    sort one operand and binary-search the start of each match range.
    """
    for atom in rest:
        for a in (atom, atom.flipped()):
            # shape: term < col  or  term <= col, with col alone on one side
            if a.op not in ("<", "<=") or not isinstance(a.right, Col):
                continue
            col = a.right.name
            cols = a.left.columns()
            if col in ridx and cols and cols <= lidx.keys():
                return ("right", col, a.left, a.op == "<")
            if col in lidx and cols and cols <= ridx.keys():
                return ("left", col, a.left, a.op == "<")
    return None


def _band_join(band, left: Table, right: Table, check) -> list[tuple]:
    side, col, term, strict = band
    inner, outer = (right, left) if side == "right" else (left, right)
    ci = inner.columns.index(col)
    rows = sorted((r for r in inner.rows if r[ci] is not None and not isinstance(r[ci], str)), key=lambda r: r[ci])
    keys = [r[ci] for r in rows]
    low = _term_fn(term, outer.index())
    out: list[tuple] = []
    for o in outer.rows:
        v = low(o)
        if v is None or isinstance(v, str):
            continue
        start = bisect_left(keys, v)
        if strict:
            while start < len(keys) and keys[start] == v:
                start += 1
        for r in rows[start:]:
            row = o + r if side == "right" else r + o
            if check is None or check(row):
                out.append(row)
    return out


def eval_plan(plan: Plan | Node, doc: DocTable) -> Table:
    """Evaluate a plan over ``doc``; shared nodes are evaluated once."""
    return Interpreter(doc)(plan)


def items(table: Table) -> list:
    """Item column of a serialized result, in order."""
    return table.column("item")


# ---------------------------------------------------------------------------
# oracle


class _Oracle:
    def __init__(self, doc: DocTable):
        self.doc = doc
        self.rows = doc.rows
        self.parent = doc.parent

    def ancestors(self, n: int) -> list[int]:
        out = []
        p = self.parent[n]
        while p is not None:
            out.append(p)
            p = self.parent[p]
        return out

    def root(self, n: int) -> int:
        while self.parent[n] is not None:
            n = self.parent[n]
        return n

    def descendants(self, n: int) -> list[int]:
        out = []
        stack = list(reversed(self.doc.children(n)))
        while stack:
            m = stack.pop()
            out.append(m)
            stack.extend(reversed(self.doc.children(m)))
        return out

    def tree(self, n: int) -> list[int]:
        r = self.root(n)
        return [r] + self.descendants(r)

    def axis(self, n: int, axis: str) -> list[int]:
        if axis == "child":
            return self.doc.children(n)
        if axis == "attribute":
            return self.doc.attributes(n)
        if axis == "self":
            return [n]
        if axis == "parent":
            p = self.parent[n]
            return [] if p is None else [p]
        if axis == "ancestor":
            return self.ancestors(n)
        if axis == "ancestor-or-self":
            return [n] + self.ancestors(n)
        if axis == "descendant":
            return self.descendants(n)
        if axis == "descendant-or-self":
            return [n] + self.descendants(n)
        if axis == "following":
            skip = set(self.descendants(n))
            return [m for m in self.tree(n) if m > n and m not in skip]
        if axis == "preceding":
            skip = set(self.ancestors(n))
            return [m for m in self.tree(n) if m < n and m not in skip]
        raise fe.XQuerySyntaxError(f"unsupported axis {axis}", 0, 0)

    def matches(self, n: int, test: NodeTest) -> bool:
        row = self.rows[n]
        if test.kind == "node":
            return True
        if test.kind == "text":
            return row.kind == TEXT
        if test.kind == "document":
            return row.kind == DOC
        kind = ELEM if test.kind == "element" else ATTR
        return row.kind == kind and (test.name is None or row.name == test.name)

    def seq(self, e, env: dict) -> list[int]:
        if isinstance(e, fe.Doc):
            pre = self.doc.documents().get(e.uri)
            return [] if pre is None else [pre]
        if isinstance(e, fe.Var):
            return env[e.name]
        if isinstance(e, fe.ContextItem):
            return env["."]
        if isinstance(e, fe.Empty):
            return []
        if isinstance(e, fe.Step):
            out = set()
            for n in self.seq(e.input, env):
                out.update(m for m in self.axis(n, e.axis) if self.matches(m, e.test))
            return sorted(out)
        if isinstance(e, fe.Ddo):
            return sorted(set(self.seq(e.expr, env)))
        if isinstance(e, fe.For):
            out: list[int] = []
            for n in self.seq(e.seq, env):
                out.extend(self.seq(e.body, {**env, e.var: [n]}))
            return out
        if isinstance(e, fe.If):
            return self.seq(e.then, env) if self.truth(e.cond, env) else []
        if isinstance(e, fe.Filter):
            return [n for n in self.seq(e.input, env) if self.truth(e.pred, {**env, ".": [n]})]
        raise EvaluationError(f"not a sequence expression: {e!r}")

    def truth(self, e, env: dict) -> bool:
        if isinstance(e, fe.Ebv):
            return self.truth(e.expr, env)
        if isinstance(e, fe.Comp):
            lit = e.literal
            op = _OPS[e.op]
            for n in self.seq(e.left, env):
                row = self.rows[n]
                v = row.value if isinstance(lit, str) else row.data
                if v is not None and op(v, lit):
                    return True
            return False
        return bool(self.seq(e, env))


def eval_xquery(e, doc: DocTable) -> list[int]:
    """Evaluate a surface or Core expression by walking the document tree."""
    if isinstance(e, str):
        e = fe.parse(e)
    return _Oracle(doc).seq(e, {})


# ---------------------------------------------------------------------------
# random queries

DEFAULT_TAGS = (
    "site", "people", "person", "name", "age", "regions", "item", "price", "annotation",
    "open_auctions", "open_auction", "initial", "bidder", "time", "increase", "current", "itemref",
)
DEFAULT_ATTRS = ("id", "category", "person", "item")
DEFAULT_LITERALS = ("gold", "rare", "1", "c2", 15, 30, 4.2, 100, 500)

_AXIS_WEIGHTS = {
    "child": 5, "descendant": 7, "descendant-or-self": 2, "self": 1, "following": 2,
    "attribute": 2, "parent": 2, "ancestor": 2, "ancestor-or-self": 1, "preceding": 2,
}


class _Gen:
    def __init__(self, rng: random.Random, tags, attrs, literals, uri):
        self.rng = rng
        self.tags = tags
        self.attrs = attrs
        self.literals = literals
        self.uri = uri
        self.nvar = 0

    def fresh(self) -> str:
        self.nvar += 1
        return f"v{self.nvar}"

    # each generator returns (expr, may_attr)
    def leaf(self, scope: dict[str, bool]):
        if scope and self.rng.random() < 0.75:
            name = self.rng.choice(sorted(scope))
            return fe.Var(name), scope[name]
        return fe.Doc(self.uri), False

    def step(self, inp, may_attr: bool):
        rng = self.rng
        weights = dict(_AXIS_WEIGHTS)
        if may_attr:
            # descendant-or-self from an attribute differs from the W3C axis
            del weights["descendant-or-self"]
        axis = rng.choices(list(weights), list(weights.values()))[0]
        if axis == "attribute":
            r = rng.random()
            test = NodeTest("attribute", None if r < 0.2 else rng.choice(self.attrs))
            if r > 0.9:
                test = NodeTest("node")
        else:
            r = rng.random()
            if r < 0.65:
                test = NodeTest("element", rng.choice(self.tags))
            elif r < 0.75:
                test = NodeTest("element")
            elif r < 0.85:
                test = NodeTest("node")
            elif r < 0.95:
                test = NodeTest("text")
            else:
                test = NodeTest("document")
        out_attr = axis == "attribute" or (
            may_attr and axis in ("self", "ancestor-or-self") and test.kind in ("node", "attribute")
        )
        return fe.Step(inp, axis, test), out_attr

    def seq(self, depth: int, scope: dict[str, bool], top: bool = False):
        rng = self.rng
        if depth <= 0:
            return self.leaf(scope)
        if depth == 1:
            inp, ma = self.leaf(scope) if not top else (fe.Doc(self.uri), False)
            return self.step(inp, ma)
        r = rng.random()
        if r < 0.35:
            inp, ma = self.seq(depth - 1, scope)
            return self.step(inp, ma)
        if r < 0.6:
            var = self.fresh()
            s, ma = self.seq(depth - 1, scope)
            body, bma = self.seq(depth - 1, {**scope, var: ma})
            return fe.For(var, s, body), bma
        if r < 0.75:
            cond = self.cond(depth - 1, scope)
            then, ma = self.seq(depth - 1, scope)
            return fe.If(cond, then), ma
        if r < 0.97:
            inp, ma = self.seq(depth - 1, scope)
            pred = self.cond(depth - 1, {**scope, ".": ma})
            return fe.Filter(inp, pred), ma
        return fe.Empty(), False

    def cond(self, depth: int, scope: dict[str, bool]):
        e, _ = self.rel(depth, scope)
        if self.rng.random() < 0.3:
            op = self.rng.choice(fe.COMPARISON_OPS)
            return fe.Comp(e, op, self.rng.choice(self.literals))
        return e

    def rel(self, depth: int, scope: dict[str, bool]):
        # inside predicates, paths usually start at the context item
        if "." in scope:
            inner = {k: v for k, v in scope.items() if k != "."}
            if self.rng.random() < 0.7:
                e, ma = self.step(fe.ContextItem(), scope["."])
                for _ in range(self.rng.randrange(max(depth, 1))):
                    e, ma = self.step(e, ma)
                return e, ma
            return self.seq(depth, inner)
        return self.seq(max(depth, 1), scope)


def gen_query(
    seed: int,
    depth: int = 3,
    tags: Sequence[str] = DEFAULT_TAGS,
    attrs: Sequence[str] = DEFAULT_ATTRS,
    literals: Sequence = DEFAULT_LITERALS,
    uri: str = "auction.xml",
) -> fe.Expr:
    """Random well-scoped query of nesting depth at most ``depth``; deterministic per seed."""
    rng = random.Random(seed)
    e, _ = _Gen(rng, tuple(tags), tuple(attrs), tuple(literals), uri).seq(max(depth, 1), {}, top=True)
    return e
