"""Table algebra IR: operators, predicates and plan DAG utilities.

Operator nodes are immutable and hash-consed: building the same operator
over the same operands twice yields the identical object.  Sharing of
subplans (most prominently the single ``DocRef`` leaf) therefore falls out
of construction and can be tested with ``is``.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Union

DOC_COLUMNS: tuple[str, ...] = ("pre", "size", "level", "kind", "name", "value", "data", "frag")

COMPARISONS = ("=", "!=", "<", "<=", ">", ">=")

_FLIPPED = {"=": "=", "!=": "!=", "<": ">", "<=": ">=", ">": "<", ">=": "<="}


# ---------------------------------------------------------------------------
# predicate terms


@dataclass(frozen=True)
class Col:
    name: str

    def columns(self) -> frozenset[str]:
        return frozenset((self.name,))

    def rename(self, mapping: Mapping[str, str]) -> "Col":
        return Col(mapping.get(self.name, self.name))

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Const:
    value: object

    def columns(self) -> frozenset[str]:
        return frozenset()

    def rename(self, mapping: Mapping[str, str]) -> "Const":
        return self

    def __str__(self) -> str:
        return format_value(self.value)


@dataclass(frozen=True)
class Add:
    """Sum of two terms, e.g. ``pre_c + size_c`` or ``level_c + 1``."""

    left: "Term"
    right: "Term"

    def columns(self) -> frozenset[str]:
        return self.left.columns() | self.right.columns()

    def rename(self, mapping: Mapping[str, str]) -> "Add":
        return Add(self.left.rename(mapping), self.right.rename(mapping))

    def __str__(self) -> str:
        return f"{self.left} + {self.right}"


Term = Union[Col, Const, Add]


@dataclass(frozen=True)
class Atom:
    """A single comparison ``left op right``."""

    op: str
    left: Term
    right: Term

    def __post_init__(self) -> None:
        if self.op not in COMPARISONS:
            raise ValueError(f"unknown comparison {self.op!r}")

    def columns(self) -> frozenset[str]:
        return self.left.columns() | self.right.columns()

    def rename(self, mapping: Mapping[str, str]) -> "Atom":
        return Atom(self.op, self.left.rename(mapping), self.right.rename(mapping))

    def flipped(self) -> "Atom":
        return Atom(_FLIPPED[self.op], self.right, self.left)

    def __str__(self) -> str:
        return f"{self.left} {self.op} {self.right}"


Pred = tuple  # tuple[Atom, ...], read as a conjunction


def pred_columns(pred: Iterable[Atom]) -> frozenset[str]:
    out: frozenset[str] = frozenset()
    for atom in pred:
        out |= atom.columns()
    return out


def rename_pred(pred: Iterable[Atom], mapping: Mapping[str, str]) -> tuple[Atom, ...]:
    return tuple(atom.rename(mapping) for atom in pred)


def format_pred(pred: Iterable[Atom]) -> str:
    parts = [str(a) for a in pred]
    return " AND ".join(parts) if parts else "true"


def format_value(value: object) -> str:
    if value is None:
        return "NULL"
    if isinstance(value, str):
        return "'" + value.replace("'", "''") + "'"
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value)


def equi_columns(pred: tuple[Atom, ...]) -> tuple[str, str] | None:
    """Return ``(a, b)`` when ``pred`` is the single column equality ``a = b``."""
    if len(pred) != 1:
        return None
    atom = pred[0]
    if atom.op == "=" and isinstance(atom.left, Col) and isinstance(atom.right, Col):
        return atom.left.name, atom.right.name
    return None


def eq(a: str, b: str) -> tuple[Atom, ...]:
    return (Atom("=", Col(a), Col(b)),)


# ---------------------------------------------------------------------------
# operators

_INTERN: "weakref.WeakValueDictionary[tuple, Node]" = weakref.WeakValueDictionary()


def _freeze(value: object) -> object:
    # keep 1, 1.0 and True apart in intern keys
    if isinstance(value, tuple):
        return tuple(_freeze(v) for v in value)
    return (type(value).__name__, value)


class Node:
    """Base class of all operators.  Instances are interned."""

    __slots__ = ("children", "params", "_cols", "__weakref__")
    label = "?"

    children: tuple["Node", ...]
    params: tuple

    @classmethod
    def _make(cls, children: tuple["Node", ...], params: tuple) -> "Node":
        key = (cls, tuple(id(c) for c in children), _freeze(params))
        node = _INTERN.get(key)
        if node is None:
            node = object.__new__(cls)
            node.children = children
            node.params = params
            node._cols = None
            _INTERN[key] = node
        return node

    @property
    def cols(self) -> tuple[str, ...]:
        """Output schema, in a stable order."""
        if self._cols is None:
            self._cols = self._schema()
        return self._cols

    def _schema(self) -> tuple[str, ...]:
        raise NotImplementedError

    def with_children(self, children: tuple["Node", ...]) -> "Node":
        return type(self)._make(tuple(children), self.params)

    def describe(self) -> str:
        return self.label

    def __repr__(self) -> str:
        return f"<{self.describe()} #{id(self) & 0xFFFFFF:x}>"

    # interned nodes compare by identity
    __hash__ = object.__hash__

    def __eq__(self, other: object) -> bool:
        return self is other

    def __reduce__(self):
        raise TypeError("plan nodes are not picklable")


class DocRef(Node):
    __slots__ = ()
    label = "doc"

    def __new__(cls) -> "DocRef":
        return cls._make((), ())  # type: ignore[return-value]

    def _schema(self) -> tuple[str, ...]:
        return DOC_COLUMNS


class LitTable(Node):
    __slots__ = ()
    label = "lit"

    def __new__(cls, columns: Iterable[str], rows: Iterable[Iterable[object]] = ()) -> "LitTable":
        return cls._make((), (tuple(columns), tuple(tuple(r) for r in rows)))  # type: ignore[return-value]

    @property
    def columns(self) -> tuple[str, ...]:
        return self.params[0]

    @property
    def rows(self) -> tuple[tuple, ...]:
        return self.params[1]

    def _schema(self) -> tuple[str, ...]:
        return self.columns

    def describe(self) -> str:
        rows = "; ".join(",".join(format_value(v) for v in r) for r in self.rows)
        return f"lit[{','.join(self.columns)}]({rows})"


class Ser(Node):
    __slots__ = ()
    label = "ser"

    def __new__(cls, child: Node) -> "Ser":
        return cls._make((child,), ())  # type: ignore[return-value]

    @property
    def child(self) -> Node:
        return self.children[0]

    def _schema(self) -> tuple[str, ...]:
        return ("pos", "item")


class Project(Node):
    __slots__ = ()
    label = "project"

    def __new__(cls, child: Node, mapping: Iterable[tuple[str, str] | str]) -> "Project":
        pairs = tuple((m, m) if isinstance(m, str) else (m[0], m[1]) for m in mapping)
        return cls._make((child,), (pairs,))  # type: ignore[return-value]

    @property
    def child(self) -> Node:
        return self.children[0]

    @property
    def mapping(self) -> tuple[tuple[str, str], ...]:
        """``(output, input)`` pairs."""
        return self.params[0]

    def _schema(self) -> tuple[str, ...]:
        return tuple(out for out, _ in self.mapping)

    def describe(self) -> str:
        parts = [out if out == src else f"{out}:{src}" for out, src in self.mapping]
        return f"project[{','.join(parts)}]"


class Select(Node):
    __slots__ = ()
    label = "select"

    def __new__(cls, child: Node, pred: Iterable[Atom]) -> "Select":
        return cls._make((child,), (tuple(pred),))  # type: ignore[return-value]

    @property
    def child(self) -> Node:
        return self.children[0]

    @property
    def pred(self) -> tuple[Atom, ...]:
        return self.params[0]

    def _schema(self) -> tuple[str, ...]:
        return self.child.cols

    def describe(self) -> str:
        return f"select[{format_pred(self.pred)}]"


class Join(Node):
    __slots__ = ()
    label = "join"

    def __new__(cls, left: Node, right: Node, pred: Iterable[Atom]) -> "Join":
        return cls._make((left, right), (tuple(pred),))  # type: ignore[return-value]

    @property
    def left(self) -> Node:
        return self.children[0]

    @property
    def right(self) -> Node:
        return self.children[1]

    @property
    def pred(self) -> tuple[Atom, ...]:
        return self.params[0]

    def _schema(self) -> tuple[str, ...]:
        return self.left.cols + self.right.cols

    def describe(self) -> str:
        return f"join[{format_pred(self.pred)}]"


class Cross(Node):
    __slots__ = ()
    label = "cross"

    def __new__(cls, left: Node, right: Node) -> "Cross":
        return cls._make((left, right), ())  # type: ignore[return-value]

    @property
    def left(self) -> Node:
        return self.children[0]

    @property
    def right(self) -> Node:
        return self.children[1]

    def _schema(self) -> tuple[str, ...]:
        return self.left.cols + self.right.cols


class Distinct(Node):
    __slots__ = ()
    label = "distinct"

    def __new__(cls, child: Node) -> "Distinct":
        return cls._make((child,), ())  # type: ignore[return-value]

    @property
    def child(self) -> Node:
        return self.children[0]

    def _schema(self) -> tuple[str, ...]:
        return self.child.cols


class Attach(Node):
    __slots__ = ()
    label = "attach"

    def __new__(cls, child: Node, col: str, value: object) -> "Attach":
        return cls._make((child,), (col, value))  # type: ignore[return-value]

    @property
    def child(self) -> Node:
        return self.children[0]

    @property
    def col(self) -> str:
        return self.params[0]

    @property
    def value(self) -> object:
        return self.params[1]

    def _schema(self) -> tuple[str, ...]:
        return self.child.cols + (self.col,)

    def describe(self) -> str:
        return f"attach[{self.col}:{format_value(self.value)}]"


class RowId(Node):
    __slots__ = ()
    label = "rowid"

    def __new__(cls, child: Node, col: str) -> "RowId":
        return cls._make((child,), (col,))  # type: ignore[return-value]

    @property
    def child(self) -> Node:
        return self.children[0]

    @property
    def col(self) -> str:
        return self.params[0]

    def _schema(self) -> tuple[str, ...]:
        return self.child.cols + (self.col,)

    def describe(self) -> str:
        return f"rowid[{self.col}]"


class Rank(Node):
    __slots__ = ()
    label = "rank"

    def __new__(cls, child: Node, col: str, order: Iterable[str]) -> "Rank":
        return cls._make((child,), (col, tuple(order)))  # type: ignore[return-value]

    @property
    def child(self) -> Node:
        return self.children[0]

    @property
    def col(self) -> str:
        return self.params[0]

    @property
    def order(self) -> tuple[str, ...]:
        return self.params[1]

    def _schema(self) -> tuple[str, ...]:
        return self.child.cols + (self.col,)

    def describe(self) -> str:
        return f"rank[{self.col}:<{','.join(self.order)}>]"


UNARY = (Ser, Project, Select, Distinct, Attach, RowId, Rank)
BINARY = (Join, Cross)
LEAVES = (DocRef, LitTable)


def cols(node: Node) -> frozenset[str]:
    """Column set of the table produced by ``node``."""
    return frozenset(node.cols)


# ---------------------------------------------------------------------------
# plans


@dataclass(frozen=True)
class SchemaError:
    node: Node
    message: str

    def __str__(self) -> str:
        return f"{self.node.describe()}: {self.message}"


def walk(root: Node) -> list[Node]:
    """All nodes below ``root`` (inclusive), operands before consumers."""
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for child in reversed(node.children):
            if id(child) not in seen:
                stack.append((child, False))
    return order


def substitute(root: Node, replacements: Mapping[Node, Node]) -> Node:
    """Rebuild ``root`` with every occurrence of a key node replaced."""
    if not replacements:
        return root
    memo: dict[int, Node] = {}
    for node in walk(root):
        if node in replacements:
            memo[id(node)] = replacements[node]
            continue
        kids = tuple(memo[id(c)] for c in node.children)
        if all(k is c for k, c in zip(kids, node.children)):
            memo[id(node)] = node
        else:
            memo[id(node)] = node.with_children(kids)
    return memo[id(root)]


class Plan:
    """A rooted operator DAG."""

    def __init__(self, root: Node):
        self.root = root
        self._nodes: list[Node] | None = None
        self._parents: dict[int, list[Node]] | None = None
        self._below: dict[int, frozenset[int]] | None = None

    @property
    def nodes(self) -> list[Node]:
        if self._nodes is None:
            self._nodes = walk(self.root)
        return self._nodes

    def parents(self, node: Node) -> list[Node]:
        """Distinct consumers of ``node`` (one entry per operand edge)."""
        if self._parents is None:
            parents: dict[int, list[Node]] = {id(n): [] for n in self.nodes}
            for n in self.nodes:
                for c in n.children:
                    parents[id(c)].append(n)
            self._parents = parents
        return self._parents[id(node)]

    def __contains__(self, node: Node) -> bool:
        if self._parents is None:
            self.parents(self.root)
        assert self._parents is not None
        return id(node) in self._parents

    def reachable(self, a: Node, b: Node) -> bool:
        """True iff ``a`` lies in the operand sub-DAG of ``b`` (reflexive)."""
        if self._below is None:
            below: dict[int, frozenset[int]] = {}
            for n in self.nodes:
                acc = {id(n)}
                for c in n.children:
                    acc |= below[id(c)]
                below[id(n)] = frozenset(acc)
            self._below = below
        return id(a) in self._below[id(b)]

    def validate(self) -> list[SchemaError]:
        return validate(self)

    def count(self, kind: type) -> int:
        return sum(1 for n in self.nodes if isinstance(n, kind))

    def occurrences(self, node: Node) -> int:
        """Number of root-to-``node`` paths (tree occurrences of a shared node)."""
        paths: dict[int, int] = {id(self.root): 1}
        for n in reversed(self.nodes):
            k = paths.get(id(n), 0)
            for c in n.children:
                paths[id(c)] = paths.get(id(c), 0) + k
        return paths.get(id(node), 0)

    def numbering(self) -> dict[int, int]:
        return {id(n): i for i, n in enumerate(self.nodes)}

    def dump(self, annotate: Mapping[int, str] | None = None) -> str:
        """One line per node: id, operator with parameters, operand ids."""
        num = self.numbering()
        lines = []
        for n in self.nodes:
            kids = " ".join(f"n{num[id(c)]}" for c in n.children)
            line = f"n{num[id(n)]} {n.describe()}"
            if kids:
                line += f" <- {kids}"
            if annotate and id(n) in annotate:
                line += f"  {{{annotate[id(n)]}}}"
            lines.append(line)
        return "\n".join(lines) + "\n"

    def to_dot(self) -> str:
        num = self.numbering()
        out = ["digraph plan {", "  node [shape=box, fontname=monospace];"]
        for n in self.nodes:
            label = n.describe().replace("\\", "\\\\").replace('"', '\\"')
            out.append(f'  n{num[id(n)]} [label="{label}"];')
        for n in self.nodes:
            for c in n.children:
                out.append(f"  n{num[id(c)]} -> n{num[id(n)]};")
        out.append("}")
        return "\n".join(out) + "\n"

    def __iter__(self) -> Iterator[Node]:
        return iter(self.nodes)

    def __len__(self) -> int:
        return len(self.nodes)


def reachable(plan: Plan, a: Node, b: Node) -> bool:
    return plan.reachable(a, b)


def validate(plan: Plan) -> list[SchemaError]:
    """Check every operator invariant; returns the violations found."""
    errors: list[SchemaError] = []

    def err(node: Node, msg: str) -> None:
        errors.append(SchemaError(node, msg))

    if not isinstance(plan.root, Ser):
        err(plan.root, "plan root is not a serialization operator")
    for node in plan.nodes:
        if isinstance(node, Ser) and node is not plan.root:
            err(node, "serialization operator below the root")
        for child in node.children:
            if isinstance(child, Ser):
                err(node, "consumes a serialization operator")
        try:
            _check(node, err)
        except Exception as exc:  # malformed parameters
            err(node, f"malformed operator: {exc}")
    return errors


def _check(node: Node, err) -> None:
    if isinstance(node, LitTable):
        if len(set(node.columns)) != len(node.columns):
            err(node, "duplicate literal column")
        for row in node.rows:
            if len(row) != len(node.columns):
                err(node, "literal row width differs from column count")
        return
    if isinstance(node, DocRef):
        return
    if isinstance(node, Ser):
        have = cols(node.child)
        for c in ("pos", "item"):
            if c not in have:
                err(node, f"missing column {c}")
        return
    if isinstance(node, Project):
        have = cols(node.child)
        if not node.mapping:
            err(node, "empty projection")
        outs = [o for o, _ in node.mapping]
        if len(set(outs)) != len(outs):
            err(node, "duplicate output column")
        for _, src in node.mapping:
            if src not in have:
                err(node, f"unknown column {src}")
        return
    if isinstance(node, Select):
        for c in sorted(pred_columns(node.pred) - cols(node.child)):
            err(node, f"unknown column {c}")
        return
    if isinstance(node, (Join, Cross)):
        overlap = cols(node.left) & cols(node.right)
        if overlap:
            err(node, f"operand columns overlap: {', '.join(sorted(overlap))}")
        if isinstance(node, Join):
            for c in sorted(pred_columns(node.pred) - cols(node.left) - cols(node.right)):
                err(node, f"unknown column {c}")
        return
    if isinstance(node, Distinct):
        return
    if isinstance(node, (Attach, RowId)):
        if node.col in cols(node.child):
            err(node, f"column {node.col} already present")
        return
    if isinstance(node, Rank):
        have = cols(node.child)
        if node.col in have:
            err(node, f"column {node.col} already present")
        for c in node.order:
            if c not in have:
                err(node, f"unknown column {c}")
        return
    err(node, "unknown operator")


class FreshNames:
    """Column name generator that avoids every name already in use."""

    def __init__(self, taken: Iterable[str] = ()):
        self.taken = set(taken)
        self.counter = 0

    def add(self, names: Iterable[str]) -> None:
        self.taken.update(names)

    def __call__(self, base: str) -> str:
        stem = base.rstrip("0123456789") or base
        while True:
            self.counter += 1
            name = f"{stem}{self.counter}"
            if name not in self.taken:
                self.taken.add(name)
                return name


def all_columns(root: Node) -> set[str]:
    names: set[str] = set()
    for n in walk(root):
        names.update(n.cols)
        if isinstance(n, Project):
            names.update(src for _, src in n.mapping)
    return names


# ---------------------------------------------------------------------------
# predicate evaluation over a row accessor


def eval_term(term: Term, get) -> object:
    if isinstance(term, Col):
        return get(term.name)
    if isinstance(term, Const):
        return term.value
    left = eval_term(term.left, get)
    right = eval_term(term.right, get)
    if left is None or right is None:
        return None
    return left + right


def eval_atom(atom: Atom, get) -> bool:
    """SQL-style comparison: anything compared with NULL is false."""
    left = eval_term(atom.left, get)
    right = eval_term(atom.right, get)
    if left is None or right is None:
        return False
    if isinstance(left, str) != isinstance(right, str):
        return False
    op = atom.op
    if op == "=":
        return left == right
    if op == "!=":
        return left != right
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    return left >= right


def eval_pred(pred: Iterable[Atom], get) -> bool:
    return all(eval_atom(a, get) for a in pred)
