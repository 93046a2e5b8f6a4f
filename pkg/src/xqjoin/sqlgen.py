"""SQL emission for isolated and stacked plans.

An isolated plan becomes one SELECT-DISTINCT-FROM-WHERE-ORDER BY block:
every path occurrence of the document table gets its own alias, the join
graph's predicates become WHERE conjuncts, and the tail turns into the
DISTINCT and ORDER BY clauses.  Any validated plan can also be emitted as
a chain of common table expressions, one per operator.

In both forms the first output column carries the item.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .algebra import (
    DOC_COLUMNS,
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
    walk,
)
from .infoset import ATTR, DOC, ELEM, TEXT

GRAPH_OPERATORS = (Join, Cross, Select, Attach, Project, DocRef, LitTable)
KIND_WORDS = frozenset((DOC, ELEM, ATTR, TEXT))


class NotIsolated(Exception):
    """The plan is not join graph plus tail; ``offenders`` name the blocking operators."""

    def __init__(self, offenders: list[str]):
        super().__init__("plan is not isolated: " + ", ".join(offenders))
        self.offenders = offenders


@dataclass(frozen=True)
class Dialect:
    """Rendering knobs.

    ``bare_kinds`` prints node kinds as bare words (``kind = ELEM``) the way
    the encoding is usually written down; engines need them quoted.
    ``end_column`` names a stored pre+size column to use instead of the sum.
    """

    doc_table: str = "doc"
    bare_kinds: bool = True
    end_column: str | None = None


EXECUTABLE = Dialect(bare_kinds=False)


# ---------------------------------------------------------------------------
# normal form


def to_normal_form(plan: Plan) -> tuple[list[Node], Node]:
    """Split ``plan`` into its tail (root first) and the root of its join graph."""
    root = plan.root
    if not isinstance(root, Ser):
        raise NotIsolated([f"root {root.describe()}"])
    tail: list[Node] = [root]
    chain: list[Node] = []
    n = root.child
    while isinstance(n, (Project, Rank, Distinct)):
        chain.append(n)
        n = n.child
    tail += chain
    graph = n
    offenders = []
    if sum(isinstance(m, Rank) for m in tail) > 1:
        offenders.append("more than one rank in the tail")
    if sum(isinstance(m, Distinct) for m in tail) > 1:
        offenders.append("more than one duplicate elimination in the tail")
    for m in walk(graph):
        if not isinstance(m, GRAPH_OPERATORS):
            offenders.append(m.describe())
    if offenders:
        raise NotIsolated(offenders)
    return tail, graph


# ---------------------------------------------------------------------------
# expressions over aliases
#
# ("col", alias, column) | ("lit", value) | ("add", e1, e2) | ("rank", (e, ...))


def _lit(value) -> tuple:
    return ("lit", value)


def render_value(value, dialect: Dialect) -> str:
    if value is None:
        return "NULL"
    if isinstance(value, str):
        if dialect.bare_kinds and value in KIND_WORDS:
            return value
        return "'" + value.replace("'", "''") + "'"
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value)


def render_expr(e: tuple, dialect: Dialect) -> str:
    tag = e[0]
    if tag == "col":
        return f"{e[1]}.{e[2]}"
    if tag == "lit":
        return render_value(e[1], dialect)
    if tag == "add":
        left, right = e[1], e[2]
        if (
            dialect.end_column
            and left[0] == right[0] == "col"
            and left[1] == right[1]
            and (left[2], right[2]) == ("pre", "size")
        ):
            return f"{left[1]}.{dialect.end_column}"
        return f"{render_expr(left, dialect)} + {render_expr(right, dialect)}"
    raise ValueError(f"cannot render {e!r}")


def _expand(e: tuple) -> list[tuple]:
    return list(e[1]) if e[0] == "rank" else [e]


def _term(term, env: dict[str, tuple]) -> tuple:
    if isinstance(term, Col):
        return env[term.name]
    if isinstance(term, Const):
        return _lit(term.value)
    if isinstance(term, Add):
        return ("add", _term(term.left, env), _term(term.right, env))
    raise ValueError(f"unsupported term {term!r}")


@dataclass(frozen=True)
class Conjunct:
    op: str
    left: tuple
    right: tuple
    upper: tuple | None = None  # BETWEEN left AND upper, applied to ``right``

    def render(self, dialect: Dialect) -> str:
        if self.op == "between":
            lo = render_expr(self.left, dialect)
            hi = render_expr(self.upper, dialect)
            return f"{render_expr(self.right, dialect)} BETWEEN {lo} + 1 AND {hi}"
        return f"{render_expr(self.left, dialect)} {self.op} {render_expr(self.right, dialect)}"


def _conjuncts(pred: Iterable[Atom], env: dict[str, tuple]) -> list[Conjunct]:
    """Translate atoms, fusing ``l < m AND m <= u`` over pre into one BETWEEN."""
    atoms = [Conjunct(a.op, _term(a.left, env), _term(a.right, env)) for a in pred]
    out: list[Conjunct] = []
    used: set[int] = set()
    for i, lo in enumerate(atoms):
        if i in used:
            continue
        if lo.op == "<" and lo.right[0] == "col" and lo.right[2] == "pre" and lo.left[0] == "col":
            for j, hi in enumerate(atoms):
                if j != i and j not in used and hi.op == "<=" and hi.left == lo.right:
                    used.update((i, j))
                    out.append(Conjunct("between", lo.left, lo.right, hi.right))
                    break
            else:
                out.append(lo)
        else:
            out.append(lo)
    return out


# ---------------------------------------------------------------------------
# single block


@dataclass
class SqlBlock:
    relations: list[tuple[str, str]] = field(default_factory=list)
    where: list[Conjunct] = field(default_factory=list)
    select: list[str] = field(default_factory=list)
    distinct: bool = False
    order_by: list[str] = field(default_factory=list)
    dialect: Dialect = Dialect()

    def where_text(self) -> list[str]:
        return [c.render(self.dialect) for c in self.where]

    def text(self) -> str:
        head = "SELECT DISTINCT " if self.distinct else "SELECT "
        lines = [head + ",\n       ".join(self.select)]
        if self.relations:
            lines.append("  FROM " + ", ".join(f"{src} AS {alias}" for alias, src in self.relations))
        conds = self.where_text()
        if conds:
            lines.append(" WHERE " + "\n   AND ".join(conds))
        if self.order_by:
            lines.append(" ORDER BY " + ", ".join(self.order_by))
        return "\n".join(lines) + "\n"

    __str__ = text


class _Flattener:
    def __init__(self, dialect: Dialect):
        self.dialect = dialect
        self.block = SqlBlock(dialect=dialect)
        self.n_doc = 0
        self.n_lit = 0

    def flat(self, node: Node) -> dict[str, tuple]:
        if isinstance(node, DocRef):
            self.n_doc += 1
            alias = f"d{self.n_doc}"
            self.block.relations.append((alias, self.dialect.doc_table))
            return {c: ("col", alias, c) for c in DOC_COLUMNS}
        if isinstance(node, LitTable):
            return self.literal(node)
        if isinstance(node, Project):
            env = self.flat(node.child)
            return {a: env[b] for a, b in node.mapping}
        if isinstance(node, Select):
            env = self.flat(node.child)
            self.block.where.extend(_conjuncts(node.pred, env))
            return env
        if isinstance(node, Attach):
            env = dict(self.flat(node.child))
            env[node.col] = _lit(node.value)
            return env
        if isinstance(node, (Join, Cross)):
            # the context (right) operand first: outer loops get the low aliases
            env = dict(self.flat(node.right))
            env.update(self.flat(node.left))
            if isinstance(node, Join):
                self.block.where.extend(_conjuncts(node.pred, env))
            return env
        raise NotIsolated([node.describe()])

    def literal(self, node: LitTable) -> dict[str, tuple]:
        if not node.rows:
            self.block.where.append(Conjunct("=", _lit(1), _lit(0)))
            return {c: _lit(None) for c in node.columns}
        if len(node.rows) == 1:
            return {c: _lit(v) for c, v in zip(node.columns, node.rows[0])}
        self.n_lit += 1
        alias = f"t{self.n_lit}"
        selects = [
            "SELECT " + ", ".join(f"{render_value(v, EXECUTABLE)} AS {c}" for c, v in zip(node.columns, row))
            for row in node.rows
        ]
        self.block.relations.append((alias, "(" + " UNION ALL ".join(selects) + ")"))
        return {c: ("col", alias, c) for c in node.columns}


def single_block(plan: Plan, dialect: Dialect = Dialect()) -> SqlBlock:
    """The structured single block for an isolated plan."""
    tail, graph = to_normal_form(plan)
    fl = _Flattener(dialect)
    env = fl.flat(graph)
    block = fl.block
    distinct_on: list[tuple] | None = None
    for node in reversed(tail):
        if isinstance(node, Project):
            env = {a: env[b] for a, b in node.mapping}
        elif isinstance(node, Rank):
            env = dict(env)
            env[node.col] = ("rank", tuple(e for c in node.order for e in _expand(env[c])))
        elif isinstance(node, Distinct):
            distinct_on = [e for c in node.cols for e in _expand(env[c])]
    item = env["item"]
    pos = _expand(env["pos"])

    select: list[str] = []
    covered: set[tuple] = set()
    if item[0] == "col" and item[1].startswith("d") and item[2] == "pre":
        # the whole node row: enough to serialize it, and pre is a key
        select.append(f"{item[1]}.*")
        covered.update(("col", item[1], c) for c in DOC_COLUMNS)
    else:
        select.append(f"{render_expr(item, dialect)} AS item")
        covered.add(item)
    extra = 0
    for e in distinct_on or []:
        if e in covered or e[0] == "lit":
            continue
        covered.add(e)
        extra += 1
        select.append(f"{render_expr(e, dialect)} AS item{extra}")
    block.select = select
    block.distinct = distinct_on is not None

    order: list[str] = []
    for e in pos + [item]:
        if e[0] == "lit":
            continue
        text = render_expr(e, dialect)
        if text not in order:
            order.append(text)
    block.order_by = order
    return block


def emit_single_block(plan: Plan, dialect: Dialect = Dialect()) -> str:
    """SQL text of an isolated plan; raises NotIsolated otherwise."""
    return single_block(plan, dialect).text()


# ---------------------------------------------------------------------------
# stacked fallback


def _col_pred(pred: Iterable[Atom], dialect: Dialect) -> str:
    def term(t) -> str:
        if isinstance(t, Col):
            return t.name
        if isinstance(t, Const):
            return render_value(t.value, dialect)
        return f"{term(t.left)} + {term(t.right)}"

    return " AND ".join(f"{term(a.left)} {a.op} {term(a.right)}" for a in pred)


def emit_stacked(plan: Plan, dialect: Dialect = EXECUTABLE) -> str:
    """One common table expression per operator, shared subplans emitted once."""
    names: dict[int, str] = {}
    ctes: list[str] = []
    final = None
    for node in plan.nodes:
        name = f"t{len(names)}"
        names[id(node)] = name
        kids = [names[id(c)] for c in node.children]
        cols = ", ".join(node.cols)
        if isinstance(node, DocRef):
            body = f"SELECT {cols} FROM {dialect.doc_table}"
        elif isinstance(node, LitTable):
            if node.rows:
                rows = ", ".join("(" + ", ".join(render_value(v, dialect) for v in r) + ")" for r in node.rows)
                body = f"VALUES {rows}"
            else:
                body = "SELECT " + ", ".join("NULL" for _ in node.columns) + " WHERE 1 = 0"
            ctes.append(f"{name}({cols}) AS ({body})")
            continue
        elif isinstance(node, Project):
            body = "SELECT " + ", ".join(b if a == b else f"{b} AS {a}" for a, b in node.mapping) + f" FROM {kids[0]}"
        elif isinstance(node, Select):
            body = f"SELECT {cols} FROM {kids[0]} WHERE {_col_pred(node.pred, dialect)}"
        elif isinstance(node, Join):
            body = f"SELECT {cols} FROM {kids[0]}, {kids[1]} WHERE {_col_pred(node.pred, dialect)}"
        elif isinstance(node, Cross):
            body = f"SELECT {cols} FROM {kids[0]}, {kids[1]}"
        elif isinstance(node, Distinct):
            body = f"SELECT DISTINCT {cols} FROM {kids[0]}"
        elif isinstance(node, Attach):
            inner = ", ".join(node.child.cols)
            body = f"SELECT {inner}, {render_value(node.value, dialect)} AS {node.col} FROM {kids[0]}"
        elif isinstance(node, RowId):
            inner = node.child.cols
            order = [c for c in ("iter", "pos") if c in inner] + [c for c in inner if c not in ("iter", "pos")]
            body = (
                f"SELECT {', '.join(inner)}, ROW_NUMBER() OVER (ORDER BY {', '.join(order)}) AS {node.col} "
                f"FROM {kids[0]}"
            )
        elif isinstance(node, Rank):
            inner = ", ".join(node.child.cols)
            body = f"SELECT {inner}, RANK() OVER (ORDER BY {', '.join(node.order)}) AS {node.col} FROM {kids[0]}"
        elif isinstance(node, Ser):
            final = f"SELECT item, pos FROM {kids[0]} ORDER BY pos, item"
            continue
        else:
            raise ValueError(f"unknown operator {node.describe()}")
        ctes.append(f"{name} AS ({body})")
    if final is None:
        raise ValueError("plan has no serialization root")
    return "WITH " + ",\n     ".join(ctes) + "\n" + final + "\n"
