"""Tabular XML infoset: pre/size/level node rows plus the axis vocabulary.

Every node of a document becomes one row.  ``pre`` is the document-order
rank, ``size`` counts the nodes below, ``level`` is the depth.  Attributes
are ranked right after their owner element, inside the owner's range, so
the vertical axes can all be decided by range and level comparisons.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence, TextIO
from xml.parsers import expat

from .algebra import DOC_COLUMNS, Add, Atom, Col, Const

DOC, ELEM, ATTR, TEXT = "DOC", "ELEM", "ATTR", "TEXT"
COMMENT, PI = "COMMENT", "PI"  # reserved, never produced
KINDS = (DOC, ELEM, ATTR, TEXT)

AXES = (
    "child",
    "descendant",
    "descendant-or-self",
    "self",
    "parent",
    "ancestor",
    "ancestor-or-self",
    "following",
    "preceding",
    "attribute",
)
UNSUPPORTED_AXES = ("following-sibling", "preceding-sibling")

# axes whose principal node kind excludes attributes from the result
PRINCIPAL_ELEMENT_AXES = frozenset({"child", "descendant", "descendant-or-self", "following", "preceding"})

CONTEXT = {"pre": "pre_c", "size": "size_c", "level": "level_c", "frag": "frag_c"}

_DECIMAL = re.compile(r"[+-]?\d+(\.\d+)?")


class XmlSyntaxError(ValueError):
    def __init__(self, message: str, byte_offset: int, line: int = 0, column: int = 0):
        super().__init__(f"{message} at byte {byte_offset} (line {line}, column {column})")
        self.byte_offset = byte_offset
        self.line = line
        self.column = column


class UnsupportedAxis(ValueError):
    pass


class DocRow(NamedTuple):
    pre: int
    size: int
    level: int
    kind: str
    name: str | None
    value: str | None
    data: float | None
    frag: int


def cast_decimal(value: str | None) -> float | None:
    if value is not None and _DECIMAL.fullmatch(value):
        return float(value)
    return None


class DocTable:
    """Immutable collection of node rows, indexed by ``pre``."""

    def __init__(self, rows: Iterable[Sequence]):
        self.rows: tuple[DocRow, ...] = tuple(DocRow(*r) for r in rows)
        for i, row in enumerate(self.rows):
            if row.pre != i:
                raise ValueError(f"pre ranks must be contiguous from 0; row {i} has pre {row.pre}")
        self.parent: tuple[int | None, ...] = _parents(self.rows)

    def __len__(self) -> int:
        return len(self.rows)

    def __getitem__(self, pre: int) -> DocRow:
        if not isinstance(pre, int) or not 0 <= pre < len(self.rows):
            raise KeyError(f"no node with pre rank {pre!r}")
        return self.rows[pre]

    def __iter__(self):
        return iter(self.rows)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, DocTable) and self.rows == other.rows

    def __hash__(self) -> int:
        return hash(self.rows)

    def __repr__(self) -> str:
        return f"DocTable({len(self.rows)} rows)"

    def documents(self) -> dict[str, int]:
        """Map document URI to the pre rank of its DOC row."""
        return {r.name: r.pre for r in self.rows if r.kind == DOC}

    def children(self, pre: int) -> list[int]:
        """Non-attribute children, in document order."""
        return [p for p in self._kids(pre) if self.rows[p].kind != ATTR]

    def attributes(self, pre: int) -> list[int]:
        return [p for p in self._kids(pre) if self.rows[p].kind == ATTR]

    def _kids(self, pre: int) -> list[int]:
        row = self.rows[pre]
        out = []
        p = pre + 1
        end = pre + row.size
        while p <= end:
            out.append(p)
            p += self.rows[p].size + 1
        return out

    @classmethod
    def concat(cls, tables: Iterable["DocTable"]) -> "DocTable":
        """Host several documents in one table, each in its own fragment."""
        rows = []
        offset = 0
        for frag, table in enumerate(tables):
            for r in table.rows:
                rows.append(r._replace(pre=r.pre + offset, frag=frag))
            offset += len(table.rows)
        return cls(rows)

    # -- CSV ----------------------------------------------------------------

    def to_csv(self, out: TextIO | None = None) -> str:
        buf = out if out is not None else io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(DOC_COLUMNS)
        for r in self.rows:
            writer.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in r])
        return buf.getvalue() if out is None else ""

    @classmethod
    def from_csv(cls, text: str | TextIO) -> "DocTable":
        stream = io.StringIO(text) if isinstance(text, str) else text
        reader = csv.reader(stream)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != DOC_COLUMNS:
            raise ValueError(f"bad header, expected {','.join(DOC_COLUMNS)}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(DOC_COLUMNS):
                raise ValueError(f"line {lineno}: expected {len(DOC_COLUMNS)} fields, got {len(rec)}")
            pre, size, level, kind, name, value, data, frag = rec
            if kind not in KINDS + (COMMENT, PI):
                raise ValueError(f"line {lineno}: unknown kind {kind!r}")
            try:
                rows.append(
                    DocRow(
                        int(pre),
                        int(size),
                        int(level),
                        kind,
                        name or None,
                        value if value != "" else None,
                        float(data) if data != "" else None,
                        int(frag) if frag != "" else 0,
                    )
                )
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
        return cls(rows)

    @classmethod
    def read(cls, path) -> "DocTable":
        with open(path, newline="", encoding="utf-8") as fh:
            return cls.from_csv(fh)

    def write(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            self.to_csv(fh)


def _parents(rows: Sequence[DocRow]) -> tuple[int | None, ...]:
    parent: list[int | None] = [None] * len(rows)
    stack: list[DocRow] = []
    for r in rows:
        while stack and stack[-1].pre + stack[-1].size < r.pre:
            stack.pop()
        if stack:
            parent[r.pre] = stack[-1].pre
        stack.append(r)
    return tuple(parent)


# ---------------------------------------------------------------------------
# shredding


def shred(xml_text: str | bytes, uri: str, frag: int = 0) -> DocTable:
    """Encode a document as node rows in a single parsing pass."""
    data = xml_text.encode("utf-8") if isinstance(xml_text, str) else xml_text
    # [pre, size, level, kind, name, value]
    rows: list[list] = [[0, 0, 0, DOC, uri, None]]
    open_: list[int] = [0]
    text: list[str] = []

    def flush() -> None:
        s = "".join(text).strip()
        text.clear()
        if s:
            rows.append([len(rows), 0, len(open_), TEXT, None, s])

    def start(name: str, attrs: list[str]) -> None:
        flush()
        pre = len(rows)
        rows.append([pre, 0, len(open_), ELEM, name, None])
        for i in range(0, len(attrs), 2):
            rows.append([len(rows), 0, len(open_) + 1, ATTR, attrs[i], attrs[i + 1]])
        open_.append(pre)

    def end(name: str) -> None:
        flush()
        open_.pop()

    parser = expat.ParserCreate()
    parser.ordered_attributes = True
    parser.buffer_text = True
    parser.StartElementHandler = start
    parser.EndElementHandler = end
    parser.CharacterDataHandler = text.append
    try:
        parser.Parse(data, True)
    except expat.ExpatError as exc:
        raise XmlSyntaxError(
            expat.ErrorString(exc.code), parser.ErrorByteIndex, exc.lineno, exc.offset
        ) from None

    # subtree sizes from levels, in one backwards sweep
    stack: list[int] = []
    for pre in range(len(rows) - 1, -1, -1):
        level = rows[pre][2]
        size = 0
        while stack and rows[stack[-1]][2] > level:
            child = stack.pop()
            size += rows[child][1] + 1
        rows[pre][1] = size
        stack.append(pre)

    out = []
    for pre, size, level, kind, name, value in rows:
        if kind == ELEM and size == 1 and rows[pre + 1][3] == TEXT:
            value = rows[pre + 1][5]
        out.append(DocRow(pre, size, level, kind, name, value, cast_decimal(value), frag))
    return DocTable(out)


# ---------------------------------------------------------------------------
# serialization


def _escape(s: str, quote: bool = False) -> str:
    s = s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    return s.replace('"', "&quot;") if quote else s


def serialize(doc: DocTable, pres: Iterable[int]) -> str:
    """XML text of each subtree, concatenated in the given order."""
    parts: list[str] = []
    for pre in pres:
        if not isinstance(pre, int) or not 0 <= pre < len(doc):
            raise KeyError(f"no node with pre rank {pre!r}")
        _write(doc, pre, parts)
    return "".join(parts)


def _write(doc: DocTable, pre: int, out: list[str]) -> None:
    row = doc.rows[pre]
    if row.kind == TEXT:
        out.append(_escape(row.value or ""))
    elif row.kind == ATTR:
        out.append(f'{row.name}="{_escape(row.value or "", True)}"')
    elif row.kind == DOC:
        for c in doc.children(pre):
            _write(doc, c, out)
    elif row.kind == ELEM:
        out.append("<" + row.name)
        for a in doc.attributes(pre):
            out.append(" ")
            _write(doc, a, out)
        kids = doc.children(pre)
        if not kids:
            out.append("/>")
            return
        out.append(">")
        for c in kids:
            _write(doc, c, out)
        out.append(f"</{row.name}>")


# ---------------------------------------------------------------------------
# axis and node test predicates


@dataclass(frozen=True)
class AxisPredicate:
    axis: str
    conjuncts: tuple[Atom, ...]

    def __str__(self) -> str:
        return " AND ".join(map(str, self.conjuncts))


@dataclass(frozen=True)
class NodeTest:
    """``kind`` is one of element, attribute, text, node, document; ``name`` None means wildcard."""

    kind: str
    name: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("element", "attribute", "text", "node", "document"):
            raise ValueError(f"unknown kind test {self.kind!r}")

    def __str__(self) -> str:
        if self.kind in ("element", "attribute"):
            return f"{self.kind}({self.name or '*'})"
        if self.kind == "document":
            return "document-node()"
        return f"{self.kind}()"


def _c(name: str) -> Col:
    return Col(CONTEXT[name])


def _lt(a, b) -> Atom:
    return Atom("<", a, b)


def _le(a, b) -> Atom:
    return Atom("<=", a, b)


def _eq(a, b) -> Atom:
    return Atom("=", a, b)


PRE, SIZE, LEVEL, FRAG = Col("pre"), Col("size"), Col("level"), Col("frag")
ONE = Const(1)


def axis_predicate(axis: str) -> AxisPredicate:
    """Conjuncts relating a target row to context columns ``*_c``."""
    pc, sc, lc = _c("pre"), _c("size"), _c("level")
    if axis == "child":
        atoms = (_lt(pc, PRE), _le(PRE, Add(pc, sc)), _eq(Add(lc, ONE), LEVEL))
    elif axis == "attribute":
        atoms = (_lt(pc, PRE), _le(PRE, Add(pc, sc)), _eq(Add(lc, ONE), LEVEL), _eq(Col("kind"), Const(ATTR)))
    elif axis == "descendant":
        atoms = (_lt(pc, PRE), _le(PRE, Add(pc, sc)))
    elif axis == "descendant-or-self":
        atoms = (_le(pc, PRE), _le(PRE, Add(pc, sc)))
    elif axis == "self":
        atoms = (_eq(PRE, pc),)
    elif axis == "parent":
        atoms = (_lt(PRE, pc), _le(pc, Add(PRE, SIZE)), _eq(Add(LEVEL, ONE), lc))
    elif axis == "ancestor":
        atoms = (_lt(PRE, pc), _le(pc, Add(PRE, SIZE)))
    elif axis == "ancestor-or-self":
        atoms = (_le(PRE, pc), _le(pc, Add(PRE, SIZE)))
    elif axis == "following":
        atoms = (_lt(Add(pc, sc), PRE), _eq(FRAG, _c("frag")))
    elif axis == "preceding":
        atoms = (_lt(Add(PRE, SIZE), pc), _eq(FRAG, _c("frag")))
    elif axis in UNSUPPORTED_AXES:
        raise UnsupportedAxis(f"axis {axis} is not supported by the pre/size/level encoding")
    else:
        raise UnsupportedAxis(f"unknown axis {axis!r}")
    return AxisPredicate(axis, atoms)


def test_predicates(test: NodeTest) -> tuple[Atom | None, Atom | None]:
    """(kind conjunct, name conjunct); ``None`` stands for true."""
    kind_col, name_col = Col("kind"), Col("name")
    name = None if test.name is None else _eq(name_col, Const(test.name))
    if test.kind == "element":
        return _eq(kind_col, Const(ELEM)), name
    if test.kind == "attribute":
        return _eq(kind_col, Const(ATTR)), name
    if test.kind == "text":
        return _eq(kind_col, Const(TEXT)), None
    if test.kind == "document":
        return _eq(kind_col, Const(DOC)), None
    return None, None


test_predicates.__test__ = False  # keep pytest from collecting the import


def step_conjuncts(axis: str, test: NodeTest) -> tuple[tuple[Atom, ...], tuple[Atom, ...]]:
    """Selection conjuncts on the target rows and join conjuncts for one step.

    On axes whose principal node kind is element, a test that admits
    attributes additionally excludes them.
    """
    ap = axis_predicate(axis)
    kind, name = test_predicates(test)
    select = [a for a in (kind, name) if a is not None]
    join = list(ap.conjuncts)
    if axis == "attribute":
        # kind = ATTR is a single-table conjunct; keep it with the selection
        join = [a for a in join if a.columns() != frozenset({"kind"})]
        select.insert(0, _eq(Col("kind"), Const(ATTR)))
    elif axis in PRINCIPAL_ELEMENT_AXES and test.kind in ("node", "attribute"):
        select.append(Atom("!=", Col("kind"), Const(ATTR)))
    return tuple(dict.fromkeys(select)), tuple(join)
