"""Parser and Core normalizer for the for/if/doc/path XQuery fragment.

Surface syntax accepted::

    for $x in E return E
    if (B) then E else ()
    doc("uri")   $x   ()   (E)
    E/axis::test   E//test   E/@name   E/..   E/.   E/*   E[B]
    fs:ddo(E)      fn:boolean(E)    (as an if condition)

where ``B`` is ``E`` or ``E op literal``.  Normalization makes duplicate
removal and effective boolean value explicit and replaces predicates by
for/if pairs over fresh ``$fs_n`` variables.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from .infoset import AXES, UNSUPPORTED_AXES, NodeTest

COMPARISON_OPS = ("=", "!=", "<", "<=", ">", ">=")


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Doc:
    uri: str


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Empty:
    """The empty sequence ``()``."""


@dataclass(frozen=True)
class ContextItem:
    """``.`` inside a predicate; removed by normalization."""


@dataclass(frozen=True)
class Step:
    input: "Expr"
    axis: str
    test: NodeTest


@dataclass(frozen=True)
class Filter:
    input: "Expr"
    pred: "Expr"


@dataclass(frozen=True)
class For:
    var: str
    seq: "Expr"
    body: "Expr"


@dataclass(frozen=True)
class If:
    cond: "Expr"
    then: "Expr"


@dataclass(frozen=True)
class Comp:
    left: "Expr"
    op: str
    literal: Union[str, int, float]


@dataclass(frozen=True)
class Ddo:
    expr: "Expr"


@dataclass(frozen=True)
class Ebv:
    expr: "Expr"


Expr = Union[Doc, Var, Empty, ContextItem, Step, Filter, For, If, Comp, Ddo, Ebv]
CoreExpr = Expr


class XQuerySyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class UnboundVariable(XQuerySyntaxError):
    pass


# ---------------------------------------------------------------------------
# lexer

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+|\(:.*?:\))
  | (?P<string>"(?:[^"]|"")*"|'(?:[^']|'')*')
  | (?P<number>\d+(?:\.\d*)?|\.\d+)
  | (?P<name>[A-Za-z_][\w.\-]*(?::[A-Za-z_][\w.\-]*)?)
  | (?P<op>//|/|::|\.\.|\.|\$|\(|\)|\[|\]|@|\*|!=|<=|>=|=|<|>|,|-|\+)
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass
class Token:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[Token]:
    out = []
    i = 0
    while i < len(text):
        m = _TOKEN.match(text, i)
        if m is None:
            line, col = _linecol(text, i)
            raise XQuerySyntaxError(f"unexpected character {text[i]!r}", line, col)
        kind = m.lastgroup
        if kind != "ws":
            out.append(Token(kind, m.group(), i))
        i = m.end()
    out.append(Token("eof", "", len(text)))
    return out


def _linecol(text: str, pos: int) -> tuple[int, int]:
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


# ---------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.scope: list[str] = []
        self.pred_depth = 0

    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text: str, k: int = 0) -> bool:
        tok = self.peek(k)
        return tok.kind in ("op", "name") and tok.text == text

    def next(self) -> Token:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def fail(self, msg: str, tok: Token | None = None, cls=XQuerySyntaxError):
        tok = tok or self.peek()
        line, col = _linecol(self.text, tok.pos)
        raise cls(msg, line, col)

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.peek().text or "end of input"
            self.fail(f"expected {text!r}, found {found!r}")
        return self.next()

    # Expr := for | if | path
    def expr(self) -> Expr:
        if self.at("for") and self.at("$", 1):
            return self.for_expr()
        if self.at("if") and self.at("(", 1):
            return self.if_expr()
        return self.path()

    def for_expr(self) -> Expr:
        self.expect("for")
        var = self.varname()
        self.expect("in")
        seq = self.expr()
        self.expect("return")
        self.scope.append(var)
        try:
            body = self.expr()
        finally:
            self.scope.pop()
        return For(var, seq, body)

    def if_expr(self) -> Expr:
        self.expect("if")
        self.expect("(")
        cond = self.bool_expr()
        self.expect(")")
        self.expect("then")
        then = self.expr()
        self.expect("else")
        tok = self.peek()
        self.expect("(")
        if not self.at(")"):
            self.fail("only 'else ()' is supported", tok)
        self.expect(")")
        return If(cond, then)

    def bool_expr(self) -> Expr:
        if self.at("fn:boolean") and self.at("(", 1):
            self.next()
            self.expect("(")
            inner = self.bool_expr()
            self.expect(")")
            return inner if isinstance(inner, Ebv) else Ebv(inner)
        left = self.expr()
        tok = self.peek()
        if tok.kind == "op" and tok.text in COMPARISON_OPS:
            self.next()
            return Comp(left, tok.text, self.literal())
        return left

    def literal(self) -> Union[str, int, float]:
        tok = self.peek()
        sign = ""
        if self.at("-") or self.at("+"):
            sign = self.next().text
            tok = self.peek()
        if tok.kind == "number":
            self.next()
            text = sign + tok.text
            return float(text) if "." in text else int(text)
        if tok.kind == "string" and not sign:
            self.next()
            q = tok.text[0]
            return tok.text[1:-1].replace(q + q, q)
        self.fail("expected a string or numeric literal")

    def varname(self) -> str:
        self.expect("$")
        tok = self.peek()
        if tok.kind != "name":
            self.fail("expected a variable name")
        self.next()
        return tok.text

    def path(self) -> Expr:
        e = self.primary()
        e = self.predicates(e)
        while self.at("/") or self.at("//"):
            sep = self.next().text
            if sep == "//":
                e = Step(e, "descendant-or-self", NodeTest("node"))
            e = self.predicates(self.step(e))
        return e

    def predicates(self, e: Expr) -> Expr:
        while self.at("["):
            self.next()
            self.pred_depth += 1
            try:
                pred = self.bool_expr()
            finally:
                self.pred_depth -= 1
            self.expect("]")
            e = Filter(e, pred)
        return e

    def primary(self) -> Expr:
        tok = self.peek()
        if self.at("$"):
            name = self.varname()
            if name not in self.scope:
                self.fail(f"unbound variable ${name}", tok, UnboundVariable)
            return Var(name)
        if self.at("doc") and self.at("(", 1):
            self.next()
            self.expect("(")
            s = self.peek()
            if s.kind != "string":
                self.fail("doc() expects a string literal")
            self.next()
            self.expect(")")
            return Doc(s.text[1:-1].replace(s.text[0] * 2, s.text[0]))
        if self.at("fs:ddo") and self.at("(", 1):
            self.next()
            self.expect("(")
            inner = self.expr()
            self.expect(")")
            return inner if isinstance(inner, Ddo) else Ddo(inner)
        if self.at("("):
            self.next()
            if self.at(")"):
                self.next()
                return Empty()
            inner = self.expr()
            self.expect(")")
            return inner
        if self.pred_depth:
            # relative path inside a predicate, or the context item itself
            if self.at("."):
                self.next()
                return ContextItem()
            if self._starts_step():
                return self.step(ContextItem())
        self.fail(f"unexpected {tok.text or 'end of input'!r}")

    def _starts_step(self) -> bool:
        tok = self.peek()
        return tok.kind == "name" or (tok.kind == "op" and tok.text in ("@", "..", "*"))

    def step(self, input_: Expr) -> Expr:
        tok = self.peek()
        if self.at(".."):
            self.next()
            return Step(input_, "parent", NodeTest("node"))
        if self.at("."):
            self.next()
            return Step(input_, "self", NodeTest("node"))
        axis = "child"
        if self.at("@"):
            self.next()
            axis = "attribute"
        elif tok.kind == "name" and self.at("::", 1):
            axis = self.next().text
            self.next()
            if axis in UNSUPPORTED_AXES:
                self.fail(f"unsupported axis {axis}", tok)
            if axis not in AXES:
                self.fail(f"unknown axis {axis}", tok)
        return Step(input_, axis, self.node_test(axis))

    def node_test(self, axis: str) -> NodeTest:
        principal = "attribute" if axis == "attribute" else "element"
        tok = self.peek()
        if self.at("*"):
            self.next()
            return NodeTest(principal)
        if tok.kind != "name":
            self.fail("expected a node test")
        self.next()
        if not self.at("("):
            return NodeTest(principal, tok.text)
        kinds = {"node": "node", "text": "text", "element": "element",
                 "attribute": "attribute", "document-node": "document"}
        if tok.text not in kinds:
            self.fail(f"unknown kind test {tok.text}()", tok)
        self.next()
        name = None
        if tok.text in ("element", "attribute") and not self.at(")"):
            if self.at("*"):
                self.next()
            else:
                n = self.peek()
                if n.kind != "name":
                    self.fail("expected a name in kind test")
                self.next()
                name = n.text
        self.expect(")")
        return NodeTest(kinds[tok.text], name)


def parse(text: str) -> Expr:
    """Parse query text; raises on syntax errors and unbound variables."""
    p = _Parser(text)
    e = p.expr()
    if p.peek().kind != "eof":
        p.fail(f"unexpected {p.peek().text!r} after expression")
    return e


# ---------------------------------------------------------------------------
# normalization


class _Fresh:
    def __init__(self, used: set[str]):
        self.used = used
        self.n = 0

    def __call__(self) -> str:
        while True:
            name = f"fs_{self.n}"
            self.n += 1
            if name not in self.used:
                self.used.add(name)
                return name


def variables(e: Expr) -> set[str]:
    out: set[str] = set()
    stack = [e]
    while stack:
        x = stack.pop()
        if isinstance(x, Var):
            out.add(x.name)
        elif isinstance(x, For):
            out.add(x.var)
        stack.extend(_kids(x))
    return out


def _kids(e: Expr) -> tuple:
    if isinstance(e, Step):
        return (e.input,)
    if isinstance(e, Filter):
        return (e.input, e.pred)
    if isinstance(e, For):
        return (e.seq, e.body)
    if isinstance(e, If):
        return (e.cond, e.then)
    if isinstance(e, Comp):
        return (e.left,)
    if isinstance(e, (Ddo, Ebv)):
        return (e.expr,)
    return ()


def _ddo(e: Expr) -> Expr:
    return e if isinstance(e, Ddo) else Ddo(e)


def normalize(e: Expr) -> CoreExpr:
    """Core form: explicit ``Ddo`` after steps, ``Ebv`` on conditions, no predicates."""
    fresh = _Fresh(variables(e))
    return _norm(e, fresh)


def _norm(e: Expr, fresh: _Fresh) -> Expr:
    if isinstance(e, (Doc, Var, Empty, ContextItem)):
        return e
    if isinstance(e, Ddo):
        return _ddo(_norm(e.expr, fresh))
    if isinstance(e, Step):
        return Ddo(Step(_norm(e.input, fresh), e.axis, e.test))
    if isinstance(e, For):
        return For(e.var, _norm(e.seq, fresh), _norm(e.body, fresh))
    if isinstance(e, If):
        return If(Ebv(_norm_bool(e.cond, fresh)), _norm(e.then, fresh))
    if isinstance(e, Filter):
        var = fresh()
        seq = _ddo(_norm(e.input, fresh))
        cond = _replace_context(_norm_bool(e.pred, fresh), Var(var))
        return For(var, seq, If(Ebv(cond), Var(var)))
    if isinstance(e, (Comp, Ebv)):
        raise ValueError("boolean expression used as a sequence")
    raise TypeError(f"not an expression: {e!r}")


def _norm_bool(e: Expr, fresh: _Fresh) -> Expr:
    if isinstance(e, Ebv):
        return _norm_bool(e.expr, fresh)
    if isinstance(e, Comp):
        return Comp(_ddo(_norm(e.left, fresh)), e.op, e.literal)
    return _norm(e, fresh)


def _replace_context(e: Expr, var: Var) -> Expr:
    if isinstance(e, ContextItem):
        return var
    if isinstance(e, Step):
        return Step(_replace_context(e.input, var), e.axis, e.test)
    if isinstance(e, For):
        return For(e.var, _replace_context(e.seq, var), _replace_context(e.body, var))
    if isinstance(e, If):
        return If(_replace_context(e.cond, var), _replace_context(e.then, var))
    if isinstance(e, Comp):
        return Comp(_replace_context(e.left, var), e.op, e.literal)
    if isinstance(e, Ddo):
        return Ddo(_replace_context(e.expr, var))
    if isinstance(e, Ebv):
        return Ebv(_replace_context(e.expr, var))
    return e


# ---------------------------------------------------------------------------
# rendering


def _lit(v) -> str:
    if isinstance(v, str):
        return '"' + v.replace('"', '""') + '"'
    return repr(v)


def _test(t: NodeTest, axis: str) -> str:
    if t.kind == "node":
        return "node()"
    if t.kind == "text":
        return "text()"
    if t.kind == "document":
        return "document-node()"
    if t.kind == "element" and axis != "attribute":
        return t.name or "*"
    if t.kind == "attribute" and axis == "attribute":
        return t.name or "*"
    return f"{t.kind}({t.name or ''})"


def render(e: Expr) -> str:
    """XQuery text for ``e``; ``parse(render(e)) == e``."""
    if isinstance(e, Doc):
        return "doc(" + _lit(e.uri) + ")"
    if isinstance(e, Var):
        return "$" + e.name
    if isinstance(e, Empty):
        return "()"
    if isinstance(e, ContextItem):
        return "."
    if isinstance(e, Step):
        return f"{_operand(e.input)}/{e.axis}::{_test(e.test, e.axis)}"
    if isinstance(e, Filter):
        return f"{_operand(e.input)}[{render(e.pred)}]"
    if isinstance(e, For):
        return f"for ${e.var} in {render(e.seq)} return {render(e.body)}"
    if isinstance(e, If):
        return f"if ({render(e.cond)}) then {render(e.then)} else ()"
    if isinstance(e, Comp):
        return f"{render(e.left)} {e.op} {_lit(e.literal)}"
    if isinstance(e, Ddo):
        return f"fs:ddo({render(e.expr)})"
    if isinstance(e, Ebv):
        return f"fn:boolean({render(e.expr)})"
    raise TypeError(f"not an expression: {e!r}")


def _operand(e: Expr) -> str:
    if isinstance(e, (For, If, Comp)):
        return f"({render(e)})"
    return render(e)


def dump_core(e: Expr) -> str:
    """Canonical s-expression rendering."""
    if isinstance(e, Doc):
        return f"(doc {_lit(e.uri)})"
    if isinstance(e, Var):
        return "$" + e.name
    if isinstance(e, Empty):
        return "()"
    if isinstance(e, ContextItem):
        return "."
    if isinstance(e, Step):
        return f"(step {dump_core(e.input)} {e.axis} {e.test})"
    if isinstance(e, Filter):
        return f"(filter {dump_core(e.input)} {dump_core(e.pred)})"
    if isinstance(e, For):
        return f"(for ${e.var} {dump_core(e.seq)} {dump_core(e.body)})"
    if isinstance(e, If):
        return f"(if {dump_core(e.cond)} {dump_core(e.then)})"
    if isinstance(e, Comp):
        return f"(comp {e.op} {dump_core(e.left)} {_lit(e.literal)})"
    if isinstance(e, Ddo):
        return f"(ddo {dump_core(e.expr)})"
    if isinstance(e, Ebv):
        return f"(ebv {dump_core(e.expr)})"
    raise TypeError(f"not an expression: {e!r}")


def alpha_equivalent(a: Expr, b: Expr) -> bool:
    """Structural equality up to consistent renaming of bound variables."""
    return _alpha(a, b, {}, {})


def _alpha(a, b, ma: dict, mb: dict) -> bool:
    if type(a) is not type(b):
        return False
    if isinstance(a, Var):
        return ma.get(a.name, a.name) == mb.get(b.name, b.name) and (
            (a.name in ma) == (b.name in mb)
        )
    if isinstance(a, For):
        if not _alpha(a.seq, b.seq, ma, mb):
            return False
        tag = object()
        return _alpha(a.body, b.body, {**ma, a.var: tag}, {**mb, b.var: tag})
    if isinstance(a, Step):
        return a.axis == b.axis and a.test == b.test and _alpha(a.input, b.input, ma, mb)
    if isinstance(a, Comp):
        return a.op == b.op and a.literal == b.literal and _alpha(a.left, b.left, ma, mb)
    ka, kb = _kids(a), _kids(b)
    if not ka:
        return a == b
    return all(_alpha(x, y, ma, mb) for x, y in zip(ka, kb))
