"""Loop-lifting compilation of Core expressions into table algebra plans.

Every subexpression compiles to a plan with schema iter|pos|item under a
loop relation (single column iter) listing the iterations in which it is
evaluated.  The top level runs under the one-row loop ``iter = 1``.
"""

from __future__ import annotations

from typing import Mapping

from . import frontend as fe
from .algebra import (
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
    eq,
)
from .infoset import DOC, NodeTest, step_conjuncts

Env = Mapping[str, Node]


class CompileError(ValueError):
    pass


def doc() -> DocRef:
    return DocRef()


def top_loop() -> LitTable:
    return LitTable(("iter",), [(1,)])


def empty() -> LitTable:
    return LitTable(("iter", "pos", "item"), [])


def compile_plan(e: fe.Expr) -> Plan:
    """Compile a normalized expression under the single top-level iteration."""
    return Plan(Ser(compile_expr(e, {}, top_loop())))


def compile_query(text: str, serialize_wrap: bool = False) -> Plan:
    """Parse, normalize and compile query text."""
    e = fe.parse(text)
    if serialize_wrap:
        e = wrap_serialization(e)
    return compile_plan(fe.normalize(e))


def wrap_serialization(e: fe.Expr) -> fe.Expr:
    """``for $x in e return $x/descendant-or-self::node()``: ship whole subtrees."""
    used = fe.variables(e)
    var = "ser"
    while var in used:
        var += "_"
    return fe.For(var, e, fe.Step(fe.Var(var), "descendant-or-self", NodeTest("node")))


def compile_expr(e: fe.Expr, env: Env, loop: Node) -> Node:
    if isinstance(e, fe.Doc):
        return compile_rule_doc(e.uri, loop)
    if isinstance(e, fe.Var):
        if e.name not in env:
            raise CompileError(f"unbound variable ${e.name}")
        return env[e.name]
    if isinstance(e, fe.Empty):
        return empty()
    if isinstance(e, fe.Ddo):
        return compile_rule_ddo(compile_expr(e.expr, env, loop))
    if isinstance(e, fe.Step):
        return compile_rule_step(compile_expr(e.input, env, loop), e.axis, e.test)
    if isinstance(e, fe.For):
        return compile_rule_for(e.var, compile_expr(e.seq, env, loop), e.body, env, loop)
    if isinstance(e, fe.If):
        return compile_rule_if(e.cond, e.then, env, loop)
    if isinstance(e, fe.Filter):
        raise CompileError("predicate E[p] must be normalized before compilation")
    if isinstance(e, fe.ContextItem):
        raise CompileError("context item outside a predicate")
    if isinstance(e, (fe.Comp, fe.Ebv)):
        raise CompileError("boolean expression in sequence position")
    raise CompileError(f"unsupported construct {type(e).__name__}")


def compile_condition(e: fe.Expr, env: Env, loop: Node) -> Node:
    if isinstance(e, fe.Ebv):
        e = e.expr
    if isinstance(e, fe.Comp):
        return compile_rule_comp(e.left, e.op, e.literal, env, loop)
    return compile_expr(e, env, loop)


def compile_rule_doc(uri: str, loop: Node) -> Node:
    roots = Select(doc(), (Atom("=", Col("kind"), Const(DOC)), Atom("=", Col("name"), Const(uri))))
    return Project(Cross(roots, Attach(loop, "pos", 1)), ["iter", "pos", ("item", "pre")])


def compile_rule_ddo(q: Node) -> Node:
    return Rank(Distinct(Project(q, ["iter", "item"])), "pos", ["item"])


def compile_rule_step(q_ctx: Node, axis: str, test: NodeTest) -> Node:
    select, join = step_conjuncts(axis, test)
    context_cols = ["iter", ("pre_c", "pre"), ("size_c", "size"), ("level_c", "level")]
    if any("frag_c" in a.columns() for a in join):
        context_cols.append(("frag_c", "frag"))
    context = Project(Join(doc(), q_ctx, eq("pre", "item")), context_cols)
    targets = Select(doc(), select) if select else doc()
    hits = Project(Join(targets, context, join), ["iter", ("item", "pre")])
    return Rank(hits, "pos", ["item"])


def compile_rule_if(cond: fe.Expr, then: fe.Expr, env: Env, loop: Node) -> Node:
    q_if = compile_condition(cond, env, loop)
    loop_if = Distinct(Project(q_if, [("iter1", "iter")]))
    lifted = {
        name: Project(Join(loop_if, q, eq("iter1", "iter")), ["iter", "pos", "item"])
        for name, q in env.items()
    }
    # loop_if carries iter1; the nested loop relation must be named iter
    return compile_expr(then, lifted, Project(loop_if, [("iter", "iter1")]))


def compile_rule_comp(e: fe.Expr, op: str, literal, env: Env, loop: Node) -> Node:
    q = compile_expr(e, env, loop)
    if isinstance(literal, str):
        atom = Atom(op, Col("value"), Const(literal))
    else:
        atom = Atom(op, Col("data"), Const(float(literal)))
    hits = Distinct(Project(Select(Join(doc(), q, eq("pre", "item")), (atom,)), ["iter"]))
    return Attach(Attach(hits, "pos", 1), "item", 1)


def compile_rule_for(var: str, q_in: Node, body: fe.Expr, env: Env, loop: Node) -> Node:
    q_x = RowId(q_in, "inner")
    map_ = Project(q_x, [("outer", "iter"), "inner", ("sort", "pos")])
    lifted = {
        name: Project(Join(map_, q, eq("outer", "iter")), [("iter", "inner"), "pos", "item"])
        for name, q in env.items()
    }
    lifted[var] = Attach(Project(q_x, [("iter", "inner"), "item"]), "pos", 1)
    q = compile_expr(body, lifted, Project(map_, [("iter", "inner")]))
    ranked = Rank(Join(q, map_, eq("iter", "inner")), "pos1", ["sort", "pos"])
    return Project(ranked, [("iter", "outer"), ("pos", "pos1"), "item"])
