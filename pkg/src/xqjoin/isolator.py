"""Join graph isolation: property-driven rewriting of loop-lifted plans.

The rewrite works toward a plan of two parts.  Above sits a short tail of
serialization, at most one row ranking, at most one duplicate elimination
and projections.  Below sits a bundle of joins, selections and projections
over the document table and literal tables, which a relational engine can
evaluate as one SELECT block.

Rules are numbered 1..17.  A few auxiliary clean-ups that keep projection
chains short carry string ids (``"merge-projections"`` and friends).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

from .algebra import (
    Attach,
    Cross,
    Distinct,
    DocRef,
    FreshNames,
    Join,
    LitTable,
    Node,
    Plan,
    Project,
    Rank,
    RowId,
    Select,
    Ser,
    all_columns,
    equi_columns,
    pred_columns,
    rename_pred,
    substitute,
    walk,
)
from .properties import PropertyStore, icols_demand, is_key, node_const, node_key

RuleId = "int | str"


class PremiseFailure(Exception):
    """A rule does not apply at a node; ``clause`` names the premise that failed."""

    def __init__(self, rule, clause: str):
        super().__init__(f"rule {rule}: {clause}")
        self.rule = rule
        self.clause = clause


@dataclass(frozen=True)
class RewriteStep:
    rule: object
    target: Node
    before: Node
    after: Node
    note: str = ""

    @property
    def target_id(self) -> int:
        return Plan(self.before).numbering()[id(self.target)]

    def describe(self) -> str:
        text = f"rule {self.rule} at n{self.target_id}: {self.target.describe()}"
        return f"{text} ({self.note})" if self.note else text


@dataclass
class IsolationReport:
    steps: list[RewriteStep] = field(default_factory=list)
    normal_form: bool = False
    residuals: list[str] = field(default_factory=list)
    budget: int = 0

    def trace(self) -> str:
        lines = [f"{i + 1:4d} {s.describe()}" for i, s in enumerate(self.steps)]
        lines.append(f"steps={len(self.steps)} budget={self.budget} normal_form={self.normal_form}")
        if self.residuals:
            lines.append("residuals: " + ", ".join(self.residuals))
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# rewrite context


class Context:
    """A plan under rewriting plus its (lazily inferred) properties."""

    def __init__(self, root: Node, fresh: FreshNames | None = None, props: PropertyStore | None = None):
        self.root = root
        self.plan = Plan(root)
        self.fresh = fresh or FreshNames(all_columns(root))
        self._props = props
        self._refs: dict[int, frozenset[str]] | None = None

    @property
    def props(self) -> PropertyStore:
        if self._props is None:
            self._props = PropertyStore(self.plan, distinct_guard=True)
        return self._props

    def icols(self, node: Node) -> frozenset[str]:
        return self.props.icols(node)

    def is_set(self, node: Node) -> bool:
        return self.props.set(node)

    def refs(self, node: Node) -> frozenset[str]:
        """Columns of ``node`` that some operator above still names."""
        if self._refs is None:
            refs: dict[int, frozenset[str]] = {id(n): frozenset() for n in self.plan.nodes}
            for n in reversed(self.plan.nodes):
                mine = frozenset(n.cols) if isinstance(n, Project) else refs[id(n)]
                for child, demand in icols_demand(n, mine):
                    refs[id(child)] |= demand
            self._refs = refs
        return self._refs[id(node)]


def _need(rule, cond: bool, clause: str) -> None:
    if not cond:
        raise PremiseFailure(rule, clause)


def _project_pairs(node: Node) -> tuple[Node, dict[str, str]]:
    """View ``node`` as a projection: (source, output -> source column)."""
    if isinstance(node, Project):
        return node.child, dict(node.mapping)
    return node, {c: c for c in node.cols}


RENAMABLE = (Project, Select, Join, Cross, Attach)


def rename_columns(node: Node, rho: dict[str, str]) -> Node:
    """Equivalent of ``node`` with output columns renamed by ``rho``.

    Renames are pushed through selections, joins and attachments so that a
    join sinking further down still finds the operators it can pass.
    """
    rho = {k: v for k, v in rho.items() if k in node.cols and k != v}
    if not rho:
        return node
    if isinstance(node, Project):
        return Project(node.child, [(rho.get(a, a), b) for a, b in node.mapping])
    if isinstance(node, Select):
        return Select(rename_columns(node.child, rho), rename_pred(node.pred, rho))
    if isinstance(node, Join):
        return Join(rename_columns(node.left, rho), rename_columns(node.right, rho), rename_pred(node.pred, rho))
    if isinstance(node, Cross):
        return Cross(rename_columns(node.left, rho), rename_columns(node.right, rho))
    if isinstance(node, Attach):
        inner = {k: v for k, v in rho.items() if k != node.col}
        return Attach(rename_columns(node.child, inner), rho.get(node.col, node.col), node.value)
    return Project(node, [(rho.get(c, c), c) for c in node.cols])


def _unreferenced(ctx: Context, node: Node) -> bool:
    # icols says nobody needs the column, but an unpruned projection may still name it
    return node.col not in ctx.refs(node)


# ---------------------------------------------------------------------------
# the rules; each returns the replacement for ``node`` or raises PremiseFailure


def rule_1(ctx: Context, node: Node) -> Node:
    _need(1, isinstance(node, RowId), "operator is #")
    _need(1, node.col not in ctx.icols(node), f"{node.col} not in icols")
    _need(1, _unreferenced(ctx, node), "no projection above lists the column")
    return node.child


def rule_2(ctx: Context, node: Node) -> Node:
    _need(2, isinstance(node, Rank), "operator is a rank")
    _need(2, node.col not in ctx.icols(node), f"{node.col} not in icols")
    _need(2, _unreferenced(ctx, node), "no projection above lists the column")
    return node.child


def rule_3(ctx: Context, node: Node) -> Node:
    _need(3, isinstance(node, Attach), "operator is @")
    _need(3, node.col not in ctx.icols(node), f"{node.col} not in icols")
    _need(3, _unreferenced(ctx, node), "no projection above lists the column")
    return node.child


def rule_4(ctx: Context, node: Node) -> Node:
    _need(4, isinstance(node, Project), "operator is a projection")
    icols = ctx.icols(node)
    _need(4, any(a not in icols for a, _ in node.mapping), "some output not in icols")
    refs = ctx.refs(node)
    keep = [(a, b) for a, b in node.mapping if a in icols or a in refs]
    _need(4, len(keep) < len(node.mapping), "no operator above names the pruned outputs")
    _need(4, bool(keep), "icols meets the projection list")
    return Project(node.child, keep)


def rule_5(ctx: Context, node: Node) -> Node:
    _need(5, isinstance(node, Cross), "operator is a cross product")
    for lit, other in ((node.right, node.left), (node.left, node.right)):
        if isinstance(lit, LitTable) and len(lit.rows) == 1:
            out = other
            for c, v in zip(lit.columns, lit.rows[0]):
                out = Attach(out, c, v)
            return out
    raise PremiseFailure(5, "one operand is a single-row literal table")


def rule_6(ctx: Context, node: Node) -> Node:
    _need(6, isinstance(node, Distinct), "operator is a duplicate elimination")
    _need(6, ctx.is_set(node), "set holds")
    return node.child


def rule_7(ctx: Context, node: Node) -> Node:
    _need(7, isinstance(node, Distinct), "operator is a duplicate elimination")
    child = node.child
    drop = frozenset(node_const(child)) - ctx.icols(node)
    _need(7, bool(drop), "a constant column outside icols")
    drop -= ctx.refs(node)
    _need(7, bool(drop), "no operator above names the dropped column")
    keep = [c for c in child.cols if c not in drop]
    _need(7, bool(keep), "a column survives")
    return Distinct(Project(child, keep))


def rule_8(ctx: Context, node: Node) -> Node:
    _need(8, not isinstance(node, (Distinct, Ser)), "operator is not a duplicate elimination")
    _need(8, not ctx.is_set(node), "set is false")
    icols = ctx.icols(node)
    _need(8, is_key(node_key(node), icols), "some key lies within icols")
    keep = [c for c in node.cols if c in icols or c in ctx.refs(node)]
    _need(8, bool(keep), "icols is non-empty")
    return Distinct(node if len(keep) == len(node.cols) else Project(node, keep))


def _equi(node: Node, rule) -> tuple[str, str]:
    _need(rule, isinstance(node, Join), "operator is a join")
    ab = equi_columns(node.pred)
    _need(rule, ab is not None, "predicate is a column equality")
    a, b = ab
    return (a, b) if a in node.left.cols else (b, a)


def rule_9(ctx: Context, node: Node) -> Node:
    a, b = _equi(node, 9)
    src_l, alpha = _project_pairs(node.left)
    src_r, beta = _project_pairs(node.right)
    _need(9, src_l is src_r, "both operands read the same input")
    k = alpha[a]
    _need(9, beta[b] == k, "the join columns stem from the same input column")
    _need(9, is_key(node_key(src_l), (k,)), f"{{{k}}} is a key")
    return Project(src_l, list(alpha.items()) + list(beta.items()))


def rule_10(ctx: Context, node: Node) -> Node:
    a, b = _equi(node, 10)
    cl, cr = node_const(node.left), node_const(node.right)
    _need(10, a in cl and b in cr, "both join columns are constant")
    _need(10, cl[a] == cr[b], "the constants agree")
    return Cross(node.left, node.right)


def rule_11(ctx: Context, node: Node, side: str | None = None) -> Node:
    """Push a join through the top operator of one operand."""
    return push_join(ctx, node, side)[0]


def push_join(ctx: Context, node: Node, side: str | None = None) -> tuple[Node, Node]:
    """Rule 11; returns the replacement and the join it now contains."""
    _need(11, isinstance(node, Join), "operator is a join")
    sides = [side] if side else ["left", "right"]
    failure = None
    for s in sides:
        try:
            return _push(ctx, node, s)
        except PremiseFailure as exc:
            failure = exc
    assert failure is not None
    raise failure


def _push(ctx: Context, node: Join, side: str) -> tuple[Node, Node]:
    top, other = (node.left, node.right) if side == "left" else (node.right, node.left)
    used = pred_columns(node.pred) & frozenset(top.cols)
    _need(11, not isinstance(top, (Distinct, RowId, DocRef, LitTable)), "operand operator may be crossed")
    _need(11, all(n is not top for n in walk(other)), "operand does not feed the other side")

    def join(inner: Node, pred=node.pred) -> Join:
        return Join(inner, other, pred) if side == "left" else Join(other, inner, pred)

    if isinstance(top, Select):
        j = join(top.child)
        return Select(j, top.pred), j
    if isinstance(top, Attach):
        _need(11, top.col not in used, "join does not read the attached column")
        j = join(top.child)
        return Attach(j, top.col, top.value), j
    if isinstance(top, Rank):
        _need(11, top.col not in used, "join does not read the rank column")
        j = join(top.child)
        return Rank(j, top.col, top.order), j
    if isinstance(top, (Join, Cross)):
        for pos, part in enumerate(top.children):
            if used <= frozenset(part.cols):
                j = join(part)
                kids = [j, top.children[1]] if pos == 0 else [top.children[0], j]
                if isinstance(top, Join):
                    return Join(kids[0], kids[1], top.pred), j
                return Cross(kids[0], kids[1]), j
        raise PremiseFailure(11, "join columns lie in one operand of the inner join")
    if isinstance(top, Project):
        src = top.child
        clash = frozenset(src.cols) & frozenset(other.cols)
        # renaming an opaque operand wraps it in a projection again: no progress
        _need(11, not clash or isinstance(src, RENAMABLE), "operand columns can be kept apart")
        rho = {c: ctx.fresh(c) for c in sorted(clash)}
        src = rename_columns(src, rho)
        mapping = [(a, rho.get(b, b)) for a, b in top.mapping]
        m = dict(mapping)
        pred = rename_pred(node.pred, {c: m[c] for c in used})
        j = join(src, pred)
        keep = [(c, c) for c in other.cols]
        return Project(j, mapping + keep if side == "left" else keep + mapping), j
    raise PremiseFailure(11, "operand operator may be crossed")


def rule_12(ctx: Context, node: Node) -> Node:
    _need(12, isinstance(node, Rank), "operator is a rank")
    _need(12, len(node.order) == 1, "a single ranking criterion")
    child = node.child
    return Project(child, [(node.col, node.order[0])] + [(c, c) for c in child.cols])


def rule_13(ctx: Context, node: Node) -> Node:
    _need(13, isinstance(node, Rank), "operator is a rank")
    fixed = node_const(node.child)
    order = [c for c in node.order if c not in fixed]
    _need(13, len(order) < len(node.order), "a constant ranking criterion")
    if not order:
        # every row ties: all ranks are 1
        return Attach(node.child, node.col, 1)
    return Rank(node.child, node.col, order)


def rule_14(ctx: Context, node: Node) -> Node:
    _need(14, isinstance(node, (Select, Distinct, Attach, RowId)), "operator is σ, δ, @ or #")
    r = node.child
    _need(14, isinstance(r, Rank), "operand is a rank")
    if isinstance(node, Select):
        # positions are never compared; still checked rather than assumed
        _need(14, r.col not in pred_columns(node.pred), "selection ignores the rank column")
    return Rank(node.with_children((r.child,)), r.col, r.order)


def rule_15(ctx: Context, node: Node) -> Node:
    _need(15, isinstance(node, (Join, Cross)), "operator is a join or cross product")
    for i, r in enumerate(node.children):
        if not isinstance(r, Rank):
            continue
        if isinstance(node, Join) and r.col in pred_columns(node.pred):
            continue
        kids = list(node.children)
        kids[i] = r.child
        return Rank(node.with_children(tuple(kids)), r.col, r.order)
    raise PremiseFailure(15, "an operand is a rank not read by the predicate")


def rule_16(ctx: Context, node: Node) -> Node:
    _need(16, isinstance(node, Project), "operator is a projection")
    r = node.child
    _need(16, isinstance(r, Rank), "operand is a rank")
    outs = [a for a, b in node.mapping if b == r.col]
    _need(16, len(outs) == 1, "the rank column is projected exactly once")
    rest = [(a, b) for a, b in node.mapping if b != r.col]
    by_source = {}
    for a, b in rest:
        by_source.setdefault(b, a)
    order = []
    for c in r.order:
        if c not in by_source:
            by_source[c] = ctx.fresh("ord")
            rest.append((by_source[c], c))
        order.append(by_source[c])
    return Rank(Project(r.child, rest), outs[0], order)


def rule_17(ctx: Context, node: Node) -> Node:
    _need(17, isinstance(node, Rank), "operator is a rank")
    inner = node.child
    _need(17, isinstance(inner, Rank), "operand is a rank")
    _need(17, inner.col in node.order, "outer criteria read the inner rank")
    order: list[str] = []
    for c in node.order:
        for d in (inner.order if c == inner.col else (c,)):
            if d not in order:
                order.append(d)
    return Rank(inner, node.col, order)


# auxiliary clean-ups


def merge_projections(ctx: Context, node: Node) -> Node:
    _need("merge-projections", isinstance(node, Project) and isinstance(node.child, Project), "π over π")
    inner = dict(node.child.mapping)
    return Project(node.child.child, [(a, inner[b]) for a, b in node.mapping])


def identity_projection(ctx: Context, node: Node) -> Node:
    _need("identity-projection", isinstance(node, Project), "operator is a projection")
    _need(
        "identity-projection",
        all(a == b for a, b in node.mapping) and len(node.mapping) == len(node.child.cols),
        "projection keeps every column unchanged",
    )
    return node.child


def unused_column(ctx: Context, node: Node) -> Node:
    """A projection that drops the column added by @, # or a rank skips that operator."""
    _need("unused-column", isinstance(node, Project), "operator is a projection")
    below = node.child
    _need("unused-column", isinstance(below, (Attach, RowId, Rank)), "operand adds one column")
    _need("unused-column", below.col not in {b for _, b in node.mapping}, "the added column is dropped")
    return Project(below.child, node.mapping)


def repoint_unneeded(ctx: Context, node: Node) -> Node:
    """Read an unneeded output from the input of @, # or a rank instead.

    Values of columns outside icols are irrelevant, so this frees the
    operator below for removal even when the projection cannot shrink.
    """
    _need("repoint-unneeded", isinstance(node, Project), "operator is a projection")
    below = node.child
    _need("repoint-unneeded", isinstance(below, (Attach, RowId, Rank)), "operand adds one column")
    icols = ctx.icols(node) | ctx.refs(node)
    _need(
        "repoint-unneeded",
        all(a not in icols for a, b in node.mapping if b == below.col),
        "outputs read from the added column are unneeded",
    )
    _need("repoint-unneeded", any(b == below.col for _, b in node.mapping), "the added column is read")
    spare = below.child.cols[0]
    return Project(below, [(a, spare if b == below.col else b) for a, b in node.mapping])


def zero_demand(ctx: Context, node: Node) -> Node:
    """Shrink a projection nobody reads from to one column its input needs anyway.

    Rule 4 never projects to zero columns; the consumer (typically a cross
    product that only counts rows) still needs some column, and reading one
    that the input's own predicate uses frees every other column below.
    """
    _need("zero-demand", isinstance(node, Project), "operator is a projection")
    demand = ctx.icols(node) | ctx.refs(node)
    _need("zero-demand", not any(a in demand for a, _ in node.mapping), "no output is needed")
    child = node.child
    used = pred_columns(child.pred) if isinstance(child, (Join, Select)) else frozenset()
    source = next((c for c in child.cols if c in used), child.cols[0])
    out = Project(child, [(node.mapping[0][0], source)])
    _need("zero-demand", out is not node, "projection is not already minimal")
    return out


def tail_projection(ctx: Context, node: Node) -> Node:
    """π(δ(q)) → δ(π(q)) when the projection reads every column of q."""
    _need("tail-projection", isinstance(node, Project) and isinstance(node.child, Distinct), "π over δ")
    q = node.child.child
    _need("tail-projection", {b for _, b in node.mapping} >= set(q.cols), "projection reads every column")
    return Distinct(Project(q, node.mapping))


def empty_input(ctx: Context, node: Node) -> Node:
    """An operator reading an empty literal table produces no rows either."""
    _need("empty-input", not isinstance(node, (Ser, LitTable)), "operator has operands")
    _need(
        "empty-input",
        any(isinstance(c, LitTable) and not c.rows for c in node.children),
        "an operand is an empty literal table",
    )
    return LitTable(node.cols, [])


RULES: dict[object, Callable[[Context, Node], Node]] = {
    1: rule_1,
    2: rule_2,
    3: rule_3,
    4: rule_4,
    5: rule_5,
    6: rule_6,
    7: rule_7,
    8: rule_8,
    9: rule_9,
    10: rule_10,
    11: rule_11,
    12: rule_12,
    13: rule_13,
    14: rule_14,
    15: rule_15,
    16: rule_16,
    17: rule_17,
    "merge-projections": merge_projections,
    "identity-projection": identity_projection,
    "unused-column": unused_column,
    "tail-projection": tail_projection,
    "empty-input": empty_input,
    "repoint-unneeded": repoint_unneeded,
    "zero-demand": zero_demand,
}

HOUSECLEANING = (1, 2, 3, 4, 5, 7, 13, "merge-projections", "identity-projection", "unused-column", "empty-input", "repoint-unneeded", "zero-demand")
RANK_GOAL = (13, 17, 12, 14, 15, 16, "unused-column", 2, "merge-projections")


def apply_rule(plan: Plan, node: Node, rule) -> Plan:
    """Apply one rule at ``node``; raises PremiseFailure when it does not apply."""
    if rule not in RULES:
        raise ValueError(f"unknown rule {rule!r}")
    if node not in plan:
        raise ValueError("node is not part of the plan")
    replacement = RULES[rule](Context(plan.root), node)
    return Plan(substitute(plan.root, {node: replacement}))


# ---------------------------------------------------------------------------
# strategy


class BudgetExhausted(Exception):
    pass


class Isolator:
    def __init__(self, plan: Plan, budget_factor: int = 10, check: Callable[[Plan], None] | None = None):
        self.ctx = Context(plan.root)
        self.budget = budget_factor * len(plan.nodes)
        self.steps: list[RewriteStep] = []
        self.check = check

    @property
    def root(self) -> Node:
        return self.ctx.root

    def commit(self, rule, target: Node, replacement: Node, note: str = "", ctx: Context | None = None) -> bool:
        """Substitute ``replacement`` for ``target``; False when target is gone."""
        if replacement is target:
            return False
        before = self.root
        after = substitute(before, {target: replacement})
        if after is before:
            return False
        if len(self.steps) >= self.budget:
            raise BudgetExhausted
        self.steps.append(RewriteStep(rule, target, before, after, note))
        self.ctx = Context(after, self.ctx.fresh)
        if self.check is not None:
            self.check(self.ctx.plan)
        return True

    def sweep(self, rules: Iterable) -> bool:
        """One innermost-first pass; icols and set come from the start of the pass.

        Within a pass every applied rule only removes demand, so properties
        read at the pass start still license the later removals.  Structural
        facts (parents, names still referenced) are read from the live plan.
        """
        rules = tuple(rules)
        start = self.ctx
        props = start.props
        view = start
        changed = False
        for node in start.plan.nodes:
            if node not in view.plan:
                continue
            for rule in rules:
                try:
                    replacement = RULES[rule](view, node)
                except PremiseFailure:
                    continue
                if self.commit(rule, node, replacement):
                    changed = True
                    view = Context(self.root, self.ctx.fresh, props)
                break
        return changed

    def fixpoint(self, rules: Iterable) -> None:
        rules = tuple(rules)
        while self.sweep(rules):
            pass

    # rank goal --------------------------------------------------------

    def rank_goal(self) -> None:
        # one rule per pass: these rules restructure and need fresh structure
        while True:
            changed = False
            for node in self.ctx.plan.nodes:
                for rule in RANK_GOAL:
                    try:
                        replacement = RULES[rule](self.ctx, node)
                    except PremiseFailure:
                        continue
                    changed = self.commit(rule, node, replacement)
                    break
                if changed:
                    break
            if not changed:
                return

    # distinct goal ----------------------------------------------------

    def spine(self) -> list[Node]:
        """Tail nodes below the root: the chain of ranks and projections, then the first other node."""
        out = []
        n = self.root.children[0]
        while True:
            out.append(n)
            if not isinstance(n, (Rank, Project)):
                return out
            n = n.child

    def distinct_goal(self) -> None:
        spine = self.spine()
        if isinstance(spine[-1], Distinct):
            return
        ctx = self.ctx
        below = [n for n in walk(spine[-1]) if isinstance(n, Distinct) and not ctx.is_set(n)]
        if not below:
            return
        for site in reversed(spine):
            if isinstance(site, Rank):
                continue
            try:
                replacement = rule_8(ctx, site)
            except PremiseFailure:
                continue
            self.commit(8, site, replacement)
            break
        self.fixpoint((6,))

    # join goal --------------------------------------------------------

    def sink(self, join: Node) -> bool:
        """Push ``join`` down until it collapses; undo when it gets stuck."""
        mark_root, mark_steps, mark_ctx = self.root, len(self.steps), self.ctx
        cur = join
        while True:
            for rule in (9, 10):
                try:
                    replacement = RULES[rule](self.ctx, cur)
                except PremiseFailure:
                    continue
                self.commit(rule, cur, replacement)
                return True
            try:
                replacement, inner = push_join(self.ctx, cur)
            except PremiseFailure:
                break
            if not self.commit(11, cur, replacement):
                break
            cur = inner
        del self.steps[mark_steps:]
        self.ctx = mark_ctx
        assert self.root is mark_root
        return False

    def join_goal(self) -> None:
        tried: set[tuple[int, int]] = set()
        while True:
            progress = False
            for node in list(self.ctx.plan.nodes):
                if not isinstance(node, Join) or equi_columns(node.pred) is None:
                    continue
                # a stuck join stays stuck until the plan around it changes
                stamp = (id(node), id(self.root))
                if stamp in tried or node not in self.ctx.plan:
                    continue
                tried.add(stamp)
                if self.sink(node):
                    progress = True
            cleaned = len(self.steps)
            self.fixpoint(HOUSECLEANING + (6,))
            if not progress and len(self.steps) == cleaned:
                return

    def run(self) -> None:
        self.fixpoint(HOUSECLEANING)
        self.rank_goal()
        self.fixpoint(HOUSECLEANING)
        self.distinct_goal()
        self.join_goal()
        self.fixpoint(HOUSECLEANING + ("tail-projection",))


def isolate(plan: Plan, budget_factor: int = 10, check: Callable[[Plan], None] | None = None) -> tuple[Plan, IsolationReport]:
    """Rewrite ``plan`` toward join graph plus tail.

    ``check`` is called with the plan after every step (debug hook).
    """
    from .sqlgen import NotIsolated, to_normal_form

    iso = Isolator(plan, budget_factor, check)
    report = IsolationReport(budget=iso.budget)
    try:
        iso.run()
    except BudgetExhausted:
        report.residuals.append("step budget exhausted")
    out = Plan(iso.root)
    report.steps = iso.steps
    try:
        to_normal_form(out)
        report.normal_form = not report.residuals
    except NotIsolated as exc:
        report.residuals.extend(exc.offenders)
    return out, report
