from hypothesis import given, settings, strategies as st

from xqjoin import frontend as fe
from xqjoin.algebra import (
    Atom,
    Attach,
    Col,
    Const,
    Distinct,
    DocRef,
    Join,
    LitTable,
    Plan,
    Project,
    RowId,
    Select,
    Ser,
    eq,
)
from xqjoin.compiler import compile_plan, compile_query
from xqjoin.evaluator import gen_query
from xqjoin.isolator import isolate
from xqjoin.properties import PropertyStore, infer_const, infer_icols, infer_key, infer_set, is_key, soundness_violations

from conftest import Q1

ELEM = (Atom("=", Col("kind"), Const("ELEM")),)


def items_of(node):
    return Plan(Ser(node))


def test_ser_seeds_icols():
    child = Project(DocRef(), [("pos", "pre"), ("item", "pre"), ("x", "size")])
    props = PropertyStore(items_of(child))
    assert props.icols(child) == {"pos", "item"}


def test_select_adds_predicate_columns():
    sel = Select(DocRef(), ELEM)
    top = Project(sel, [("pos", "pre"), ("item", "pre")])
    icols = infer_icols(items_of(top))
    assert {"kind", "pre"} <= icols[id(DocRef())]


def test_attach_removes_its_column():
    lit = LitTable(["item"], [(3,)])
    att = Attach(lit, "pos", 1)
    props = PropertyStore(items_of(att))
    assert props.icols(att) == {"pos", "item"}
    assert props.icols(lit) == {"item"}


def test_icols_accumulate_over_shared_nodes():
    shared = Select(DocRef(), ELEM)
    left = Project(shared, [("pos", "pre")])
    right = Project(shared, [("item", "size")])
    plan = items_of(Join(left, right, (Atom("<", Col("pos"), Col("item")),)))
    assert {"pre", "size"} <= PropertyStore(plan).icols(shared)


def test_const_examples():
    loop = LitTable(["iter"], [(1,)])
    att = Attach(loop, "pos", 1)
    consts = infer_const(items_of(Project(att, [("item", "iter"), ("pos", "pos")])))
    assert consts[id(att)] == {"iter": 1, "pos": 1}
    assert PropertyStore(items_of(Project(DocRef(), [("pos", "pre"), ("item", "pre")]))).const(DocRef()) == {}
    renamed = Project(att, [("iter", "pos"), ("item", "iter"), ("pos", "pos")])
    assert PropertyStore(items_of(renamed)).const(renamed) == {"iter": 1, "item": 1, "pos": 1}


def test_key_examples():
    assert is_key(PropertyStore(items_of(Project(DocRef(), [("pos", "pre"), ("item", "pre")]))).key(DocRef()), ["pre"])
    rid = RowId(Project(DocRef(), ["size"]), "inner")
    plan = items_of(Project(rid, [("pos", "inner"), ("item", "size")]))
    assert frozenset({"inner"}) in PropertyStore(plan).key(rid)


def test_equijoin_keeps_left_key():
    # left key {k1}; right side keyed on the join column b
    left = Project(DocRef(), [("k1", "pre"), ("a", "size")])
    right = Project(DocRef(), [("b", "pre"), ("v", "level")])
    join = Join(left, right, eq("a", "b"))
    plan = items_of(Project(join, [("pos", "k1"), ("item", "v")]))
    keys = PropertyStore(plan).key(join)
    assert is_key(keys, ["k1"])


def test_distinct_adds_full_schema_key():
    p = Project(DocRef(), ["size", "level"])
    d = Distinct(p)
    plan = items_of(Project(d, [("pos", "size"), ("item", "level")]))
    assert is_key(infer_key(plan)[id(d)], ["size", "level"])


def test_set_examples():
    under_ser = Project(DocRef(), [("pos", "pre"), ("item", "pre")])
    assert infer_set(items_of(under_ser))[id(under_ser)] is False
    d = Distinct(under_ser)
    assert infer_set(items_of(d))[id(under_ser)] is True


def test_set_diamond_is_conjunction():
    shared = Project(DocRef(), [("a", "pre")])
    via_distinct = Project(Distinct(shared), [("b", "a")])
    via_plain = Project(shared, [("c", "a")])
    top = Project(Join(via_distinct, via_plain, eq("b", "c")), [("pos", "b"), ("item", "c")])
    sets = infer_set(items_of(top))
    assert sets[id(shared)] is False
    only = Project(Distinct(shared), [("pos", "a"), ("item", "a")])
    assert infer_set(items_of(only))[id(shared)] is True


def test_q1_soundness(sample, two_bidders):
    plan = compile_query(Q1)
    for doc in (sample, two_bidders):
        assert soundness_violations(plan, doc) == []
        assert soundness_violations(isolate(plan)[0], doc) == []


def test_soundness_catches_a_false_key(sample):
    plan = items_of(Project(DocRef(), [("pos", "level"), ("item", "pre")]))
    props = PropertyStore(plan)
    violations = soundness_violations(plan, sample, _FakeKeys(props, frozenset({"level"})))
    assert any(v.startswith("key {level}") for v in violations)


class _FakeKeys:
    """Wraps a store and claims one extra key everywhere."""

    def __init__(self, inner, key):
        self.inner, self.extra = inner, key

    def __getattr__(self, name):
        return getattr(self.inner, name)

    def key(self, node):
        keys = self.inner.key(node)
        return keys | {self.extra} if self.extra <= set(node.cols) else keys


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4))
def test_soundness_on_generated_plans(corpus_docs, seed, depth):
    plan = compile_plan(fe.normalize(gen_query(seed, depth)))
    iso, _ = isolate(plan)
    for p in (plan, iso):
        props = PropertyStore(p)
        for n in p.nodes:
            assert set(props.const(n)) <= set(n.cols)
            assert all(k <= set(n.cols) for k in props.key(n))
        assert soundness_violations(p, corpus_docs[seed % 3], props) == []
