import pytest
from hypothesis import given, settings, strategies as st

from xqjoin import frontend as fe
from xqjoin.evaluator import eval_xquery, gen_query
from xqjoin.infoset import NodeTest

from conftest import Q1, Q1_ABBREV

Q1_CORE = (
    'for $x in fs:ddo(doc("auction.xml")/descendant::open_auction) '
    "return if (fn:boolean(fs:ddo($x/child::bidder))) then $x else ()"
)


def test_parse_q1_predicate_form():
    e = fe.parse(Q1_ABBREV)
    assert isinstance(e, fe.Filter)
    assert e.input == fe.Step(fe.Doc("auction.xml"), "descendant", NodeTest("element", "open_auction"))
    assert e.pred == fe.Step(fe.ContextItem(), "child", NodeTest("element", "bidder"))


def test_unbound_variable():
    with pytest.raises(fe.UnboundVariable):
        fe.parse("$x")


def test_for_production():
    assert fe.parse('for $x in doc("t.xml") return $x') == fe.For("x", fe.Doc("t.xml"), fe.Var("x"))


def test_syntax_error_position():
    with pytest.raises(fe.XQuerySyntaxError, match=r"line 2, column"):
        fe.parse('doc("t.xml")\n  /child::')


def test_abbreviations():
    long = fe.parse('doc("t")/descendant-or-self::node()/child::element(a)/attribute::attribute(id)')
    assert fe.parse('doc("t")//a/@id') == long


def test_normalize_q1_matches_core_listing():
    core = fe.normalize(fe.parse(Q1_ABBREV))
    assert fe.alpha_equivalent(core, fe.parse(Q1_CORE))
    assert fe.alpha_equivalent(core, fe.normalize(fe.parse(Q1)))
    assert fe.dump_core(core) == (
        '(for $fs_0 (ddo (step (doc "auction.xml") descendant element(open_auction))) '
        "(if (ebv (ddo (step $fs_0 child element(bidder)))) $fs_0))"
    )


def test_var_is_core():
    assert fe.normalize(fe.Var("x")) == fe.Var("x")


def test_comparison_predicate_shape():
    core = fe.normalize(fe.parse('doc("a")/descendant::item[child::price > 500]'))
    cond = core.body.cond
    assert isinstance(cond, fe.Ebv)
    assert isinstance(cond.expr, fe.Comp) and cond.expr.op == ">" and cond.expr.literal == 500
    assert isinstance(cond.expr.left, fe.Ddo)


def test_comparison_predicate_semantics(corpus_docs):
    q = 'doc("auction.xml")/descendant::open_auction[child::initial > 30]'
    for doc in corpus_docs:
        assert eval_xquery(fe.parse(q), doc) == eval_xquery(fe.normalize(fe.parse(q)), doc)


def test_fresh_names_are_deterministic():
    a = fe.dump_core(fe.normalize(fe.parse(Q1_ABBREV)))
    b = fe.dump_core(fe.normalize(fe.parse(Q1_ABBREV)))
    assert a == b


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4))
def test_render_parse_round_trip(seed, depth):
    e = gen_query(seed, depth)
    assert fe.parse(fe.render(e)) == e


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4))
def test_normalize_idempotent(seed, depth):
    core = fe.normalize(gen_query(seed, depth))
    assert fe.normalize(core) == core
    assert fe.parse(fe.render(core)) == core


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 4))
def test_oracle_agrees_on_surface_and_core(corpus_docs, seed, depth):
    e = gen_query(seed, depth)
    core = fe.normalize(e)
    for doc in corpus_docs:
        assert eval_xquery(e, doc) == eval_xquery(core, doc)
