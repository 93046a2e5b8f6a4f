"""From one XQuery path to one SQL block: shred, compile, isolate, emit, run."""

from pathlib import Path

from xqjoin import compile_query, emit_single_block, eval_plan, eval_xquery, isolate, items, shred
from xqjoin.algebra import Distinct, Join, Rank, RowId
from xqjoin.engine_sqlite import run_sql
from xqjoin.sqlgen import EXECUTABLE

xml = (Path(__file__).parent.parent / "tests" / "data" / "auction.xml").read_text()
doc = shred(xml, "auction.xml")
for row in doc.rows:
    print(tuple(row)[:7])  # pre, size, level, kind, name, value, data

q1 = 'doc("auction.xml")/descendant::open_auction[bidder]'
print(eval_xquery(q1, doc))  # [1]: the one auction with a bidder

plan = compile_query(q1)  # the stacked loop-lifted plan
print(len(plan), "operators;", plan.count(Rank), "ranks,", plan.count(Distinct), "distincts,", plan.count(Join), "joins")

iso, report = isolate(plan)
print(len(report.steps), "rewrite steps, normal form:", report.normal_form)
print(iso.dump())  # three references to the one doc table, two joins, a tail of distinct and project
print(iso.count(Rank), iso.count(RowId))  # 0 0

print(emit_single_block(iso))  # the familiar three-way self-join

# same answer from every backend
print(items(eval_plan(plan, doc)), items(eval_plan(iso, doc)))
print([r[0] for r in run_sql(doc, emit_single_block(iso, EXECUTABLE))])
