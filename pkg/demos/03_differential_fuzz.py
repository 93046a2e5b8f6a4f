"""Random queries, three evaluators, one expected answer."""

import time

from xqjoin import compile_plan, eval_plan, eval_xquery, gen_query, isolate, items, normalize, render, shred
from xqjoin.engine_sqlite import connect
from xqjoin.sqlgen import EXECUTABLE, emit_single_block
from xqjoin.xmark import auction_xml

doc = shred(auction_xml(seed=1, auctions=4), "auction.xml")
print(len(doc), "nodes")

conn = connect(doc)  # in-memory sqlite with an index on (kind, name, pre)
t0 = time.time()
agree = nonempty = 0
for seed in range(200):
    e = gen_query(seed, depth=1 + seed % 4)
    plan = compile_plan(normalize(e))
    iso, report = isolate(plan)
    want = eval_xquery(e, doc)
    sql = [r[0] for r in conn.execute(emit_single_block(iso, EXECUTABLE))]
    agree += want == items(eval_plan(plan, doc)) == items(eval_plan(iso, doc)) == sql
    nonempty += bool(want)
    if seed < 3:
        print(render(e))
        print("  ->", want[:10])
print(f"{agree}/200 agree, {nonempty} non-empty, {time.time() - t0:.1f} s")
