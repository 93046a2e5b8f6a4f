"""A 1 MB auction document: the single block against the tree-walking oracle."""

import time

from xqjoin import compile_query, emit_single_block, eval_xquery, isolate, shred
from xqjoin.engine_sqlite import connect
from xqjoin.sqlgen import Dialect
from xqjoin.xmark import sized_auction_xml

xml = sized_auction_xml(1_000_000)
doc = shred(xml, "auction.xml")
print(f"{len(xml) / 1e6:.2f} MB, {len(doc)} rows")

queries = [
    'doc("auction.xml")/descendant::open_auction[bidder]',
    'doc("auction.xml")/descendant::open_auction[child::initial > 45]/child::bidder',
    'for $p in doc("auction.xml")/descendant::person return $p/child::name',
]
# a stored pre+size column turns the range upper bound into a plain column
dialect = Dialect(bare_kinds=False, end_column="post")
conn = connect(doc, end_column="post")
for q in queries:
    iso, _ = isolate(compile_query(q))
    sql = emit_single_block(iso, dialect)
    t0 = time.time()
    got = [r[0] for r in conn.execute(sql)]
    t_sql = time.time() - t0
    t0 = time.time()
    want = eval_xquery(q, doc)
    t_oracle = time.time() - t0
    print(f"{len(got):6d} items  sql {t_sql:.3f} s  oracle {t_oracle:.3f} s  same={got == want}")
