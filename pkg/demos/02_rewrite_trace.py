"""Watch the isolator work: properties, the step log, and one rule applied by hand."""

from xqjoin import PropertyStore, apply_rule, compile_query, isolate
from xqjoin.algebra import DocRef, Plan, Project, Rank, Ser
from xqjoin.isolator import PremiseFailure

q = 'for $a in doc("auction.xml")/descendant::open_auction return $a/child::bidder/child::time'
plan = compile_query(q)

props = PropertyStore(plan)
print(props.dump())  # icols / const / key / set next to every operator

iso, report = isolate(plan)
print(report.trace())  # one line per applied rule

# which rules did the work
from collections import Counter
print(Counter(str(s.rule) for s in report.steps).most_common())

# a rank over a single criterion is just a renamed copy of that column
q0 = Project(DocRef(), [("item", "pre")])
rank = Rank(q0, "pos", ["item"])
p = Plan(Ser(rank))
print(apply_rule(p, rank, 12).dump())

# premises are checked; the failure says which clause did not hold
try:
    apply_rule(p, rank, 5)
except PremiseFailure as exc:
    print(exc.rule, "->", exc.clause)
