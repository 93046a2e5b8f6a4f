"""XQuery path queries compiled to relational plans, isolated into a single SQL join block."""

from .infoset import DocTable, XmlSyntaxError, axis_predicate, serialize, shred, test_predicates
from .frontend import XQuerySyntaxError, dump_core, normalize, parse, render
from .algebra import Plan, reachable, validate
from .compiler import CompileError, compile_plan, compile_query
from .properties import PropertyStore
from .isolator import IsolationReport, RewriteStep, apply_rule, isolate
from .sqlgen import Dialect, NotIsolated, emit_single_block, emit_stacked, to_normal_form
from .evaluator import eval_plan, eval_xquery, gen_query, items

__all__ = [
    "CompileError", "Dialect", "DocTable", "IsolationReport", "NotIsolated", "Plan", "PropertyStore",
    "RewriteStep", "XQuerySyntaxError", "XmlSyntaxError", "apply_rule", "axis_predicate", "compile_plan",
    "compile_query", "dump_core", "emit_single_block", "emit_stacked", "eval_plan", "eval_xquery",
    "gen_query", "isolate", "items", "normalize", "parse", "reachable", "render", "serialize", "shred",
    "test_predicates", "to_normal_form", "validate",
]
