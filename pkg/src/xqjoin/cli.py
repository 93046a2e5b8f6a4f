"""Command line driver: shred, compile, run, fuzz.

Exit codes: 0 ok, 1 usage, 2 input error, 3 divergence.
"""

from __future__ import annotations

import argparse
import shlex
import subprocess
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, TextIO

from . import frontend as fe
from .algebra import Plan
from .compiler import compile_plan, wrap_serialization
from .evaluator import eval_plan, eval_xquery, gen_query, items
from .infoset import DocTable, serialize, shred
from .isolator import isolate
from .properties import PropertyStore
from .sqlgen import EXECUTABLE, Dialect, NotIsolated, emit_single_block, emit_stacked

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_DIVERGENCE = 0, 1, 2, 3
MODES = ("oracle", "plan", "isolated")


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class EngineError(InputError):
    pass


@dataclass
class PipelineConfig:
    doc_table: str = "doc"
    serialize_wrap: bool = False
    dialect: Dialect = field(default_factory=Dialect)
    trace: bool = False
    corpus: list[Path] = field(default_factory=list)


# ---------------------------------------------------------------------------
# pipeline pieces


def read_query(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read query: {exc}") from exc


def read_doc(path: str) -> DocTable:
    try:
        return DocTable.read(path)
    except OSError as exc:
        raise InputError(f"cannot read document table: {exc}") from exc
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc


def front(text: str, serialize_wrap: bool = False) -> tuple[fe.Expr, fe.Expr]:
    """(surface, Core) for query text."""
    try:
        e = fe.parse(text)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    if serialize_wrap:
        e = wrap_serialization(e)
    return e, fe.normalize(e)


def engine_items(doc: DocTable, sql: str, command: str) -> list[int]:
    """Run ``sql`` on an engine and return the first column of every row.

    ``sqlite`` runs in process.  Anything else is a command template; the
    placeholders ``{csv}`` and ``{sql}`` name the document table and query
    files (both are appended when the template names neither).  The command
    prints one row per line with tab-separated fields.
    """
    if command == "sqlite":
        from .engine_sqlite import run_sql

        return [_item(r[0]) for r in run_sql(doc, sql)]
    with tempfile.TemporaryDirectory() as tmp:
        csv_path, sql_path = Path(tmp, "doc.csv"), Path(tmp, "query.sql")
        doc.write(csv_path)
        sql_path.write_text(sql, encoding="utf-8")
        if "{csv}" in command or "{sql}" in command:
            argv = shlex.split(command.replace("{csv}", shlex.quote(str(csv_path))).replace("{sql}", shlex.quote(str(sql_path))))
        else:
            argv = shlex.split(command) + [str(csv_path), str(sql_path)]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=600)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise EngineError(f"engine failed: {exc}") from exc
        if proc.returncode != 0:
            raise EngineError(f"engine exited with {proc.returncode}: {proc.stderr.strip()}")
        lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
        return [_item(ln.split("\t")[0].split("|")[0].split(",")[0]) for ln in lines]


def _item(value) -> int:
    return int(float(value))


def plan_sql(plan: Plan, dialect: Dialect = EXECUTABLE) -> str:
    """Single block when the plan is isolated, the stacked chain otherwise."""
    try:
        return emit_single_block(plan, dialect)
    except NotIsolated:
        return emit_stacked(plan, dialect)


def run_mode(mode: str, surface: fe.Expr, core: fe.Expr, doc: DocTable, dialect: Dialect = EXECUTABLE) -> list[int]:
    if mode == "oracle":
        return eval_xquery(surface, doc)
    plan = compile_plan(core)
    if mode == "plan":
        return items(eval_plan(plan, doc))
    isolated, _ = isolate(plan)
    if mode == "isolated":
        return items(eval_plan(isolated, doc))
    if mode.startswith("sql:"):
        return engine_items(doc, plan_sql(isolated, dialect), mode[4:])
    raise UsageError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# commands


def cmd_shred(xml_path: str, uri: str | None, out: str | None, frag: int = 0, stdout: TextIO = sys.stdout) -> int:
    try:
        data = Path(xml_path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {xml_path}: {exc}") from exc
    try:
        doc = shred(data, uri or Path(xml_path).name, frag)
    except ValueError as exc:
        raise InputError(f"{xml_path}: {exc}") from exc
    if out:
        doc.write(out)
    else:
        doc.to_csv(stdout)
    return EXIT_OK


def cmd_compile(
    query_path: str,
    stages: Sequence[str],
    config: PipelineConfig = PipelineConfig(),
    stdout: TextIO = sys.stdout,
) -> int:
    surface, core = front(read_query(query_path), config.serialize_wrap)
    stages = list(stages) or ["sql"]
    plan = compile_plan(core)
    isolated = report = None
    if {"isolated", "sql", "trace", "props"} & set(stages) or config.trace:
        isolated, report = isolate(plan)
    sections: list[tuple[str, str]] = []
    for stage in stages:
        if stage == "core":
            sections.append(("core", fe.dump_core(core) + "\n"))
        elif stage == "plan":
            sections.append(("plan", plan.dump()))
        elif stage == "dot":
            sections.append(("dot", plan.to_dot()))
        elif stage == "props":
            sections.append(("properties", PropertyStore(plan).dump()))
        elif stage == "isolated":
            sections.append(("isolated", isolated.dump()))
        elif stage == "isolated-dot":
            sections.append(("isolated dot", isolated.to_dot()))
        elif stage == "sql":
            try:
                sections.append(("sql", emit_single_block(isolated, config.dialect)))
            except NotIsolated as exc:
                raise InputError(f"{exc}; use --sql-stacked") from exc
        elif stage == "sql-stacked":
            sections.append(("sql stacked", emit_stacked(plan, _executable(config.dialect))))
        elif stage != "trace":
            raise UsageError(f"unknown stage {stage}")
    if config.trace or "trace" in stages:
        sections.append(("trace", report.trace()))
    for i, (title, text) in enumerate(sections):
        if len(sections) > 1:
            stdout.write(("\n" if i else "") + f"-- {title}\n")
        stdout.write(text)
    return EXIT_OK


def _executable(d: Dialect) -> Dialect:
    return Dialect(doc_table=d.doc_table, bare_kinds=False, end_column=d.end_column)


def cmd_run(
    query_path: str,
    doc_path: str,
    mode: str = "oracle",
    check: bool = False,
    serialize_items: bool = False,
    config: PipelineConfig = PipelineConfig(),
    stdout: TextIO = sys.stdout,
    stderr: TextIO = sys.stderr,
) -> int:
    if mode not in MODES and not mode.startswith("sql:"):
        raise UsageError(f"unknown mode {mode!r}; expected oracle, plan, isolated or sql:<engine>")
    doc = read_doc(doc_path)
    surface, core = front(read_query(query_path), config.serialize_wrap)
    dialect = _executable(config.dialect)
    if check:
        modes = list(MODES) + ([mode] if mode.startswith("sql:") else ["sql:sqlite"])
        results = {m: run_mode(m, surface, core, doc, dialect) for m in modes}
        reference = results["oracle"]
        diverged = [m for m, r in results.items() if r != reference]
        for m, r in results.items():
            stderr.write(f"{m}: {' '.join(map(str, r))}\n")
        if diverged:
            stderr.write("divergence in " + ", ".join(diverged) + "\n")
            return EXIT_DIVERGENCE
        result = reference
    else:
        result = run_mode(mode, surface, core, doc, dialect)
    if serialize_items:
        if result:
            stdout.write(serialize(doc, result) + "\n")
    else:
        for item in result:
            stdout.write(f"{item}\n")
    return EXIT_OK


def fuzz_one(seed: int, depth: int, doc: DocTable, sql: str | None = None) -> str | None:
    """None when all backends agree on the generated query, else a report."""
    e = gen_query(seed, depth)
    core = fe.normalize(e)
    plan = compile_plan(core)
    isolated, report = isolate(plan)
    results = {
        "oracle": eval_xquery(e, doc),
        "plan": items(eval_plan(plan, doc)),
        "isolated": items(eval_plan(isolated, doc)),
    }
    if sql is not None:
        results[f"sql:{sql}"] = engine_items(doc, plan_sql(isolated), sql)
    problems = [m for m, r in results.items() if r != results["oracle"]]
    if len(report.steps) > report.budget:
        problems.append("step budget")
    if not problems:
        return None
    lines = [f"seed {seed}: divergence in {', '.join(problems)}", f"query: {fe.render(e)}"]
    lines += [f"{m}: {r}" for m, r in results.items()]
    lines += ["-- core", fe.dump_core(core), "-- plan", plan.dump(), "-- isolated", isolated.dump(), "-- trace", report.trace()]
    return "\n".join(lines)


def _fuzz_chunk(args) -> tuple[int, str | None]:
    seeds, depth, csv_text, sql = args
    doc = DocTable.from_csv(csv_text)
    for seed in seeds:
        found = fuzz_one(seed, depth, doc, sql)
        if found:
            return seed, found
    return -1, None


def cmd_fuzz(
    seeds: range,
    doc_path: str,
    depth: int = 4,
    jobs: int = 1,
    sql: str | None = None,
    stdout: TextIO = sys.stdout,
    one: Callable[..., str | None] | None = None,
) -> int:
    doc = read_doc(doc_path)
    first: tuple[int, str] | None = None
    if jobs > 1 and one is None:
        chunks = [seeds[i::jobs] for i in range(jobs)]
        csv_text = doc.to_csv()
        with ProcessPoolExecutor(jobs) as pool:
            for seed, found in pool.map(_fuzz_chunk, [(c, depth, csv_text, sql) for c in chunks]):
                if found and (first is None or seed < first[0]):
                    first = (seed, found)
    else:
        check = one or fuzz_one
        for seed in seeds:
            found = check(seed, depth, doc, sql)
            if found:
                first = (seed, found)
                break
    if first:
        stdout.write(first[1] + "\n")
        return EXIT_DIVERGENCE
    stdout.write(f"{len(seeds)} queries, 0 divergences\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


def _seed_range(text: str) -> range:
    lo, sep, hi = text.partition(":")
    try:
        return range(int(lo), int(hi)) if sep else range(int(lo))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad seed range {text!r}; use N or LO:HI") from exc


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="xqjoin", description="Compile XQuery path queries into a single SQL join block.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("shred", help="encode an XML document as a pre/size/level table (CSV)")
    s.add_argument("xml")
    s.add_argument("--uri", help="document URI recorded in the root row (default: file name)")
    s.add_argument("-o", "--out", help="output CSV path (default: standard output)")
    s.add_argument("--frag", type=int, default=0, help="fragment id for every row")

    c = sub.add_parser("compile", help="print compilation artifacts of a query")
    c.add_argument("query", help="query file, or - for standard input")
    for flag, dest in (
        ("--core", "core"), ("--plan", "plan"), ("--dot", "dot"), ("--props", "props"),
        ("--isolated", "isolated"), ("--isolated-dot", "isolated-dot"), ("--sql", "sql"),
        ("--sql-stacked", "sql-stacked"),
    ):
        c.add_argument(flag, dest="stages", action="append_const", const=dest)
    c.add_argument("--trace", action="store_true", help="print the rewrite step log")
    _common(c)

    r = sub.add_parser("run", help="evaluate a query over a shredded document")
    r.add_argument("query")
    r.add_argument("doc", help="document table CSV")
    r.add_argument("--mode", default="oracle", help="oracle, plan, isolated or sql:<engine> (default: oracle)")
    r.add_argument("--check", action="store_true", help="run every mode and compare")
    r.add_argument("--serialize", action="store_true", help="print result nodes as XML")
    _common(r)

    f = sub.add_parser("fuzz", help="differential test on generated queries")
    f.add_argument("doc", help="document table CSV")
    f.add_argument("--seeds", type=_seed_range, default=range(1000), help="N or LO:HI (default: 1000)")
    f.add_argument("--depth", type=int, default=4)
    f.add_argument("--jobs", type=int, default=1)
    f.add_argument("--sql", metavar="ENGINE", help="also run emitted SQL on ENGINE (sqlite or a command)")
    return p


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--serialize-wrap", action="store_true", help="return whole subtrees of the result nodes")
    p.add_argument("--doc-table", default="doc", help="SQL name of the document table")
    p.add_argument("--end-column", help="stored pre+size column to use in range predicates")
    p.add_argument("--quote-kinds", action="store_true", help="quote node kinds in SQL ('ELEM')")


def _config(args) -> PipelineConfig:
    return PipelineConfig(
        doc_table=args.doc_table,
        serialize_wrap=args.serialize_wrap,
        dialect=Dialect(args.doc_table, not args.quote_kinds, args.end_column),
        trace=getattr(args, "trace", False),
    )


def main(argv: Sequence[str] | None = None, stdout: TextIO | None = None, stderr: TextIO | None = None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        if args.command == "shred":
            return cmd_shred(args.xml, args.uri, args.out, args.frag, stdout)
        if args.command == "compile":
            return cmd_compile(args.query, args.stages or [], _config(args), stdout)
        if args.command == "run":
            return cmd_run(args.query, args.doc, args.mode, args.check, args.serialize, _config(args), stdout, stderr)
        return cmd_fuzz(args.seeds, args.doc, args.depth, args.jobs, args.sql, stdout)
    except UsageError as exc:
        stderr.write(f"xqjoin: usage error: {exc}\n")
        return EXIT_USAGE
    except (InputError, ValueError) as exc:
        stderr.write(f"xqjoin: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
