"""Run emitted SQL on SQLite over a shredded document.

Also usable as the external engine command of ``xqjoin run``::

    python3 -m xqjoin.engine_sqlite DOC.csv QUERY.sql

prints one result row per line, fields separated by tabs.
"""

from __future__ import annotations

import sqlite3
import sys
from pathlib import Path

from .infoset import DocTable

DDL = (
    "CREATE TABLE {table} (pre INTEGER PRIMARY KEY, size INTEGER, level INTEGER, "
    "kind TEXT, name TEXT, value TEXT, data REAL, frag INTEGER{extra})"
)


def connect(doc: DocTable, table: str = "doc", end_column: str | None = None) -> sqlite3.Connection:
    """In-memory database holding ``doc`` (plus a stored pre+size column if named)."""
    conn = sqlite3.connect(":memory:")
    extra = f", {end_column} INTEGER" if end_column else ""
    conn.execute(DDL.format(table=table, extra=extra))
    marks = ", ".join("?" for _ in range(8 + bool(end_column)))
    rows = (tuple(r) + ((r.pre + r.size,) if end_column else ()) for r in doc.rows)
    conn.executemany(f"INSERT INTO {table} VALUES ({marks})", rows)
    conn.execute(f"CREATE INDEX {table}_kind_name ON {table} (kind, name, pre)")
    return conn


def run_sql(doc: DocTable, sql: str, table: str = "doc", end_column: str | None = None) -> list[tuple]:
    conn = connect(doc, table, end_column)
    try:
        return conn.execute(sql).fetchall()
    finally:
        conn.close()


def format_row(row: tuple) -> str:
    return "\t".join("" if v is None else str(v) for v in row)


def main(argv: list[str] | None = None) -> int:
    args = sys.argv[1:] if argv is None else argv
    if len(args) != 2:
        print("usage: python3 -m xqjoin.engine_sqlite DOC.csv QUERY.sql", file=sys.stderr)
        return 1
    doc = DocTable.read(args[0])
    try:
        rows = run_sql(doc, Path(args[1]).read_text())
    except sqlite3.Error as exc:
        print(f"sqlite: {exc}", file=sys.stderr)
        return 2
    for row in rows:
        print(format_row(row))
    return 0


if __name__ == "__main__":
    sys.exit(main())
