import io
import subprocess
import sys

import pytest

from xqjoin import isolator
from xqjoin.algebra import Distinct
from xqjoin.cli import EXIT_DIVERGENCE, EXIT_INPUT, EXIT_OK, EXIT_USAGE, main
from xqjoin.infoset import DocTable

from conftest import DATA, Q1
from test_sqlgen import Q1_SQL


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(map(str, argv)), out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def auction_csv(tmp_path):
    path = tmp_path / "auction.csv"
    assert run("shred", DATA / "auction.xml", "--uri", "auction.xml", "-o", path)[0] == EXIT_OK
    return path


@pytest.fixture
def q1_file(tmp_path):
    path = tmp_path / "q1.xq"
    path.write_text(Q1)
    return path


def test_shred_sample(auction_csv, sample):
    assert len(auction_csv.read_text().strip().splitlines()) == 11
    assert DocTable.read(auction_csv) == sample


def test_shred_empty_element(tmp_path):
    (tmp_path / "a.xml").write_text("<a/>")
    code, out, _ = run("shred", tmp_path / "a.xml")
    assert code == EXIT_OK and len(out.strip().splitlines()) == 3


def test_shred_malformed(tmp_path):
    (tmp_path / "bad.xml").write_text("<a><b></a>")
    code, out, err = run("shred", tmp_path / "bad.xml")
    assert code == EXIT_INPUT and out == "" and "byte" in err


def test_compile_sql_is_default(q1_file):
    code, out, _ = run("compile", q1_file)
    assert code == EXIT_OK and out == Q1_SQL
    assert run("compile", q1_file, "--sql")[1] == Q1_SQL


def test_compile_isolated_and_core(q1_file):
    code, out, _ = run("compile", q1_file, "--isolated")
    assert code == EXIT_OK
    ops = [ln.split()[1].split("[")[0] for ln in out.splitlines()]
    assert ops.count("join") == 2 and ops.count("distinct") == 1 and ops.count("doc") == 1
    assert "rank" not in ops and "rowid" not in ops
    core = run("compile", q1_file, "--core")[1]
    assert core.startswith("(for $x (ddo (step (doc \"auction.xml\") descendant element(open_auction)))")


def test_compile_several_stages_and_trace(q1_file):
    code, out, _ = run("compile", q1_file, "--plan", "--sql-stacked", "--trace")
    assert code == EXIT_OK
    assert "-- plan" in out and "-- sql stacked" in out and "-- trace" in out
    assert "RANK() OVER" in out


def test_compile_serialize_wrap(q1_file, auction_csv):
    plain = run("compile", q1_file, "--core")[1]
    wrapped = run("compile", q1_file, "--core", "--serialize-wrap")[1]
    assert "descendant-or-self" in wrapped and "descendant-or-self" not in plain
    code, out, _ = run("run", q1_file, auction_csv, "--serialize-wrap", "--check")
    assert code == EXIT_OK and out.split() == [str(i) for i in range(1, 10) if i != 2]


def test_compile_syntax_error(tmp_path):
    (tmp_path / "bad.xq").write_text("for $x in")
    code, out, err = run("compile", tmp_path / "bad.xq")
    assert code == EXIT_INPUT and "line 1" in err


def test_run_oracle(q1_file, auction_csv):
    assert run("run", q1_file, auction_csv) == (EXIT_OK, "1\n", "")


@pytest.mark.parametrize("mode", ["plan", "isolated", "sql:sqlite"])
def test_run_modes(q1_file, auction_csv, mode):
    assert run("run", q1_file, auction_csv, "--mode", mode)[:2] == (EXIT_OK, "1\n")


def test_run_check(q1_file, auction_csv):
    code, out, err = run("run", q1_file, auction_csv, "--check")
    assert code == EXIT_OK and out == "1\n"
    assert err.splitlines() == ["oracle: 1", "plan: 1", "isolated: 1", "sql:sqlite: 1"]


def test_run_external_engine(q1_file, auction_csv):
    cmd = f"{sys.executable} -m xqjoin.engine_sqlite"
    assert run("run", q1_file, auction_csv, "--mode", f"sql:{cmd}")[:2] == (EXIT_OK, "1\n")
    templ = f"{sys.executable} -m xqjoin.engine_sqlite {{csv}} {{sql}}"
    assert run("run", q1_file, auction_csv, "--mode", f"sql:{templ}", "--check")[0] == EXIT_OK


def test_run_failing_engine(q1_file, auction_csv):
    code, _, err = run("run", q1_file, auction_csv, "--mode", f"sql:{sys.executable} -c 'import sys; sys.exit(4)'")
    assert code == EXIT_INPUT and "exited with 4" in err


def test_run_serialize(q1_file, auction_csv):
    out = run("run", q1_file, auction_csv, "--serialize")[1]
    assert out.startswith('<open_auction id="1"><initial>15</initial>')


def test_run_empty_result(tmp_path, auction_csv):
    (tmp_path / "none.xq").write_text('doc("auction.xml")/child::nosuch')
    assert run("run", tmp_path / "none.xq", auction_csv) == (EXIT_OK, "", "")


def test_usage_errors(q1_file, auction_csv):
    assert run()[0] == EXIT_USAGE
    assert run("frobnicate")[0] == EXIT_USAGE
    assert run("run", q1_file, auction_csv, "--mode", "magic")[0] == EXIT_USAGE
    assert run("fuzz", auction_csv, "--seeds", "x:y")[0] == EXIT_USAGE


def test_missing_files(q1_file, tmp_path):
    assert run("run", q1_file, tmp_path / "missing.csv")[0] == EXIT_INPUT
    assert run("compile", tmp_path / "missing.xq")[0] == EXIT_INPUT


def test_fuzz_clean(auction_csv):
    code, out, _ = run("fuzz", auction_csv, "--seeds", "0:150", "--depth", "3")
    assert code == EXIT_OK and out == "150 queries, 0 divergences\n"


def test_fuzz_empty_range(auction_csv):
    assert run("fuzz", auction_csv, "--seeds", "5:5") == (EXIT_OK, "0 queries, 0 divergences\n", "")


def test_fuzz_with_sql_and_workers(auction_csv):
    assert run("fuzz", auction_csv, "--seeds", "0:40", "--depth", "3", "--jobs", "2", "--sql", "sqlite")[0] == EXIT_OK


def test_fuzz_detects_injected_mutation(auction_csv, monkeypatch, corpus_docs, tmp_path):
    # rule 6 without its premise drops every duplicate elimination
    monkeypatch.setitem(isolator.RULES, 6, lambda ctx, node: node.child if isinstance(node, Distinct) else node)
    doc = tmp_path / "doc.csv"
    corpus_docs[2].write(doc)
    code, out, _ = run("fuzz", doc, "--seeds", "0:300", "--depth", "2")
    assert code == EXIT_DIVERGENCE
    assert out.startswith("seed ") and "divergence in isolated" in out and "-- trace" in out


def test_module_entry_point(q1_file, auction_csv):
    proc = subprocess.run([sys.executable, "-m", "xqjoin", "run", str(q1_file), str(auction_csv)], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout == "1\n"
