from pathlib import Path

import pytest

from xqjoin.infoset import DocTable, shred
from xqjoin.xmark import auction_xml

DATA = Path(__file__).parent / "data"
AUCTION_XML = (DATA / "auction.xml").read_text()
Q1 = (DATA / "q1.xq").read_text().strip()
Q1_ABBREV = (DATA / "q1_abbrev.xq").read_text().strip()

# two open auctions with two bidders each; used where order across bindings matters
TWO_BIDDERS = """<site><open_auctions>
<open_auction id="a1"><bidder><time>1</time></bidder><bidder><time>2</time></bidder></open_auction>
<open_auction id="a2"><bidder><time>3</time></bidder><bidder><time>4</time></bidder></open_auction>
</open_auctions></site>"""


@pytest.fixture(scope="session")
def sample() -> DocTable:
    return shred(AUCTION_XML, "auction.xml")


@pytest.fixture(scope="session")
def two_bidders() -> DocTable:
    return shred(TWO_BIDDERS, "auction.xml")


@pytest.fixture(scope="session")
def corpus_docs() -> list[DocTable]:
    """Three small generated auction documents (each well under 200 nodes)."""
    return [shred(auction_xml(s, auctions=3 + s), "auction.xml") for s in range(3)]


ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
