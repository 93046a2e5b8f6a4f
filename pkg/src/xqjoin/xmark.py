"""Small XMark-flavoured auction documents for tests and demos."""

from __future__ import annotations

import random
from xml.sax.saxutils import escape, quoteattr

WORDS = ("gold", "silver", "vintage", "rare", "mint", "lot", "signed", "boxed", "antique", "new")
CATEGORIES = ("c1", "c2", "c3", "c4")


def auction_xml(seed: int = 0, auctions: int = 3, people: int = 3, items: int = 3, max_bidders: int = 3) -> str:
    """Deterministic auction site document.

    The shape follows the XMark benchmark loosely: people, items with
    categories, and open auctions carrying an initial price and a list of
    bidders with time and increase children.
    """
    rng = random.Random(seed)
    out = ["<site>"]
    out.append("<people>")
    for p in range(people):
        out.append(f'<person id="person{p}"><name>{escape(rng.choice(WORDS).title())} {p}</name>')
        if rng.random() < 0.5:
            out.append(f"<age>{rng.randint(18, 80)}</age>")
        out.append("</person>")
    out.append("</people>")
    out.append("<regions>")
    for i in range(items):
        cat = rng.choice(CATEGORIES)
        out.append(f'<item id="item{i}" category={quoteattr(cat)}>')
        out.append(f"<name>{escape(rng.choice(WORDS))}</name>")
        out.append(f"<price>{rng.randint(1, 900)}</price>")
        if rng.random() < 0.5:
            out.append(f"<annotation>{escape(' '.join(rng.sample(WORDS, 2)))}</annotation>")
        out.append("</item>")
    out.append("</regions>")
    out.append("<open_auctions>")
    for a in range(auctions):
        out.append(f'<open_auction id="{a + 1}">')
        out.append(f"<initial>{rng.randint(1, 60)}</initial>")
        for _ in range(rng.randint(0, max_bidders)):
            person = rng.randrange(max(people, 1))
            out.append(f'<bidder person="person{person}">')
            out.append(f"<time>{rng.randint(0, 23):02d}:{rng.randint(0, 59):02d}</time>")
            out.append(f"<increase>{rng.randint(1, 3000) / 100:.2f}</increase>")
            out.append("</bidder>")
        if rng.random() < 0.6:
            out.append(f"<current>{rng.randint(10, 600)}</current>")
        out.append(f'<itemref item="item{rng.randrange(max(items, 1))}"/>')
        out.append("</open_auction>")
    out.append("</open_auctions>")
    out.append("</site>")
    return "".join(out)


def sized_auction_xml(target_bytes: int, seed: int = 0) -> str:
    """Auction document of roughly ``target_bytes`` bytes."""
    probe = auction_xml(seed, auctions=50, people=50, items=50)
    scale = max(1, round(target_bytes / len(probe) * 50))
    return auction_xml(seed, auctions=scale, people=scale, items=scale)
