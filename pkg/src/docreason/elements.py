"""Quantity/date extraction and the typed node inventory.

Every instance is reduced to four kinds of nodes: one Question node, one
Block node per layout block, and Quantity/Date nodes mined from the raw
text of those sources. Nodes carry char spans back into their source text
so they can be pooled from token representations.
"""

from __future__ import annotations

import re
from collections.abc import Iterator
from dataclasses import dataclass, field
from enum import Enum

from .document import CanonicalDocument, TokenSequence
from .errors import EmptyInventory, ValidationError

MAX_BARE_YEAR = 2100
MIN_BARE_YEAR = 1900


class NodeKind(str, Enum):
    QUESTION = "question"
    BLOCK = "block"
    QUANTITY = "quantity"
    DATE = "date"


@dataclass(frozen=True)
class QuantitySpan:
    value: float
    start: int
    end: int
    text: str
    is_percent: bool = False


@dataclass(frozen=True)
class DateSpan:
    year: int
    month: int  # 0 when absent
    day: int  # 0 when absent
    start: int
    end: int
    text: str

    def key(self) -> tuple[int, int, int]:
        return (self.year, self.month, self.day)


_MONTHS = {
    "january": 1, "february": 2, "march": 3, "april": 4, "may": 5,
    "june": 6, "july": 7, "august": 8, "september": 9, "october": 10,
    "november": 11, "december": 12,
}
_MONTH_ABBR = {name[:3]: num for name, num in _MONTHS.items()}
_MONTH_PAT = "|".join(list(_MONTHS) + [f"{a}\\.?" for a in _MONTH_ABBR])

_DATE_RE = re.compile(
    rf"""
    (?P<dmy>\b(?P<dmy_d>[0-3]?\d)\s+(?P<dmy_m>{_MONTH_PAT})\s+(?P<dmy_y>\d{{4}})\b)
  | (?P<mdy>\b(?P<mdy_m>{_MONTH_PAT})\s+(?P<mdy_d>[0-3]?\d)\s*,\s*(?P<mdy_y>\d{{4}})\b)
  | (?P<my>\b(?P<my_m>{_MONTH_PAT})\s+(?P<my_y>\d{{4}})\b)
  | (?P<fy>\b(?:FY\s?|F)(?P<fy_y>\d{{4}}|\d{{2}})\b)
  | (?P<year>(?<![\d.,])(?<![$€£])(?P<year_y>\d{{4}})\b(?!\.\d)(?!\s?%))
    """,
    re.IGNORECASE | re.VERBOSE,
)

_QUANT_RE = re.compile(
    r"""
    (?P<paren>\(\s*(?P<paren_cur>[$€£])?\s*(?P<paren_num>\d{1,3}(?:,\d{3})+|\d+)(?P<paren_frac>\.\d+)?\s*\))
  | (?P<plain>(?P<sign>[-+])?(?:(?P<cur>[$€£])\s?)?(?P<num>\d{1,3}(?:,\d{3})+|\d+)(?P<frac>\.\d+)?(?P<pct>\s?%)?)
    """,
    re.VERBOSE,
)


def _month_num(text: str) -> int:
    t = text.lower().rstrip(".")
    return _MONTHS.get(t) or _MONTH_ABBR[t[:3]]


def extract_dates(text: str) -> list[DateSpan]:
    """Find date mentions: day-month-year, month-day-year, month-year,
    fiscal-year markers, and bare years 1900..2100."""
    out: list[DateSpan] = []
    for m in _DATE_RE.finditer(text):
        if m.lastgroup is None:
            continue
        if m.group("dmy"):
            y, mo, d = int(m.group("dmy_y")), _month_num(m.group("dmy_m")), int(m.group("dmy_d"))
            if not (1 <= d <= 31):
                continue
        elif m.group("mdy"):
            y, mo, d = int(m.group("mdy_y")), _month_num(m.group("mdy_m")), int(m.group("mdy_d"))
            if not (1 <= d <= 31):
                continue
        elif m.group("my"):
            y, mo, d = int(m.group("my_y")), _month_num(m.group("my_m")), 0
        elif m.group("fy"):
            raw = m.group("fy_y")
            y = int(raw) + 2000 if len(raw) == 2 else int(raw)
            mo = d = 0
            if not (MIN_BARE_YEAR <= y <= MAX_BARE_YEAR):
                continue
        else:
            y, mo, d = int(m.group("year_y")), 0, 0
            if not (MIN_BARE_YEAR <= y <= MAX_BARE_YEAR):
                continue
        out.append(DateSpan(y, mo, d, m.start(), m.end(), m.group(0)))
    return out


def extract_quantities(text: str) -> list[QuantitySpan]:
    """Find numeric mentions: signed/comma-grouped decimals, percentages,
    currency-prefixed amounts, and parenthesized negatives like (1,234)."""
    out: list[QuantitySpan] = []
    for m in _QUANT_RE.finditer(text):
        if m.group("paren"):
            digits = m.group("paren_num") + (m.group("paren_frac") or "")
            value = -float(digits.replace(",", ""))
            out.append(QuantitySpan(value, m.start(), m.end(), m.group(0)))
            continue
        digits = m.group("num") + (m.group("frac") or "")
        value = float(digits.replace(",", ""))
        if m.group("sign") == "-":
            value = -value
        out.append(QuantitySpan(value, m.start(), m.end(), m.group(0),
                                is_percent=m.group("pct") is not None))
    return out


@dataclass(frozen=True)
class ElementNode:
    node_id: int
    kind: NodeKind
    block_id: int | None  # None: the node's source text is the question
    parent_id: int | None  # containing Question/Block node, for leaf kinds
    start: int
    end: int
    text: str
    value: float | None = None
    is_percent: bool = False
    date_key: tuple[int, int, int] | None = None
    occurrence: int = 0  # index among same-kind nodes of the same source


@dataclass
class NodeSet:
    nodes: list[ElementNode] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self) -> Iterator[ElementNode]:
        return iter(self.nodes)

    def by_kind(self, kind: NodeKind) -> list[ElementNode]:
        return [n for n in self.nodes if n.kind == kind]

    def get(self, node_id: int) -> ElementNode:
        node = self.nodes[node_id]
        if node.node_id != node_id:
            raise ValidationError(f"node ids not dense: {node.node_id} at position {node_id}")
        return node

    def question_node(self) -> ElementNode:
        return self.by_kind(NodeKind.QUESTION)[0]

    def block_node(self, block_id: int) -> ElementNode:
        for n in self.by_kind(NodeKind.BLOCK):
            if n.block_id == block_id:
                return n
        raise KeyError(f"no block node for block_id {block_id}")


def _overlaps(a_start: int, a_end: int, b_start: int, b_end: int) -> bool:
    return a_start < b_end and b_start < a_end


def _source_elements(text: str) -> tuple[list[QuantitySpan], list[DateSpan]]:
    dates = extract_dates(text)
    quantities = [q for q in extract_quantities(text)
                  if not any(_overlaps(q.start, q.end, d.start, d.end) for d in dates)]
    return quantities, dates


def build_node_inventory(canon: CanonicalDocument, question: str,
                         seq: TokenSequence | None = None) -> NodeSet:
    """Construct the full node inventory for one instance.

    Node ids are dense and deterministic: Question first, then Block nodes
    in document order, then Quantity nodes (question source first, then
    blocks, by char offset), then Date nodes in the same source order.
    Elements whose span has no surviving token (truncation) are dropped, as
    are blocks with no tokens at all. Date spans claim overlapping numeric
    spans, so a bare year never doubles as a quantity.
    """
    sources: list[tuple[int | None, str]] = [(None, question)]
    for block in canon.blocks:
        if seq is None or block.block_id in seq.block_ranges:
            sources.append((block.block_id, block.text))
    if len(sources) == 1:
        raise EmptyInventory(f"{canon.doc_id}: no block has any tokens")

    def span_has_tokens(block_id: int | None, start: int, end: int) -> bool:
        if seq is None:
            return True
        lo, hi = seq.question_range() if block_id is None else seq.block_ranges[block_id]
        return any(_overlaps(seq.tokens[i].start, seq.tokens[i].end, start, end)
                   for i in range(lo, hi))

    nodes: list[ElementNode] = []
    parent_of: dict[int | None, int] = {}
    nodes.append(ElementNode(0, NodeKind.QUESTION, None, None, 0, len(question), question))
    parent_of[None] = 0
    for block_id, text in sources[1:]:
        nid = len(nodes)
        nodes.append(ElementNode(nid, NodeKind.BLOCK, block_id, None, 0, len(text), text))
        parent_of[block_id] = nid

    extracted = {block_id: _source_elements(text) for block_id, text in sources}
    for kind in (NodeKind.QUANTITY, NodeKind.DATE):
        for block_id, _text in sources:
            quantities, dates = extracted[block_id]
            spans = quantities if kind == NodeKind.QUANTITY else dates
            occurrence = 0
            for sp in spans:
                if not span_has_tokens(block_id, sp.start, sp.end):
                    occurrence += 1
                    continue
                nid = len(nodes)
                if kind == NodeKind.QUANTITY:
                    nodes.append(ElementNode(nid, kind, block_id, parent_of[block_id],
                                             sp.start, sp.end, sp.text, value=sp.value,
                                             is_percent=sp.is_percent, occurrence=occurrence))
                else:
                    nodes.append(ElementNode(nid, kind, block_id, parent_of[block_id],
                                             sp.start, sp.end, sp.text,
                                             date_key=sp.key(), occurrence=occurrence))
                occurrence += 1
    return NodeSet(nodes=nodes)


def node_token_indices(node: ElementNode, seq: TokenSequence) -> list[int]:
    """Token positions whose char span overlaps the node's span."""
    if node.block_id is None:
        lo, hi = seq.question_range()
    else:
        lo, hi = seq.block_ranges[node.block_id]
    if node.kind in (NodeKind.QUESTION, NodeKind.BLOCK):
        return list(range(lo, hi))
    return [i for i in range(lo, hi)
            if _overlaps(seq.tokens[i].start, seq.tokens[i].end, node.start, node.end)]
