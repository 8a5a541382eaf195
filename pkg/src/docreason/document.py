"""Document ingestion, multi-page flattening, and tokenization.

Input records describe a visually-rich document as pages plus layout blocks
with normalized bounding boxes (coordinates in 0..1000 relative to their
page). This module validates records, flattens multi-page documents onto a
single canonical canvas, and produces the token sequence the model consumes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .errors import DegenerateGeometry, QuestionTooLong, SchemaError, ValidationError
from .vocab import Vocab, default_vocab, tokenize_text

logger = logging.getLogger(__name__)

COORD_MAX = 1000

_KNOWN_RECORD_FIELDS = {"doc_id", "question", "pages", "blocks", "answer"}
_KNOWN_PAGE_FIELDS = {"width", "height"}
_KNOWN_BLOCK_FIELDS = {"block_id", "page_index", "order", "text", "box"}


@dataclass(frozen=True)
class BoundingBox:
    x0: int
    y0: int
    x1: int
    y1: int

    def as_list(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]


@dataclass(frozen=True)
class Page:
    width: int
    height: int


@dataclass(frozen=True)
class Block:
    block_id: int
    page_index: int
    order: int
    text: str
    box: BoundingBox


@dataclass
class Document:
    doc_id: str
    pages: list[Page]
    blocks: list[Block]


@dataclass
class CanonicalDocument:
    """Single-canvas view of a document: all boxes live in one 0..1000 frame.

    page_offsets[p] is the fractional vertical offset of page p on the
    canvas (p / num_pages), kept as an exact fraction of integers.
    """

    doc_id: str
    canvas_width: int
    canvas_height: int
    blocks: list[Block]
    page_offsets: list[float]


@dataclass(frozen=True)
class Token:
    text: str
    block_id: int | None  # None means the token comes from the question
    start: int  # char span within the source text
    end: int
    box: BoundingBox | None


@dataclass
class TokenSequence:
    tokens: list[Token]
    question_len: int
    block_ranges: dict[int, tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.block_ranges:
            self.block_ranges = {}
            current: int | None = None
            start = 0
            for i, tok in enumerate(self.tokens):
                if tok.block_id != current:
                    if current is not None:
                        self.block_ranges[current] = (start, i)
                    current = tok.block_id
                    start = i
            if current is not None:
                self.block_ranges[current] = (start, len(self.tokens))

    def __len__(self) -> int:
        return len(self.tokens)

    def question_range(self) -> tuple[int, int]:
        return (0, self.question_len)


def _require(cond: bool, msg: str):
    if not cond:
        raise SchemaError(msg)


def _check_box(raw, where: str) -> BoundingBox:
    _require(isinstance(raw, list) and len(raw) == 4, f"{where}: box must be a 4-element list")
    vals = []
    for v in raw:
        _require(isinstance(v, int) and not isinstance(v, bool), f"{where}: box coordinates must be integers")
        vals.append(v)
    x0, y0, x1, y1 = vals
    if not (0 <= x0 <= x1 <= COORD_MAX and 0 <= y0 <= y1 <= COORD_MAX):
        raise ValidationError(f"{where}: box {vals} outside 0..{COORD_MAX} or inverted")
    return BoundingBox(x0, y0, x1, y1)


def _warn_unknown(obj: dict, known: set[str], where: str):
    for k in sorted(set(obj) - known):
        logger.warning("%s: ignoring unknown field %r", where, k)


def ingest_document(record: dict) -> Document:
    """Validate the document part of a corpus record and return a Document.

    Blocks come back sorted by (page_index, order). Raises SchemaError for
    structural problems and ValidationError for out-of-range values; unknown
    fields are logged and ignored.
    """
    _require(isinstance(record, dict), "record must be an object")
    _warn_unknown(record, _KNOWN_RECORD_FIELDS, "record")
    doc_id = record.get("doc_id")
    _require(isinstance(doc_id, str) and doc_id != "", "doc_id must be a non-empty string")

    raw_pages = record.get("pages")
    _require(isinstance(raw_pages, list) and len(raw_pages) > 0, f"{doc_id}: pages must be a non-empty list")
    pages = []
    for p, rp in enumerate(raw_pages):
        _require(isinstance(rp, dict), f"{doc_id}: page {p} must be an object")
        _warn_unknown(rp, _KNOWN_PAGE_FIELDS, f"{doc_id} page {p}")
        w, h = rp.get("width"), rp.get("height")
        _require(isinstance(w, int) and isinstance(h, int), f"{doc_id}: page {p} width/height must be integers")
        pages.append(Page(w, h))

    raw_blocks = record.get("blocks")
    _require(isinstance(raw_blocks, list), f"{doc_id}: blocks must be a list")
    blocks = []
    seen_ids: set[int] = set()
    for i, rb in enumerate(raw_blocks):
        _require(isinstance(rb, dict), f"{doc_id}: block {i} must be an object")
        _warn_unknown(rb, _KNOWN_BLOCK_FIELDS, f"{doc_id} block {i}")
        bid = rb.get("block_id")
        _require(isinstance(bid, int) and not isinstance(bid, bool), f"{doc_id}: block {i} block_id must be an integer")
        if bid in seen_ids:
            raise ValidationError(f"{doc_id}: duplicate block_id {bid}")
        seen_ids.add(bid)
        page_index = rb.get("page_index")
        _require(isinstance(page_index, int) and not isinstance(page_index, bool),
                 f"{doc_id}: block {bid} page_index must be an integer")
        if not 0 <= page_index < len(pages):
            raise ValidationError(f"{doc_id}: block {bid} page_index {page_index} out of range")
        order = rb.get("order")
        _require(isinstance(order, int) and not isinstance(order, bool),
                 f"{doc_id}: block {bid} order must be an integer")
        text = rb.get("text")
        _require(isinstance(text, str), f"{doc_id}: block {bid} text must be a string")
        if text.strip() == "":
            raise ValidationError(f"{doc_id}: block {bid} has empty text")
        box = _check_box(rb.get("box"), f"{doc_id} block {bid}")
        blocks.append(Block(bid, page_index, order, text, box))

    blocks.sort(key=lambda b: (b.page_index, b.order))
    return Document(doc_id=doc_id, pages=pages, blocks=blocks)


def transform_multipage(doc: Document) -> CanonicalDocument:
    """Flatten all pages onto one canonical 0..1000 canvas, stacked vertically.

    Stretching every page to a common size and restacking cancels out in
    normalized coordinates, leaving x unchanged and
    y' = (y + 1000 * page) / num_pages.
    """
    for p, page in enumerate(doc.pages):
        if page.width <= 0 or page.height <= 0:
            raise DegenerateGeometry(f"{doc.doc_id}: page {p} has non-positive dimensions")
    n = len(doc.pages)
    out_blocks = []
    for b in doc.blocks:
        if n == 1:
            box = b.box
        else:
            p = b.page_index
            box = BoundingBox(
                b.box.x0,
                int(round((b.box.y0 + COORD_MAX * p) / n)),
                b.box.x1,
                int(round((b.box.y1 + COORD_MAX * p) / n)),
            )
        out_blocks.append(Block(b.block_id, b.page_index, b.order, b.text, box))
    width = max(p.width for p in doc.pages)
    height = sum(p.height for p in doc.pages)
    return CanonicalDocument(
        doc_id=doc.doc_id,
        canvas_width=width,
        canvas_height=height,
        blocks=out_blocks,
        page_offsets=[p / n for p in range(n)],
    )


def tokenize(canon: CanonicalDocument, question: str, max_len: int = 256,
             vocab: Vocab | None = None) -> TokenSequence:
    """Build the model input sequence: question tokens, then block tokens.

    The question is never truncated (QuestionTooLong if it alone exceeds
    max_len); document tokens are dropped from the tail once the budget is
    spent. Each token keeps a char span into its source text, and block
    tokens inherit their block's canonical box.
    """
    vocab = vocab or default_vocab()
    q_tokens = [Token(t, None, s, e, None) for t, s, e in tokenize_text(question, vocab)]
    if len(q_tokens) > max_len:
        raise QuestionTooLong(
            f"{canon.doc_id}: question tokenizes to {len(q_tokens)} tokens (max {max_len})")
    tokens = list(q_tokens)
    for block in canon.blocks:
        if len(tokens) >= max_len:
            break
        for t, s, e in tokenize_text(block.text, vocab):
            tokens.append(Token(t, block.block_id, s, e, block.box))
            if len(tokens) >= max_len:
                break
    return TokenSequence(tokens=tokens, question_len=len(q_tokens))
