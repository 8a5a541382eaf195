"""Corpus records to model-ready instances and supervision targets.

A corpus file is either a JSON array or JSON-lines of records:

    {"doc_id", "question", "pages", "blocks",
     "answer": {"type", "value", "scale", "evidence_node_refs",
                "expression" (Arithmetic only)}}

Evidence refs address inventory nodes positionally:
{"kind": "quantity", "block_id": 3, "index": 1} is the second quantity
extracted from block 3 (block_id null means the question). Expressions use
e#k for the k-th evidence ref and c#k for constants.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass

from .document import CanonicalDocument, TokenSequence, ingest_document, tokenize, transform_multipage
from .elements import NodeKind, NodeSet, build_node_inventory, node_token_indices
from .errors import SchemaError, ValidationError
from .graphs import GraphKind, SemanticGraph, build_all_graphs
from .heads import AnswerType, Scale
from .tree import Answer, TreeNode, execute_tree, parse_tree, serialize_tree
from .vocab import Vocab, default_vocab

logger = logging.getLogger(__name__)

_REF_KINDS = {"question": NodeKind.QUESTION, "block": NodeKind.BLOCK,
              "quantity": NodeKind.QUANTITY, "date": NodeKind.DATE}


@dataclass
class Supervision:
    answer: Answer
    gold_nodes: set[int]
    gold_tree: TreeNode | None = None
    span: tuple[int, int] | None = None  # inclusive token indices
    bio_labels: list[str] | None = None

    @property
    def answer_type(self) -> AnswerType:
        return self.answer.answer_type


@dataclass
class Instance:
    qid: str
    question: str
    canon: CanonicalDocument
    seq: TokenSequence
    nodes: NodeSet
    graphs: dict[GraphKind, SemanticGraph]
    source_texts: dict[int | None, str]
    gold: Supervision | None = None


def load_records(path: str) -> list[dict]:
    with open(path, encoding="utf-8") as f:
        text = f.read()
    stripped = text.lstrip()
    if stripped.startswith("["):
        records = json.loads(text)
        if not isinstance(records, list):
            raise SchemaError(f"{path}: top-level JSON must be a list")
        return records
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def resolve_ref(nodes: NodeSet, ref: dict) -> int:
    if not isinstance(ref, dict) or "kind" not in ref:
        raise SchemaError(f"evidence ref must be an object with a kind: {ref!r}")
    kind = _REF_KINDS.get(ref["kind"])
    if kind is None:
        raise SchemaError(f"unknown evidence ref kind {ref['kind']!r}")
    block_id = ref.get("block_id")
    if kind == NodeKind.QUESTION:
        return nodes.question_node().node_id
    if kind == NodeKind.BLOCK:
        try:
            return nodes.block_node(block_id).node_id
        except KeyError:
            raise ValidationError(f"evidence ref names missing block {block_id}") from None
    index = ref.get("index", 0)
    for node in nodes.by_kind(kind):
        if node.block_id == block_id and node.occurrence == index:
            return node.node_id
    raise ValidationError(
        f"no {kind.value} node with occurrence {index} in "
        f"{'question' if block_id is None else f'block {block_id}'}")


def build_instance(record: dict, max_len: int = 256,
                   vocab: Vocab | None = None, with_gold: bool = True) -> Instance:
    vocab = vocab or default_vocab()
    doc = ingest_document(record)
    question = record.get("question")
    if not isinstance(question, str) or not question.strip():
        raise SchemaError(f"{doc.doc_id}: question must be a non-empty string")
    canon = transform_multipage(doc)
    seq = tokenize(canon, question, max_len, vocab)
    nodes = build_node_inventory(canon, question, seq)
    graphs = build_all_graphs(nodes)
    source_texts: dict[int | None, str] = {None: question}
    for block in canon.blocks:
        source_texts[block.block_id] = block.text
    inst = Instance(qid=doc.doc_id, question=question, canon=canon, seq=seq,
                    nodes=nodes, graphs=graphs, source_texts=source_texts)
    if with_gold and isinstance(record.get("answer"), dict):
        inst.gold = build_supervision(inst, record["answer"])
    return inst


def _find_span_tokens(inst: Instance, text: str, block_ids: list[int]) -> tuple[int, int]:
    """Locate a gold answer string inside one of the evidence blocks (or the
    question) and map it to an inclusive token range."""
    needle = text.strip().lower()
    candidates: list[int | None] = list(block_ids) or [*inst.seq.block_ranges, None]
    for bid in candidates:
        hay = inst.source_texts[bid].lower()
        at = hay.find(needle)
        if at < 0:
            continue
        lo, hi = inst.seq.block_ranges[bid] if bid is not None else inst.seq.question_range()
        covered = [i for i in range(lo, hi)
                   if inst.seq.tokens[i].start >= at and inst.seq.tokens[i].end <= at + len(needle)]
        if covered:
            return (covered[0], covered[-1])
    raise ValidationError(f"{inst.qid}: answer text {text!r} not found in evidence blocks")


def _substitute_expression(expr: str, node_ids: list[int]) -> str:
    def repl(m: re.Match) -> str:
        k = int(m.group(1))
        if k >= len(node_ids):
            raise ValidationError(f"expression leaf e#{k} has no evidence ref")
        return f"n#{node_ids[k]}"
    return re.sub(r"e#(\d+)", repl, expr)


def build_supervision(inst: Instance, answer: dict) -> Supervision:
    try:
        atype = AnswerType(answer.get("type"))
    except ValueError:
        raise SchemaError(f"{inst.qid}: unknown answer type {answer.get('type')!r}") from None
    try:
        scale = Scale(answer.get("scale", "None"))
    except ValueError:
        raise SchemaError(f"{inst.qid}: unknown scale {answer.get('scale')!r}") from None
    refs = answer.get("evidence_node_refs", [])
    if not isinstance(refs, list):
        raise SchemaError(f"{inst.qid}: evidence_node_refs must be a list")
    ref_ids = [resolve_ref(inst.nodes, r) for r in refs]
    gold_nodes = set(ref_ids)
    # The owning Question/Block of every leaf ref is evidence too.
    for nid in list(gold_nodes):
        parent = inst.nodes.get(nid).parent_id
        if parent is not None:
            gold_nodes.add(parent)
    value = answer.get("value")
    sup = Supervision(answer=Answer(atype, value, scale,
                                    raw_value=float(value) if isinstance(value, (int, float)) else None),
                      gold_nodes=gold_nodes)

    if atype == AnswerType.ARITHMETIC:
        expr = answer.get("expression")
        if not isinstance(expr, str):
            raise SchemaError(f"{inst.qid}: Arithmetic answer needs an expression")
        tree = parse_tree(_substitute_expression(expr, ref_ids))
        for leaf_id in _leaf_node_ids(tree):
            node = inst.nodes.get(leaf_id)
            if node.kind not in (NodeKind.QUANTITY, NodeKind.DATE):
                raise ValidationError(f"{inst.qid}: expression leaf n#{leaf_id} is a {node.kind.value} node")
        sup.gold_tree = tree
        if isinstance(value, (int, float)):
            got = execute_tree(tree, inst.nodes)
            if abs(got - float(value)) > 1e-6 * max(1.0, abs(float(value))):
                logger.warning("%s: expression %s executes to %r, gold value is %r",
                               inst.qid, serialize_tree(tree), got, value)
    elif atype == AnswerType.SPAN:
        if not isinstance(value, str):
            raise SchemaError(f"{inst.qid}: Span answer value must be a string")
        block_ids = [inst.nodes.get(n).block_id for n in gold_nodes
                     if inst.nodes.get(n).kind == NodeKind.BLOCK]
        sup.span = _find_span_tokens(inst, value, block_ids)
    elif atype == AnswerType.SPANS:
        if not isinstance(value, list) or len(value) < 2:
            raise SchemaError(f"{inst.qid}: Spans answer value must be a list of >= 2 strings")
        sup.bio_labels = _bio_from_texts(inst, value, gold_nodes)
    else:  # Counting
        element_ids = [n for n in gold_nodes
                       if inst.nodes.get(n).kind in (NodeKind.QUANTITY, NodeKind.DATE)]
        if not element_ids:
            raise ValidationError(f"{inst.qid}: Counting answer needs Quantity/Date evidence refs")
        if isinstance(value, (int, float)) and int(value) != len(element_ids):
            logger.warning("%s: count %r differs from %d counted evidence nodes",
                           inst.qid, value, len(element_ids))
        sup.bio_labels = _bio_from_nodes(inst, element_ids)
    return sup


def _leaf_node_ids(tree: TreeNode) -> list[int]:
    if tree.kind == "node":
        return [tree.value]
    out = []
    for child in tree.children:
        out.extend(_leaf_node_ids(child))
    return out


def _bio_from_ranges(length: int, ranges: list[tuple[int, int]]) -> list[str]:
    labels = ["O"] * length
    for s, e in ranges:
        labels[s] = "B"
        for i in range(s + 1, e + 1):
            labels[i] = "I"
    return labels


def _bio_from_texts(inst: Instance, texts: list[str], gold_nodes: set[int]) -> list[str]:
    block_ids = [inst.nodes.get(n).block_id for n in gold_nodes
                 if inst.nodes.get(n).kind == NodeKind.BLOCK]
    ranges = [_find_span_tokens(inst, t, block_ids) for t in texts]
    return _bio_from_ranges(len(inst.seq), ranges)


def _bio_from_nodes(inst: Instance, node_ids: list[int]) -> list[str]:
    ranges = []
    for nid in sorted(node_ids):
        idx = node_token_indices(inst.nodes.get(nid), inst.seq)
        ranges.append((idx[0], idx[-1]))
    return _bio_from_ranges(len(inst.seq), ranges)


def load_corpus(path: str, max_len: int = 256, vocab: Vocab | None = None,
                with_gold: bool = True) -> list[Instance]:
    vocab = vocab or default_vocab()
    return [build_instance(r, max_len, vocab, with_gold) for r in load_records(path)]
