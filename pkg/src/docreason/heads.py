"""Prediction heads over GCN outputs: node selection, token masking, answer
type, extractive span, BIO tagging, and scale classification.

Heads return both the autodiff tensors (log-probabilities, for the loss)
and plain decoded results. All probability outputs are proper softmax
distributions.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .autodiff import Tensor, add_masked, concat
from .document import TokenSequence
from .elements import NodeKind, NodeSet
from .errors import GoldOverCap, NoValidTokens, ValidationError
from .nn import FFN2


class AnswerType(str, Enum):
    SPAN = "Span"
    SPANS = "Spans"
    COUNTING = "Counting"
    ARITHMETIC = "Arithmetic"


ANSWER_TYPES = list(AnswerType)


class Scale(str, Enum):
    NONE = "None"
    THOUSAND = "Thousand"
    MILLION = "Million"
    BILLION = "Billion"
    PERCENT = "Percent"


SCALES = list(Scale)


@dataclass
class NodeSelection:
    selected: list[int]  # node ids, ascending
    probabilities: np.ndarray  # (N,) P(relevant)
    log_probs: Tensor  # (N, 2) for the loss


@dataclass
class UpdatedTokens:
    matrix: Tensor  # (len, 2*dim)
    valid_mask: np.ndarray  # (len,) bool


@dataclass
class HeadOutput:
    log_probs: Tensor
    probabilities: np.ndarray
    argmax: int


def classify_nodes(sd_reprs: Tensor, ffn: FFN2, max_nodes: int = 12,
                   rng: np.random.Generator | None = None,
                   train: bool = False) -> NodeSelection:
    """Per-node relevance; selected = P > 0.5, capped at the max_nodes
    highest probabilities with ties broken toward lower node ids."""
    log_probs = ffn(sd_reprs, rng, train).log_softmax()
    probs = np.exp(log_probs.data[:, 1])
    over = [i for i in range(len(probs)) if probs[i] > 0.5]
    over.sort(key=lambda i: (-probs[i], i))
    return NodeSelection(selected=sorted(over[:max_nodes]),
                         probabilities=probs, log_probs=log_probs)


def inject_gold_nodes(sel: NodeSelection, gold_nodes: set[int], max_nodes: int = 12,
                      train: bool = True) -> NodeSelection:
    """Training-only: force gold nodes into the selection, evicting the
    lowest-probability non-gold nodes if the cap would be exceeded."""
    if not train:
        raise ValidationError("gold node injection is a training-only operation")
    if len(gold_nodes) > max_nodes:
        raise GoldOverCap(f"{len(gold_nodes)} gold nodes exceed the cap of {max_nodes}")
    merged = set(sel.selected) | set(gold_nodes)
    if len(merged) > max_nodes:
        evictable = sorted((n for n in merged if n not in gold_nodes),
                           key=lambda n: (sel.probabilities[n], -n))
        for nid in evictable:
            if len(merged) <= max_nodes:
                break
            merged.discard(nid)
    return NodeSelection(selected=sorted(merged), probabilities=sel.probabilities,
                         log_probs=sel.log_probs)


def mask_and_update_tokens(token_embs: Tensor, sel: NodeSelection, nodes: NodeSet,
                           sd_reprs: Tensor, seq: TokenSequence) -> UpdatedTokens:
    """Tokens covered by a selected Question/Block node become
    concat(h_token, h_owner); everything else is an exactly-zero row."""
    owner_row = np.zeros(len(seq), dtype=np.int64)
    valid = np.zeros(len(seq), dtype=bool)
    selected = set(sel.selected)
    for node in nodes.nodes:
        if node.node_id not in selected:
            continue
        if node.kind == NodeKind.QUESTION:
            lo, hi = seq.question_range()
        elif node.kind == NodeKind.BLOCK:
            lo, hi = seq.block_ranges[node.block_id]
        else:
            continue
        owner_row[lo:hi] = node.node_id
        valid[lo:hi] = True
    mask_col = Tensor(valid.astype(np.float64)[:, None])
    owners = sd_reprs.take_rows(owner_row) * mask_col
    matrix = concat([token_embs * mask_col, owners], axis=1)
    return UpdatedTokens(matrix=matrix, valid_mask=valid)


def _masked_position_log_probs(u: UpdatedTokens, ffn: FFN2,
                               rng: np.random.Generator | None,
                               train: bool) -> Tensor:
    logits = ffn(u.matrix, rng, train).reshape((1, len(u.valid_mask)))
    return add_masked(logits, u.valid_mask[None, :]).log_softmax()


def predict_span(u: UpdatedTokens, start_ffn: FFN2, end_ffn: FFN2,
                 max_span_len: int = 64, rng: np.random.Generator | None = None,
                 train: bool = False) -> tuple[Tensor, Tensor, tuple[int, int]]:
    """Start/end distributions over valid positions plus the decoded pair
    (s, e), inclusive, maximizing P_start * P_end with s <= e and
    e - s < max_span_len."""
    if not u.valid_mask.any():
        raise NoValidTokens("span prediction over a fully masked sequence")
    start_lp = _masked_position_log_probs(u, start_ffn, rng, train)
    end_lp = _masked_position_log_probs(u, end_ffn, rng, train)
    s_row, e_row = start_lp.data[0], end_lp.data[0]
    best, best_score = None, -np.inf
    for s in np.nonzero(u.valid_mask)[0]:
        for e in range(s, min(s + max_span_len, len(e_row))):
            if not u.valid_mask[e]:
                continue
            score = s_row[s] + e_row[e]
            if score > best_score:
                best, best_score = (int(s), int(e)), score
    return start_lp, end_lp, best


def tag_tokens(u: UpdatedTokens, ffn: FFN2, rng: np.random.Generator | None = None,
               train: bool = False) -> tuple[Tensor, list[str]]:
    """3-way B/I/O distribution per token; masked tokens are forced to O."""
    log_probs = ffn(u.matrix, rng, train).log_softmax()
    labels = []
    order = ["B", "I", "O"]
    for i in range(len(u.valid_mask)):
        if not u.valid_mask[i]:
            labels.append("O")
        else:
            labels.append(order[int(np.argmax(log_probs.data[i]))])
    return log_probs, labels


def bio_spans(labels: list[str]) -> list[tuple[int, int]]:
    """Decode (start, end) inclusive ranges. Lenient: an I without a
    preceding B opens a span."""
    spans = []
    start = None
    for i, lab in enumerate(labels):
        if lab == "B":
            if start is not None:
                spans.append((start, i - 1))
            start = i
        elif lab == "I":
            if start is None:
                start = i
        else:
            if start is not None:
                spans.append((start, i - 1))
                start = None
    if start is not None:
        spans.append((start, len(labels) - 1))
    return spans


def _summary_head(h_sd: Tensor, ffn: FFN2, rng: np.random.Generator | None,
                  train: bool) -> HeadOutput:
    log_probs = ffn(h_sd.reshape((1, h_sd.data.shape[-1])), rng, train).log_softmax()
    probs = np.exp(log_probs.data[0])
    return HeadOutput(log_probs=log_probs, probabilities=probs, argmax=int(np.argmax(probs)))


def classify_answer_type(h_sd: Tensor, ffn: FFN2, rng: np.random.Generator | None = None,
                         train: bool = False) -> HeadOutput:
    return _summary_head(h_sd, ffn, rng, train)


def classify_scale(h_sd: Tensor, ffn: FFN2, rng: np.random.Generator | None = None,
                   train: bool = False) -> HeadOutput:
    return _summary_head(h_sd, ffn, rng, train)
