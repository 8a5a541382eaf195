"""Goal-driven expression-tree decoding, execution, and answer assembly.

Trees are generated pre-order: an operator token opens two child goals
(left generated next, right goal parked on a stack), a leaf token closes
the current goal and merges completed subtrees upward. The candidate
vocabulary is operators + constants + the selected Quantity/Date nodes,
scored against the current goal and an attention context over all graph
nodes. Beam search keeps a finished pool and stops once no alive state can
beat it.
"""

from __future__ import annotations

import datetime
from dataclasses import dataclass, replace

import numpy as np

from .autodiff import Tensor, add_masked, concat
from .document import TokenSequence
from .elements import ElementNode, NodeKind, NodeSet
from .errors import (DivisionByZero, InconsistentComponents, NoLeafCandidates,
                     ValidationError)
from .heads import AnswerType, NodeSelection, Scale, bio_spans
from .nn import FFN2, Linear

OPS = ["+", "-", "*", "/"]
DEFAULT_CONSTANTS = list(range(1, 101))


@dataclass(frozen=True)
class TreeNode:
    kind: str  # "op" | "const" | "node"
    value: object  # op symbol, constant int, or inventory node_id
    children: tuple["TreeNode", ...] = ()

    def __post_init__(self):
        if self.kind == "op" and len(self.children) != 2:
            raise ValidationError(f"operator {self.value!r} needs exactly 2 children")
        if self.kind != "op" and self.children:
            raise ValidationError("leaves cannot have children")


def serialize_tree(t: TreeNode) -> str:
    if t.kind == "op":
        return f"({t.value} {serialize_tree(t.children[0])} {serialize_tree(t.children[1])})"
    prefix = "c" if t.kind == "const" else "n"
    return f"{prefix}#{t.value}"


def parse_tree(s: str) -> TreeNode:
    tokens = s.replace("(", " ( ").replace(")", " ) ").split()
    pos = 0

    def parse() -> TreeNode:
        nonlocal pos
        if pos >= len(tokens):
            raise ValidationError(f"truncated expression: {s!r}")
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            op = tokens[pos]
            pos += 1
            if op not in OPS:
                raise ValidationError(f"unknown operator {op!r} in {s!r}")
            left = parse()
            right = parse()
            if pos >= len(tokens) or tokens[pos] != ")":
                raise ValidationError(f"missing ')' in {s!r}")
            pos += 1
            return TreeNode("op", op, (left, right))
        if tok.startswith("c#"):
            return TreeNode("const", int(tok[2:]))
        if tok.startswith("n#"):
            return TreeNode("node", int(tok[2:]))
        raise ValidationError(f"bad leaf token {tok!r} in {s!r}")

    out = parse()
    if pos != len(tokens):
        raise ValidationError(f"trailing tokens in {s!r}")
    return out


def leaf_value(node: ElementNode) -> float:
    """Numeric meaning of a Quantity/Date leaf. Dates with only a year
    evaluate to the year; full or month-level dates to their day ordinal
    (month-level uses day 1)."""
    if node.kind == NodeKind.QUANTITY:
        return float(node.value)
    if node.kind == NodeKind.DATE:
        y, m, d = node.date_key
        if m == 0 and d == 0:
            return float(y)
        return float(datetime.date(y, m, max(d, 1)).toordinal())
    raise ValidationError(f"node {node.node_id} ({node.kind.value}) is not a leaf kind")


def execute_tree(t: TreeNode, nodes: NodeSet) -> float:
    if t.kind == "const":
        return float(t.value)
    if t.kind == "node":
        return leaf_value(nodes.get(t.value))
    a = execute_tree(t.children[0], nodes)
    b = execute_tree(t.children[1], nodes)
    if t.value == "+":
        return a + b
    if t.value == "-":
        return a - b
    if t.value == "*":
        return a * b
    if b == 0.0:
        raise DivisionByZero(f"{serialize_tree(t)} divides by zero")
    return a / b


class TreeVocab:
    """Token space for one decode: operators, constants, then the selected
    Quantity/Date leaves in ascending node-id order."""

    def __init__(self, leaf_node_ids: list[int], constants: list[int] | None = None):
        self.constants = DEFAULT_CONSTANTS if constants is None else list(constants)
        self.leaf_node_ids = sorted(leaf_node_ids)
        self.num_ops = len(OPS)
        self.num_constants = len(self.constants)

    def __len__(self) -> int:
        return self.num_ops + self.num_constants + len(self.leaf_node_ids)

    def describe(self, token: int) -> tuple[str, object]:
        if token < self.num_ops:
            return ("op", OPS[token])
        token -= self.num_ops
        if token < self.num_constants:
            return ("const", self.constants[token])
        return ("node", self.leaf_node_ids[token - self.num_constants])

    def token_for(self, kind: str, value: object) -> int:
        if kind == "op":
            return OPS.index(value)
        if kind == "const":
            return self.num_ops + self.constants.index(value)
        return self.num_ops + self.num_constants + self.leaf_node_ids.index(value)

    def tokens_for_tree(self, t: TreeNode) -> list[int]:
        out = [self.token_for(t.kind, t.value)]
        for child in t.children:
            out.extend(self.tokens_for_tree(child))
        return out

    def tree_from_tokens(self, tokens: list[int]) -> TreeNode:
        pos = 0

        def build() -> TreeNode:
            nonlocal pos
            kind, value = self.describe(tokens[pos])
            pos += 1
            if kind == "op":
                return TreeNode("op", value, (build(), build()))
            return TreeNode(kind, value)

        out = build()
        if pos != len(tokens):
            raise ValidationError("token sequence does not form one tree")
        return out


def selection_vocab(sel: NodeSelection, nodes: NodeSet,
                    constants: list[int] | None = None) -> TreeVocab:
    leaf_ids = [nid for nid in sel.selected
                if nodes.get(nid).kind in (NodeKind.QUANTITY, NodeKind.DATE)]
    return TreeVocab(leaf_ids, constants)


class TreeDecoder:
    """Learned pieces of the decoder: attention, candidate scoring, child
    goal derivation, subtree merge, and op/constant embeddings."""

    def __init__(self, rng: np.random.Generator, dim: int, drop: float = 0.5):
        self.dim = dim
        self.attn = FFN2(rng, 2 * dim, 1, "tree.attn", drop=drop)
        self.score = FFN2(rng, 3 * dim, 1, "tree.score", drop=drop)
        self.left = Linear(rng, 3 * dim, dim, "tree.left")
        self.right = Linear(rng, 4 * dim, dim, "tree.right")
        self.merge = Linear(rng, 3 * dim, dim, "tree.merge")
        self.op_table = Tensor(rng.uniform(-0.05, 0.05, size=(len(OPS), dim)),
                               requires_grad=True, name="tree.ops")
        self.const_table = Tensor(rng.uniform(-0.05, 0.05, size=(len(DEFAULT_CONSTANTS), dim)),
                                  requires_grad=True, name="tree.consts")

    def params(self) -> dict[str, Tensor]:
        out = {self.op_table.name: self.op_table, self.const_table.name: self.const_table}
        for part in (self.attn, self.score, self.left, self.right, self.merge):
            out.update(part.params())
        return out

    def candidate_embeddings(self, vocab: TreeVocab, sd_reprs: Tensor) -> Tensor:
        parts = [self.op_table]
        const_idx = np.asarray([c - 1 for c in vocab.constants], dtype=np.int64)
        if len(const_idx):
            parts.append(self.const_table.take_rows(const_idx))
        if vocab.leaf_node_ids:
            parts.append(sd_reprs.take_rows(np.asarray(vocab.leaf_node_ids, dtype=np.int64)))
        return concat(parts, axis=0)

    def context(self, goal: Tensor, sd_reprs: Tensor,
                rng: np.random.Generator | None = None, train: bool = False) -> Tensor:
        n = sd_reprs.data.shape[0]
        tiled = goal + Tensor(np.zeros((n, self.dim)))
        scores = self.attn(concat([tiled, sd_reprs], axis=1), rng, train)
        weights = scores.reshape((1, n)).softmax()
        return weights @ sd_reprs

    def step_log_probs(self, goal: Tensor, sd_reprs: Tensor, cand_embs: Tensor,
                       allow_ops: bool, num_ops: int,
                       rng: np.random.Generator | None = None,
                       train: bool = False) -> tuple[Tensor, Tensor]:
        """Masked log-distribution over the vocabulary plus the context."""
        ctx = self.context(goal, sd_reprs, rng, train)
        n_cand = cand_embs.data.shape[0]
        tiled_g = goal + Tensor(np.zeros((n_cand, self.dim)))
        tiled_c = ctx + Tensor(np.zeros((n_cand, self.dim)))
        scores = self.score(concat([tiled_g, tiled_c, cand_embs], axis=1), rng, train)
        logits = scores.reshape((1, n_cand))
        if not allow_ops:
            keep = np.ones((1, n_cand), dtype=bool)
            keep[0, :num_ops] = False
            logits = add_masked(logits, keep)
        return logits.log_softmax(), ctx

    def left_goal(self, goal: Tensor, op_emb: Tensor, ctx: Tensor) -> Tensor:
        return self.left(concat([goal, op_emb, ctx], axis=1)).tanh()

    def right_goal(self, goal: Tensor, op_emb: Tensor, ctx: Tensor,
                   left_emb: Tensor) -> Tensor:
        """Derived only once the left subtree is complete, so its embedding
        can steer what the right child should be."""
        return self.right(concat([goal, op_emb, ctx, left_emb], axis=1)).tanh()

    def merge_subtree(self, op_emb: Tensor, left_emb: Tensor, right_emb: Tensor) -> Tensor:
        return self.merge(concat([op_emb, left_emb, right_emb], axis=1)).tanh()


@dataclass
class _Frame:
    op_token: int
    op_emb: Tensor
    goal: Tensor  # the goal the operator was predicted under
    ctx: Tensor
    left_emb: Tensor | None = None


@dataclass
class _State:
    goal: Tensor | None  # None once finished
    frames: tuple[_Frame, ...]
    tokens: tuple[int, ...]
    logp: float
    order: int = 0


def _apply_token(decoder: TreeDecoder, state: _State, token: int, logp: float,
                 vocab: TreeVocab, cand_embs: Tensor, ctx: Tensor,
                 order: int) -> _State:
    kind, _value = vocab.describe(token)
    tokens = state.tokens + (token,)
    if kind == "op":
        op_emb = cand_embs.slice_rows(token, token + 1)
        frames = state.frames + (_Frame(token, op_emb, state.goal, ctx),)
        goal = decoder.left_goal(state.goal, op_emb, ctx)
        return _State(goal, frames, tokens, state.logp + logp, order)
    emb = cand_embs.slice_rows(token, token + 1)
    frames = list(state.frames)
    while frames and frames[-1].left_emb is not None:
        frame = frames.pop()
        emb = decoder.merge_subtree(frame.op_emb, frame.left_emb, emb)
    if not frames:
        return _State(None, (), tokens, state.logp + logp, order)
    top = frames[-1]
    frames[-1] = replace(top, left_emb=emb)
    goal = decoder.right_goal(top.goal, top.op_emb, top.ctx, emb)
    return _State(goal, tuple(frames), tokens, state.logp + logp, order)


def decode_tree(h_sd: Tensor, sd_reprs: Tensor, sel: NodeSelection, nodes: NodeSet,
                decoder: TreeDecoder, beam: int = 5, max_depth: int = 4,
                constants: list[int] | None = None) -> tuple[TreeNode, float]:
    """Beam-search the highest-probability expression tree.

    The root goal is the graph summary; operator tokens are masked once the
    pending-operator nesting reaches max_depth, so every search path
    terminates. Ties break toward earlier-created states, which expands to
    lower token ids first.
    """
    vocab = selection_vocab(sel, nodes, constants)
    if len(vocab) == vocab.num_ops:
        raise NoLeafCandidates("no constants and no selected Quantity/Date nodes")
    cand_embs = decoder.candidate_embeddings(vocab, sd_reprs)
    root_goal = h_sd.reshape((1, decoder.dim))
    alive = [_State(root_goal, (), (), 0.0)]
    finished: _State | None = None
    max_steps = 2 ** (max_depth + 1) - 1
    counter = 0
    for _ in range(max_steps):
        if not alive:
            break
        if finished is not None and finished.logp >= alive[0].logp:
            break
        children: list[_State] = []
        for state in alive:
            allow_ops = len(state.frames) < max_depth
            lp, ctx = decoder.step_log_probs(state.goal, sd_reprs, cand_embs,
                                             allow_ops, vocab.num_ops)
            row = lp.data[0]
            for token in range(len(vocab)):
                if not allow_ops and token < vocab.num_ops:
                    continue
                counter += 1
                child = _apply_token(decoder, state, token, float(row[token]),
                                     vocab, cand_embs, ctx, counter)
                if child.goal is None:
                    if finished is None or child.logp > finished.logp:
                        finished = child
                else:
                    children.append(child)
        children.sort(key=lambda s: (-s.logp, s.order))
        alive = children[:beam]
    if finished is None:
        raise NoLeafCandidates("beam produced no finished tree within the step budget")
    return vocab.tree_from_tokens(list(finished.tokens)), finished.logp


def teacher_forced_log_probs(h_sd: Tensor, sd_reprs: Tensor, gold_tokens: list[int],
                             vocab: TreeVocab, decoder: TreeDecoder, max_depth: int = 4,
                             rng: np.random.Generator | None = None,
                             train: bool = False) -> list[Tensor]:
    """Per-step masked log-distributions along the gold pre-order sequence,
    for the tree loss. Uses the same transitions as decoding."""
    cand_embs = decoder.candidate_embeddings(vocab, sd_reprs)
    state = _State(h_sd.reshape((1, decoder.dim)), (), (), 0.0)
    out = []
    for token in gold_tokens:
        if state.goal is None:
            raise ValidationError("gold token sequence continues past a complete tree")
        allow_ops = len(state.frames) < max_depth
        lp, ctx = decoder.step_log_probs(state.goal, sd_reprs, cand_embs,
                                         allow_ops, vocab.num_ops, rng, train)
        out.append(lp)
        state = _apply_token(decoder, state, token, 0.0, vocab, cand_embs, ctx, 0)
    if state.goal is not None:
        raise ValidationError("gold token sequence does not complete a tree")
    return out


@dataclass
class Answer:
    answer_type: AnswerType
    value: object  # str | float | list[str]
    scale: Scale
    raw_value: float | None = None  # exact numeric value before display rounding
    expression: str | None = None


def span_to_text(seq: TokenSequence, start: int, end: int,
                 source_texts: dict[int | None, str]) -> str:
    """Reconstruct the surface string for tokens start..end inclusive by
    splicing char spans per source; distinct sources joined by a space."""
    pieces = []
    i = start
    while i <= end:
        src = seq.tokens[i].block_id
        j = i
        while j + 1 <= end and seq.tokens[j + 1].block_id == src:
            j += 1
        lo = min(seq.tokens[k].start for k in range(i, j + 1))
        hi = max(seq.tokens[k].end for k in range(i, j + 1))
        pieces.append(source_texts[src][lo:hi])
        i = j + 1
    return " ".join(pieces)


def assemble_answer(atype: AnswerType, scale: Scale, seq: TokenSequence,
                    source_texts: dict[int | None, str],
                    span: tuple[int, int] | None = None,
                    tags: list[str] | None = None,
                    tree: TreeNode | None = None,
                    nodes: NodeSet | None = None,
                    round_decimals: int | None = 2) -> Answer:
    """Combine head outputs into the final typed answer."""
    if atype == AnswerType.SPAN:
        if span is None:
            raise InconsistentComponents("Span answer without a span prediction")
        text = span_to_text(seq, span[0], span[1], source_texts).strip()
        if not text:
            raise InconsistentComponents("Span answer decoded to empty text")
        return Answer(atype, text, scale)
    if atype in (AnswerType.SPANS, AnswerType.COUNTING):
        if tags is None:
            raise InconsistentComponents(f"{atype.value} answer without token tags")
        raw_texts = [span_to_text(seq, s, e, source_texts).strip()
                     for s, e in bio_spans(tags)]
        raw_texts = [t for t in raw_texts if t]
        if atype == AnswerType.COUNTING:
            return Answer(atype, float(len(raw_texts)), scale, raw_value=float(len(raw_texts)))
        texts = []
        for t in raw_texts:
            if t not in texts:
                texts.append(t)
        if not texts:
            raise InconsistentComponents("Spans answer decoded to no spans")
        return Answer(atype, texts, scale)
    if tree is None or nodes is None:
        raise InconsistentComponents("Arithmetic answer without a decoded tree")
    raw = execute_tree(tree, nodes)
    value = raw
    if round_decimals is not None and value != int(value):
        value = round(value, round_decimals)
    return Answer(atype, value, scale, raw_value=raw, expression=serialize_tree(tree))
