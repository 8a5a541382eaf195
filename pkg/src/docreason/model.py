"""Full model: embedder, four graph encoders, five heads, tree decoder.

Forward flow per instance: token embeddings are mean-pooled into node
rows; the quantity/date/text graphs each run their own GCN and the
outputs (the three member sets partition the inventory) initialize the
semantic-dependency graph, whose GCN yields the final node
representations used by every head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, concat
from .errors import CheckpointMismatch
from .graphs import GraphKind
from .heads import (ANSWER_TYPES, AnswerType, HeadOutput, NodeSelection,
                    UpdatedTokens, classify_answer_type, classify_nodes,
                    classify_scale, inject_gold_nodes, mask_and_update_tokens,
                    predict_span, tag_tokens)
from .nn import (FFN2, GCN, FileEmbedder, ToyEmbedder, graph_summary,
                 init_node_representations)
from .tree import TreeDecoder, TreeNode, decode_tree
from .vocab import VOCAB_SIZE


@dataclass
class ModelConfig:
    dim: int = 32
    gcn_layers: int = 2
    gcn_dropout: float = 0.6
    tree_dropout: float = 0.5
    ffn_dropout: float = 0.1
    max_nodes: int = 12
    max_span_len: int = 64
    max_tree_depth: int = 4
    beam: int = 5
    constants_max: int = 100
    seed: int = 0


@dataclass
class ModelOutput:
    sd_reprs: Tensor
    h_sd: Tensor
    sel: NodeSelection
    type_out: HeadOutput
    scale_out: HeadOutput
    updated: UpdatedTokens | None = None
    start_lp: Tensor | None = None
    end_lp: Tensor | None = None
    span: tuple[int, int] | None = None
    token_lp: Tensor | None = None
    labels: list[str] | None = None
    tree: TreeNode | None = None
    tree_score: float | None = None


class Model:
    def __init__(self, config: ModelConfig, embedder=None):
        self.config = config
        rng = np.random.default_rng(config.seed)
        d = config.dim
        self.embedder = embedder or ToyEmbedder(rng, d, config.seed)
        self.gcns = {
            kind: GCN(rng, d, f"gcn.{kind.name.lower()}",
                      config.gcn_layers, config.gcn_dropout)
            for kind in GraphKind
        }
        fd = config.ffn_dropout
        self.node_ffn = FFN2(rng, d, 2, "head.node", drop=fd)
        self.type_ffn = FFN2(rng, d, 4, "head.type", drop=fd)
        self.scale_ffn = FFN2(rng, d, 5, "head.scale", drop=fd)
        self.start_ffn = FFN2(rng, 2 * d, 1, "head.start", drop=fd)
        self.end_ffn = FFN2(rng, 2 * d, 1, "head.end", drop=fd)
        self.token_ffn = FFN2(rng, 2 * d, 3, "head.token", drop=fd)
        self.decoder = TreeDecoder(rng, d, drop=config.tree_dropout)
        self.constants = list(range(1, config.constants_max + 1))

    def params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        out.update(self.embedder.params())
        for kind in GraphKind:
            out.update(self.gcns[kind].params())
        for ffn in (self.node_ffn, self.type_ffn, self.scale_ffn,
                    self.start_ffn, self.end_ffn, self.token_ffn):
            out.update(ffn.params())
        out.update(self.decoder.params())
        return out

    def load_params(self, arrays: dict[str, np.ndarray]):
        params = self.params()
        missing = sorted(set(params) - set(arrays))
        extra = sorted(set(arrays) - set(params))
        if missing or extra:
            raise CheckpointMismatch(f"parameter names differ: missing={missing} extra={extra}")
        for name, tensor in params.items():
            if arrays[name].shape != tensor.data.shape:
                raise CheckpointMismatch(
                    f"{name}: checkpoint shape {arrays[name].shape} vs model {tensor.data.shape}")
            tensor.data = arrays[name].astype(np.float64).copy()

    def checkpoint_meta(self) -> dict:
        return {"dim": self.config.dim, "vocab_size": VOCAB_SIZE,
                "gcn_layers": self.config.gcn_layers,
                "embedder": getattr(self.embedder, "name", "toy")}

    def encode(self, instance, rng=None, train=False) -> tuple[Tensor, Tensor, Tensor]:
        """Token embeddings through the graph stack; returns
        (token_embs, sd_reprs, h_sd)."""
        if isinstance(self.embedder, FileEmbedder):
            self.embedder.set_instance(instance.qid)
        token_embs = self.embedder.embed(instance.seq)
        init = init_node_representations(instance.nodes, token_embs, instance.seq)
        rows = [init.slice_rows(i, i + 1) for i in range(len(instance.nodes))]
        for kind in (GraphKind.QUANTITY, GraphKind.DATE, GraphKind.TEXT):
            graph = instance.graphs[kind]
            if graph.num_nodes == 0:
                continue
            member_rows = concat([rows[nid] for nid in graph.node_ids], axis=0)
            out = self.gcns[kind](graph, member_rows, rng, train)
            for pos, nid in enumerate(graph.node_ids):
                rows[nid] = out.slice_rows(pos, pos + 1)
        sd_init = concat(rows, axis=0)
        sd_reprs = self.gcns[GraphKind.SEMANTIC](instance.graphs[GraphKind.SEMANTIC],
                                                 sd_init, rng, train)
        return token_embs, sd_reprs, graph_summary(sd_reprs)

    def forward(self, instance, rng=None, train=False,
                gold_nodes: set[int] | None = None,
                heads: set[AnswerType] | None = None) -> ModelOutput:
        """Run selection + summary heads, then whichever task heads are
        requested (default: the head for the predicted answer type). During
        training pass gold_nodes so supervision targets stay selected."""
        token_embs, sd_reprs, h_sd = self.encode(instance, rng, train)
        sel = classify_nodes(sd_reprs, self.node_ffn, self.config.max_nodes, rng, train)
        if gold_nodes is not None:
            sel = inject_gold_nodes(sel, gold_nodes, self.config.max_nodes, train)
        type_out = classify_answer_type(h_sd, self.type_ffn, rng, train)
        scale_out = classify_scale(h_sd, self.scale_ffn, rng, train)
        out = ModelOutput(sd_reprs=sd_reprs, h_sd=h_sd, sel=sel,
                          type_out=type_out, scale_out=scale_out)
        if heads is None:
            heads = {ANSWER_TYPES[type_out.argmax]}
        if heads & {AnswerType.SPAN, AnswerType.SPANS, AnswerType.COUNTING}:
            out.updated = mask_and_update_tokens(token_embs, sel, instance.nodes,
                                                 sd_reprs, instance.seq)
        if AnswerType.SPAN in heads and out.updated.valid_mask.any():
            out.start_lp, out.end_lp, out.span = predict_span(
                out.updated, self.start_ffn, self.end_ffn,
                self.config.max_span_len, rng, train)
        if heads & {AnswerType.SPANS, AnswerType.COUNTING}:
            out.token_lp, out.labels = tag_tokens(out.updated, self.token_ffn, rng, train)
        if AnswerType.ARITHMETIC in heads and not train:
            out.tree, out.tree_score = decode_tree(
                h_sd, sd_reprs, sel, instance.nodes, self.decoder,
                self.config.beam, self.config.max_tree_depth, self.constants)
        return out
