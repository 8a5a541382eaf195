"""Neural building blocks: linear/FFN layers, graph convolutions, the toy
token embedder, node pooling, and checkpoint IO.

Everything is float64 and runs on the tape autodiff in autodiff.py. Each
component exposes params() as an ordered name->Tensor dict so the optimizer
and checkpointing see one flat namespace.
"""

from __future__ import annotations

import hashlib
import json
import os
from functools import lru_cache

import numpy as np

from .autodiff import Tensor, concat, dropout
from .document import BoundingBox, TokenSequence
from .elements import NodeSet, node_token_indices
from .errors import EmptyGraph, EmptySpan, ShapeMismatch
from .graphs import SemanticGraph
from .vocab import VOCAB_SIZE, Vocab, default_vocab

COORD_SCALE = 1000.0


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Linear:
    def __init__(self, rng: np.random.Generator, fan_in: int, fan_out: int, name: str):
        self.w = Tensor(glorot(rng, fan_in, fan_out), requires_grad=True, name=f"{name}.w")
        self.b = Tensor(np.zeros(fan_out), requires_grad=True, name=f"{name}.b")

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b

    def params(self) -> dict[str, Tensor]:
        return {self.w.name: self.w, self.b.name: self.b}


class FFN2:
    """Two-layer feed-forward: Linear -> GELU -> dropout -> Linear."""

    def __init__(self, rng: np.random.Generator, fan_in: int, fan_out: int, name: str,
                 hidden: int | None = None, drop: float = 0.1):
        hidden = hidden or fan_in
        self.l1 = Linear(rng, fan_in, hidden, f"{name}.l1")
        self.l2 = Linear(rng, hidden, fan_out, f"{name}.l2")
        self.drop = drop

    def __call__(self, x: Tensor, rng: np.random.Generator | None = None,
                 train: bool = False) -> Tensor:
        h = self.l1(x).gelu()
        h = dropout(h, self.drop, rng, train)
        return self.l2(h)

    def params(self) -> dict[str, Tensor]:
        return {**self.l1.params(), **self.l2.params()}


def normalize_adjacency(adj: np.ndarray) -> np.ndarray:
    """Symmetrize (max with transpose), add self-loops, degree-normalize."""
    n = adj.shape[0]
    a = np.maximum(adj, adj.T) + np.eye(n)
    deg = a.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(deg)
    return inv_sqrt[:, None] * a * inv_sqrt[None, :]


class GCN:
    """Stack of graph-convolution layers with a private parameter set."""

    def __init__(self, rng: np.random.Generator, dim: int, name: str,
                 layers: int = 2, drop: float = 0.6):
        self.layers = [Linear(rng, dim, dim, f"{name}.layer{i}") for i in range(layers)]
        self.drop = drop
        self.dim = dim

    def __call__(self, graph: SemanticGraph, h: Tensor,
                 rng: np.random.Generator | None = None, train: bool = False) -> Tensor:
        if h.data.shape[0] != graph.num_nodes:
            raise ShapeMismatch(
                f"{graph.kind.value}: {h.data.shape[0]} reprs vs {graph.num_nodes} nodes")
        if graph.num_nodes == 0:
            return h
        norm = Tensor(normalize_adjacency(graph.adjacency))
        for i, layer in enumerate(self.layers):
            h = layer(norm @ h)
            if i < len(self.layers) - 1:
                h = h.relu()
            h = dropout(h, self.drop, rng, train)
        return h

    def params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for layer in self.layers:
            out.update(layer.params())
        return out


@lru_cache(maxsize=65536)
def _hash_vector(text: str, dim: int, seed: int) -> np.ndarray:
    digest = hashlib.blake2b(f"{seed}:{text}".encode(), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "big"))
    vec = rng.uniform(-0.05, 0.05, size=dim)
    vec.setflags(write=False)
    return vec


def _position_encoding(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    idx = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (idx // 2)) / dim)
    enc = np.where(idx % 2 == 0, np.sin(angle), np.cos(angle))
    return 0.05 * enc


class ToyEmbedder:
    """Deterministic stand-in for a pretrained layout encoder.

    Each token row = content hash + learned vocab-slot vector + sinusoidal
    position encoding + quantized box encoding. Only the slot table trains.
    """

    name = "toy"

    def __init__(self, rng: np.random.Generator, dim: int, seed: int,
                 vocab: Vocab | None = None):
        self.dim = dim
        self.seed = seed
        self.vocab = vocab or default_vocab()
        self.table = Tensor(rng.uniform(-0.05, 0.05, size=(VOCAB_SIZE, dim)),
                            requires_grad=True, name="embedder.table")
        box_rng = np.random.default_rng(seed + 1)
        self._box_proj = box_rng.uniform(-0.05, 0.05, size=(4, dim))

    def _slot(self, text: str) -> int:
        tid = self.vocab.id_of(text)
        if tid is not None:
            return tid
        digest = hashlib.blake2b(text.encode(), digest_size=8).digest()
        return int.from_bytes(digest, "big") % VOCAB_SIZE

    def _box_features(self, box: BoundingBox | None) -> np.ndarray:
        if box is None:
            return np.zeros(4)
        return np.array(box.as_list()) / COORD_SCALE

    def embed(self, seq: TokenSequence) -> Tensor:
        n = len(seq)
        if n == 0:
            return Tensor(np.zeros((0, self.dim)))
        base = np.empty((n, self.dim))
        slots = np.empty(n, dtype=np.int64)
        for i, tok in enumerate(seq.tokens):
            base[i] = _hash_vector(tok.text, self.dim, self.seed)
            base[i] += self._box_features(tok.box) @ self._box_proj
            slots[i] = self._slot(tok.text)
        base += _position_encoding(n, self.dim)
        return self.table.take_rows(slots) + Tensor(base)

    def params(self) -> dict[str, Tensor]:
        return {self.table.name: self.table}


class FileEmbedder:
    """Reads precomputed per-token embeddings from a sidecar JSON file
    keyed by qid, so a real pretrained encoder can slot in later."""

    name = "external-file"

    def __init__(self, path: str, dim: int):
        with open(path) as f:
            self._rows = json.load(f)
        self.dim = dim
        self._qid: str | None = None

    def set_instance(self, qid: str):
        self._qid = qid

    def embed(self, seq: TokenSequence) -> Tensor:
        rows = self._rows.get(self._qid)
        if rows is None:
            raise KeyError(f"no embeddings for qid {self._qid!r}")
        arr = np.asarray(rows, dtype=np.float64)
        if arr.shape != (len(seq), self.dim):
            raise ShapeMismatch(f"qid {self._qid!r}: embeddings {arr.shape} "
                                f"vs sequence ({len(seq)}, {self.dim})")
        return Tensor(arr)

    def params(self) -> dict[str, Tensor]:
        return {}


def init_node_representations(nodes: NodeSet, token_embs: Tensor,
                              seq: TokenSequence) -> Tensor:
    """Mean-pool each node's token rows into an (N, dim) matrix."""
    rows = []
    for node in nodes.nodes:
        idx = node_token_indices(node, seq)
        if not idx:
            raise EmptySpan(f"node {node.node_id} ({node.kind.value}) covers no tokens")
        rows.append(token_embs.take_rows(np.asarray(idx)).mean(axis=0, keepdims=True))
    return concat(rows, axis=0)


def graph_summary(node_reprs: Tensor) -> Tensor:
    """Mean over node rows: the whole-graph vector."""
    if node_reprs.data.shape[0] == 0:
        raise EmptyGraph("cannot summarize an empty graph")
    return node_reprs.mean(axis=0)


CHECKPOINT_VERSION = 1


def checkpoint_bytes(params: dict[str, Tensor], meta: dict) -> bytes:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "meta": meta,
        "params": {
            name: {"shape": list(t.data.shape), "data": t.data.ravel().tolist()}
            for name, t in params.items()
        },
    }
    return json.dumps(payload, sort_keys=True).encode()


def save_checkpoint(path: str, params: dict[str, Tensor], meta: dict):
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(checkpoint_bytes(params, meta))
    os.replace(tmp, path)


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as f:
        payload = json.loads(f.read())
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('format_version')}")
    arrays = {
        name: np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in payload["params"].items()
    }
    return arrays, payload["meta"]
