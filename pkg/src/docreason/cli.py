"""Command-line entrypoint: validate, graphs, train, predict, eval.

Exit codes: 0 success, 2 invalid corpus record or config, 3 training
divergence, 4 checkpoint/corpus mismatch. All output files are written
atomically (temp file + rename).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from collections import Counter

from .config import RunConfig, load_config
from .elements import NodeKind
from .errors import (CheckpointMismatch, DivergenceDetected, DocReasonError,
                     SchemaError, ValidationError)
from .graphs import GraphKind
from .heads import AnswerType
from .metrics import EvalReport
from .model import Model
from .nn import FileEmbedder, load_checkpoint, save_checkpoint
from .pipeline import load_corpus
from .training import evaluate, predict_corpus, score_dump, train
from .vocab import VOCAB_SIZE

logger = logging.getLogger(__name__)

EXIT_INVALID = 2
EXIT_DIVERGED = 3
EXIT_MISMATCH = 4


def _write_atomic(path: str, text: str):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(text)
    os.replace(tmp, path)


def _build_model(config: RunConfig) -> Model:
    embedder = None
    if config.embedder == "external-file":
        if not config.embeddings_path:
            raise SchemaError("external-file embedder needs embeddings_path")
        embedder = FileEmbedder(config.embeddings_path, config.dim)
    return Model(config.model_config(), embedder=embedder)


def _load_into_model(config: RunConfig) -> Model:
    """Restore a model from a checkpoint, adopting its architecture
    (dim, gcn layers) so callers don't have to repeat training flags."""
    arrays, meta = load_checkpoint(config.checkpoint)
    for key in ("dim", "vocab_size", "gcn_layers", "embedder"):
        if key not in meta:
            raise CheckpointMismatch(f"checkpoint metadata missing {key!r}")
    if meta["vocab_size"] != VOCAB_SIZE:
        raise CheckpointMismatch(
            f"checkpoint built for vocab={meta['vocab_size']}, this build has {VOCAB_SIZE}")
    if meta["embedder"] != config.embedder:
        raise CheckpointMismatch(
            f"checkpoint trained with embedder={meta['embedder']!r}, "
            f"run configured {config.embedder!r}")
    config = dataclasses.replace(config, dim=meta["dim"], gcn_layers=meta["gcn_layers"])
    model = _build_model(config)
    model.load_params(arrays)
    return model


def cmd_validate(config: RunConfig) -> int:
    instances = load_corpus(config.corpus, config.max_len)
    type_counts = Counter(i.gold.answer_type.value for i in instances if i.gold)
    kind_counts = Counter()
    for inst in instances:
        for node in inst.nodes.nodes:
            kind_counts[node.kind.value] += 1
    print(f"records: {len(instances)}")
    for atype in AnswerType:
        print(f"  {atype.value}: {type_counts.get(atype.value, 0)}")
    print("nodes: " + ", ".join(f"{k}={kind_counts.get(k.value, 0)}" for k in NodeKind))
    return 0


def cmd_graphs(config: RunConfig) -> int:
    os.makedirs(config.out_dir, exist_ok=True)
    instances = load_corpus(config.corpus, config.max_len, with_gold=False)
    for inst in instances:
        for kind in GraphKind:
            payload = {"qid": inst.qid, **inst.graphs[kind].to_dict()}
            path = os.path.join(config.out_dir, f"{inst.qid}.{kind.name.lower()}.json")
            _write_atomic(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")
    print(f"wrote {4 * len(instances)} graph files to {config.out_dir}")
    return 0


def cmd_train(config: RunConfig) -> int:
    os.makedirs(config.out_dir, exist_ok=True)
    instances = load_corpus(config.corpus, config.max_len)
    dev = load_corpus(config.dev_corpus, config.max_len) if config.dev_corpus else None
    model = _build_model(config)
    result = train(model, instances, epochs=config.epochs, batch=config.batch,
                   grad_accum=config.grad_accum, lr=config.lr, warmup_frac=config.warmup,
                   seed=config.seed, dev=dev, eval_every=config.eval_every)
    params = model.params()
    for name, tensor in params.items():
        tensor.data = result.best_params[name]
    ckpt_path = config.checkpoint or os.path.join(config.out_dir, "checkpoint.json")
    save_checkpoint(ckpt_path, params, model.checkpoint_meta())
    _write_atomic(os.path.join(config.out_dir, "train_log.csv"), result.log.to_csv())
    print(f"trained {config.epochs} epochs, best dev EM {result.best_em:.4f}")
    print(f"checkpoint: {ckpt_path}")
    return 0


def cmd_predict(config: RunConfig) -> int:
    os.makedirs(config.out_dir, exist_ok=True)
    instances = load_corpus(config.corpus, config.max_len)
    model = _load_into_model(config)
    dump = predict_corpus(model, instances)
    out_path = os.path.join(config.out_dir, "predictions.jsonl")
    _write_atomic(out_path, "".join(json.dumps(row, sort_keys=True) + "\n" for row in dump))
    print(f"wrote {len(dump)} predictions to {out_path}")
    return 0


def _emit_report(config: RunConfig, report: EvalReport) -> int:
    os.makedirs(config.out_dir, exist_ok=True)
    _write_atomic(os.path.join(config.out_dir, "report.json"), report.to_json())
    _write_atomic(os.path.join(config.out_dir, "report.txt"), report.to_text())
    print(report.to_text(), end="")
    return 0


def cmd_eval(config: RunConfig) -> int:
    instances = load_corpus(config.corpus, config.max_len)
    if config.predictions:
        with open(config.predictions, encoding="utf-8") as f:
            dump = [json.loads(line) for line in f if line.strip()]
        report, _rows = score_dump(instances, dump)
    else:
        if not config.checkpoint:
            raise SchemaError("eval needs --checkpoint or --predictions")
        model = _load_into_model(config)
        report, _rows = evaluate(model, instances)
    return _emit_report(config, report)


_COMMANDS = {"validate": cmd_validate, "graphs": cmd_graphs, "train": cmd_train,
             "predict": cmd_predict, "eval": cmd_eval}

_FLAGS: list[tuple[str, type, str]] = [
    ("corpus", str, "corpus JSON/JSONL path"),
    ("dev_corpus", str, "held-out corpus for checkpoint selection"),
    ("checkpoint", str, "checkpoint path to write (train) or read (predict/eval)"),
    ("predictions", str, "existing prediction dump to score (eval)"),
    ("out_dir", str, "output directory"),
    ("seed", int, "RNG seed"),
    ("max_len", int, "token budget per instance"),
    ("max_nodes", int, "node selection cap"),
    ("beam", int, "tree decoder beam width"),
    ("max_span_len", int, "span decode length cap"),
    ("max_tree_depth", int, "operator nesting cap"),
    ("dim", int, "embedding width"),
    ("gcn_layers", int, "layers per graph encoder"),
    ("gcn_dropout", float, "graph encoder dropout"),
    ("tree_dropout", float, "tree decoder dropout"),
    ("ffn_dropout", float, "head dropout"),
    ("lr", float, "Adam learning rate"),
    ("warmup", float, "fraction of steps under linear warmup"),
    ("epochs", int, "training epochs"),
    ("batch", int, "instances per batch"),
    ("grad_accum", int, "batches per optimizer step"),
    ("eval_every", int, "epochs between dev evaluations"),
    ("embedder", str, "toy | external-file"),
    ("embeddings_path", str, "sidecar embeddings for external-file"),
]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="docreason",
        description="Discrete reasoning over table-text documents: "
                    "graph-based evidence selection plus expression-tree answers.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("-c", "--config", help="JSON config file")
        for flag, ftype, help_text in _FLAGS:
            p.add_argument(f"--{flag.replace('_', '-')}", dest=flag, type=ftype,
                           default=None, help=help_text)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    overrides = {flag: getattr(args, flag) for flag, _t, _h in _FLAGS}
    try:
        config = load_config(args.config, overrides)
        if not config.corpus:
            raise SchemaError(f"{args.command} needs --corpus")
        return _COMMANDS[args.command](config)
    except (SchemaError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except DivergenceDetected as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except CheckpointMismatch as exc:
        print(f"error: checkpoint mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except DocReasonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
