"""Multi-task loss, Adam with linear warmup, the training loop, and
corpus-level evaluation.

The per-instance loss is the sum of the always-on terms (node selection,
answer type, scale) and the terms licensed by the gold answer type: span
start/end for Span, token tagging for Spans/Counting, teacher-forced tree
steps for Arithmetic. Every term is a mean cross-entropy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .elements import NodeKind
from .errors import DivergenceDetected, DivisionByZero, InconsistentComponents, NoLeafCandidates, NoValidTokens
from .heads import ANSWER_TYPES, SCALES, AnswerType, Scale
from .metrics import build_report, classify_error, evidence_metrics, exact_match, numeracy_f1
from .model import Model, ModelOutput
from .pipeline import Instance, Supervision
from .tree import Answer, assemble_answer, selection_vocab, teacher_forced_log_probs


def nll_rows(log_probs: Tensor, labels: np.ndarray,
             row_mask: np.ndarray | None = None) -> Tensor:
    """Mean negative log-likelihood over rows (optionally a subset)."""
    rows = log_probs.data.shape[0]
    pick = np.zeros_like(log_probs.data)
    pick[np.arange(rows), labels] = 1.0
    if row_mask is not None:
        pick *= row_mask[:, None]
        denom = float(row_mask.sum())
    else:
        denom = float(rows)
    return -(log_probs * Tensor(pick)).sum() / denom


_BIO_INDEX = {"B": 0, "I": 1, "O": 2}


def compute_loss(model: Model, inst: Instance, out: ModelOutput,
                 sup: Supervision) -> tuple[Tensor, dict[str, float]]:
    terms: dict[str, Tensor] = {}
    node_labels = np.array([1 if n.node_id in sup.gold_nodes else 0
                            for n in inst.nodes.nodes])
    terms["node"] = nll_rows(out.sel.log_probs, node_labels)
    terms["type"] = nll_rows(out.type_out.log_probs,
                             np.array([ANSWER_TYPES.index(sup.answer_type)]))
    terms["scale"] = nll_rows(out.scale_out.log_probs,
                              np.array([SCALES.index(sup.answer.scale)]))
    if sup.answer_type == AnswerType.SPAN:
        s, e = sup.span
        terms["start"] = nll_rows(out.start_lp, np.array([s]))
        terms["end"] = nll_rows(out.end_lp, np.array([e]))
    elif sup.answer_type in (AnswerType.SPANS, AnswerType.COUNTING):
        labels = np.array([_BIO_INDEX[lab] for lab in sup.bio_labels])
        terms["token"] = nll_rows(out.token_lp, labels,
                                  out.updated.valid_mask.astype(np.float64))
    else:
        vocab = selection_vocab(out.sel, inst.nodes, model.constants)
        gold_tokens = vocab.tokens_for_tree(sup.gold_tree)
        steps = teacher_forced_log_probs(out.h_sd, out.sd_reprs, gold_tokens, vocab,
                                         model.decoder, model.config.max_tree_depth)
        step_losses = [nll_rows(lp, np.array([tok])) for lp, tok in zip(steps, gold_tokens)]
        total = step_losses[0]
        for piece in step_losses[1:]:
            total = total + piece
        terms["tree"] = total / float(len(step_losses))
    loss = None
    for t in terms.values():
        loss = t if loss is None else loss + t
    return loss, {k: float(v.data) for k, v in terms.items()}


class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float = 5e-4,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self, lr_scale: float = 1.0):
        self.t += 1
        lr = self.lr * lr_scale
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            self.m[name] = self.b1 * self.m[name] + (1 - self.b1) * g
            self.v[name] = self.b2 * self.v[name] + (1 - self.b2) * g * g
            m_hat = self.m[name] / (1 - self.b1 ** self.t)
            v_hat = self.v[name] / (1 - self.b2 ** self.t)
            p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def warmup_scale(step: int, total_steps: int, warmup_frac: float) -> float:
    """Linear ramp over the first warmup_frac of steps, then constant."""
    warmup_steps = max(1, int(math.ceil(total_steps * warmup_frac)))
    return min(1.0, step / warmup_steps)


@dataclass
class TrainLog:
    epochs: list[dict] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["epoch,loss,lr_scale,dev_em"]
        for row in self.epochs:
            dev = "" if row["dev_em"] is None else f"{row['dev_em']:.6f}"
            lines.append(f"{row['epoch']},{row['loss']:.6f},{row['lr_scale']:.6f},{dev}")
        return "\n".join(lines) + "\n"


@dataclass
class TrainResult:
    model: Model
    log: TrainLog
    best_em: float
    best_params: dict[str, np.ndarray]


def train(model: Model, instances: list[Instance], epochs: int = 50,
          batch: int = 8, grad_accum: int = 8, lr: float = 5e-4,
          warmup_frac: float = 0.06, seed: int = 0, dev: list[Instance] | None = None,
          eval_every: int = 5, target_em: float | None = None,
          target_type_acc: float | None = None) -> TrainResult:
    """Deterministic training loop. Gradients accumulate over batch *
    grad_accum instances per optimizer step; dev EM decides the best
    checkpoint (train set doubles as dev when none given)."""
    rng = np.random.default_rng(seed)
    params = model.params()
    opt = Adam(params, lr=lr)
    group = max(1, batch * grad_accum)
    steps_per_epoch = max(1, math.ceil(len(instances) / group))
    total_steps = max(1, epochs * steps_per_epoch)
    dev_set = dev if dev is not None else instances
    log = TrainLog()
    best_em = -1.0
    best_params = {k: p.data.copy() for k, p in params.items()}
    step = 0
    scale = 0.0
    for epoch in range(epochs):
        order = rng.permutation(len(instances))
        epoch_loss = 0.0
        opt.zero_grad()
        pending = 0
        for rank, idx in enumerate(order):
            inst = instances[int(idx)]
            sup = inst.gold
            out = model.forward(inst, rng=rng, train=True,
                                gold_nodes=sup.gold_nodes, heads={sup.answer_type})
            loss, _ = compute_loss(model, inst, out, sup)
            if not np.isfinite(loss.data):
                raise DivergenceDetected(f"non-finite loss on {inst.qid} (epoch {epoch})")
            epoch_loss += float(loss.data)
            (loss / float(min(group, len(instances)))).backward()
            pending += 1
            if pending == group or rank == len(order) - 1:
                step += 1
                scale = warmup_scale(step, total_steps, warmup_frac)
                opt.step(scale)
                opt.zero_grad()
                pending = 0
        record = {"epoch": epoch, "loss": epoch_loss / len(instances),
                  "lr_scale": scale, "dev_em": None}
        stop = False
        if (epoch + 1) % eval_every == 0 or epoch == epochs - 1:
            report, rows = evaluate(model, dev_set)
            record["dev_em"] = report.em
            if report.em > best_em:
                best_em = report.em
                best_params = {k: p.data.copy() for k, p in params.items()}
            type_acc = float(np.mean([r["type_correct"] for r in rows])) if rows else 0.0
            stop = (target_em is not None and report.em >= target_em
                    and (target_type_acc is None or type_acc >= target_type_acc))
        log.epochs.append(record)
        if stop:
            break
    if best_em < 0:
        best_em = 0.0
        best_params = {k: p.data.copy() for k, p in params.items()}
    return TrainResult(model=model, log=log, best_em=best_em, best_params=best_params)


def predict_instance(model: Model, inst: Instance) -> tuple[Answer | None, str | None, ModelOutput]:
    """Inference for one instance: answer, failure category (if any), and
    the raw head outputs."""
    out = model.forward(inst, train=False)
    atype = ANSWER_TYPES[out.type_out.argmax]
    scale = SCALES[out.scale_out.argmax]
    try:
        answer = assemble_answer(
            atype, scale, inst.seq, inst.source_texts,
            span=out.span, tags=out.labels, tree=out.tree, nodes=inst.nodes)
        return answer, None, out
    except DivisionByZero:
        return None, "execution_error", out
    except (InconsistentComponents, NoLeafCandidates, NoValidTokens):
        return None, "invalid_prediction", out


def score_prediction(inst: Instance, answer: Answer | None,
                     failure: str | None, selected: list[int]) -> dict:
    sup = inst.gold
    em = exact_match(answer, sup.answer) if answer is not None else 0
    f1 = numeracy_f1(answer, sup.answer) if answer is not None else 0.0
    row = {
        "qid": inst.qid,
        "type": sup.answer_type.value,
        "em": em,
        "f1": f1,
        "type_correct": int(answer is not None and answer.answer_type == sup.answer_type),
        "error": classify_error(answer, sup.answer, failure),
        "evidence": None,
    }
    element_kinds = (NodeKind.QUANTITY, NodeKind.DATE)
    gold_elems = {n for n in sup.gold_nodes if inst.nodes.get(n).kind in element_kinds}
    if sup.answer_type == AnswerType.ARITHMETIC and gold_elems:
        pred_elems = {n for n in selected if inst.nodes.get(n).kind in element_kinds}
        row["evidence"] = evidence_metrics(pred_elems, gold_elems)
    return row


def predict_corpus(model: Model, instances: list[Instance]) -> list[dict]:
    """Prediction dump rows: one JSON-ready object per instance."""
    dump = []
    for inst in instances:
        answer, failure, out = predict_instance(model, inst)
        row = {"qid": inst.qid, "selected_nodes": list(out.sel.selected)}
        if answer is None:
            row["failure"] = failure
            row["answer_type"] = ANSWER_TYPES[out.type_out.argmax].value
            row["value"] = None
            row["scale"] = SCALES[out.scale_out.argmax].value
        else:
            row["answer_type"] = answer.answer_type.value
            row["value"] = answer.raw_value if answer.raw_value is not None else answer.value
            row["scale"] = answer.scale.value
            if answer.expression is not None:
                row["expression"] = answer.expression
        dump.append(row)
    return dump


def evaluate(model: Model, instances: list[Instance]):
    rows = []
    for inst in instances:
        answer, failure, out = predict_instance(model, inst)
        rows.append(score_prediction(inst, answer, failure, out.sel.selected))
    return build_report(rows), rows


def score_dump(instances: list[Instance], dump: list[dict]):
    """Score an existing prediction dump against gold; row order follows the
    corpus and rows are matched by qid."""
    by_qid = {row["qid"]: row for row in dump}
    rows = []
    for inst in instances:
        row = by_qid.get(inst.qid)
        if row is None or row.get("value") is None:
            failure = (row or {}).get("failure", "invalid_prediction")
            rows.append(score_prediction(inst, None, failure, (row or {}).get("selected_nodes", [])))
            continue
        answer = Answer(AnswerType(row["answer_type"]),
                        row["value"],
                        Scale(row["scale"]),
                        raw_value=row["value"] if isinstance(row["value"], (int, float)) else None,
                        expression=row.get("expression"))
        rows.append(score_prediction(inst, answer, None, row.get("selected_nodes", [])))
    return build_report(rows), rows
