"""Corpus loading, evidence resolution, and supervision derivation."""

import json
import logging

import numpy as np
import pytest

from docreason.elements import NodeKind
from docreason.errors import SchemaError, ValidationError
from docreason.graphs import GraphKind
from docreason.heads import AnswerType, Scale
from docreason.pipeline import (
    build_instance,
    build_supervision,
    load_corpus,
    load_records,
    resolve_ref,
)
from docreason.synthetic import generate_corpus, write_corpus
from docreason.tree import execute_tree, serialize_tree


def _record(answer=None):
    rec = {
        "doc_id": "q1",
        "question": "What was the change in revenue between 2018 and 2019?",
        "pages": [{"width": 800, "height": 1000}],
        "blocks": [
            {"block_id": 0, "page_index": 0, "order": 0,
             "text": "Revenue was 1,731 in 2019.", "box": [10, 10, 700, 40]},
            {"block_id": 1, "page_index": 0, "order": 1,
             "text": "Revenue was 1,401 in 2018.", "box": [10, 50, 700, 80]},
        ],
    }
    if answer is not None:
        rec["answer"] = answer
    return rec


class TestLoading:
    def test_json_array_and_jsonl_load_identically(self, tmp_path):
        records = [_record(), dict(_record(), doc_id="q2")]
        array_path = tmp_path / "a.json"
        jsonl_path = tmp_path / "b.jsonl"
        array_path.write_text(json.dumps(records))
        jsonl_path.write_text("\n".join(json.dumps(r) for r in records))
        assert load_records(str(array_path)) == load_records(str(jsonl_path))

    def test_blank_jsonl_lines_are_skipped(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps(_record()) + "\n\n\n")
        assert len(load_records(str(path))) == 1

    def test_instance_has_all_four_graphs(self):
        inst = build_instance(_record())
        assert set(inst.graphs) == set(GraphKind)
        assert inst.source_texts[None] == inst.question
        assert inst.source_texts[0].startswith("Revenue was 1,731")

    def test_missing_question_is_a_schema_error(self):
        rec = _record()
        del rec["question"]
        with pytest.raises(SchemaError):
            build_instance(rec)


class TestEvidenceRefs:
    def test_positional_resolution(self):
        inst = build_instance(_record())
        nodes = inst.nodes
        assert resolve_ref(nodes, {"kind": "question"}) == 0
        assert resolve_ref(nodes, {"kind": "block", "block_id": 1}) == \
            nodes.block_node(1).node_id
        q0 = resolve_ref(nodes, {"kind": "quantity", "block_id": 0, "index": 0})
        assert nodes.get(q0).value == 1731.0
        d1 = resolve_ref(nodes, {"kind": "date", "block_id": 1, "index": 0})
        assert nodes.get(d1).date_key == (2018, 0, 0)

    def test_question_elements_use_null_block(self):
        inst = build_instance(_record())
        d = resolve_ref(inst.nodes, {"kind": "date", "block_id": None, "index": 0})
        assert inst.nodes.get(d).block_id is None
        assert inst.nodes.get(d).date_key == (2018, 0, 0)

    def test_bad_refs_raise(self):
        inst = build_instance(_record())
        with pytest.raises(SchemaError):
            resolve_ref(inst.nodes, {"kind": "paragraph"})
        with pytest.raises(SchemaError):
            resolve_ref(inst.nodes, "quantity")
        with pytest.raises(ValidationError):
            resolve_ref(inst.nodes, {"kind": "block", "block_id": 9})
        with pytest.raises(ValidationError):
            resolve_ref(inst.nodes, {"kind": "quantity", "block_id": 0, "index": 5})


class TestArithmeticSupervision:
    def _answer(self):
        return {
            "type": "Arithmetic", "value": 330.0, "scale": "Million",
            "evidence_node_refs": [
                {"kind": "quantity", "block_id": 0, "index": 0},
                {"kind": "quantity", "block_id": 1, "index": 0},
            ],
            "expression": "(- e#0 e#1)",
        }

    def test_expression_leaves_substitute_evidence(self):
        inst = build_instance(_record(self._answer()))
        sup = inst.gold
        assert sup.answer_type is AnswerType.ARITHMETIC
        assert execute_tree(sup.gold_tree, inst.nodes) == 330.0
        assert serialize_tree(sup.gold_tree).startswith("(- n#")

    def test_gold_nodes_include_owning_blocks(self):
        inst = build_instance(_record(self._answer()))
        kinds = {inst.nodes.get(n).kind for n in inst.gold.gold_nodes}
        assert NodeKind.BLOCK in kinds and NodeKind.QUANTITY in kinds

    def test_execution_mismatch_warns(self, caplog):
        answer = dict(self._answer(), value=999.0)
        with caplog.at_level(logging.WARNING, logger="docreason.pipeline"):
            build_instance(_record(answer))
        assert any("executes to" in r.message for r in caplog.records)

    def test_unresolved_expression_leaf_raises(self):
        answer = dict(self._answer(), expression="(- e#0 e#7)")
        with pytest.raises(ValidationError):
            build_instance(_record(answer))

    def test_missing_expression_is_a_schema_error(self):
        answer = self._answer()
        del answer["expression"]
        with pytest.raises(SchemaError):
            build_instance(_record(answer))


class TestOtherSupervision:
    def test_span_maps_to_token_range(self):
        answer = {"type": "Span", "value": "1,731", "scale": "Thousand",
                  "evidence_node_refs": [{"kind": "block", "block_id": 0}]}
        inst = build_instance(_record(answer))
        s, e = inst.gold.span
        text = "".join(t.text for t in inst.seq.tokens[s:e + 1])
        assert text.replace("##", "") == "1,731"

    def test_span_not_in_evidence_raises(self):
        answer = {"type": "Span", "value": "no such text", "scale": "None",
                  "evidence_node_refs": [{"kind": "block", "block_id": 0}]}
        with pytest.raises(ValidationError):
            build_instance(_record(answer))

    def test_spans_needs_at_least_two_values(self):
        answer = {"type": "Spans", "value": ["1,731"], "scale": "None",
                  "evidence_node_refs": [{"kind": "block", "block_id": 0}]}
        with pytest.raises(SchemaError):
            build_instance(_record(answer))

    def test_spans_bio_marks_each_value(self):
        answer = {"type": "Spans", "value": ["1,731", "1,401"], "scale": "None",
                  "evidence_node_refs": [{"kind": "block", "block_id": 0},
                                         {"kind": "block", "block_id": 1}]}
        inst = build_instance(_record(answer))
        labels = inst.gold.bio_labels
        assert len(labels) == len(inst.seq)
        assert labels.count("B") == 2

    def test_counting_bio_comes_from_evidence_nodes(self):
        answer = {"type": "Counting", "value": 2, "scale": "None",
                  "evidence_node_refs": [
                      {"kind": "quantity", "block_id": 0, "index": 0},
                      {"kind": "quantity", "block_id": 1, "index": 0}]}
        inst = build_instance(_record(answer))
        assert inst.gold.bio_labels.count("B") == 2

    def test_counting_without_element_refs_raises(self):
        answer = {"type": "Counting", "value": 2, "scale": "None",
                  "evidence_node_refs": [{"kind": "block", "block_id": 0}]}
        with pytest.raises(ValidationError):
            build_instance(_record(answer))

    def test_unknown_type_and_scale_are_schema_errors(self):
        with pytest.raises(SchemaError):
            build_instance(_record({"type": "Ranking", "value": 1, "scale": "None"}))
        with pytest.raises(SchemaError):
            build_instance(_record({"type": "Span", "value": "1,731",
                                    "scale": "Trillion"}))


class TestGenerator:
    def test_every_generated_record_builds_with_gold(self):
        for record in generate_corpus(n=30, seed=7):
            inst = build_instance(record)
            assert inst.gold is not None
            assert inst.gold.gold_nodes

    def test_all_answer_types_appear(self):
        types = {r["answer"]["type"] for r in generate_corpus(n=20, seed=3)}
        assert types == {"Span", "Spans", "Counting", "Arithmetic"}

    def test_same_seed_same_bytes(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        write_corpus(str(a), n=10, seed=5)
        write_corpus(str(b), n=10, seed=5)
        assert a.read_bytes() == b.read_bytes()

    def test_bundled_corpus_loads_and_matches_generator(self):
        instances = load_corpus("data/synthetic-50.json")
        assert len(instances) == 50
        regenerated = generate_corpus(n=50, seed=2024)
        assert [i.qid for i in instances] == [r["doc_id"] for r in regenerated]

    def test_arithmetic_expressions_execute_to_gold(self):
        rng = np.random.default_rng(0)
        for record in generate_corpus(n=40, seed=int(rng.integers(1 << 30))):
            if record["answer"]["type"] != "Arithmetic":
                continue
            inst = build_instance(record)
            got = execute_tree(inst.gold.gold_tree, inst.nodes)
            want = record["answer"]["value"]
            assert abs(got - want) <= 1e-6 * max(1.0, abs(want))
