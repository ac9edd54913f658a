"""Acceptance gate: every criterion below runs at its stated tolerance and
prints one PASS/FAIL line (visible with `pytest -s tests/test_acceptance.py`)."""

import json
import random
import time
from contextlib import contextmanager
from pathlib import Path

import pytest

import helpers
from conftest import build_replay_env
from helpers import (
    FIXTURE_A_LABELS,
    fixture_a_graph,
    judge_completion,
    random_valid_graph,
    sft_completion,
)
from irackg.cli import main as cli_main
from irackg.corpus import ingest_cases
from irackg.extraction import extract_case_graph
from irackg.gateway import Gateway, LlmRequest, LlmResponse, ReplayBackend, record_fixture
from irackg.kg import parse_graph_json, serialize_graph
from irackg.pref import (
    JudgeParseFailure,
    candidate_rejected,
    gen_pref,
    parse_judge_output,
    render_judge_prompt,
)
from irackg.query import (
    all_rules,
    applicable_rules,
    get_related_facts,
    get_rules_via_address,
    get_rules_via_apply,
    issues,
)
from irackg.review import (
    EntityGrade,
    ItemKind,
    ItemRef,
    RecordGrade,
    RelationVerdictValue,
    ReviewLabel,
    ReviewStore,
)
from irackg.sft import MalformedSftXml, gen_sft, parse_sft_output


@contextmanager
def criterion(number: int, description: str):
    try:
        yield
    except BaseException:
        print(f"FAIL criterion {number}: {description}")
        raise
    print(f"PASS criterion {number}: {description}")


@pytest.fixture(scope="module")
def random_graphs():
    rng = random.Random(20260810)
    return [random_valid_graph(rng, case_id=f"g{i}") for i in range(1000)]


def ids(entities):
    return [e.id for e in entities]


def test_criterion_1_traversal_oracle_equivalence(random_graphs):
    with criterion(1, "traversal oracle equivalence on 1000 random graphs"):
        started = time.monotonic()
        for graph in random_graphs:
            for issue in helpers.oracle_issues(graph):
                assert ids(get_related_facts(graph, issue.id)) == ids(
                    helpers.oracle_related_facts(graph, issue.id)
                )
                assert ids(get_rules_via_address(graph, issue.id)) == ids(
                    helpers.oracle_rules_via_address(graph, issue.id)
                )
                assert ids(applicable_rules(graph, issue.id)) == ids(
                    helpers.oracle_applicable_rules(graph, issue.id)
                )
                assert ids(candidate_rejected(graph, issue.id)) == ids(
                    helpers.oracle_candidate_rejected(graph, issue.id)
                )
            for entity in graph.entities:
                if entity.kind.value == "MaterialFact":
                    assert ids(get_rules_via_apply(graph, entity.id)) == ids(
                        helpers.oracle_rules_via_apply(graph, entity.id)
                    )
        elapsed = time.monotonic() - started
        assert elapsed < 60.0, f"oracle equivalence took {elapsed:.1f}s"


def test_criterion_2_set_laws(random_graphs):
    with criterion(2, "chosen/rejected-candidate partition laws on every issue"):
        for graph in random_graphs:
            every = set(ids(all_rules(graph)))
            for issue in issues(graph):
                chosen = set(ids(applicable_rules(graph, issue.id)))
                candidates = set(ids(candidate_rejected(graph, issue.id)))
                assert chosen & candidates == set()
                assert chosen | candidates == every


def test_criterion_3_judge_gate(tmp_path):
    with criterion(3, "only 'No' candidates enter the rejected set"):
        from irackg.kg import Entity, EntityKind, IracGraph, Relation, RelationKind

        graph = IracGraph(
            case_id="gate",
            entities=(
                Entity("F1", EntityKind.MATERIAL_FACT, "the only fact"),
                Entity("I1", EntityKind.LEGAL_ISSUE, "the issue"),
                Entity("R1", EntityKind.RULE, "chosen rule"),
                Entity("RB", EntityKind.RULE, "candidate judged yes"),
                Entity("RC", EntityKind.RULE, "candidate judged no"),
                Entity("RD", EntityKind.RULE, "candidate judged potentially"),
                Entity("RE", EntityKind.RULE, "candidate with garbage verdict"),
            ),
            relations=(
                Relation("REL1", RelationKind.ARISES_FROM, "I1", "F1"),
                Relation("REL2", RelationKind.APPLIED_TO, "R1", "F1"),
            ),
        )
        facts = get_related_facts(graph, "I1")
        issue = graph.entity_by_id("I1")
        chosen = applicable_rules(graph, "I1")
        candidates = candidate_rejected(graph, "I1")
        assert ids(candidates) == ["RB", "RC", "RD", "RE"]

        # scripted verdicts: Yes / No / Potentially; RE's verdict is garbage
        # (absent from the parseable answer), so it degrades to Potentially
        completion = judge_completion(
            [
                ("candidate judged yes", "Yes", "on point"),
                ("candidate judged no", "No", "different subject matter"),
                ("candidate judged potentially", "Potentially", "could stretch"),
            ]
        )
        fx = tmp_path / "fx-mixed"
        record_fixture(
            LlmRequest(prompt=render_judge_prompt(facts, issue, chosen, candidates)),
            LlmResponse(text=completion),
            fx,
        )
        record = gen_pref(graph, "I1", Gateway(ReplayBackend(fx)))
        assert record is not None
        assert record.rejected_rules == ("candidate judged no",)
        assert set(record.chosen_rules) == {"chosen rule"}

        # whole-answer garbage after retries -> no record at all
        fx_garbage = tmp_path / "fx-garbage"
        for temperature in (0.0, 0.2):
            record_fixture(
                LlmRequest(
                    prompt=render_judge_prompt(facts, issue, chosen, candidates),
                    temperature=temperature,
                ),
                LlmResponse(text="not even close to JSON"),
                fx_garbage,
            )
        with pytest.raises(JudgeParseFailure):
            gen_pref(graph, "I1", Gateway(ReplayBackend(fx_garbage)))


def base_wire_doc() -> dict:
    """A valid doc exercising all 8 entity kinds and all 7 relation kinds."""
    return {
        "vertices_": [
            {"id_": "CASE", "type_": "Case", "label_": "the case"},
            {"id_": "P1", "type_": "CitedCase", "label_": "a precedent"},
            {"id_": "F1", "type_": "MaterialFact", "label_": "a fact"},
            {"id_": "I1", "type_": "LegalIssue", "label_": "an issue"},
            {"id_": "C1", "type_": "Conclusion", "label_": "a conclusion"},
            {"id_": "R1", "type_": "Rule", "label_": "a rule"},
            {"id_": "S1", "type_": "Statute", "label_": "a statute"},
            {"id_": "G1", "type_": "Regulation", "label_": "a regulation"},
        ],
        "relations_": [
            {"id_": "REL1", "type_": "CITES", "from_": "CASE", "to_": "P1"},
            {"id_": "REL2", "type_": "REFERENCES", "from_": "CASE", "to_": "S1"},
            {"id_": "REL3", "type_": "ARISES_FROM", "from_": "I1", "to_": "F1"},
            {"id_": "REL4", "type_": "ADDRESSES", "from_": "R1", "to_": "I1"},
            {"id_": "REL5", "type_": "APPLIED_TO", "from_": "R1", "to_": "F1"},
            {"id_": "REL6", "type_": "DERIVES_FROM", "from_": "R1", "to_": "P1"},
            {"id_": "REL7", "type_": "LEADS_TO", "from_": "R1", "to_": "C1"},
        ],
    }


ENDPOINT_MUTATIONS = {
    # one illegal endpoint per relation kind
    "CITES": ("REL1", "to_", "F1"),
    "REFERENCES": ("REL2", "to_", "P1"),
    "ARISES_FROM": ("REL3", "from_", "R1"),
    "ADDRESSES": ("REL4", "to_", "F1"),
    "APPLIED_TO": ("REL5", "to_", "I1"),
    "DERIVES_FROM": ("REL6", "to_", "C1"),
    "LEADS_TO": ("REL7", "to_", "F1"),
}


def test_criterion_4_schema_enforcement():
    with criterion(4, "every schema mutation flagged, clean docs stay clean"):
        clean = base_wire_doc()
        _, report = parse_graph_json(json.dumps(clean), "base")
        assert report.violations == ()

        mutants = []
        for kind, (rel_id, field, new_value) in ENDPOINT_MUTATIONS.items():
            doc = base_wire_doc()
            for rel in doc["relations_"]:
                if rel["id_"] == rel_id:
                    rel[field] = new_value
            mutants.append((f"endpoint rule {kind}", doc, "ENDPOINT_KIND"))

        dup_entity = base_wire_doc()
        dup_entity["vertices_"].append({"id_": "R1", "type_": "Rule", "label_": "a twin"})
        mutants.append(("duplicate entity id", dup_entity, "DUPLICATE_ID"))

        dup_rel = base_wire_doc()
        dup_rel["relations_"].append(
            {"id_": "REL7", "type_": "LEADS_TO", "from_": "R1", "to_": "C1"}
        )
        mutants.append(("duplicate relation id", dup_rel, "DUPLICATE_ID"))

        dangling = base_wire_doc()
        dangling["relations_"][2]["to_"] = "F9"
        mutants.append(("dangling endpoint", dangling, "DANGLING_ENDPOINT"))

        unknown_entity = base_wire_doc()
        unknown_entity["vertices_"][2]["type_"] = "Person"
        mutants.append(("unknown entity kind", unknown_entity, "UNKNOWN_KIND"))

        unknown_rel = base_wire_doc()
        unknown_rel["relations_"][0]["type_"] = "MENTIONS"
        mutants.append(("unknown relation kind", unknown_rel, "UNKNOWN_KIND"))

        flagged = 0
        for name, doc, expected_code in mutants:
            _, report = parse_graph_json(json.dumps(doc), "mutant")
            codes = {v.code.value for v in report.violations}
            assert expected_code in codes, f"mutant {name!r} produced {codes}"
            flagged += 1
        assert flagged == len(ENDPOINT_MUTATIONS) + 5


def test_criterion_5_format_fidelity(random_graphs):
    with criterion(5, "golden prompts, wire round-trip, malformed-input suites"):
        golden_dir = Path(__file__).parent / "golden"
        from irackg.corpus import CaseDocument
        from irackg.extraction import render_kg_prompt
        from irackg.sft import render_sft_prompt

        graph = fixture_a_graph()
        case = CaseDocument("fixture_a", "unknown", helpers.FIXTURE_A_OPINION, "mem")
        facts = get_related_facts(graph, "I1")
        issue = graph.entity_by_id("I1")
        chosen = applicable_rules(graph, "I1")
        candidates = candidate_rejected(graph, "I1")
        assert render_kg_prompt(case) == (golden_dir / "kg_prompt_fixture_a.txt").read_text(
            encoding="utf-8"
        )
        assert render_sft_prompt(facts, issue, chosen) == (
            golden_dir / "sft_prompt_fixture_a.txt"
        ).read_text(encoding="utf-8")
        assert render_judge_prompt(facts, issue, chosen, candidates) == (
            golden_dir / "judge_prompt_fixture_a.txt"
        ).read_text(encoding="utf-8")

        for g in random_graphs:
            parsed, report = parse_graph_json(serialize_graph(g), g.case_id)
            assert report.violations == ()
            assert parsed == g

        valid_sft = sft_completion(["f one"], "the issue", ["r one"])
        parse_sft_output(valid_sft)  # sanity: the suite's base document parses
        malformed_sft = [
            "no xml at all",
            valid_sft.replace("</explanation>", "</expl>").replace("<explanation>", "<expl>"),
            valid_sft.replace("<rule>r one</rule>", ""),
            valid_sft.replace("<fact>f one</fact>", ""),
            valid_sft.replace("<instruction>", "<instr>").replace("</instruction>", "</instr>"),
            valid_sft.replace("<legal_issue>the issue</legal_issue>", ""),
        ]
        for doc in malformed_sft:
            with pytest.raises(MalformedSftXml):
                parse_sft_output(doc)

        malformed_judge = [
            "plain text refusal",
            json.dumps({"NotRules": []}),
            json.dumps({"Rules": [{"Rule": "x", "Applicability": "Definitely"}]}),
            json.dumps({"Rules": [{"Rule": "unseen rule", "Applicability": "No"}]}),
            json.dumps({"Rules": "not a list"}),
            '{"Rules": [{"Rule": "x", "Applicability": ',
        ]
        for doc in malformed_judge:
            with pytest.raises(JudgeParseFailure):
                parse_judge_output(doc, ["x"])


def run_pipeline(env, workdir):
    gw = ["--gateway", "replay", "--fixtures", str(env.fixtures_dir)]
    assert cli_main(["extract", "--root", str(env.corpus_root), "--out", str(workdir / "kg"), *gw]) == 0
    assert cli_main(["gen-sft", "--kg-dir", str(workdir / "kg"), "--out", str(workdir / "sft"), *gw]) == 0
    assert cli_main(["gen-pref", "--kg-dir", str(workdir / "kg"), "--out", str(workdir / "dpo"), *gw]) == 0
    return {
        "sft.jsonl": (workdir / "sft" / "sft.jsonl").read_bytes(),
        "dpo.jsonl": (workdir / "dpo" / "dpo.jsonl").read_bytes(),
        "kg/run_manifest.json": (workdir / "kg" / "run_manifest.json").read_bytes(),
        "sft/run_manifest.json": (workdir / "sft" / "run_manifest.json").read_bytes(),
        "dpo/run_manifest.json": (workdir / "dpo" / "run_manifest.json").read_bytes(),
    }


def test_criterion_6_pipeline_determinism(tmp_path, capsys):
    with criterion(6, "two replay pipeline runs byte-identical incl. run manifests"):
        env = build_replay_env(tmp_path / "shared" / "corpus", tmp_path / "shared" / "fx")
        first = run_pipeline(env, tmp_path / "run1")
        second = run_pipeline(env, tmp_path / "run2")
        capsys.readouterr()
        assert first == second
        assert first["sft.jsonl"]  # non-empty outputs
        assert first["dpo.jsonl"]


def test_criterion_7_split_protocol():
    with criterion(7, "10:1 case-level split on 11 and 110 cases, disjoint over 200 seeds"):
        from irackg.datasets import SplitSpec, record_case_id, split_train_val

        def records_for(n_cases, per_case=2):
            return [
                {"meta": {"case_id": f"case{i:03d}", "issue_id": f"I{j}"}}
                for i in range(n_cases)
                for j in range(per_case)
            ]

        train, val = split_train_val(records_for(11), SplitSpec(10, 1, seed=7))
        assert len({record_case_id(r) for r in val}) == 1
        assert len({record_case_id(r) for r in train}) == 10

        train, val = split_train_val(records_for(110), SplitSpec(10, 1, seed=7))
        assert len({record_case_id(r) for r in val}) == 10
        assert len({record_case_id(r) for r in train}) == 100

        records = records_for(23, per_case=3)
        for seed in range(200):
            train, val = split_train_val(records, SplitSpec(10, 1, seed=seed))
            train_cases = {record_case_id(r) for r in train}
            val_cases = {record_case_id(r) for r in val}
            assert train_cases & val_cases == set()
            assert len(train) + len(val) == len(records)


def test_criterion_8_review_statistic_fixtures():
    with criterion(8, "record grades {11,4,0}, relation row 92%/8%, derived-Fail rule"):
        store = ReviewStore()
        records = [
            {"user": "u", "assistant": "a", "meta": {"case_id": "fixture_a", "record_id": f"r{i}"}}
            for i in range(15)
        ]
        batch = store.create_batch([fixture_a_graph()], n_cases=1, seed=7, records=records)
        grades = [RecordGrade.CORRECT] * 11 + [RecordGrade.CORRECT_MINOR] * 4
        for rec, grade in zip(records, grades):
            store.submit_label(
                batch.batch_id,
                ReviewLabel(
                    ref=ItemRef("fixture_a", ItemKind.SFT_RECORD, rec["meta"]["record_id"]),
                    value=grade,
                    reviewer="sme1",
                ),
            )
        assert store.aggregate_record_quality(batch.batch_id) == {
            "Correct": 11,
            "CorrectMinor": 4,
            "Wrong": 0,
        }

        # 11 Pass / 1 Fail renders 92% / 8%
        rng = random.Random(8)
        graph = None
        while graph is None or len(graph.relations) < 12:
            graph = random_valid_graph(rng, case_id="big")
        store2 = ReviewStore()
        batch2 = store2.create_batch([graph], n_cases=1, seed=1)
        rel_items = [i for i in batch2.items if i.ref.kind is ItemKind.RELATION][:12]
        for i, item in enumerate(rel_items):
            verdict = RelationVerdictValue.FAIL if i == 0 else RelationVerdictValue.PASS
            store2.submit_label(
                batch2.batch_id,
                ReviewLabel(ref=item.ref, value=verdict, reviewer="sme1"),
            )
        quality = store2.aggregate_quality(batch2.batch_id)
        assert quality["relations"] == {"pass_pct": 92, "fail_pct": 8, "graded": 12}

        # Poor endpoint forces Fail over a manual Pass
        store3 = ReviewStore()
        batch3 = store3.create_batch([fixture_a_graph()], n_cases=1, seed=7)
        store3.submit_label(
            batch3.batch_id,
            ReviewLabel(
                ref=ItemRef("fixture_a", ItemKind.RELATION, "REL3"),
                value=RelationVerdictValue.PASS,
                reviewer="sme1",
            ),
        )
        store3.submit_label(
            batch3.batch_id,
            ReviewLabel(
                ref=ItemRef("fixture_a", ItemKind.ENTITY, "R1"),
                value=EntityGrade.POOR,
                reviewer="sme1",
            ),
        )
        store3.derive_relation_verdicts(batch3.batch_id)
        quality3 = store3.aggregate_quality(batch3.batch_id)
        assert quality3["relations"]["fail_pct"] == 100
        assert quality3["relations"]["graded"] == 3  # all three relations touching R1


def test_criterion_9_end_to_end_fixture_a(tmp_path):
    with criterion(9, "extraction -> graph(8,6) -> SFT {R1,R2} -> pref rejected {R3}"):
        started = time.monotonic()
        env = build_replay_env(tmp_path / "corpus", tmp_path / "fx")
        corpus = ingest_cases(env.corpus_root)
        gateway = Gateway(ReplayBackend(env.fixtures_dir))

        outcome = extract_case_graph(corpus.get("fixture_a"), gateway)
        assert outcome.status == "ok"
        graph = outcome.graph
        assert len(graph.entities) == 8
        assert len(graph.relations) == 6
        assert {e.id for e in graph.entities} == {"F1", "F2", "I1", "R1", "R2", "R3", "C1", "P1"}

        record = gen_sft(graph, "I1", gateway)
        assert record is not None
        assert record.case_id == "fixture_a"
        assert record.issue_id == "I1"
        assert record.facts == (FIXTURE_A_LABELS["F1"], FIXTURE_A_LABELS["F2"])
        assert record.legal_issue == FIXTURE_A_LABELS["I1"]
        assert record.rules == (FIXTURE_A_LABELS["R1"], FIXTURE_A_LABELS["R2"])
        assert record.explanation
        assert record.instruction

        pref_record = gen_pref(graph, "I1", gateway)
        assert pref_record is not None
        assert pref_record.case_id == "fixture_a"
        assert pref_record.issue_id == "I1"
        assert pref_record.facts == record.facts
        assert pref_record.legal_issue == FIXTURE_A_LABELS["I1"]
        assert pref_record.chosen_rules == (FIXTURE_A_LABELS["R1"], FIXTURE_A_LABELS["R2"])
        assert pref_record.rejected_rules == (FIXTURE_A_LABELS["R3"],)
        assert pref_record.verdicts[0].applicability == "No"

        elapsed = time.monotonic() - started
        assert elapsed < 5.0, f"end-to-end run took {elapsed:.1f}s"
