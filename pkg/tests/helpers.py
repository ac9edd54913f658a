"""Shared test fixtures: the canonical six-relation graph, a random valid
graph generator, brute-force traversal oracles, and canned model completions
for the replay gateway.

The oracles deliberately re-enumerate graph.relations on every call instead
of using the library's indexes, so they stay an independent check."""

from __future__ import annotations

import json
import random

from irackg.kg import Entity, EntityKind, IracGraph, Relation, RelationKind, graph_to_wire_obj

# --- canonical fixture graph -------------------------------------------------

FIXTURE_A_LABELS = {
    "F1": "Plaintiff slipped on an unmarked wet floor in the defendant's grocery store",
    "F2": "No warning signs were posted near the spill",
    "I1": "Whether the store owner breached its duty of care to the injured customer",
    "R1": "A business owner owes invitees a duty to keep premises in a reasonably safe condition",
    "R2": "Notice of a hazardous condition may be actual or constructive",
    "R3": "Assumption of risk defense",
    "C1": "The store owner was negligent",
    "P1": "Smith v. Grocery Co.",
}


def fixture_a_graph(case_id: str = "fixture_a") -> IracGraph:
    L = FIXTURE_A_LABELS
    entities = (
        Entity("F1", EntityKind.MATERIAL_FACT, L["F1"]),
        Entity("F2", EntityKind.MATERIAL_FACT, L["F2"]),
        Entity("I1", EntityKind.LEGAL_ISSUE, L["I1"]),
        Entity("R1", EntityKind.RULE, L["R1"]),
        Entity("R2", EntityKind.RULE, L["R2"]),
        Entity("R3", EntityKind.RULE, L["R3"]),
        Entity("C1", EntityKind.CONCLUSION, L["C1"]),
        Entity("P1", EntityKind.CITED_CASE, L["P1"]),
    )
    relations = (
        Relation("REL1", RelationKind.ARISES_FROM, "I1", "F1"),
        Relation("REL2", RelationKind.ARISES_FROM, "I1", "F2"),
        Relation("REL3", RelationKind.APPLIED_TO, "R1", "F1"),
        Relation("REL4", RelationKind.ADDRESSES, "R2", "I1"),
        Relation("REL5", RelationKind.DERIVES_FROM, "R1", "P1"),
        Relation("REL6", RelationKind.LEADS_TO, "R1", "C1"),
    )
    return IracGraph(case_id=case_id, entities=entities, relations=relations)


def fixture_a_wire_text(case_id: str = "fixture_a") -> str:
    return json.dumps(graph_to_wire_obj(fixture_a_graph(case_id)), ensure_ascii=False)


FIXTURE_A_OPINION = (
    "Jane Doe v. Grocery Mart, Inc.\n\n"
    "The plaintiff slipped on a wet patch of floor near the produce aisle. "
    "No cones or signs marked the area. She sustained injuries and sued the "
    "store for negligence.\n\n"
    "The court considered whether the store owner breached its duty of care "
    "to customers, citing Smith v. Grocery Co. on the duty owed to invitees "
    "and discussing actual and constructive notice of hazards. The court "
    "found the store owner negligent.\n"
)

# --- random valid graphs ------------------------------------------------------

_KIND_PREFIX = {
    EntityKind.CASE: "CASE",
    EntityKind.CITED_CASE: "P",
    EntityKind.MATERIAL_FACT: "F",
    EntityKind.LEGAL_ISSUE: "I",
    EntityKind.CONCLUSION: "C",
    EntityKind.RULE: "R",
    EntityKind.STATUTE: "S",
    EntityKind.REGULATION: "G",
}

_ENDPOINTS = {
    RelationKind.CITES: ([EntityKind.CASE], [EntityKind.CITED_CASE]),
    RelationKind.REFERENCES: ([EntityKind.CASE], [EntityKind.STATUTE, EntityKind.REGULATION]),
    RelationKind.ARISES_FROM: ([EntityKind.LEGAL_ISSUE], [EntityKind.MATERIAL_FACT]),
    RelationKind.ADDRESSES: ([EntityKind.RULE], [EntityKind.LEGAL_ISSUE]),
    RelationKind.APPLIED_TO: ([EntityKind.RULE], [EntityKind.MATERIAL_FACT]),
    RelationKind.DERIVES_FROM: (
        [EntityKind.RULE],
        [EntityKind.CITED_CASE, EntityKind.STATUTE, EntityKind.REGULATION],
    ),
    RelationKind.LEADS_TO: ([EntityKind.RULE], [EntityKind.CONCLUSION]),
}


def random_valid_graph(rng: random.Random, case_id: str = "rand", max_entities: int = 50) -> IracGraph:
    """A strict-valid graph with up to max_entities entities and a random
    assortment of endpoint-legal relations."""
    entities: list[Entity] = [Entity("CASE1", EntityKind.CASE, f"case {case_id}")]
    for kind in (
        EntityKind.MATERIAL_FACT,
        EntityKind.LEGAL_ISSUE,
        EntityKind.RULE,
        EntityKind.CONCLUSION,
        EntityKind.CITED_CASE,
        EntityKind.STATUTE,
        EntityKind.REGULATION,
    ):
        budget = max_entities - len(entities)
        if budget <= 0:
            break
        for n in range(rng.randint(0, min(7, budget))):
            eid = f"{_KIND_PREFIX[kind]}{n + 1}"
            entities.append(Entity(eid, kind, f"{kind.value} {eid} of {case_id}"))
    by_kind: dict[EntityKind, list[Entity]] = {}
    for e in entities:
        by_kind.setdefault(e.kind, []).append(e)
    relations: list[Relation] = []
    seen_edges: set[tuple[RelationKind, str, str]] = set()
    counter = 0
    for kind, (src_kinds, dst_kinds) in _ENDPOINTS.items():
        sources = [e for k in src_kinds for e in by_kind.get(k, [])]
        targets = [e for k in dst_kinds for e in by_kind.get(k, [])]
        if not sources or not targets:
            continue
        for _ in range(rng.randint(0, 8)):
            src = rng.choice(sources)
            dst = rng.choice(targets)
            edge = (kind, src.id, dst.id)
            if edge in seen_edges:
                continue
            seen_edges.add(edge)
            counter += 1
            relations.append(Relation(f"REL{counter}", kind, src.id, dst.id))
    return IracGraph(case_id=case_id, entities=tuple(entities), relations=tuple(relations))


# --- brute-force oracles ------------------------------------------------------


def _by_id(graph: IracGraph) -> dict[str, Entity]:
    return {e.id: e for e in graph.entities}


def oracle_related_facts(graph: IracGraph, issue_id: str) -> list[Entity]:
    ents = _by_id(graph)
    hits = {
        r.dst
        for r in graph.relations
        if r.kind is RelationKind.ARISES_FROM and r.src == issue_id
    }
    return [ents[i] for i in sorted(hits)]


def oracle_rules_via_apply(graph: IracGraph, fact_id: str) -> list[Entity]:
    ents = _by_id(graph)
    hits = {
        r.src for r in graph.relations if r.kind is RelationKind.APPLIED_TO and r.dst == fact_id
    }
    return [ents[i] for i in sorted(hits)]


def oracle_rules_via_address(graph: IracGraph, issue_id: str) -> list[Entity]:
    ents = _by_id(graph)
    hits = {
        r.src for r in graph.relations if r.kind is RelationKind.ADDRESSES and r.dst == issue_id
    }
    return [ents[i] for i in sorted(hits)]


def oracle_applicable_rules(graph: IracGraph, issue_id: str) -> list[Entity]:
    ents = _by_id(graph)
    hits = {e.id for e in oracle_rules_via_address(graph, issue_id)}
    for fact in oracle_related_facts(graph, issue_id):
        hits |= {e.id for e in oracle_rules_via_apply(graph, fact.id)}
    return [ents[i] for i in sorted(hits)]


def oracle_all_rules(graph: IracGraph) -> list[Entity]:
    return sorted((e for e in graph.entities if e.kind is EntityKind.RULE), key=lambda e: e.id)


def oracle_candidate_rejected(graph: IracGraph, issue_id: str) -> list[Entity]:
    chosen = {e.id for e in oracle_applicable_rules(graph, issue_id)}
    return [e for e in oracle_all_rules(graph) if e.id not in chosen]


def oracle_issues(graph: IracGraph) -> list[Entity]:
    return sorted((e for e in graph.entities if e.kind is EntityKind.LEGAL_ISSUE), key=lambda e: e.id)


# --- canned completions -------------------------------------------------------


def sft_completion(
    facts: list[str],
    issue: str,
    rules: list[str],
    instruction: str = "Identify the legal issue that arises from the given case facts and the rules that apply to it.",
    explanation: str = (
        "The facts describe an injury caused by an unmarked hazard, which raises the "
        "stated issue; the listed rules govern the duty owed and the notice required, "
        "so they apply to these facts and this issue."
    ),
    output_format: str = (
        "Provide your response in pretty print XML. Use top tag legal_analysis, and the "
        "following sub-tags: legal_issue: [The legal issue here]; rules: [A list of rules]; "
        "explanation: [Brief explanation of the legal issue by relating it to the case facts, "
        "and also on why the rules are applicable to the given case facts and the legal issue]."
    ),
) -> str:
    facts_xml = "".join(f"<fact>{f}</fact>" for f in facts)
    rules_xml = "".join(f"<rule>{r}</rule>" for r in rules)
    return (
        "<sft_data><sft_input>"
        f"<instruction>{instruction}</instruction>"
        f"<case_facts>{facts_xml}</case_facts>"
        f"<output_format>{output_format}</output_format>"
        "</sft_input><sft_output>"
        f"<legal_issue>{issue}</legal_issue>"
        f"<rules>{rules_xml}</rules>"
        f"<explanation>{explanation}</explanation>"
        "</sft_output></sft_data>"
    )


def judge_completion(verdicts: list[tuple[str, str, str]]) -> str:
    return json.dumps(
        {
            "Rules": [
                {"Rule": rule, "Applicability": applicability, "Reasoning": reasoning}
                for rule, applicability, reasoning in verdicts
            ]
        },
        ensure_ascii=False,
    )
