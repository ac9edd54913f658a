"""IRAC graph domain model: typed entities/relations, endpoint constraints,
wire-format parsing/serialization, and schema validation.

The wire format is one JSON object per case:

    {"vertices_": [{"id_": ..., "type_": ..., "label_": ...}, ...],
     "relations_": [{"id_": ..., "type_": ..., "from_": ..., "to_": ...}, ...]}

Each relation kind constrains the entity kinds at its endpoints (e.g.
ARISES_FROM must run from a LegalIssue to a MaterialFact). Validation has
two modes:

* "strict" rejects any violation (used for goldens and hand-built data);
* "lenient" drops offending relations, keeps all entities, and reports
  everything it found (used for raw extractor output, which is imperfect).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

from .errors import PipelineError


class EntityKind(str, Enum):
    CASE = "Case"
    CITED_CASE = "CitedCase"
    MATERIAL_FACT = "MaterialFact"
    LEGAL_ISSUE = "LegalIssue"
    CONCLUSION = "Conclusion"
    RULE = "Rule"
    STATUTE = "Statute"
    REGULATION = "Regulation"


class RelationKind(str, Enum):
    CITES = "CITES"
    REFERENCES = "REFERENCES"
    ARISES_FROM = "ARISES_FROM"
    ADDRESSES = "ADDRESSES"
    APPLIED_TO = "APPLIED_TO"
    DERIVES_FROM = "DERIVES_FROM"
    LEADS_TO = "LEADS_TO"


# Allowed (source kinds, target kinds) per relation kind. Total over all 7 kinds.
ENDPOINT_RULES: dict[RelationKind, tuple[frozenset[EntityKind], frozenset[EntityKind]]] = {
    RelationKind.CITES: (
        frozenset({EntityKind.CASE}),
        frozenset({EntityKind.CITED_CASE}),
    ),
    RelationKind.REFERENCES: (
        frozenset({EntityKind.CASE}),
        frozenset({EntityKind.STATUTE, EntityKind.REGULATION}),
    ),
    RelationKind.ARISES_FROM: (
        frozenset({EntityKind.LEGAL_ISSUE}),
        frozenset({EntityKind.MATERIAL_FACT}),
    ),
    RelationKind.ADDRESSES: (
        frozenset({EntityKind.RULE}),
        frozenset({EntityKind.LEGAL_ISSUE}),
    ),
    RelationKind.APPLIED_TO: (
        frozenset({EntityKind.RULE}),
        frozenset({EntityKind.MATERIAL_FACT}),
    ),
    RelationKind.DERIVES_FROM: (
        frozenset({EntityKind.RULE}),
        frozenset({EntityKind.CITED_CASE, EntityKind.STATUTE, EntityKind.REGULATION}),
    ),
    RelationKind.LEADS_TO: (
        frozenset({EntityKind.RULE}),
        frozenset({EntityKind.CONCLUSION}),
    ),
}


def relation_endpoint_rule(kind: RelationKind) -> tuple[frozenset[EntityKind], frozenset[EntityKind]]:
    """Return (allowed source kinds, allowed target kinds) for a relation kind."""
    return ENDPOINT_RULES[kind]


class ViolationCode(str, Enum):
    DUPLICATE_ID = "DUPLICATE_ID"
    DANGLING_ENDPOINT = "DANGLING_ENDPOINT"
    ENDPOINT_KIND = "ENDPOINT_KIND"
    UNKNOWN_KIND = "UNKNOWN_KIND"
    MISSING_FIELD = "MISSING_FIELD"
    EMPTY_LABEL = "EMPTY_LABEL"


@dataclass(frozen=True)
class Violation:
    code: ViolationCode
    subject_id: str
    message: str

    def to_json_obj(self) -> dict:
        return {"code": self.code.value, "subject_id": self.subject_id, "message": self.message}


@dataclass(frozen=True)
class Entity:
    id: str
    kind: EntityKind
    label: str


@dataclass(frozen=True)
class Relation:
    id: str
    kind: RelationKind
    src: str
    dst: str


@dataclass(frozen=True)
class IracGraph:
    """Immutable per-case typed graph. Entity identity is the id string;
    labels are display/prompt payload only."""

    case_id: str
    entities: tuple[Entity, ...]
    relations: tuple[Relation, ...]

    def entity_by_id(self, entity_id: str) -> Entity | None:
        for e in self.entities:
            if e.id == entity_id:
                return e
        return None

    def entities_of_kind(self, kind: EntityKind) -> tuple[Entity, ...]:
        return tuple(e for e in self.entities if e.kind is kind)


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()
    dropped_relations: tuple[str, ...] = ()

    @property
    def is_valid_strict(self) -> bool:
        return not self.violations

    def to_json_obj(self) -> dict:
        return {
            "violations": [v.to_json_obj() for v in self.violations],
            "dropped_relations": list(self.dropped_relations),
            "is_valid_strict": self.is_valid_strict,
        }


class UnparseableDocument(PipelineError):
    code = "unparseable_document"


class InvalidGraph(PipelineError):
    code = "invalid_graph"

    def __init__(self, message: str, report: ValidationReport | None = None):
        super().__init__(message)
        self.report = report


def _endpoint_ok(kind: RelationKind, src_kind: EntityKind, dst_kind: EntityKind) -> bool:
    allowed_src, allowed_dst = ENDPOINT_RULES[kind]
    return src_kind in allowed_src and dst_kind in allowed_dst


def parse_graph_obj(
    obj: object, case_id: str, mode: str = "lenient"
) -> tuple[IracGraph, ValidationReport]:
    """Build an IracGraph from an already-decoded wire object.

    Lenient mode keeps every well-formed entity (even with an empty label),
    drops relations that are malformed, dangling, duplicated, or breach an
    endpoint rule, and reports everything. Strict mode raises InvalidGraph
    on the first report with any violation.
    """
    if mode not in ("lenient", "strict"):
        raise ValueError(f"unknown mode {mode!r}")
    if not isinstance(obj, dict):
        raise UnparseableDocument("top-level JSON value is not an object")

    vertices = obj.get("vertices_", [])
    wire_relations = obj.get("relations_", [])
    if not isinstance(vertices, list) or not isinstance(wire_relations, list):
        raise UnparseableDocument("vertices_/relations_ must be JSON arrays")

    violations: list[Violation] = []
    dropped: list[str] = []

    entities: list[Entity] = []
    seen_entity_ids: dict[str, EntityKind] = {}
    for i, item in enumerate(vertices):
        subject = f"vertices_[{i}]"
        if not isinstance(item, dict):
            violations.append(Violation(ViolationCode.MISSING_FIELD, subject, "vertex is not an object"))
            continue
        ent_id = item.get("id_")
        kind_raw = item.get("type_")
        label = item.get("label_")
        if not isinstance(ent_id, str) or not ent_id:
            violations.append(Violation(ViolationCode.MISSING_FIELD, subject, "missing or empty id_"))
            continue
        if not isinstance(kind_raw, str) or kind_raw not in EntityKind._value2member_map_:
            violations.append(
                Violation(ViolationCode.UNKNOWN_KIND, ent_id, f"unknown entity kind {kind_raw!r}")
            )
            continue
        if not isinstance(label, str):
            violations.append(Violation(ViolationCode.MISSING_FIELD, ent_id, "missing label_"))
            continue
        if ent_id in seen_entity_ids:
            violations.append(
                Violation(ViolationCode.DUPLICATE_ID, ent_id, "duplicate entity id; first occurrence kept")
            )
            continue
        if not label.strip():
            violations.append(Violation(ViolationCode.EMPTY_LABEL, ent_id, "entity label is empty"))
        kind = EntityKind(kind_raw)
        seen_entity_ids[ent_id] = kind
        entities.append(Entity(id=ent_id, kind=kind, label=label))

    relations: list[Relation] = []
    seen_rel_ids: set[str] = set()
    for i, item in enumerate(wire_relations):
        subject = f"relations_[{i}]"
        if not isinstance(item, dict):
            violations.append(Violation(ViolationCode.MISSING_FIELD, subject, "relation is not an object"))
            dropped.append(subject)
            continue
        rel_id = item.get("id_")
        kind_raw = item.get("type_")
        src = item.get("from_")
        dst = item.get("to_")
        label_for_report = rel_id if isinstance(rel_id, str) and rel_id else subject
        if not isinstance(rel_id, str) or not rel_id:
            violations.append(Violation(ViolationCode.MISSING_FIELD, subject, "missing or empty id_"))
            dropped.append(label_for_report)
            continue
        if not isinstance(kind_raw, str) or kind_raw not in RelationKind._value2member_map_:
            violations.append(
                Violation(ViolationCode.UNKNOWN_KIND, rel_id, f"unknown relation kind {kind_raw!r}")
            )
            dropped.append(rel_id)
            continue
        if not isinstance(src, str) or not src or not isinstance(dst, str) or not dst:
            violations.append(Violation(ViolationCode.MISSING_FIELD, rel_id, "missing from_/to_"))
            dropped.append(rel_id)
            continue
        if rel_id in seen_rel_ids:
            violations.append(
                Violation(ViolationCode.DUPLICATE_ID, rel_id, "duplicate relation id; first occurrence kept")
            )
            dropped.append(rel_id)
            continue
        kind = RelationKind(kind_raw)
        if src not in seen_entity_ids or dst not in seen_entity_ids:
            missing = src if src not in seen_entity_ids else dst
            violations.append(
                Violation(ViolationCode.DANGLING_ENDPOINT, rel_id, f"endpoint {missing!r} not in graph")
            )
            dropped.append(rel_id)
            continue
        if not _endpoint_ok(kind, seen_entity_ids[src], seen_entity_ids[dst]):
            violations.append(
                Violation(
                    ViolationCode.ENDPOINT_KIND,
                    rel_id,
                    f"{kind.value} may not run {seen_entity_ids[src].value} -> {seen_entity_ids[dst].value}",
                )
            )
            dropped.append(rel_id)
            continue
        seen_rel_ids.add(rel_id)
        relations.append(Relation(id=rel_id, kind=kind, src=src, dst=dst))

    report = ValidationReport(violations=tuple(violations), dropped_relations=tuple(dropped))
    graph = IracGraph(case_id=case_id, entities=tuple(entities), relations=tuple(relations))
    if mode == "strict" and violations:
        raise InvalidGraph(
            f"graph for {case_id!r} has {len(violations)} violation(s) in strict mode", report
        )
    return graph, report


def parse_graph_json(
    text: str, case_id: str, mode: str = "lenient"
) -> tuple[IracGraph, ValidationReport]:
    """Parse wire-format JSON text into a graph. See parse_graph_obj for modes."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UnparseableDocument(f"not well-formed JSON: {exc}") from exc
    return parse_graph_obj(obj, case_id, mode=mode)


def validate_graph(graph: IracGraph) -> ValidationReport:
    """Re-check all invariants on an in-memory graph; returns findings, never raises."""
    violations: list[Violation] = []
    kinds: dict[str, EntityKind] = {}
    for e in graph.entities:
        if e.id in kinds:
            violations.append(Violation(ViolationCode.DUPLICATE_ID, e.id, "duplicate entity id"))
            continue
        kinds[e.id] = e.kind
        if not e.label.strip():
            violations.append(Violation(ViolationCode.EMPTY_LABEL, e.id, "entity label is empty"))
    seen_rel: set[str] = set()
    for r in graph.relations:
        if r.id in seen_rel:
            violations.append(Violation(ViolationCode.DUPLICATE_ID, r.id, "duplicate relation id"))
            continue
        seen_rel.add(r.id)
        if r.src not in kinds or r.dst not in kinds:
            missing = r.src if r.src not in kinds else r.dst
            violations.append(
                Violation(ViolationCode.DANGLING_ENDPOINT, r.id, f"endpoint {missing!r} not in graph")
            )
            continue
        if not _endpoint_ok(r.kind, kinds[r.src], kinds[r.dst]):
            violations.append(
                Violation(
                    ViolationCode.ENDPOINT_KIND,
                    r.id,
                    f"{r.kind.value} may not run {kinds[r.src].value} -> {kinds[r.dst].value}",
                )
            )
    return ValidationReport(violations=tuple(violations))


def graph_to_wire_obj(graph: IracGraph) -> dict:
    return {
        "vertices_": [{"id_": e.id, "type_": e.kind.value, "label_": e.label} for e in graph.entities],
        "relations_": [
            {"id_": r.id, "type_": r.kind.value, "from_": r.src, "to_": r.dst}
            for r in graph.relations
        ],
    }


def serialize_graph(graph: IracGraph) -> str:
    """Emit the canonical wire JSON (fixed key order, compact separators).

    Requires a strict-valid graph; entities and relations are written in
    stored order so parse(serialize(g)) == g.
    """
    report = validate_graph(graph)
    if not report.is_valid_strict:
        raise InvalidGraph(
            f"cannot serialize graph for {graph.case_id!r}: {len(report.violations)} violation(s)",
            report,
        )
    return json.dumps(graph_to_wire_obj(graph), ensure_ascii=False, separators=(",", ":"))
