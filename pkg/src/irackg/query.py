"""Traversal primitives shared by the SFT and preference generators.

The two generation algorithms both walk the same three edges of a case
graph: facts an issue arises from, rules applied to those facts, and rules
addressing the issue directly. The union of the two rule paths is the
chosen/applicable set; everything else in the graph's rule inventory is the
rejected-candidate pool.

Results are ordered ascending by entity id so downstream prompt rendering
is byte-stable; the set semantics of the algorithms are unaffected.
"""

from __future__ import annotations

from functools import lru_cache

from .errors import PipelineError
from .kg import Entity, EntityKind, IracGraph, RelationKind


class NotAnIssue(PipelineError):
    code = "not_an_issue"


class NotAFact(PipelineError):
    code = "not_a_fact"


FactSet = tuple[Entity, ...]
RuleSet = tuple[Entity, ...]


class _GraphIndex:
    def __init__(self, graph: IracGraph):
        self.entities = {e.id: e for e in graph.entities}
        self.facts_of_issue: dict[str, set[str]] = {}
        self.rules_applied_to_fact: dict[str, set[str]] = {}
        self.rules_addressing_issue: dict[str, set[str]] = {}
        for r in graph.relations:
            if r.kind is RelationKind.ARISES_FROM:
                self.facts_of_issue.setdefault(r.src, set()).add(r.dst)
            elif r.kind is RelationKind.APPLIED_TO:
                self.rules_applied_to_fact.setdefault(r.dst, set()).add(r.src)
            elif r.kind is RelationKind.ADDRESSES:
                self.rules_addressing_issue.setdefault(r.dst, set()).add(r.src)


@lru_cache(maxsize=256)
def _index(graph: IracGraph) -> _GraphIndex:
    return _GraphIndex(graph)


def _sorted_entities(index: _GraphIndex, ids: set[str]) -> tuple[Entity, ...]:
    return tuple(index.entities[i] for i in sorted(ids))


def _require_kind(graph: IracGraph, entity_id: str, kind: EntityKind, err) -> Entity:
    entity = _index(graph).entities.get(entity_id)
    if entity is None or entity.kind is not kind:
        found = "nothing" if entity is None else entity.kind.value
        raise err(f"{entity_id!r} does not resolve to a {kind.value} (found {found})")
    return entity


def get_related_facts(graph: IracGraph, issue_id: str) -> FactSet:
    """All material facts f with an ARISES_FROM edge issue -> f."""
    _require_kind(graph, issue_id, EntityKind.LEGAL_ISSUE, NotAnIssue)
    idx = _index(graph)
    return _sorted_entities(idx, idx.facts_of_issue.get(issue_id, set()))


def get_rules_via_apply(graph: IracGraph, fact_id: str) -> RuleSet:
    """All rules r with an APPLIED_TO edge r -> fact."""
    _require_kind(graph, fact_id, EntityKind.MATERIAL_FACT, NotAFact)
    idx = _index(graph)
    return _sorted_entities(idx, idx.rules_applied_to_fact.get(fact_id, set()))


def get_rules_via_address(graph: IracGraph, issue_id: str) -> RuleSet:
    """All rules r with an ADDRESSES edge r -> issue; these may not touch any fact."""
    _require_kind(graph, issue_id, EntityKind.LEGAL_ISSUE, NotAnIssue)
    idx = _index(graph)
    return _sorted_entities(idx, idx.rules_addressing_issue.get(issue_id, set()))


def applicable_rules(graph: IracGraph, issue_id: str) -> RuleSet:
    """Union of both rule paths for an issue, deduplicated by id:
    rules applied to any related fact, plus rules addressing the issue."""
    _require_kind(graph, issue_id, EntityKind.LEGAL_ISSUE, NotAnIssue)
    idx = _index(graph)
    rule_ids: set[str] = set(idx.rules_addressing_issue.get(issue_id, set()))
    for fact_id in idx.facts_of_issue.get(issue_id, set()):
        rule_ids |= idx.rules_applied_to_fact.get(fact_id, set())
    return _sorted_entities(idx, rule_ids)


def all_rules(graph: IracGraph) -> RuleSet:
    """Every Rule entity in the graph, ascending by id."""
    return tuple(sorted(graph.entities_of_kind(EntityKind.RULE), key=lambda e: e.id))


def issues(graph: IracGraph) -> tuple[Entity, ...]:
    """Every LegalIssue entity, ascending by id (the generators' iteration order)."""
    return tuple(sorted(graph.entities_of_kind(EntityKind.LEGAL_ISSUE), key=lambda e: e.id))
