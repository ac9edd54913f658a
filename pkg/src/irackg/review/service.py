"""Review batch construction, label storage, derived relation verdicts, and
quality aggregation.

Grading scheme: entities get Good/Acceptable/Poor; relations get Pass/Fail;
generated records get Correct/CorrectMinor/Wrong. A relation whose endpoint
entity is graded Poor is forced to Fail (derived verdict), overriding any
manual Pass. Reviewers can also flag entities the extraction missed.

Reported percentages: Good/Acceptable/Poor are shares of graded entities of
that kind; Missing is shares of (graded + missing-flagged). Denominators are
always reported alongside, and every percentage is rounded half-up to an
integer.
"""

from __future__ import annotations

import threading
from collections import Counter
from pathlib import Path

from ..errors import PipelineError
from ..kg import EntityKind, IracGraph
from ..util import atomic_write_json, round_half_up, stable_rank
from .models import (
    DERIVED_REVIEWER,
    EntityGrade,
    ItemKind,
    ItemRef,
    RecordGrade,
    RelationVerdictValue,
    ReviewBatch,
    ReviewItem,
    ReviewLabel,
)

GRADE_SEVERITY = {EntityGrade.GOOD: 0, EntityGrade.ACCEPTABLE: 1, EntityGrade.POOR: 2}


class InsufficientCases(PipelineError):
    code = "insufficient_cases"


class UnknownItem(PipelineError):
    code = "unknown_item"


class ClosedBatch(PipelineError):
    code = "closed_batch"


class UnknownBatch(PipelineError):
    code = "unknown_batch"


def build_items_for_graph(graph: IracGraph, kinds: tuple[str, ...]) -> list[ReviewItem]:
    items: list[ReviewItem] = []
    labels = {e.id: e.label for e in graph.entities}
    ent_kinds = {e.id: e.kind.value for e in graph.entities}
    if "entity" in kinds:
        for e in graph.entities:
            items.append(
                ReviewItem(
                    ref=ItemRef(graph.case_id, ItemKind.ENTITY, e.id),
                    payload={"entity_kind": e.kind.value, "label": e.label},
                )
            )
    if "relation" in kinds:
        for r in graph.relations:
            items.append(
                ReviewItem(
                    ref=ItemRef(graph.case_id, ItemKind.RELATION, r.id),
                    payload={
                        "relation_kind": r.kind.value,
                        "from": r.src,
                        "to": r.dst,
                        "from_kind": ent_kinds.get(r.src, ""),
                        "to_kind": ent_kinds.get(r.dst, ""),
                        "from_label": labels.get(r.src, ""),
                        "to_label": labels.get(r.dst, ""),
                    },
                )
            )
    return items


def create_review_batch(
    graphs: list[IracGraph],
    n_cases: int,
    seed: int,
    kinds: tuple[str, ...] = ("entity", "relation"),
    records: list[dict] | None = None,
    batch_id: str = "",
) -> ReviewBatch:
    """Deterministically sample n_cases graphs (seeded SHA-256 ranking of
    case ids) and expand every entity and relation of each sampled case into
    review items. Optional generated records become sft_record items."""
    if n_cases > len(graphs):
        raise InsufficientCases(f"asked for {n_cases} cases but only {len(graphs)} graphs available")
    by_case = {g.case_id: g for g in graphs}
    ranked = sorted(by_case, key=lambda cid: (stable_rank(seed, cid), cid))
    chosen = sorted(ranked[:n_cases])
    items: list[ReviewItem] = []
    for cid in chosen:
        items.extend(build_items_for_graph(by_case[cid], kinds))
    for rec in records or []:
        meta = rec.get("meta", {})
        rid = str(meta.get("record_id", ""))
        if not rid:
            continue
        items.append(
            ReviewItem(
                ref=ItemRef(str(meta.get("case_id", "")), ItemKind.SFT_RECORD, rid),
                payload={"user": rec.get("user", ""), "assistant": rec.get("assistant", "")},
            )
        )
    return ReviewBatch(batch_id=batch_id, seed=seed, case_ids=chosen, items=items)


class ReviewStore:
    """Label store with append-only audit trail and optional JSON persistence.

    One effective label per (item, reviewer); resubmission overwrites the
    effective label and extends the audit trail. Mutations are serialized
    with a lock; reads take snapshots.
    """

    def __init__(self, root: Path | str | None = None):
        self.root = Path(root) if root is not None else None
        self._lock = threading.Lock()
        self._batches: dict[str, ReviewBatch] = {}
        self._labels: dict[str, dict[tuple[str, str], ReviewLabel]] = {}
        self._audit: dict[str, list[ReviewLabel]] = {}
        self._counter = 0
        if self.root is not None:
            self._load()

    # -- persistence -------------------------------------------------------

    def _batch_path(self, batch_id: str) -> Path:
        assert self.root is not None
        return self.root / f"{batch_id}.json"

    def _persist(self, batch_id: str) -> None:
        if self.root is None:
            return
        batch = self._batches[batch_id]
        payload = {
            "batch": batch.to_json_obj(),
            "labels": [label.to_json_obj() for label in self._labels[batch_id].values()],
            "audit": [label.to_json_obj() for label in self._audit[batch_id]],
        }
        atomic_write_json(self._batch_path(batch_id), payload)

    def _load(self) -> None:
        import json

        assert self.root is not None
        if not self.root.is_dir():
            self.root.mkdir(parents=True, exist_ok=True)
            return
        for path in sorted(self.root.glob("*.json")):
            payload = json.loads(path.read_text(encoding="utf-8"))
            b = payload["batch"]
            batch = ReviewBatch(
                batch_id=b["batch_id"],
                seed=b["seed"],
                case_ids=list(b["case_ids"]),
                items=[
                    ReviewItem(
                        ref=ItemRef(i["case_id"], ItemKind(i["kind"]), i["target_id"]),
                        payload=i["payload"],
                    )
                    for i in b["items"]
                ],
                open=b["open"],
            )
            self._batches[batch.batch_id] = batch
            self._labels[batch.batch_id] = {}
            self._audit[batch.batch_id] = []
            for raw in payload.get("audit", []):
                label = _label_from_json(raw)
                self._audit[batch.batch_id].append(label)
            for raw in payload.get("labels", []):
                label = _label_from_json(raw)
                self._labels[batch.batch_id][(label.ref.key(), label.reviewer)] = label
            self._counter = max(self._counter, _batch_number(batch.batch_id))

    # -- batches -----------------------------------------------------------

    def create_batch(
        self,
        graphs: list[IracGraph],
        n_cases: int,
        seed: int,
        kinds: tuple[str, ...] = ("entity", "relation"),
        records: list[dict] | None = None,
    ) -> ReviewBatch:
        with self._lock:
            self._counter += 1
            batch_id = f"b{self._counter:04d}"
            batch = create_review_batch(graphs, n_cases, seed, kinds, records, batch_id=batch_id)
            self._batches[batch_id] = batch
            self._labels[batch_id] = {}
            self._audit[batch_id] = []
            self._persist(batch_id)
            return batch

    def get_batch(self, batch_id: str) -> ReviewBatch:
        batch = self._batches.get(batch_id)
        if batch is None:
            raise UnknownBatch(f"no batch {batch_id!r}")
        return batch

    def list_batches(self) -> list[ReviewBatch]:
        return [self._batches[k] for k in sorted(self._batches)]

    def close_batch(self, batch_id: str) -> None:
        with self._lock:
            self.get_batch(batch_id).open = False
            self._persist(batch_id)

    # -- labels ------------------------------------------------------------

    def submit_label(self, batch_id: str, label: ReviewLabel) -> ReviewLabel:
        """Store a label for an existing item in an open batch.

        Missing-entity flags are accepted for any case in the batch (they
        reference spans the extraction did not produce, so no item exists);
        everything else must reference a known item.
        """
        with self._lock:
            batch = self.get_batch(batch_id)
            if not batch.open:
                raise ClosedBatch(f"batch {batch_id} is closed")
            if label.ref.kind is ItemKind.MISSING_FLAG:
                if label.ref.case_id not in batch.case_ids:
                    raise UnknownItem(f"case {label.ref.case_id!r} not in batch {batch_id}")
                value = label.value
                if not isinstance(value, dict) or not str(value.get("span", "")).strip():
                    raise ValueError("missing-entity flag needs a non-empty span")
            elif label.ref.key() not in batch.item_keys():
                raise UnknownItem(f"no item {label.ref.key()!r} in batch {batch_id}")
            self._audit[batch_id].append(label)
            self._labels[batch_id][(label.ref.key(), label.reviewer)] = label
            self._persist(batch_id)
            return label

    def labels_for(self, batch_id: str) -> list[ReviewLabel]:
        self.get_batch(batch_id)
        return list(self._labels[batch_id].values())

    def audit_for(self, batch_id: str) -> list[ReviewLabel]:
        self.get_batch(batch_id)
        return list(self._audit[batch_id])

    # -- grade resolution ----------------------------------------------------

    def _effective_entity_grades(self, batch_id: str) -> dict[tuple[str, str], EntityGrade]:
        """Resolve one grade per entity item: single reviewer wins outright;
        multiple reviewers majority-vote with ties going to the worse grade."""
        votes: dict[tuple[str, str], list[EntityGrade]] = {}
        for (item_key, _reviewer), label in self._labels[batch_id].items():
            if label.ref.kind is not ItemKind.ENTITY:
                continue
            grade = EntityGrade(str(label.value_str()))
            votes.setdefault((label.ref.case_id, label.ref.target_id), []).append(grade)
        resolved: dict[tuple[str, str], EntityGrade] = {}
        for key, grades in votes.items():
            counts = Counter(grades)
            top = max(counts.values())
            tied = [g for g, c in counts.items() if c == top]
            resolved[key] = max(tied, key=lambda g: GRADE_SEVERITY[g])
        return resolved

    # -- derived verdicts ----------------------------------------------------

    def derive_relation_verdicts(self, batch_id: str) -> int:
        """Apply the Poor-endpoint rule: any relation whose from/to entity is
        graded Poor gets a derived Fail, overriding a manual Pass. Re-running
        is idempotent; when an endpoint is no longer Poor the derived Fail is
        withdrawn (logged in the audit trail). Relations with ungraded
        endpoints are left pending. Returns the number of changes."""
        with self._lock:
            batch = self.get_batch(batch_id)
            grades = self._effective_entity_grades(batch_id)
            changes = 0
            for item in batch.items:
                if item.ref.kind is not ItemKind.RELATION:
                    continue
                endpoints = (item.payload.get("from", ""), item.payload.get("to", ""))
                endpoint_grades = [
                    grades.get((item.ref.case_id, ep)) for ep in endpoints if ep
                ]
                should_fail = any(g is EntityGrade.POOR for g in endpoint_grades)
                key = (item.ref.key(), DERIVED_REVIEWER)
                existing = self._labels[batch_id].get(key)
                if should_fail and existing is None:
                    label = ReviewLabel(
                        ref=item.ref,
                        value=RelationVerdictValue.FAIL,
                        reviewer=DERIVED_REVIEWER,
                        derived=True,
                    )
                    self._audit[batch_id].append(label)
                    self._labels[batch_id][key] = label
                    changes += 1
                elif not should_fail and existing is not None:
                    withdrawal = ReviewLabel(
                        ref=item.ref,
                        value="withdrawn",
                        reviewer=DERIVED_REVIEWER,
                        derived=True,
                    )
                    self._audit[batch_id].append(withdrawal)
                    del self._labels[batch_id][key]
                    changes += 1
            if changes:
                self._persist(batch_id)
            return changes

    # -- aggregation ---------------------------------------------------------

    def aggregate_quality(self, batch_id: str) -> dict:
        """Quality table per entity kind plus a single relation row.

        Same labels always produce the same table regardless of submission
        order; kinds with nothing graded and nothing flagged render "n/a".
        """
        batch = self.get_batch(batch_id)
        grades = self._effective_entity_grades(batch_id)
        kind_of_item: dict[tuple[str, str], str] = {}
        for item in batch.items:
            if item.ref.kind is ItemKind.ENTITY:
                kind_of_item[(item.ref.case_id, item.ref.target_id)] = item.payload.get(
                    "entity_kind", ""
                )
        grade_counts: dict[str, Counter] = {k.value: Counter() for k in EntityKind}
        for key, grade in grades.items():
            kind = kind_of_item.get(key)
            if kind in grade_counts:
                grade_counts[kind][grade] += 1
        missing_counts: Counter = Counter()
        for label in self._labels[batch_id].values():
            if label.ref.kind is ItemKind.MISSING_FLAG and isinstance(label.value, dict):
                kind = str(label.value.get("entity_kind", ""))
                if kind in grade_counts:
                    missing_counts[kind] += 1

        def pct(count: int, denom: int) -> int | None:
            return round_half_up(100.0 * count / denom) if denom else None

        entities: dict[str, object] = {}
        for kind in EntityKind:
            counts = grade_counts[kind.value]
            graded = sum(counts.values())
            missing = missing_counts[kind.value]
            if graded == 0 and missing == 0:
                entities[kind.value] = "n/a"
                continue
            entities[kind.value] = {
                "good_pct": pct(counts[EntityGrade.GOOD], graded),
                "acceptable_pct": pct(counts[EntityGrade.ACCEPTABLE], graded),
                "poor_pct": pct(counts[EntityGrade.POOR], graded),
                "missing_pct": pct(missing, graded + missing),
                "graded": graded,
                "missing_flags": missing,
            }

        derived: dict[str, RelationVerdictValue] = {}
        manual: dict[str, list[RelationVerdictValue]] = {}
        for label in self._labels[batch_id].values():
            if label.ref.kind is not ItemKind.RELATION:
                continue
            value = RelationVerdictValue(str(label.value_str()))
            if label.derived:
                derived[label.ref.key()] = value
            else:
                manual.setdefault(label.ref.key(), []).append(value)
        verdicts: dict[str, RelationVerdictValue] = {}
        for key, values in manual.items():
            counts = Counter(values)
            # majority vote; ties resolve to Fail (the conservative side)
            if counts[RelationVerdictValue.FAIL] >= counts[RelationVerdictValue.PASS]:
                verdicts[key] = RelationVerdictValue.FAIL
            else:
                verdicts[key] = RelationVerdictValue.PASS
        verdicts.update(derived)  # a derived Fail overrides any manual verdict
        n_pass = sum(1 for v in verdicts.values() if v is RelationVerdictValue.PASS)
        n_fail = sum(1 for v in verdicts.values() if v is RelationVerdictValue.FAIL)
        graded_rel = n_pass + n_fail
        relations = (
            {
                "pass_pct": pct(n_pass, graded_rel),
                "fail_pct": pct(n_fail, graded_rel),
                "graded": graded_rel,
            }
            if graded_rel
            else "n/a"
        )
        return {"batch_id": batch_id, "entities": entities, "relations": relations}

    def aggregate_record_quality(self, batch_id: str) -> dict:
        """Exact Correct/CorrectMinor/Wrong counts over graded records."""
        self.get_batch(batch_id)
        counts = {g.value: 0 for g in RecordGrade}
        for label in self._labels[batch_id].values():
            if label.ref.kind is ItemKind.SFT_RECORD:
                counts[RecordGrade(str(label.value_str())).value] += 1
        return counts


def _label_from_json(raw: dict) -> ReviewLabel:
    kind = ItemKind(raw["kind"])
    value: object = raw["value"]
    if kind is ItemKind.ENTITY and isinstance(value, str):
        value = EntityGrade(value)
    elif kind is ItemKind.RELATION and isinstance(value, str) and value in ("Pass", "Fail"):
        value = RelationVerdictValue(value)
    elif kind is ItemKind.SFT_RECORD and isinstance(value, str):
        value = RecordGrade(value)
    return ReviewLabel(
        ref=ItemRef(raw["case_id"], kind, raw["target_id"]),
        value=value,
        reviewer=raw["reviewer"],
        derived=raw.get("derived", False),
        submitted_at=raw.get("submitted_at", 0.0),
    )


def _batch_number(batch_id: str) -> int:
    try:
        return int(batch_id.lstrip("b"))
    except ValueError:
        return 0
