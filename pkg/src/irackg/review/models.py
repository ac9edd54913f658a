"""Review domain types: grades, item references, labels, and batches."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum


class EntityGrade(str, Enum):
    GOOD = "Good"  # high quality, at most minor inaccuracies
    ACCEPTABLE = "Acceptable"  # noticeable issues but still useful
    POOR = "Poor"  # significant errors or completely incorrect


class RecordGrade(str, Enum):
    CORRECT = "Correct"
    CORRECT_MINOR = "CorrectMinor"
    WRONG = "Wrong"


class RelationVerdictValue(str, Enum):
    PASS = "Pass"
    FAIL = "Fail"


class ItemKind(str, Enum):
    ENTITY = "entity"
    RELATION = "relation"
    SFT_RECORD = "sft_record"
    MISSING_FLAG = "missing_flag"


DERIVED_REVIEWER = "system:derived"


@dataclass(frozen=True)
class ItemRef:
    case_id: str
    kind: ItemKind
    target_id: str

    def key(self) -> str:
        return f"{self.case_id}/{self.kind.value}/{self.target_id}"


@dataclass(frozen=True)
class ReviewItem:
    """One reviewable unit, with enough payload snapshot that grading and
    verdict derivation never need the source graph again."""

    ref: ItemRef
    payload: dict


@dataclass(frozen=True)
class ReviewLabel:
    ref: ItemRef
    value: object  # EntityGrade | RelationVerdictValue | RecordGrade | missing-flag dict
    reviewer: str
    derived: bool = False
    submitted_at: float = field(default_factory=time.time)

    def value_str(self) -> object:
        if isinstance(self.value, Enum):
            return self.value.value
        return self.value

    def to_json_obj(self) -> dict:
        return {
            "case_id": self.ref.case_id,
            "kind": self.ref.kind.value,
            "target_id": self.ref.target_id,
            "value": self.value_str(),
            "reviewer": self.reviewer,
            "derived": self.derived,
            "submitted_at": self.submitted_at,
        }


@dataclass
class ReviewBatch:
    batch_id: str
    seed: int
    case_ids: list[str]
    items: list[ReviewItem]
    open: bool = True

    def item_keys(self) -> set[str]:
        return {item.ref.key() for item in self.items}

    def to_json_obj(self) -> dict:
        return {
            "batch_id": self.batch_id,
            "seed": self.seed,
            "case_ids": self.case_ids,
            "open": self.open,
            "items": [
                {
                    "case_id": i.ref.case_id,
                    "kind": i.ref.kind.value,
                    "target_id": i.ref.target_id,
                    "payload": i.payload,
                }
                for i in self.items
            ],
        }
