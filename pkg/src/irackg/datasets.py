"""Dataset assembly: case-level train/validation split, JSONL read/write,
and corpus statistics."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import PipelineError
from .util import round_half_up, stable_rank

log = logging.getLogger(__name__)


class EmptyInput(PipelineError):
    code = "empty_input"


class IoError(PipelineError):
    code = "io_error"


class LineParseError(PipelineError):
    code = "line_parse_error"

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class SplitSpec:
    train_parts: int
    val_parts: int
    seed: int
    unit: str = "case"

    def __post_init__(self):
        if self.train_parts < 1 or self.val_parts < 1:
            raise ValueError("train_parts and val_parts must be >= 1")
        if self.unit != "case":
            raise ValueError("only case-level splitting is supported")


def record_case_id(record: dict) -> str:
    meta = record.get("meta")
    if isinstance(meta, dict) and "case_id" in meta:
        return str(meta["case_id"])
    if "case_id" in record:
        return str(record["case_id"])
    raise EmptyInput("record carries no case_id (neither meta.case_id nor case_id)")


def split_train_val(records: list[dict], spec: SplitSpec) -> tuple[list[dict], list[dict]]:
    """Split on distinct case ids so no case straddles the boundary.

    The validation side gets round-half-up(cases * val/(train+val)) cases,
    selected by seeded SHA-256 ranking of case ids: deterministic in
    (records, seed) and independent of record order and platform.
    """
    if not records:
        raise EmptyInput("no records to split")
    case_ids: list[str] = []
    seen: set[str] = set()
    for rec in records:
        cid = record_case_id(rec)
        if cid not in seen:
            seen.add(cid)
            case_ids.append(cid)
    n_val = round_half_up(len(case_ids) * spec.val_parts / (spec.train_parts + spec.val_parts))
    ranked = sorted(case_ids, key=lambda cid: (stable_rank(spec.seed, cid), cid))
    val_cases = set(ranked[:n_val])
    if n_val == 0:
        log.warning("corpus of %d case(s) yields an empty validation split", len(case_ids))
    train = [r for r in records if record_case_id(r) not in val_cases]
    val = [r for r in records if record_case_id(r) in val_cases]
    return train, val


def write_jsonl(records: list[dict], path: Path | str) -> int:
    """One compact JSON object per line, UTF-8, trailing newline; returns lines written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(path, "w", encoding="utf-8") as f:
            for rec in records:
                f.write(json.dumps(rec, ensure_ascii=False, separators=(",", ":")))
                f.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return len(records)


def read_jsonl(path: Path | str) -> list[dict]:
    """Parse a JSONL file; blank lines are ignored and parse errors carry the
    1-based line number."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    records: list[dict] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise LineParseError(lineno, str(exc)) from exc
    return records


def _count_tag(text: str, tag: str) -> int:
    return len(re.findall(rf"<{tag}>", text))


def dataset_stats(records: list[dict]) -> dict:
    """Exact counts plus means (3 decimals) over a generated JSONL corpus.

    Fact counts come from <fact> tags in the user turn; chosen/rejected rule
    sizes from <rule> tags in those fields, averaged over the records that
    have them (0.0 when none do).
    """
    cases: set[str] = set()
    issue_keys: set[tuple[str, str]] = set()
    fact_counts: list[int] = []
    chosen_counts: list[int] = []
    rejected_counts: list[int] = []
    for rec in records:
        meta = rec.get("meta") if isinstance(rec.get("meta"), dict) else {}
        if "case_id" in meta:
            cases.add(str(meta["case_id"]))
        elif "case_id" in rec:
            cases.add(str(rec["case_id"]))
        if "issue_id" in meta:
            issue_keys.add((str(meta.get("case_id", "")), str(meta["issue_id"])))
        user = rec.get("user")
        if isinstance(user, str):
            fact_counts.append(_count_tag(user, "fact"))
        if isinstance(rec.get("chosen"), str):
            chosen_counts.append(_count_tag(rec["chosen"], "rule"))
        if isinstance(rec.get("rejected"), str):
            rejected_counts.append(_count_tag(rec["rejected"], "rule"))

    def mean(xs: list[int]) -> float:
        return round(sum(xs) / len(xs), 3) if xs else 0.0

    return {
        "records": len(records),
        "distinct_cases": len(cases),
        "distinct_issues": len(issue_keys),
        "mean_facts": mean(fact_counts),
        "mean_chosen_rules": mean(chosen_counts),
        "mean_rejected_rules": mean(rejected_counts),
    }
