"""Instruction-tuning dataset generation.

For each legal issue in a graph: gather its related facts and the union of
applicable rules (apply path + address path), ask the model to author the
instruction-tuning example, parse the XML payload it returns, and verify
that the model echoed the graph-derived facts/issue/rules verbatim (modulo
whitespace and quote style). Issues with no facts or no rules are skipped,
never fabricated: the record format requires both blocks, and inventing
either would poison training data.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path

from . import prompts
from .errors import PipelineError
from .gateway import Gateway, LlmRequest
from .kg import Entity, IracGraph
from .query import FactSet, RuleSet, applicable_rules, get_related_facts, issues
from .util import atomic_write_text, normalize_text

log = logging.getLogger(__name__)

SYSTEM_MESSAGE = "You are a legal analysis assistant."


class EchoMismatch(PipelineError):
    code = "echo_mismatch"


class MalformedSftXml(PipelineError):
    code = "malformed_sft_xml"

    def __init__(self, tag: str):
        super().__init__(f"missing or empty <{tag}> element in model output")
        self.tag = tag


@dataclass(frozen=True)
class SftParts:
    """The six parts of the model's XML payload."""

    instruction: str
    facts: tuple[str, ...]
    output_format: str
    legal_issue: str
    rules: tuple[str, ...]
    explanation: str


@dataclass(frozen=True)
class SftRecord:
    case_id: str
    issue_id: str
    record_id: str
    facts: tuple[str, ...]
    legal_issue: str
    rules: tuple[str, ...]
    explanation: str
    instruction: str
    output_format: str

    def __post_init__(self):
        if not self.facts or not self.rules or not self.explanation.strip():
            raise ValueError("facts, rules, and explanation must be non-empty")


@dataclass(frozen=True)
class ChatTrainingRecord:
    system: str
    user: str
    assistant: str
    case_id: str
    issue_id: str
    record_id: str

    def to_json_obj(self) -> dict:
        return {
            "system": self.system,
            "user": self.user,
            "assistant": self.assistant,
            "meta": {"case_id": self.case_id, "issue_id": self.issue_id, "record_id": self.record_id},
        }


def make_record_id(case_id: str, issue_id: str) -> str:
    return hashlib.sha256(f"{case_id}\x1f{issue_id}".encode("utf-8")).hexdigest()[:16]


def render_sft_prompt(facts: FactSet, issue: Entity, rules: RuleSet) -> str:
    """Template with facts and rules rendered one label per line in canonical
    (ascending entity id) order."""
    if not facts or not rules:
        raise ValueError("facts and rules must be non-empty")
    return prompts.render(
        prompts.SFT_GENERATION,
        {
            "material_facts": "\n".join(f.label for f in facts),
            "legal_issue": issue.label,
            "rules": "\n".join(r.label for r in rules),
        },
    )


def _extract_tag(text: str, tag: str) -> str:
    m = re.search(rf"<{tag}>(.*?)</{tag}>", text, re.DOTALL)
    if m is None:
        raise MalformedSftXml(tag)
    return m.group(1).strip()


def _extract_tag_list(block: str, tag: str) -> tuple[str, ...]:
    items = tuple(m.strip() for m in re.findall(rf"<{tag}>(.*?)</{tag}>", block, re.DOTALL))
    if not items:
        raise MalformedSftXml(tag)
    return items


def parse_sft_output(text: str) -> SftParts:
    """Pull the six required parts out of the model's sft_data document.

    Tolerant of surrounding prose, code fences, and pretty-printed element
    boundaries; raises MalformedSftXml naming the first missing tag.
    """
    scope_match = re.search(r"<sft_data>(.*?)</sft_data>", text, re.DOTALL)
    scope = scope_match.group(1) if scope_match else text
    instruction = _extract_tag(scope, "instruction")
    case_facts_block = _extract_tag(scope, "case_facts")
    facts = _extract_tag_list(case_facts_block, "fact")
    output_format = _extract_tag(scope, "output_format")
    legal_issue = _extract_tag(scope, "legal_issue")
    rules_block = _extract_tag(scope, "rules")
    rules = _extract_tag_list(rules_block, "rule")
    explanation = _extract_tag(scope, "explanation")
    if not explanation:
        raise MalformedSftXml("explanation")
    return SftParts(
        instruction=instruction,
        facts=facts,
        output_format=output_format,
        legal_issue=legal_issue,
        rules=rules,
        explanation=explanation,
    )


def _check_echo(kind: str, expected: tuple[str, ...], got: tuple[str, ...]) -> None:
    # Order-insensitive: models occasionally reorder list items but the
    # content must match exactly after whitespace/quote normalization.
    want = sorted(normalize_text(s) for s in expected)
    have = sorted(normalize_text(s) for s in got)
    if want != have:
        raise EchoMismatch(f"model altered the {kind} block: expected {want}, got {have}")


def gen_sft(
    graph: IracGraph, issue_id: str, gateway: Gateway, model_tag: str = "default"
) -> SftRecord | None:
    """Produce one record for one issue, or None when the issue has no
    related facts or no applicable rules. Raises EchoMismatch when the model
    altered the graph-derived inputs, MalformedSftXml when its payload is
    structurally broken; gateway errors propagate."""
    facts = get_related_facts(graph, issue_id)
    rules = applicable_rules(graph, issue_id)
    if not facts:
        log.info("skip %s/%s: no related facts", graph.case_id, issue_id)
        return None
    if not rules:
        log.info("skip %s/%s: no applicable rules", graph.case_id, issue_id)
        return None
    issue = graph.entity_by_id(issue_id)
    assert issue is not None
    prompt = render_sft_prompt(facts, issue, rules)
    response = gateway.complete(LlmRequest(prompt=prompt, model_tag=model_tag))
    parts = parse_sft_output(response.text)
    _check_echo("facts", tuple(f.label for f in facts), parts.facts)
    _check_echo("rules", tuple(r.label for r in rules), parts.rules)
    if normalize_text(parts.legal_issue) != normalize_text(issue.label):
        raise EchoMismatch(
            f"model altered the legal issue: expected {issue.label!r}, got {parts.legal_issue!r}"
        )
    return SftRecord(
        case_id=graph.case_id,
        issue_id=issue_id,
        record_id=make_record_id(graph.case_id, issue_id),
        facts=tuple(f.label for f in facts),
        legal_issue=issue.label,
        rules=tuple(r.label for r in rules),
        explanation=parts.explanation,
        instruction=parts.instruction,
        output_format=parts.output_format,
    )


def render_case_facts_block(facts: tuple[str, ...]) -> str:
    lines = "\n".join(f"<fact>{f}</fact>" for f in facts)
    return f"<case_facts>\n{lines}\n</case_facts>"


def render_legal_analysis(legal_issue: str, rules: tuple[str, ...], explanation: str) -> str:
    rule_lines = "\n".join(f"    <rule>{r}</rule>" for r in rules)
    return (
        "<legal_analysis>\n"
        f"  <legal_issue>{legal_issue}</legal_issue>\n"
        "  <rules>\n"
        f"{rule_lines}\n"
        "  </rules>\n"
        f"  <explanation>{explanation}</explanation>\n"
        "</legal_analysis>"
    )


def to_chat_record(record: SftRecord) -> ChatTrainingRecord:
    """Assemble the chat-format training example: the user turn is exactly
    the sft_input parts (instruction, case_facts, output_format) and the
    assistant turn is the legal_analysis payload from the sft_output parts."""
    user = "\n\n".join(
        [record.instruction, render_case_facts_block(record.facts), record.output_format]
    )
    assistant = render_legal_analysis(record.legal_issue, record.rules, record.explanation)
    return ChatTrainingRecord(
        system=SYSTEM_MESSAGE,
        user=user,
        assistant=assistant,
        case_id=record.case_id,
        issue_id=record.issue_id,
        record_id=record.record_id,
    )


def _record_line(chat: ChatTrainingRecord) -> str:
    return json.dumps(chat.to_json_obj(), ensure_ascii=False, separators=(",", ":"))


def _existing_lines(path: Path) -> dict[str, str]:
    lines: dict[str, str] = {}
    if path.exists():
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            try:
                rid = json.loads(line)["meta"]["record_id"]
            except (json.JSONDecodeError, KeyError, TypeError):
                continue
            lines[rid] = line
    return lines


def run_sft_generation(
    graphs: list[IracGraph],
    gateway: Gateway,
    out_dir: Path | str,
    model_tag: str = "default",
) -> dict:
    """One record attempt per legal issue, in (case_id, issue_id) order.

    Re-runs are idempotent: records already present in <out>/sft.jsonl are
    reused byte-for-byte with no gateway call, and the file is rewritten in
    deterministic order.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "sft.jsonl"
    existing = _existing_lines(out_path)

    summary = {
        "records": 0,
        "skipped_no_facts": 0,
        "skipped_no_rules": 0,
        "echo_failures": 0,
        "parse_failures": 0,
        "gateway_failures": 0,
    }
    lines: list[str] = []
    for graph in sorted(graphs, key=lambda g: g.case_id):
        for issue in issues(graph):
            if not get_related_facts(graph, issue.id):
                summary["skipped_no_facts"] += 1
                continue
            if not applicable_rules(graph, issue.id):
                summary["skipped_no_rules"] += 1
                continue
            rid = make_record_id(graph.case_id, issue.id)
            if rid in existing:
                lines.append(existing[rid])
                summary["records"] += 1
                continue
            try:
                record = gen_sft(graph, issue.id, gateway, model_tag=model_tag)
            except EchoMismatch as exc:
                log.warning("echo failure for %s/%s: %s", graph.case_id, issue.id, exc)
                summary["echo_failures"] += 1
                continue
            except MalformedSftXml as exc:
                log.warning("parse failure for %s/%s: %s", graph.case_id, issue.id, exc)
                summary["parse_failures"] += 1
                continue
            except PipelineError as exc:
                log.warning("gateway failure for %s/%s: %s", graph.case_id, issue.id, exc)
                summary["gateway_failures"] += 1
                continue
            assert record is not None  # emptiness was pre-checked above
            lines.append(_record_line(to_chat_record(record)))
            summary["records"] += 1
    atomic_write_text(out_path, "".join(line + "\n" for line in lines))
    return summary
