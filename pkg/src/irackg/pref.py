"""Preference dataset generation.

Chosen rules for an issue are the applicable set (apply path + address
path). Rejected candidates start as every other rule in the same case graph
and must survive the judge: a candidate stays rejected only when the judge
says it is not applicable ("No"). "Yes", "Potentially", and anything the
judge answer fails to cover are excluded; a rule wrongly treated as
non-applicable is a worse training signal than a lost example.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path

from . import prompts
from .errors import PipelineError
from .extraction import NoObjectFound, repair_json
from .gateway import Gateway, LlmRequest
from .kg import Entity, IracGraph
from .query import FactSet, RuleSet, all_rules, applicable_rules, get_related_facts, issues
from .sft import make_record_id, render_case_facts_block
from .util import atomic_write_text, normalize_text

log = logging.getLogger(__name__)

SYSTEM_MESSAGE = "You are a legal analysis assistant."

APPLICABILITY_VALUES = ("Yes", "No", "Potentially")
# Same re-prompt ladder as extraction: initial call plus two retries.
JUDGE_TEMPERATURES = (0.0, 0.0, 0.2)


class JudgeParseFailure(PipelineError):
    code = "judge_parse_failure"


@dataclass(frozen=True)
class JudgeVerdict:
    rule_label: str
    applicability: str
    reasoning: str

    def __post_init__(self):
        if self.applicability not in APPLICABILITY_VALUES:
            raise ValueError(f"applicability must be one of {APPLICABILITY_VALUES}")

    def to_json_obj(self) -> dict:
        return {
            "rule": self.rule_label,
            "applicability": self.applicability,
            "reasoning": self.reasoning,
        }


@dataclass(frozen=True)
class PrefRecord:
    case_id: str
    issue_id: str
    record_id: str
    facts: tuple[str, ...]
    legal_issue: str
    chosen_rules: tuple[str, ...]
    rejected_rules: tuple[str, ...]
    verdicts: tuple[JudgeVerdict, ...]

    def __post_init__(self):
        if not self.chosen_rules or not self.rejected_rules:
            raise ValueError("chosen_rules and rejected_rules must be non-empty")
        if set(self.chosen_rules) & set(self.rejected_rules):
            raise ValueError("chosen and rejected rules overlap")
        no_labels = {normalize_text(v.rule_label) for v in self.verdicts if v.applicability == "No"}
        if any(normalize_text(r) not in no_labels for r in self.rejected_rules):
            raise ValueError("every rejected rule needs a 'No' verdict")


@dataclass(frozen=True)
class DpoTrainingRecord:
    system: str
    user: str
    chosen: str
    rejected: str
    case_id: str
    issue_id: str
    record_id: str
    verdicts: tuple[JudgeVerdict, ...] = ()

    def to_json_obj(self) -> dict:
        return {
            "system": self.system,
            "user": self.user,
            "chosen": self.chosen,
            "rejected": self.rejected,
            "meta": {
                "case_id": self.case_id,
                "issue_id": self.issue_id,
                "record_id": self.record_id,
                "verdicts": [v.to_json_obj() for v in self.verdicts],
            },
        }


def candidate_rejected(graph: IracGraph, issue_id: str) -> RuleSet:
    """Pre-judge rejected candidates: every rule in the graph minus the
    applicable set for this issue."""
    chosen_ids = {r.id for r in applicable_rules(graph, issue_id)}
    return tuple(r for r in all_rules(graph) if r.id not in chosen_ids)


def _bullet_block(entities: tuple[Entity, ...]) -> str:
    return "\n".join(f"- {e.label}" for e in entities)


def render_judge_prompt(
    facts: FactSet, issue: Entity, chosen: RuleSet, candidates: RuleSet
) -> str:
    """Judge prompt with facts/chosen/candidates rendered one per line in
    canonical order."""
    if not candidates:
        raise ValueError("candidates must be non-empty")
    return prompts.render(
        prompts.RULE_JUDGE,
        {
            "case_facts": _bullet_block(facts),
            "legal_issue": issue.label,
            "chosen_rules": _bullet_block(chosen),
            "rejected_rules": _bullet_block(candidates),
        },
    )


def _normalize_rule_label(s: str) -> str:
    return normalize_text(re.sub(r"^\s*[-*•]\s+", "", s))


def parse_judge_output(text: str, candidate_labels: list[str]) -> list[JudgeVerdict]:
    """Parse the judge's JSON conclusion into verdicts.

    The top-level "Rules" array holds {Rule, Applicability, Reasoning}
    objects. Applicability is matched case-insensitively against
    Yes/No/Potentially; each Rule must match one of the candidate labels
    after bullet/whitespace/quote normalization ("use the rule text exactly
    as provided"). Anything else is a JudgeParseFailure.
    """
    try:
        obj = json.loads(repair_json(text))
    except (NoObjectFound, json.JSONDecodeError) as exc:
        raise JudgeParseFailure(f"judge output is not JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise JudgeParseFailure("judge output is not a JSON object")
    rules = None
    for key, value in obj.items():
        if key.lower() == "rules":
            rules = value
            break
    if not isinstance(rules, list):
        raise JudgeParseFailure('judge output lacks a top-level "Rules" array')
    by_norm = {_normalize_rule_label(label): label for label in candidate_labels}
    verdicts: list[JudgeVerdict] = []
    for i, item in enumerate(rules):
        if not isinstance(item, dict):
            raise JudgeParseFailure(f"Rules[{i}] is not an object")
        rule_raw = item.get("Rule")
        applicability_raw = item.get("Applicability")
        reasoning = item.get("Reasoning", "")
        if not isinstance(rule_raw, str) or not isinstance(applicability_raw, str):
            raise JudgeParseFailure(f"Rules[{i}] is missing Rule/Applicability")
        matched = by_norm.get(_normalize_rule_label(rule_raw))
        if matched is None:
            raise JudgeParseFailure(f"verdict rule {rule_raw!r} matches no candidate")
        applicability = applicability_raw.strip().capitalize()
        if applicability not in APPLICABILITY_VALUES:
            raise JudgeParseFailure(f"unknown applicability {applicability_raw!r}")
        verdicts.append(
            JudgeVerdict(
                rule_label=matched,
                applicability=applicability,
                reasoning=str(reasoning) if reasoning is not None else "",
            )
        )
    return verdicts


def _judge_candidates(
    facts: FactSet,
    issue: Entity,
    chosen: RuleSet,
    candidates: RuleSet,
    gateway: Gateway,
    model_tag: str,
) -> list[JudgeVerdict]:
    prompt = render_judge_prompt(facts, issue, chosen, candidates)
    labels = [c.label for c in candidates]
    last_error: PipelineError | None = None
    for temperature in JUDGE_TEMPERATURES:
        request = LlmRequest(prompt=prompt, model_tag=model_tag, temperature=temperature)
        try:
            response = gateway.complete(request)
        except PipelineError as exc:
            last_error = exc
            break
        try:
            return parse_judge_output(response.text, labels)
        except JudgeParseFailure as exc:
            last_error = exc
            continue
    raise JudgeParseFailure(f"judge failed after retries: {last_error}")


def gen_pref(
    graph: IracGraph, issue_id: str, gateway: Gateway, model_tag: str = "default"
) -> PrefRecord | None:
    """Build one preference record for one issue, or None when there is
    nothing to contrast (no facts, no chosen rules, no candidates, or no
    candidate confirmed non-applicable).

    Candidates the judge's answer does not cover are treated as
    "Potentially" and left out of the rejected set. A judge that cannot be
    parsed after retries raises JudgeParseFailure.
    """
    facts = get_related_facts(graph, issue_id)
    chosen = applicable_rules(graph, issue_id)
    candidates = candidate_rejected(graph, issue_id)
    if not facts or not chosen or not candidates:
        log.info(
            "skip %s/%s: facts=%d chosen=%d candidates=%d",
            graph.case_id,
            issue_id,
            len(facts),
            len(chosen),
            len(candidates),
        )
        return None
    issue = graph.entity_by_id(issue_id)
    assert issue is not None
    verdicts = _judge_candidates(facts, issue, chosen, candidates, gateway, model_tag)
    verdict_by_label = {normalize_text(v.rule_label): v for v in verdicts}
    rejected: list[str] = []
    kept_verdicts: list[JudgeVerdict] = []
    for candidate in candidates:
        verdict = verdict_by_label.get(normalize_text(candidate.label))
        if verdict is None:
            log.info("no verdict for candidate %r; excluded from rejected", candidate.label)
            continue
        kept_verdicts.append(verdict)
        if verdict.applicability == "No":
            rejected.append(candidate.label)
    if not rejected:
        log.info("skip %s/%s: no candidate judged non-applicable", graph.case_id, issue_id)
        return None
    return PrefRecord(
        case_id=graph.case_id,
        issue_id=issue_id,
        record_id=make_record_id(graph.case_id, issue_id),
        facts=tuple(f.label for f in facts),
        legal_issue=issue.label,
        chosen_rules=tuple(c.label for c in chosen),
        rejected_rules=tuple(rejected),
        verdicts=tuple(kept_verdicts),
    )


def render_rules_block(rules: tuple[str, ...]) -> str:
    lines = "\n".join(f"<rule>{r}</rule>" for r in rules)
    return f"<rules>\n{lines}\n</rules>"


def to_dpo_record(record: PrefRecord) -> DpoTrainingRecord:
    """Issue-level training example: user carries both the facts block and
    the issue; chosen/rejected each render their full rule list."""
    user = "\n\n".join(
        [render_case_facts_block(record.facts), f"<legal_issue>{record.legal_issue}</legal_issue>"]
    )
    return DpoTrainingRecord(
        system=SYSTEM_MESSAGE,
        user=user,
        chosen=render_rules_block(record.chosen_rules),
        rejected=render_rules_block(record.rejected_rules),
        case_id=record.case_id,
        issue_id=record.issue_id,
        record_id=record.record_id,
        verdicts=record.verdicts,
    )


def to_dpo_records_pairwise(record: PrefRecord) -> list[DpoTrainingRecord]:
    """Alternative emission mode: one example per (chosen, rejected) rule pair,
    for trainers that want single-rule contrasts."""
    base = to_dpo_record(record)
    out = []
    for i, chosen_rule in enumerate(record.chosen_rules):
        for j, rejected_rule in enumerate(record.rejected_rules):
            out.append(
                DpoTrainingRecord(
                    system=base.system,
                    user=base.user,
                    chosen=render_rules_block((chosen_rule,)),
                    rejected=render_rules_block((rejected_rule,)),
                    case_id=record.case_id,
                    issue_id=record.issue_id,
                    record_id=f"{record.record_id}:{i}:{j}",
                    verdicts=record.verdicts,
                )
            )
    return out


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


def run_pref_generation(
    graphs: list[IracGraph],
    gateway: Gateway,
    out_dir: Path | str,
    model_tag: str = "default",
    pairwise: bool = False,
) -> dict:
    """One attempt per legal issue in (case_id, issue_id) order, writing
    <out>/dpo.jsonl. Idempotent like the SFT driver: existing record lines
    are reused without a judge call."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "dpo.jsonl"
    existing = _existing_lines(out_path)

    summary = {"records": 0, "skipped": 0, "judge_failures": 0}
    lines: list[str] = []
    for graph in sorted(graphs, key=lambda g: g.case_id):
        for issue in issues(graph):
            rid = make_record_id(graph.case_id, issue.id)
            if pairwise:
                pair_keys = [k for k in existing if k.startswith(f"{rid}:")]
                pair_keys.sort(key=lambda k: tuple(int(p) for p in k.split(":")[1:]))
                reused = [existing[k] for k in pair_keys]
            else:
                reused = [existing[rid]] if rid in existing else []
            if reused:
                lines.extend(reused)
                summary["records"] += len(reused)
                continue
            try:
                record = gen_pref(graph, issue.id, gateway, model_tag=model_tag)
            except JudgeParseFailure as exc:
                log.warning("judge failure for %s/%s: %s", graph.case_id, issue.id, exc)
                summary["judge_failures"] += 1
                summary["skipped"] += 1
                continue
            if record is None:
                summary["skipped"] += 1
                continue
            emitted = to_dpo_records_pairwise(record) if pairwise else [to_dpo_record(record)]
            for dpo in emitted:
                lines.append(json.dumps(dpo.to_json_obj(), ensure_ascii=False, separators=(",", ":")))
            summary["records"] += len(emitted)
    atomic_write_text(out_path, "".join(line + "\n" for line in lines))
    return summary
