"""Per-case graph extraction: render the extraction prompt, call the gateway,
repair and parse the returned JSON, validate leniently, and persist graphs
or quarantine failures.

Extraction never halts the corpus run: every per-case failure becomes a
quarantined outcome and the driver moves on.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from . import prompts
from .corpus import CaseCorpus, CaseDocument
from .errors import PipelineError
from .gateway import Gateway, LlmRequest
from .kg import (
    EntityKind,
    IracGraph,
    RelationKind,
    UnparseableDocument,
    ValidationReport,
    parse_graph_obj,
    serialize_graph,
)
from .util import atomic_write_json, atomic_write_text, sha256_text

log = logging.getLogger(__name__)

DEFAULT_OPINION_BUDGET = 60_000
# Attempt ladder: initial call, then up to two re-prompts of the same prompt.
REPROMPT_TEMPERATURES = (0.0, 0.0, 0.2)

STATUS_OK = "ok"
STATUS_OK_WITH_DROPS = "ok_with_drops"
STATUS_QUARANTINED = "quarantined"


class NoObjectFound(PipelineError):
    code = "no_object_found"


@dataclass(frozen=True)
class ExtractionOutcome:
    case_id: str
    status: str
    graph: IracGraph | None
    report: ValidationReport
    raw_digest: str
    truncated: bool = False
    errors: tuple[str, ...] = ()
    raw_text: str = ""


def truncate_at_paragraph(text: str, budget: int) -> tuple[str, bool]:
    """Keep the head of text up to budget characters, cutting at the last
    paragraph break (falling back to line break, then hard cut)."""
    if len(text) <= budget:
        return text, False
    cut = text.rfind("\n\n", 0, budget + 1)
    if cut <= 0:
        cut = text.rfind("\n", 0, budget + 1)
    if cut <= 0:
        cut = budget
    return text[:cut].rstrip(), True


def render_kg_prompt(case: CaseDocument, budget: int = DEFAULT_OPINION_BUDGET) -> str:
    """Extraction prompt for one case: the stored template with the opinion
    substituted (truncated to the budget at a paragraph boundary)."""
    opinion, _ = truncate_at_paragraph(case.opinion_text, budget)
    return prompts.render(prompts.KG_EXTRACTION, {"case_opinion": opinion})


def repair_json(raw: str) -> str:
    """Extract the first balanced {...} span from raw model output.

    Code fences and surrounding prose fall away because scanning starts at a
    '{' and tracks string/escape state, so braces inside JSON strings do not
    break the balance count. The result is a candidate only; parsing may
    still fail.
    """
    start = raw.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(raw)):
            ch = raw[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    return raw[start : i + 1]
        start = raw.find("{", start + 1)
    raise NoObjectFound("no balanced JSON object in model output")


def ensure_case_entity(obj: dict, case_id: str) -> dict:
    """Synthesize the self-referential Case vertex when the extractor omitted
    it but emitted CITES/REFERENCES relations that need one to attach to.

    Only fires when no Case-kind vertex exists, at least one CITES/REFERENCES
    relation is present, and the id "CASE" is free; graphs without citation
    edges are left untouched.
    """
    vertices = obj.get("vertices_")
    relations = obj.get("relations_")
    if not isinstance(vertices, list) or not isinstance(relations, list):
        return obj
    has_case = any(isinstance(v, dict) and v.get("type_") == EntityKind.CASE.value for v in vertices)
    if has_case:
        return obj
    needs_case = any(
        isinstance(r, dict)
        and r.get("type_") in (RelationKind.CITES.value, RelationKind.REFERENCES.value)
        for r in relations
    )
    if not needs_case:
        return obj
    if any(isinstance(v, dict) and v.get("id_") == "CASE" for v in vertices):
        return obj
    patched = dict(obj)
    patched["vertices_"] = list(vertices) + [
        {"id_": "CASE", "type_": EntityKind.CASE.value, "label_": case_id}
    ]
    return patched


def _backfill_empty_labels(graph: IracGraph) -> IracGraph:
    """Replace blank labels with the entity id so persisted graphs re-validate clean."""
    if all(e.label.strip() for e in graph.entities):
        return graph
    fixed = tuple(e if e.label.strip() else replace(e, label=e.id) for e in graph.entities)
    return replace(graph, entities=fixed)


def extract_case_graph(
    case: CaseDocument,
    gateway: Gateway,
    model_tag: str = "default",
    budget: int = DEFAULT_OPINION_BUDGET,
    max_output: int = 8192,
) -> ExtractionOutcome:
    """Run the full prompt -> completion -> repair -> parse chain for one case.

    Unparseable completions are re-prompted along REPROMPT_TEMPERATURES;
    when every attempt fails (or the gateway errors out) the case is
    quarantined with the raw text digest and the error trail.
    """
    opinion, truncated = truncate_at_paragraph(case.opinion_text, budget)
    prompt = prompts.render(prompts.KG_EXTRACTION, {"case_opinion": opinion})
    errors: list[str] = []
    raw_text = ""
    for temperature in REPROMPT_TEMPERATURES:
        request = LlmRequest(
            prompt=prompt, model_tag=model_tag, temperature=temperature, max_output=max_output
        )
        try:
            response = gateway.complete(request)
        except PipelineError as exc:
            errors.append(f"{exc.code}: {exc}")
            break
        raw_text = response.text
        try:
            candidate = repair_json(raw_text)
            obj = json.loads(candidate)
            if not isinstance(obj, dict):
                raise UnparseableDocument("top-level JSON value is not an object")
        except (NoObjectFound, UnparseableDocument, json.JSONDecodeError) as exc:
            errors.append(f"attempt t={temperature}: {exc}")
            continue
        obj = ensure_case_entity(obj, case.case_id)
        graph, report = parse_graph_obj(obj, case.case_id, mode="lenient")
        graph = _backfill_empty_labels(graph)
        status = STATUS_OK if report.is_valid_strict else STATUS_OK_WITH_DROPS
        return ExtractionOutcome(
            case_id=case.case_id,
            status=status,
            graph=graph,
            report=report,
            raw_digest=sha256_text(raw_text),
            truncated=truncated,
            errors=tuple(errors),
            raw_text=raw_text,
        )
    return ExtractionOutcome(
        case_id=case.case_id,
        status=STATUS_QUARANTINED,
        graph=None,
        report=ValidationReport(),
        raw_digest=sha256_text(raw_text),
        truncated=truncated,
        errors=tuple(errors),
        raw_text=raw_text,
    )


def graph_path(out_dir: Path | str, case_id: str) -> Path:
    return Path(out_dir) / f"{case_id}.kg.json"


def persist_outcome(outcome: ExtractionOutcome, out_dir: Path | str) -> None:
    out_dir = Path(out_dir)
    if outcome.graph is not None:
        atomic_write_text(graph_path(out_dir, outcome.case_id), serialize_graph(outcome.graph) + "\n")
        if outcome.status == STATUS_OK_WITH_DROPS:
            atomic_write_json(
                out_dir / f"{outcome.case_id}.report.json", outcome.report.to_json_obj()
            )
    else:
        qdir = out_dir / "quarantine"
        atomic_write_text(qdir / f"{outcome.case_id}.raw.txt", outcome.raw_text)
        atomic_write_json(
            qdir / f"{outcome.case_id}.errors.json",
            {"case_id": outcome.case_id, "raw_digest": outcome.raw_digest, "errors": list(outcome.errors)},
        )


def run_extraction(
    corpus: CaseCorpus,
    gateway: Gateway,
    out_dir: Path | str,
    model_tag: str = "default",
    budget: int = DEFAULT_OPINION_BUDGET,
    jobs: int = 1,
) -> dict:
    """Extract every case in the corpus into out_dir.

    Idempotent: cases whose graph file already exists are skipped without a
    gateway call and counted as ok (they were persisted as ok/ok_with_drops,
    with drops already applied). Summary counts satisfy
    ok + ok_with_drops + quarantined == |corpus|.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {STATUS_OK: 0, STATUS_OK_WITH_DROPS: 0, STATUS_QUARANTINED: 0, "skipped_existing": 0}

    pending: list[CaseDocument] = []
    for case in corpus.cases:
        if graph_path(out_dir, case.case_id).exists():
            summary[STATUS_OK] += 1
            summary["skipped_existing"] += 1
        else:
            pending.append(case)

    def work(case: CaseDocument) -> str:
        outcome = extract_case_graph(case, gateway, model_tag=model_tag, budget=budget)
        persist_outcome(outcome, out_dir)
        return outcome.status

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            statuses = list(pool.map(work, pending))
    else:
        statuses = [work(case) for case in pending]
    for status in statuses:
        summary[status] += 1
    return summary


def load_graph_file(path: Path | str) -> IracGraph:
    """Read one persisted <case_id>.kg.json file back into a graph."""
    path = Path(path)
    case_id = path.name.removesuffix(".kg.json")
    text = path.read_text(encoding="utf-8")
    graph, report = parse_graph_obj(json.loads(text), case_id, mode="lenient")
    if not report.is_valid_strict:
        log.warning("persisted graph %s re-parsed with %d violations", path, len(report.violations))
    return graph


def load_graph_dir(kg_dir: Path | str) -> list[IracGraph]:
    """Load every *.kg.json in a directory, sorted by case id."""
    return [load_graph_file(p) for p in sorted(Path(kg_dir).glob("*.kg.json"))]
