from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import pytest

from helpers import (
    FIXTURE_A_OPINION,
    fixture_a_graph,
    fixture_a_wire_text,
    judge_completion,
    sft_completion,
)
from irackg.corpus import ingest_cases
from irackg.extraction import render_kg_prompt
from irackg.gateway import LlmRequest, LlmResponse, record_fixture
from irackg.pref import candidate_rejected, render_judge_prompt
from irackg.query import applicable_rules, get_related_facts
from irackg.sft import render_sft_prompt


@dataclass
class ReplayEnv:
    corpus_root: Path
    fixtures_dir: Path
    case_id: str = "fixture_a"


def build_replay_env(
    corpus_root: Path,
    fixtures_dir: Path,
    judge_applicability: str = "No",
    extraction_text: str | None = None,
    sft_text: str | None = None,
    judge_text: str | None = None,
) -> ReplayEnv:
    """Materialize the one-case corpus plus replay fixtures for all three
    pipeline stages, keyed by the exact prompts the pipeline renders."""
    corpus_root.mkdir(parents=True, exist_ok=True)
    (corpus_root / "fixture_a.txt").write_text(FIXTURE_A_OPINION, encoding="utf-8")
    corpus = ingest_cases(corpus_root)
    case = corpus.get("fixture_a")
    graph = fixture_a_graph()

    kg_prompt = render_kg_prompt(case)
    record_fixture(
        LlmRequest(prompt=kg_prompt, temperature=0.0, max_output=8192),
        LlmResponse(text=extraction_text or fixture_a_wire_text(), provenance="live"),
        fixtures_dir,
    )

    facts = get_related_facts(graph, "I1")
    issue = graph.entity_by_id("I1")
    chosen = applicable_rules(graph, "I1")
    sft_prompt = render_sft_prompt(facts, issue, chosen)
    record_fixture(
        LlmRequest(prompt=sft_prompt),
        LlmResponse(
            text=sft_text
            or sft_completion([f.label for f in facts], issue.label, [r.label for r in chosen]),
            provenance="live",
        ),
        fixtures_dir,
    )

    candidates = candidate_rejected(graph, "I1")
    judge_prompt = render_judge_prompt(facts, issue, chosen, candidates)
    record_fixture(
        LlmRequest(prompt=judge_prompt),
        LlmResponse(
            text=judge_text
            or judge_completion(
                [
                    (
                        c.label,
                        judge_applicability,
                        "Nothing in the facts suggests the customer knowingly accepted the risk.",
                    )
                    for c in candidates
                ]
            ),
            provenance="live",
        ),
        fixtures_dir,
    )
    return ReplayEnv(corpus_root=corpus_root, fixtures_dir=fixtures_dir)


@pytest.fixture
def replay_env(tmp_path: Path) -> ReplayEnv:
    return build_replay_env(tmp_path / "corpus", tmp_path / "fixtures")
