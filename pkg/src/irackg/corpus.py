"""Corpus ingest: load case opinions from disk, index them, and draw
deterministic per-jurisdiction samples."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

from .errors import PipelineError
from .util import stable_rank

log = logging.getLogger(__name__)

UNKNOWN_JURISDICTION = "unknown"


class MissingRoot(PipelineError):
    code = "missing_root"


class EmptyCorpus(PipelineError):
    code = "empty_corpus"


class DuplicateCaseId(PipelineError):
    code = "duplicate_case_id"


class CaseNotFound(PipelineError):
    code = "case_not_found"


class BadManifest(PipelineError):
    code = "bad_manifest"


@dataclass(frozen=True)
class CaseDocument:
    case_id: str
    jurisdiction: str
    opinion_text: str
    source_path: str


@dataclass(frozen=True)
class SkippedFile:
    path: str
    reason: str


@dataclass(frozen=True)
class CaseCorpus:
    cases: tuple[CaseDocument, ...]
    skipped: tuple[SkippedFile, ...] = field(default=())

    @cached_property
    def index(self) -> dict[str, int]:
        return {c.case_id: i for i, c in enumerate(self.cases)}

    def __len__(self) -> int:
        return len(self.cases)

    def __iter__(self):
        return iter(self.cases)

    def get(self, case_id: str) -> CaseDocument:
        pos = self.index.get(case_id)
        if pos is None:
            raise CaseNotFound(f"no case with id {case_id!r}")
        return self.cases[pos]

    def jurisdictions(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for c in self.cases:
            counts[c.jurisdiction] = counts.get(c.jurisdiction, 0) + 1
        return counts


def get_case(corpus: CaseCorpus, case_id: str) -> CaseDocument:
    """Lookup by exact (case-sensitive) id; raises CaseNotFound."""
    return corpus.get(case_id)


def load_manifest(path: Path | str) -> list[dict]:
    """Load a manifest: JSON array of {"file", "case_id", "jurisdiction"}."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise BadManifest(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(data, list):
        raise BadManifest(f"manifest {path} must be a JSON array")
    for i, entry in enumerate(data):
        if not isinstance(entry, dict) or "file" not in entry:
            raise BadManifest(f"manifest entry {i} must be an object with a 'file' key")
    return data


def ingest_cases(
    root: Path | str,
    manifest: Path | str | None = None,
    *,
    restrict_to_manifest: bool = False,
) -> CaseCorpus:
    """Build a corpus from every *.txt file under root (recursive).

    The optional manifest supplies case_id and jurisdiction per file (matched
    by relative path, falling back to bare filename); unmatched files get
    case_id = filename stem and jurisdiction "unknown". Files that fail UTF-8
    decoding or are empty after trimming are skipped and reported. Duplicate
    case ids are a hard error: silent renames would corrupt review provenance.
    """
    root = Path(root)
    if not root.is_dir():
        raise MissingRoot(f"corpus root {root} does not exist or is not a directory")

    by_relpath: dict[str, dict] = {}
    by_name: dict[str, dict] = {}
    if manifest is not None:
        for entry in load_manifest(manifest):
            by_relpath[str(entry["file"])] = entry
            by_name[Path(str(entry["file"])).name] = entry

    cases: list[CaseDocument] = []
    skipped: list[SkippedFile] = []
    seen_ids: dict[str, str] = {}
    for path in sorted(root.rglob("*.txt")):
        rel = path.relative_to(root).as_posix()
        entry = by_relpath.get(rel) or by_name.get(path.name)
        if restrict_to_manifest and entry is None:
            continue
        try:
            text = path.read_text(encoding="utf-8")
        except UnicodeDecodeError:
            skipped.append(SkippedFile(path=str(path), reason="not valid UTF-8"))
            continue
        except OSError as exc:
            skipped.append(SkippedFile(path=str(path), reason=f"unreadable: {exc}"))
            continue
        if not text.strip():
            skipped.append(SkippedFile(path=str(path), reason="empty opinion text"))
            continue
        case_id = str(entry.get("case_id") or path.stem) if entry else path.stem
        jurisdiction = str(entry.get("jurisdiction") or UNKNOWN_JURISDICTION) if entry else UNKNOWN_JURISDICTION
        if case_id in seen_ids:
            raise DuplicateCaseId(
                f"case id {case_id!r} assigned to both {seen_ids[case_id]} and {path}"
            )
        seen_ids[case_id] = str(path)
        cases.append(
            CaseDocument(
                case_id=case_id,
                jurisdiction=jurisdiction,
                opinion_text=text,
                source_path=str(path),
            )
        )

    if not cases:
        raise EmptyCorpus(f"no readable cases under {root}")
    if skipped:
        for s in skipped:
            log.warning("skipped %s: %s", s.path, s.reason)
    return CaseCorpus(cases=tuple(cases), skipped=tuple(skipped))


def sample_by_jurisdiction(corpus: CaseCorpus, per_jurisdiction: int, seed: int) -> CaseCorpus:
    """Select up to per_jurisdiction cases from each jurisdiction, uniformly
    without replacement, by seeded SHA-256 ranking of case ids.

    The draw depends only on (corpus contents, seed): re-runs are identical
    across machines, and strata with fewer cases contribute everything they
    have. Corpus order is preserved in the result.
    """
    if per_jurisdiction < 1:
        raise ValueError("per_jurisdiction must be >= 1")
    strata: dict[str, list[str]] = {}
    for c in corpus.cases:
        strata.setdefault(c.jurisdiction, []).append(c.case_id)
    selected: set[str] = set()
    for ids in strata.values():
        ranked = sorted(ids, key=lambda cid: (stable_rank(seed, cid), cid))
        selected.update(ranked[:per_jurisdiction])
    picked = tuple(c for c in corpus.cases if c.case_id in selected)
    return CaseCorpus(cases=picked, skipped=())
