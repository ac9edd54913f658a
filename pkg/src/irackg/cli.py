"""Command-line entry point.

Subcommands compose via directories so partial re-runs are cheap: ingest and
sample prepare manifests, extract fills a KG directory, gen-sft/gen-pref
turn KG directories into JSONL datasets, split/stats post-process them, and
review-serve exposes the review HTTP API.

Every data-producing run writes a run_manifest.json (effective config plus
input and output digests, no timestamps) next to its outputs, so identical
inputs, fixtures, and seeds yield byte-identical manifests.

Exit codes: 0 success, 1 data error (machine-readable JSON on stderr),
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import datasets, extraction, pref, sft
from .corpus import ingest_cases, sample_by_jurisdiction
from .errors import PipelineError
from .gateway import Gateway, HttpBackend, ReplayBackend
from .util import atomic_write_json, sha256_file, sha256_text

RUN_MANIFEST = "run_manifest.json"


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise PipelineError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise PipelineError(f"config {path} must be a JSON object")
    return cfg


def _opt(args: argparse.Namespace, cfg: dict, name: str, default=None):
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in cfg:
        return cfg[name]
    return default


def _combined_digest(pairs: list[tuple[str, str]]) -> str:
    return sha256_text(json.dumps(sorted(pairs)))


def _digest_tree(root: Path, pattern: str = "**/*") -> str:
    pairs = [
        (p.relative_to(root).as_posix(), sha256_file(p))
        for p in sorted(root.glob(pattern))
        if p.is_file() and p.name != RUN_MANIFEST
    ]
    return _combined_digest(pairs)


def write_run_manifest(out_dir: Path, command: str, config: dict, inputs: dict) -> None:
    outputs = {
        p.relative_to(out_dir).as_posix(): sha256_file(p)
        for p in sorted(out_dir.rglob("*"))
        if p.is_file() and p.name != RUN_MANIFEST
    }
    manifest = {"command": command, "config": config, "inputs": inputs, "outputs": outputs}
    atomic_write_json(out_dir / RUN_MANIFEST, manifest)


def _emit(obj: dict) -> None:
    print(json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True))


def _build_gateway(args: argparse.Namespace, cfg: dict, parser: argparse.ArgumentParser) -> tuple[Gateway, dict]:
    kind = _opt(args, cfg, "gateway")
    if kind not in ("replay", "live"):
        parser.error("--gateway must be 'replay' or 'live'")
    cache = _opt(args, cfg, "cache")
    max_in_flight = int(_opt(args, cfg, "max_in_flight", 4))
    # manifests record digests and logical settings, never machine paths
    if kind == "replay":
        fixtures = _opt(args, cfg, "fixtures")
        if not fixtures:
            parser.error("--gateway replay requires --fixtures DIR")
        backend = ReplayBackend(fixtures)
        config = {"gateway": "replay"}
    else:
        endpoint = _opt(args, cfg, "endpoint")
        if not endpoint:
            parser.error("--gateway live requires --endpoint URL")
        api_key_env = _opt(args, cfg, "api_key_env", "LLM_API_KEY")
        backend = HttpBackend(endpoint, api_key_env=api_key_env)
        config = {"gateway": "live", "endpoint": endpoint, "api_key_env": api_key_env}
    config["cached"] = bool(cache)
    config["max_in_flight"] = max_in_flight
    gateway = Gateway(backend, cache_dir=cache, max_in_flight=max_in_flight)
    return gateway, config


def _corpus_inputs(root: Path, manifest: str | None) -> dict:
    pairs = [
        (p.relative_to(root).as_posix(), sha256_file(p)) for p in sorted(root.rglob("*.txt"))
    ]
    inputs = {"corpus_digest": _combined_digest(pairs)}
    if manifest:
        inputs["manifest_digest"] = sha256_file(manifest)
    return inputs


def cmd_ingest(args, cfg, parser) -> int:
    root = Path(_opt(args, cfg, "root") or parser.error("--root is required"))
    manifest = _opt(args, cfg, "manifest")
    out = Path(_opt(args, cfg, "out") or parser.error("--out is required"))
    corpus = ingest_cases(root, manifest)
    out.mkdir(parents=True, exist_ok=True)
    listing = {
        "cases": [
            {
                "case_id": c.case_id,
                "jurisdiction": c.jurisdiction,
                "file": Path(c.source_path).relative_to(root).as_posix(),
                "sha256": sha256_text(c.opinion_text),
            }
            for c in corpus.cases
        ],
        "skipped": [{"path": s.path, "reason": s.reason} for s in corpus.skipped],
    }
    atomic_write_json(out / "corpus.json", listing)
    config = {"with_manifest": manifest is not None}
    write_run_manifest(out, "ingest", config, _corpus_inputs(root, manifest))
    _emit({"cases": len(corpus.cases), "skipped": len(corpus.skipped)})
    return 0


def cmd_sample(args, cfg, parser) -> int:
    root = Path(_opt(args, cfg, "root") or parser.error("--root is required"))
    manifest = _opt(args, cfg, "manifest")
    out = Path(_opt(args, cfg, "out") or parser.error("--out is required"))
    per_jurisdiction = int(_opt(args, cfg, "per_jurisdiction") or parser.error("--per-jurisdiction is required"))
    seed = int(_opt(args, cfg, "seed", 0))
    corpus = ingest_cases(root, manifest)
    sampled = sample_by_jurisdiction(corpus, per_jurisdiction, seed)
    out.mkdir(parents=True, exist_ok=True)
    entries = [
        {
            "file": Path(c.source_path).relative_to(root).as_posix(),
            "case_id": c.case_id,
            "jurisdiction": c.jurisdiction,
        }
        for c in sampled.cases
    ]
    atomic_write_json(out / "sampled_manifest.json", entries)
    config = {"per_jurisdiction": per_jurisdiction, "seed": seed}
    write_run_manifest(out, "sample", config, _corpus_inputs(root, manifest))
    _emit({"sampled": len(sampled.cases), "strata": sampled.jurisdictions()})
    return 0


def cmd_extract(args, cfg, parser) -> int:
    root = Path(_opt(args, cfg, "root") or parser.error("--root is required"))
    manifest = _opt(args, cfg, "manifest")
    out = Path(_opt(args, cfg, "out") or parser.error("--out is required"))
    budget = int(_opt(args, cfg, "budget", extraction.DEFAULT_OPINION_BUDGET))
    jobs = int(_opt(args, cfg, "jobs", 1))
    model = _opt(args, cfg, "model", "default")
    only_manifest = bool(_opt(args, cfg, "only_manifest", False))
    gateway, gw_config = _build_gateway(args, cfg, parser)
    corpus = ingest_cases(root, manifest, restrict_to_manifest=only_manifest)
    summary = extraction.run_extraction(
        corpus, gateway, out, model_tag=model, budget=budget, jobs=jobs
    )
    config = {"model": model, "budget": budget, "only_manifest": only_manifest, **gw_config}
    write_run_manifest(out, "extract", config, _corpus_inputs(root, manifest))
    _emit(summary)
    return 0


def cmd_validate(args, cfg, parser) -> int:
    kg_dir = Path(_opt(args, cfg, "kg_dir") or parser.error("--kg-dir is required"))
    strict = bool(_opt(args, cfg, "strict", False))
    from .kg import parse_graph_json

    files = sorted(kg_dir.glob("*.kg.json"))
    clean = 0
    findings = []
    for path in files:
        case_id = path.name.removesuffix(".kg.json")
        _, report = parse_graph_json(path.read_text(encoding="utf-8"), case_id, mode="lenient")
        if report.is_valid_strict:
            clean += 1
        else:
            findings.append({"case_id": case_id, **report.to_json_obj()})
    _emit({"files": len(files), "clean": clean, "with_violations": len(findings), "findings": findings})
    if strict and findings:
        return 1
    return 0


def _kg_inputs(kg_dir: Path) -> dict:
    return {"kg_digest": _digest_tree(kg_dir, "*.kg.json")}


def cmd_gen_sft(args, cfg, parser) -> int:
    kg_dir = Path(_opt(args, cfg, "kg_dir") or parser.error("--kg-dir is required"))
    out = Path(_opt(args, cfg, "out") or parser.error("--out is required"))
    model = _opt(args, cfg, "model", "default")
    gateway, gw_config = _build_gateway(args, cfg, parser)
    graphs = extraction.load_graph_dir(kg_dir)
    summary = sft.run_sft_generation(graphs, gateway, out, model_tag=model)
    write_run_manifest(out, "gen-sft", {"model": model, **gw_config}, _kg_inputs(kg_dir))
    _emit(summary)
    return 0


def cmd_gen_pref(args, cfg, parser) -> int:
    kg_dir = Path(_opt(args, cfg, "kg_dir") or parser.error("--kg-dir is required"))
    out = Path(_opt(args, cfg, "out") or parser.error("--out is required"))
    model = _opt(args, cfg, "model", "default")
    pairwise = bool(_opt(args, cfg, "pairwise", False))
    gateway, gw_config = _build_gateway(args, cfg, parser)
    graphs = extraction.load_graph_dir(kg_dir)
    summary = pref.run_pref_generation(graphs, gateway, out, model_tag=model, pairwise=pairwise)
    config = {"model": model, "pairwise": pairwise, **gw_config}
    write_run_manifest(out, "gen-pref", config, _kg_inputs(kg_dir))
    _emit(summary)
    return 0


def _parse_ratio(text: str, parser) -> tuple[int, int]:
    try:
        train_s, val_s = text.split(":")
        return int(train_s), int(val_s)
    except ValueError:
        parser.error(f"--ratio must look like '10:1', got {text!r}")
        raise AssertionError  # unreachable


def cmd_split(args, cfg, parser) -> int:
    input_path = Path(_opt(args, cfg, "input") or parser.error("--input is required"))
    out = Path(_opt(args, cfg, "out") or parser.error("--out is required"))
    ratio = _parse_ratio(str(_opt(args, cfg, "ratio", "10:1")), parser)
    seed = int(_opt(args, cfg, "seed", 0))
    records = datasets.read_jsonl(input_path)
    spec = datasets.SplitSpec(train_parts=ratio[0], val_parts=ratio[1], seed=seed)
    train, val = datasets.split_train_val(records, spec)
    out.mkdir(parents=True, exist_ok=True)
    datasets.write_jsonl(train, out / "train.jsonl")
    datasets.write_jsonl(val, out / "val.jsonl")
    config = {"ratio": f"{ratio[0]}:{ratio[1]}", "seed": seed}
    inputs = {"input_digest": sha256_file(input_path)}
    write_run_manifest(out, "split", config, inputs)
    _emit(
        {
            "train_records": len(train),
            "val_records": len(val),
            "train_cases": len({datasets.record_case_id(r) for r in train}),
            "val_cases": len({datasets.record_case_id(r) for r in val}),
        }
    )
    return 0


def cmd_stats(args, cfg, parser) -> int:
    input_path = Path(_opt(args, cfg, "input") or parser.error("--input is required"))
    out = _opt(args, cfg, "out")
    stats = datasets.dataset_stats(datasets.read_jsonl(input_path))
    if out:
        atomic_write_json(Path(out), stats)
    _emit(stats)
    return 0


def cmd_review_serve(args, cfg, parser) -> int:
    import os

    import uvicorn

    from .review.http import build_app
    from .review.service import ReviewStore

    kg_dir = Path(_opt(args, cfg, "kg_dir") or parser.error("--kg-dir is required"))
    host = _opt(args, cfg, "host", "127.0.0.1")
    port = int(_opt(args, cfg, "port", 8008))
    token_env = _opt(args, cfg, "token_env")
    data_dir = _opt(args, cfg, "data_dir")
    ui_dir = _opt(args, cfg, "ui_dir")
    sft_path = _opt(args, cfg, "sft")
    token = os.environ.get(token_env) if token_env else None
    graphs = extraction.load_graph_dir(kg_dir)
    records = datasets.read_jsonl(sft_path) if sft_path else []
    store = ReviewStore(data_dir)
    app = build_app(store, graphs, records=records, auth_token=token, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return 0


def _add_gateway_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--gateway", choices=["replay", "live"], help="completion backend")
    sp.add_argument("--fixtures", help="replay fixture directory")
    sp.add_argument("--endpoint", help="live HTTPS completion endpoint")
    sp.add_argument("--api-key-env", dest="api_key_env", help="env var holding the API key")
    sp.add_argument("--cache", help="response cache directory")
    sp.add_argument("--max-in-flight", dest="max_in_flight", type=int, help="live request cap")
    sp.add_argument("--model", help="model tag sent to the backend")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irackg", description=__doc__)
    parser.add_argument("--config", help="JSON config file; flags override its values")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("ingest", help="index a corpus directory")
    sp.add_argument("--root", help="corpus root (searched for **/*.txt)")
    sp.add_argument("--manifest", help="JSON manifest with case_id/jurisdiction per file")
    sp.add_argument("--out", help="output directory")
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("sample", help="stratified per-jurisdiction sample")
    sp.add_argument("--root")
    sp.add_argument("--manifest")
    sp.add_argument("--per-jurisdiction", dest="per_jurisdiction", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("extract", help="extract one graph per case")
    sp.add_argument("--root")
    sp.add_argument("--manifest")
    sp.add_argument("--only-manifest", dest="only_manifest", action="store_true", default=None)
    sp.add_argument("--out")
    sp.add_argument("--budget", type=int, help="opinion character budget")
    sp.add_argument("--jobs", type=int)
    _add_gateway_flags(sp)
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("validate", help="re-validate persisted graphs")
    sp.add_argument("--kg-dir", dest="kg_dir")
    sp.add_argument("--strict", action="store_true", default=None)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("gen-sft", help="generate the instruction-tuning dataset")
    sp.add_argument("--kg-dir", dest="kg_dir")
    sp.add_argument("--out")
    _add_gateway_flags(sp)
    sp.set_defaults(func=cmd_gen_sft)

    sp = sub.add_parser("gen-pref", help="generate the preference dataset")
    sp.add_argument("--kg-dir", dest="kg_dir")
    sp.add_argument("--out")
    sp.add_argument("--pairwise", action="store_true", default=None)
    _add_gateway_flags(sp)
    sp.set_defaults(func=cmd_gen_pref)

    sp = sub.add_parser("split", help="case-level train/validation split")
    sp.add_argument("--input")
    sp.add_argument("--ratio", help="train:val parts, e.g. 10:1")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("stats", help="dataset statistics")
    sp.add_argument("--input")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("review-serve", help="run the SME review HTTP service")
    sp.add_argument("--kg-dir", dest="kg_dir")
    sp.add_argument("--host")
    sp.add_argument("--port", type=int)
    sp.add_argument("--token-env", dest="token_env", help="env var holding the shared bearer token")
    sp.add_argument("--data-dir", dest="data_dir", help="label persistence directory")
    sp.add_argument("--ui-dir", dest="ui_dir", help="static review UI bundle to serve at /")
    sp.add_argument("--sft", help="sft.jsonl with generated records to review")
    sp.set_defaults(func=cmd_review_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        return args.func(args, cfg, parser)
    except PipelineError as exc:
        print(json.dumps(exc.to_json_obj()), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
