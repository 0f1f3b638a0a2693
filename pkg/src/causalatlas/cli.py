"""Command-line surface: build, intervene, diff, synth, score, serve.

Exit codes are stable contracts: 0 success (or no drift), 1 drift found,
2 usage error, 3 pipeline failure.
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path
from typing import Optional

from .atlas import WorldModelBundle, build_atlas, diff_worlds, persist_state
from .core import (
    EpisodeStore,
    canonical_json,
    ingest_claims,
    ingest_episodes,
    ingest_evidence,
    load_cover_spec,
    sha256_file,
)
from .export import export_bundle, import_atlas, import_bundle
from .intervene import InterventionSpec, run_grounded_intervention
from .pipeline import BuildInputs, RunConfig, build_world, default_focus
from .psr import SmoothingConfig
from .sheaf import ToleranceConfig
from .synthlab import RegimeSpec, generate_corpus, score_recovery

EXIT_OK = 0
EXIT_DRIFT = 1
EXIT_USAGE = 2
EXIT_PIPELINE = 3


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause


def _stage(name: str):
    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, StageError):
                raise StageError(name, exc) from exc
            return False

    return _Ctx()


# ---------------------------------------------------------------------------
# Shared build plumbing
# ---------------------------------------------------------------------------


def store_to_jsonl(store: EpisodeStore) -> str:
    lines = []
    for ep in store.episodes:
        lines.append(
            canonical_json(
                {
                    "id": ep.id,
                    "source_doc": ep.source_doc,
                    "events": [
                        {
                            "actor": e.actor,
                            "action": e.action,
                            "observation": e.observation,
                            "relation": e.relation,
                            "polarity": e.polarity,
                            "time_index": e.time_index,
                            "provenance": e.provenance,
                        }
                        for e in ep.events
                    ],
                }
            )
        )
    return "\n".join(lines) + "\n"


def evidence_to_jsonl(store: EpisodeStore) -> str:
    lines = []
    for unit in sorted(store.evidence.values(), key=lambda u: u.id):
        lines.append(canonical_json(unit.to_dict()))
    return "\n".join(lines) + "\n"


def _snapshot_inputs(out_dir: Path, store: EpisodeStore, cover_data: dict, config: RunConfig) -> None:
    inputs = out_dir / "inputs"
    inputs.mkdir(parents=True, exist_ok=True)
    (inputs / "episodes.jsonl").write_text(store_to_jsonl(store), encoding="utf-8")
    (inputs / "evidence.jsonl").write_text(evidence_to_jsonl(store), encoding="utf-8")
    (inputs / "cover.json").write_text(canonical_json(cover_data), encoding="utf-8")
    (inputs / "config.json").write_text(
        canonical_json({**config.semantic_dict(), "figures": config.figures}), encoding="utf-8"
    )


def run_build(config: RunConfig) -> Path:
    """Full pipeline run into a fresh run directory; partial outputs are
    removed on any stage failure."""
    out_dir = Path(config.output_dir)
    created = not out_dir.exists()
    try:
        with _stage("ingest"):
            evidence = ingest_evidence(config.evidence_path) if config.evidence_path else None
            store, _ = ingest_episodes(config.episodes_path, config.episodes_format, evidence)
            claims = None
            if config.claims_path:
                claims, _ = ingest_claims(config.claims_path)
            cover_data = load_cover_spec(config.cover_path) if config.cover_path else {}
            input_hashes = {Path(config.episodes_path).name: sha256_file(config.episodes_path)}
            for p in (config.evidence_path, config.claims_path, config.cover_path):
                if p:
                    input_hashes[Path(p).name] = sha256_file(p)

        with _stage("build"):
            inputs = BuildInputs(
                store=store, cover_data=cover_data, claims=claims, input_hashes=input_hashes
            )
            bundle = build_world(inputs, config)

        with _stage("atlas"):
            atlas = build_atlas(
                bundle,
                partition_rules=config.partition.get("rules", []),
                query_terms=config.partition.get("query_terms", []),
                spine_params=config.spine,
            )
            focus = config.focus or default_focus(bundle)
            state = persist_state(bundle, focus)

        with _stage("export"):
            export_bundle(bundle, atlas, state, out_dir, figures=config.figures)
            _snapshot_inputs(out_dir, store, cover_data, config)
    except StageError:
        if out_dir.exists() and created:
            shutil.rmtree(out_dir, ignore_errors=True)
        raise

    s = bundle.summary()
    print(
        f"run {bundle.run_id}: {s['episodes']} episodes, {s['events']} events, "
        f"{s['contexts']} contexts, {s['psrs']} local PSRs, "
        f"{s['compatible_restrictions'] + s['divergent_restrictions']} restriction checks, "
        f"{s['compatible_overlaps'] + s['tense_overlaps']} gluing overlaps, "
        f"mean glue loss {s['mean_glue_loss']:.4f}"
    )
    print(f"wrote {out_dir}")
    return out_dir


def load_run_inputs(run_dir: Path) -> tuple[EpisodeStore, dict, RunConfig]:
    """Reload the snapshotted inputs of an existing run for a rebuild."""
    inputs = run_dir / "inputs"
    if not inputs.exists():
        raise FileNotFoundError(f"run has no inputs snapshot: {run_dir}")
    evidence = ingest_evidence(inputs / "evidence.jsonl")
    store, _ = ingest_episodes(inputs / "episodes.jsonl", "jsonl", evidence)
    with open(inputs / "cover.json", "r", encoding="utf-8") as f:
        cover_data = json.load(f)
    with open(inputs / "config.json", "r", encoding="utf-8") as f:
        raw = json.load(f)
    config = RunConfig(
        episodes_path=str(inputs / "episodes.jsonl"),
        output_dir="",
        smoothing=SmoothingConfig(**raw.get("smoothing", {})),
        tolerances=ToleranceConfig(**raw.get("tolerances", {})),
        spine=raw.get("spine", {"min_support": 2, "max_paths": 8}),
        partition=raw.get("partition", {"query_terms": [], "rules": []}),
        focus=raw.get("focus"),
        max_contexts=raw.get("max_contexts"),
        figures=bool(raw.get("figures", True)),
    )
    return store, cover_data, config


def run_intervention(
    base_dir: Path,
    spec: InterventionSpec,
    out_dir: Optional[Path] = None,
    spec_base: Path = Path("."),
) -> tuple[Path, WorldModelBundle]:
    """Evaluate an intervention against a base run: substrate, rewrites,
    rebuild, and a drift diff against the baseline; never mutates the base."""
    with _stage("load-base"):
        baseline = import_bundle(base_dir)
        store, cover_data, config = load_run_inputs(base_dir)

    with _stage("intervene"):
        bundle, substrate, modified = run_grounded_intervention(
            store, cover_data, config, spec, base_dir=spec_base, parent_run=baseline.run_id
        )

    with _stage("atlas"):
        atlas = build_atlas(
            bundle,
            partition_rules=config.partition.get("rules", []),
            query_terms=config.partition.get("query_terms", []),
            spine_params=config.spine,
        )
        focus = config.focus or default_focus(bundle)
        state = persist_state(bundle, focus)
        diff = diff_worlds(baseline, bundle, config.tolerances.drift_eps)

    if out_dir is None:
        out_dir = base_dir.parent / f"{base_dir.name}-do-{bundle.run_id}"
    with _stage("export"):
        export_bundle(bundle, atlas, state, out_dir, diff=diff.to_dict(), figures=config.figures)
        _snapshot_inputs(out_dir, store, cover_data, config)

    print(f"intervention rebuilt run {bundle.run_id}: {modified} events modified")
    if substrate is not None:
        print(
            f"substrate {substrate.kind}: baseline {substrate.baseline:.6g} -> "
            f"counterfactual {substrate.counterfactual:.6g} "
            f"(effect {substrate.effect:+.6g}, {100 * substrate.relative_effect:+.4g}%)"
        )
    print(f"wrote {out_dir}")
    return out_dir, bundle


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_build(args) -> int:
    try:
        config = RunConfig.from_file(args.config)
    except (OSError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        run_build(config)
    except StageError as exc:
        print(f"build failed at {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    return EXIT_OK


def cmd_intervene(args) -> int:
    base_dir = Path(args.base)
    if not (base_dir / "bundle.json").exists():
        print(f"usage error: no bundle at {base_dir}", file=sys.stderr)
        return EXIT_USAGE
    try:
        spec = InterventionSpec.from_file(args.spec)
    except (OSError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        run_intervention(
            base_dir,
            spec,
            Path(args.out) if args.out else None,
            spec_base=Path(args.spec).parent,
        )
    except StageError as exc:
        print(f"intervention failed at {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    return EXIT_OK


def cmd_diff(args) -> int:
    for run in (args.run_a, args.run_b):
        if not (Path(run) / "bundle.json").exists():
            print(f"usage error: no bundle at {run}", file=sys.stderr)
            return EXIT_USAGE
    try:
        old = import_bundle(args.run_a)
        new = import_bundle(args.run_b)
        report = diff_worlds(old, new, args.eps)
    except Exception as exc:
        print(f"diff failed: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    payload = report.to_dict()
    if args.out:
        Path(args.out).write_text(canonical_json(payload), encoding="utf-8")
    print(
        f"drift: {len(report.textual)} textual, {len(report.causal)} causal, "
        f"{len(report.predictive)} predictive, {len(report.topological)} topological"
    )
    return EXIT_OK if report.empty else EXIT_DRIFT


def cmd_synth(args) -> int:
    try:
        spec = RegimeSpec.from_file(args.spec)
    except (OSError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    corpus = generate_corpus(spec, args.out)
    print(f"wrote {corpus.episodes_path.parent}")
    return EXIT_OK


def cmd_score(args) -> int:
    run_dir = Path(args.run)
    if not (run_dir / "bundle.json").exists():
        print(f"usage error: no bundle at {run_dir}", file=sys.stderr)
        return EXIT_USAGE
    try:
        spec = RegimeSpec.from_file(args.spec)
    except (OSError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        bundle = import_bundle(run_dir)
        atlas = import_atlas(run_dir)
        diff = None
        if args.baseline_run:
            baseline = import_bundle(args.baseline_run)
            diff = diff_worlds(baseline, bundle)
        score = score_recovery(bundle, spec, diff=diff, spine=atlas.spine)
    except Exception as exc:
        print(f"score failed: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    print(canonical_json(score.to_dict()))
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import serve

    try:
        serve(args.runs, args.port)
    except OSError as exc:
        print(f"serve failed: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causalatlas",
        description="Build, probe, and navigate cover-indexed causal world models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="run the full pipeline into a run directory")
    p.add_argument("--config", required=True, help="run config JSON")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("intervene", help="rebuild a counterfactual run from a base run")
    p.add_argument("--base", required=True, help="baseline run directory")
    p.add_argument("--spec", required=True, help="intervention spec JSON")
    p.add_argument("--out", help="output run directory")
    p.set_defaults(func=cmd_intervene)

    p = sub.add_parser("diff", help="drift report between two runs")
    p.add_argument("run_a")
    p.add_argument("run_b")
    p.add_argument("--eps", type=float, default=None, help="predictive drift tolerance")
    p.add_argument("--out", help="write the report JSON here")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("synth", help="generate a synthetic corpus with planted ground truth")
    p.add_argument("--spec", required=True, help="regime spec JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("score", help="score recovery of planted structure")
    p.add_argument("--run", required=True, help="run directory built from a synthetic corpus")
    p.add_argument("--spec", required=True, help="regime spec JSON")
    p.add_argument("--baseline-run", help="baseline run for the drift channel")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("serve", help="serve run directories over HTTP")
    p.add_argument("--runs", required=True, help="directory containing run directories")
    p.add_argument("--port", type=int, default=8787)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
