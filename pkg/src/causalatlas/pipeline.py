"""End-to-end world-model construction: store -> contexts -> site -> local
tables -> diagnostics -> bundle.

The build is deterministic: identical inputs and config produce bitwise
identical bundle JSON.  Run metadata therefore carries a content-derived run
stamp instead of wall-clock time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .atlas import DiagnosticsBlock, WorldModelBundle, config_hash
from .core import (
    ROOT_CONTEXT_ID,
    ClaimRow,
    ContextSite,
    EpisodeStore,
    derive_claims,
    parse_cover_spec,
)
from .psr import LocalPSR, SmoothingConfig, SupportTable, build_local_psr, transition_support
from .sheaf import (
    Section,
    ToleranceConfig,
    claim_conflicts,
    gluing_tension,
    restriction_check,
    section_of,
    section_view,
    try_glue,
)


@dataclass
class RunConfig:
    """Everything a build needs; hashed into the bundle so reruns are
    comparable."""

    episodes_path: str = ""
    output_dir: str = ""
    evidence_path: Optional[str] = None
    claims_path: Optional[str] = None
    cover_path: Optional[str] = None
    episodes_format: str = "jsonl"
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    tolerances: ToleranceConfig = field(default_factory=ToleranceConfig)
    spine: dict = field(default_factory=lambda: {"min_support": 2, "max_paths": 8})
    partition: dict = field(default_factory=lambda: {"query_terms": [], "rules": []})
    focus: Optional[str] = None
    max_contexts: Optional[int] = None
    extractor_meta: dict = field(default_factory=dict)
    figures: bool = True

    def semantic_dict(self) -> dict:
        """The config surface covered by the bundle's config hash: every
        tolerance, smoothing, and depth parameter (not filesystem paths)."""
        return {
            "smoothing": self.smoothing.to_dict(),
            "tolerances": self.tolerances.to_dict(),
            "spine": self.spine,
            "partition": self.partition,
            "focus": self.focus,
            "max_contexts": self.max_contexts,
        }

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        base = Path(path).parent
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)

        def resolve(p):
            if p is None:
                return None
            p = Path(p)
            return str(p if p.is_absolute() else base / p)

        smoothing = SmoothingConfig(**raw.get("smoothing", {}))
        tolerances = ToleranceConfig(**raw.get("tolerances", {}))
        cfg = cls(
            episodes_path=resolve(raw.get("episodes", "")) or "",
            output_dir=resolve(raw.get("output", "run")) or "run",
            evidence_path=resolve(raw.get("evidence")),
            claims_path=resolve(raw.get("claims")),
            cover_path=resolve(raw.get("cover")),
            episodes_format=raw.get("episodes_format", "jsonl"),
            smoothing=smoothing,
            tolerances=tolerances,
            spine=raw.get("spine", {"min_support": 2, "max_paths": 8}),
            partition=raw.get("partition", {"query_terms": [], "rules": []}),
            focus=raw.get("focus"),
            max_contexts=raw.get("max_contexts"),
            extractor_meta=raw.get("extractor_meta", {}),
            figures=bool(raw.get("figures", True)),
        )
        if not cfg.episodes_path:
            raise FileNotFoundError("config missing 'episodes' path")
        for label, p in (
            ("episodes", cfg.episodes_path),
            ("evidence", cfg.evidence_path),
            ("claims", cfg.claims_path),
            ("cover", cfg.cover_path),
        ):
            if p is not None and not Path(p).exists():
                raise FileNotFoundError(f"{label} file not found: {p}")
        return cfg


@dataclass
class BuildInputs:
    store: EpisodeStore
    cover_data: dict
    claims: Optional[list[ClaimRow]] = None
    input_hashes: dict = field(default_factory=dict)


def build_world(
    inputs: BuildInputs,
    config: RunConfig,
    parent_run: Optional[str] = None,
    substrate_results: Sequence[dict] = (),
    intervention: Optional[dict] = None,
) -> WorldModelBundle:
    """Run the full pipeline on an ingested store and return the bundle."""
    store = inputs.store
    declared, rules, cover_extra = parse_cover_spec(inputs.cover_data)

    from .core import assign_contexts, build_site  # local import keeps core lean

    assignment = assign_contexts(store, rules, declared)
    site = build_site(assignment, cover_extra, max_contexts=config.max_contexts)

    claims = inputs.claims if inputs.claims is not None else derive_claims(store, assignment)
    psrs, supports = _build_psrs(store, site, config.smoothing)
    diagnostics = _run_diagnostics(store, site, psrs, config.tolerances, claims)

    semantic = config.semantic_dict()
    fingerprint_payload = {
        "store": store.fingerprint(),
        "cover": inputs.cover_data,
        "config": semantic,
        "claims": [c.to_dict() for c in claims] if inputs.claims is not None else None,
    }
    from .core import canonical_json, sha256_text

    fingerprint = sha256_text(canonical_json(fingerprint_payload))

    metadata = {
        "run_id": fingerprint[:12],
        "config_hash": config_hash(semantic),
        "input_hashes": dict(sorted(inputs.input_hashes.items())),
        "input_fingerprint": fingerprint,
        "created": f"content:{fingerprint[:16]}",
        "engine_version": __version__,
        "extractor_meta": dict(config.extractor_meta),
        "parent_run": parent_run,
    }

    return WorldModelBundle(
        site=site,
        psrs=psrs,
        diagnostics=diagnostics,
        claims=claims,
        metadata=metadata,
        config=semantic,
        episode_count=store.episode_count,
        event_count=store.event_count,
        substrate_results=list(substrate_results),
        intervention=intervention,
        evidence=[u.to_dict() for u in sorted(store.evidence.values(), key=lambda u: u.id)],
    )


def _build_psrs(
    store: EpisodeStore,
    site: ContextSite,
    smoothing: SmoothingConfig,
) -> tuple[list[LocalPSR], dict[str, SupportTable]]:
    """Build the root table first (it is the backoff source), then every
    non-root context against its overlap neighbors and the root."""
    primary = site.primary_context_ids()
    events_of = {
        cid: [store.event(eid) for eid in site.context_events.get(cid, ())]
        for cid in primary
    }
    supports: dict[str, SupportTable] = {}
    for cid in primary:
        member_ids = {e.event_id for e in events_of[cid]}
        supports[cid] = transition_support(
            store.episodes, member_ids, smoothing.window, smoothing.test_depth
        )

    psrs: list[LocalPSR] = []
    root_psr = build_local_psr(
        ROOT_CONTEXT_ID,
        events_of[ROOT_CONTEXT_ID],
        store.episodes,
        store,
        smoothing,
        local_support=supports[ROOT_CONTEXT_ID],
        is_root=True,
    )
    psrs.append(root_psr)

    corpus_support = supports[ROOT_CONTEXT_ID]
    corpus_grouped = corpus_support.by_history()
    corpus_column_mass = corpus_support.column_mass()
    for cid in primary:
        if cid == ROOT_CONTEXT_ID:
            continue
        neighbor_ids = [n for n in site.neighbors(cid) if n in supports]
        psrs.append(
            build_local_psr(
                cid,
                events_of[cid],
                store.episodes,
                store,
                smoothing,
                local_support=supports[cid],
                neighbor_supports=[supports[n] for n in neighbor_ids],
                corpus_support=corpus_support,
                corpus_grouped=corpus_grouped,
                corpus_column_mass=corpus_column_mass,
            )
        )
    return psrs, supports


def _run_diagnostics(
    store: EpisodeStore,
    site: ContextSite,
    psrs: list[LocalPSR],
    tol: ToleranceConfig,
    claims: list[ClaimRow],
) -> DiagnosticsBlock:
    """Root-vs-context restriction checks and gluing overlaps (one pair per
    non-root context), cover gluing obstructions, and claim-level polarity
    conflicts."""
    root_psr = next(p for p in psrs if p.context_id == ROOT_CONTEXT_ID)
    sections: dict[str, Section] = {
        p.context_id: section_of(p, store, site.contexts.get(p.context_id))
        for p in psrs
        if p.context_id != ROOT_CONTEXT_ID
    }

    block = DiagnosticsBlock()
    for p in psrs:
        if p.context_id == ROOT_CONTEXT_ID:
            continue
        # the root is read only on the shared signature, never materialized whole
        root_view = section_view(root_psr, p.histories, p.tests, store, site.root)
        block.restrictions.append(restriction_check(root_view, sections[p.context_id], tol))
        overlaps, tension = gluing_tension([root_view, sections[p.context_id]], tol=tol)
        block.overlaps.extend(overlaps)
        block.total_tension += tension

    # Overlap-sharing non-root pairs get their own tension diagnostics.
    for edge in site.overlaps:
        if edge.a in sections and edge.b in sections:
            overlaps, tension = gluing_tension([sections[edge.a], sections[edge.b]], tol=tol)
            block.overlaps.extend(overlaps)
            block.total_tension += tension

    for cover in site.covers.values():
        members = [sections[m] for m in cover.members if m in sections]
        if len(members) < 2:
            continue
        outcome = try_glue(members, cover.name, tol, target=cover.target, contexts=site.contexts)
        if outcome.obstruction:
            block.obstructions.append(outcome.obstruction)

    block.obstructions.extend(claim_conflicts(claims, tol, site.contexts))
    return block


def default_focus(bundle: WorldModelBundle) -> str:
    """Largest non-root context by event count, lexicographic tie-break."""
    candidates = [p for p in bundle.psrs if p.context_id != ROOT_CONTEXT_ID]
    if not candidates:
        return ROOT_CONTEXT_ID
    return min(candidates, key=lambda p: (-p.diagnostics.event_count, p.context_id)).context_id
