"""World-model bundling, the claims atlas, drift diffs, and persistent state.

A bundle is the durable run artifact: site, local tables, diagnostics, claims,
run metadata, and recomputable summary counts.  The atlas is its navigation
view: causal spine, display regions, tensions, claim families, and the
provenance index.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .core import (
    ROOT_CONTEXT_ID,
    ClaimRow,
    ContextSite,
    canonical_json,
)
from .psr import LocalPSR
from .sheaf import (
    GluingOverlap,
    Obstruction,
    ObstructedCell,
    ObstructionSide,
    RestrictionDiagnostic,
    ToleranceConfig,
)

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# Bundle
# ---------------------------------------------------------------------------


@dataclass
class DiagnosticsBlock:
    restrictions: list[RestrictionDiagnostic] = field(default_factory=list)
    overlaps: list[GluingOverlap] = field(default_factory=list)
    obstructions: list[Obstruction] = field(default_factory=list)
    total_tension: float = 0.0

    def summary(self) -> dict:
        compatible_r = sum(1 for r in self.restrictions if r.status == "aligned")
        tense_o = sum(1 for o in self.overlaps if o.status == "tense")
        losses = [o.cell_loss for o in self.overlaps]
        return {
            "compatible_restrictions": compatible_r,
            "divergent_restrictions": len(self.restrictions) - compatible_r,
            "compatible_overlaps": len(self.overlaps) - tense_o,
            "tense_overlaps": tense_o,
            "mean_glue_loss": sum(losses) / len(losses) if losses else 0.0,
        }

    def to_dict(self) -> dict:
        return {
            "restrictions": [r.to_dict() for r in self.restrictions],
            "overlaps": [o.to_dict() for o in self.overlaps],
            "obstructions": [o.to_dict() for o in self.obstructions],
            "total_tension": self.total_tension,
            "summary": self.summary(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DiagnosticsBlock":
        restrictions = [RestrictionDiagnostic(**r) for r in data.get("restrictions", [])]
        overlaps = [
            GluingOverlap(
                pair=tuple(o["pair"]),
                weight=o["weight"],
                tension=o["tension"],
                section_count=o["section_count"],
                status=o["status"],
            )
            for o in data.get("overlaps", [])
        ]
        obstructions = []
        for raw in data.get("obstructions", []):
            cells = []
            for c in raw.get("cells", []):
                sides = [
                    ObstructionSide(
                        context_id=s["context_id"],
                        value=s["value"],
                        support=s["support"],
                        confidence=s["confidence"],
                        provenance=tuple(s.get("provenance", ())),
                        polarities=dict(s.get("polarities", {})),
                        t_min=s.get("t_min"),
                        t_max=s.get("t_max"),
                        metadata=dict(s.get("metadata", {})),
                    )
                    for s in c.get("sides", [])
                ]
                cells.append(
                    ObstructedCell(
                        cell=tuple(c["cell"]),
                        sides=sides,
                        classification=c.get("classification", "underdetermination"),
                        kind=c.get("kind", "table"),
                    )
                )
            obstructions.append(
                Obstruction(
                    cover=raw["cover"],
                    cells=cells,
                    classification=raw.get("classification", "underdetermination"),
                    rationale=raw.get("rationale", ""),
                )
            )
        return cls(
            restrictions=restrictions,
            overlaps=overlaps,
            obstructions=obstructions,
            total_tension=data.get("total_tension", 0.0),
        )


@dataclass
class WorldModelBundle:
    """Durable run artifact.  Everything the atlas, drift, and state layers
    need is serialized here; summary counts stay recomputable."""

    site: ContextSite
    psrs: list[LocalPSR]
    diagnostics: DiagnosticsBlock
    claims: list[ClaimRow]
    metadata: dict
    config: dict
    episode_count: int
    event_count: int
    substrate_results: list[dict] = field(default_factory=list)
    intervention: Optional[dict] = None
    evidence: list[dict] = field(default_factory=list)

    def psr_by_context(self) -> dict[str, LocalPSR]:
        return {p.context_id: p for p in self.psrs}

    @property
    def run_id(self) -> str:
        return self.metadata.get("run_id", "run")

    def summary(self) -> dict:
        out = {
            "events": self.event_count,
            "episodes": self.episode_count,
            "contexts": len(self.psrs),
            "psrs": len(self.psrs),
            "claims": len(self.claims),
        }
        out.update(self.diagnostics.summary())
        return out

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "metadata": self.metadata,
            "config": self.config,
            "site": self.site.to_dict(),
            "psrs": [p.to_dict() for p in self.psrs],
            "diagnostics": self.diagnostics.to_dict(),
            "claims": [c.to_dict() for c in self.claims],
            "substrate_results": self.substrate_results,
            "intervention": self.intervention,
            "evidence": self.evidence,
            "episode_count": self.episode_count,
            "event_count": self.event_count,
            "summary": self.summary(),
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "WorldModelBundle":
        claims = [
            ClaimRow(
                cause=c["cause"],
                effect=c["effect"],
                polarity=c["polarity"],
                relation=c.get("relation", ""),
                mediator=c.get("mediator"),
                modifier=c.get("modifier"),
                strength=c.get("strength"),
                context_labels=tuple(c.get("context_labels", ())),
                provenance=tuple(c.get("provenance", ())),
                time_index=c.get("time_index"),
            )
            for c in data.get("claims", [])
        ]
        return cls(
            site=ContextSite.from_dict(data["site"]),
            psrs=[LocalPSR.from_dict(p) for p in data.get("psrs", [])],
            diagnostics=DiagnosticsBlock.from_dict(data.get("diagnostics", {})),
            claims=claims,
            metadata=data.get("metadata", {}),
            config=data.get("config", {}),
            episode_count=data.get("episode_count", 0),
            event_count=data.get("event_count", 0),
            substrate_results=list(data.get("substrate_results", [])),
            intervention=data.get("intervention"),
            evidence=list(data.get("evidence", [])),
        )


# ---------------------------------------------------------------------------
# Spine extraction
# ---------------------------------------------------------------------------


def extract_spine(
    claims: Sequence[ClaimRow],
    min_support: int = 2,
    max_paths: int = 8,
) -> list[dict]:
    """Greedy node-disjoint maximal paths over the claim multigraph.

    Edges aggregate claim support per (cause, effect); only edges at or above
    min_support survive.  Ties break on the lexicographic node key so the
    spine is deterministic.
    """
    if not claims:
        return []
    support: dict[tuple[str, str], int] = {}
    for claim in claims:
        support[claim.pair] = support.get(claim.pair, 0) + 1
    edges = {pair: s for pair, s in support.items() if s >= min_support and pair[0] != pair[1]}

    out_adj: dict[str, list[tuple[str, str]]] = {}
    in_adj: dict[str, list[tuple[str, str]]] = {}
    for (cause, effect), s in edges.items():
        out_adj.setdefault(cause, []).append((effect, f"{cause}->{effect}"))
        in_adj.setdefault(effect, []).append((cause, f"{cause}->{effect}"))

    used_nodes: set[str] = set()
    paths: list[dict] = []
    remaining = dict(edges)

    def best_edge() -> Optional[tuple[str, str]]:
        candidates = [
            pair
            for pair in remaining
            if pair[0] not in used_nodes and pair[1] not in used_nodes
        ]
        if not candidates:
            return None
        return min(candidates, key=lambda p: (-remaining[p], p))

    while len(paths) < max_paths:
        seed = best_edge()
        if seed is None:
            break
        path = [seed[0], seed[1]]
        used = {seed[0], seed[1]}
        # extend forward
        while True:
            tail = path[-1]
            nexts = [
                (eff, edges[(tail, eff)])
                for eff, _ in out_adj.get(tail, [])
                if eff not in used and eff not in used_nodes and (tail, eff) in edges
            ]
            if not nexts:
                break
            eff = min(nexts, key=lambda x: (-x[1], x[0]))[0]
            path.append(eff)
            used.add(eff)
        # extend backward
        while True:
            head = path[0]
            prevs = [
                (cause, edges[(cause, head)])
                for cause, _ in in_adj.get(head, [])
                if cause not in used and cause not in used_nodes and (cause, head) in edges
            ]
            if not prevs:
                break
            cause = min(prevs, key=lambda x: (-x[1], x[0]))[0]
            path.insert(0, cause)
            used.add(cause)
        used_nodes.update(used)
        path_edges = list(zip(path, path[1:]))
        paths.append(
            {
                "nodes": path,
                "edges": [
                    {"cause": a, "effect": b, "support": edges[(a, b)]} for a, b in path_edges
                ],
                "support": sum(edges[e] for e in path_edges),
            }
        )
        for e in path_edges:
            remaining.pop(e, None)

    return paths


# ---------------------------------------------------------------------------
# Regions
# ---------------------------------------------------------------------------

RESIDUAL_REGION = "other_local_contexts"


def partition_regions(
    site: ContextSite,
    query_terms: Sequence[str] = (),
    rules: Sequence[dict] = (),
) -> list[dict]:
    """Place every primary context in exactly one display region.

    Rules are keyword/metadata predicates applied in priority order; query
    terms act as an implicit first rule for the core region; everything
    unmatched lands in the residual region.
    """
    effective: list[dict] = []
    if query_terms:
        effective.append({"name": "core_query_spine", "keywords": list(query_terms)})
    effective.extend(rules)

    region_names = [r["name"] for r in effective] + [RESIDUAL_REGION]
    members: dict[str, list[str]] = {name: [] for name in region_names}

    primary = [cid for cid in site.primary_context_ids() if cid != ROOT_CONTEXT_ID]
    for cid in primary:
        ctx = site.contexts[cid]
        placed = None
        haystack = f"{ctx.id} {ctx.label}".lower()
        for rule in effective:
            keywords = [str(k).lower() for k in rule.get("keywords", [])]
            meta = rule.get("meta", {})
            keyword_hit = any(k in haystack for k in keywords) if keywords else False
            meta_hit = (
                all(ctx.metadata.get(k) == v for k, v in meta.items()) if meta else False
            )
            if keyword_hit or meta_hit:
                placed = rule["name"]
                break
        members[placed or RESIDUAL_REGION].append(cid)

    event_counts = {cid: len(site.context_events.get(cid, ())) for cid in primary}
    # every event counted once, at its first listed non-root context
    event_region: dict[str, str] = {}
    region_of_context = {
        cid: name for name, cids in members.items() for cid in cids
    }
    for cid in primary:
        for eid in site.context_events.get(cid, ()):
            event_region.setdefault(eid, region_of_context[cid])

    out = []
    for name in region_names:
        cids = members[name]
        out.append(
            {
                "name": name,
                "contexts": cids,
                "context_count": len(cids),
                "event_count": sum(1 for r in event_region.values() if r == name),
                "context_event_counts": {cid: event_counts[cid] for cid in cids},
            }
        )
    return out


# ---------------------------------------------------------------------------
# Claims atlas
# ---------------------------------------------------------------------------


@dataclass
class ClaimsAtlas:
    spine: list[dict]
    regions: list[dict]
    tensions: list[dict]
    families: list[dict]
    provenance_index: dict[str, list[str]]
    summary: dict

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "spine": self.spine,
            "regions": self.regions,
            "tensions": self.tensions,
            "families": self.families,
            "provenance_index": self.provenance_index,
            "summary": self.summary,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ClaimsAtlas":
        return cls(
            spine=data.get("spine", []),
            regions=data.get("regions", []),
            tensions=data.get("tensions", []),
            families=data.get("families", []),
            provenance_index=data.get("provenance_index", {}),
            summary=data.get("summary", {}),
        )


def _family_key(cause: str, effect: str) -> str:
    return f"{cause}->{effect}"


def claim_families(claims: Sequence[ClaimRow]) -> list[dict]:
    """Group claims by normalized (cause, effect); count surface variants and
    regime aliases (distinct contexts asserting the family)."""
    grouped: dict[tuple[str, str], dict] = {}
    for claim in claims:
        fam = grouped.setdefault(
            claim.pair,
            {
                "cause": claim.cause,
                "effect": claim.effect,
                "claims": 0,
                "surfaces": {},
                "polarities": {},
                "contexts": [],
                "provenance": [],
            },
        )
        fam["claims"] += 1
        surface = claim.relation or claim.polarity
        fam["surfaces"][surface] = fam["surfaces"].get(surface, 0) + 1
        fam["polarities"][claim.polarity] = fam["polarities"].get(claim.polarity, 0) + 1
        for cid in claim.context_labels:
            if cid not in fam["contexts"]:
                fam["contexts"].append(cid)
        for pid in claim.provenance:
            if pid not in fam["provenance"]:
                fam["provenance"].append(pid)
    out = []
    for (cause, effect), fam in grouped.items():
        out.append(
            {
                "key": _family_key(cause, effect),
                "cause": cause,
                "effect": effect,
                "claims": fam["claims"],
                "surfaces": dict(sorted(fam["surfaces"].items())),
                "surface_variants": len(fam["surfaces"]),
                "polarities": dict(sorted(fam["polarities"].items())),
                "regime_aliases": len(fam["contexts"]),
                "contexts": fam["contexts"],
                "provenance": fam["provenance"],
                "tension_candidate": len(fam["surfaces"]) > 1,
            }
        )
    out.sort(key=lambda f: (-f["claims"], f["key"]))
    return out


def build_atlas(
    bundle: WorldModelBundle,
    partition_rules: Sequence[dict] = (),
    query_terms: Sequence[str] = (),
    spine_params: Optional[dict] = None,
) -> ClaimsAtlas:
    spine_params = spine_params or {}
    spine = extract_spine(
        bundle.claims,
        min_support=int(spine_params.get("min_support", 2)),
        max_paths=int(spine_params.get("max_paths", 8)),
    )
    regions = partition_regions(bundle.site, query_terms, partition_rules)
    families = claim_families(bundle.claims)
    tensions = [
        {
            "cover": ob.cover,
            "classification": ob.classification,
            "rationale": ob.rationale,
            "cells": [c.to_dict() for c in ob.cells],
        }
        for ob in bundle.diagnostics.obstructions
    ]
    provenance_index = {f["key"]: list(f["provenance"]) for f in families}
    summary = {
        "families": len(families),
        "spine_paths": len(spine),
        "regions": len(regions),
        "tensions": len(tensions),
    }
    summary.update(bundle.summary())
    return ClaimsAtlas(
        spine=spine,
        regions=regions,
        tensions=tensions,
        families=families,
        provenance_index=provenance_index,
        summary=summary,
    )


# ---------------------------------------------------------------------------
# Drift
# ---------------------------------------------------------------------------


@dataclass
class DriftReport:
    textual: list[dict] = field(default_factory=list)
    causal: list[dict] = field(default_factory=list)
    predictive: list[dict] = field(default_factory=list)
    topological: list[dict] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not (self.textual or self.causal or self.predictive or self.topological)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "textual": self.textual,
            "causal": self.causal,
            "predictive": self.predictive,
            "topological": self.topological,
            "empty": self.empty,
        }


def _dominant(counts: dict[str, int]) -> Optional[str]:
    if not counts:
        return None
    return max(sorted(counts), key=lambda k: counts[k])


def diff_worlds(
    old: WorldModelBundle,
    new: WorldModelBundle,
    eps_drift: Optional[float] = None,
) -> DriftReport:
    """Four-channel drift diff: textual (surface distributions), causal
    (polarity flips), predictive (cell moves beyond eps on shared
    signatures), topological (contexts/overlaps added or removed)."""
    if eps_drift is None:
        eps_drift = ToleranceConfig().drift_eps
    report = DriftReport()

    fams_old = {f["key"]: f for f in claim_families(old.claims)}
    fams_new = {f["key"]: f for f in claim_families(new.claims)}
    for key in sorted(set(fams_old) & set(fams_new)):
        fo, fn = fams_old[key], fams_new[key]
        if fo["surfaces"] != fn["surfaces"]:
            report.textual.append(
                {
                    "family": key,
                    "old_surfaces": fo["surfaces"],
                    "new_surfaces": fn["surfaces"],
                    "old_provenance": fo["provenance"],
                    "new_provenance": fn["provenance"],
                }
            )
        old_pol = _dominant(fo["polarities"])
        new_pol = _dominant(fn["polarities"])
        if old_pol != new_pol:
            report.causal.append(
                {
                    "family": key,
                    "old_polarity": old_pol,
                    "new_polarity": new_pol,
                    "old_provenance": fo["provenance"],
                    "new_provenance": fn["provenance"],
                }
            )

    psr_old = old.psr_by_context()
    psr_new = new.psr_by_context()
    for cid in sorted(set(psr_old) & set(psr_new)):
        po, pn = psr_old[cid], psr_new[cid]
        hs = [h for h in po.histories if h in set(pn.histories)]
        ts = [t for t in po.tests if t in set(pn.tests)]
        for h in hs:
            for t in ts:
                delta = pn.value(h, t) - po.value(h, t)
                if abs(delta) > eps_drift:
                    report.predictive.append(
                        {
                            "context": cid,
                            "cell": [h, t],
                            "old": po.value(h, t),
                            "new": pn.value(h, t),
                            "delta": delta,
                            "old_provenance": sorted(po.provenance.get((h, t), ())),
                            "new_provenance": sorted(pn.provenance.get((h, t), ())),
                        }
                    )

    def context_evidence(bundle: WorldModelBundle, cid: str) -> list[str]:
        psr = bundle.psr_by_context().get(cid)
        if psr is None:
            return []
        ids: list[str] = []
        for cell_ids in psr.provenance.values():
            for pid in cell_ids:
                if pid not in ids:
                    ids.append(pid)
        return sorted(ids)[:12]

    ctx_old = {
        cid for cid in old.site.contexts if not old.site.contexts[cid].derived
    }
    ctx_new = {
        cid for cid in new.site.contexts if not new.site.contexts[cid].derived
    }
    for cid in sorted(ctx_new - ctx_old):
        report.topological.append(
            {
                "change": "context_added",
                "context": cid,
                "old_provenance": [],
                "new_provenance": context_evidence(new, cid),
            }
        )
    for cid in sorted(ctx_old - ctx_new):
        report.topological.append(
            {
                "change": "context_removed",
                "context": cid,
                "old_provenance": context_evidence(old, cid),
                "new_provenance": [],
            }
        )
    pairs_old = {(o.a, o.b) for o in old.site.overlaps}
    pairs_new = {(o.a, o.b) for o in new.site.overlaps}
    for pair in sorted(pairs_new - pairs_old):
        report.topological.append(
            {
                "change": "overlap_added",
                "pair": list(pair),
                "old_provenance": [],
                "new_provenance": sorted(
                    set(context_evidence(new, pair[0])) | set(context_evidence(new, pair[1]))
                )[:12],
            }
        )
    for pair in sorted(pairs_old - pairs_new):
        report.topological.append(
            {
                "change": "overlap_removed",
                "pair": list(pair),
                "old_provenance": sorted(
                    set(context_evidence(old, pair[0])) | set(context_evidence(old, pair[1]))
                )[:12],
                "new_provenance": [],
            }
        )

    return report


# ---------------------------------------------------------------------------
# Persistent state
# ---------------------------------------------------------------------------


@dataclass
class PersistentState:
    focus: str
    recommendation: str
    parent: Optional[str]
    focus_diagnostics: dict
    run_id: str

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "focus": self.focus,
            "recommendation": self.recommendation,
            "parent": self.parent,
            "focus_diagnostics": self.focus_diagnostics,
            "run_id": self.run_id,
        }


def persist_state(bundle: WorldModelBundle, focus: str) -> PersistentState:
    """Focus recommendation: blocked if the focus itself is divergent,
    provisional if divergences exist elsewhere, accept otherwise."""
    known = {p.context_id for p in bundle.psrs}
    if focus not in known:
        raise KeyError(f"unknown focus context: {focus}")

    focus_restrictions = [
        r for r in bundle.diagnostics.restrictions if focus in (r.source, r.target)
    ]
    focus_overlaps = [o for o in bundle.diagnostics.overlaps if focus in o.pair]
    focus_divergent = any(r.status == "divergent" for r in focus_restrictions) or any(
        o.status == "tense" for o in focus_overlaps
    )
    elsewhere = any(
        r.status == "divergent"
        for r in bundle.diagnostics.restrictions
        if focus not in (r.source, r.target)
    ) or any(o.status == "tense" for o in bundle.diagnostics.overlaps if focus not in o.pair)

    if focus_divergent:
        recommendation = "blocked"
    elif elsewhere:
        recommendation = "provisional"
    else:
        recommendation = "accept"

    return PersistentState(
        focus=focus,
        recommendation=recommendation,
        parent=bundle.metadata.get("parent_run"),
        focus_diagnostics={
            "restrictions": [r.to_dict() for r in focus_restrictions],
            "overlaps": [o.to_dict() for o in focus_overlaps],
        },
        run_id=bundle.run_id,
    )


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()
