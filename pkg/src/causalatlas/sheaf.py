"""Restriction maps, gluing diagnostics, and typed obstructions.

Local sections are compared on the signature they share; agreement within
tolerance lets them aggregate into glued sections, disagreement is never
averaged away but recorded as a typed obstruction (contradiction, drift,
regime dependence, underdetermination).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .core import Context
from .psr import CellMeta, LocalPSR

REGIME_METADATA_KEYS = ("population", "measurement", "regime")

CLASSIFICATIONS = ("contradiction", "drift", "regime_dependence", "underdetermination")


@dataclass(frozen=True)
class ToleranceConfig:
    eps_restrict: float = 0.05
    eps_glue: float = 0.05
    min_shared: int = 4
    support_threshold: float = 3.0
    eps_drift: Optional[float] = None

    def __post_init__(self):
        for name in ("eps_restrict", "eps_glue", "min_shared", "support_threshold"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def drift_eps(self) -> float:
        return self.eps_drift if self.eps_drift is not None else self.eps_glue

    def to_dict(self) -> dict:
        return {
            "eps_restrict": self.eps_restrict,
            "eps_glue": self.eps_glue,
            "min_shared": self.min_shared,
            "support_threshold": self.support_threshold,
            "eps_drift": self.eps_drift,
        }


@dataclass(slots=True)
class SectionCell:
    value: float
    support: float
    confidence: float
    provenance: tuple[str, ...] = ()
    polarities: dict[str, int] = field(default_factory=dict)
    t_min: Optional[int] = None
    t_max: Optional[int] = None


@dataclass
class Section:
    """A sparse table-valued section over one context: the comparable face of
    a LocalPSR (or of a glued result)."""

    context_id: str
    histories: tuple[str, ...]
    tests: tuple[str, ...]
    cells: dict[tuple[str, str], SectionCell]
    mean_confidence: float = 1.0
    metadata: dict[str, str] = field(default_factory=dict)

    def signature(self) -> set[tuple[str, str]]:
        return set(self.cells.keys())

    def restrict(self, cell_keys: Iterable[tuple[str, str]]) -> "Section":
        keys = [k for k in cell_keys if k in self.cells]
        hs, ts = [], []
        for h, t in keys:
            if h not in hs:
                hs.append(h)
            if t not in ts:
                ts.append(t)
        return Section(
            context_id=self.context_id,
            histories=tuple(hs),
            tests=tuple(ts),
            cells={k: self.cells[k] for k in keys},
            mean_confidence=self.mean_confidence,
            metadata=dict(self.metadata),
        )


def section_of(psr: LocalPSR, store=None, context: Optional[Context] = None) -> Section:
    """Project a LocalPSR to its comparable section.

    Unsupported grid cells carry only their smoothed value at the table's
    mean confidence; provenance and evidence summaries are attached where
    support exists.
    """
    base_conf = psr.diagnostics.mean_confidence
    table = psr.table
    support = psr.support
    tests = psr.tests
    cells: dict[tuple[str, str], SectionCell] = {}
    for i, h in enumerate(psr.histories):
        value_row = table[i]
        support_row = support[i]
        for j, t in enumerate(tests):
            cells[(h, t)] = SectionCell(
                value=float(value_row[j]),
                support=float(support_row[j]),
                confidence=base_conf,
            )
    for key, prov in psr.provenance.items():
        cell = cells.get(key)
        if cell is None:
            continue
        cell.provenance = tuple(prov)
        if store is not None and prov:
            cell.confidence = sum(store.confidence_of(p) for p in prov) / len(prov)
    for key, meta in psr.cell_meta.items():
        cell = cells.get(key)
        if cell is None:
            continue
        cell.polarities = dict(meta.polarities)
        cell.t_min = meta.t_min
        cell.t_max = meta.t_max
    return Section(
        context_id=psr.context_id,
        histories=psr.histories,
        tests=psr.tests,
        cells=cells,
        mean_confidence=base_conf,
        metadata=dict(context.metadata) if context else {},
    )


def section_view(
    psr: LocalPSR,
    histories: Sequence[str],
    tests: Sequence[str],
    store=None,
    context: Optional[Context] = None,
) -> Section:
    """Like section_of, but restricted to the given key subsets.  The root's
    full grid is quadratic in the corpus; pairwise diagnostics only ever read
    it on a shared signature."""
    base_conf = psr.diagnostics.mean_confidence
    h_keep = set(histories)
    t_keep = set(tests)
    hs = tuple(h for h in psr.histories if h in h_keep)
    ts = tuple(t for t in psr.tests if t in t_keep)
    cells: dict[tuple[str, str], SectionCell] = {}
    for h in hs:
        for t in ts:
            key = (h, t)
            prov = psr.provenance.get(key, ())
            if store is not None and prov:
                conf = sum(store.confidence_of(p) for p in prov) / len(prov)
            else:
                conf = base_conf
            meta = psr.cell_meta.get(key)
            cells[key] = SectionCell(
                value=psr.value(h, t),
                support=psr.support_of(h, t),
                confidence=conf,
                provenance=tuple(prov),
                polarities=dict(meta.polarities) if meta else {},
                t_min=meta.t_min if meta else None,
                t_max=meta.t_max if meta else None,
            )
    return Section(
        context_id=psr.context_id,
        histories=hs,
        tests=ts,
        cells=cells,
        mean_confidence=base_conf,
        metadata=dict(context.metadata) if context else {},
    )


# ---------------------------------------------------------------------------
# Shared signatures and restriction checks
# ---------------------------------------------------------------------------


@dataclass
class SharedSignature:
    pair: tuple[str, str]
    histories: tuple[str, ...]
    tests: tuple[str, ...]

    @property
    def cells(self) -> list[tuple[str, str]]:
        return [(h, t) for h in self.histories for t in self.tests]

    @property
    def size(self) -> int:
        return len(self.histories) * len(self.tests)


def shared_signature(a: Section, b: Section) -> SharedSignature:
    """Exact key intersection of the two cell grids."""
    hs = tuple(h for h in a.histories if h in set(b.histories))
    ts = tuple(t for t in a.tests if t in set(b.tests))
    return SharedSignature(pair=(a.context_id, b.context_id), histories=hs, tests=ts)


@dataclass
class RestrictionDiagnostic:
    source: str
    target: str
    shared_cells: int
    mean_gap: float
    max_gap: float
    lambda_policy: str
    status: str
    empty_overlap: bool = False

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "target": self.target,
            "shared_cells": self.shared_cells,
            "mean_gap": self.mean_gap,
            "max_gap": self.max_gap,
            "lambda_policy": self.lambda_policy,
            "status": self.status,
            "empty_overlap": self.empty_overlap,
        }


def _cell_lambda(ca: SectionCell, cb: SectionCell, support_threshold: float) -> float:
    """Downweight unsupported or low-confidence cells: support saturation
    times mean extraction confidence."""
    sat = min(1.0, (ca.support + cb.support) / (2.0 * support_threshold))
    conf = (ca.confidence + cb.confidence) / 2.0
    return sat * conf


def restriction_check(
    a: Section,
    b: Section,
    tol: ToleranceConfig = ToleranceConfig(),
    lambda_policy: str = "support_confidence",
) -> RestrictionDiagnostic:
    """Score the overlap discrepancy between two sections.

    mean_gap is the lambda-weighted mean absolute difference over the shared
    signature; max_gap is the unweighted maximum.  Empty overlaps are flagged
    and reported divergent.
    """
    sig = shared_signature(a, b)
    common = [k for k in sig.cells if k in a.cells and k in b.cells]
    if not common:
        return RestrictionDiagnostic(
            source=a.context_id,
            target=b.context_id,
            shared_cells=0,
            mean_gap=0.0,
            max_gap=0.0,
            lambda_policy=lambda_policy,
            status="divergent",
            empty_overlap=True,
        )
    gaps = []
    max_gap = 0.0
    for key in common:
        ca, cb = a.cells[key], b.cells[key]
        diff = abs(ca.value - cb.value)
        weight = 1.0 if lambda_policy == "unweighted" else _cell_lambda(ca, cb, tol.support_threshold)
        gaps.append(weight * diff)
        max_gap = max(max_gap, diff)
    mean_gap = sum(gaps) / len(gaps)
    aligned = mean_gap <= tol.eps_restrict and len(common) >= tol.min_shared
    return RestrictionDiagnostic(
        source=a.context_id,
        target=b.context_id,
        shared_cells=len(common),
        mean_gap=mean_gap,
        max_gap=max_gap,
        lambda_policy=lambda_policy,
        status="aligned" if aligned else "divergent",
    )


# ---------------------------------------------------------------------------
# Gluing
# ---------------------------------------------------------------------------


@dataclass
class GluingOverlap:
    pair: tuple[str, str]
    weight: float
    tension: float
    section_count: int
    status: str

    @property
    def cell_loss(self) -> float:
        return self.tension / self.section_count if self.section_count else 0.0

    def to_dict(self) -> dict:
        return {
            "pair": list(self.pair),
            "weight": self.weight,
            "tension": self.tension,
            "section_count": self.section_count,
            "status": self.status,
            "cell_loss": self.cell_loss,
        }


def gluing_tension(
    sections: Sequence[Section],
    weights: Optional[dict[tuple[str, str], float]] = None,
    tol: ToleranceConfig = ToleranceConfig(),
) -> tuple[list[GluingOverlap], float]:
    """Pairwise squared-gap tensions over shared signatures and their total.

    The default pair weight is the mean of the two sections' mean extraction
    confidences.
    """
    if len(sections) < 2:
        raise ValueError("gluing tension needs at least two sections")
    overlaps: list[GluingOverlap] = []
    total = 0.0
    for i, a in enumerate(sections):
        for b in sections[i + 1 :]:
            pair = (a.context_id, b.context_id)
            if weights is not None and pair in weights:
                w = weights[pair]
            else:
                w = (a.mean_confidence + b.mean_confidence) / 2.0
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"overlap weight out of [0,1]: {w}")
            common = [
                k for k in shared_signature(a, b).cells if k in a.cells and k in b.cells
            ]
            sq = sum((a.cells[k].value - b.cells[k].value) ** 2 for k in common)
            tension = w * sq
            total += tension
            loss = tension / len(common) if common else 0.0
            overlaps.append(
                GluingOverlap(
                    pair=pair,
                    weight=w,
                    tension=tension,
                    section_count=len(common),
                    status="tense" if loss > tol.eps_glue else "compatible",
                )
            )
    return overlaps, total


@dataclass
class ObstructionSide:
    context_id: str
    value: float
    support: float
    confidence: float
    provenance: tuple[str, ...]
    polarities: dict[str, int] = field(default_factory=dict)
    t_min: Optional[int] = None
    t_max: Optional[int] = None
    metadata: dict[str, str] = field(default_factory=dict)

    def dominant_polarity(self) -> Optional[str]:
        if not self.polarities:
            return None
        return max(sorted(self.polarities), key=lambda p: self.polarities[p])

    def to_dict(self) -> dict:
        return {
            "context_id": self.context_id,
            "value": self.value,
            "support": self.support,
            "confidence": self.confidence,
            "provenance": list(self.provenance),
            "polarities": dict(sorted(self.polarities.items())),
            "t_min": self.t_min,
            "t_max": self.t_max,
            "metadata": dict(sorted(self.metadata.items())),
        }


@dataclass
class ObstructedCell:
    cell: tuple[str, str]
    sides: list[ObstructionSide]
    classification: str = "underdetermination"
    kind: str = "table"  # "table" (PSR cell) or "claim" (cause/effect pair)

    def to_dict(self) -> dict:
        return {
            "cell": list(self.cell),
            "sides": [s.to_dict() for s in self.sides],
            "classification": self.classification,
            "kind": self.kind,
        }


@dataclass
class Obstruction:
    cover: str
    cells: list[ObstructedCell]
    classification: str = "underdetermination"
    rationale: str = ""

    def to_dict(self) -> dict:
        return {
            "cover": self.cover,
            "cells": [c.to_dict() for c in self.cells],
            "classification": self.classification,
            "rationale": self.rationale,
        }


@dataclass
class GluedSection:
    """Support-weighted aggregation over the compatible cells of a cover."""

    target: str
    cells: dict[tuple[str, str], SectionCell]
    weights: dict[tuple[str, str], dict[str, float]]
    contributors: tuple[str, ...]

    def to_section(self, metadata: Optional[dict[str, str]] = None) -> Section:
        hs: list[str] = []
        ts: list[str] = []
        for h, t in self.cells:
            if h not in hs:
                hs.append(h)
            if t not in ts:
                ts.append(t)
        confs = [c.confidence for c in self.cells.values()]
        return Section(
            context_id=self.target,
            histories=tuple(hs),
            tests=tuple(ts),
            cells=dict(self.cells),
            mean_confidence=sum(confs) / len(confs) if confs else 1.0,
            metadata=dict(metadata or {}),
        )


@dataclass
class GlueOutcome:
    section: GluedSection
    obstruction: Optional[Obstruction]
    unsupported: list[tuple[str, str]]
    union_cells: int

    @property
    def compatible_cells(self) -> int:
        return len(self.section.cells)

    @property
    def obstructed_cells(self) -> int:
        return len(self.obstruction.cells) if self.obstruction else 0

    def accounting_ok(self) -> bool:
        return (
            self.compatible_cells + self.obstructed_cells + len(self.unsupported)
            == self.union_cells
        )


def _merge_polarities(sides: Iterable[ObstructionSide]) -> dict[str, int]:
    out: dict[str, int] = {}
    for side in sides:
        for pol, count in side.polarities.items():
            out[pol] = out.get(pol, 0) + count
    return out


def try_glue(
    sections: Sequence[Section],
    cover_name: str,
    tol: ToleranceConfig = ToleranceConfig(),
    target: str = "",
    contexts: Optional[dict[str, Context]] = None,
) -> GlueOutcome:
    """Attempt a glued section over the union signature of the cover members.

    Cells where every pair of contributing values sits within eps_glue and
    total support clears the threshold are aggregated with weights
    support x confidence.  Disagreeing cells become one obstruction record;
    under-supported cells stay local.  Partial results are normal: one call
    can yield both a glued section and an obstruction.
    """
    union: list[tuple[str, str]] = []
    seen: set[tuple[str, str]] = set()
    for sec in sections:
        for key in sec.cells:
            if key not in seen:
                seen.add(key)
                union.append(key)

    glued_cells: dict[tuple[str, str], SectionCell] = {}
    weights: dict[tuple[str, str], dict[str, float]] = {}
    obstructed: list[ObstructedCell] = []
    unsupported: list[tuple[str, str]] = []

    ctx_meta = contexts or {}
    for key in union:
        contributors = [(sec, sec.cells[key]) for sec in sections if key in sec.cells]
        values = [c.value for _, c in contributors]
        max_pair_gap = max(values) - min(values) if len(values) > 1 else 0.0
        total_support = sum(c.support for _, c in contributors)
        if max_pair_gap > tol.eps_glue:
            sides = [
                ObstructionSide(
                    context_id=sec.context_id,
                    value=cell.value,
                    support=cell.support,
                    confidence=cell.confidence,
                    provenance=cell.provenance,
                    polarities=dict(cell.polarities),
                    t_min=cell.t_min,
                    t_max=cell.t_max,
                    metadata=dict(
                        ctx_meta[sec.context_id].metadata
                        if sec.context_id in ctx_meta
                        else sec.metadata
                    ),
                )
                for sec, cell in contributors
            ]
            obstructed.append(ObstructedCell(cell=key, sides=sides))
            continue
        if total_support < tol.support_threshold:
            unsupported.append(key)
            continue
        omega = {
            sec.context_id: cell.support * cell.confidence for sec, cell in contributors
        }
        total_omega = sum(omega.values())
        if total_omega > 0:
            value = (
                sum(cell.value * omega[sec.context_id] for sec, cell in contributors)
                / total_omega
            )
        else:
            value = sum(values) / len(values)
        prov: list[str] = []
        for _, cell in contributors:
            for pid in cell.provenance:
                if pid not in prov:
                    prov.append(pid)
        t_mins = [c.t_min for _, c in contributors if c.t_min is not None]
        t_maxs = [c.t_max for _, c in contributors if c.t_max is not None]
        glued_cells[key] = SectionCell(
            value=value,
            support=total_support,
            confidence=(
                sum(cell.confidence * omega[sec.context_id] for sec, cell in contributors)
                / total_omega
                if total_omega > 0
                else sum(c.confidence for _, c in contributors) / len(contributors)
            ),
            provenance=tuple(prov),
            polarities=_merge_polarities(
                ObstructionSide(
                    context_id=sec.context_id,
                    value=cell.value,
                    support=cell.support,
                    confidence=cell.confidence,
                    provenance=cell.provenance,
                    polarities=dict(cell.polarities),
                )
                for sec, cell in contributors
            ),
            t_min=min(t_mins) if t_mins else None,
            t_max=max(t_maxs) if t_maxs else None,
        )
        weights[key] = omega

    obstruction = None
    if obstructed:
        obstruction = Obstruction(cover=cover_name, cells=obstructed)
        classify_obstruction(obstruction, tol)

    section = GluedSection(
        target=target or cover_name,
        cells=glued_cells,
        weights=weights,
        contributors=tuple(sec.context_id for sec in sections),
    )
    return GlueOutcome(
        section=section,
        obstruction=obstruction,
        unsupported=unsupported,
        union_cells=len(union),
    )


# ---------------------------------------------------------------------------
# Obstruction classification
# ---------------------------------------------------------------------------

_OPPOSED = {("positive", "negative"), ("negative", "positive")}


def _classify_cell(cell: ObstructedCell, tol: ToleranceConfig) -> str:
    """Ordered cascade: contradiction > drift > regime dependence >
    underdetermination."""
    sides = cell.sides
    polarities = [s.dominant_polarity() for s in sides]
    supports = [s.support for s in sides]

    for i in range(len(sides)):
        for j in range(i + 1, len(sides)):
            if (
                polarities[i] is not None
                and polarities[j] is not None
                and (polarities[i], polarities[j]) in _OPPOSED
                and supports[i] >= tol.support_threshold
                and supports[j] >= tol.support_threshold
            ):
                return "contradiction"

    distinct = {p for p in polarities if p is not None}
    if len(distinct) <= 1:
        ranges = [(s.t_min, s.t_max) for s in sides if s.t_min is not None]
        if len(ranges) >= 2:
            ranges.sort()
            disjoint = all(a_max < b_min for (_, a_max), (b_min, _) in zip(ranges, ranges[1:]))
            if disjoint:
                return "drift"

    for key in REGIME_METADATA_KEYS:
        values = {s.metadata.get(key) for s in sides if key in s.metadata}
        if len(values) > 1:
            return "regime_dependence"

    return "underdetermination"


_PRECEDENCE = {c: i for i, c in enumerate(CLASSIFICATIONS)}


def classify_obstruction(obstruction: Obstruction, tol: ToleranceConfig = ToleranceConfig()) -> str:
    """Classify every offending cell and roll the sharpest class up to the
    obstruction record."""
    if not obstruction.cells:
        raise ValueError("obstruction has no offending cells")
    for cell in obstruction.cells:
        cell.classification = _classify_cell(cell, tol)
    best = min(obstruction.cells, key=lambda c: _PRECEDENCE[c.classification])
    obstruction.classification = best.classification
    counts: dict[str, int] = {}
    for cell in obstruction.cells:
        counts[cell.classification] = counts.get(cell.classification, 0) + 1
    obstruction.rationale = ", ".join(
        f"{n} {c}" for c, n in sorted(counts.items(), key=lambda kv: _PRECEDENCE[kv[0]])
    )
    return obstruction.classification


# ---------------------------------------------------------------------------
# Two-stage gluing
# ---------------------------------------------------------------------------


@dataclass
class TwoStageResult:
    level1: dict[str, GlueOutcome]
    level2: GlueOutcome
    obstructions: list[tuple[str, Obstruction]]  # (level tag, record)


def two_stage_glue(
    level1: Sequence[tuple[str, str, Sequence[Section]]],
    level2_cover: str,
    level2_target: str,
    tol: ToleranceConfig = ToleranceConfig(),
    contexts: Optional[dict[str, Context]] = None,
) -> TwoStageResult:
    """Glue each level-1 cover, then glue the resulting sections over the
    level-2 cover.  Level-1 targets must be exactly the level-2 members; an
    obstructed member enters level 2 with its compatible partial section."""
    outcomes: dict[str, GlueOutcome] = {}
    tagged: list[tuple[str, Obstruction]] = []
    mid_sections: list[Section] = []
    targets: list[str] = []
    for cover_name, target, sections in level1:
        outcome = try_glue(sections, cover_name, tol, target=target, contexts=contexts)
        outcomes[cover_name] = outcome
        if outcome.obstruction:
            tagged.append(("level1", outcome.obstruction))
        meta = contexts[target].metadata if contexts and target in contexts else None
        mid_sections.append(outcome.section.to_section(meta))
        targets.append(target)

    if len(set(targets)) != len(targets):
        raise ValueError("level-1 targets are not distinct")
    members = {s.context_id for s in mid_sections}
    if members != set(targets):
        raise ValueError("level-1 targets do not match level-2 members")

    level2_outcome = try_glue(
        mid_sections, level2_cover, tol, target=level2_target, contexts=contexts
    )
    if level2_outcome.obstruction:
        tagged.append(("level2", level2_outcome.obstruction))
    return TwoStageResult(level1=outcomes, level2=level2_outcome, obstructions=tagged)


# ---------------------------------------------------------------------------
# Claim-level conflicts
# ---------------------------------------------------------------------------


def claim_conflicts(
    claims: Sequence,
    tol: ToleranceConfig = ToleranceConfig(),
    contexts: Optional[dict[str, Context]] = None,
    cover: str = "root",
) -> list[Obstruction]:
    """Detect same (cause, effect) pairs asserted with opposite polarity in
    different contexts and emit them as claim-level obstructions.

    A polarity flip changes the relation token, so it never lands on a shared
    table cell; this channel is what surfaces those conflicts.
    """
    by_pair: dict[tuple[str, str], dict[str, dict]] = {}
    for claim in claims:
        pair = (claim.cause, claim.effect)
        ctx_ids = claim.context_labels or ("",)
        for cid in ctx_ids:
            slot = by_pair.setdefault(pair, {}).setdefault(
                cid, {"polarities": {}, "provenance": [], "times": [], "count": 0}
            )
            slot["polarities"][claim.polarity] = slot["polarities"].get(claim.polarity, 0) + 1
            slot["count"] += 1
            for pid in claim.provenance:
                if pid not in slot["provenance"]:
                    slot["provenance"].append(pid)
            if claim.time_index is not None:
                slot["times"].append(claim.time_index)

    out: list[Obstruction] = []
    ctx_meta = contexts or {}
    for pair, sides in by_pair.items():
        dominant: dict[str, str] = {}
        for cid, slot in sides.items():
            dominant[cid] = max(sorted(slot["polarities"]), key=lambda p: slot["polarities"][p])
        pols = set(dominant.values())
        if not ("positive" in pols and "negative" in pols):
            continue
        cell_sides = [
            ObstructionSide(
                context_id=cid,
                value=1.0 if dominant[cid] == "positive" else 0.0,
                support=float(slot["count"]),
                confidence=1.0,
                provenance=tuple(slot["provenance"]),
                polarities=dict(slot["polarities"]),
                t_min=min(slot["times"]) if slot["times"] else None,
                t_max=max(slot["times"]) if slot["times"] else None,
                metadata=dict(ctx_meta[cid].metadata) if cid in ctx_meta else {},
            )
            for cid, slot in sides.items()
        ]
        record = Obstruction(
            cover=cover,
            cells=[ObstructedCell(cell=pair, sides=cell_sides, kind="claim")],
        )
        classify_obstruction(record, tol)
        out.append(record)
    return out
