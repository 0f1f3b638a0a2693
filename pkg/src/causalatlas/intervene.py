"""Localized intervention probes and grounded counterfactual substrates.

A probe restricts the state to a cover of comparable contexts, edits each
member locally, aggregates with the gluing weights, and re-checks
compatibility.  A grounded intervention instead evaluates against an external
tabular substrate (gridded map, station table, measurement panel), rewrites
the matching causal observations, and rebuilds the whole world model from the
modified store.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .atlas import WorldModelBundle
from .core import (
    CausalEvent,
    Episode,
    EpisodeStore,
    EvidenceUnit,
    ParseReport,
    infer_polarity,
    normalize_slot,
    sha256_file,
)
from .pipeline import BuildInputs, RunConfig, build_world
from .sheaf import Section, SectionCell, ToleranceConfig, gluing_tension, try_glue

INTERVENTION_KINDS = ("edit_test", "fix_action", "insert_repair", "condition_regime", "grounded")

GROUNDING_FLAGS = ("full_reproduction", "figure_data_proxy")


class InterventionError(ValueError):
    """Invalid intervention spec or missing target."""


class SubstrateError(ValueError):
    """Invalid or empty substrate input."""


# ---------------------------------------------------------------------------
# Specs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RewriteRule:
    """Triple pattern -> replacement.  Pattern slots match exactly or are the
    wildcard '*'."""

    match: tuple[str, str, str]
    replacement: tuple[str, str, str]
    note: str = ""

    def __post_init__(self):
        if any(not slot for slot in self.replacement):
            raise InterventionError("replacement slots must be nonempty")

    def matches(self, event: CausalEvent) -> bool:
        for pattern, value in zip(self.match, (event.actor, event.relation, event.observation)):
            if pattern != "*" and pattern != value:
                return False
        return True

    @classmethod
    def from_dict(cls, data: dict) -> "RewriteRule":
        def triple(raw) -> tuple[str, str, str]:
            if isinstance(raw, str):
                parts = raw.split("|")
            else:
                parts = list(raw)
            if len(parts) != 3:
                raise InterventionError(f"triple needs 3 slots: {raw!r}")
            return tuple(p if p == "*" else normalize_slot(p) for p in parts)

        return cls(
            match=triple(data["match"]),
            replacement=triple(data["replacement"]),
            note=data.get("note", ""),
        )


@dataclass
class InterventionSpec:
    kind: str
    cover: str = "root"
    parameters: dict = field(default_factory=dict)
    rewrites: list[RewriteRule] = field(default_factory=list)
    substrate: Optional[dict] = None

    def __post_init__(self):
        if self.kind not in INTERVENTION_KINDS:
            raise InterventionError(f"unknown intervention kind: {self.kind}")

    @classmethod
    def from_dict(cls, data: dict) -> "InterventionSpec":
        return cls(
            kind=data.get("kind", "grounded"),
            cover=data.get("cover", "root"),
            parameters=dict(data.get("parameters", {})),
            rewrites=[RewriteRule.from_dict(r) for r in data.get("rewrites", [])],
            substrate=data.get("substrate"),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "InterventionSpec":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "cover": self.cover,
            "parameters": self.parameters,
            "rewrites": [
                {"match": list(r.match), "replacement": list(r.replacement), "note": r.note}
                for r in self.rewrites
            ],
            "substrate": self.substrate,
        }


# ---------------------------------------------------------------------------
# Local section interventions
# ---------------------------------------------------------------------------


def _copy_section(section: Section) -> Section:
    return Section(
        context_id=section.context_id,
        histories=section.histories,
        tests=section.tests,
        cells={
            k: SectionCell(
                value=c.value,
                support=c.support,
                confidence=c.confidence,
                provenance=c.provenance,
                polarities=dict(c.polarities),
                t_min=c.t_min,
                t_max=c.t_max,
            )
            for k, c in section.cells.items()
        },
        mean_confidence=section.mean_confidence,
        metadata=dict(section.metadata),
    )


def apply_local_intervention(section: Section, spec: InterventionSpec) -> Section:
    """Apply one local edit and return a new section (input untouched).

    edit_test sets a test's predicted value (optionally renaming the token);
    fix_action pins a test and renormalizes its rows; insert_repair adds a
    declared repair test; condition_regime drops cells whose provenance
    metadata conflicts with the declared regime.
    """
    params = spec.parameters
    out = _copy_section(section)

    if spec.kind == "edit_test":
        target = normalize_slot_triple(params.get("target", ""))
        if target not in out.tests:
            raise InterventionError(f"target test not present: {target}")
        value = params.get("value")
        history = params.get("history")
        history = normalize_slot_triple(history) if history else None
        for (h, t) in list(out.cells):
            if t != target or (history is not None and h != history):
                continue
            if value is not None:
                out.cells[(h, t)].value = float(value)
        replacement = params.get("rename")
        if replacement:
            new_key = normalize_slot_triple(replacement)
            out = _rename_test(out, target, new_key)
        return out

    if spec.kind == "fix_action":
        target = normalize_slot_triple(params.get("target", ""))
        if target not in out.tests:
            raise InterventionError(f"target test not present: {target}")
        for h in out.histories:
            row_keys = [(h, t) for t in out.tests if (h, t) in out.cells]
            if (h, target) not in out.cells:
                continue
            mass = sum(out.cells[k].value for k in row_keys)
            for k in row_keys:
                out.cells[k].value = mass if k == (h, target) else 0.0
        return out

    if spec.kind == "insert_repair":
        target = normalize_slot_triple(params.get("target", ""))
        if not target:
            raise InterventionError("insert_repair needs a target triple")
        value = float(params.get("value", 1.0))
        support = float(params.get("support", 1.0))
        history = params.get("history")
        histories = [normalize_slot_triple(history)] if history else list(out.histories)
        if target not in out.tests:
            out.tests = tuple(list(out.tests) + [target])
        for h in histories:
            out.cells[(h, target)] = SectionCell(
                value=value,
                support=support,
                confidence=1.0,
                provenance=(params.get("note", "repair"),),
            )
        return out

    if spec.kind == "condition_regime":
        key = params.get("key")
        expected = params.get("value")
        if not key:
            raise InterventionError("condition_regime needs a metadata key")
        evidence_meta = params.get("_evidence_meta", {})
        dropped = []
        for cell_key, cell in out.cells.items():
            declared = {
                evidence_meta[pid].get(key)
                for pid in cell.provenance
                if pid in evidence_meta and key in evidence_meta[pid]
            }
            declared.discard(None)
            if declared and expected not in declared:
                dropped.append(cell_key)
        for k in dropped:
            del out.cells[k]
        return out

    if spec.kind == "grounded":
        return out  # grounded interventions act on the store, not the section

    raise InterventionError(f"unhandled kind {spec.kind}")


def normalize_slot_triple(raw) -> str:
    if isinstance(raw, (list, tuple)):
        return "|".join(normalize_slot(p) for p in raw)
    parts = str(raw).split("|")
    if len(parts) == 3:
        return "|".join(normalize_slot(p) for p in parts)
    return normalize_slot(raw)


def _rename_test(section: Section, old: str, new: str) -> Section:
    tests = tuple(new if t == old else t for t in section.tests)
    cells = {}
    for (h, t), cell in section.cells.items():
        cells[(h, new if t == old else t)] = cell
    return Section(
        context_id=section.context_id,
        histories=section.histories,
        tests=tests,
        cells=cells,
        mean_confidence=section.mean_confidence,
        metadata=dict(section.metadata),
    )


@dataclass
class InterventionResult:
    cover: str
    sections: dict[str, Section]
    aggregated: Section
    overlaps: list
    obstruction_cells: int
    coherent: bool
    modified_count: int

    def to_dict(self) -> dict:
        return {
            "cover": self.cover,
            "contexts": sorted(self.sections),
            "coherent": self.coherent,
            "obstruction_cells": self.obstruction_cells,
            "modified_count": self.modified_count,
            "overlaps": [o.to_dict() for o in self.overlaps],
        }


def do_j(
    sections: Sequence[Section],
    spec: InterventionSpec,
    tol: ToleranceConfig = ToleranceConfig(),
) -> InterventionResult:
    """The j-localized probe: intervene on every member of the cover,
    aggregate with the gluing weights, and recompute compatibility.

    The result flags whether the intervened family still glues (a coherent
    intervention-conditioned prediction) or is only locally supported.
    """
    if not sections:
        raise InterventionError(f"cover {spec.cover} has no member sections")
    intervened: dict[str, Section] = {}
    modified = 0
    for section in sections:
        new = apply_local_intervention(section, spec)
        for key, cell in new.cells.items():
            old = section.cells.get(key)
            if old is None or abs(old.value - cell.value) > 1e-12:
                modified += 1
        modified += sum(1 for key in section.cells if key not in new.cells)
        intervened[section.context_id] = new

    members = list(intervened.values())
    outcome = try_glue(members, spec.cover, tol, target=spec.cover)
    if len(members) >= 2:
        overlaps, _ = gluing_tension(members, tol=tol)
    else:
        overlaps = []
    coherent = outcome.obstruction is None and all(o.status == "compatible" for o in overlaps)
    return InterventionResult(
        cover=spec.cover,
        sections=intervened,
        aggregated=outcome.section.to_section(),
        overlaps=overlaps,
        obstruction_cells=outcome.obstructed_cells,
        coherent=coherent,
        modified_count=modified,
    )


# ---------------------------------------------------------------------------
# Substrates
# ---------------------------------------------------------------------------


@dataclass
class SubstrateResult:
    kind: str
    baseline: float
    counterfactual: float
    table: list[dict]
    provenance: dict[str, str]
    units: str = ""
    grounding: str = "figure_data_proxy"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.grounding not in GROUNDING_FLAGS:
            raise SubstrateError(f"unknown grounding flag: {self.grounding}")

    @property
    def effect(self) -> float:
        return self.counterfactual - self.baseline

    @property
    def relative_effect(self) -> float:
        return self.effect / self.baseline if self.baseline else 0.0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "baseline": self.baseline,
            "counterfactual": self.counterfactual,
            "effect": self.effect,
            "relative_effect": self.relative_effect,
            "table": self.table,
            "provenance": self.provenance,
            "units": self.units,
            "grounding": self.grounding,
            "extra": self.extra,
        }


def scale_map_counterfactual(
    grid: Sequence[tuple[float, float, float]],
    m_base: float,
    m_cf: float,
    provenance: Optional[dict[str, str]] = None,
    units: str = "W m-2",
) -> SubstrateResult:
    """Scale a gridded value map by the counterfactual/baseline table ratio.

    Baseline and counterfactual metrics are cos(latitude)-weighted means of
    the map; the suppressed fraction 1 - m_cf/m_base rides along unrounded.
    """
    if m_base == 0:
        raise SubstrateError("baseline table value m_base must be nonzero")
    if not grid:
        raise SubstrateError("empty grid")
    factor = m_cf / m_base
    wsum = 0.0
    vsum = 0.0
    by_lat: dict[float, list[float]] = {}
    for lat, lon, value in grid:
        w = math.cos(math.radians(lat))
        wsum += w
        vsum += w * value
        by_lat.setdefault(lat, []).append(value)
    if wsum <= 0:
        raise SubstrateError("grid latitude weights sum to zero")
    baseline = vsum / wsum
    counterfactual = baseline * factor
    table = [
        {
            "lat": lat,
            "baseline_mean": sum(vals) / len(vals),
            "counterfactual_mean": factor * sum(vals) / len(vals),
        }
        for lat, vals in sorted(by_lat.items())
    ]
    return SubstrateResult(
        kind="scale_map",
        baseline=baseline,
        counterfactual=counterfactual,
        table=table,
        provenance=provenance or {},
        units=units,
        extra={"factor": factor, "suppressed_fraction": 1.0 - factor},
    )


def index_substitution(
    anomalies: Sequence[float],
    provenance: Optional[dict[str, str]] = None,
    stations: Optional[Sequence[str]] = None,
) -> SubstrateResult:
    """Discharge-style index: baseline = 100 + mean anomaly, counterfactual
    restores the 100 baseline."""
    if not anomalies:
        raise SubstrateError("no station anomalies")
    mean_anomaly = sum(anomalies) / len(anomalies)
    baseline = 100.0 + mean_anomaly
    table = [
        {"station": stations[i] if stations else f"station_{i + 1}", "anomaly_pct": a}
        for i, a in enumerate(anomalies)
    ]
    return SubstrateResult(
        kind="index_substitution",
        baseline=baseline,
        counterfactual=100.0,
        table=table,
        provenance=provenance or {},
        units="index",
        extra={"mean_anomaly_pct": mean_anomaly, "stations": len(anomalies)},
    )


def group_mean_substitution(
    panel: Sequence[dict],
    base_group: str,
    target_group: str,
    focus_markers: Sequence[str],
    transform: str = "log1p",
    group_column: str = "group",
    provenance: Optional[dict[str, str]] = None,
) -> SubstrateResult:
    """Substitute one experimental group's marker profile for another's.

    log1p mode: index = mean of per-marker log(1+x) means over the focus
    markers.  fraction mode: values are 0/1 and the index is the sum of the
    per-marker positive fractions.  Co-shift scores (product of absolute
    per-marker shifts on an edge's endpoints) land in ``extra``.
    """
    if transform not in ("log1p", "fraction"):
        raise SubstrateError(f"unknown transform: {transform}")
    rows_base = [r for r in panel if r.get(group_column) == base_group]
    rows_target = [r for r in panel if r.get(group_column) == target_group]
    if not rows_base or not rows_target:
        raise SubstrateError(f"empty group: {base_group if not rows_base else target_group}")

    def marker_mean(rows: Sequence[dict], marker: str) -> float:
        try:
            values = [float(r[marker]) for r in rows]
        except KeyError:
            raise SubstrateError(f"missing marker column: {marker}")
        if transform == "log1p":
            values = [math.log1p(v) for v in values]
        return sum(values) / len(values)

    means_base = {m: marker_mean(rows_base, m) for m in focus_markers}
    means_target = {m: marker_mean(rows_target, m) for m in focus_markers}
    if transform == "log1p":
        baseline = sum(means_base.values()) / len(focus_markers)
        counterfactual = sum(means_target.values()) / len(focus_markers)
    else:
        baseline = sum(means_base.values())
        counterfactual = sum(means_target.values())

    shifts = {m: means_target[m] - means_base[m] for m in focus_markers}
    co_shift = {}
    markers = list(focus_markers)
    for i, a in enumerate(markers):
        for b in markers[i + 1 :]:
            co_shift[f"{a}->{b}"] = abs(shifts[a]) * abs(shifts[b])

    table = [
        {
            "marker": m,
            "base_mean": means_base[m],
            "target_mean": means_target[m],
            "shift": shifts[m],
        }
        for m in focus_markers
    ]
    return SubstrateResult(
        kind="group_mean_substitution",
        baseline=baseline,
        counterfactual=counterfactual,
        table=table,
        provenance=provenance or {},
        units=transform,
        extra={
            "base_group": base_group,
            "target_group": target_group,
            "co_shift": co_shift,
            "rows": {base_group: len(rows_base), target_group: len(rows_target)},
        },
    )


# ---------------------------------------------------------------------------
# Substrate file loaders
# ---------------------------------------------------------------------------


def load_grid_csv(path: str | Path) -> list[tuple[float, float, float]]:
    grid = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        for row in csv.DictReader(f):
            grid.append((float(row["lat"]), float(row["lon"]), float(row["value"])))
    return grid


def load_stations_csv(path: str | Path) -> tuple[list[str], list[float]]:
    names, values = [], []
    with open(path, "r", encoding="utf-8", newline="") as f:
        for row in csv.DictReader(f):
            names.append(row.get("station", f"station_{len(names) + 1}"))
            values.append(float(row["anomaly_pct"]))
    return names, values


def load_panel_csv(path: str | Path) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return [dict(row) for row in csv.DictReader(f)]


def evaluate_substrate(spec: InterventionSpec, base_dir: str | Path = ".") -> SubstrateResult:
    """Evaluate the substrate block of a grounded intervention spec."""
    if not spec.substrate:
        raise SubstrateError("intervention spec has no substrate block")
    sub = spec.substrate
    kind = sub.get("kind")
    path = Path(sub.get("path", ""))
    if not path.is_absolute():
        path = Path(base_dir) / path
    if not path.exists():
        raise SubstrateError(f"substrate file not found: {path}")
    provenance = {str(path.name): sha256_file(path)}
    grounding = sub.get("grounding", "figure_data_proxy")

    if kind == "scale_map":
        result = scale_map_counterfactual(
            load_grid_csv(path),
            m_base=float(sub["m_base"]),
            m_cf=float(sub["m_cf"]),
            provenance=provenance,
        )
    elif kind == "stations":
        names, values = load_stations_csv(path)
        result = index_substitution(values, provenance=provenance, stations=names)
    elif kind == "panel":
        result = group_mean_substitution(
            load_panel_csv(path),
            base_group=sub["base_group"],
            target_group=sub["target_group"],
            focus_markers=list(sub["focus_markers"]),
            transform=sub.get("transform", "log1p"),
            group_column=sub.get("group_column", "group"),
            provenance=provenance,
        )
    else:
        raise SubstrateError(f"unknown substrate kind: {kind}")
    result.grounding = grounding
    return result


# ---------------------------------------------------------------------------
# Observation rewriting and rebuild
# ---------------------------------------------------------------------------


def rewrite_observations(
    store: EpisodeStore,
    rules: Sequence[RewriteRule],
    grounded_episode: Optional[Episode] = None,
) -> tuple[EpisodeStore, int]:
    """Replace matching observations, preserving provenance and appending the
    rule note; optionally append a data-grounded episode.  Event count is
    conserved apart from that appended episode."""
    modified = 0
    episodes: list[Episode] = []
    for ep in store.episodes:
        events = []
        for ev in ep.events:
            rule = next((r for r in rules if r.matches(ev)), None)
            if rule is None:
                events.append(ev)
                continue
            actor, relation, observation = rule.replacement
            events.append(
                CausalEvent(
                    event_id=ev.event_id,
                    actor=actor,
                    action=ev.action,
                    observation=observation,
                    relation=relation,
                    polarity=infer_polarity(relation),
                    provenance=ev.provenance,
                    time_index=ev.time_index,
                    display=f"{actor} {relation} {observation}"
                    + (f" [{rule.note}]" if rule.note else ""),
                )
            )
            modified += 1
        episodes.append(Episode(id=ep.id, source_doc=ep.source_doc, events=tuple(events)))

    evidence = dict(store.evidence)
    if grounded_episode is not None:
        episodes.append(grounded_episode)
        for ev in grounded_episode.events:
            if ev.provenance not in evidence:
                evidence[ev.provenance] = EvidenceUnit(
                    id=ev.provenance,
                    source_id=grounded_episode.source_doc,
                    extraction_confidence=1.0,
                )

    report = ParseReport(
        total=store.report.total,
        accepted=store.report.accepted,
        rejected=store.report.rejected,
        rejections=list(store.report.rejections),
        stubbed_evidence=store.report.stubbed_evidence,
    )
    return EpisodeStore(episodes=tuple(episodes), evidence=evidence, report=report), modified


def grounded_episode_from(result: SubstrateResult, episode_id: str = "grounded") -> Episode:
    """Wrap a measured substrate result as a data-grounded episode."""
    events = (
        CausalEvent(
            event_id=f"{episode_id}:0",
            actor=f"measured_{result.kind}",
            action="substrate_measurement",
            observation=f"baseline_{_fmt(result.baseline)}",
            relation="sets_to",
            polarity="sets",
            provenance=f"{episode_id}:substrate",
            display=f"measured {result.kind} baseline {_fmt(result.baseline)}",
        ),
        CausalEvent(
            event_id=f"{episode_id}:1",
            actor=f"measured_{result.kind}",
            action="substrate_measurement",
            observation=f"counterfactual_{_fmt(result.counterfactual)}",
            relation="sets_to",
            polarity="sets",
            provenance=f"{episode_id}:substrate",
            display=f"measured {result.kind} counterfactual {_fmt(result.counterfactual)}",
        ),
    )
    return Episode(id=episode_id, source_doc="substrate", events=events)


def _fmt(x: float) -> str:
    return f"{x:.6g}".replace("-", "m").replace("+", "")


def rebuild_world(
    store: EpisodeStore,
    cover_data: dict,
    config: RunConfig,
    input_hashes: Optional[dict] = None,
    parent_run: Optional[str] = None,
    substrate_results: Sequence[dict] = (),
    intervention: Optional[dict] = None,
) -> WorldModelBundle:
    """Full pipeline rerun over a (possibly rewritten) store."""
    inputs = BuildInputs(
        store=store,
        cover_data=cover_data,
        claims=None,
        input_hashes=dict(input_hashes or {}),
    )
    return build_world(
        inputs,
        config,
        parent_run=parent_run,
        substrate_results=list(substrate_results),
        intervention=intervention,
    )


def run_grounded_intervention(
    store: EpisodeStore,
    cover_data: dict,
    config: RunConfig,
    spec: InterventionSpec,
    base_dir: str | Path = ".",
    parent_run: Optional[str] = None,
) -> tuple[WorldModelBundle, Optional[SubstrateResult], int]:
    """The full grounded loop: evaluate the substrate (when present), rewrite
    matching observations, rebuild, and return the new bundle."""
    substrate_result: Optional[SubstrateResult] = None
    if spec.substrate:
        substrate_result = evaluate_substrate(spec, base_dir)

    grounded_ep = None
    if substrate_result is not None and spec.parameters.get("append_grounded_episode"):
        grounded_ep = grounded_episode_from(substrate_result)

    new_store, modified = rewrite_observations(store, spec.rewrites, grounded_ep)
    changed = modified > 0 or substrate_result is not None or grounded_ep is not None
    if not changed:
        # true identity: the rebuilt world IS the baseline world, bit for bit
        bundle = rebuild_world(new_store, cover_data, config)
        return bundle, None, 0
    # audit echo carries the substrate file's name, not its transient path;
    # the durable identity is the content hash in SubstrateResult.provenance
    spec_echo = spec.to_dict()
    if spec_echo.get("substrate") and spec_echo["substrate"].get("path"):
        spec_echo["substrate"] = dict(spec_echo["substrate"])
        spec_echo["substrate"]["path"] = Path(spec_echo["substrate"]["path"]).name
    bundle = rebuild_world(
        new_store,
        cover_data,
        config,
        parent_run=parent_run,
        substrate_results=[substrate_result.to_dict()] if substrate_result else [],
        intervention={"spec": spec_echo, "modified_events": modified},
    )
    return bundle, substrate_result, modified
