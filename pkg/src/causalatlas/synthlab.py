"""Synthetic corpus generator with planted ground truth, plus recovery
scoring.

Regimes carry claim templates at chosen support levels; the overlap plan
plants agreeing or conflicting polarity on shared (cause, effect) pairs; the
drift plan modifies a second epoch; a spine plan realizes a high-support
chain.  Scoring checks what the engine recovered against what was planted.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .atlas import DriftReport, WorldModelBundle
from .core import canonical_json

POSITIVE_RELATION = "increases"
NEGATIVE_RELATION = "reduces"


@dataclass
class ClaimTemplate:
    cause: str
    effect: str
    polarity: str = "positive"
    support: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> "ClaimTemplate":
        return cls(
            cause=data["cause"],
            effect=data["effect"],
            polarity=data.get("polarity", "positive"),
            support=int(data.get("support", 1)),
        )


@dataclass
class Regime:
    context_id: str
    templates: list[ClaimTemplate]
    metadata: dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "Regime":
        return cls(
            context_id=data["context_id"],
            templates=[ClaimTemplate.from_dict(t) for t in data.get("templates", [])],
            metadata={str(k): str(v) for k, v in (data.get("metadata") or {}).items()},
        )


@dataclass
class OverlapPlan:
    """A (cause, effect) pair asserted by two regimes, agreeing or not."""

    pair: tuple[str, str]
    regimes: tuple[str, str]
    conflict: bool = False
    support: int = 3

    @classmethod
    def from_dict(cls, data: dict) -> "OverlapPlan":
        return cls(
            pair=tuple(data["pair"]),
            regimes=tuple(data["regimes"]),
            conflict=bool(data.get("conflict", False)),
            support=int(data.get("support", 3)),
        )


@dataclass
class DriftPlanEntry:
    pair: tuple[str, str]
    change: str = "polarity_flip"  # or "remove", "add_context"
    context_id: Optional[str] = None

    @classmethod
    def from_dict(cls, data: dict) -> "DriftPlanEntry":
        return cls(
            pair=tuple(data.get("pair", ("", ""))),
            change=data.get("change", "polarity_flip"),
            context_id=data.get("context_id"),
        )


@dataclass
class RegimeSpec:
    seed: int = 7
    regimes: list[Regime] = field(default_factory=list)
    overlap_plan: list[OverlapPlan] = field(default_factory=list)
    drift_plan: list[DriftPlanEntry] = field(default_factory=list)
    spine_plan: list[str] = field(default_factory=list)
    spine_support: int = 5
    noise_rate: float = 0.0

    def __post_init__(self):
        for regime in self.regimes:
            for t in regime.templates:
                if t.support < 1:
                    raise ValueError("support levels must be >= 1")
        if not 0.0 <= self.noise_rate < 1.0:
            raise ValueError("noise_rate must be in [0,1)")

    @classmethod
    def from_dict(cls, data: dict) -> "RegimeSpec":
        return cls(
            seed=int(data.get("seed", 7)),
            regimes=[Regime.from_dict(r) for r in data.get("regimes", [])],
            overlap_plan=[OverlapPlan.from_dict(o) for o in data.get("overlap_plan", [])],
            drift_plan=[DriftPlanEntry.from_dict(d) for d in data.get("drift_plan", [])],
            spine_plan=list(data.get("spine_plan", [])),
            spine_support=int(data.get("spine_support", 5)),
            noise_rate=float(data.get("noise_rate", 0.0)),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "RegimeSpec":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def planted_conflicts(self) -> list[tuple[str, str]]:
        return [o.pair for o in self.overlap_plan if o.conflict]

    def planted_drift(self) -> list[tuple[str, str]]:
        return [d.pair for d in self.drift_plan if d.change == "polarity_flip"]

    def planted_spine_edges(self) -> list[tuple[str, str]]:
        return list(zip(self.spine_plan, self.spine_plan[1:]))


def _relation_for(polarity: str) -> str:
    return POSITIVE_RELATION if polarity == "positive" else NEGATIVE_RELATION


def _event(cause: str, effect: str, polarity: str, regime: str, evidence_id: str) -> dict:
    return {
        "actor": cause,
        "action": f"{regime}_condition",
        "observation": effect,
        "relation": _relation_for(polarity),
        "polarity": polarity,
        "provenance": evidence_id,
    }


@dataclass
class GeneratedCorpus:
    episodes_path: Path
    evidence_path: Path
    cover_path: Path
    epoch2_path: Optional[Path]
    ground_truth: dict


def generate_corpus(spec: RegimeSpec, out_dir: str | Path) -> GeneratedCorpus:
    """Emit episodes/evidence/cover files for a regime spec, deterministically
    under the seed.  Conflicting overlaps are realized as opposite-polarity
    claims on the shared pair; support levels become repetition counts."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(spec.seed)

    def make_records(epoch: int) -> tuple[list[dict], list[dict]]:
        episodes: list[dict] = []
        evidence: list[dict] = []
        counter = 0

        def next_evidence(regime_id: str, meta: dict[str, str]) -> str:
            nonlocal counter
            counter += 1
            eid = f"ev_e{epoch}_{counter:04d}"
            evidence.append(
                {
                    "id": eid,
                    "source_id": f"synthetic_{regime_id}",
                    "retrieval_meta": {"regime_id": regime_id, **meta},
                    "extraction_confidence": 1.0,
                }
            )
            return eid

        drift_flips = (
            {d.pair for d in spec.drift_plan if d.change == "polarity_flip"} if epoch == 2 else set()
        )
        drift_removed = (
            {d.pair for d in spec.drift_plan if d.change == "remove"} if epoch == 2 else set()
        )

        for regime in spec.regimes:
            events: list[dict] = []
            for template in regime.templates:
                pair = (template.cause, template.effect)
                if pair in drift_removed:
                    continue
                polarity = template.polarity
                if pair in drift_flips:
                    polarity = "negative" if polarity == "positive" else "positive"
                for _ in range(template.support):
                    if spec.noise_rate > 0 and rng.random() < spec.noise_rate:
                        flipped = "negative" if polarity == "positive" else "positive"
                        events.append(
                            _event(
                                template.cause,
                                template.effect,
                                flipped,
                                regime.context_id,
                                next_evidence(regime.context_id, regime.metadata),
                            )
                        )
                    else:
                        events.append(
                            _event(
                                template.cause,
                                template.effect,
                                polarity,
                                regime.context_id,
                                next_evidence(regime.context_id, regime.metadata),
                            )
                        )
            if events:
                episodes.append(
                    {
                        "id": f"{regime.context_id}_e{epoch}",
                        "source_doc": f"synthetic_{regime.context_id}",
                        "events": events,
                    }
                )

        for plan in spec.overlap_plan:
            pair = plan.pair
            first, second = plan.regimes
            for regime_id, polarity in (
                (first, "positive"),
                (second, "negative" if plan.conflict else "positive"),
            ):
                regime = next((r for r in spec.regimes if r.context_id == regime_id), None)
                meta = regime.metadata if regime else {}
                events = [
                    _event(pair[0], pair[1], polarity, regime_id, next_evidence(regime_id, meta))
                    for _ in range(plan.support)
                ]
                episodes.append(
                    {
                        "id": f"overlap_{pair[0]}_{pair[1]}_{regime_id}_e{epoch}",
                        "source_doc": f"synthetic_{regime_id}",
                        "events": events,
                    }
                )

        if spec.spine_plan:
            for rep in range(spec.spine_support):
                events = []
                for cause, effect in zip(spec.spine_plan, spec.spine_plan[1:]):
                    events.append(
                        _event(cause, effect, "positive", "spine", next_evidence("spine", {}))
                    )
                episodes.append(
                    {
                        "id": f"spine_{rep}_e{epoch}",
                        "source_doc": "synthetic_spine",
                        "events": events,
                    }
                )

        if epoch == 2:
            for entry in spec.drift_plan:
                if entry.change == "add_context" and entry.context_id:
                    eid = next_evidence(entry.context_id, {})
                    episodes.append(
                        {
                            "id": f"drift_add_{entry.context_id}",
                            "source_doc": f"synthetic_{entry.context_id}",
                            "events": [
                                _event(
                                    f"{entry.context_id}_cause",
                                    f"{entry.context_id}_effect",
                                    "positive",
                                    entry.context_id,
                                    eid,
                                )
                            ],
                        }
                    )
        return episodes, evidence

    def write(epoch: int, episodes_name: str, evidence_name: str) -> tuple[Path, Path]:
        episodes, evidence = make_records(epoch)
        ep_path = out / episodes_name
        with open(ep_path, "w", encoding="utf-8") as f:
            for record in episodes:
                f.write(canonical_json(record) + "\n")
        ev_path = out / evidence_name
        with open(ev_path, "w", encoding="utf-8") as f:
            for record in evidence:
                f.write(canonical_json(record) + "\n")
        return ep_path, ev_path

    episodes_path, evidence_path = write(1, "episodes.jsonl", "evidence.jsonl")
    epoch2_path = None
    if spec.drift_plan:
        epoch2_path, _ = write(2, "episodes_epoch2.jsonl", "evidence_epoch2.jsonl")

    cover = {
        "contexts": [
            {
                "id": r.context_id,
                "label": r.context_id.replace("_", " "),
                "level": "regime",
                "metadata": r.metadata,
            }
            for r in spec.regimes
        ],
        "rules": [{"context": r.context_id, "meta": "regime_id", "equals": r.context_id, "level": "regime"} for r in spec.regimes]
        + [{"context_from": "actor"}],
        "covers": [],
    }
    cover_path = out / "cover.json"
    cover_path.write_text(canonical_json(cover), encoding="utf-8")

    ground_truth = {
        "conflicts": [list(p) for p in spec.planted_conflicts()],
        "drift": [list(p) for p in spec.planted_drift()],
        "spine_edges": [list(e) for e in spec.planted_spine_edges()],
    }
    (out / "ground_truth.json").write_text(canonical_json(ground_truth), encoding="utf-8")
    return GeneratedCorpus(
        episodes_path=episodes_path,
        evidence_path=evidence_path,
        cover_path=cover_path,
        epoch2_path=epoch2_path,
        ground_truth=ground_truth,
    )


# ---------------------------------------------------------------------------
# Recovery scoring
# ---------------------------------------------------------------------------


@dataclass
class RecoveryScore:
    obstruction_precision: float
    obstruction_recall: float
    drift_precision: float
    drift_recall: float
    spine_recovery: float
    found_conflicts: list[tuple[str, str]] = field(default_factory=list)
    found_drift: list[tuple[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "obstruction_precision": self.obstruction_precision,
            "obstruction_recall": self.obstruction_recall,
            "drift_precision": self.drift_precision,
            "drift_recall": self.drift_recall,
            "spine_recovery": self.spine_recovery,
            "found_conflicts": [list(p) for p in self.found_conflicts],
            "found_drift": [list(p) for p in self.found_drift],
        }


def _precision_recall(found: set, planted: set) -> tuple[float, float]:
    # Vacuous cases score 1 by convention.
    precision = len(found & planted) / len(found) if found else 1.0
    recall = len(found & planted) / len(planted) if planted else 1.0
    return precision, recall


def score_recovery(
    bundle: WorldModelBundle,
    spec: RegimeSpec,
    diff: Optional[DriftReport] = None,
    spine: Optional[Sequence[dict]] = None,
) -> RecoveryScore:
    """Exact (cause, effect) matching of recovered obstructions, drift
    entries, and spine edges against the planted ground truth."""
    found_conflicts: set[tuple[str, str]] = set()
    for ob in bundle.diagnostics.obstructions:
        for cell in ob.cells:
            if cell.kind == "claim" and cell.classification == "contradiction":
                found_conflicts.add(tuple(cell.cell))

    planted_conflicts = set(spec.planted_conflicts())
    ob_precision, ob_recall = _precision_recall(found_conflicts, planted_conflicts)

    found_drift: set[tuple[str, str]] = set()
    if diff is not None:
        for entry in diff.causal:
            cause, effect = entry["family"].split("->", 1)
            found_drift.add((cause, effect))
    drift_precision, drift_recall = _precision_recall(found_drift, set(spec.planted_drift()))

    planted_edges = set(spec.planted_spine_edges())
    if planted_edges and spine is not None:
        found_edges = {
            (e["cause"], e["effect"]) for path in spine for e in path.get("edges", [])
        }
        spine_recovery = len(found_edges & planted_edges) / len(planted_edges)
    else:
        spine_recovery = 1.0

    return RecoveryScore(
        obstruction_precision=ob_precision,
        obstruction_recall=ob_recall,
        drift_precision=drift_precision,
        drift_recall=drift_recall,
        spine_recovery=spine_recovery,
        found_conflicts=sorted(found_conflicts),
        found_drift=sorted(found_drift),
    )
