"""Domain types and ingestion for causal event corpora.

Everything downstream (local tables, gluing, interventions, atlases) runs on
the objects defined here: evidence units, causal events, episodes, claim rows,
contexts, and the context site with its covers and overlap morphisms.  Input
is file-based and extractor-neutral; any upstream pipeline that emits the
documented JSONL/CSV schemas can feed the engine.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

ROOT_CONTEXT_ID = "corpus"

POLARITIES = ("positive", "negative", "neutral", "sets")

# Relation surfaces mapped to a default polarity when the record omits one.
_RELATION_POLARITY = {
    "increases": "positive",
    "increase": "positive",
    "leads_to": "positive",
    "causes": "positive",
    "expands_to": "positive",
    "produces": "positive",
    "improves": "positive",
    "reduces": "negative",
    "decreases": "negative",
    "reduced_by": "negative",
    "weakens": "negative",
    "sets_to": "sets",
}

CONTEXT_LEVELS = ("corpus", "document", "topic", "regime", "custom")

MORPHISM_KINDS = ("inclusion", "overlap", "refinement", "projection", "translation")


class IngestError(ValueError):
    """Unrecoverable ingestion problem (empty file, unreadable input)."""


class ConfigError(ValueError):
    """Invalid rule, cover, or context configuration."""


class SiteError(ValueError):
    """Context site invariant violation."""


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

_WS_RE = re.compile(r"\s+")
_SLOT_DROP_RE = re.compile(r"[^a-z0-9_.%-]")
_TRIPLE_RE = re.compile(r"^[^|]+\|[^|]+\|[^|]+$")


def normalize_slot(text: str) -> str:
    """Normalize one token slot: lowercase, whitespace to underscore, charset
    restricted to [a-z0-9_.%-].  Embedded pipes collapse to underscore since
    the pipe is reserved as the triple separator."""
    s = str(text).strip().lower()
    s = _WS_RE.sub("_", s)
    s = s.replace("|", "_")
    s = _SLOT_DROP_RE.sub("", s)
    return s


def normalize_token(text: str) -> str:
    """Normalize a token, keeping the pipes of a full ``a|b|c`` triple form."""
    s = str(text).strip()
    if _TRIPLE_RE.match(s):
        parts = [normalize_slot(p) for p in s.split("|")]
        if all(parts):
            return "|".join(parts)
    return normalize_slot(s)


def triple_key(actor: str, relation: str, observation: str) -> str:
    """Canonical cell key: actor|relation|observation (already normalized)."""
    return f"{actor}|{relation}|{observation}"


def split_triple(key: str) -> tuple[str, str, str]:
    actor, relation, observation = key.split("|")
    return actor, relation, observation


def infer_polarity(relation: str) -> str:
    return _RELATION_POLARITY.get(relation, "neutral")


def sha256_file(path: Path | str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def canonical_json(obj) -> str:
    """Stable JSON used everywhere a byte-identical artifact is promised."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvidenceUnit:
    """A provenance anchor: paper, paragraph, table row, trace segment."""

    id: str
    source_id: str
    locator: Optional[str] = None
    retrieval_meta: dict[str, str] = field(default_factory=dict)
    extraction_confidence: float = 1.0
    synthesized: bool = False

    def __post_init__(self):
        if not 0.0 <= self.extraction_confidence <= 1.0:
            raise ValueError(
                f"extraction_confidence out of [0,1]: {self.extraction_confidence}"
            )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "source_id": self.source_id,
            "locator": self.locator,
            "retrieval_meta": dict(sorted(self.retrieval_meta.items())),
            "extraction_confidence": self.extraction_confidence,
            "synthesized": self.synthesized,
        }


@dataclass(frozen=True)
class CausalEvent:
    """One extracted causal observation. ``key`` is the alignment unit for all
    cross-context comparison."""

    event_id: str
    actor: str
    action: str
    observation: str
    relation: str
    polarity: str
    provenance: str
    time_index: Optional[int] = None
    display: str = ""

    @property
    def key(self) -> str:
        return triple_key(self.actor, self.relation, self.observation)

    def to_dict(self) -> dict:
        return {
            "event_id": self.event_id,
            "actor": self.actor,
            "action": self.action,
            "observation": self.observation,
            "relation": self.relation,
            "polarity": self.polarity,
            "provenance": self.provenance,
            "time_index": self.time_index,
            "display": self.display,
        }


@dataclass(frozen=True)
class Episode:
    id: str
    source_doc: str
    events: tuple[CausalEvent, ...]

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "source_doc": self.source_doc,
            "events": [e.to_dict() for e in self.events],
        }


@dataclass(frozen=True)
class ClaimRow:
    """Normalized causal claim (cause, effect, polarity, context, provenance)."""

    cause: str
    effect: str
    polarity: str
    relation: str = ""
    mediator: Optional[str] = None
    modifier: Optional[str] = None
    strength: Optional[float] = None
    context_labels: tuple[str, ...] = ()
    provenance: tuple[str, ...] = ()
    time_index: Optional[int] = None

    @property
    def pair(self) -> tuple[str, str]:
        return (self.cause, self.effect)

    def to_dict(self) -> dict:
        return {
            "cause": self.cause,
            "effect": self.effect,
            "polarity": self.polarity,
            "relation": self.relation,
            "mediator": self.mediator,
            "modifier": self.modifier,
            "strength": self.strength,
            "context_labels": list(self.context_labels),
            "provenance": list(self.provenance),
            "time_index": self.time_index,
        }


@dataclass(frozen=True)
class Context:
    id: str
    label: str
    level: str = "topic"
    metadata: dict[str, str] = field(default_factory=dict)
    derived: bool = False

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "label": self.label,
            "level": self.level,
            "metadata": dict(sorted(self.metadata.items())),
            "derived": self.derived,
        }


@dataclass(frozen=True)
class Morphism:
    source: str
    target: str
    kind: str

    def to_dict(self) -> dict:
        return {"source": self.source, "target": self.target, "kind": self.kind}


@dataclass(frozen=True)
class Cover:
    name: str
    target: str
    members: tuple[str, ...]

    def to_dict(self) -> dict:
        return {"name": self.name, "target": self.target, "members": list(self.members)}


@dataclass(frozen=True)
class OverlapEdge:
    """Materialized pairwise overlap: contexts a and b share events."""

    a: str
    b: str
    context_id: str
    shared_events: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "context_id": self.context_id,
            "shared_events": list(self.shared_events),
        }


@dataclass
class ParseReport:
    total: int = 0
    accepted: int = 0
    rejected: int = 0
    rejections: list[str] = field(default_factory=list)
    stubbed_evidence: int = 0

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "rejections": list(self.rejections),
            "stubbed_evidence": self.stubbed_evidence,
        }


@dataclass
class EpisodeStore:
    """Immutable snapshot of a parsed corpus: episodes, flattened events, and
    the evidence registry (including synthesized stubs)."""

    episodes: tuple[Episode, ...]
    evidence: dict[str, EvidenceUnit]
    report: ParseReport

    def __post_init__(self):
        self._events = tuple(e for ep in self.episodes for e in ep.events)
        self._by_id = {e.event_id: e for e in self._events}

    @property
    def events(self) -> tuple[CausalEvent, ...]:
        return self._events

    def event(self, event_id: str) -> CausalEvent:
        return self._by_id[event_id]

    @property
    def event_count(self) -> int:
        return len(self._events)

    @property
    def episode_count(self) -> int:
        return len(self.episodes)

    def confidence_of(self, provenance_id: str) -> float:
        unit = self.evidence.get(provenance_id)
        return unit.extraction_confidence if unit is not None else 0.5

    def serialize(self) -> bytes:
        payload = {
            "episodes": [ep.to_dict() for ep in self.episodes],
            "evidence": [u.to_dict() for u in sorted(self.evidence.values(), key=lambda u: u.id)],
            "report": self.report.to_dict(),
        }
        return canonical_json(payload).encode("utf-8")

    def fingerprint(self) -> str:
        return hashlib.sha256(self.serialize()).hexdigest()


@dataclass
class ContextAssignment:
    """Map event id -> ordered tuple of context ids (root always included)."""

    mapping: dict[str, tuple[str, ...]]
    contexts: dict[str, Context]

    def contexts_of(self, event_id: str) -> tuple[str, ...]:
        return self.mapping.get(event_id, (ROOT_CONTEXT_ID,))

    def events_by_context(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {cid: [] for cid in self.contexts}
        for event_id, cids in self.mapping.items():
            for cid in cids:
                out.setdefault(cid, []).append(event_id)
        return out


@dataclass
class ContextSite:
    """Finite site of contexts: morphisms, named covers, materialized overlaps,
    plus the event index the pipeline runs on."""

    contexts: dict[str, Context]
    morphisms: tuple[Morphism, ...]
    covers: dict[str, Cover]
    overlaps: tuple[OverlapEdge, ...]
    context_events: dict[str, tuple[str, ...]]

    @property
    def root(self) -> Context:
        return self.contexts[ROOT_CONTEXT_ID]

    def primary_context_ids(self) -> list[str]:
        """Non-derived contexts holding at least one event, root first."""
        ids = [ROOT_CONTEXT_ID]
        for cid, ctx in self.contexts.items():
            if cid == ROOT_CONTEXT_ID or ctx.derived:
                continue
            if self.context_events.get(cid):
                ids.append(cid)
        return ids

    def neighbors(self, context_id: str) -> list[str]:
        out = []
        for edge in self.overlaps:
            if edge.a == context_id:
                out.append(edge.b)
            elif edge.b == context_id:
                out.append(edge.a)
        return out

    def validate(self) -> None:
        for m in self.morphisms:
            if m.source not in self.contexts or m.target not in self.contexts:
                raise SiteError(f"morphism endpoint missing: {m.source}->{m.target}")
        roots = [c for c in self.contexts.values() if c.level == "corpus"]
        if len(roots) != 1:
            raise SiteError(f"expected exactly one corpus-level context, got {len(roots)}")
        targets = {(m.source, m.target) for m in self.morphisms}
        for cover in self.covers.values():
            if cover.target not in self.contexts:
                raise SiteError(f"cover target missing: {cover.target}")
            for member in cover.members:
                if member not in self.contexts:
                    raise SiteError(f"cover member missing: {member}")
                if (member, cover.target) not in targets:
                    raise SiteError(
                        f"cover member {member} lacks a morphism into {cover.target}"
                    )
        root_covers = [c for c in self.covers.values() if c.target == ROOT_CONTEXT_ID]
        non_root = {
            cid
            for cid, ctx in self.contexts.items()
            if cid != ROOT_CONTEXT_ID and not ctx.derived
        }
        if not any(set(c.members) >= non_root for c in root_covers):
            raise SiteError("no cover over the root contains all non-root contexts")

    def to_dict(self) -> dict:
        return {
            "contexts": [self.contexts[cid].to_dict() for cid in self.contexts],
            "morphisms": [m.to_dict() for m in self.morphisms],
            "covers": [self.covers[name].to_dict() for name in self.covers],
            "overlaps": [o.to_dict() for o in self.overlaps],
            "context_events": {cid: list(ids) for cid, ids in self.context_events.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ContextSite":
        contexts = {
            c["id"]: Context(
                id=c["id"],
                label=c["label"],
                level=c["level"],
                metadata=dict(c.get("metadata", {})),
                derived=bool(c.get("derived", False)),
            )
            for c in data["contexts"]
        }
        morphisms = tuple(Morphism(**m) for m in data["morphisms"])
        covers = {
            c["name"]: Cover(c["name"], c["target"], tuple(c["members"]))
            for c in data["covers"]
        }
        overlaps = tuple(
            OverlapEdge(o["a"], o["b"], o["context_id"], tuple(o["shared_events"]))
            for o in data["overlaps"]
        )
        context_events = {cid: tuple(ids) for cid, ids in data["context_events"].items()}
        return cls(contexts, morphisms, covers, overlaps, context_events)


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------


def _build_event(raw: dict, episode_id: str, index: int) -> CausalEvent:
    actor = normalize_slot(raw.get("actor", ""))
    action = normalize_slot(raw.get("action", ""))
    observation = normalize_slot(raw.get("observation", ""))
    relation = normalize_slot(raw.get("relation", ""))
    if not actor or not action or not observation:
        raise ValueError("actor/action/observation empty after normalization")
    if not relation:
        relation = "influences"
    polarity = normalize_slot(raw.get("polarity", "")) or infer_polarity(relation)
    if polarity not in POLARITIES:
        raise ValueError(f"unknown polarity {polarity!r}")
    time_index = raw.get("time_index")
    if time_index is not None:
        time_index = int(time_index)
    provenance = str(raw.get("provenance", "") or f"{episode_id}:auto")
    display = " ".join(
        str(raw.get(k, "")).strip() for k in ("actor", "relation", "observation")
    ).strip()
    return CausalEvent(
        event_id=f"{episode_id}:{index}",
        actor=actor,
        action=action,
        observation=observation,
        relation=relation,
        polarity=polarity,
        provenance=provenance,
        time_index=time_index,
        display=display,
    )


def _episode_from_record(record: dict) -> Episode:
    if not isinstance(record, dict):
        raise ValueError("record is not an object")
    episode_id = str(record.get("id", "")).strip()
    if not episode_id:
        raise ValueError("missing episode id")
    raw_events = record.get("events")
    if not raw_events:
        raise ValueError("empty events list")
    events = [_build_event(raw, episode_id, i) for i, raw in enumerate(raw_events)]
    times = [e.time_index for e in events if e.time_index is not None]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("time_index values decrease within the episode")
    return Episode(
        id=episode_id,
        source_doc=str(record.get("source_doc", episode_id)),
        events=tuple(events),
    )


def _iter_jsonl(path: Path) -> Iterator[tuple[int, dict | None, str]]:
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line), ""
            except json.JSONDecodeError as exc:
                yield lineno, None, f"line {lineno}: {exc.msg}"


def _iter_csv_episodes(path: Path) -> Iterator[tuple[int, dict | None, str]]:
    """CSV episode rows (episode_id,source_doc,actor,action,observation,
    relation,polarity,time_index,provenance) regrouped by episode_id."""
    groups: dict[str, dict] = {}
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            eid = (row.get("episode_id") or "").strip()
            rec = groups.setdefault(
                eid, {"id": eid, "source_doc": row.get("source_doc", eid), "events": []}
            )
            rec["events"].append(
                {
                    "actor": row.get("actor", ""),
                    "action": row.get("action", ""),
                    "observation": row.get("observation", ""),
                    "relation": row.get("relation", ""),
                    "polarity": row.get("polarity", ""),
                    "time_index": int(row["time_index"]) if row.get("time_index") else None,
                    "provenance": row.get("provenance", ""),
                }
            )
    for i, rec in enumerate(groups.values(), 1):
        yield i, rec, ""


def ingest_evidence(path: Path | str) -> dict[str, EvidenceUnit]:
    """Load an evidence JSONL file into an id-keyed registry."""
    units: dict[str, EvidenceUnit] = {}
    for _, record, err in _iter_jsonl(Path(path)):
        if err or not isinstance(record, dict):
            continue
        uid = str(record.get("id", "")).strip()
        if not uid or uid in units:
            continue
        units[uid] = EvidenceUnit(
            id=uid,
            source_id=str(record.get("source_id", "")),
            locator=record.get("locator"),
            retrieval_meta={str(k): str(v) for k, v in (record.get("retrieval_meta") or {}).items()},
            extraction_confidence=float(record.get("extraction_confidence", 1.0)),
            synthesized=bool(record.get("synthesized", False)),
        )
    return units


def ingest_episodes(
    path: Path | str,
    fmt: str = "jsonl",
    evidence: Optional[dict[str, EvidenceUnit]] = None,
) -> tuple[EpisodeStore, list[EvidenceUnit]]:
    """Parse an episodes file into an immutable store.

    Malformed records are rejected and counted; dangling provenance ids are
    synthesized as flagged stub units with confidence 0.5 so no event is
    silently dropped.  An input with zero records is an error.
    """
    path = Path(path)
    if fmt == "jsonl":
        records = _iter_jsonl(path)
    elif fmt == "csv":
        records = _iter_csv_episodes(path)
    else:
        raise IngestError(f"unknown episodes format: {fmt}")

    report = ParseReport()
    episodes: list[Episode] = []
    seen_ids: set[str] = set()
    for lineno, record, err in records:
        report.total += 1
        if err:
            report.rejected += 1
            report.rejections.append(err)
            continue
        try:
            episode = _episode_from_record(record)
            if episode.id in seen_ids:
                raise ValueError(f"duplicate episode id {episode.id}")
            seen_ids.add(episode.id)
        except ValueError as exc:
            report.rejected += 1
            report.rejections.append(f"record {lineno}: {exc}")
            continue
        episodes.append(episode)
        report.accepted += 1

    if report.total == 0:
        raise IngestError(f"no records in {path}")

    registry: dict[str, EvidenceUnit] = dict(evidence or {})
    for ep in episodes:
        for ev in ep.events:
            if ev.provenance not in registry:
                registry[ev.provenance] = EvidenceUnit(
                    id=ev.provenance,
                    source_id=ep.source_doc,
                    extraction_confidence=0.5,
                    synthesized=True,
                )
                report.stubbed_evidence += 1

    store = EpisodeStore(episodes=tuple(episodes), evidence=registry, report=report)
    return store, sorted(registry.values(), key=lambda u: u.id)


def ingest_claims(path: Path | str, fmt: Optional[str] = None) -> tuple[list[ClaimRow], ParseReport]:
    """Parse a claims file (CSV or JSONL).  Rows violating cause != effect or
    carrying no provenance are rejected and counted."""
    path = Path(path)
    if fmt is None:
        fmt = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    report = ParseReport()
    rows: list[ClaimRow] = []

    def handle(record: dict, label: str) -> None:
        report.total += 1
        cause = normalize_slot(record.get("cause", ""))
        effect = normalize_slot(record.get("effect", ""))
        if not cause or not effect or cause == effect:
            report.rejected += 1
            report.rejections.append(f"{label}: cause/effect invalid")
            return
        prov_raw = record.get("provenance", "")
        if isinstance(prov_raw, str):
            provenance = tuple(p.strip() for p in prov_raw.split(";") if p.strip())
        else:
            provenance = tuple(str(p) for p in prov_raw or ())
        if not provenance:
            report.rejected += 1
            report.rejections.append(f"{label}: no provenance")
            return
        ctx_raw = record.get("context_labels", "")
        if isinstance(ctx_raw, str):
            contexts = tuple(c.strip() for c in ctx_raw.split(";") if c.strip())
        else:
            contexts = tuple(str(c) for c in ctx_raw or ())
        relation = normalize_slot(record.get("relation", "")) or ""
        polarity = normalize_slot(record.get("polarity", "")) or infer_polarity(relation)
        strength = record.get("strength")
        rows.append(
            ClaimRow(
                cause=cause,
                effect=effect,
                polarity=polarity if polarity in POLARITIES else "neutral",
                relation=relation,
                mediator=normalize_slot(record["mediator"]) if record.get("mediator") else None,
                modifier=normalize_slot(record["modifier"]) if record.get("modifier") else None,
                strength=float(strength) if strength not in (None, "") else None,
                context_labels=contexts,
                provenance=provenance,
            )
        )
        report.accepted += 1

    if fmt == "csv":
        with open(path, "r", encoding="utf-8", newline="") as f:
            for i, record in enumerate(csv.DictReader(f), 1):
                handle(record, f"row {i}")
    else:
        for lineno, record, err in _iter_jsonl(path):
            if err:
                report.total += 1
                report.rejected += 1
                report.rejections.append(err)
                continue
            handle(record, f"line {lineno}")
    return rows, report


# ---------------------------------------------------------------------------
# Context assignment and site construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContextRule:
    """One labeling rule.  Either a static rule assigning matching events to a
    declared context, or a dynamic rule deriving the context id from a field."""

    context: Optional[str] = None
    field: Optional[str] = None
    equals: Optional[str] = None
    meta: Optional[str] = None
    context_from: Optional[str] = None
    level: str = "topic"

    @classmethod
    def from_dict(cls, data: dict) -> "ContextRule":
        return cls(
            context=data.get("context"),
            field=data.get("field"),
            equals=data.get("equals"),
            meta=data.get("meta"),
            context_from=data.get("context_from"),
            level=data.get("level", "topic"),
        )


DEFAULT_RULES = (ContextRule(context_from="actor"),)

_EVENT_FIELDS = ("actor", "action", "observation", "relation", "polarity")


def _rule_matches(rule: ContextRule, event: CausalEvent, store: EpisodeStore) -> Optional[str]:
    """Return the context id this rule assigns the event to, or None."""
    if rule.context_from is not None:
        if rule.context_from not in _EVENT_FIELDS:
            raise ConfigError(f"context_from field unknown: {rule.context_from}")
        return getattr(event, rule.context_from)
    if rule.meta is not None:
        unit = store.evidence.get(event.provenance)
        value = (unit.retrieval_meta if unit else {}).get(rule.meta)
        if value is None:
            return None
        if rule.equals is None or normalize_slot(value) == normalize_slot(rule.equals):
            return rule.context
        return None
    if rule.field is not None:
        if rule.field not in _EVENT_FIELDS:
            raise ConfigError(f"rule field unknown: {rule.field}")
        value = getattr(event, rule.field)
        if rule.equals is None or value == normalize_slot(rule.equals):
            return rule.context
        return None
    return rule.context


def assign_contexts(
    store: EpisodeStore,
    rules: Iterable[ContextRule] = DEFAULT_RULES,
    declared: Optional[Iterable[Context]] = None,
) -> ContextAssignment:
    """Assign every event to the root plus every matching rule context.

    Static rules must reference declared contexts; that is checked before any
    assignment happens.  Dynamic rules (``context_from``) materialize contexts
    named after the field value.
    """
    rules = tuple(rules)
    contexts: dict[str, Context] = {
        ROOT_CONTEXT_ID: Context(ROOT_CONTEXT_ID, "corpus", "corpus")
    }
    for ctx in declared or ():
        if ctx.level == "corpus" and ctx.id != ROOT_CONTEXT_ID:
            raise ConfigError("only the root may have level=corpus")
        if ctx.id != ROOT_CONTEXT_ID:
            contexts[ctx.id] = ctx

    for rule in rules:
        if rule.context_from is None:
            if rule.context is None:
                raise ConfigError("static rule missing target context")
            if rule.context != ROOT_CONTEXT_ID and rule.context not in contexts:
                raise ConfigError(f"rule references unknown context: {rule.context}")

    mapping: dict[str, tuple[str, ...]] = {}
    for event in store.events:
        assigned: list[str] = [ROOT_CONTEXT_ID]
        for rule in rules:
            cid = _rule_matches(rule, event, store)
            if cid is None:
                continue
            if cid not in contexts:
                contexts[cid] = Context(id=cid, label=cid.replace("_", " "), level=rule.level)
            if cid not in assigned:
                assigned.append(cid)
        mapping[event.event_id] = tuple(assigned)
    return ContextAssignment(mapping=mapping, contexts=contexts)


def overlap_context_id(a: str, b: str) -> str:
    first, second = sorted((a, b))
    return f"{first}∩{second}"


def build_site(
    assignment: ContextAssignment,
    cover_spec: Optional[dict] = None,
    max_contexts: Optional[int] = None,
) -> ContextSite:
    """Build the validated context site.

    The default cover spec is a single cover of all non-root contexts over the
    root.  Overlap morphisms (and derived ``A∩B`` contexts) are added between
    any two contexts sharing at least one event.  ``max_contexts`` keeps only
    the largest non-root contexts (quick-mode depth knob).
    """
    cover_spec = cover_spec or {}
    contexts = dict(assignment.contexts)
    by_context = assignment.events_by_context()

    non_root = [cid for cid in contexts if cid != ROOT_CONTEXT_ID]
    if max_contexts is not None and len(non_root) > max_contexts:
        ranked = sorted(non_root, key=lambda cid: (-len(by_context.get(cid, [])), cid))
        keep = set(ranked[:max_contexts])
        for cid in non_root:
            if cid not in keep:
                del contexts[cid]
        mapping = {
            eid: tuple(c for c in cids if c == ROOT_CONTEXT_ID or c in keep)
            for eid, cids in assignment.mapping.items()
        }
        assignment = ContextAssignment(mapping=mapping, contexts=contexts)
        by_context = assignment.events_by_context()
        non_root = [cid for cid in contexts if cid != ROOT_CONTEXT_ID]

    morphisms: list[Morphism] = []
    covers: dict[str, Cover] = {}

    for raw in cover_spec.get("covers", []):
        target = raw.get("target")
        if target not in contexts:
            raise SiteError(f"cover target missing: {target}")
        members = tuple(m for m in raw.get("members", []))
        for m in members:
            if m not in contexts:
                raise SiteError(f"cover member missing: {m}")
        covers[raw["name"]] = Cover(raw["name"], target, members)
        for m in members:
            morphisms.append(Morphism(m, target, "inclusion"))

    # The root cover over all non-root contexts always exists.
    if not any(
        c.target == ROOT_CONTEXT_ID and set(c.members) >= set(non_root)
        for c in covers.values()
    ):
        covers["root"] = Cover("root", ROOT_CONTEXT_ID, tuple(non_root))
        for cid in non_root:
            morphisms.append(Morphism(cid, ROOT_CONTEXT_ID, "inclusion"))

    # Materialize pairwise overlaps between event-sharing non-root contexts.
    overlaps: list[OverlapEdge] = []
    for i, a in enumerate(non_root):
        ev_a = set(by_context.get(a, ()))
        if not ev_a:
            continue
        for b in non_root[i + 1 :]:
            shared = ev_a.intersection(by_context.get(b, ()))
            if not shared:
                continue
            oid = overlap_context_id(a, b)
            contexts[oid] = Context(
                id=oid,
                label=f"{a} ∩ {b}",
                level="custom",
                metadata={"derived": "overlap"},
                derived=True,
            )
            overlaps.append(OverlapEdge(a, b, oid, tuple(sorted(shared))))
            morphisms.append(Morphism(oid, a, "overlap"))
            morphisms.append(Morphism(oid, b, "overlap"))

    context_events = {
        cid: tuple(by_context.get(cid, ())) for cid in contexts if not contexts[cid].derived
    }
    for edge in overlaps:
        context_events[edge.context_id] = edge.shared_events

    site = ContextSite(
        contexts=contexts,
        morphisms=tuple(morphisms),
        covers=covers,
        overlaps=tuple(overlaps),
        context_events=context_events,
    )
    site.validate()
    return site


def load_cover_spec(path: Path | str) -> dict:
    """Load a cover spec JSON file: declared contexts, rules, covers."""
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise ConfigError("cover spec must be a JSON object")
    return data


def parse_cover_spec(data: dict) -> tuple[list[Context], list[ContextRule], dict]:
    declared = [
        Context(
            id=c["id"],
            label=c.get("label", c["id"]),
            level=c.get("level", "topic"),
            metadata={str(k): str(v) for k, v in (c.get("metadata") or {}).items()},
        )
        for c in data.get("contexts", [])
    ]
    rules = [ContextRule.from_dict(r) for r in data.get("rules", [])]
    if not rules:
        rules = list(DEFAULT_RULES)
    return declared, rules, {"covers": data.get("covers", [])}


def derive_claims(store: EpisodeStore, assignment: ContextAssignment) -> list[ClaimRow]:
    """Derive claim rows from events: cause=actor, effect=observation.  Events
    whose cause equals their effect are skipped (not claims)."""
    rows: list[ClaimRow] = []
    for ep in store.episodes:
        for ev in ep.events:
            if ev.actor == ev.observation:
                continue
            rows.append(
                ClaimRow(
                    cause=ev.actor,
                    effect=ev.observation,
                    polarity=ev.polarity,
                    relation=ev.relation,
                    context_labels=tuple(
                        c for c in assignment.contexts_of(ev.event_id) if c != ROOT_CONTEXT_ID
                    ),
                    provenance=(ev.provenance,),
                    time_index=ev.time_index,
                )
            )
    return rows
