"""Per-context local causal predictive-state tables.

Each context gets a history x test table of smoothed predictive support
scores, the raw support counts behind every cell, cell-level provenance, and
diagnostics (numeric rank, sparsity, confidence, event count).  Estimation is
a smoothed frequency blended across local, overlap-neighbor, and corpus-level
support pools.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import CausalEvent, Episode, EpisodeStore

DEFAULT_RANK_TOL = 1e-9


class EstimatorError(ValueError):
    """Raised on invalid estimator inputs (negative counts, bad alpha)."""


@dataclass(frozen=True)
class Token:
    """A history or test token: normalized triple key plus display text."""

    key: str
    display: str


@dataclass(frozen=True)
class SmoothingConfig:
    alpha: float = 1.0
    backoff: str = "corpus_frequency"  # or "uniform"
    blend_policy: str = "support_proportional"
    test_depth: int = 1
    window: Optional[int] = None  # None = whole episode
    max_tests: Optional[int] = None  # truncates non-root test columns

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "backoff": self.backoff,
            "blend_policy": self.blend_policy,
            "test_depth": self.test_depth,
            "window": self.window,
            "max_tests": self.max_tests,
        }


@dataclass(slots=True)
class CellMeta:
    """Evidence summary behind one support cell, used by obstruction
    classification: polarity counts and observed time range."""

    polarities: dict[str, int] = field(default_factory=dict)
    t_min: Optional[int] = None
    t_max: Optional[int] = None

    def add(self, polarity: str, time_index: Optional[int]) -> None:
        self.polarities[polarity] = self.polarities.get(polarity, 0) + 1
        if time_index is not None:
            self.t_min = time_index if self.t_min is None else min(self.t_min, time_index)
            self.t_max = time_index if self.t_max is None else max(self.t_max, time_index)


@dataclass
class SupportTable:
    """Sparse support counts with per-cell provenance and evidence summaries."""

    counts: dict[tuple[str, str], float] = field(default_factory=dict)
    provenance: dict[tuple[str, str], list[str]] = field(default_factory=dict)
    meta: dict[tuple[str, str], CellMeta] = field(default_factory=dict)

    def by_history(self) -> dict[str, dict[str, float]]:
        """Counts grouped per history row; compute once, slice many times."""
        out: dict[str, dict[str, float]] = {}
        for (h, t), count in self.counts.items():
            row = out.get(h)
            if row is None:
                row = out[h] = {}
            row[t] = row.get(t, 0.0) + count
        return out

    def column_mass(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for (_, t), count in self.counts.items():
            out[t] = out.get(t, 0.0) + count
        return out

    def add(
        self,
        h_key: str,
        t_key: str,
        amount: float,
        provenance_ids: Iterable[str],
        events: Iterable[CausalEvent],
    ) -> None:
        cell = (h_key, t_key)
        self.counts[cell] = self.counts.get(cell, 0.0) + amount
        prov = self.provenance.setdefault(cell, [])
        for pid in provenance_ids:
            if pid not in prov:
                prov.append(pid)
        meta = self.meta.setdefault(cell, CellMeta())
        for ev in events:
            meta.add(ev.polarity, ev.time_index)

    def row_mass(self, h_key: str, tests: Sequence[str]) -> float:
        return sum(self.counts.get((h_key, t), 0.0) for t in tests)


@dataclass
class Diagnostics:
    rank: int
    sparsity: float
    mean_confidence: float
    event_count: int

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "sparsity": self.sparsity,
            "mean_confidence": self.mean_confidence,
            "event_count": self.event_count,
        }


DENSE_CELL_LIMIT = 10**6


@dataclass
class LocalPSR:
    """The per-context object: ordered histories and tests, the smoothed
    table, support counts, provenance, and diagnostics."""

    context_id: str
    histories: tuple[str, ...]
    tests: tuple[str, ...]
    table: np.ndarray
    support: np.ndarray
    provenance: dict[tuple[str, str], tuple[str, ...]]
    diagnostics: Diagnostics
    displays: dict[str, str] = field(default_factory=dict)
    cell_meta: dict[tuple[str, str], CellMeta] = field(default_factory=dict)

    def __post_init__(self):
        self._h_index = {h: i for i, h in enumerate(self.histories)}
        self._t_index = {t: j for j, t in enumerate(self.tests)}

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.histories), len(self.tests))

    def value(self, h_key: str, t_key: str) -> float:
        return float(self.table[self._h_index[h_key], self._t_index[t_key]])

    def support_of(self, h_key: str, t_key: str) -> float:
        return float(self.support[self._h_index[h_key], self._t_index[t_key]])

    def has_cell(self, h_key: str, t_key: str) -> bool:
        return h_key in self._h_index and t_key in self._t_index

    def cells(self) -> Iterable[tuple[str, str]]:
        for h in self.histories:
            for t in self.tests:
                yield (h, t)

    def to_dict(self) -> dict:
        n_cells = len(self.histories) * len(self.tests)
        if n_cells <= DENSE_CELL_LIMIT:
            table = [[float(v) for v in row] for row in self.table]
            support = [[float(v) for v in row] for row in self.support]
            layout = "dense"
        else:
            nz = np.argwhere(self.support > 0)
            table = [[int(i), int(j), float(self.table[i, j])] for i, j in nz]
            support = [[int(i), int(j), float(self.support[i, j])] for i, j in nz]
            layout = "coo"
        return {
            "context_id": self.context_id,
            "histories": list(self.histories),
            "tests": list(self.tests),
            "layout": layout,
            "table": table,
            "support": support,
            "provenance": {
                f"{h}|{t}": sorted(ids) for (h, t), ids in sorted(self.provenance.items())
            },
            "diagnostics": self.diagnostics.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LocalPSR":
        histories = tuple(data["histories"])
        tests = tuple(data["tests"])
        if data.get("layout", "dense") == "dense":
            table = np.array(data["table"], dtype=float).reshape(len(histories), len(tests))
            support = np.array(data["support"], dtype=float).reshape(len(histories), len(tests))
        else:
            table = np.zeros((len(histories), len(tests)))
            support = np.zeros((len(histories), len(tests)))
            for i, j, v in data["table"]:
                table[int(i), int(j)] = v
            for i, j, v in data["support"]:
                support[int(i), int(j)] = v
        provenance: dict[tuple[str, str], tuple[str, ...]] = {}
        for key, ids in data.get("provenance", {}).items():
            parts = key.split("|")
            h = "|".join(parts[:3])
            t = "|".join(parts[3:])
            provenance[(h, t)] = tuple(ids)
        diag = Diagnostics(**data["diagnostics"])
        return cls(
            context_id=data["context_id"],
            histories=histories,
            tests=tests,
            table=table,
            support=support,
            provenance=provenance,
            diagnostics=diag,
        )


# ---------------------------------------------------------------------------
# Enumeration and support
# ---------------------------------------------------------------------------


def _chain_key(keys: Sequence[str]) -> str:
    return ">".join(keys)


def enumerate_history_tests(
    events: Sequence[CausalEvent],
    episodes: Sequence[Episode] = (),
    depth: int = 1,
) -> tuple[list[Token], list[Token]]:
    """Enumerate histories and supported compressed tests for one context.

    At the default depth 1 every causal observation event contributes one
    history token and one test token (its own triple), deduplicated in first
    occurrence order.  At depth k > 1, tests are the observed k-step chains of
    consecutive in-context events within an episode.
    """
    if not events:
        raise ValueError("context has no events")
    member_ids = {e.event_id for e in events}
    histories: list[Token] = []
    seen_h: set[str] = set()
    for ev in events:
        if ev.key not in seen_h:
            seen_h.add(ev.key)
            histories.append(Token(ev.key, ev.display or ev.key))
    if depth <= 1:
        tests = [Token(tok.key, tok.display) for tok in histories]
        return histories, tests

    tests: list[Token] = []
    seen_t: set[str] = set()
    for ep in episodes:
        evs = ep.events
        for start in range(len(evs) - depth + 1):
            run = evs[start : start + depth]
            if any(e.event_id not in member_ids for e in run):
                continue
            key = _chain_key([e.key for e in run])
            if key not in seen_t:
                seen_t.add(key)
                tests.append(Token(key, " then ".join(e.display or e.key for e in run)))
    return histories, tests


def transition_support(
    episodes: Sequence[Episode],
    member_ids: set[str],
    window: Optional[int] = None,
    depth: int = 1,
) -> SupportTable:
    """Count ordered history -> test transitions inside episodes.

    A pair counts when an in-context event precedes an in-context test
    occurrence within ``window`` positions of the full episode order (None
    means the whole episode).  At depth 1 every in-context event additionally
    contributes 1 to its diagonal cell, so isolated claims carry self-support.
    """
    if window is not None and window < 1:
        raise ValueError("window must be >= 1 or None")
    table = SupportTable()
    for ep in episodes:
        evs = ep.events
        in_ctx = [i for i, e in enumerate(evs) if e.event_id in member_ids]
        if depth == 1:
            for i in in_ctx:
                table.add(evs[i].key, evs[i].key, 1.0, [evs[i].provenance], [evs[i]])
            for a_pos, i in enumerate(in_ctx):
                for j in in_ctx[a_pos + 1 :]:
                    if window is not None and (j - i) > window:
                        break
                    table.add(
                        evs[i].key,
                        evs[j].key,
                        1.0,
                        [evs[i].provenance, evs[j].provenance],
                        [evs[i], evs[j]],
                    )
        else:
            in_set = set(in_ctx)
            chain_starts = [
                s
                for s in range(len(evs) - depth + 1)
                if all(p in in_set for p in range(s, s + depth))
            ]
            for i in in_ctx:
                for s in chain_starts:
                    if s <= i:
                        continue
                    if window is not None and (s - i) > window:
                        continue
                    run = evs[s : s + depth]
                    key = _chain_key([e.key for e in run])
                    prov = [evs[i].provenance] + [e.provenance for e in run]
                    table.add(evs[i].key, key, 1.0, prov, [evs[i], *run])
    return table


# ---------------------------------------------------------------------------
# Estimation
# ---------------------------------------------------------------------------


def estimate_cell(n: float, total: float, alpha: float, p0: float) -> float:
    """Smoothed frequency (n + alpha * p0) / (N + alpha)."""
    if n < 0:
        raise EstimatorError(f"negative count n={n}")
    if total < n:
        raise EstimatorError(f"mass N={total} below count n={n}")
    if alpha <= 0:
        raise EstimatorError(f"alpha must be positive, got {alpha}")
    if not 0.0 <= p0 <= 1.0:
        raise EstimatorError(f"p0 out of [0,1]: {p0}")
    return (n + alpha * p0) / (total + alpha)


def blend_backoff(
    p_loc: float,
    p_nbr: float,
    p_corp: float,
    s_loc: float,
    s_nbr: float,
    s_corp: float,
) -> float:
    """Support-proportional blend of local, neighbor, and corpus estimates."""
    for p in (p_loc, p_nbr, p_corp):
        if not 0.0 <= p <= 1.0 + 1e-12:
            raise EstimatorError(f"probability out of [0,1]: {p}")
    for s in (s_loc, s_nbr, s_corp):
        if s < 0:
            raise EstimatorError(f"negative support: {s}")
    total = s_loc + s_nbr + s_corp
    if total == 0:
        raise EstimatorError("all supports zero; fall back to p0")
    return (s_loc * p_loc + s_nbr * p_nbr + s_corp * p_corp) / total


def numeric_rank(table: np.ndarray, rel_tol: float = DEFAULT_RANK_TOL) -> int:
    """Numeric rank: singular values above rel_tol * sigma_max * max(dim)."""
    if rel_tol <= 0:
        raise EstimatorError("rel_tol must be positive")
    if table.size == 0:
        return 0
    sigma = np.linalg.svd(np.asarray(table, dtype=float), compute_uv=False)
    if sigma.size == 0 or sigma[0] == 0.0:
        return 0
    threshold = rel_tol * float(sigma[0]) * max(table.shape)
    return int(np.sum(sigma > threshold))


def _backoff_distribution(
    tests: Sequence[str],
    config: SmoothingConfig,
    corpus_support: Optional[SupportTable],
    column_mass: Optional[dict[str, float]] = None,
) -> dict[str, float]:
    """Backoff p0 over the context's full test list."""
    n = len(tests)
    if config.backoff == "uniform" or (corpus_support is None and column_mass is None):
        return {t: 1.0 / n for t in tests}
    if column_mass is None:
        column_mass = corpus_support.column_mass()
    mass = {t: column_mass.get(t, 0.0) for t in tests}
    total = sum(mass.values())
    if total <= 0:
        return {t: 1.0 / n for t in tests}
    return {t: mass[t] / total for t in tests}


def build_local_psr(
    context_id: str,
    events: Sequence[CausalEvent],
    episodes: Sequence[Episode],
    store: EpisodeStore,
    config: SmoothingConfig = SmoothingConfig(),
    local_support: Optional[SupportTable] = None,
    neighbor_supports: Sequence[SupportTable] = (),
    corpus_support: Optional[SupportTable] = None,
    is_root: bool = False,
    corpus_grouped: Optional[dict[str, dict[str, float]]] = None,
    corpus_column_mass: Optional[dict[str, float]] = None,
) -> LocalPSR:
    """Assemble the local table for one context.

    Rows are estimated from local support with row-mass normalization, then
    blended against the pooled overlap-neighbor and corpus supports with
    support-proportional weights.  ``max_tests`` truncates test columns on
    non-root contexts after estimation, so truncated rows sum below one.
    """
    h_tokens, t_tokens = enumerate_history_tests(events, episodes, config.test_depth)
    histories = [tok.key for tok in h_tokens]
    tests = [tok.key for tok in t_tokens]
    displays = {tok.key: tok.display for tok in h_tokens + t_tokens}

    member_ids = {e.event_id for e in events}
    if local_support is None:
        local_support = transition_support(episodes, member_ids, config.window, config.test_depth)

    if is_root:
        p0 = _backoff_distribution(tests, config, local_support)
    else:
        p0 = _backoff_distribution(tests, config, corpus_support, corpus_column_mass)

    n_h, n_t = len(histories), len(tests)
    t_index = {t: j for j, t in enumerate(tests)}
    p0_vec = np.array([p0[t] for t in tests])
    alpha = config.alpha

    pooled_nbr: Optional[SupportTable] = None
    if neighbor_supports:
        pooled_nbr = SupportTable()
        for nbr in neighbor_supports:
            for cell, count in nbr.counts.items():
                pooled_nbr.counts[cell] = pooled_nbr.counts.get(cell, 0.0) + count

    def densify(sparse_row: Optional[dict[str, float]]) -> np.ndarray:
        row = np.zeros(n_t)
        if sparse_row:
            for t, count in sparse_row.items():
                j = t_index.get(t)
                if j is not None:
                    row[j] += count
        return row

    loc_grouped = local_support.by_history()
    nbr_grouped = pooled_nbr.by_history() if pooled_nbr else {}
    if corpus_support is not None and not is_root:
        corp_grouped = corpus_grouped if corpus_grouped is not None else corpus_support.by_history()
    else:
        corp_grouped = {}
    zero_row = np.zeros(n_t)

    table = np.zeros((n_h, n_t))
    support = np.zeros((n_h, n_t))
    for i, h in enumerate(histories):
        loc_row = densify(loc_grouped.get(h))
        loc_mass = float(loc_row.sum())
        nbr_row = densify(nbr_grouped.get(h)) if nbr_grouped else zero_row
        nbr_mass = float(nbr_row.sum())
        corp_row = densify(corp_grouped.get(h)) if corp_grouped else zero_row
        corp_mass = float(corp_row.sum())
        support[i] = loc_row
        p_loc = (loc_row + alpha * p0_vec) / (loc_mass + alpha)
        if nbr_mass == 0.0 and corp_mass == 0.0:
            table[i] = p0_vec if loc_mass == 0.0 else p_loc
            continue
        p_nbr = (nbr_row + alpha * p0_vec) / (nbr_mass + alpha) if nbr_mass > 0 else zero_row
        p_corp = (corp_row + alpha * p0_vec) / (corp_mass + alpha) if corp_mass > 0 else zero_row
        total = loc_mass + nbr_mass + corp_mass
        table[i] = (loc_mass * p_loc + nbr_mass * p_nbr + corp_mass * p_corp) / total

    if config.max_tests is not None and not is_root and n_t > config.max_tests:
        tests = tests[: config.max_tests]
        table = table[:, : config.max_tests]
        support = support[:, : config.max_tests]

    kept_h = set(histories)
    kept_t = set(tests)
    provenance = {
        cell: tuple(ids)
        for cell, ids in local_support.provenance.items()
        if cell[0] in kept_h and cell[1] in kept_t
    }
    cell_meta = {
        cell: meta
        for cell, meta in local_support.meta.items()
        if cell[0] in kept_h and cell[1] in kept_t
    }

    confidences = [store.confidence_of(e.provenance) for e in events]
    diag = Diagnostics(
        rank=numeric_rank(table),
        sparsity=float(np.mean(support == 0.0)) if support.size else 1.0,
        mean_confidence=float(np.mean(confidences)) if confidences else 0.0,
        event_count=len(events),
    )
    return LocalPSR(
        context_id=context_id,
        histories=tuple(histories),
        tests=tuple(tests),
        table=table,
        support=support,
        provenance=provenance,
        diagnostics=diag,
        displays=displays,
        cell_meta=cell_meta,
    )
