// Pure render functions: service payloads in, DOM out. Every number shown
// carries its exact service value in data-value; the snapshot tests hold the
// UI to that (no derived numbers).

import { clear, el, num } from "./dom.js";
import type {
  Atlas,
  Bundle,
  ClaimFamily,
  ContextDetail,
  DriftReport,
  EvidenceUnit,
  PersistentState,
  Region,
  RunListing,
  SubstrateResult,
  Tension,
} from "./types.js";

export interface AtlasHandlers {
  openRun?(run: string): void;
  openRegion?(region: string): void;
  openContext?(contextId: string): void;
  openFamily?(key: string): void;
  openIntervene?(): void;
  openCompare?(a: string, b: string): void;
}

const noop = {} as AtlasHandlers;

// ---------------------------------------------------------------------------
// Run listing
// ---------------------------------------------------------------------------

export function renderRunList(listing: RunListing, handlers: AtlasHandlers = noop): HTMLElement {
  const root = el("section", { className: "run-list" }, el("h2", {}, "Runs"));
  if (listing.runs.length === 0) {
    root.appendChild(el("p", { className: "empty" }, "No runs served yet."));
    return root;
  }
  const table = el(
    "table",
    {},
    el(
      "tr",
      {},
      el("th", {}, "run"),
      el("th", {}, "events"),
      el("th", {}, "contexts"),
      el("th", {}, "tense overlaps"),
    ),
  );
  for (const entry of listing.runs) {
    table.appendChild(
      el(
        "tr",
        { className: "run-row", "data-run": entry.id },
        el(
          "td",
          {},
          el(
            "a",
            { href: "#", onClick: (e) => { e.preventDefault(); handlers.openRun?.(entry.id); } },
            entry.id,
          ),
        ),
        el("td", {}, num(entry.summary.events)),
        el("td", {}, num(entry.summary.contexts)),
        el("td", {}, num(entry.summary.tense_overlaps)),
      ),
    );
  }
  root.appendChild(table);
  return root;
}

// ---------------------------------------------------------------------------
// Atlas view
// ---------------------------------------------------------------------------

function summaryChips(summary: Record<string, number>): HTMLElement {
  const chips = el("div", { className: "summary" });
  for (const [key, value] of Object.entries(summary)) {
    if (typeof value !== "number") continue;
    chips.appendChild(el("span", { className: "chip" }, `${key}: `, num(value)));
  }
  return chips;
}

function substratePanel(results: SubstrateResult[], modified: number | null): HTMLElement {
  const panel = el("section", { className: "counterfactual-panel" },
    el("h3", {}, "Grounded counterfactual layer"));
  for (const result of results) {
    panel.appendChild(
      el(
        "p",
        { className: "flow" },
        "original sections → source tables (",
        el("span", { className: "substrate-kind" }, result.kind),
        `, ${result.grounding}) → modified sections`,
      ),
    );
    panel.appendChild(
      el(
        "table",
        { className: "substrate" },
        el("tr", {},
          el("th", {}, "baseline"),
          el("th", {}, "counterfactual"),
          el("th", {}, "effect"),
          el("th", {}, "relative"),
        ),
        el("tr", {},
          el("td", { className: "substrate-baseline" }, num(result.baseline)),
          el("td", { className: "substrate-counterfactual" }, num(result.counterfactual)),
          el("td", { className: "substrate-effect" }, num(result.effect)),
          el("td", {}, num(result.relative_effect)),
        ),
      ),
    );
  }
  if (modified !== null) {
    panel.appendChild(el("p", { className: "modified-events" }, "modified causal events: ", num(modified)));
  }
  return panel;
}

function spineSection(atlas: Atlas): HTMLElement {
  const section = el("section", { className: "spine" }, el("h3", {}, "Main causal spine"));
  if (atlas.spine.length === 0) {
    section.appendChild(el("p", { className: "empty" }, "No spine paths above the support threshold."));
    return section;
  }
  const table = el("table", {}, el("tr", {}, el("th", {}, "path"), el("th", {}, "support")));
  for (const path of atlas.spine) {
    table.appendChild(
      el(
        "tr",
        { className: "spine-path" },
        el("td", {}, path.nodes.join(" → ")),
        el("td", {}, num(path.support)),
      ),
    );
  }
  section.appendChild(table);
  return section;
}

function regionSection(
  regions: Region[],
  selected: string | null,
  handlers: AtlasHandlers,
): HTMLElement {
  const section = el("section", { className: "regions" }, el("h3", {}, "Local context regions"));
  const table = el(
    "table",
    {},
    el("tr", {}, el("th", {}, "region"), el("th", {}, "events"), el("th", {}, "contexts")),
  );
  for (const region of regions) {
    table.appendChild(
      el(
        "tr",
        {
          className: region.name === selected ? "region-row selected" : "region-row",
          "data-region": region.name,
          "data-context-count": String(region.context_count),
          "data-event-count": String(region.event_count),
        },
        el(
          "td",
          {},
          el(
            "a",
            { href: "#", onClick: (e) => { e.preventDefault(); handlers.openRegion?.(region.name); } },
            region.name,
          ),
        ),
        el("td", {}, num(region.event_count)),
        el("td", {}, num(region.context_count)),
      ),
    );
  }
  section.appendChild(table);

  const current = regions.find((r) => r.name === selected);
  if (current) {
    const drill = el("div", { className: "region-contexts" },
      el("h4", {}, `contexts in ${current.name}`));
    for (const cid of current.contexts) {
      drill.appendChild(
        el(
          "button",
          {
            className: "context-chip",
            "data-context": cid,
            onClick: () => handlers.openContext?.(cid),
          },
          `${cid} (`,
          num(current.context_event_counts[cid] ?? 0),
          ")",
        ),
      );
    }
    section.appendChild(drill);
  }
  return section;
}

function tensionSection(tensions: Tension[]): HTMLElement {
  const section = el("section", { className: "tensions" }, el("h3", {}, "Regime tensions"));
  if (tensions.length === 0) {
    section.appendChild(el("p", { className: "empty" }, "No obstructions recorded."));
    return section;
  }
  const table = el(
    "table",
    {},
    el("tr", {}, el("th", {}, "cover"), el("th", {}, "classification"), el("th", {}, "cells")),
  );
  for (const tension of tensions) {
    table.appendChild(
      el(
        "tr",
        { className: "tension-row" },
        el("td", {}, tension.cover),
        el("td", {}, el("span", { className: `badge badge-${tension.classification}` }, tension.classification)),
        el("td", {}, tension.cells.map((c) => c.cell.join(" → ")).join("; ")),
      ),
    );
  }
  section.appendChild(table);
  return section;
}

function familySection(families: ClaimFamily[], handlers: AtlasHandlers): HTMLElement {
  const section = el("section", { className: "families" }, el("h3", {}, "Claim families"));
  if (families.length === 0) {
    section.appendChild(el("p", { className: "empty" }, "No claims extracted."));
    return section;
  }
  const table = el(
    "table",
    {},
    el(
      "tr",
      {},
      el("th", {}, "cause"),
      el("th", {}, "effect"),
      el("th", {}, "claims"),
      el("th", {}, "aliases"),
      el("th", {}, "surfaces"),
    ),
  );
  for (const family of families) {
    table.appendChild(
      el(
        "tr",
        {
          className: family.tension_candidate ? "family-row tension-candidate" : "family-row",
          "data-family": family.key,
        },
        el(
          "td",
          {},
          el(
            "a",
            { href: "#", onClick: (e) => { e.preventDefault(); handlers.openFamily?.(family.key); } },
            family.cause,
          ),
        ),
        el("td", {}, family.effect),
        el("td", {}, num(family.claims)),
        el("td", { className: "alias-count" }, num(family.regime_aliases)),
        el("td", {}, Object.entries(family.surfaces).map(([s, n]) => `${s} (${n})`).join(", ")),
      ),
    );
  }
  section.appendChild(table);
  return section;
}

export function renderAtlasView(
  run: string,
  atlas: Atlas,
  bundle: Bundle,
  state: PersistentState | null,
  selectedRegion: string | null = null,
  handlers: AtlasHandlers = noop,
): HTMLElement {
  const root = el("section", { className: "atlas-view", "data-run": run });
  root.appendChild(
    el(
      "header",
      {},
      el("h2", {}, `Claims atlas — run ${run}`),
      el(
        "nav",
        {},
        el("button", { className: "intervene-button", onClick: () => handlers.openIntervene?.() }, "new intervention probe"),
        bundle.metadata.parent_run
          ? el(
              "button",
              {
                className: "compare-parent",
                onClick: () => handlers.openCompare?.(String(bundle.metadata.parent_run), run),
              },
              "compare with parent",
            )
          : null,
      ),
    ),
  );
  root.appendChild(summaryChips(bundle.summary));
  if (state) {
    root.appendChild(
      el(
        "p",
        { className: `state state-${state.recommendation}` },
        `focus ${state.focus}: `,
        el("b", {}, state.recommendation),
      ),
    );
  }
  if (bundle.substrate_results.length > 0) {
    root.appendChild(substratePanel(bundle.substrate_results, bundle.intervention?.modified_events ?? null));
  }
  root.appendChild(spineSection(atlas));
  root.appendChild(regionSection(atlas.regions, selectedRegion, handlers));
  root.appendChild(tensionSection(atlas.tensions));
  root.appendChild(familySection(atlas.families, handlers));
  return root;
}

// ---------------------------------------------------------------------------
// Provenance drill-down
// ---------------------------------------------------------------------------

export function renderFamilyView(
  family: ClaimFamily,
  evidence: Map<string, EvidenceUnit>,
  handlers: AtlasHandlers = noop,
): HTMLElement {
  const root = el(
    "section",
    { className: "family-view", "data-family": family.key },
    el("h2", {}, `${family.cause} → ${family.effect}`),
    el("p", {}, "extracted claims: ", num(family.claims), " · regime aliases: ",
      el("span", { className: "alias-count" }, num(family.regime_aliases))),
  );
  const chips = el("div", { className: "alias-chips" });
  for (const cid of family.contexts) {
    chips.appendChild(
      el(
        "button",
        { className: "alias-chip", "data-context": cid, onClick: () => handlers.openContext?.(cid) },
        cid,
      ),
    );
  }
  root.appendChild(chips);

  const surfaces = el("p", { className: "surfaces" }, "relation surfaces: ",
    Object.entries(family.surfaces).map(([s, n]) => `${s} (${n})`).join(", "));
  root.appendChild(surfaces);

  const table = el(
    "table",
    { className: "evidence" },
    el(
      "tr",
      {},
      el("th", {}, "evidence"),
      el("th", {}, "source"),
      el("th", {}, "locator"),
      el("th", {}, "confidence"),
      el("th", {}, "flags"),
    ),
  );
  for (const pid of family.provenance) {
    const unit = evidence.get(pid);
    if (!unit) {
      table.appendChild(
        el(
          "tr",
          { className: "evidence-row dangling", "data-evidence": pid },
          el("td", {}, pid),
          el("td", { colspan: "3" }, "(unresolved)"),
          el("td", {}, el("span", { className: "badge badge-dangling" }, "dangling")),
        ),
      );
      continue;
    }
    table.appendChild(
      el(
        "tr",
        { className: unit.synthesized ? "evidence-row synthesized" : "evidence-row", "data-evidence": pid },
        el("td", {}, unit.id),
        el("td", {}, unit.source_id),
        el("td", {}, unit.locator ?? "—"),
        el("td", {}, num(unit.extraction_confidence)),
        el(
          "td",
          {},
          unit.synthesized ? el("span", { className: "badge badge-synthesized" }, "synthesized") : "",
        ),
      ),
    );
  }
  root.appendChild(table);
  return root;
}

// ---------------------------------------------------------------------------
// Context detail
// ---------------------------------------------------------------------------

export function renderContextView(detail: ContextDetail): HTMLElement {
  const psr = detail.psr;
  const d = psr.diagnostics;
  const root = el(
    "section",
    { className: "context-view", "data-context": psr.context_id },
    el("h2", {}, `Local table — ${psr.context_id}`),
    el(
      "p",
      { className: "context-diagnostics" },
      "events: ", num(d.event_count),
      " · rank: ", num(d.rank),
      " · histories: ", num(psr.histories.length),
      " · tests: ", num(psr.tests.length),
    ),
  );
  const limit = 10;
  const hs = psr.histories.slice(0, limit);
  const ts = psr.tests.slice(0, limit);
  const table = el("table", { className: "psr-table" });
  table.appendChild(el("tr", {}, el("th", {}, ""), ...ts.map((t) => el("th", {}, t))));
  hs.forEach((h, i) => {
    table.appendChild(
      el(
        "tr",
        {},
        el("th", {}, h),
        ...ts.map((_, j) => el("td", { className: "cell" }, num(psr.table[i][j]))),
      ),
    );
  });
  root.appendChild(table);

  const provenance = el("details", { className: "cell-provenance" },
    el("summary", {}, "cell provenance"));
  const list = el("ul", {});
  for (const [cell, ids] of Object.entries(psr.provenance)) {
    list.appendChild(el("li", {}, `${cell}: ${ids.join(", ")}`));
  }
  provenance.appendChild(list);
  root.appendChild(provenance);

  const diag = el("table", { className: "restrictions" },
    el("tr", {},
      el("th", {}, "restriction"),
      el("th", {}, "shared"),
      el("th", {}, "mean gap"),
      el("th", {}, "status")));
  for (const r of detail.diagnostics.restrictions) {
    diag.appendChild(
      el("tr", { className: `restriction-${r.status}` },
        el("td", {}, `${r.source} → ${r.target}`),
        el("td", {}, num(r.shared_cells)),
        el("td", {}, num(r.mean_gap)),
        el("td", {}, r.status)),
    );
  }
  root.appendChild(diag);
  return root;
}

// ---------------------------------------------------------------------------
// Drift view
// ---------------------------------------------------------------------------

export function renderDiffView(runA: string, runB: string, report: DriftReport): HTMLElement {
  const root = el(
    "section",
    { className: "diff-view", "data-a": runA, "data-b": runB },
    el("h2", {}, `Drift — ${runA} vs ${runB}`),
  );
  if (report.empty) {
    root.appendChild(el("p", { className: "empty diff-empty" }, "No drift: the two runs agree on every channel."));
    return root;
  }
  const channels: Array<[string, Record<string, unknown>[]]> = [
    ["textual", report.textual],
    ["causal", report.causal],
    ["predictive", report.predictive],
    ["topological", report.topological],
  ];
  for (const [name, entries] of channels) {
    const section = el("section", { className: `drift-${name}` },
      el("h3", {}, `${name} (`, num(entries.length), ")"));
    const list = el("ul", {});
    for (const entry of entries.slice(0, 40)) {
      list.appendChild(el("li", {}, JSON.stringify(entry)));
    }
    section.appendChild(list);
    root.appendChild(section);
  }
  return root;
}

// ---------------------------------------------------------------------------
// Intervention editor
// ---------------------------------------------------------------------------

export interface InterventionFormHooks {
  onValidate(raw: string): string[];
  onSubmit(raw: string): void;
}

const DRAFT_TEMPLATE = JSON.stringify(
  {
    kind: "grounded",
    cover: "root",
    parameters: {},
    rewrites: [
      { match: "actor|relation|observation", replacement: "counterfactual_actor|sets_to|new_observation", note: "" },
    ],
  },
  null,
  2,
);

export function renderInterventionForm(run: string, hooks: InterventionFormHooks): HTMLElement {
  const errorBox = el("ul", { className: "draft-errors" });
  const textarea = el("textarea", { className: "draft", rows: "14", spellcheck: "false" }) as HTMLTextAreaElement;
  textarea.value = DRAFT_TEMPLATE;

  const showErrors = (errors: string[]): void => {
    clear(errorBox);
    for (const message of errors) {
      errorBox.appendChild(el("li", { className: "draft-error" }, message));
    }
  };

  const root = el(
    "section",
    { className: "intervene-view", "data-run": run },
    el("h2", {}, `Intervention probe on ${run}`),
    el("p", {}, "The draft is validated locally against the intervention spec schema; invalid drafts are never sent."),
    textarea,
    errorBox,
    el(
      "div",
      { className: "draft-actions" },
      el("button", { className: "validate-button", onClick: () => showErrors(hooks.onValidate(textarea.value)) }, "validate"),
      el(
        "button",
        {
          className: "submit-button",
          onClick: () => {
            const errors = hooks.onValidate(textarea.value);
            showErrors(errors);
            if (errors.length === 0) hooks.onSubmit(textarea.value);
          },
        },
        "run probe",
      ),
    ),
  );
  return root;
}

// ---------------------------------------------------------------------------
// Error / loading states
// ---------------------------------------------------------------------------

export function renderError(message: string): HTMLElement {
  return el("section", { className: "error-view" }, el("h2", {}, "Service unavailable"), el("p", {}, message));
}

export function renderLoading(): HTMLElement {
  return el("p", { className: "loading" }, "loading…");
}
