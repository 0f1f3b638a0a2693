// Controller: URL-encoded ViewState in, fetched snapshots rendered out.
// Navigation pushes a new URL; popstate (or reload) reproduces any view.

import type { AtlasService } from "./api.js";
import { HttpAtlasService, ServiceError } from "./api.js";
import { clear, el } from "./dom.js";
import { decodeState, encodeState, type ViewState } from "./state.js";
import type { EvidenceUnit, InterventionDraft } from "./types.js";
import { parseDraft } from "./validate.js";
import {
  renderAtlasView,
  renderContextView,
  renderDiffView,
  renderError,
  renderFamilyView,
  renderInterventionForm,
  renderLoading,
  renderRunList,
  type AtlasHandlers,
} from "./views.js";

export class App {
  constructor(
    private service: AtlasService,
    private root: HTMLElement,
    private navigate: (state: ViewState) => void,
  ) {}

  private handlers(state: ViewState): AtlasHandlers {
    return {
      openRun: (run) => this.navigate({ ...state, run, view: "atlas", region: null, context: null, family: null }),
      openRegion: (region) => this.navigate({ ...state, view: "atlas", region }),
      openContext: (context) => this.navigate({ ...state, view: "context", context }),
      openFamily: (family) => this.navigate({ ...state, view: "family", family }),
      openIntervene: () => this.navigate({ ...state, view: "intervene" }),
      openCompare: (a, b) => this.navigate({ ...state, view: "diff", compareA: a, compareB: b }),
    };
  }

  async render(state: ViewState): Promise<void> {
    clear(this.root);
    this.root.appendChild(renderLoading());
    try {
      const view = await this.build(state);
      clear(this.root);
      this.root.appendChild(view);
    } catch (err) {
      clear(this.root);
      this.root.appendChild(renderError((err as Error).message));
    }
  }

  private async build(state: ViewState): Promise<HTMLElement> {
    const handlers = this.handlers(state);
    if (state.view === "runs" || !state.run) {
      const listing = await this.service.listRuns();
      return renderRunList(listing, handlers);
    }
    const run = state.run;

    if (state.view === "atlas") {
      const [atlas, bundle, persistent] = await Promise.all([
        this.service.atlas(run),
        this.service.bundle(run),
        this.service.state(run).catch(() => null),
      ]);
      return renderAtlasView(run, atlas, bundle, persistent, state.region, handlers);
    }

    if (state.view === "context" && state.context) {
      const detail = await this.service.contextDetail(run, state.context);
      return renderContextView(detail);
    }

    if (state.view === "family" && state.family) {
      const [atlas, bundle] = await Promise.all([
        this.service.atlas(run),
        this.service.bundle(run),
      ]);
      const family = atlas.families.find((f) => f.key === state.family);
      if (!family) return renderError(`unknown claim family: ${state.family}`);
      const evidence = new Map<string, EvidenceUnit>(bundle.evidence.map((u) => [u.id, u]));
      return renderFamilyView(family, evidence, handlers);
    }

    if (state.view === "diff" && state.compareA && state.compareB) {
      const report = await this.service.diff(state.compareA, state.compareB);
      return renderDiffView(state.compareA, state.compareB, report);
    }

    if (state.view === "intervene") {
      return renderInterventionForm(run, {
        onValidate: (raw) => parseDraft(raw).errors,
        onSubmit: (raw) => void this.submit(state, raw),
      });
    }

    return renderError(`view ${state.view} needs more selection state`);
  }

  /** POST the draft; on acceptance jump straight into the new run's diff
   * against its parent. Service-side 400s surface inline. */
  async submit(state: ViewState, raw: string): Promise<void> {
    const { draft, errors } = parseDraft(raw);
    if (errors.length > 0 || !draft || !state.run) return;
    try {
      const newRunId = await this.service.submitIntervention(state.run, draft as InterventionDraft);
      this.navigate({
        ...state,
        run: newRunId,
        view: "diff",
        compareA: state.run,
        compareB: newRunId,
      });
    } catch (err) {
      const box = this.root.querySelector(".draft-errors");
      if (box) {
        box.appendChild(
          el(
            "li",
            { className: "draft-error service-error" },
            err instanceof ServiceError ? `service rejected the draft: ${err.message}` : String(err),
          ),
        );
      }
    }
  }
}

export function boot(): void {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app mount point");
  const base = new URLSearchParams(location.search).get("api") ?? "";
  const service = new HttpAtlasService(base);

  const app = new App(service, root, (state) => {
    const api = new URLSearchParams(location.search).get("api");
    const query = encodeState(state) + (api ? (encodeState(state) ? "&" : "?") + `api=${encodeURIComponent(api)}` : "");
    history.pushState(null, "", query || location.pathname);
    void app.render(state);
  });

  window.addEventListener("popstate", () => void app.render(decodeState(location.search)));
  void app.render(decodeState(location.search));
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  boot();
}
