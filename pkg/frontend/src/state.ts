// ViewState lives entirely in the URL: reloading any view reproduces it from
// the query string, so the UI stays stateless against the service.

export interface ViewState {
  run: string | null;
  view: "runs" | "atlas" | "context" | "family" | "intervene" | "diff";
  region: string | null;
  context: string | null;
  family: string | null;
  compareA: string | null;
  compareB: string | null;
}

export const DEFAULT_STATE: ViewState = {
  run: null,
  view: "runs",
  region: null,
  context: null,
  family: null,
  compareA: null,
  compareB: null,
};

const VIEWS = new Set(["runs", "atlas", "context", "family", "intervene", "diff"]);

export function decodeState(search: string): ViewState {
  const params = new URLSearchParams(search);
  const view = params.get("view") ?? (params.get("run") ? "atlas" : "runs");
  return {
    run: params.get("run"),
    view: (VIEWS.has(view) ? view : "runs") as ViewState["view"],
    region: params.get("region"),
    context: params.get("context"),
    family: params.get("family"),
    compareA: params.get("a"),
    compareB: params.get("b"),
  };
}

export function encodeState(state: ViewState): string {
  const params = new URLSearchParams();
  if (state.run) params.set("run", state.run);
  if (state.view !== "runs") params.set("view", state.view);
  if (state.region) params.set("region", state.region);
  if (state.context) params.set("context", state.context);
  if (state.family) params.set("family", state.family);
  if (state.compareA) params.set("a", state.compareA);
  if (state.compareB) params.set("b", state.compareB);
  const encoded = params.toString();
  return encoded ? `?${encoded}` : "";
}
