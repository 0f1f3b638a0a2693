// Shapes served by the causalatlas HTTP service. These mirror the versioned
// JSON artifacts on disk; the UI never derives numbers from them, it only
// displays what the service returns.

export interface RunSummary {
  events: number;
  episodes: number;
  contexts: number;
  psrs: number;
  claims: number;
  compatible_restrictions: number;
  divergent_restrictions: number;
  compatible_overlaps: number;
  tense_overlaps: number;
  mean_glue_loss: number;
  [key: string]: number;
}

export interface RunListEntry {
  id: string;
  summary: RunSummary;
}

export interface RunListing {
  runs: RunListEntry[];
}

export interface SpineEdge {
  cause: string;
  effect: string;
  support: number;
}

export interface SpinePath {
  nodes: string[];
  edges: SpineEdge[];
  support: number;
}

export interface Region {
  name: string;
  contexts: string[];
  context_count: number;
  event_count: number;
  context_event_counts: Record<string, number>;
}

export interface ObstructionSide {
  context_id: string;
  value: number;
  support: number;
  confidence: number;
  provenance: string[];
  polarities: Record<string, number>;
  t_min: number | null;
  t_max: number | null;
  metadata: Record<string, string>;
}

export interface TensionCell {
  cell: [string, string];
  sides: ObstructionSide[];
  classification: string;
  kind: "table" | "claim";
}

export interface Tension {
  cover: string;
  classification: string;
  rationale: string;
  cells: TensionCell[];
}

export interface ClaimFamily {
  key: string;
  cause: string;
  effect: string;
  claims: number;
  surfaces: Record<string, number>;
  surface_variants: number;
  polarities: Record<string, number>;
  regime_aliases: number;
  contexts: string[];
  provenance: string[];
  tension_candidate: boolean;
}

export interface Atlas {
  schema_version: number;
  spine: SpinePath[];
  regions: Region[];
  tensions: Tension[];
  families: ClaimFamily[];
  provenance_index: Record<string, string[]>;
  summary: Record<string, number>;
}

export interface EvidenceUnit {
  id: string;
  source_id: string;
  locator: string | null;
  retrieval_meta: Record<string, string>;
  extraction_confidence: number;
  synthesized: boolean;
}

export interface PsrPayload {
  context_id: string;
  histories: string[];
  tests: string[];
  layout: "dense" | "coo";
  table: number[][];
  support: number[][];
  provenance: Record<string, string[]>;
  diagnostics: {
    rank: number;
    sparsity: number;
    mean_confidence: number;
    event_count: number;
  };
}

export interface RestrictionDiagnostic {
  source: string;
  target: string;
  shared_cells: number;
  mean_gap: number;
  max_gap: number;
  lambda_policy: string;
  status: "aligned" | "divergent";
  empty_overlap: boolean;
}

export interface GluingOverlap {
  pair: [string, string];
  weight: number;
  tension: number;
  section_count: number;
  status: "compatible" | "tense";
  cell_loss: number;
}

export interface SubstrateResult {
  kind: string;
  baseline: number;
  counterfactual: number;
  effect: number;
  relative_effect: number;
  table: Record<string, unknown>[];
  provenance: Record<string, string>;
  units: string;
  grounding: "full_reproduction" | "figure_data_proxy";
  extra: Record<string, unknown>;
}

export interface Bundle {
  schema_version: number;
  metadata: Record<string, unknown> & { run_id?: string; parent_run?: string | null };
  summary: RunSummary;
  psrs: PsrPayload[];
  diagnostics: {
    restrictions: RestrictionDiagnostic[];
    overlaps: GluingOverlap[];
    obstructions: Tension[];
    total_tension: number;
    summary: Record<string, number>;
  };
  substrate_results: SubstrateResult[];
  intervention: { spec: unknown; modified_events: number } | null;
  evidence: EvidenceUnit[];
  event_count: number;
  episode_count: number;
}

export interface ContextDetail {
  psr: PsrPayload;
  diagnostics: {
    restrictions: RestrictionDiagnostic[];
    overlaps: GluingOverlap[];
  };
}

export interface PersistentState {
  schema_version: number;
  focus: string;
  recommendation: "accept" | "provisional" | "blocked";
  parent: string | null;
  focus_diagnostics: Record<string, unknown>;
  run_id: string;
}

export interface DriftEntry {
  [key: string]: unknown;
}

export interface DriftReport {
  schema_version: number;
  textual: DriftEntry[];
  causal: DriftEntry[];
  predictive: DriftEntry[];
  topological: DriftEntry[];
  empty: boolean;
}

// Intervention drafts match the engine's intervention spec schema.

export interface RewriteDraft {
  match: string;
  replacement: string;
  note?: string;
}

export interface SubstrateDraft {
  kind: "scale_map" | "stations" | "panel";
  path: string;
  [key: string]: unknown;
}

export interface InterventionDraft {
  kind: "edit_test" | "fix_action" | "insert_repair" | "condition_regime" | "grounded";
  cover?: string;
  parameters?: Record<string, unknown>;
  rewrites?: RewriteDraft[];
  substrate?: SubstrateDraft | null;
}
