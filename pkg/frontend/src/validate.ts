// Client-side validation of intervention drafts against the engine's spec
// schema. A draft with errors is never sent to the service.

import type { InterventionDraft, RewriteDraft } from "./types.js";

const KINDS = new Set([
  "edit_test",
  "fix_action",
  "insert_repair",
  "condition_regime",
  "grounded",
]);

const SUBSTRATE_KINDS = new Set(["scale_map", "stations", "panel"]);

function validTriple(raw: string): boolean {
  const parts = raw.split("|");
  return parts.length === 3 && parts.every((p) => p.trim().length > 0);
}

function validateRewrite(rewrite: RewriteDraft, index: number, errors: string[]): void {
  if (!validTriple(rewrite.match)) {
    errors.push(`rewrite ${index + 1}: match must be an actor|relation|observation triple`);
  }
  if (!validTriple(rewrite.replacement)) {
    errors.push(`rewrite ${index + 1}: replacement must be a full triple`);
  } else if (rewrite.replacement.split("|").some((p) => p.trim() === "*")) {
    errors.push(`rewrite ${index + 1}: replacement slots cannot be wildcards`);
  }
}

export function validateDraft(draft: InterventionDraft): string[] {
  const errors: string[] = [];
  if (!KINDS.has(draft.kind)) {
    errors.push(`unknown intervention kind: ${draft.kind || "(empty)"}`);
  }
  (draft.rewrites ?? []).forEach((rewrite, i) => validateRewrite(rewrite, i, errors));

  const params = draft.parameters ?? {};
  if (draft.kind === "edit_test" || draft.kind === "fix_action") {
    if (!validTriple(String(params.target ?? ""))) {
      errors.push(`${draft.kind} needs a target triple`);
    }
  }
  if (draft.kind === "insert_repair" && !validTriple(String(params.target ?? ""))) {
    errors.push("insert_repair needs a target triple");
  }
  if (draft.kind === "condition_regime" && !params.key) {
    errors.push("condition_regime needs a metadata key");
  }
  if (draft.substrate) {
    if (!SUBSTRATE_KINDS.has(draft.substrate.kind)) {
      errors.push(`unknown substrate kind: ${draft.substrate.kind}`);
    }
    if (!draft.substrate.path) {
      errors.push("substrate needs a path (server-side, relative to the runs root)");
    }
    if (draft.substrate.kind === "scale_map") {
      if (draft.substrate.m_base == null || draft.substrate.m_cf == null) {
        errors.push("scale_map substrate needs m_base and m_cf");
      }
    }
    if (draft.substrate.kind === "panel") {
      for (const field of ["base_group", "target_group", "focus_markers"]) {
        if (draft.substrate[field] == null) {
          errors.push(`panel substrate needs ${field}`);
        }
      }
    }
  }
  return errors;
}

export function parseDraft(raw: string): { draft: InterventionDraft | null; errors: string[] } {
  let parsed: unknown;
  try {
    parsed = JSON.parse(raw);
  } catch (err) {
    return { draft: null, errors: [`draft is not valid JSON: ${(err as Error).message}`] };
  }
  if (typeof parsed !== "object" || parsed === null || Array.isArray(parsed)) {
    return { draft: null, errors: ["draft must be a JSON object"] };
  }
  const draft = parsed as InterventionDraft;
  return { draft, errors: validateDraft(draft) };
}
