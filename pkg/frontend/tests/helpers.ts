// Shared test plumbing: fixture loading (real engine output, regenerated by
// generate_fixtures.py) and an in-memory service double.

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import type { AtlasService } from "../src/api.js";
import { ServiceError } from "../src/api.js";
import type {
  Atlas,
  Bundle,
  ContextDetail,
  DriftReport,
  InterventionDraft,
  PersistentState,
  RunListing,
} from "../src/types.js";

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "fixtures");

export function fixture<T>(...parts: string[]): T {
  return JSON.parse(readFileSync(join(FIXTURES, ...parts), "utf-8")) as T;
}

export const baseAtlas = (): Atlas => fixture<Atlas>("base", "atlas.json");
export const baseBundle = (): Bundle => fixture<Bundle>("base", "bundle.json");
export const baseState = (): PersistentState => fixture<PersistentState>("base", "state.json");
export const cfBundle = (): Bundle => fixture<Bundle>("cf", "bundle.json");
export const cfAtlas = (): Atlas => fixture<Atlas>("cf", "atlas.json");
export const cfDiff = (): DriftReport => fixture<DriftReport>("cf", "diff.json");
export const emptyDiff = (): DriftReport => fixture<DriftReport>("diff_empty.json");
export const runListing = (): RunListing => fixture<RunListing>("runs.json");

/** Collect every numeric value in a payload as its String() form. */
export function numericStrings(payload: unknown, out = new Set<string>()): Set<string> {
  if (typeof payload === "number") out.add(String(payload));
  else if (Array.isArray(payload)) payload.forEach((item) => numericStrings(item, out));
  else if (payload && typeof payload === "object") {
    Object.values(payload).forEach((value) => numericStrings(value, out));
  }
  return out;
}

/** In-memory stand-in for the HTTP service, backed by the fixtures. */
export class FakeService implements AtlasService {
  interventions: Array<{ run: string; draft: InterventionDraft }> = [];
  newRunId = "base-do-000";

  async listRuns(): Promise<RunListing> {
    return runListing();
  }

  async bundle(run: string): Promise<Bundle> {
    if (run === "base" || run === this.newRunId) return baseBundle();
    if (run === "indus_cf") return cfBundle();
    throw new ServiceError(`not found: run ${run}`, 404);
  }

  async atlas(run: string): Promise<Atlas> {
    if (run === "base" || run === this.newRunId) return baseAtlas();
    if (run === "indus_cf") return cfAtlas();
    throw new ServiceError(`not found: run ${run}`, 404);
  }

  async state(run: string): Promise<PersistentState> {
    if (run === "base" || run === this.newRunId) return baseState();
    throw new ServiceError(`not found: run ${run}`, 404);
  }

  async contextDetail(run: string, contextId: string): Promise<ContextDetail> {
    const bundle = await this.bundle(run);
    const psr = bundle.psrs.find((p) => p.context_id === contextId);
    if (!psr) throw new ServiceError(`not found: context ${contextId}`, 404);
    return {
      psr,
      diagnostics: {
        restrictions: bundle.diagnostics.restrictions.filter(
          (r) => r.source === contextId || r.target === contextId,
        ),
        overlaps: bundle.diagnostics.overlaps.filter((o) => o.pair.includes(contextId)),
      },
    };
  }

  async diff(runA: string, runB: string): Promise<DriftReport> {
    if (runA === "base" && runB === this.newRunId) return emptyDiff();
    return cfDiff();
  }

  async submitIntervention(run: string, draft: InterventionDraft): Promise<string> {
    this.interventions.push({ run, draft });
    return this.newRunId;
  }
}

/** Service double that fails the test if any request goes out. */
export class ForbiddenService extends FakeService {
  constructor(private fail: (message: string) => void) {
    super();
  }

  override async submitIntervention(run: string, draft: InterventionDraft): Promise<string> {
    this.fail(`unexpected intervention request for ${run}`);
    return super.submitIntervention(run, draft);
  }
}
