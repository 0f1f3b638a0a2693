// Client for the causalatlas HTTP service. All reads return immutable
// snapshots; the one write (submitIntervention) returns a fresh run id.

import type {
  Atlas,
  Bundle,
  ContextDetail,
  DriftReport,
  InterventionDraft,
  PersistentState,
  RunListing,
} from "./types.js";

export class ServiceError extends Error {
  constructor(
    message: string,
    public status: number,
    public detail: Record<string, unknown> = {},
  ) {
    super(message);
  }
}

export interface AtlasService {
  listRuns(): Promise<RunListing>;
  bundle(run: string): Promise<Bundle>;
  atlas(run: string): Promise<Atlas>;
  state(run: string): Promise<PersistentState>;
  contextDetail(run: string, contextId: string): Promise<ContextDetail>;
  diff(runA: string, runB: string): Promise<DriftReport>;
  submitIntervention(run: string, draft: InterventionDraft): Promise<string>;
}

export class HttpAtlasService implements AtlasService {
  constructor(private base: string = "") {}

  private async get<T>(path: string): Promise<T> {
    const response = await fetch(`${this.base}${path}`);
    if (!response.ok) {
      const detail = await response.json().catch(() => ({}));
      throw new ServiceError(
        (detail as { error?: string }).error ?? `GET ${path} failed (${response.status})`,
        response.status,
        detail as Record<string, unknown>,
      );
    }
    return (await response.json()) as T;
  }

  listRuns(): Promise<RunListing> {
    return this.get("/runs");
  }

  bundle(run: string): Promise<Bundle> {
    return this.get(`/runs/${encodeURIComponent(run)}`);
  }

  atlas(run: string): Promise<Atlas> {
    return this.get(`/runs/${encodeURIComponent(run)}/atlas`);
  }

  state(run: string): Promise<PersistentState> {
    return this.get(`/runs/${encodeURIComponent(run)}/state`);
  }

  contextDetail(run: string, contextId: string): Promise<ContextDetail> {
    return this.get(
      `/runs/${encodeURIComponent(run)}/contexts/${encodeURIComponent(contextId)}`,
    );
  }

  diff(runA: string, runB: string): Promise<DriftReport> {
    return this.get(
      `/runs/${encodeURIComponent(runA)}/diff/${encodeURIComponent(runB)}`,
    );
  }

  async submitIntervention(run: string, draft: InterventionDraft): Promise<string> {
    const response = await fetch(
      `${this.base}/runs/${encodeURIComponent(run)}/interventions`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(draft),
      },
    );
    const payload = (await response.json().catch(() => ({}))) as Record<string, unknown>;
    if (!response.ok) {
      throw new ServiceError(
        (payload.error as string) ?? `intervention rejected (${response.status})`,
        response.status,
        payload,
      );
    }
    return payload.new_run_id as string;
  }
}
