/**
 * Typed client for the curation service's /api/v1 endpoints. All methods
 * surface HTTP conflicts (stale query ids) and completion as values rather
 * than exceptions, so the controller can react without try/catch ladders;
 * network-level failures still reject.
 */

export interface WaveformUnit {
  unit_id: number;
  session: number;
  waveform: number[][];
}

export interface Progress {
  answered: number;
  inferred: number;
  blocks_found: number;
  units_remaining: number;
}

export interface PendingQuery {
  query_id: number;
  a: WaveformUnit;
  b: WaveformUnit;
  progress: Progress;
}

export interface SessionState {
  session_id: string;
  status: string;
  progress: Progress;
  n_units: number;
  pending_query_id?: number;
  pending_pair?: [number, number];
}

export interface ResultReport {
  partition: number[][];
  counters: {
    oracle_consultations: number;
    inferred_answers: number;
    blocks_found: number;
  };
  per_tree: { tag: string; contributions: number; deviations: number }[];
}

export type Answer = "same" | "different";

export type SubmitOutcome =
  | { kind: "accepted"; status: string; progress: Progress }
  | { kind: "conflict"; pending: PendingQuery | null; status: string }
  | { kind: "rejected"; detail: string };

export type QueryOutcome =
  | { kind: "pending"; query: PendingQuery }
  | { kind: "complete" }
  | { kind: "aborted" };

async function asJson(response: Response): Promise<any> {
  const text = await response.text();
  return text ? JSON.parse(text) : {};
}

export class ApiClient {
  constructor(private readonly base: string = "") {}

  private url(path: string): string {
    return `${this.base}/api/v1${path}`;
  }

  async createSession(
    datasetId: string,
    ensembleId: string,
    config: Record<string, unknown> = {},
  ): Promise<{ session_id: string; status: string }> {
    const response = await fetch(this.url("/sessions"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ dataset_id: datasetId, ensemble_id: ensembleId, config }),
    });
    const body = await asJson(response);
    if (!response.ok) {
      throw new Error(body.detail ?? `session creation failed (${response.status})`);
    }
    return body;
  }

  async uploadDataset(content: string): Promise<{ dataset_id: string; n_units: number }> {
    const response = await fetch(this.url("/datasets"), {
      method: "POST",
      headers: { "content-type": "text/csv" },
      body: content,
    });
    const body = await asJson(response);
    if (!response.ok) {
      throw new Error(body.detail ?? `dataset upload failed (${response.status})`);
    }
    return body;
  }

  async uploadEnsemble(
    trees: { name: string; content: string }[],
  ): Promise<{ ensemble_id: string; n_trees: number }> {
    const response = await fetch(this.url("/ensembles"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ trees }),
    });
    const body = await asJson(response);
    if (!response.ok) {
      throw new Error(body.detail ?? `ensemble upload failed (${response.status})`);
    }
    return body;
  }

  async getState(sessionId: string): Promise<SessionState> {
    const response = await fetch(this.url(`/sessions/${sessionId}/state`));
    const body = await asJson(response);
    if (!response.ok) {
      throw new Error(body.detail ?? `state fetch failed (${response.status})`);
    }
    return body;
  }

  async getQuery(sessionId: string): Promise<QueryOutcome> {
    const response = await fetch(this.url(`/sessions/${sessionId}/query`));
    if (response.status === 204) {
      return { kind: "complete" };
    }
    if (response.status === 409) {
      return { kind: "aborted" };
    }
    const body = await asJson(response);
    if (!response.ok) {
      throw new Error(body.detail ?? `query fetch failed (${response.status})`);
    }
    return { kind: "pending", query: body };
  }

  async submitAnswer(
    sessionId: string,
    queryId: number,
    answer: Answer,
  ): Promise<SubmitOutcome> {
    const response = await fetch(this.url(`/sessions/${sessionId}/answers`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ query_id: queryId, answer }),
    });
    const body = await asJson(response);
    if (response.status === 409) {
      return { kind: "conflict", pending: body.pending ?? null, status: body.status ?? "unknown" };
    }
    if (!response.ok) {
      return { kind: "rejected", detail: body.detail ?? `submit failed (${response.status})` };
    }
    return { kind: "accepted", status: body.status, progress: body.progress };
  }

  async undo(sessionId: string, k = 1): Promise<{ pending: PendingQuery | null; progress: Progress }> {
    const response = await fetch(this.url(`/sessions/${sessionId}/undo`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ k }),
    });
    const body = await asJson(response);
    if (!response.ok) {
      throw new Error(body.detail ?? `undo failed (${response.status})`);
    }
    return { pending: body.pending ?? null, progress: body.progress };
  }

  async getResult(sessionId: string): Promise<ResultReport> {
    const response = await fetch(this.url(`/sessions/${sessionId}/result`));
    const body = await asJson(response);
    if (!response.ok) {
      throw new Error(body.detail ?? `result fetch failed (${response.status})`);
    }
    return body;
  }

  exportUrl(sessionId: string): string {
    return this.url(`/sessions/${sessionId}/export`);
  }
}
