// Thin typed client over the service's JSON API. Every method maps to one
// endpoint; errors carry the HTTP status so callers can branch on 409.

import type {
  ActionView,
  DatasetView,
  FigureMeta,
  Policy,
  ResearchPhase,
  RunView,
  SendResult,
  SessionState,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

async function parse<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = await resp.json();
      detail = JSON.stringify(body);
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class ApiClient {
  constructor(private baseUrl: string = "") {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  private post<T>(path: string, body?: unknown): Promise<T> {
    return fetch(this.url(path), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    }).then((r) => parse<T>(r));
  }

  private get<T>(path: string): Promise<T> {
    return fetch(this.url(path)).then((r) => parse<T>(r));
  }

  createSession(): Promise<{ session_id: string }> {
    return this.post("/api/sessions");
  }

  getSession(sessionId: string): Promise<SessionState> {
    return this.get(`/api/sessions/${sessionId}`);
  }

  sendMessage(sessionId: string, content: string, phase: ResearchPhase): Promise<SendResult> {
    return this.post(`/api/sessions/${sessionId}/messages`, { content, phase });
  }

  getAutonomy(sessionId: string): Promise<{ policy: Policy }> {
    return this.get(`/api/sessions/${sessionId}/autonomy`);
  }

  putAutonomy(sessionId: string, policy: Partial<Policy>): Promise<{ policy: Policy }> {
    return fetch(this.url(`/api/sessions/${sessionId}/autonomy`), {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ policy }),
    }).then((r) => parse<{ policy: Policy }>(r));
  }

  approveAction(sessionId: string, actionId: string): Promise<ActionView> {
    return this.post(`/api/sessions/${sessionId}/actions/${actionId}/approve`);
  }

  rejectAction(sessionId: string, actionId: string, reason = ""): Promise<ActionView> {
    return this.post(`/api/sessions/${sessionId}/actions/${actionId}/reject`, { reason });
  }

  listDatasets(): Promise<{ datasets: DatasetView[] }> {
    return this.get("/api/datasets");
  }

  startRun(body: {
    subject_id: string;
    decoder_cfg?: Record<string, unknown>;
    train_cfg?: Record<string, unknown>;
  }): Promise<{ run_id: string }> {
    return this.post("/api/runs", body);
  }

  listRuns(): Promise<{ runs: RunView[] }> {
    return this.get("/api/runs");
  }

  getRun(runId: string): Promise<RunView> {
    return this.get(`/api/runs/${runId}`);
  }

  listFigures(): Promise<{ figures: FigureMeta[] }> {
    return this.get("/api/figures");
  }

  figureImageUrl(figureId: string): string {
    return this.url(`/api/figures/${figureId}`);
  }

  figureDataUrl(figureId: string): string {
    return this.url(`/api/figures/${figureId}/data`);
  }

  async fetchFigureData(figureId: string): Promise<ArrayBuffer> {
    const resp = await fetch(this.figureDataUrl(figureId));
    if (!resp.ok) {
      throw new ApiError(resp.status, resp.statusText);
    }
    return resp.arrayBuffer();
  }
}
