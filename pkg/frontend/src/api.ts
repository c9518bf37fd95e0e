// Thin REST client for the editing service. The fetch implementation is
// injectable so tests can run against a fake server.

import type {
  EditRequest,
  EditResponse,
  ServiceMeta,
  UtteranceMeta,
  UtteranceSummary,
  ViewBundle,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private base: string = "",
    private fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(this.base + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = await resp.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  meta(): Promise<ServiceMeta> {
    return this.request("/meta");
  }

  listUtterances(): Promise<UtteranceSummary[]> {
    return this.request("/utterances");
  }

  utterance(id: string): Promise<UtteranceMeta> {
    return this.request(`/utterances/${id}`);
  }

  async createSession(utteranceId: string): Promise<string> {
    const body = await this.request<{ session_id: string }>("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ utterance_id: utteranceId }),
    });
    return body.session_id;
  }

  view(sessionId: string): Promise<ViewBundle> {
    return this.request(`/sessions/${sessionId}/view`);
  }

  edit(sessionId: string, req: EditRequest): Promise<EditResponse> {
    return this.request(`/sessions/${sessionId}/edit`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(req),
    });
  }

  undo(sessionId: string): Promise<{ history_length: number }> {
    return this.request(`/sessions/${sessionId}/undo`, { method: "POST" });
  }
}
