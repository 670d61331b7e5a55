// Typed client over the documented endpoints. Every failure surfaces the
// server's verbatim detail plus retry guidance for the UI to show.

import type {
  AnnotationChunk,
  AnnotationResponse,
  ConsensusResult,
  DoubtPayload,
  DoubtResolution,
  HistogramPayload,
  IterationStatus,
  IterationSummary,
  OntologyPayload,
  ProjectionPayload,
  SuggestionResult,
  WorklistPayload,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly detail: string;

  constructor(status: number, detail: string) {
    super(`${status}: ${detail}`);
    this.status = status;
    this.detail = detail;
  }

  /** Human guidance matching the server's conflict semantics. */
  get guidance(): string {
    if (this.status === 409) {
      return "This item belongs to another group or is mid-iteration; refresh your queue and retry.";
    }
    if (this.status === 422) {
      return "The annotation is invalid (check onset/offset bounds and the class picker).";
    }
    if (this.status === 401) {
      return "Session expired or token invalid; sign in again.";
    }
    return "Retry once the service is reachable.";
  }
}

export interface ApiOptions {
  baseUrl: string;
  token: string;
  fetchImpl?: typeof fetch;
}

export class ApiClient {
  private readonly baseUrl: string;
  private readonly token: string;
  private readonly fetchImpl: typeof fetch;

  constructor(options: ApiOptions) {
    this.baseUrl = options.baseUrl.replace(/\/$/, "");
    this.token = options.token;
    this.fetchImpl = options.fetchImpl ?? fetch;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: {
        Authorization: `Bearer ${this.token}`,
        ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
      },
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    const text = await response.text();
    if (!response.ok) {
      let detail = text;
      try {
        const parsed = JSON.parse(text) as { detail?: unknown };
        if (parsed.detail !== undefined) {
          detail = typeof parsed.detail === "string" ? parsed.detail : JSON.stringify(parsed.detail);
        }
      } catch {
        // non-JSON error body: keep the raw text
      }
      throw new ApiError(response.status, detail);
    }
    return JSON.parse(text) as T;
  }

  health(): Promise<{ status: string }> {
    return this.request("GET", "/healthz");
  }

  ontology(): Promise<OntologyPayload> {
    return this.request("GET", "/ontology");
  }

  createIteration(body: {
    node_id: string;
    window_start: string;
    window_end: string;
    budget?: number;
  }): Promise<IterationSummary> {
    return this.request("POST", "/iterations", body);
  }

  iteration(iterationId: string): Promise<IterationStatus> {
    return this.request("GET", `/iterations/${encodeURIComponent(iterationId)}`);
  }

  proposals(iterationId: string, labeler: string): Promise<WorklistPayload> {
    const id = encodeURIComponent(iterationId);
    return this.request("GET", `/iterations/${id}/proposals?labeler=${encodeURIComponent(labeler)}`);
  }

  runConsensus(iterationId: string): Promise<ConsensusResult> {
    return this.request("POST", `/iterations/${encodeURIComponent(iterationId)}/consensus`);
  }

  submitAnnotations(audioId: string, chunks: AnnotationChunk[]): Promise<AnnotationResponse> {
    return this.request("POST", "/annotations", { audio_id: audioId, chunks });
  }

  doubts(labeler: string): Promise<DoubtPayload> {
    return this.request("GET", `/doubts?labeler=${encodeURIComponent(labeler)}`);
  }

  resolveDoubt(
    chunkId: number,
    body: { class_id: number; onset?: number; offset?: number },
  ): Promise<DoubtResolution> {
    return this.request("POST", `/doubts/${chunkId}/resolution`, body);
  }

  suggestClass(name: string): Promise<SuggestionResult> {
    return this.request("POST", "/ontology/suggestions", { name });
  }

  projection(iterationId: string): Promise<ProjectionPayload> {
    return this.request("GET", `/dashboard/projection?iteration=${encodeURIComponent(iterationId)}`);
  }

  histogram(top = 50): Promise<HistogramPayload> {
    return this.request("GET", `/dashboard/histogram?top=${top}`);
  }
}
