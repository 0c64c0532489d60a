/**
 * Typed client for the feedback service. Every request the UI ever makes
 * goes through this class, so the documented endpoint set below is the whole
 * network surface (the tests capture and verify that).
 */

export interface EntryView {
  entry_id: string;
  lat: number;
  lon: number;
  image_ref: string;
  created_at: number;
  note: string | null;
}

export interface CandidateView {
  rle: number[];
  width: number;
  height: number;
  score: number;
}

export interface ClickView {
  x: number;
  y: number;
  polarity: "include" | "exclude";
}

export interface SessionView {
  session_id: string;
  entry_id: string;
  image_ref: string;
  clicks: ClickView[];
  candidates: CandidateView[];
  selected: number;
}

export type JobState = "queued" | "running" | "succeeded" | "failed";

export interface JobView {
  job_id: string;
  session_id: string;
  state: JobState;
  reason: string | null;
  variant_ids: string[];
  prompt: string;
  seed: number;
  num_variants: number;
}

export interface VariantView {
  variant_id: string;
  job_id: string;
  entry_id: string;
  image_ref: string;
  prompt: string;
  seed: number;
  backend_id: string;
  created_at: number;
}

export interface QuestionnairePayload {
  q1: number;
  q2: number;
  q3: number;
  q4: number;
  q5: number;
  q6: number;
  q7: number;
  gender: string;
  education: string;
  birth_year: string;
  profession: string;
  design_background: string;
  open_feedback: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly base: string;
  private readonly fetchImpl: FetchLike;

  constructor(base: string, fetchImpl?: FetchLike) {
    this.base = base.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body instanceof FormData) {
      init.body = body;
    } else if (body !== undefined) {
      init.body = JSON.stringify(body);
      init.headers = { "Content-Type": "application/json" };
    }
    const response = await this.fetchImpl(`${this.base}${path}`, init);
    if (!response.ok) {
      let code = "unknown_error";
      let message = `${response.status}`;
      try {
        const parsed = (await response.json()) as { code?: string; message?: string };
        code = parsed.code ?? code;
        message = parsed.message ?? message;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, code, message);
    }
    return (await response.json()) as T;
  }

  health(): Promise<{ status: string }> {
    return this.request("GET", "/api/health");
  }

  createEntry(lat: number, lon: number, image: Blob, note?: string): Promise<{ entry_id: string }> {
    const form = new FormData();
    form.set("lat", String(lat));
    form.set("lon", String(lon));
    if (note) form.set("note", note);
    form.set("image", image, "photo.png");
    return this.request("POST", "/api/entries", form);
  }

  listEntries(bbox?: [number, number, number, number]): Promise<{ entries: EntryView[] }> {
    const query = bbox ? `?bbox=${bbox.join(",")}` : "";
    return this.request("GET", `/api/entries${query}`);
  }

  getEntry(entryId: string): Promise<{ entry: EntryView; variants: VariantView[] }> {
    return this.request("GET", `/api/entries/${entryId}`);
  }

  createSession(entryId: string): Promise<{ session_id: string }> {
    return this.request("POST", `/api/entries/${entryId}/sessions`);
  }

  getSession(sessionId: string): Promise<SessionView> {
    return this.request("GET", `/api/sessions/${sessionId}`);
  }

  addClick(sessionId: string, x: number, y: number, polarity: "include" | "exclude"): Promise<SessionView> {
    return this.request("POST", `/api/sessions/${sessionId}/clicks`, { x, y, polarity });
  }

  undo(sessionId: string): Promise<SessionView> {
    return this.request("POST", `/api/sessions/${sessionId}/undo`);
  }

  selectCandidate(sessionId: string, index: number): Promise<SessionView> {
    return this.request("POST", `/api/sessions/${sessionId}/select`, { index });
  }

  generate(
    sessionId: string,
    prompt: string,
    seed?: number,
    numVariants?: number,
  ): Promise<{ job_id: string }> {
    const body: Record<string, unknown> = { prompt };
    if (seed !== undefined) body.seed = seed;
    if (numVariants !== undefined) body.num_variants = numVariants;
    return this.request("POST", `/api/sessions/${sessionId}/generate`, body);
  }

  getJob(jobId: string): Promise<JobView> {
    return this.request("GET", `/api/jobs/${jobId}`);
  }

  variantImageUrl(variantId: string): string {
    return `${this.base}/api/variants/${variantId}/image`;
  }

  async fetchVariantImage(variantId: string): Promise<Blob> {
    const response = await this.fetchImpl(this.variantImageUrl(variantId), { method: "GET" });
    if (!response.ok) {
      throw new ApiError(response.status, "unknown_variant", `variant image ${response.status}`);
    }
    return response.blob();
  }

  rateVariant(variantId: string, score: number): Promise<{ variant_id: string; score: number }> {
    return this.request("POST", `/api/variants/${variantId}/rating`, { score });
  }

  submitQuestionnaire(entryId: string, payload: QuestionnairePayload): Promise<{ entry_id: string }> {
    return this.request("POST", `/api/entries/${entryId}/questionnaire`, payload);
  }
}
