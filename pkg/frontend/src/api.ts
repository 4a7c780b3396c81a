/** Typed client for the session HTTP API. */

export interface ArithmeticProblem {
  id: number;
  text: string;
}

export interface ArithmeticState {
  block_id: string;
  problems: ArithmeticProblem[];
}

export interface SessionState {
  phase: string;
  session: number;
  block: number;
  trial: number;
  total_trials: number;
  collected_ratings: number;
  now_ms: number;
  phase_deadline_ms: number | null;
  remaining_ms: number | null;
  trial_id?: string | null;
  clip_id?: string | null;
  music_quadrant?: string | null;
  arithmetic?: ArithmeticState | null;
  awaiting_session?: number | null;
}

export interface RatingPayload {
  trial_id: string;
  valence: number;
  arousal: number;
  liking: number;
}

export interface RatingAck {
  trial_id: string;
  derived_label: string;
  label_source: string;
  phase: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly errorType: string,
    readonly detail: string,
  ) {
    super(`${errorType}: ${detail}`);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function parseError(response: Response): Promise<ApiError> {
  let errorType = `HTTP ${response.status}`;
  let detail = response.statusText;
  try {
    const body = await response.json();
    if (body && typeof body === "object") {
      if (typeof body.error === "string") errorType = body.error;
      if (typeof body.detail === "string") detail = body.detail;
      else if (body.detail) detail = JSON.stringify(body.detail);
    }
  } catch {
    /* non-JSON error body; keep the status text */
  }
  return new ApiError(response.status, errorType, detail);
}

export class SessionApi {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  createSession(body: Record<string, unknown>): Promise<{ session_id: string; total_trials: number }> {
    return this.request("/api/session", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  start(sessionId: string): Promise<SessionState> {
    return this.request(`/api/session/${sessionId}/start`, { method: "POST" });
  }

  getState(sessionId: string): Promise<SessionState> {
    return this.request(`/api/session/${sessionId}/state`);
  }

  submitRating(sessionId: string, payload: RatingPayload): Promise<RatingAck> {
    return this.request(`/api/session/${sessionId}/rating`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  submitArithmetic(sessionId: string, blockId: string, answers: number[]): Promise<SessionState> {
    return this.request(`/api/session/${sessionId}/arithmetic`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ block_id: blockId, answers }),
    });
  }

  clipAudioUrl(clipId: string): string {
    return `${this.baseUrl}/api/clip/${clipId}/audio`;
  }
}
