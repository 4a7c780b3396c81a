/** In-memory double of the session service implementing the same API
 * contract and phase timing, driven by an explicit test clock. */

import type { SessionState } from "../src/api.js";

export interface ScriptedTimings {
  preparationMs: number;
  playbackMs: number;
  restMs: number;
  ratingTimeoutMs: number;
}

const DEFAULT_TIMINGS: ScriptedTimings = {
  preparationMs: 5_000,
  playbackMs: 60_000,
  restMs: 15_000,
  ratingTimeoutMs: 30_000,
};

interface Rejection {
  status: number;
  error: string;
  detail: string;
}

export class ScriptedServer {
  now = 0;
  phase = "idle";
  trial = 1;
  collected = 0;
  deadline: number | null = null;
  ratedTrials = new Set<string>();
  failNextPolls = 0;
  readonly timings: ScriptedTimings;

  constructor(timings: Partial<ScriptedTimings> = {}) {
    this.timings = { ...DEFAULT_TIMINGS, ...timings };
  }

  start(): void {
    this.phase = "preparation";
    this.deadline = this.now + this.timings.preparationMs;
  }

  advanceTo(now: number): void {
    this.now = now;
    while (this.deadline !== null && this.now >= this.deadline) {
      const at = this.deadline;
      if (this.phase === "preparation") {
        this.phase = "playback";
        this.deadline = at + this.timings.playbackMs;
      } else if (this.phase === "playback") {
        this.phase = "rating";
        this.deadline = at + this.timings.ratingTimeoutMs;
      } else if (this.phase === "rating") {
        this.phase = "rest";
        this.deadline = at + this.timings.restMs;
      } else if (this.phase === "rest") {
        if (this.trial < 5) {
          this.trial += 1;
          this.phase = "preparation";
          this.deadline = at + this.timings.preparationMs;
        } else {
          this.phase = "arithmetic";
          this.deadline = null;
        }
      } else {
        break;
      }
    }
  }

  trialId(): string {
    return `s1b1t${this.trial}`;
  }

  state(): SessionState {
    const inTrial = ["preparation", "playback", "rating", "rest"].includes(this.phase);
    return {
      phase: this.phase,
      session: 1,
      block: 1,
      trial: this.trial,
      total_trials: 40,
      collected_ratings: this.collected,
      now_ms: this.now,
      phase_deadline_ms: this.deadline,
      remaining_ms: this.deadline === null ? null : Math.max(this.deadline - this.now, 0),
      trial_id: inTrial ? this.trialId() : null,
      clip_id: inTrial ? `clip_${this.trial}` : null,
      music_quadrant: inTrial ? "HAHV" : null,
      arithmetic:
        this.phase === "arithmetic"
          ? {
              block_id: "s1b1",
              problems: [
                { id: 0, text: "2 + 3 = ?" },
                { id: 1, text: "7 - 4 = ?" },
                { id: 2, text: "1 + 1 = ?" },
              ],
            }
          : null,
      awaiting_session: null,
    };
  }

  submitRating(trialId: string): Rejection | null {
    if (this.ratedTrials.has(trialId)) {
      return { status: 409, error: "ConflictError", detail: `trial ${trialId} already has a rating` };
    }
    if (this.phase !== "rating" || trialId !== this.trialId()) {
      return {
        status: 409,
        error: "OutOfWindowError",
        detail: `rating window is not open (phase ${this.phase})`,
      };
    }
    this.ratedTrials.add(trialId);
    this.collected += 1;
    this.phase = "rest";
    this.deadline = this.now + this.timings.restMs;
    return null;
  }

  /** fetch-compatible handler covering the endpoints the UI uses. */
  fetchFn = async (input: string, init?: RequestInit): Promise<Response> => {
    const url = new URL(input, "http://scripted");
    const path = url.pathname;
    this.advanceTo(this.now);
    if (path.endsWith("/state")) {
      if (this.failNextPolls > 0) {
        this.failNextPolls -= 1;
        throw new TypeError("network down");
      }
      return json(200, this.state());
    }
    if (path.endsWith("/rating")) {
      const payload = JSON.parse(String(init?.body ?? "{}"));
      const rejection = this.submitRating(payload.trial_id);
      if (rejection) return json(rejection.status, { error: rejection.error, detail: rejection.detail });
      return json(200, {
        trial_id: payload.trial_id,
        derived_label: "HAHV",
        label_source: "self_report",
        phase: this.phase,
      });
    }
    if (path.endsWith("/arithmetic")) {
      this.phase = "preparation";
      this.trial = 1;
      this.deadline = this.now + this.timings.preparationMs;
      return json(200, this.state());
    }
    if (path.endsWith("/start")) {
      this.start();
      return json(200, this.state());
    }
    return json(404, { error: "NotFoundError", detail: `no route ${path}` });
  };
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}
