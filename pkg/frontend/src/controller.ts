/** Polling loop and command dispatch.
 *
 * One rendering loop, at most one in-flight state poll and one in-flight
 * submission. Besides the steady >=2 Hz interval, each response schedules
 * one extra poll just past the server's phase deadline so phase flips
 * (and audio start/stop) land well inside 250 ms of the server clock.
 */

import { ApiError, type RatingPayload, type SessionApi, type SessionState } from "./api.js";
import { deriveView, emptyForm, type LocalUi, type RatingDimension, type UiSessionView } from "./view.js";

export interface AudioHandle {
  play(url: string): void;
  stop(): void;
}

export interface ControllerOptions {
  pollIntervalMs?: number;
  onRender: (view: UiSessionView, state: SessionState | null) => void;
  audio?: AudioHandle;
}

export class SessionController {
  private state: SessionState | null = null;
  private local: LocalUi = { form: emptyForm(), banner: null, connectionLost: false, submitting: false };
  private pollTimer: ReturnType<typeof setInterval> | null = null;
  private deadlineTimer: ReturnType<typeof setTimeout> | null = null;
  private pollInFlight = false;
  private playingClip: string | null = null;
  private lastTrialId: string | null = null;
  private readonly pollIntervalMs: number;

  constructor(
    private readonly api: SessionApi,
    private readonly sessionId: string,
    private readonly options: ControllerOptions,
  ) {
    this.pollIntervalMs = options.pollIntervalMs ?? 250;
  }

  start(): void {
    if (this.pollTimer !== null) return;
    this.pollTimer = setInterval(() => void this.poll(), this.pollIntervalMs);
    void this.poll();
  }

  stop(): void {
    if (this.pollTimer !== null) clearInterval(this.pollTimer);
    if (this.deadlineTimer !== null) clearTimeout(this.deadlineTimer);
    this.pollTimer = null;
    this.deadlineTimer = null;
  }

  currentState(): SessionState | null {
    return this.state;
  }

  async poll(): Promise<void> {
    if (this.pollInFlight) return;
    this.pollInFlight = true;
    try {
      const state = await this.api.getState(this.sessionId);
      this.applyState(state);
    } catch {
      // network failure: show the reconnect banner, keep the last view
      this.local = { ...this.local, connectionLost: true };
      this.render();
    } finally {
      this.pollInFlight = false;
    }
  }

  private applyState(state: SessionState): void {
    this.local = { ...this.local, connectionLost: false };
    const trialId = state.trial_id ?? null;
    if (trialId !== this.lastTrialId) {
      this.lastTrialId = trialId;
      this.local = { ...this.local, form: emptyForm(), banner: null };
    }
    this.state = state;
    this.scheduleDeadlinePoll(state);
    this.driveAudio(state);
    this.render();
  }

  private scheduleDeadlinePoll(state: SessionState): void {
    if (this.deadlineTimer !== null) clearTimeout(this.deadlineTimer);
    this.deadlineTimer = null;
    if (state.remaining_ms !== null && state.remaining_ms !== undefined) {
      this.deadlineTimer = setTimeout(() => void this.poll(), state.remaining_ms + 20);
    }
  }

  private driveAudio(state: SessionState): void {
    const audio = this.options.audio;
    if (!audio) return;
    if (state.phase === "playback" && state.clip_id) {
      if (this.playingClip !== state.clip_id) {
        this.playingClip = state.clip_id;
        audio.play(this.api.clipAudioUrl(state.clip_id));
      }
    } else if (this.playingClip !== null) {
      this.playingClip = null;
      audio.stop();
    }
  }

  setRating(dimension: RatingDimension, value: number): void {
    if (this.local.form.locked) return;
    this.local = { ...this.local, form: { ...this.local.form, [dimension]: value } };
    this.render();
  }

  async submitRating(): Promise<void> {
    const state = this.state;
    const form = this.local.form;
    if (!state || state.phase !== "rating" || !state.trial_id) return;
    if (this.local.submitting || form.locked) return;
    if (form.valence === null || form.arousal === null || form.liking === null) return;
    const payload: RatingPayload = {
      trial_id: state.trial_id,
      valence: form.valence,
      arousal: form.arousal,
      liking: form.liking,
    };
    this.local = { ...this.local, submitting: true };
    this.render();
    try {
      await this.api.submitRating(this.sessionId, payload);
      this.local = { ...this.local, submitting: false, form: { ...form, locked: true }, banner: null };
    } catch (error) {
      const banner = error instanceof ApiError ? error.detail : "submission failed; check the connection";
      this.local = { ...this.local, submitting: false, banner };
    }
    this.render();
    await this.poll();
  }

  async submitArithmetic(answers: number[]): Promise<void> {
    const state = this.state;
    if (!state || state.phase !== "arithmetic" || !state.arithmetic) return;
    if (this.local.submitting) return;
    this.local = { ...this.local, submitting: true };
    this.render();
    try {
      const next = await this.api.submitArithmetic(this.sessionId, state.arithmetic.block_id, answers);
      this.local = { ...this.local, submitting: false, banner: null };
      this.applyState(next);
      return;
    } catch (error) {
      const banner = error instanceof ApiError ? error.detail : "submission failed; check the connection";
      this.local = { ...this.local, submitting: false, banner };
    }
    this.render();
  }

  /** For tests and the banner-path: submit a rating regardless of the
   * locally known phase, surfacing any server rejection verbatim. */
  async forceSubmitRating(payload: RatingPayload): Promise<void> {
    try {
      await this.api.submitRating(this.sessionId, payload);
    } catch (error) {
      const banner = error instanceof ApiError ? error.detail : "submission failed; check the connection";
      this.local = { ...this.local, banner };
      this.render();
    }
  }

  view(): UiSessionView {
    return deriveView(this.state, this.local);
  }

  private render(): void {
    this.options.onRender(this.view(), this.state);
  }
}
