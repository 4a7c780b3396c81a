/** Pure view-model: everything displayed derives from the most recent
 * server response plus local form state; the UI never fabricates phases
 * or deadlines. */

import type { ArithmeticState, SessionState } from "./api.js";

export type RatingDimension = "valence" | "arousal" | "liking";

export interface RatingFormState {
  valence: number | null;
  arousal: number | null;
  liking: number | null;
  locked: boolean;
}

export interface LocalUi {
  form: RatingFormState;
  banner: string | null;
  connectionLost: boolean;
  submitting: boolean;
}

export interface UiSessionView {
  phase: string;
  headline: string;
  countdownSeconds: number | null;
  trialLabel: string;
  progressLabel: string;
  showRatingForm: boolean;
  submitEnabled: boolean;
  arithmetic: ArithmeticState | null;
  audioAction: "play" | "stop";
  audioClipId: string | null;
  banner: string | null;
  reconnecting: boolean;
}

export const SCALE_ANCHORS: Record<RatingDimension, [string, string]> = {
  valence: ["painful", "pleasant"],
  arousal: ["calm", "excited"],
  liking: ["dislike", "like"],
};

const HEADLINES: Record<string, string> = {
  idle: "Waiting for the session to start",
  preparation: "Get ready: close your eyes and relax",
  playback: "Listen to the music",
  rating: "Rate the clip you just heard",
  rest: "Rest",
  arithmetic: "Quick arithmetic break",
  finished: "Session complete. Thank you!",
};

export function emptyForm(): RatingFormState {
  return { valence: null, arousal: null, liking: null, locked: false };
}

export function formComplete(form: RatingFormState): boolean {
  return form.valence !== null && form.arousal !== null && form.liking !== null;
}

export function deriveView(state: SessionState | null, local: LocalUi): UiSessionView {
  if (state === null) {
    return {
      phase: "disconnected",
      headline: "Connecting to the session service…",
      countdownSeconds: null,
      trialLabel: "",
      progressLabel: "",
      showRatingForm: false,
      submitEnabled: false,
      arithmetic: null,
      audioAction: "stop",
      audioClipId: null,
      banner: local.banner,
      reconnecting: local.connectionLost,
    };
  }
  const rating = state.phase === "rating";
  const trialNumber = (state.session - 1) * 20 + (state.block - 1) * 5 + state.trial;
  return {
    phase: state.phase,
    headline: HEADLINES[state.phase] ?? state.phase,
    countdownSeconds: state.remaining_ms === null || state.remaining_ms === undefined
      ? null
      : Math.ceil(state.remaining_ms / 1000),
    trialLabel: state.phase === "idle" || state.phase === "finished"
      ? ""
      : `Trial ${trialNumber} / ${state.total_trials}`,
    progressLabel: `${state.collected_ratings} / ${state.total_trials} ratings`,
    showRatingForm: rating,
    submitEnabled: rating && !local.form.locked && !local.submitting && formComplete(local.form),
    arithmetic: state.phase === "arithmetic" ? state.arithmetic ?? null : null,
    audioAction: state.phase === "playback" ? "play" : "stop",
    audioClipId: state.phase === "playback" ? state.clip_id ?? null : null,
    banner: local.banner,
    reconnecting: local.connectionLost,
  };
}
