/** Bootstrap: connect to a session (creating one when asked) and run the
 * polling loop against the page. */

import { SessionApi } from "./api.js";
import { SessionController } from "./controller.js";
import { AudioElementHandle, buildRatingScales, render } from "./dom.js";

function param(name: string): string | null {
  return new URLSearchParams(window.location.search).get(name);
}

async function boot(): Promise<void> {
  const base = param("base") ?? "";
  const api = new SessionApi(base);

  let sessionId = param("session");
  if (!sessionId) {
    const participant = param("participant") ?? `P${Math.floor(Math.random() * 900 + 100)}`;
    const created = await api.createSession({ participant_id: participant, seed: Number(param("seed") ?? 0) });
    sessionId = created.session_id;
    window.history.replaceState(null, "", `?session=${sessionId}${base ? `&base=${base}` : ""}`);
  }

  const audio = new AudioElementHandle(document.getElementById("clip-audio") as HTMLAudioElement);
  const controller = new SessionController(api, sessionId, {
    onRender: (view) => render(view, controller),
    audio,
  });
  buildRatingScales(controller);

  (document.getElementById("rating-submit") as HTMLButtonElement).onclick = () => void controller.submitRating();
  (document.getElementById("start-button") as HTMLButtonElement).onclick = () => {
    void api.start(sessionId!).then(() => controller.poll());
  };

  controller.start();
}

void boot();
