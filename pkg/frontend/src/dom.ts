/** DOM rendering: maps the view model onto the static page skeleton. */

import type { SessionController } from "./controller.js";
import { SCALE_ANCHORS, type RatingDimension, type UiSessionView } from "./view.js";

const DIMENSIONS: RatingDimension[] = ["valence", "arousal", "liking"];

export class AudioElementHandle {
  constructor(private readonly element: HTMLAudioElement) {}

  play(url: string): void {
    if (this.element.src !== url) this.element.src = url;
    void this.element.play()?.catch(() => {
      /* autoplay may be blocked until the operator interacts; polling retries */
    });
  }

  stop(): void {
    try {
      this.element.pause();
      this.element.currentTime = 0;
    } catch {
      /* jsdom lacks media playback */
    }
  }
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function buildRatingScales(controller: SessionController): void {
  const container = el<HTMLDivElement>("rating-scales");
  container.innerHTML = "";
  for (const dimension of DIMENSIONS) {
    const row = document.createElement("div");
    row.className = "scale-row";
    const [low, high] = SCALE_ANCHORS[dimension];
    const title = document.createElement("div");
    title.className = "scale-title";
    title.textContent = dimension;
    row.appendChild(title);

    const anchors = document.createElement("div");
    anchors.className = "scale-anchors";
    anchors.innerHTML = `<span>1 = ${low}</span><span>9 = ${high}</span>`;
    row.appendChild(anchors);

    const points = document.createElement("div");
    points.className = "scale-points";
    for (let value = 1; value <= 9; value += 1) {
      const label = document.createElement("label");
      const input = document.createElement("input");
      input.type = "radio";
      input.name = `scale-${dimension}`;
      input.value = String(value);
      input.addEventListener("change", () => controller.setRating(dimension, value));
      label.appendChild(input);
      label.appendChild(document.createTextNode(String(value)));
      points.appendChild(label);
    }
    row.appendChild(points);
    container.appendChild(row);
  }
}

export function renderArithmetic(view: UiSessionView, controller: SessionController): void {
  const panel = el<HTMLDivElement>("arithmetic-panel");
  if (!view.arithmetic) {
    panel.hidden = true;
    return;
  }
  if (panel.dataset["blockId"] !== view.arithmetic.block_id) {
    panel.dataset["blockId"] = view.arithmetic.block_id;
    const list = el<HTMLDivElement>("arithmetic-problems");
    list.innerHTML = "";
    for (const problem of view.arithmetic.problems) {
      const row = document.createElement("div");
      row.innerHTML = `<span>${problem.text}</span>`;
      const input = document.createElement("input");
      input.type = "number";
      input.id = `arith-${problem.id}`;
      row.appendChild(input);
      list.appendChild(row);
    }
    el<HTMLButtonElement>("arithmetic-submit").onclick = () => {
      const answers = view.arithmetic!.problems.map((p) => {
        const input = document.getElementById(`arith-${p.id}`) as HTMLInputElement;
        return Number(input.value || 0);
      });
      void controller.submitArithmetic(answers);
    };
  }
  panel.hidden = false;
}

export function render(view: UiSessionView, controller: SessionController): void {
  el("phase").textContent = view.phase;
  el("headline").textContent = view.headline;
  el("countdown").textContent = view.countdownSeconds === null ? "" : `${view.countdownSeconds}`;
  el("trial-label").textContent = view.trialLabel;
  el("progress").textContent = view.progressLabel;

  const banner = el<HTMLDivElement>("banner");
  const bannerText = view.reconnecting ? "connection lost; reconnecting…" : view.banner;
  banner.hidden = !bannerText;
  banner.textContent = bannerText ?? "";

  const form = el<HTMLDivElement>("rating-form");
  form.hidden = !view.showRatingForm;
  if (!view.showRatingForm) {
    for (const input of form.querySelectorAll<HTMLInputElement>("input[type=radio]")) {
      input.checked = false;
    }
  }
  el<HTMLButtonElement>("rating-submit").disabled = !view.submitEnabled;

  renderArithmetic(view, controller);
}
