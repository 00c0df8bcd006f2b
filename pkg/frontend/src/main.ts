/** Browser entry point: bind the session state machine to the DOM. */

import { ApiClient } from "./api.js";
import { AnnotatorSession, KEY_BINDINGS, SessionState } from "./app.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function annotatorId(): string {
  const params = new URLSearchParams(window.location.search);
  const fromUrl = params.get("annotator");
  if (fromUrl) {
    window.localStorage.setItem("annotator_id", fromUrl);
    return fromUrl;
  }
  const stored = window.localStorage.getItem("annotator_id");
  if (stored) {
    return stored;
  }
  const entered = window.prompt("Annotator id:") || `anon-${Date.now()}`;
  window.localStorage.setItem("annotator_id", entered);
  return entered;
}

function render(state: SessionState): void {
  const panes = el<HTMLDivElement>("panes");
  const status = el<HTMLDivElement>("status");
  const banner = el<HTMLDivElement>("banner");
  const progress = el<HTMLDivElement>("progress");
  const left = el<HTMLImageElement>("left-image");
  const right = el<HTMLImageElement>("right-image");

  banner.hidden = state.phase !== "error";
  banner.textContent = state.errorMessage ?? "";
  progress.textContent = state.total > 0 ? `${state.judged} / ${state.total} judged` : "";

  switch (state.phase) {
    case "loading":
    case "submitting":
      status.textContent = "…";
      break;
    case "annotating":
      status.textContent = "Which image is blurrier?  ← left   → right   S skip";
      left.src = state.pair!.left_url!;
      right.src = state.pair!.right_url!;
      panes.hidden = false;
      break;
    case "done":
      panes.hidden = true;
      status.textContent = `All done. You judged ${state.judged} pairs. Thank you!`;
      break;
    case "error":
      status.textContent = "Paused.";
      break;
    default:
      status.textContent = "";
  }
}

const session = new AnnotatorSession(new ApiClient(), annotatorId());
session.subscribe(render);

window.addEventListener("keydown", (event) => {
  const choice = KEY_BINDINGS[event.key];
  if (choice !== undefined) {
    event.preventDefault();
    void session.choose(choice);
  } else if (event.key === "r" || event.key === "R") {
    void session.retry();
  }
});

el<HTMLButtonElement>("retry").addEventListener("click", () => void session.retry());

void session.start();
