// Bootstrap: load the utterance list, open a session for the picked one.

import { ApiClient } from "./api.js";
import { Editor, type EditorElements } from "./editor.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function boot(): Promise<void> {
  const api = new ApiClient("");
  const elements: EditorElements = {
    transcript: el("transcript"),
    heatmap: el<HTMLCanvasElement>("heatmap"),
    attention: el<HTMLCanvasElement>("attention"),
    history: el("history"),
    error: el("error"),
    submit: el<HTMLButtonElement>("submit"),
    undo: el<HTMLButtonElement>("undo"),
    opButtons: {
      delete: el<HTMLButtonElement>("op-delete"),
      replace: el<HTMLButtonElement>("op-replace"),
      insert: el<HTMLButtonElement>("op-insert"),
    },
    wordsInput: el<HTMLInputElement>("words"),
    epsilonInput: el<HTMLInputElement>("epsilon"),
    wordLevelInput: el<HTMLInputElement>("word-level"),
    playback: el<HTMLButtonElement>("playback"),
  };
  const editor = new Editor(api, elements);

  const picker = el<HTMLSelectElement>("utterance");
  const utts = await api.listUtterances();
  for (const u of utts) {
    const opt = document.createElement("option");
    opt.value = u.id;
    opt.textContent = `${u.id} (${u.speaker}, ${u.frames} frames)`;
    picker.appendChild(opt);
  }
  picker.addEventListener("change", () => void editor.load(picker.value));
  if (utts.length > 0) {
    picker.value = utts[0].id;
    await editor.load(utts[0].id);
  }

  elements.playback?.addEventListener("click", () => {
    if (editor.state.sessionId) {
      window.open(`/sessions/${editor.state.sessionId}/audio`, "_blank");
    }
  });
}

void boot();
