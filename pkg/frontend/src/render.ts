// DOM construction. Every function rebuilds its container from the
// current state, so the view is always a pure function of state.

import {
  attentionIntensities,
  f0Polyline,
  heatmapColors,
  spanToPixels,
} from "./heatmap.js";
import type { Selection, OverlayToggles } from "./state.js";
import type { ViewBundle } from "./types.js";

export interface TranscriptHandlers {
  onWord: (index: number) => void;
  onBoundary: (index: number) => void;
}

export function renderTranscript(
  container: HTMLElement,
  bundle: ViewBundle,
  selection: Selection | null,
  handlers: TranscriptHandlers,
): void {
  container.innerHTML = "";
  const addBoundary = (index: number) => {
    const b = document.createElement("button");
    b.className = "boundary";
    b.dataset.boundary = String(index);
    if (selection?.kind === "boundary" && selection.index === index) {
      b.classList.add("selected");
    }
    b.title = `insert at boundary ${index}`;
    b.textContent = "+";
    b.addEventListener("click", () => handlers.onBoundary(index));
    container.appendChild(b);
  };
  bundle.words.forEach((w, i) => {
    addBoundary(i);
    const chip = document.createElement("button");
    chip.className = "word";
    chip.dataset.word = String(i);
    if (selection?.kind === "word" && selection.index === i) {
      chip.classList.add("selected");
    }
    chip.textContent = w.word;
    if (w.frame_range) {
      chip.title = `frames ${w.frame_range[0]}..${w.frame_range[1]}`;
    }
    chip.addEventListener("click", () => handlers.onWord(i));
    container.appendChild(chip);
  });
  addBoundary(bundle.words.length);
}

export function renderHeatmap(
  canvas: HTMLCanvasElement,
  bundle: ViewBundle,
  toggles: OverlayToggles,
  selection: Selection | null,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return; // headless test environment
  const colors = heatmapColors(bundle.heatmap);
  const T = colors.length;
  if (T === 0) return;
  const bins = colors[0].length;
  const cw = canvas.width / T;
  const ch = canvas.height / bins;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  colors.forEach((row, t) => {
    row.forEach((c, k) => {
      ctx.fillStyle = `rgb(${c.r},${c.g},${c.b})`;
      // low cepstral indices at the bottom
      ctx.fillRect(t * cw, canvas.height - (k + 1) * ch, cw + 0.5, ch + 0.5);
    });
  });
  if (toggles.maskSpans) {
    ctx.fillStyle = "rgba(255,0,80,0.25)";
    for (const span of bundle.mask_spans) {
      const [x0, x1] = spanToPixels(span, bundle.length, canvas.width);
      ctx.fillRect(x0, 0, x1 - x0, canvas.height);
    }
  }
  if (selection?.kind === "word") {
    const fr = bundle.words[selection.index]?.frame_range;
    if (fr) {
      const [x0, x1] = spanToPixels(fr, bundle.length, canvas.width);
      ctx.strokeStyle = "rgba(0,255,120,0.9)";
      ctx.lineWidth = 2;
      ctx.strokeRect(x0, 1, x1 - x0, canvas.height - 2);
    }
  }
  if (toggles.f0) {
    const points = f0Polyline(bundle.f0, bundle.voicing, canvas.width, canvas.height);
    ctx.strokeStyle = "rgba(255,255,255,0.9)";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    let pen = false;
    for (const p of points) {
      if (!p.voiced) {
        pen = false;
        continue;
      }
      if (pen) ctx.lineTo(p.x, p.y);
      else ctx.moveTo(p.x, p.y);
      pen = true;
    }
    ctx.stroke();
  }
}

export function renderAttention(
  canvas: HTMLCanvasElement,
  bundle: ViewBundle,
  visible: boolean,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  if (!visible || !bundle.attention) return;
  const grid = attentionIntensities(bundle.attention);
  const T = grid.length;
  const M = grid[0]?.length ?? 0;
  if (T === 0 || M === 0) return;
  const cw = canvas.width / M;
  const ch = canvas.height / T;
  grid.forEach((row, t) => {
    row.forEach((v, m) => {
      const g = Math.round(255 * v);
      ctx.fillStyle = `rgb(${g},${g},${g})`;
      ctx.fillRect(m * cw, t * ch, cw + 0.5, ch + 0.5);
    });
  });
}

export function renderHistory(
  container: HTMLElement,
  historyLength: number,
  masses: (number | null)[] | undefined,
): void {
  container.innerHTML = "";
  const label = document.createElement("div");
  label.className = "history-count";
  label.textContent = `${historyLength} edit(s) applied`;
  container.appendChild(label);
  if (masses && masses.length > 0) {
    const list = document.createElement("ol");
    list.className = "iterations";
    masses.forEach((m, i) => {
      const item = document.createElement("li");
      item.textContent =
        m === null
          ? `step ${i + 1}: no attention mass (delete)`
          : `step ${i + 1}: attention mass on edited text ${m.toFixed(3)}`;
      list.appendChild(item);
    });
    container.appendChild(list);
  }
}
