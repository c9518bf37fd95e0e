// The editor controller: owns the state, talks to the service, and asks
// the renderer to rebuild the DOM after every change.

import { ApiClient, ApiError } from "./api.js";
import {
  applyBundle,
  armOperation,
  attentionIsRowStochastic,
  buildScript,
  initialState,
  selectBoundary,
  selectWord,
  type ViewState,
} from "./state.js";
import {
  renderAttention,
  renderHeatmap,
  renderHistory,
  renderTranscript,
} from "./render.js";

export interface EditorElements {
  transcript: HTMLElement;
  heatmap: HTMLCanvasElement;
  attention: HTMLCanvasElement;
  history: HTMLElement;
  error: HTMLElement;
  submit: HTMLButtonElement;
  undo: HTMLButtonElement;
  opButtons: Record<"delete" | "replace" | "insert", HTMLButtonElement>;
  wordsInput: HTMLInputElement;
  epsilonInput: HTMLInputElement;
  wordLevelInput: HTMLInputElement;
  playback?: HTMLButtonElement;
}

export class Editor {
  state: ViewState = initialState();

  constructor(
    private api: ApiClient,
    private el: EditorElements,
  ) {
    el.submit.addEventListener("click", () => void this.submit());
    el.undo.addEventListener("click", () => void this.undo());
    for (const op of ["delete", "replace", "insert"] as const) {
      el.opButtons[op].addEventListener("click", () => {
        this.state = armOperation(this.state, op);
        this.render();
      });
    }
  }

  async load(utteranceId: string): Promise<void> {
    try {
      const sid = await this.api.createSession(utteranceId);
      this.state = { ...this.state, sessionId: sid };
      await this.refresh();
      const meta = await this.api.meta();
      if (this.el.playback) this.el.playback.hidden = !meta.vocoder;
    } catch (err) {
      this.fail(err);
    }
  }

  async refresh(): Promise<void> {
    if (!this.state.sessionId) return;
    const bundle = await this.api.view(this.state.sessionId);
    this.state = applyBundle(this.state, bundle);
    this.render();
  }

  onWord(index: number): void {
    this.state = selectWord(this.state, index);
    this.render();
  }

  onBoundary(index: number): void {
    this.state = selectBoundary(this.state, index);
    this.render();
  }

  async submit(): Promise<void> {
    const sid = this.state.sessionId;
    if (this.state.busy || !sid) return;
    this.state = {
      ...this.state,
      draft: {
        ...this.state.draft,
        wordsText: this.el.wordsInput.value,
        epsilon: Number(this.el.epsilonInput.value) || 0,
        wordLevel: this.el.wordLevelInput.checked,
      },
    };
    let script;
    try {
      script = buildScript(this.state);
    } catch (err) {
      this.state = { ...this.state, error: (err as Error).message };
      this.render();
      return;
    }
    this.state = { ...this.state, busy: true, error: null };
    this.render();
    try {
      await this.api.edit(sid, {
        script,
        epsilon: this.state.draft.epsilon,
        word_level: this.state.draft.wordLevel,
      });
      this.state = { ...this.state, busy: false };
      await this.refresh();
    } catch (err) {
      this.state = { ...this.state, busy: false };
      this.fail(err);
    }
  }

  async undo(): Promise<void> {
    const sid = this.state.sessionId;
    if (this.state.busy || !sid) return;
    this.state = { ...this.state, busy: true };
    try {
      await this.api.undo(sid);
      this.state = { ...this.state, busy: false };
      await this.refresh();
    } catch (err) {
      this.state = { ...this.state, busy: false };
      this.fail(err);
    }
  }

  private fail(err: unknown): void {
    const message =
      err instanceof ApiError ? `${err.status}: ${err.detail}` : String(err);
    this.state = { ...this.state, error: message };
    this.render();
  }

  render(): void {
    const { bundle, selection, toggles, busy, error } = this.state;
    this.el.error.textContent = error ?? "";
    this.el.error.hidden = !error;
    this.el.submit.disabled = busy || !bundle;
    this.el.undo.disabled = busy || !bundle || bundle.history_length === 0;
    if (!bundle) return;
    renderTranscript(this.el.transcript, bundle, selection, {
      onWord: (i) => this.onWord(i),
      onBoundary: (i) => this.onBoundary(i),
    });
    renderHeatmap(this.el.heatmap, bundle, toggles, selection);
    // only show attention that is actually a distribution per frame
    const attentionOk = attentionIsRowStochastic(bundle.attention);
    renderAttention(this.el.attention, bundle, toggles.attention && attentionOk);
    renderHistory(this.el.history, bundle.history_length, bundle.attention_mass);
  }
}
