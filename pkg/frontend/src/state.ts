// Editor state: the server's view bundle plus local selection/toggles.
// Everything the DOM shows is derived from (bundle, local state) by pure
// functions, so reloading the bundle reproduces the view exactly.

import type { EditScript, EditWord, ViewBundle } from "./types.js";

export interface Selection {
  kind: "word" | "boundary";
  index: number;
}

export interface OverlayToggles {
  maskSpans: boolean;
  f0: boolean;
  attention: boolean;
}

export interface DraftState {
  op: EditScript["op"] | null;
  index: number | null;
  wordsText: string; // "word:1,2,3; word2:4" textual phoneme entry
  epsilon: number;
  wordLevel: boolean;
}

export interface ViewState {
  sessionId: string | null;
  bundle: ViewBundle | null;
  selection: Selection | null;
  draft: DraftState;
  toggles: OverlayToggles;
  busy: boolean; // an edit is in flight; submit disabled
  error: string | null;
}

export function initialState(): ViewState {
  return {
    sessionId: null,
    bundle: null,
    selection: null,
    draft: { op: null, index: null, wordsText: "", epsilon: 5, wordLevel: false },
    toggles: { maskSpans: true, f0: true, attention: true },
    busy: false,
    error: null,
  };
}

export function selectWord(state: ViewState, index: number): ViewState {
  return {
    ...state,
    selection: { kind: "word", index },
    draft: { ...state.draft, op: null, index },
    error: null,
  };
}

export function selectBoundary(state: ViewState, index: number): ViewState {
  return {
    ...state,
    selection: { kind: "boundary", index },
    draft: { ...state.draft, op: "insert", index },
    error: null,
  };
}

export function armOperation(
  state: ViewState,
  op: EditScript["op"],
): ViewState {
  if (!state.selection) return { ...state, error: "select a word or boundary first" };
  const wantsBoundary = op === "insert";
  const isBoundary = state.selection.kind === "boundary";
  if (wantsBoundary !== isBoundary) {
    return {
      ...state,
      error: wantsBoundary
        ? "insert targets a boundary, not a word"
        : `${op} targets a word, not a boundary`,
    };
  }
  return { ...state, draft: { ...state.draft, op, index: state.selection.index } };
}

export function parseWordsText(text: string): EditWord[] {
  const words: EditWord[] = [];
  for (const chunk of text.split(";")) {
    const trimmed = chunk.trim();
    if (!trimmed) continue;
    const [w, phText] = trimmed.split(":");
    if (!w || phText === undefined) {
      throw new Error(`cannot parse ${JSON.stringify(trimmed)}: use word:1,2,3`);
    }
    const ph = phText
      .split(",")
      .map((tok) => tok.trim())
      .filter((tok) => tok.length > 0)
      .map((tok) => {
        const n = Number(tok);
        if (!Number.isInteger(n) || n < 0) {
          throw new Error(`bad phoneme id ${JSON.stringify(tok)}`);
        }
        return n;
      });
    if (ph.length === 0) throw new Error(`word ${JSON.stringify(w)} has no phonemes`);
    words.push({ w: w.trim(), ph });
  }
  return words;
}

/** Validate the draft against the wire schema; returns a script or throws. */
export function buildScript(state: ViewState): EditScript {
  const { draft, bundle } = state;
  if (!bundle) throw new Error("no utterance loaded");
  if (!draft.op) throw new Error("no operation armed");
  if (draft.index === null) throw new Error("no target selected");
  const wordCount = bundle.words.length;
  if (draft.op === "insert") {
    if (draft.index < 0 || draft.index > wordCount) {
      throw new Error(`insert boundary ${draft.index} out of range`);
    }
  } else if (draft.index < 0 || draft.index >= wordCount) {
    throw new Error(`${draft.op} index ${draft.index} out of range`);
  }
  const words = parseWordsText(draft.wordsText);
  if (draft.op === "delete" && words.length > 0) {
    throw new Error("delete takes no new words");
  }
  if (draft.op !== "delete" && words.length === 0) {
    throw new Error(`${draft.op} needs at least one word as word:ids`);
  }
  const vocabSize = bundle.vocab.length;
  for (const { w, ph } of words) {
    for (const p of ph) {
      if (p >= vocabSize) {
        throw new Error(`word ${JSON.stringify(w)}: phoneme id ${p} outside vocabulary`);
      }
    }
  }
  return { op: draft.op, index: draft.index, words };
}

export function applyBundle(state: ViewState, bundle: ViewBundle): ViewState {
  return {
    ...state,
    bundle,
    selection: null,
    draft: { ...state.draft, op: null, index: null, wordsText: "" },
    error: null,
  };
}

/** Row-stochasticity check used before showing the attention overlay. */
export function attentionIsRowStochastic(
  attention: number[][] | undefined,
  tol = 1e-5,
): boolean {
  if (!attention || attention.length === 0) return false;
  for (const row of attention) {
    let sum = 0;
    for (const v of row) {
      if (v < 0) return false;
      sum += v;
    }
    if (Math.abs(sum - 1) > tol) return false;
  }
  return true;
}
