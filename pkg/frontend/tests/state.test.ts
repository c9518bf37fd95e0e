import { describe, expect, it } from "vitest";

import {
  applyBundle,
  armOperation,
  attentionIsRowStochastic,
  buildScript,
  initialState,
  parseWordsText,
  selectBoundary,
  selectWord,
} from "../src/state.js";
import type { ViewBundle } from "../src/types.js";

function bundle(overrides: Partial<ViewBundle> = {}): ViewBundle {
  return {
    session_id: "s1",
    utterance_id: "u0",
    length: 10,
    hop_ms: 10,
    words: [
      { word: "one", phoneme_range: [0, 2], frame_range: [0, 5] },
      { word: "two", phoneme_range: [2, 3], frame_range: [5, 10] },
    ],
    transcript: ["one", "two"],
    phonemes: [0, 1, 2],
    vocab: ["a", "b", "c", "d"],
    heatmap: [[0], [1]],
    f0: [100, 110],
    voicing: [true, true],
    history_length: 0,
    mask_spans: [],
    ...overrides,
  };
}

function loaded() {
  return applyBundle({ ...initialState(), sessionId: "s1" }, bundle());
}

describe("parseWordsText", () => {
  it("parses the word:ids; word:ids format", () => {
    expect(parseWordsText("hi:1,2; there:3")).toEqual([
      { w: "hi", ph: [1, 2] },
      { w: "there", ph: [3] },
    ]);
  });

  it("returns empty for blank input", () => {
    expect(parseWordsText("")).toEqual([]);
    expect(parseWordsText("  ;  ")).toEqual([]);
  });

  it("rejects malformed entries", () => {
    expect(() => parseWordsText("justaword")).toThrow(/word:1,2,3/);
    expect(() => parseWordsText("w:1,x")).toThrow(/bad phoneme id/);
    expect(() => parseWordsText("w:")).toThrow(/no phonemes/);
  });
});

describe("selection and arming", () => {
  it("selecting a word arms word-target ops", () => {
    let s = selectWord(loaded(), 1);
    expect(s.selection).toEqual({ kind: "word", index: 1 });
    s = armOperation(s, "delete");
    expect(s.draft.op).toBe("delete");
    expect(s.draft.index).toBe(1);
    expect(s.error).toBeNull();
  });

  it("selecting a boundary arms insert directly", () => {
    const s = selectBoundary(loaded(), 2);
    expect(s.draft.op).toBe("insert");
    expect(s.draft.index).toBe(2);
  });

  it("rejects mismatched target kinds", () => {
    let s = selectWord(loaded(), 0);
    s = armOperation(s, "insert");
    expect(s.error).toMatch(/boundary/);
    let b = selectBoundary(loaded(), 0);
    b = armOperation(b, "replace");
    expect(b.error).toMatch(/word/);
  });
});

describe("buildScript validation", () => {
  it("builds a delete script", () => {
    let s = selectWord(loaded(), 0);
    s = armOperation(s, "delete");
    expect(buildScript(s)).toEqual({ op: "delete", index: 0, words: [] });
  });

  it("builds a replace script from the words text", () => {
    let s = selectWord(loaded(), 1);
    s = armOperation(s, "replace");
    s = { ...s, draft: { ...s.draft, wordsText: "new:1,3" } };
    expect(buildScript(s)).toEqual({
      op: "replace",
      index: 1,
      words: [{ w: "new", ph: [1, 3] }],
    });
  });

  it("rejects drafts violating the schema", () => {
    let s = selectWord(loaded(), 0);
    s = armOperation(s, "delete");
    s = { ...s, draft: { ...s.draft, wordsText: "x:1" } };
    expect(() => buildScript(s)).toThrow(/delete takes no new words/);

    let r = selectWord(loaded(), 0);
    r = armOperation(r, "replace");
    expect(() => buildScript(r)).toThrow(/needs at least one word/);

    let i = selectBoundary(loaded(), 2);
    i = { ...i, draft: { ...i.draft, wordsText: "w:9" } };
    expect(() => buildScript(i)).toThrow(/outside vocabulary/);
  });

  it("rejects out-of-range targets", () => {
    const base = loaded();
    const s = {
      ...base,
      draft: { ...base.draft, op: "delete" as const, index: 5 },
    };
    expect(() => buildScript(s)).toThrow(/out of range/);
  });
});

describe("attention overlay guard", () => {
  it("accepts row-stochastic maps", () => {
    expect(
      attentionIsRowStochastic([
        [0.5, 0.5],
        [0.25, 0.75],
      ]),
    ).toBe(true);
  });

  it("rejects rows that do not sum to one or are negative", () => {
    expect(attentionIsRowStochastic([[0.5, 0.6]])).toBe(false);
    expect(attentionIsRowStochastic([[1.2, -0.2]])).toBe(false);
    expect(attentionIsRowStochastic(undefined)).toBe(false);
    expect(attentionIsRowStochastic([])).toBe(false);
  });
});

describe("applyBundle", () => {
  it("clears selection and draft so the view derives from the bundle", () => {
    let s = selectWord(loaded(), 1);
    s = armOperation(s, "replace");
    s = { ...s, draft: { ...s.draft, wordsText: "x:1" } };
    const next = applyBundle(s, bundle({ history_length: 2 }));
    expect(next.selection).toBeNull();
    expect(next.draft.op).toBeNull();
    expect(next.draft.wordsText).toBe("");
    expect(next.bundle?.history_length).toBe(2);
  });
});
