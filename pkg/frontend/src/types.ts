// Payload shapes of the editing service REST API.

export interface WordSpan {
  word: string;
  phoneme_range: [number, number];
  frame_range: [number, number] | null;
}

export interface UtteranceSummary {
  id: string;
  speaker: string;
  frames: number;
}

export interface UtteranceMeta extends UtteranceSummary {
  hop_ms: number;
  phonemes: number[];
  vocab: string[];
  words: WordSpan[];
}

export interface ViewBundle {
  session_id: string;
  utterance_id: string;
  length: number;
  hop_ms: number;
  words: WordSpan[];
  transcript: string[];
  phonemes: number[];
  vocab: string[];
  heatmap: number[][];
  f0: number[];
  voicing: boolean[];
  history_length: number;
  mask_spans: [number, number][];
  attention?: number[][];
  attention_mass?: (number | null)[];
}

export interface EditWord {
  w: string;
  ph: number[];
}

export interface EditScript {
  op: "delete" | "replace" | "insert";
  index: number;
  words: EditWord[];
}

export interface EditRequest {
  script: EditScript;
  epsilon: number;
  word_level: boolean;
}

export interface EditResponse {
  session_id: string;
  length: number;
  iterations: number;
  spans: [number, number][][];
  provenance: number[];
  attention_mass: (number | null)[];
  history_length: number;
  words: WordSpan[];
}

export interface ServiceMeta {
  utterance_count: number;
  vocoder: boolean;
}
