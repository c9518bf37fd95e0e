"""Turns edit scripts into mask plans and runs inference over them.

A plan splices the original feature timeline (removing frames for
deletes, inserting mask-token frames sized by the duration model for
replaces/inserts), widens the masked region by a small expansion so the
model re-predicts the adjacent pronunciation, and records per-frame
provenance. Executing a plan runs one model pass and pastes the fine
prediction back over the masked spans, leaving every other frame
bit-identical to its source.

Multi-word insertions/replacements can run word-level autoregressively:
one word is realized per full model pass, each pass editing the previous
pass's output, which keeps the masked region short regardless of how
much text is added.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .corpus import FeatureSequence, Utterance
from .errors import EditError
from .masking import MaskedFeatures, MaskSpan, apply_mask, paste_region
from .model import CampNet, DecoderOutputs, extract_alignment, forward
from .transcript import EditScript, PhonemeSequence, WordSpan, apply_edit_to_text

DEFAULT_EXPANSION = 5  # 50 ms: roughly one phone boundary each side
MAX_SINGLE_SPAN_FRAMES = 150  # 1.5 s at the 10 ms hop
MASKED = -1  # provenance tag for re-predicted frames


class MaskLengthWarning(UserWarning):
    """A single-step mask span exceeds the reliable 1.5 s limit."""


@dataclass(frozen=True)
class DurationModel:
    """Frame-count means fitted from corpus alignments.

    Word-level alignments attribute a word's frames uniformly to its
    phonemes. All means are clamped to at least one frame.
    """

    phoneme_means: dict[int, float]
    global_mean: float
    pause_mean: float


def fit_duration_model(corpus: Sequence[Utterance]) -> DurationModel:
    """Estimate per-phoneme durations and the inter-word pause mean."""
    if not corpus:
        raise EditError("cannot fit a duration model on an empty corpus")
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    total_frames = 0
    total_phonemes = 0
    pause_frames: list[int] = []
    for utt in corpus:
        prev_end: Optional[int] = None
        for w in utt.words:
            if w.frame_range is None:
                continue
            n, m = w.frame_range
            a, b = w.phoneme_range
            per = (m - n) / (b - a)
            for pid in utt.phonemes.ids[a:b]:
                sums[pid] = sums.get(pid, 0.0) + per
                counts[pid] = counts.get(pid, 0) + 1
            total_frames += m - n
            total_phonemes += b - a
            if prev_end is not None:
                pause_frames.append(n - prev_end)
            prev_end = m
    if total_phonemes == 0:
        raise EditError("corpus has no aligned words to fit durations from")
    means = {pid: max(1.0, sums[pid] / counts[pid]) for pid in sums}
    global_mean = max(1.0, total_frames / total_phonemes)
    pause = max(1.0, float(np.mean(pause_frames))) if pause_frames else 1.0
    return DurationModel(means, global_mean, pause)


def duration_predict(dm: DurationModel, phonemes: Sequence[int]) -> int:
    """Predicted frame count of a word: rounded sum of per-id means."""
    if len(phonemes) == 0:
        raise EditError("cannot predict the duration of an empty word")
    total = sum(dm.phoneme_means.get(int(p), dm.global_mean) for p in phonemes)
    return max(1, int(np.floor(total + 0.5)))


@dataclass
class EditPlan:
    """A fully resolved single-step edit ready for the model.

    ``provenance[t]`` is the original frame index feeding output frame
    ``t``, or -1 for frames the model will predict. ``words`` carries
    frame ranges on the edited timeline.
    """

    kind: str
    utterance_id: str
    speaker: str
    x_prime: PhonemeSequence
    masked: MaskedFeatures
    spans: tuple[MaskSpan, ...]
    expansion: int
    provenance: np.ndarray
    words: list[WordSpan]
    edited_phoneme_range: Optional[tuple[int, int]] = None


@dataclass
class EditResult:
    """Output of an edit: features plus per-iteration bookkeeping."""

    features: FeatureSequence
    plans: list[EditPlan]
    provenance: np.ndarray
    attention_mass: list[Optional[float]] = field(default_factory=list)
    last_outputs: Optional[DecoderOutputs] = None

    @property
    def iterations(self) -> int:
        return len(self.plans)


def _frame_range_of(utt: Utterance, word_index: int) -> tuple[int, int]:
    fr = utt.words[word_index].frame_range
    if fr is None:
        raise EditError(
            f"word {utt.words[word_index].word!r} has no frame alignment"
        )
    return fr


def _boundary_frame(utt: Utterance, boundary: int) -> int:
    if boundary < len(utt.words):
        return _frame_range_of(utt, boundary)[0]
    if utt.words:
        return _frame_range_of(utt, len(utt.words) - 1)[1]
    return 0


def _shift_words(
    words: Sequence[WordSpan],
    edited_lo: int,
    new_spans: Sequence[tuple[int, int]],
    shift: int,
) -> list[WordSpan]:
    """Resolve frame ranges on the edited timeline.

    Words before ``edited_lo`` keep their ranges, the edited words get
    ``new_spans``, and later words shift by ``shift`` frames.
    """
    out: list[WordSpan] = []
    for i, w in enumerate(words):
        if i < edited_lo:
            out.append(w)
        elif i < edited_lo + len(new_spans):
            out.append(WordSpan(w.word, w.phoneme_range, new_spans[i - edited_lo]))
        else:
            if w.frame_range is None:
                raise EditError(f"word {w.word!r} has no frame alignment")
            n, m = w.frame_range
            out.append(WordSpan(w.word, w.phoneme_range, (n + shift, m + shift)))
    return out


def _finish_plan(
    utt: Utterance,
    script: EditScript,
    x_prime: PhonemeSequence,
    words: list[WordSpan],
    values: np.ndarray,
    provenance: np.ndarray,
    mask_lo: int,
    mask_hi: int,
    expansion: int,
    edited_phonemes: Optional[tuple[int, int]],
) -> EditPlan:
    T_new = values.shape[0]
    lo = max(0, mask_lo)
    hi = min(T_new, mask_hi)
    spans: tuple[MaskSpan, ...] = (MaskSpan(lo, hi),) if hi > lo else ()
    masked = apply_mask(FeatureSequence(values.astype(np.float32)), spans)
    prov = provenance.copy()
    for s in spans:
        prov[s.start : s.end] = MASKED
    return EditPlan(
        kind=script.op,
        utterance_id=utt.id,
        speaker=utt.speaker,
        x_prime=x_prime,
        masked=masked,
        spans=spans,
        expansion=expansion,
        provenance=prov,
        words=words,
        edited_phoneme_range=edited_phonemes,
    )


def _new_word_phoneme_range(
    script: EditScript, words: list[WordSpan]
) -> tuple[int, int]:
    lo = words[script.index].phoneme_range[0]
    hi = words[script.index + len(script.words) - 1].phoneme_range[1]
    return lo, hi


def plan_delete(
    utt: Utterance,
    script: EditScript,
    expansion: int = DEFAULT_EXPANSION,
    dm: Optional[DurationModel] = None,
    use_duration_model: bool = False,
) -> EditPlan:
    """Remove a word's frames and re-mask a small range at the junction.

    With ``use_duration_model`` the junction re-mask is sized from the
    mean durations of the adjacent word-final and word-initial phonemes
    instead of the fixed expansion.
    """
    if script.op != "delete":
        raise EditError(f"plan_delete given a {script.op!r} script")
    x_prime, new_words = apply_edit_to_text(utt, script)
    n, m = _frame_range_of(utt, script.index)
    T = len(utt.features)
    if m - n >= T:
        raise EditError("cannot delete the entire utterance")
    values = np.concatenate([utt.features.values[:n], utt.features.values[m:]])
    provenance = np.concatenate([np.arange(n), np.arange(m, T)])
    words = _shift_words(new_words, script.index, [], -(m - n))

    if use_duration_model:
        if dm is None:
            raise EditError("duration-guided delete needs a duration model")
        eps_prev = 0
        if script.index > 0:
            a, b = utt.words[script.index - 1].phoneme_range
            last_id = utt.phonemes.ids[b - 1]
            eps_prev = duration_predict(dm, [last_id])
        eps_next = 0
        if script.index < len(utt.words) - 1:
            a, b = utt.words[script.index + 1].phoneme_range
            first_id = utt.phonemes.ids[a]
            eps_next = duration_predict(dm, [first_id])
        lo, hi = n - eps_prev, n + eps_next
    else:
        lo, hi = n - expansion, n + expansion
    return _finish_plan(
        utt, script, x_prime, words, values, provenance, lo, hi, expansion, None
    )


def plan_replace(
    utt: Utterance,
    script: EditScript,
    expansion: int = DEFAULT_EXPANSION,
    dm: Optional[DurationModel] = None,
) -> EditPlan:
    """Swap a word's frames for duration-model-sized mask frames."""
    if script.op != "replace":
        raise EditError(f"plan_replace given a {script.op!r} script")
    if dm is None:
        raise EditError("replace planning needs a duration model")
    x_prime, new_words = apply_edit_to_text(utt, script)
    n, m = _frame_range_of(utt, script.index)
    T = len(utt.features)
    durations = [duration_predict(dm, ph) for _, ph in script.words]
    d = sum(durations)
    values = np.concatenate(
        [
            utt.features.values[:n],
            np.zeros((d, utt.features.values.shape[1]), dtype=np.float32),
            utt.features.values[m:],
        ]
    )
    provenance = np.concatenate(
        [np.arange(n), np.full(d, MASKED, dtype=np.int64), np.arange(m, T)]
    )
    spans_new = []
    cursor = n
    for dur in durations:
        spans_new.append((cursor, cursor + dur))
        cursor += dur
    words = _shift_words(new_words, script.index, spans_new, d - (m - n))
    return _finish_plan(
        utt,
        script,
        x_prime,
        words,
        values,
        provenance,
        n - expansion,
        n + d + expansion,
        expansion,
        _new_word_phoneme_range(script, words),
    )


def plan_insert(
    utt: Utterance,
    script: EditScript,
    expansion: int = DEFAULT_EXPANSION,
    dm: Optional[DurationModel] = None,
) -> EditPlan:
    """Splice duration-model-sized mask frames in at a word boundary."""
    if script.op != "insert":
        raise EditError(f"plan_insert given a {script.op!r} script")
    if dm is None:
        raise EditError("insert planning needs a duration model")
    x_prime, new_words = apply_edit_to_text(utt, script)
    b = _boundary_frame(utt, script.index)
    T = len(utt.features)
    durations = [duration_predict(dm, ph) for _, ph in script.words]
    d = sum(durations)
    values = np.concatenate(
        [
            utt.features.values[:b],
            np.zeros((d, utt.features.values.shape[1]), dtype=np.float32),
            utt.features.values[b:],
        ]
    )
    provenance = np.concatenate(
        [np.arange(b), np.full(d, MASKED, dtype=np.int64), np.arange(b, T)]
    )
    spans_new = []
    cursor = b
    for dur in durations:
        spans_new.append((cursor, cursor + dur))
        cursor += dur
    words = _shift_words(new_words, script.index, spans_new, d)
    return _finish_plan(
        utt,
        script,
        x_prime,
        words,
        values,
        provenance,
        b - expansion,
        b + d + expansion,
        expansion,
        _new_word_phoneme_range(script, words),
    )


def plan_edit(
    utt: Utterance,
    script: EditScript,
    expansion: int = DEFAULT_EXPANSION,
    dm: Optional[DurationModel] = None,
    use_duration_model_delete: bool = False,
) -> EditPlan:
    if script.op == "delete":
        return plan_delete(utt, script, expansion, dm, use_duration_model_delete)
    if script.op == "replace":
        return plan_replace(utt, script, expansion, dm)
    return plan_insert(utt, script, expansion, dm)


# ---------------------------------------------------------------------------
# Inference


def _warn_long_spans(plan: EditPlan) -> None:
    for s in plan.spans:
        if len(s) > MAX_SINGLE_SPAN_FRAMES:
            warnings.warn(
                f"mask span [{s.start},{s.end}) is {len(s)} frames "
                f"(> {MAX_SINGLE_SPAN_FRAMES} = 1.5 s); single-step quality "
                f"degrades on long spans, prefer word-level editing",
                MaskLengthWarning,
                stacklevel=3,
            )


def _execute_plan(
    model: CampNet, plan: EditPlan
) -> tuple[FeatureSequence, Optional[DecoderOutputs], Optional[float]]:
    _warn_long_spans(plan)
    base = FeatureSequence(plan.masked.values.copy())
    if not plan.spans:
        return base, None, None
    outputs = forward(plan.x_prime, plan.masked, model)
    predicted = FeatureSequence(outputs.fine.astype(np.float32))
    result = base
    for s in plan.spans:
        result = paste_region(result, predicted, s)
    mass = None
    if plan.edited_phoneme_range is not None:
        mass = extract_alignment(outputs, plan.spans[0], plan.edited_phoneme_range)
    return result, outputs, mass


def edit_one_step(model: CampNet, plan: EditPlan) -> FeatureSequence:
    """Run one model pass and paste the prediction over the mask spans."""
    return _execute_plan(model, plan)[0]


def _single_word_script(script: EditScript, i: int) -> EditScript:
    word = script.words[i]
    if script.op == "replace" and i == 0:
        return EditScript("replace", script.index, (word,))
    return EditScript("insert", script.index + i, (word,))


def run_edit(
    model: CampNet,
    utt: Utterance,
    script: EditScript,
    expansion: int = DEFAULT_EXPANSION,
    dm: Optional[DurationModel] = None,
    word_level: bool = False,
    use_duration_model_delete: bool = False,
) -> EditResult:
    """Execute a script, either in one step or word-by-word.

    Word-level execution realizes one word per full model pass; pass
    ``i`` edits the output of pass ``i - 1``. Deletes are always a
    single step.
    """
    if not word_level or script.op == "delete" or len(script.words) <= 1:
        plan = plan_edit(utt, script, expansion, dm, use_duration_model_delete)
        feats, outputs, mass = _execute_plan(model, plan)
        return EditResult(
            features=feats,
            plans=[plan],
            provenance=plan.provenance.copy(),
            attention_mass=[mass],
            last_outputs=outputs,
        )

    state = utt
    provenance = np.arange(len(utt.features))
    plans: list[EditPlan] = []
    masses: list[Optional[float]] = []
    outputs: Optional[DecoderOutputs] = None
    for i in range(len(script.words)):
        sub = _single_word_script(script, i)
        plan = plan_edit(state, sub, expansion, dm)
        feats, outputs, mass = _execute_plan(model, plan)
        provenance = np.where(
            plan.provenance >= 0, provenance[plan.provenance], MASKED
        )
        plans.append(plan)
        masses.append(mass)
        state = Utterance(
            id=utt.id,
            speaker=utt.speaker,
            phonemes=plan.x_prime,
            words=plan.words,
            features=feats,
        )
    return EditResult(
        features=state.features,
        plans=plans,
        provenance=provenance,
        attention_mass=masses,
        last_outputs=outputs,
    )


def edit_word_level_ar(
    model: CampNet,
    utt: Utterance,
    script: EditScript,
    expansion: int = DEFAULT_EXPANSION,
    dm: Optional[DurationModel] = None,
) -> FeatureSequence:
    """Word-level autoregressive editing; one iteration per new word."""
    if not script.words:
        raise EditError("word-level editing needs at least one new word")
    return run_edit(
        model, utt, script, expansion=expansion, dm=dm, word_level=True
    ).features


def result_to_json(result: EditResult) -> dict:
    """Sidecar record: spans, provenance, and per-iteration details."""
    return {
        "utterance_id": result.plans[0].utterance_id if result.plans else None,
        "iterations": result.iterations,
        "spans": [
            [[s.start, s.end] for s in plan.spans] for plan in result.plans
        ],
        "provenance": [int(v) for v in result.provenance],
        "attention_mass": [
            None if m is None else float(m) for m in result.attention_mass
        ],
        "final_length": len(result.features),
    }
