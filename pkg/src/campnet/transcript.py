"""Phoneme/text representation and transcript edit scripts.

An utterance's transcript is a phoneme id sequence plus word spans that
tie contiguous phoneme ranges to frame ranges of the acoustic features.
Edit scripts describe delete/replace/insert operations on the word list;
applying one yields the edited phoneme sequence and an updated word list
whose frame ranges in the edited region are left unresolved (the editing
module assigns them from the duration model).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional

from .errors import EditError, FormatError

if TYPE_CHECKING:  # pragma: no cover - import cycle guard
    from .corpus import Utterance

EDIT_OPS = ("delete", "replace", "insert")


@dataclass(frozen=True)
class PhonemeSequence:
    """Ordered phoneme ids over a corpus-defined inventory."""

    ids: tuple[int, ...]
    vocab: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        object.__setattr__(self, "vocab", tuple(str(s) for s in self.vocab))
        if len(self.ids) == 0:
            raise FormatError("phoneme sequence must be nonempty")
        if not all(0 <= i < len(self.vocab) for i in self.ids):
            raise FormatError(
                f"phoneme id out of range for vocab of size {len(self.vocab)}"
            )

    def __len__(self) -> int:
        return len(self.ids)

    def symbols(self) -> list[str]:
        return [self.vocab[i] for i in self.ids]


@dataclass(frozen=True)
class WordSpan:
    """One transcript word: its phoneme range and (optional) frame range.

    ``frame_range`` is ``None`` for words whose audio has not been
    realized yet (newly inserted/replaced words before planning).
    """

    word: str
    phoneme_range: tuple[int, int]
    frame_range: Optional[tuple[int, int]] = None

    def __post_init__(self) -> None:
        a, b = self.phoneme_range
        object.__setattr__(self, "phoneme_range", (int(a), int(b)))
        if not 0 <= a < b:
            raise FormatError(f"bad phoneme range {self.phoneme_range!r}")
        if self.frame_range is not None:
            n, m = self.frame_range
            object.__setattr__(self, "frame_range", (int(n), int(m)))
            if not 0 <= n < m:
                raise FormatError(f"bad frame range {self.frame_range!r}")

    @property
    def phoneme_count(self) -> int:
        return self.phoneme_range[1] - self.phoneme_range[0]


@dataclass(frozen=True)
class EditScript:
    """A transcript edit: delete/replace a word, or insert at a boundary.

    ``index`` is a word index for delete/replace and a boundary index in
    ``[0, word_count]`` for insert. ``words`` holds the incoming
    ``(word, phoneme ids)`` pairs; multi-word scripts are consumed one
    word at a time by word-level autoregressive editing.
    """

    op: str
    index: int
    words: tuple[tuple[str, tuple[int, ...]], ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.op not in EDIT_OPS:
            raise EditError(f"unknown edit op {self.op!r}")
        object.__setattr__(
            self,
            "words",
            tuple((str(w), tuple(int(p) for p in ph)) for w, ph in self.words),
        )
        if self.op == "delete" and self.words:
            raise EditError("delete scripts carry no new words")
        if self.op in ("replace", "insert") and not self.words:
            raise EditError(f"{self.op} scripts need at least one new word")
        for w, ph in self.words:
            if len(ph) == 0:
                raise EditError(f"new word {w!r} has no phonemes")

    @staticmethod
    def from_json(text_or_obj) -> "EditScript":
        """Parse the wire schema {"op", "index", "words": [{"w", "ph"}]}."""
        if isinstance(text_or_obj, (str, bytes)):
            try:
                obj = json.loads(text_or_obj)
            except json.JSONDecodeError as exc:
                raise FormatError(f"malformed edit script JSON: {exc}") from exc
        else:
            obj = text_or_obj
        if not isinstance(obj, dict):
            raise FormatError("edit script must be a JSON object")
        try:
            op = obj["op"]
            index = int(obj["index"])
            words = tuple(
                (entry["w"], tuple(int(p) for p in entry["ph"]))
                for entry in obj.get("words", [])
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"edit script missing/invalid field: {exc}") from exc
        return EditScript(op=op, index=index, words=words)

    def to_json(self) -> dict:
        return {
            "op": self.op,
            "index": self.index,
            "words": [{"w": w, "ph": list(ph)} for w, ph in self.words],
        }

    def inserted_phoneme_count(self) -> int:
        return sum(len(ph) for _, ph in self.words)


def _check_script_against(script: EditScript, word_count: int) -> None:
    if script.op in ("delete", "replace"):
        if not 0 <= script.index < word_count:
            raise EditError(
                f"{script.op} index {script.index} out of range for "
                f"{word_count} words"
            )
    else:
        if not 0 <= script.index <= word_count:
            raise EditError(
                f"insert boundary {script.index} out of range for "
                f"{word_count} words"
            )


def apply_edit_to_text(
    utt: "Utterance", script: EditScript
) -> tuple[PhonemeSequence, list[WordSpan]]:
    """Apply a script to the transcript, producing the edited phonemes.

    Returns the edited phoneme sequence and the updated word list.
    Phoneme ranges are recomputed for every word; frame ranges of
    edited/new words are ``None`` and frame ranges of untouched words
    still refer to the original feature sequence. Inputs are never
    mutated.
    """
    words = list(utt.words)
    _check_script_against(script, len(words))
    ids = list(utt.phonemes.ids)

    if script.op == "insert":
        if script.index < len(words):
            splice_at = words[script.index].phoneme_range[0]
        elif words:
            splice_at = words[-1].phoneme_range[1]
        else:
            splice_at = len(ids)
        removed = (splice_at, splice_at)
        keep_before, keep_after = words[: script.index], words[script.index :]
    else:
        target = words[script.index]
        removed = target.phoneme_range
        keep_before, keep_after = words[: script.index], words[script.index + 1 :]

    new_ids = [ph for _, phs in script.words for ph in phs]
    edited_ids = ids[: removed[0]] + new_ids + ids[removed[1] :]
    if not edited_ids:
        raise EditError("edit would leave an empty transcript")

    out: list[WordSpan] = []
    cursor = 0
    for w in keep_before:
        out.append(WordSpan(w.word, (cursor, cursor + w.phoneme_count), w.frame_range))
        cursor += w.phoneme_count
    for w, phs in script.words:
        out.append(WordSpan(w, (cursor, cursor + len(phs)), None))
        cursor += len(phs)
    for w in keep_after:
        out.append(WordSpan(w.word, (cursor, cursor + w.phoneme_count), w.frame_range))
        cursor += w.phoneme_count

    return PhonemeSequence(tuple(edited_ids), utt.phonemes.vocab), out
