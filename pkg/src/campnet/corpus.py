"""Corpus data model, on-disk format, and the synthetic corpus generator.

A corpus directory holds ``manifest.jsonl`` plus one binary feature file
per utterance under ``features/<id>.campf``. Feature files carry a fixed
16-byte header (magic ``CAMP``, version, frame count, feature dimension,
all little-endian) followed by row-major float32 frames and a trailing
CRC32 of header+payload so single-byte corruption is detectable.

The synthetic generator produces utterances whose BFCC content is a
fixed per-phoneme template plus a smooth per-utterance trend and a
per-speaker timbre offset, with a slowly varying pitch contour. It is
bit-reproducible from its spec, which makes training behaviour checkable
at desk scale.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import FormatError, IngestError, IoError
from .transcript import PhonemeSequence, WordSpan

FEATURE_DIM = 32
BFCC_DIM = 30
PITCH_IDX = 30
PITCH_CORR_IDX = 31
HOP_MS = 10
MAGIC = b"CAMP"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIII")

# Synthetic generator constants. Templates sit in roughly [-2, 2]; the
# id ladder on component 0 guarantees pairwise template separation.
_TEMPLATE_LADDER = 0.75
_TREND_MAX_AMPLITUDE = 0.4  # 20% of the ~2.0 template scale
_VOICED_FRACTION = 0.75


@dataclass
class FeatureSequence:
    """A T x 32 matrix of acoustic frames at a 10 ms hop.

    Columns 0..29 are BFCCs, column 30 the encoded pitch parameter and
    column 31 the pitch correlation (voicing) in [0, 1] for corpus data.
    """

    values: np.ndarray
    hop_ms: int = HOP_MS

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float32)
        if arr.ndim != 2:
            raise FormatError(f"feature matrix must be 2-D, got shape {arr.shape}")
        if arr.shape[1] != FEATURE_DIM:
            raise FormatError(
                f"feature dimension must be {FEATURE_DIM}, got {arr.shape[1]}"
            )
        if arr.shape[0] < 1:
            raise FormatError("feature sequence must contain at least one frame")
        if not np.all(np.isfinite(arr)):
            raise FormatError("feature sequence contains non-finite values")
        self.values = arr

    def __len__(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureSequence):
            return NotImplemented
        return self.hop_ms == other.hop_ms and np.array_equal(
            self.values, other.values
        )

    @property
    def bfcc(self) -> np.ndarray:
        return self.values[:, :BFCC_DIM]

    @property
    def pitch(self) -> np.ndarray:
        return self.values[:, PITCH_IDX]

    @property
    def pitch_corr(self) -> np.ndarray:
        return self.values[:, PITCH_CORR_IDX]

    def copy(self) -> "FeatureSequence":
        return FeatureSequence(self.values.copy(), self.hop_ms)


@dataclass
class Utterance:
    """One corpus item: transcript, alignment spans, and features."""

    id: str
    speaker: str
    phonemes: PhonemeSequence
    words: list[WordSpan]
    features: FeatureSequence

    def __eq__(self, other) -> bool:
        if not isinstance(other, Utterance):
            return NotImplemented
        return (
            self.id == other.id
            and self.speaker == other.speaker
            and self.phonemes == other.phonemes
            and list(self.words) == list(other.words)
            and self.features == other.features
        )

    def validate(self) -> None:
        """Check alignment invariants; corpus ingestion calls this."""
        T = len(self.features)
        covered = np.zeros(len(self.phonemes), dtype=bool)
        cursor = 0
        for w in self.words:
            a, b = w.phoneme_range
            if b > len(self.phonemes):
                raise FormatError(f"{self.id}: word {w.word!r} phoneme range beyond transcript")
            if covered[a:b].any():
                raise FormatError(f"{self.id}: phoneme covered by two words")
            covered[a:b] = True
            if w.frame_range is None:
                raise FormatError(f"{self.id}: corpus word {w.word!r} lacks a frame range")
            n, m = w.frame_range
            if not (0 <= n < m <= T):
                raise FormatError(f"{self.id}: frame range {w.frame_range} outside [0,{T})")
            if n != cursor:
                raise FormatError(
                    f"{self.id}: word frame ranges must tile a prefix of [0,{T}) "
                    f"(gap/overlap at frame {n}, expected {cursor})"
                )
            cursor = m
        pc = self.features.pitch_corr
        if pc.min() < 0.0 or pc.max() > 1.0:
            raise FormatError(f"{self.id}: pitch correlation outside [0,1]")


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    """Parameters of the deterministic synthetic corpus generator."""

    vocab_size: int
    utterance_count: int
    phonemes_per_utt: tuple[int, int]
    frames_per_phoneme: tuple[int, int]
    seed: int
    speakers: int = 1

    def __post_init__(self) -> None:
        if self.vocab_size < 2:
            raise FormatError("vocab_size must be at least 2")
        if self.utterance_count < 0:
            raise FormatError("utterance_count must be non-negative")
        for name, (lo, hi) in (
            ("phonemes_per_utt", self.phonemes_per_utt),
            ("frames_per_phoneme", self.frames_per_phoneme),
        ):
            if lo < 1 or hi < lo:
                raise FormatError(f"{name} range [{lo},{hi}] is empty or non-positive")
        if self.speakers < 1:
            raise FormatError("speakers must be at least 1")


# ---------------------------------------------------------------------------
# Binary feature files


def features_to_bytes(values: np.ndarray) -> bytes:
    """Encode a feature matrix in the .campf binary layout."""
    arr = np.ascontiguousarray(np.asarray(values, dtype="<f4"))
    if arr.ndim != 2:
        raise FormatError(f"feature matrix must be 2-D, got shape {arr.shape}")
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, arr.shape[0], arr.shape[1])
    payload = arr.tobytes(order="C")
    crc = struct.pack("<I", zlib.crc32(header + payload) & 0xFFFFFFFF)
    return header + payload + crc


def write_features(path: Path, values: np.ndarray) -> None:
    """Write a feature matrix in the .campf binary format."""
    blob = features_to_bytes(values)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(blob)
    except OSError as exc:
        raise IoError(f"cannot write feature file {path}: {exc}") from exc


def read_features(path: Path, expect_dim: Optional[int] = FEATURE_DIM) -> np.ndarray:
    """Read a .campf file, verifying header, length, and checksum."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except FileNotFoundError as exc:
        raise IngestError(f"missing feature file {path}") from exc
    except OSError as exc:
        raise IngestError(f"cannot read feature file {path}: {exc}") from exc
    if len(blob) < _HEADER.size + 4:
        raise IngestError(f"feature file {path} truncated ({len(blob)} bytes)")
    magic, version, rows, cols = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"feature file {path} has bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"feature file {path} has unsupported version {version}")
    if expect_dim is not None and cols != expect_dim:
        raise FormatError(
            f"feature file {path} has dimension {cols}, expected {expect_dim}"
        )
    need = _HEADER.size + rows * cols * 4 + 4
    if len(blob) != need:
        raise IngestError(
            f"feature file {path} has {len(blob)} bytes, expected {need}"
        )
    (crc_stored,) = struct.unpack_from("<I", blob, need - 4)
    if zlib.crc32(blob[: need - 4]) & 0xFFFFFFFF != crc_stored:
        raise FormatError(f"feature file {path} failed its checksum")
    arr = np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=_HEADER.size)
    return arr.reshape(rows, cols).copy()


# ---------------------------------------------------------------------------
# Corpus directories


def _word_to_json(w: WordSpan) -> dict:
    return {
        "word": w.word,
        "phoneme_range": list(w.phoneme_range),
        "frame_range": list(w.frame_range) if w.frame_range else None,
    }


def _word_from_json(obj: dict) -> WordSpan:
    fr = obj.get("frame_range")
    return WordSpan(
        word=obj["word"],
        phoneme_range=tuple(obj["phoneme_range"]),
        frame_range=tuple(fr) if fr is not None else None,
    )


def save_corpus(utts: Sequence[Utterance], path: Path) -> None:
    """Write a corpus directory; loading it back reproduces ``utts``.

    Utterances are written sorted by id (the load order), so round-trips
    are exact. The first manifest line is a corpus header carrying the
    phoneme inventory and hop size.
    """
    path = Path(path)
    ordered = sorted(utts, key=lambda u: u.id)
    ids = [u.id for u in ordered]
    if len(set(ids)) != len(ids):
        raise FormatError("duplicate utterance ids in corpus")
    vocab: tuple[str, ...] = ordered[0].phonemes.vocab if ordered else ()
    for u in ordered:
        if u.phonemes.vocab != vocab:
            raise FormatError(f"{u.id}: phoneme inventory differs within corpus")
        u.validate()
    try:
        path.mkdir(parents=True, exist_ok=True)
        with open(path / "manifest.jsonl", "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"vocab": list(vocab), "hop_ms": HOP_MS}) + "\n")
            for u in ordered:
                fh.write(
                    json.dumps(
                        {
                            "id": u.id,
                            "speaker": u.speaker,
                            "phonemes": list(u.phonemes.ids),
                            "words": [_word_to_json(w) for w in u.words],
                        }
                    )
                    + "\n"
                )
    except OSError as exc:
        raise IoError(f"cannot write corpus to {path}: {exc}") from exc
    for u in ordered:
        write_features(path / "features" / f"{u.id}.campf", u.features.values)


def load_corpus(path: Path) -> list[Utterance]:
    """Load a corpus directory, validating every utterance invariant."""
    path = Path(path)
    manifest = path / "manifest.jsonl"
    if not manifest.exists():
        if path.is_dir() and not any(path.iterdir()):
            return []
        raise IngestError(f"no manifest.jsonl under {path}")
    try:
        lines = manifest.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IngestError(f"cannot read {manifest}: {exc}") from exc
    if not lines:
        return []
    try:
        header = json.loads(lines[0])
        vocab = tuple(header["vocab"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"bad corpus header in {manifest}: {exc}") from exc

    utts: list[Utterance] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            utt_id = obj["id"]
            speaker = obj["speaker"]
            phonemes = PhonemeSequence(tuple(obj["phonemes"]), vocab)
            words = [_word_from_json(w) for w in obj["words"]]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise FormatError(f"{manifest}:{lineno}: bad utterance record: {exc}") from exc
        values = read_features(path / "features" / f"{utt_id}.campf")
        try:
            features = FeatureSequence(values)
        except FormatError as exc:
            raise FormatError(f"{utt_id}: {exc}") from exc
        utt = Utterance(utt_id, speaker, phonemes, words, features)
        utt.validate()
        utts.append(utt)
    utts.sort(key=lambda u: u.id)
    return utts


# ---------------------------------------------------------------------------
# Synthetic corpus generator


def _corpus_rng(spec: SyntheticCorpusSpec) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(0,)))


def _utterance_rng(spec: SyntheticCorpusSpec, index: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(spec.seed, spawn_key=(1, index))
    )


def _corpus_level(
    spec: SyntheticCorpusSpec,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Templates, per-id voicing flags, and per-speaker realization params.

    A speaker is a per-component multiplicative gain on the spectral
    envelope plus an additive timbre offset and a pitch base. The gain
    makes an unseen speaker genuinely off-distribution: it can only be
    inferred indirectly from how context phonemes are realized, which is
    what gives speaker adaptation something to learn.
    """
    rng = _corpus_rng(spec)
    V = spec.vocab_size
    templates = rng.uniform(-1.5, 1.5, size=(V, BFCC_DIM))
    templates[:, 0] = (np.arange(V) - (V - 1) / 2.0) * _TEMPLATE_LADDER
    voiced = rng.uniform(size=V) < _VOICED_FRACTION
    voiced[0] = True
    pitch_base = rng.uniform(110.0, 190.0, size=spec.speakers)
    # speaker 0 is the identity speaker: single-speaker corpora are
    # exactly template + trend, which keeps reconstruction well-posed
    timbre = rng.normal(0.0, 0.35, size=(spec.speakers, BFCC_DIM))
    timbre[0] = 0.0
    gain = rng.uniform(0.75, 1.3, size=(spec.speakers, BFCC_DIM))
    gain[0] = 1.0
    return templates, voiced, pitch_base, timbre, gain


def phoneme_templates(spec: SyntheticCorpusSpec) -> np.ndarray:
    """The fixed (vocab_size, 30) BFCC template per phoneme id.

    Component 0 carries an id ladder with 0.75 spacing, so any two
    distinct ids differ by more than 0.5 in at least one component.
    """
    return _corpus_level(spec)[0]


def _smooth_trend(rng: np.random.Generator, T: int) -> np.ndarray:
    """Random cubic over [0,1], rescaled to a drawn amplitude <= 0.4."""
    coeffs = rng.uniform(-1.0, 1.0, size=4)
    amp = rng.uniform(0.1, _TREND_MAX_AMPLITUDE)
    t = np.linspace(0.0, 1.0, T)
    tr = np.polyval(coeffs, t)
    peak = np.max(np.abs(tr))
    if peak < 1e-9:
        return np.zeros(T)
    return tr / peak * amp


def generate_synthetic(spec: SyntheticCorpusSpec) -> list[Utterance]:
    """Generate a deterministic synthetic corpus from ``spec``.

    Same spec (including seed) always yields a bit-identical corpus.
    """
    templates, voiced, pitch_base, timbre, gain = _corpus_level(spec)
    vocab = tuple(f"ph{i}" for i in range(spec.vocab_size))

    plo, phi = spec.phonemes_per_utt
    flo, fhi = spec.frames_per_phoneme
    utts: list[Utterance] = []
    for i in range(spec.utterance_count):
        rng = _utterance_rng(spec, i)
        spk = i % spec.speakers
        M = int(rng.integers(plo, phi + 1))
        ids = rng.integers(0, spec.vocab_size, size=M)
        durations = rng.integers(flo, fhi + 1, size=M)
        T = int(durations.sum())

        trend = _smooth_trend(rng, T)
        cycles = rng.uniform(0.5, 1.5)
        phase = rng.uniform(0.0, 1.0)
        t01 = np.linspace(0.0, 1.0, T)
        f0 = pitch_base[spk] + 30.0 * np.sin(2.0 * np.pi * (cycles * t01 + phase))

        values = np.zeros((T, FEATURE_DIM))
        cursor = 0
        word_spans: list[WordSpan] = []
        word_start_ph = 0
        word_start_fr = 0
        word_idx = 0
        next_word_len = int(rng.integers(1, 4))
        for j, (pid, dur) in enumerate(zip(ids, durations)):
            frames = slice(cursor, cursor + int(dur))
            values[frames, :BFCC_DIM] = (
                templates[pid] + trend[frames, None]
            ) * gain[spk] + timbre[spk]
            values[frames, PITCH_IDX] = f0[frames]
            if voiced[pid]:
                values[frames, PITCH_CORR_IDX] = rng.uniform(0.55, 0.95, size=int(dur))
            else:
                values[frames, PITCH_CORR_IDX] = rng.uniform(0.02, 0.25, size=int(dur))
            cursor += int(dur)
            if j - word_start_ph + 1 >= next_word_len or j == M - 1:
                word_spans.append(
                    WordSpan(
                        word=f"w{word_idx}",
                        phoneme_range=(word_start_ph, j + 1),
                        frame_range=(word_start_fr, cursor),
                    )
                )
                word_idx += 1
                word_start_ph = j + 1
                word_start_fr = cursor
                next_word_len = int(rng.integers(1, 4))

        utt = Utterance(
            id=f"utt{i:04d}",
            speaker=f"spk{spk}",
            phonemes=PhonemeSequence(tuple(int(p) for p in ids), vocab),
            words=word_spans,
            features=FeatureSequence(values.astype(np.float32)),
        )
        utt.validate()
        utts.append(utt)
    return utts
