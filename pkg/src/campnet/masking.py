"""Mask-span sampling, mask application, and region paste-back.

The mask token is the all-zeros feature vector: masked frames carry no
content, only position. The model's prenet adds a learned embedding at
masked positions so genuinely-zero frames and masked frames stay
distinguishable inside the network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import FEATURE_DIM, FeatureSequence
from .errors import MaskError

MASK_TOKEN = np.zeros(FEATURE_DIM, dtype=np.float32)


@dataclass(frozen=True)
class MaskSpan:
    """Half-open frame interval [start, end) to be masked."""

    start: int
    end: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "start", int(self.start))
        object.__setattr__(self, "end", int(self.end))
        if not 0 <= self.start < self.end:
            raise MaskError(f"invalid mask span [{self.start},{self.end})")

    def __len__(self) -> int:
        return self.end - self.start


@dataclass
class MaskedFeatures:
    """A feature matrix with mask spans replaced by the mask token."""

    values: np.ndarray
    spans: tuple[MaskSpan, ...]
    mask_flag: np.ndarray

    def __len__(self) -> int:
        return self.values.shape[0]


def mask_length(T: int, ratio: float) -> int:
    """Span length for a given ratio: max(1, round(ratio*T)), half-up."""
    if not 0.0 < ratio < 1.0:
        raise MaskError(f"mask ratio must lie in (0,1), got {ratio}")
    if T < 1:
        raise MaskError(f"sequence length must be >= 1, got {T}")
    return max(1, int(math.floor(ratio * T + 0.5)))


def sample_mask_span(T: int, ratio: float, rng: np.random.Generator) -> MaskSpan:
    """Draw one span of length max(1, round(ratio*T)), start uniform."""
    length = mask_length(T, ratio)
    if length > T:
        raise MaskError(f"mask length {length} exceeds sequence length {T}")
    start = int(rng.integers(0, T - length + 1))
    return MaskSpan(start, start + length)


def _check_spans(spans: Sequence[MaskSpan], T: int) -> None:
    ordered = sorted(spans, key=lambda s: s.start)
    prev_end = -1
    for s in ordered:
        if s.end > T:
            raise MaskError(f"span [{s.start},{s.end}) exceeds length {T}")
        if s.start < prev_end:
            raise MaskError("mask spans overlap")
        prev_end = s.end


def apply_mask(y: FeatureSequence, spans: Sequence[MaskSpan]) -> MaskedFeatures:
    """Replace the frames of each span with the mask token."""
    T = len(y)
    _check_spans(spans, T)
    values = y.values.copy()
    flag = np.zeros(T, dtype=bool)
    for s in spans:
        values[s.start : s.end] = MASK_TOKEN
        flag[s.start : s.end] = True
    return MaskedFeatures(values=values, spans=tuple(spans), mask_flag=flag)


def paste_region(
    original: FeatureSequence, predicted: FeatureSequence, span: MaskSpan
) -> FeatureSequence:
    """Copy ``predicted`` over ``original`` inside ``span`` only."""
    if len(predicted) != len(original):
        raise MaskError(
            f"length mismatch: original {len(original)}, predicted {len(predicted)}"
        )
    if span.end > len(original):
        raise MaskError(f"span [{span.start},{span.end}) exceeds length {len(original)}")
    out = original.values.copy()
    out[span.start : span.end] = predicted.values[span.start : span.end]
    return FeatureSequence(out, original.hop_ms)
