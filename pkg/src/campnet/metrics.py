"""DTW alignment and the four objective metrics over edited speech.

All metrics are computed along an alignment path between the reference
and the edited feature sequences. When no path is given, equal-length
inputs are paired frame-by-frame; ``mcd`` can also align internally via
DTW on the full 32-dimensional features (Euclidean cost).

Voicing is decided by thresholding the pitch-correlation channel at
0.3; the synthetic corpus stores F0 in Hz directly in the pitch channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .corpus import FeatureSequence, Utterance
from .errors import MetricError
from .masking import MaskSpan, paste_region

VOICING_THRESHOLD = 0.3
MCD_ORDER = 28
_MCD_CONST = 10.0 / math.log(10.0)


@dataclass(frozen=True)
class DtwPath:
    """Monotone alignment between two sequences of lengths P and Q."""

    pairs: tuple[tuple[int, int], ...]
    total_cost: float

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class MetricsReport:
    mcd_db: float
    f0_rmse: float
    vuv_error_pct: float
    f0_corr: float

    def __post_init__(self) -> None:
        if self.mcd_db < 0 or self.f0_rmse < 0:
            raise MetricError("mcd and f0_rmse must be non-negative")
        if not 0.0 <= self.vuv_error_pct <= 100.0:
            raise MetricError("vuv error must lie in [0,100]")
        if not -1.0 <= self.f0_corr <= 1.0:
            raise MetricError("f0 correlation must lie in [-1,1]")


def _as_matrix(seq) -> np.ndarray:
    if isinstance(seq, FeatureSequence):
        return np.asarray(seq.values, dtype=np.float64)
    arr = np.asarray(seq, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    return arr


def dtw(
    a,
    b,
    cost: Optional[Callable[[np.ndarray, np.ndarray], float]] = None,
) -> DtwPath:
    """Minimum-cost monotone alignment with steps {(1,0),(0,1),(1,1)}.

    Ties during backtracking prefer the diagonal step, then (1,0).
    ``cost`` defaults to the Euclidean distance between frames.
    """
    A, B = _as_matrix(a), _as_matrix(b)
    P, Q = A.shape[0], B.shape[0]
    if P == 0 or Q == 0:
        raise MetricError("dtw inputs must be nonempty")
    if cost is None:
        diff = A[:, None, :] - B[None, :, :]
        local = np.sqrt((diff * diff).sum(axis=2))
    else:
        local = np.empty((P, Q))
        for i in range(P):
            for j in range(Q):
                local[i, j] = float(cost(A[i], B[j]))

    acc = np.full((P, Q), np.inf)
    acc[0, 0] = local[0, 0]
    for j in range(1, Q):
        acc[0, j] = acc[0, j - 1] + local[0, j]
    for i in range(1, P):
        acc[i, 0] = acc[i - 1, 0] + local[i, 0]
        for j in range(1, Q):
            acc[i, j] = local[i, j] + min(
                acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1]
            )

    pairs = [(P - 1, Q - 1)]
    i, j = P - 1, Q - 1
    while (i, j) != (0, 0):
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            best = min(acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1])
            if acc[i - 1, j - 1] == best:
                i, j = i - 1, j - 1
            elif acc[i - 1, j] == best:
                i -= 1
            else:
                j -= 1
        pairs.append((i, j))
    pairs.reverse()
    return DtwPath(pairs=tuple(pairs), total_cost=float(acc[P - 1, Q - 1]))


def _resolve_path(
    path: Optional[DtwPath], len_ref: int, len_edit: int
) -> tuple[tuple[int, int], ...]:
    if path is not None:
        return path.pairs
    if len_ref != len_edit:
        raise MetricError(
            "sequences of different lengths need an explicit alignment path"
        )
    return tuple((i, i) for i in range(len_ref))


def frame_mcd(ref_frame: np.ndarray, edited_frame: np.ndarray) -> float:
    """MCD in dB of one aligned frame pair over the first 28 cepstra."""
    d = np.asarray(edited_frame, dtype=np.float64)[:MCD_ORDER] - np.asarray(
        ref_frame, dtype=np.float64
    )[:MCD_ORDER]
    return _MCD_CONST * math.sqrt(2.0 * float((d * d).sum()))


def mcd(
    ref: FeatureSequence,
    edited: FeatureSequence,
    path: Optional[DtwPath] = None,
) -> float:
    """Mean mel-cepstral distortion along the alignment path, in dB."""
    R, E = _as_matrix(ref), _as_matrix(edited)
    if R.shape[0] < 1 or E.shape[0] < 1:
        raise MetricError("mcd inputs must contain at least one frame")
    if path is None and R.shape[0] != E.shape[0]:
        path = dtw(ref, edited)
    pairs = _resolve_path(path, R.shape[0], E.shape[0])
    vals = [frame_mcd(R[i], E[j]) for i, j in pairs]
    return float(np.mean(vals))


def _voiced_arrays(
    f0, voiced, label: str, require_positive: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    f0 = np.asarray(f0, dtype=np.float64)
    if voiced is None:
        v = np.ones(f0.shape[0], dtype=bool)
    else:
        v = np.asarray(voiced, dtype=bool)
        if v.shape[0] != f0.shape[0]:
            raise MetricError(f"{label}: voicing flags do not match contour length")
    if require_positive and np.any(f0[v] <= 0):
        raise MetricError(f"{label}: voiced frame with non-positive F0")
    return f0, v


def f0_rmse(
    ref_f0,
    edited_f0,
    ref_voiced=None,
    edited_voiced=None,
    path: Optional[DtwPath] = None,
    reduction: str = "mean",
) -> float:
    """Log-F0 distance in cents over pairs voiced in both sequences.

    Per pair the distance is 1200*|log2(F_ref/F_edit)|; ``reduction``
    chooses the mean of those values (default) or their RMS.
    """
    fr, vr = _voiced_arrays(ref_f0, ref_voiced, "reference")
    fe, ve = _voiced_arrays(edited_f0, edited_voiced, "edited")
    pairs = _resolve_path(path, fr.shape[0], fe.shape[0])
    cents = [
        1200.0 * abs(math.log2(fr[i]) - math.log2(fe[j]))
        for i, j in pairs
        if vr[i] and ve[j]
    ]
    if not cents:
        raise MetricError("f0_rmse undefined: no co-voiced aligned pairs")
    if reduction == "mean":
        return float(np.mean(cents))
    if reduction == "rms":
        return float(math.sqrt(np.mean(np.square(cents))))
    raise MetricError(f"unknown reduction {reduction!r}")


def vuv_error(ref_voiced, edited_voiced, path: Optional[DtwPath] = None) -> float:
    """Percentage of aligned pairs whose voicing decisions disagree."""
    vr = np.asarray(ref_voiced, dtype=bool)
    ve = np.asarray(edited_voiced, dtype=bool)
    if vr.shape[0] == 0 or ve.shape[0] == 0:
        raise MetricError("vuv_error inputs must be nonempty")
    pairs = _resolve_path(path, vr.shape[0], ve.shape[0])
    mismatched = sum(1 for i, j in pairs if vr[i] != ve[j])
    return 100.0 * mismatched / len(pairs)


def f0_corr(
    ref_f0,
    edited_f0,
    ref_voiced=None,
    edited_voiced=None,
    path: Optional[DtwPath] = None,
) -> float:
    """Pearson correlation of aligned co-voiced F0 values, in [-1,1]."""
    fr, vr = _voiced_arrays(ref_f0, ref_voiced, "reference", require_positive=False)
    fe, ve = _voiced_arrays(edited_f0, edited_voiced, "edited", require_positive=False)
    pairs = _resolve_path(path, fr.shape[0], fe.shape[0])
    xs = np.array([fr[i] for i, j in pairs if vr[i] and ve[j]])
    ys = np.array([fe[j] for i, j in pairs if vr[i] and ve[j]])
    if xs.shape[0] < 2:
        raise MetricError("f0_corr needs at least two co-voiced aligned pairs")
    dx, dy = xs - xs.mean(), ys - ys.mean()
    denom = math.sqrt(float((dx * dx).sum())) * math.sqrt(float((dy * dy).sum()))
    if denom == 0.0:
        raise MetricError("f0_corr undefined for a constant contour")
    r = float((dx * dy).sum() / denom)
    return max(-1.0, min(1.0, r))


def voicing_flags(features: FeatureSequence) -> np.ndarray:
    """Voiced/unvoiced decision from the pitch-correlation channel."""
    return np.asarray(features.pitch_corr) > VOICING_THRESHOLD


def evaluate_edit(
    ref: Utterance, edited: FeatureSequence, span: MaskSpan
) -> MetricsReport:
    """All four metrics after pasting the edited span into the original.

    Pasting confines the comparison to the regenerated region: frames
    outside the span are taken from the reference bit-exactly, mirroring
    how edited audio is assembled.
    """
    pasted = paste_region(ref.features, edited, span)
    path = dtw(ref.features, pasted)
    ref_v = voicing_flags(ref.features)
    ed_v = voicing_flags(pasted)
    return MetricsReport(
        mcd_db=mcd(ref.features, pasted, path=path),
        f0_rmse=f0_rmse(
            ref.features.pitch, pasted.pitch, ref_v, ed_v, path=path
        ),
        vuv_error_pct=vuv_error(ref_v, ed_v, path=path),
        f0_corr=f0_corr(ref.features.pitch, pasted.pitch, ref_v, ed_v, path=path),
    )
