"""Segmentation quality metrics: windowed error rates and alignment precision/recall.

The windowed error rate ``pk`` counts, over all position pairs ``(i, i+k)``,
how often reference and hypothesis disagree on whether the two positions fall
in the same segment.  The composite ``s_measure`` averages ``pk`` at three
window sizes taken from the reference segment lengths (their maximum, minimum,
and rounded mean).  Alignment-based precision/recall treats segmentation as
retrieval: a hypothesis segment is aligned to a reference segment when both of
its endpoints land strictly within a distance threshold of the reference
endpoints.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .corpus import GoldSegmentation, GroupedCorpus
from .errors import RangeError

__all__ = [
    "Segmentation",
    "AlignmentThresholds",
    "pk",
    "s_measure",
    "segments_from_changepoints",
    "align",
    "precision_recall",
    "TranscriptScores",
    "SegmentationReport",
    "evaluate_segmentation",
]


@dataclass(frozen=True)
class Segmentation:
    """A linear segmentation: total length plus strictly increasing changepoints.

    Changepoints are the positions where a new segment starts, so they lie in
    the open interval ``(0, length)``.  ``axis`` records the unit (token or
    sentence); two segmentations can only be compared on the same axis.
    """

    length: int
    changepoints: tuple[int, ...]
    axis: str = "token"

    def __post_init__(self) -> None:
        if self.length <= 0:
            raise RangeError("segmentation length must be positive")
        previous = 0
        for position in self.changepoints:
            if not previous < position < self.length:
                raise RangeError(
                    f"changepoint {position} outside (0, {self.length}) or not increasing"
                )
            previous = position

    @property
    def num_segments(self) -> int:
        return len(self.changepoints) + 1

    def segment_lengths(self) -> list[int]:
        bounds = [0, *self.changepoints, self.length]
        return [bounds[i + 1] - bounds[i] for i in range(len(bounds) - 1)]

    def segments(self) -> list[tuple[int, int]]:
        """Half-open (start, end) spans of every segment."""
        bounds = [0, *self.changepoints, self.length]
        return [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]

    @cached_property
    def _boundary_mask(self) -> int:
        # Bit j set <=> changepoint at position j+1.  Kept as a Python int so
        # windowed same-segment tests reduce to shifts and popcounts.
        mask = 0
        for position in self.changepoints:
            mask |= 1 << (position - 1)
        return mask


def _window_or(mask: int, k: int) -> int:
    # OR of bits i..i+k-1 collapsed onto bit i, by doubling.
    spread = mask
    width = 1
    while width < k:
        step = min(width, k - width)
        spread |= spread >> step
        width += step
    return spread


def pk(reference: Segmentation, hypothesis: Segmentation, k: int) -> float:
    """Windowed disagreement rate at window size ``k``.

    For every pair of positions ``(i, i+k)`` with both ends inside the
    sequence, the pair is a miss when exactly one of the two segmentations
    puts a boundary strictly between the positions.  Returns the miss
    fraction; 0.0 is perfect agreement.
    """
    if reference.length != hypothesis.length:
        raise RangeError("segmentations have different lengths")
    if reference.axis != hypothesis.axis:
        raise RangeError("segmentations are on different axes")
    n = reference.length
    if not 1 <= k < n:
        raise RangeError(f"window size {k} outside [1, {n - 1}]")
    pair_count = n - k
    window_ones = (1 << pair_count) - 1
    different_ref = _window_or(reference._boundary_mask, k) & window_ones
    different_hyp = _window_or(hypothesis._boundary_mask, k) & window_ones
    return (different_ref ^ different_hyp).bit_count() / pair_count


def s_measure(reference: Segmentation, hypothesis: Segmentation) -> float:
    """Mean of ``pk`` at the max, min, and rounded-mean reference segment length.

    Window sizes are clamped to the valid range ``[1, length - 1]``; repeated
    window sizes (for example when all reference segments have equal length)
    count once each in the three-term mean.
    """
    lengths = reference.segment_lengths()
    windows = [max(lengths), min(lengths), round(sum(lengths) / len(lengths))]
    windows = [min(max(1, w), reference.length - 1) for w in windows]
    return sum(pk(reference, hypothesis, w) for w in windows) / len(windows)


def segments_from_changepoints(changepoints: Sequence[int], length: int) -> list[tuple[int, int]]:
    """Half-open (start, end) spans from changepoints over ``[0, length)``."""
    return Segmentation(length, tuple(changepoints)).segments()


@dataclass(frozen=True)
class AlignmentThresholds:
    """Endpoint distance thresholds (token units) for the two levels."""

    level1: int = 10
    level2: int = 500


def align(
    reference_segments: Sequence[tuple[int, int]],
    hypothesis_segments: Sequence[tuple[int, int]],
    threshold: int,
) -> list[tuple[int, int]]:
    """All (hypothesis index, reference index) pairs with both endpoint
    distances strictly below the threshold."""
    pairs = []
    for h, (h_start, h_end) in enumerate(hypothesis_segments):
        for r, (r_start, r_end) in enumerate(reference_segments):
            if abs(h_start - r_start) < threshold and abs(h_end - r_end) < threshold:
                pairs.append((h, r))
    return pairs


def precision_recall(
    reference_segments: Sequence[tuple[int, int]],
    hypothesis_segments: Sequence[tuple[int, int]],
    threshold: int,
) -> tuple[float, float]:
    """Fraction of hypothesis segments aligned, fraction of reference segments aligned.

    An empty hypothesis scores precision 0 against a nonempty reference; a
    reference segment aligned by several hypothesis segments counts once in
    the recall numerator.
    """
    pairs = align(reference_segments, hypothesis_segments, threshold)
    if not hypothesis_segments:
        precision = 1.0 if not reference_segments else 0.0
    else:
        precision = len({h for h, _ in pairs}) / len(hypothesis_segments)
    if not reference_segments:
        recall = 1.0
    else:
        recall = len({r for _, r in pairs}) / len(reference_segments)
    return precision, recall


# ---------------------------------------------------------------------------
# report over a corpus


@dataclass(frozen=True)
class TranscriptScores:
    """All six metric columns for one transcript, plus the alignment pairs."""

    transcript_id: int
    pr1: float
    rc1: float
    s1: float
    pr2: float
    rc2: float
    s2: float
    alignment1: tuple[tuple[int, int], ...]
    alignment2: tuple[tuple[int, int], ...]

    def as_dict(self) -> dict:
        return {
            "id": self.transcript_id,
            "PR1": self.pr1, "RC1": self.rc1, "S1": self.s1,
            "PR2": self.pr2, "RC2": self.rc2, "S2": self.s2,
        }


@dataclass(frozen=True)
class SegmentationReport:
    """Per-transcript scores and their unweighted means."""

    per_transcript: tuple[TranscriptScores, ...]
    thresholds: AlignmentThresholds

    def mean(self, column: str) -> float:
        values = [getattr(scores, column) for scores in self.per_transcript]
        return float(np.mean(values)) if values else float("nan")

    def as_dict(self) -> dict:
        return {
            "thresholds": {"level1": self.thresholds.level1,
                           "level2": self.thresholds.level2},
            "transcripts": [s.as_dict() for s in self.per_transcript],
            "mean": {c.upper(): self.mean(c)
                     for c in ("pr1", "rc1", "s1", "pr2", "rc2", "s2")},
        }


def _level2_token_changepoints(
    sentence_changepoints: Sequence[int], sentence_token_start: np.ndarray
) -> tuple[int, ...]:
    return tuple(int(sentence_token_start[s]) for s in sentence_changepoints)


def evaluate_segmentation(
    corpus: GroupedCorpus,
    gold: GoldSegmentation,
    predicted: GoldSegmentation,
    thresholds: AlignmentThresholds = AlignmentThresholds(),
) -> SegmentationReport:
    """Score a predicted two-level segmentation against the reference.

    Both levels are scored on the token axis; sentence-level changepoints are
    mapped to the token index of the sentence they start.  Windowed error
    rates use the reference segment lengths of the matching level.
    """
    if not (corpus.num_transcripts == gold.num_transcripts == predicted.num_transcripts):
        raise RangeError("corpus, gold, and prediction have different transcript counts")
    rows = []
    for g, transcript in enumerate(corpus.transcripts):
        n = transcript.num_tokens
        starts = transcript.sentence_token_start()
        gold1 = Segmentation(n, tuple(gold.level1[g]))
        pred1 = Segmentation(n, tuple(predicted.level1[g]))
        gold2 = Segmentation(n, _level2_token_changepoints(gold.level2[g], starts))
        pred2 = Segmentation(n, _level2_token_changepoints(predicted.level2[g], starts))
        alignment1 = align(gold1.segments(), pred1.segments(), thresholds.level1)
        alignment2 = align(gold2.segments(), pred2.segments(), thresholds.level2)
        pr1, rc1 = precision_recall(gold1.segments(), pred1.segments(), thresholds.level1)
        pr2, rc2 = precision_recall(gold2.segments(), pred2.segments(), thresholds.level2)
        rows.append(TranscriptScores(
            transcript.id,
            pr1, rc1, s_measure(gold1, pred1),
            pr2, rc2, s_measure(gold2, pred2),
            tuple(alignment1), tuple(alignment2),
        ))
    return SegmentationReport(tuple(rows), thresholds)
