"""Three-level grouped corpora, latent segmentation state, and their file formats.

A corpus is a list of transcripts; a transcript is a list of sentences; a
sentence is a list of integer token ids below the vocabulary size.  Token
order within a transcript runs across sentence boundaries, so ``prev`` of the
first token of a sentence is the last token of the previous sentence, and
``prev`` of the first token of a transcript is undefined.

Latent state ties a topic to every token (``z1``), a category in ``1..K`` to
every sentence (``z2``), and per transcript the derived changepoints and
segment sizes.  ``z2``, changepoints, and sizes are deterministically related;
helpers convert between them.

File formats (all indices 0-based):

* corpus: JSON lines, one transcript per line ``{"id": int, "sentences":
  [[token ids]]}``, with a sidecar vocabulary file (same path, ``.vocab``
  suffix) holding one token string per line, line number = token id;
* gold / inferred segmentation: JSON lines ``{"id": int, "level1": [token
  index], "level2": [sentence index]}``;
* latent state: JSON lines ``{"id": int, "z1": [...], "z2": [...]}``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import FormatError, RangeError, ShapeError

__all__ = [
    "Transcript",
    "GroupedCorpus",
    "LatentState",
    "GoldSegmentation",
    "load_corpus",
    "save_corpus",
    "load_gold",
    "save_gold",
    "load_state",
    "save_state",
    "segments_from_state",
    "validate_state",
    "sizes_from_changepoints",
    "changepoints_from_sizes",
    "z2_from_changepoints",
    "changepoints_from_z2",
]


@dataclass(frozen=True)
class Transcript:
    """One transcript: ordered sentences of token ids."""

    id: int
    sentences: tuple[tuple[int, ...], ...]

    @property
    def num_sentences(self) -> int:
        return len(self.sentences)

    @property
    def num_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)

    def tokens(self) -> np.ndarray:
        """All token ids in transcript order."""
        if not self.sentences:
            return np.empty(0, dtype=np.int64)
        return np.concatenate([np.asarray(s, dtype=np.int64) for s in self.sentences])

    def sentence_of_token(self) -> np.ndarray:
        """Sentence index of each token, in token order."""
        return np.repeat(
            np.arange(self.num_sentences), [len(s) for s in self.sentences]
        )

    def sentence_token_start(self) -> np.ndarray:
        """Token index of the first token of each sentence."""
        lengths = np.asarray([len(s) for s in self.sentences], dtype=np.int64)
        starts = np.zeros(self.num_sentences, dtype=np.int64)
        np.cumsum(lengths[:-1], out=starts[1:])
        return starts


@dataclass(frozen=True)
class GroupedCorpus:
    """Immutable 3-level corpus: tokens within sentences within transcripts."""

    vocab_size: int
    transcripts: tuple[Transcript, ...]
    vocab: Optional[tuple[str, ...]] = None

    def __post_init__(self) -> None:
        if self.vocab_size <= 0:
            raise RangeError("vocab_size must be positive")
        if self.vocab is not None and len(self.vocab) != self.vocab_size:
            raise FormatError("vocabulary length does not match vocab_size")
        for transcript in self.transcripts:
            for sentence in transcript.sentences:
                for token in sentence:
                    if not 0 <= token < self.vocab_size:
                        raise RangeError(
                            f"token id {token} outside [0, {self.vocab_size}) "
                            f"in transcript {transcript.id}"
                        )

    @property
    def num_transcripts(self) -> int:
        return len(self.transcripts)

    @property
    def num_tokens(self) -> int:
        return sum(t.num_tokens for t in self.transcripts)


def make_corpus(
    sentences_per_transcript: Sequence[Sequence[Sequence[int]]],
    vocab_size: int,
    vocab: Optional[Sequence[str]] = None,
) -> GroupedCorpus:
    """Build a corpus from nested lists of token ids."""
    transcripts = tuple(
        Transcript(i, tuple(tuple(int(t) for t in sent) for sent in sents))
        for i, sents in enumerate(sentences_per_transcript)
    )
    return GroupedCorpus(
        vocab_size, transcripts, tuple(vocab) if vocab is not None else None
    )


@dataclass
class LatentState:
    """Per-token topics, per-sentence categories, and derived segmentation.

    ``z1[g]`` holds one topic id per token of transcript g, ``z2[g]`` one
    category in ``1..K`` per sentence, ``changepoints[g]`` the K-1 sentence
    indices starting segments 2..K, ``sizes[g]`` the K per-segment sentence
    counts, and ``blocked[g]`` the set of topics already entered in the
    transcript (a topic is blocked on first entry and may not restart).
    Single-writer: mutate only from one thread between reads.
    """

    z1: list[np.ndarray]
    z2: list[np.ndarray]
    changepoints: list[np.ndarray]
    sizes: list[np.ndarray]
    blocked: list[set[int]]
    seed: Optional[int] = None

    @property
    def num_transcripts(self) -> int:
        return len(self.z1)

    def copy(self) -> "LatentState":
        return LatentState(
            [a.copy() for a in self.z1],
            [a.copy() for a in self.z2],
            [a.copy() for a in self.changepoints],
            [a.copy() for a in self.sizes],
            [set(b) for b in self.blocked],
            self.seed,
        )


@dataclass(frozen=True)
class GoldSegmentation:
    """Reference changepoints: level-1 on token indices, level-2 on sentences."""

    level1: tuple[tuple[int, ...], ...]
    level2: tuple[tuple[int, ...], ...]
    labels: Optional[tuple[tuple[int, ...], ...]] = None

    @property
    def num_transcripts(self) -> int:
        return len(self.level1)


# ---------------------------------------------------------------------------
# z2 / changepoints / sizes conversions


def sizes_from_changepoints(changepoints: Sequence[int], num_sentences: int) -> np.ndarray:
    bounds = [0, *changepoints, num_sentences]
    sizes = np.diff(bounds)
    if np.any(sizes <= 0):
        raise ShapeError(f"changepoints {list(changepoints)} leave an empty segment")
    return sizes.astype(np.int64)


def changepoints_from_sizes(sizes: Sequence[int]) -> np.ndarray:
    return np.cumsum(np.asarray(sizes, dtype=np.int64))[:-1]


def z2_from_changepoints(changepoints: Sequence[int], num_sentences: int) -> np.ndarray:
    sizes = sizes_from_changepoints(changepoints, num_sentences)
    return np.repeat(np.arange(1, len(sizes) + 1), sizes)


def changepoints_from_z2(z2: np.ndarray) -> np.ndarray:
    z2 = np.asarray(z2)
    return np.flatnonzero(np.diff(z2) != 0) + 1


# ---------------------------------------------------------------------------
# state <-> segmentation


def segments_from_state(
    state: LatentState, corpus: GroupedCorpus
) -> tuple[list[list[int]], list[list[int]]]:
    """Changepoints implied by a latent state.

    Level-1 changepoints are token indices where the topic differs from the
    previous token's; level-2 changepoints are the state's sentence-level
    changepoints.
    """
    if state.num_transcripts != corpus.num_transcripts:
        raise ShapeError("state and corpus have different transcript counts")
    level1 = []
    level2 = []
    for g, transcript in enumerate(corpus.transcripts):
        z1 = np.asarray(state.z1[g])
        if len(z1) != transcript.num_tokens:
            raise ShapeError(f"z1 length mismatch in transcript {transcript.id}")
        level1.append((np.flatnonzero(np.diff(z1) != 0) + 1).tolist())
        level2.append([int(c) for c in state.changepoints[g]])
    return level1, level2


def validate_state(
    state: LatentState,
    corpus: GroupedCorpus,
    num_categories: int,
    topic_categories: Optional[dict[int, int]] = None,
    require_contiguous_topics: bool = True,
) -> list[str]:
    """Check every structural invariant of a latent state.

    Returns a list of human-readable violation descriptions (empty when the
    state is valid).  ``topic_categories`` maps topic id -> category; when
    given, every token's topic must carry the category of its sentence.
    ``require_contiguous_topics`` enforces the no-restart mask consequence
    (each topic forms a single contiguous token run per transcript); disable
    it for states produced by exchangeable samplers.
    """
    violations: list[str] = []
    if state.num_transcripts != corpus.num_transcripts:
        return ["state and corpus have different transcript counts"]
    for g, transcript in enumerate(corpus.transcripts):
        name = f"transcript {transcript.id}"
        z1 = np.asarray(state.z1[g])
        z2 = np.asarray(state.z2[g])
        if len(z1) != transcript.num_tokens:
            violations.append(f"{name}: z1 has {len(z1)} entries, corpus has "
                              f"{transcript.num_tokens} tokens")
            continue
        if len(z2) != transcript.num_sentences:
            violations.append(f"{name}: z2 has {len(z2)} entries, corpus has "
                              f"{transcript.num_sentences} sentences")
            continue
        if np.any(np.diff(z2) < 0):
            violations.append(f"{name}: z2 not nondecreasing")
        present = np.unique(z2)
        expected = np.arange(1, num_categories + 1)
        if len(present) != num_categories or np.any(present != expected):
            violations.append(
                f"{name}: z2 takes values {present.tolist()}, expected 1..{num_categories}"
            )
        else:
            sizes = np.bincount(z2, minlength=num_categories + 1)[1:]
            if not np.array_equal(np.asarray(state.sizes[g]), sizes):
                violations.append(f"{name}: sizes do not match z2 counts")
            cps = changepoints_from_z2(z2)
            if not np.array_equal(np.asarray(state.changepoints[g]), cps):
                violations.append(f"{name}: changepoints do not match z2")
        if require_contiguous_topics:
            seen_done: set[int] = set()
            current = None
            for position, topic in enumerate(z1):
                topic = int(topic)
                if topic == current:
                    continue
                if topic in seen_done:
                    violations.append(
                        f"{name}: topic {topic} non-contiguous (restarts at token {position})"
                    )
                    break
                if current is not None:
                    seen_done.add(current)
                current = topic
        used = set(int(t) for t in np.unique(z1))
        if not used <= set(state.blocked[g]):
            missing = sorted(used - set(state.blocked[g]))
            violations.append(f"{name}: topics {missing} used but not in blocked set")
        if topic_categories is not None and len(z2) > 0:
            sentence_of = transcript.sentence_of_token()
            for position, topic in enumerate(z1):
                category = topic_categories.get(int(topic))
                if category is not None and category != int(z2[sentence_of[position]]):
                    violations.append(
                        f"{name}: token {position} topic {int(topic)} has category "
                        f"{category} but sentence category {int(z2[sentence_of[position]])}"
                    )
                    break
    return violations


# ---------------------------------------------------------------------------
# file I/O


def _vocab_path(path: Path) -> Path:
    return path.with_suffix(".vocab")


def save_corpus(corpus: GroupedCorpus, path: str | os.PathLike) -> None:
    """Write a corpus as JSON lines plus its sidecar vocabulary file."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as handle:
        for transcript in corpus.transcripts:
            record = {
                "id": transcript.id,
                "sentences": [list(sentence) for sentence in transcript.sentences],
            }
            handle.write(json.dumps(record, sort_keys=True) + "\n")
    vocab = corpus.vocab or tuple(f"w{i}" for i in range(corpus.vocab_size))
    with open(_vocab_path(path), "w", encoding="utf-8") as handle:
        for word in vocab:
            handle.write(word + "\n")


def load_corpus(path: str | os.PathLike) -> GroupedCorpus:
    """Read a corpus written by :func:`save_corpus`.

    The vocabulary size comes from the sidecar file; token ids at or above it
    raise :class:`RangeError`, malformed records raise :class:`FormatError`.
    """
    path = Path(path)
    vocab_file = _vocab_path(path)
    if not vocab_file.exists():
        raise FormatError(f"missing sidecar vocabulary file {vocab_file}")
    vocab = tuple(
        line.rstrip("\n") for line in vocab_file.read_text(encoding="utf-8").splitlines()
    )
    if not vocab:
        raise FormatError(f"empty vocabulary file {vocab_file}")
    transcripts = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                transcript_id = int(record["id"])
                sentences = tuple(
                    tuple(int(token) for token in sentence)
                    for sentence in record["sentences"]
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise FormatError(f"{path}:{line_number}: bad corpus record: {exc}") from exc
            for sentence in sentences:
                for token in sentence:
                    if not 0 <= token < len(vocab):
                        raise RangeError(
                            f"{path}:{line_number}: token id {token} outside "
                            f"[0, {len(vocab)})"
                        )
            transcripts.append(Transcript(transcript_id, sentences))
    return GroupedCorpus(len(vocab), tuple(transcripts), vocab)


def save_gold(gold: GoldSegmentation, path: str | os.PathLike,
              ids: Optional[Sequence[int]] = None) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as handle:
        for g in range(gold.num_transcripts):
            record = {
                "id": int(ids[g]) if ids is not None else g,
                "level1": [int(i) for i in gold.level1[g]],
                "level2": [int(i) for i in gold.level2[g]],
            }
            if gold.labels is not None:
                record["labels"] = [int(c) for c in gold.labels[g]]
            handle.write(json.dumps(record, sort_keys=True) + "\n")


def load_gold(path: str | os.PathLike) -> GoldSegmentation:
    path = Path(path)
    records = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                entry = (
                    int(record["id"]),
                    tuple(int(i) for i in record["level1"]),
                    tuple(int(i) for i in record["level2"]),
                    tuple(int(c) for c in record["labels"]) if "labels" in record else None,
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise FormatError(f"{path}:{line_number}: bad gold record: {exc}") from exc
            for cps in (entry[1], entry[2]):
                if list(cps) != sorted(set(cps)):
                    raise FormatError(
                        f"{path}:{line_number}: changepoints must be strictly increasing"
                    )
            records.append(entry)
    records.sort(key=lambda r: r[0])
    labels = tuple(r[3] for r in records) if all(r[3] is not None for r in records) else None
    return GoldSegmentation(
        tuple(r[1] for r in records), tuple(r[2] for r in records), labels
    )


def save_state(state: LatentState, corpus: GroupedCorpus, path: str | os.PathLike) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as handle:
        for g, transcript in enumerate(corpus.transcripts):
            record = {
                "id": transcript.id,
                "z1": [int(t) for t in state.z1[g]],
                "z2": [int(c) for c in state.z2[g]],
            }
            handle.write(json.dumps(record, sort_keys=True) + "\n")


def load_state(path: str | os.PathLike, corpus: GroupedCorpus) -> LatentState:
    path = Path(path)
    by_id = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                by_id[int(record["id"])] = (
                    np.asarray(record["z1"], dtype=np.int64),
                    np.asarray(record["z2"], dtype=np.int64),
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise FormatError(f"{path}:{line_number}: bad state record: {exc}") from exc
    z1, z2, cps, sizes, blocked = [], [], [], [], []
    for transcript in corpus.transcripts:
        if transcript.id not in by_id:
            raise FormatError(f"state file has no record for transcript {transcript.id}")
        t_z1, t_z2 = by_id[transcript.id]
        z1.append(t_z1)
        z2.append(t_z2)
        t_cps = changepoints_from_z2(t_z2)
        cps.append(t_cps)
        sizes.append(sizes_from_changepoints(t_cps, len(t_z2)))
        blocked.append(set(int(t) for t in np.unique(t_z1)))
    return LatentState(z1, z2, cps, sizes, blocked)
