"""Collapsed Dirichlet-multinomial topic machinery.

Count tables hold the sufficient statistics of the current token-topic
assignment: per-topic word counts, their row sums, and per-category usage
counts (one count per run start, i.e. per seating decision, not per sticky
continuation).  Topic-word probabilities come either from the collapsed
predictive rule or from the posterior-mean point estimate snapshotted into a
:class:`TopicMatrix`.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import gammaln

from .corpus import GroupedCorpus
from .errors import ConfigError, FormatError, RangeError

__all__ = [
    "TopicMatrix",
    "CountTables",
    "predictive_word_prob",
    "estimate_phi",
    "crp_topic_weights",
    "init_topics",
    "save_topics",
    "load_topics",
]


@dataclass
class TopicMatrix:
    """Point-estimated topic-word distributions with per-topic category labels.

    ``probs[k]`` is a distribution over the vocabulary, ``category[k]`` the
    topic's category in ``1..K`` (0 when unassigned), ``usage[k]`` a producer-
    defined usage count, and ``active[k]`` whether the row is in use.
    Immutable by convention once shared: treat rows as read-only.
    """

    probs: np.ndarray
    category: np.ndarray
    usage: np.ndarray
    active: np.ndarray
    num_categories: int = 0

    def __post_init__(self) -> None:
        self.probs = np.asarray(self.probs, dtype=np.float64)
        self.category = np.asarray(self.category, dtype=np.int64)
        self.usage = np.asarray(self.usage, dtype=np.int64)
        self.active = np.asarray(self.active, dtype=bool)
        rows = self.probs.shape[0]
        if not (len(self.category) == len(self.usage) == len(self.active) == rows):
            raise RangeError("topic matrix columns have inconsistent lengths")
        if rows and self.probs.min() < 0:
            raise RangeError("topic probabilities must be nonnegative")
        for k in range(rows):
            if self.active[k] and abs(self.probs[k].sum() - 1.0) > 1e-9:
                raise RangeError(f"active topic {k} row does not sum to 1")

    @property
    def num_topics(self) -> int:
        return self.probs.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.probs.shape[1]

    def rows_by_id(self) -> dict[int, np.ndarray]:
        return {k: self.probs[k] for k in range(self.num_topics) if self.active[k]}

    def categories_by_id(self) -> dict[int, int]:
        return {
            k: int(self.category[k])
            for k in range(self.num_topics)
            if self.active[k] and self.category[k] != 0
        }


class CountTables:
    """Sufficient statistics of a token-topic assignment.

    Tracks per-topic word counts, per-topic token totals, per-category seating
    counts (number of run starts of each topic under each category), and the
    permanent category of topics created during inference.  Counts never go
    negative; removing an absent count raises :class:`RangeError`.
    Single-writer: callers must not mutate concurrently.
    """

    def __init__(self, vocab_size: int, num_categories: int) -> None:
        if vocab_size <= 0:
            raise RangeError("vocab_size must be positive")
        if num_categories < 1:
            raise RangeError("need at least one category")
        self.vocab_size = vocab_size
        self.num_categories = num_categories
        self.topic_word: dict[int, np.ndarray] = {}
        self.topic_tokens: dict[int, int] = {}
        self.category_use: list[dict[int, int]] = [dict() for _ in range(num_categories + 1)]
        self.category_of: dict[int, int] = {}
        self._next_topic_id = 0

    # -- topic ids ---------------------------------------------------------

    def ensure_topic(self, topic: int) -> None:
        if topic not in self.topic_word:
            self.topic_word[topic] = np.zeros(self.vocab_size, dtype=np.int64)
            self.topic_tokens[topic] = 0
            self._next_topic_id = max(self._next_topic_id, topic + 1)

    def new_topic_id(self) -> int:
        topic = self._next_topic_id
        self.ensure_topic(topic)
        return topic

    def assign_category(self, topic: int, category: int) -> None:
        """Permanently tie a topic to a category (idempotent)."""
        existing = self.category_of.get(topic)
        if existing is not None and existing != category:
            raise RangeError(
                f"topic {topic} already belongs to category {existing}, not {category}"
            )
        self.category_of[topic] = category

    # -- word counts ---------------------------------------------------------

    def add_token(self, topic: int, word: int) -> None:
        if not 0 <= word < self.vocab_size:
            raise RangeError(f"word id {word} outside [0, {self.vocab_size})")
        self.ensure_topic(topic)
        self.topic_word[topic][word] += 1
        self.topic_tokens[topic] += 1

    def remove_token(self, topic: int, word: int) -> None:
        if topic not in self.topic_word or self.topic_word[topic][word] <= 0:
            raise RangeError(f"no count to remove for topic {topic}, word {word}")
        self.topic_word[topic][word] -= 1
        self.topic_tokens[topic] -= 1

    # -- seating counts ------------------------------------------------------

    def add_use(self, category: int, topic: int) -> None:
        if not 1 <= category <= self.num_categories:
            raise RangeError(f"category {category} outside [1, {self.num_categories}]")
        self.ensure_topic(topic)
        table = self.category_use[category]
        table[topic] = table.get(topic, 0) + 1

    def remove_use(self, category: int, topic: int) -> None:
        table = self.category_use[category]
        if table.get(topic, 0) <= 0:
            raise RangeError(f"no seating count for topic {topic} under category {category}")
        table[topic] -= 1
        if table[topic] == 0:
            del table[topic]

    def use_count(self, category: int, topic: int) -> int:
        return self.category_use[category].get(topic, 0)

    def total_use(self, topic: int) -> int:
        return sum(table.get(topic, 0) for table in self.category_use)

    def total_tokens(self) -> int:
        return sum(self.topic_tokens.values())

    def is_empty(self) -> bool:
        return (
            all(v == 0 for v in self.topic_tokens.values())
            and all(not any(t.values()) for t in self.category_use)
            and all(not row.any() for row in self.topic_word.values())
        )


def predictive_word_prob(tables: CountTables, topic: int, word: int, beta: float) -> float:
    """Collapsed predictive probability of ``word`` under ``topic``.

    ``(count + beta) / (total + V * beta)``; a topic with no counts (including
    a brand-new one) gives the symmetric-prior value ``1 / V``.
    """
    if beta <= 0:
        raise RangeError("beta must be positive")
    if not 0 <= word < tables.vocab_size:
        raise RangeError(f"word id {word} outside [0, {tables.vocab_size})")
    count = tables.topic_word[topic][word] if topic in tables.topic_word else 0
    total = tables.topic_tokens.get(topic, 0)
    return (count + beta) / (total + tables.vocab_size * beta)


def estimate_phi(tables: CountTables, beta: float) -> TopicMatrix:
    """Posterior-mean topic-word matrix under a symmetric Dirichlet prior."""
    if beta <= 0:
        raise RangeError("beta must be positive")
    topics = sorted(tables.topic_word)
    size = (topics[-1] + 1) if topics else 0
    probs = np.full((size, tables.vocab_size), 1.0 / tables.vocab_size)
    category = np.zeros(size, dtype=np.int64)
    usage = np.zeros(size, dtype=np.int64)
    active = np.zeros(size, dtype=bool)
    for k in topics:
        probs[k] = (tables.topic_word[k] + beta) / (
            tables.topic_tokens[k] + tables.vocab_size * beta
        )
        category[k] = tables.category_of.get(k, 0)
        usage[k] = tables.topic_tokens[k]
        active[k] = True
    return TopicMatrix(probs, category, usage, active, tables.num_categories)


def crp_topic_weights(
    tables: CountTables,
    category: int,
    blocked: Iterable[int],
    alpha: float,
) -> tuple[dict[int, float], float]:
    """Unnormalized seating weights for one category.

    An existing topic weighs its seating count under the category, zeroed when
    the topic is blocked or permanently owned by a different category; the
    ``new topic`` option weighs ``alpha``.  Returns ``(weights_by_topic,
    new_topic_weight)``.
    """
    if alpha <= 0:
        raise RangeError("alpha must be positive")
    blocked = set(blocked)
    weights = {}
    for topic, count in tables.category_use[category].items():
        if count <= 0 or topic in blocked:
            continue
        owner = tables.category_of.get(topic)
        if owner is not None and owner != category:
            continue
        weights[topic] = float(count)
    return weights, float(alpha)


# ---------------------------------------------------------------------------
# nonparametric topic initialization from level-1 segments


def _segment_log_marginal(counts: np.ndarray, topic_counts: np.ndarray,
                          topic_total: int, beta: float) -> float:
    # log p(segment tokens | topic counts) under the collapsed Dirichlet prior
    vocab_size = len(counts)
    n = counts.sum()
    value = gammaln(topic_total + vocab_size * beta) - gammaln(topic_total + n + vocab_size * beta)
    nonzero = np.flatnonzero(counts)
    value += np.sum(
        gammaln(topic_counts[nonzero] + counts[nonzero] + beta)
        - gammaln(topic_counts[nonzero] + beta)
    )
    return float(value)


def init_topics(
    corpus: GroupedCorpus,
    level1_changepoints: Sequence[Sequence[int]],
    alpha: float = 1.0,
    beta: float = 0.1,
    iters: int = 50,
    seed: int = 0,
) -> TopicMatrix:
    """Cluster level-1 segments into topics with a collapsed mixture sampler.

    Each initial level-1 segment is one draw unit assigned to a single topic;
    segments sharing a topic pool their word counts.  Topics start one per
    segment and merge or split under the seating prior (``alpha``) and the
    collapsed Dirichlet-multinomial likelihood (``beta``); the topic count is
    data-driven.  Returns the posterior-mean topic matrix of the final
    clustering with per-topic usage = number of segments; categories are left
    unassigned.
    """
    rng = np.random.default_rng(seed)
    segment_counts: list[np.ndarray] = []
    for g, transcript in enumerate(corpus.transcripts):
        tokens = transcript.tokens()
        bounds = [0, *list(level1_changepoints[g]), transcript.num_tokens]
        for i in range(len(bounds) - 1):
            span = tokens[bounds[i]:bounds[i + 1]]
            if len(span) == 0:
                continue
            segment_counts.append(
                np.bincount(span, minlength=corpus.vocab_size).astype(np.int64)
            )
    if not segment_counts:
        raise ConfigError("no nonempty initial segments to cluster")

    num_segments = len(segment_counts)
    assignment = np.arange(num_segments)
    topic_counts = {k: segment_counts[k].copy() for k in range(num_segments)}
    topic_members = {k: 1 for k in range(num_segments)}
    next_id = num_segments

    for _ in range(iters):
        for segment in range(num_segments):
            old = int(assignment[segment])
            topic_counts[old] -= segment_counts[segment]
            topic_members[old] -= 1
            if topic_members[old] == 0:
                del topic_counts[old], topic_members[old]
            candidates = sorted(topic_members)
            log_weights = [
                np.log(topic_members[k])
                + _segment_log_marginal(
                    segment_counts[segment], topic_counts[k],
                    int(topic_counts[k].sum()), beta,
                )
                for k in candidates
            ]
            empty = np.zeros(corpus.vocab_size, dtype=np.int64)
            log_weights.append(
                np.log(alpha)
                + _segment_log_marginal(segment_counts[segment], empty, 0, beta)
            )
            log_weights = np.asarray(log_weights)
            probs = np.exp(log_weights - log_weights.max())
            probs /= probs.sum()
            choice = rng.choice(len(probs), p=probs)
            if choice == len(candidates):
                new = next_id
                next_id += 1
                topic_counts[new] = segment_counts[segment].copy()
                topic_members[new] = 1
                assignment[segment] = new
            else:
                k = candidates[choice]
                topic_counts[k] += segment_counts[segment]
                topic_members[k] += 1
                assignment[segment] = k

    topics = sorted(topic_members)
    remap = {old: new for new, old in enumerate(topics)}
    probs = np.zeros((len(topics), corpus.vocab_size))
    usage = np.zeros(len(topics), dtype=np.int64)
    for old, new in remap.items():
        counts = topic_counts[old]
        probs[new] = (counts + beta) / (counts.sum() + corpus.vocab_size * beta)
        usage[new] = topic_members[old]
    return TopicMatrix(
        probs,
        np.zeros(len(topics), dtype=np.int64),
        usage,
        np.ones(len(topics), dtype=bool),
    )


# ---------------------------------------------------------------------------
# topic matrix file format


def save_topics(matrix: TopicMatrix, path: str | os.PathLike) -> None:
    """Write a topic matrix: JSON header line, then one text row per topic.

    Each row is ``category usage active p_0 ... p_{V-1}`` with probabilities
    at 17 significant digits, which round-trips float64 exactly.
    """
    path = Path(path)
    with open(path, "w", encoding="utf-8") as handle:
        header = {
            "vocab_size": matrix.vocab_size,
            "num_topics": matrix.num_topics,
            "num_categories": matrix.num_categories,
        }
        handle.write(json.dumps(header, sort_keys=True) + "\n")
        for k in range(matrix.num_topics):
            cells = [str(int(matrix.category[k])), str(int(matrix.usage[k])),
                     str(int(matrix.active[k]))]
            cells.extend(f"{p:.17g}" for p in matrix.probs[k])
            handle.write(" ".join(cells) + "\n")


def load_topics(path: str | os.PathLike) -> TopicMatrix:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as handle:
        try:
            header = json.loads(handle.readline())
            vocab_size = int(header["vocab_size"])
            num_topics = int(header["num_topics"])
            num_categories = int(header["num_categories"])
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}: bad topic file header: {exc}") from exc
        probs = np.zeros((num_topics, vocab_size))
        category = np.zeros(num_topics, dtype=np.int64)
        usage = np.zeros(num_topics, dtype=np.int64)
        active = np.zeros(num_topics, dtype=bool)
        for k in range(num_topics):
            line = handle.readline()
            cells = line.split()
            if len(cells) != vocab_size + 3:
                raise FormatError(f"{path}: topic row {k} has {len(cells)} cells")
            category[k] = int(cells[0])
            usage[k] = int(cells[1])
            active[k] = bool(int(cells[2]))
            probs[k] = [float(c) for c in cells[3:]]
    return TopicMatrix(probs, category, usage, active, num_categories)
