"""Forward samplers for grouped sequential data.

The news-transcript sampler draws a synthetic corpus with known ground truth:
each transcript is split into a fixed number of ordered category segments whose
sentence counts come from a Dirichlet draw, tokens walk left-to-right with a
sticky topic assignment, and a per-transcript mask blocks a topic after its
first entry so stories never restart.  Topic supply is nonparametric: each
category owns a lazily extended stick-breaking distribution over its topics.

The remaining modes recover classical models as special cases: an exchangeable
Dirichlet-process mixture, a finite-topic bag-of-words model, a sticky
sequential mixture, and a nested mixture whose document clusters share no
topics (enforced through the same masking machinery).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .corpus import (
    GoldSegmentation,
    GroupedCorpus,
    LatentState,
    Transcript,
    changepoints_from_sizes,
    z2_from_changepoints,
)
from .errors import ConfigError, InfeasibleError, RangeError
from .topics import TopicMatrix

__all__ = [
    "Mode",
    "GenerativeConfig",
    "SyntheticCorpus",
    "discretize_sizes",
    "sample_news",
    "sample_dpmm",
    "sample_finite_lda",
    "sample_sticky_hmm",
    "sample_ndp_mask",
    "generate",
    "crp_partition_log_prob",
]


class Mode(enum.Enum):
    """Which generative process to run."""

    DPMM = "dpmm"
    FINITE_LDA = "lda"
    STICKY_HMM = "sticky-hmm"
    NEWS_TRANSCRIPT = "news"
    NDP_MASK = "ndp-mask"


IntOrRange = Union[int, tuple[int, int]]


@dataclass(frozen=True)
class GenerativeConfig:
    """Hyperparameters and shape of a synthetic corpus.

    ``num_categories`` is the fixed count of ordered level-2 segments in news
    mode and must stay 1 elsewhere; ``num_topics`` is only for the finite
    bag-of-words mode; ``alpha2`` is the document-cluster concentration of the
    nested mode (defaults to ``alpha``).  ``sentences_per_transcript`` and
    ``tokens_per_sentence`` may be single values or inclusive ``(low, high)``
    ranges sampled per transcript / sentence.  ``truncation`` is the initial
    topic pre-draw; sticks extend lazily beyond it, unless ``max_topics`` caps
    the total supply (a testing device that makes exhaustion reachable).
    """

    mode: Mode
    vocab_size: int = 120
    num_categories: int = 1
    num_topics: Optional[int] = None
    alpha: float = 1.0
    beta: float = 0.01
    gamma: Union[float, tuple[float, ...]] = 5.0
    rho: float = 0.95
    alpha2: Optional[float] = None
    num_transcripts: int = 3
    sentences_per_transcript: IntOrRange = 30
    tokens_per_sentence: IntOrRange = 8
    truncation: int = 200
    max_topics: Optional[int] = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.vocab_size <= 0 or self.num_transcripts <= 0:
            raise ConfigError("vocab_size and num_transcripts must be positive")
        if self.alpha <= 0 or self.beta <= 0:
            raise ConfigError("alpha and beta must be positive")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError("rho must lie in [0, 1]")
        if self.num_categories < 1:
            raise ConfigError("num_categories must be at least 1")
        gamma = self.gamma_vector()
        if np.any(gamma <= 0):
            raise ConfigError("gamma must be positive")
        if self.mode is Mode.NEWS_TRANSCRIPT:
            if len(gamma) not in (1, self.num_categories):
                raise ConfigError("gamma must be scalar or one value per category")
        else:
            if self.num_categories != 1:
                raise ConfigError(f"{self.mode.value} mode requires num_categories=1")
        if self.mode is Mode.FINITE_LDA:
            if self.num_topics is None or self.num_topics < 1:
                raise ConfigError("lda mode requires a positive num_topics")
        elif self.num_topics is not None:
            raise ConfigError(f"num_topics is not a {self.mode.value}-mode field")
        if self.alpha2 is not None and self.mode is not Mode.NDP_MASK:
            raise ConfigError(f"alpha2 is not a {self.mode.value}-mode field")
        if self.truncation < 1:
            raise ConfigError("truncation must be positive")

    def gamma_vector(self) -> np.ndarray:
        if isinstance(self.gamma, (int, float)):
            return np.full(self.num_categories, float(self.gamma))
        return np.asarray(self.gamma, dtype=np.float64)

    @staticmethod
    def news_full_scale(num_transcripts: int = 3, seed: int = 0) -> "GenerativeConfig":
        """Broadcast-transcript dimensions: roughly 5000 tokens and 40 stories
        spread over 5 ordered categories, 300-350 sentences per transcript."""
        return GenerativeConfig(
            mode=Mode.NEWS_TRANSCRIPT,
            vocab_size=2000,
            num_categories=5,
            rho=0.992,
            num_transcripts=num_transcripts,
            sentences_per_transcript=(300, 350),
            tokens_per_sentence=(12, 18),
            seed=seed,
        )


@dataclass
class SyntheticCorpus:
    """A sampled corpus bundled with its generating truth.

    ``gold`` is derived from ``truth``; ``doc_clusters`` carries the document
    cluster per transcript in the nested mode; ``truncation_residual`` is the
    largest stick mass left undrained by the initial pre-draw (0 means the
    initial sticks covered everything that was needed).
    """

    corpus: GroupedCorpus
    truth: LatentState
    topics: TopicMatrix
    gold: GoldSegmentation
    config: GenerativeConfig
    truncation_residual: float = 0.0
    doc_clusters: Optional[tuple[int, ...]] = None


# ---------------------------------------------------------------------------
# helpers


def discretize_sizes(fractions: Sequence[float], total: int) -> np.ndarray:
    """Round simplex fractions to positive integer sizes summing to ``total``.

    Largest-remainder rounding of ``fractions * total``; when a part rounds to
    zero it is raised to one, paid for by the part with the largest excess
    over its target.  Raises :class:`InfeasibleError` when ``total`` is below
    the part count.
    """
    fractions = np.asarray(fractions, dtype=np.float64)
    parts = len(fractions)
    if parts < 1:
        raise RangeError("need at least one fraction")
    if abs(fractions.sum() - 1.0) > 1e-9 or np.any(fractions < 0):
        raise RangeError("fractions must be a point on the simplex")
    if total < parts:
        raise InfeasibleError(f"cannot split {total} units into {parts} positive parts")
    target = fractions * total
    sizes = np.floor(target).astype(np.int64)
    remainder = target - sizes
    deficit = int(total - sizes.sum())
    # ties in the remainder go to the lower index
    order = np.lexsort((np.arange(parts), -remainder))
    for i in order[:deficit]:
        sizes[i] += 1
    while np.any(sizes == 0):
        empty = int(np.flatnonzero(sizes == 0)[0])
        donors = np.flatnonzero(sizes >= 2)
        excess = sizes[donors] - target[donors]
        donor = donors[np.lexsort((donors, -excess))[0]]
        sizes[empty] += 1
        sizes[donor] -= 1
    return sizes


def _draw_size(value: IntOrRange, rng: np.random.Generator) -> int:
    if isinstance(value, tuple):
        low, high = value
        return int(rng.integers(low, high + 1))
    return int(value)


def crp_partition_log_prob(labels: Sequence[int], alpha: float) -> float:
    """Log probability of a seating sequence under the exchangeable urn.

    ``labels`` must use first-appearance order (label ``j`` first appears
    after labels ``0..j-1``).  Each step seats at an occupied table with
    weight its count and at a new table with weight ``alpha``.
    """
    if alpha <= 0:
        raise RangeError("alpha must be positive")
    counts: dict[int, int] = {}
    log_prob = 0.0
    for step, label in enumerate(labels):
        denominator = step + alpha
        if label in counts:
            log_prob += math.log(counts[label] / denominator)
        else:
            if label != len(counts):
                raise RangeError("labels must be in first-appearance order")
            log_prob += math.log(alpha / denominator)
        counts[label] = counts.get(label, 0) + 1
    return log_prob


class _CategorySticks:
    """Lazily extended stick-breaking weights over one category's topics."""

    def __init__(self, alpha: float, rng: np.random.Generator) -> None:
        self.alpha = alpha
        self.rng = rng
        self.topic_ids: list[int] = []
        self.weights: list[float] = []
        self.residual = 1.0

    def append(self, topic_id: int) -> None:
        v = self.rng.beta(1.0, self.alpha)
        self.weights.append(self.residual * v)
        self.residual *= 1.0 - v
        self.topic_ids.append(topic_id)


class _TopicPool:
    """Global topic registry shared by the samplers.

    Creating a topic draws its word distribution from a symmetric Dirichlet;
    news mode additionally ties each topic to one category.
    """

    def __init__(self, config: GenerativeConfig, rng: np.random.Generator) -> None:
        self.config = config
        self.rng = rng
        self.rows: list[np.ndarray] = []
        self.categories: list[int] = []

    def create(self, category: int = 0) -> int:
        if (self.config.max_topics is not None
                and len(self.rows) >= self.config.max_topics):
            raise InfeasibleError(
                f"topic supply capped at {self.config.max_topics} and exhausted"
            )
        self.rows.append(self.rng.dirichlet(
            np.full(self.config.vocab_size, self.config.beta)))
        self.categories.append(category)
        return len(self.rows) - 1

    def matrix(self, usage: dict[int, int]) -> TopicMatrix:
        count = len(self.rows)
        probs = (np.vstack(self.rows) if count
                 else np.zeros((0, self.config.vocab_size)))
        usage_column = np.zeros(count, dtype=np.int64)
        for topic, n in usage.items():
            usage_column[topic] = n
        return TopicMatrix(
            probs,
            np.asarray(self.categories, dtype=np.int64),
            usage_column,
            np.ones(count, dtype=bool),
            self.config.num_categories,
        )


def _expected_story_quota(config: GenerativeConfig) -> int:
    # identifiability floor from the taxonomy decision: each category should
    # own at least half the stories it is expected to tell in one transcript
    mean_sentences = (sum(config.sentences_per_transcript) / 2
                      if isinstance(config.sentences_per_transcript, tuple)
                      else config.sentences_per_transcript)
    mean_tokens = (sum(config.tokens_per_sentence) / 2
                   if isinstance(config.tokens_per_sentence, tuple)
                   else config.tokens_per_sentence)
    tokens = mean_sentences * mean_tokens
    stories = config.num_categories + tokens * (1.0 - config.rho)
    quota = math.ceil(stories / config.num_categories / 2.0)
    return max(1, min(quota, config.truncation // config.num_categories))


def _draw_category_labels(config: GenerativeConfig, rng: np.random.Generator) -> np.ndarray:
    quota = _expected_story_quota(config)
    for _ in range(200):
        labels = rng.integers(1, config.num_categories + 1, size=config.truncation)
        counts = np.bincount(labels, minlength=config.num_categories + 1)[1:]
        if np.all(counts >= quota):
            return labels
    raise ConfigError(
        f"could not draw category labels giving every category {quota} topics; "
        f"raise truncation ({config.truncation}) or lower num_categories"
    )


# ---------------------------------------------------------------------------
# news-transcript sampler


def sample_news(config: GenerativeConfig) -> SyntheticCorpus:
    """Sample a synthetic news-style corpus with ground-truth segmentation.

    Per transcript: segment sizes are a Dirichlet draw over the categories,
    discretized to at least one sentence each; every token either repeats the
    previous token's topic with probability ``rho`` (forced off at the first
    token and at category changepoints) or draws a fresh topic from the
    category's masked stick weights; a topic is blocked for the rest of the
    transcript as soon as it is entered.  Category sticks are shared across
    transcripts.
    """
    if config.mode is not Mode.NEWS_TRANSCRIPT:
        raise ConfigError(f"sample_news needs news mode, got {config.mode.value}")
    rng = np.random.default_rng(config.seed)
    pool = _TopicPool(config, rng)
    labels = _draw_category_labels(config, rng)
    sticks = {s: _CategorySticks(config.alpha, rng)
              for s in range(1, config.num_categories + 1)}
    for label in labels:
        sticks[int(label)].append(pool.create(int(label)))
    truncation_residual = max(s.residual for s in sticks.values())
    gamma = config.gamma_vector()
    if len(gamma) == 1:
        gamma = np.full(config.num_categories, gamma[0])

    transcripts = []
    z1_all, z2_all, cps_all, sizes_all, blocked_all = [], [], [], [], []
    usage: dict[int, int] = {}
    for g in range(config.num_transcripts):
        num_sentences = _draw_size(config.sentences_per_transcript, rng)
        if num_sentences < config.num_categories:
            raise InfeasibleError(
                f"transcript {g} has {num_sentences} sentences, fewer than "
                f"{config.num_categories} categories"
            )
        fractions = rng.dirichlet(gamma)
        sizes = discretize_sizes(fractions, num_sentences)
        z2 = np.repeat(np.arange(1, config.num_categories + 1), sizes)
        sentence_lengths = [
            _draw_size(config.tokens_per_sentence, rng) for _ in range(num_sentences)
        ]
        blocked: set[int] = set()
        z1 = []
        sentences = []
        previous_topic: Optional[int] = None
        previous_category: Optional[int] = None
        for j in range(num_sentences):
            category = int(z2[j])
            for position in range(sentence_lengths[j]):
                at_reset = previous_topic is None or category != previous_category
                sticky = (not at_reset) and rng.random() < config.rho
                if sticky:
                    topic = previous_topic
                else:
                    topic = _draw_masked_topic(
                        sticks[category], blocked, pool, category, rng)
                if topic != previous_topic:
                    blocked.add(topic)
                    usage[topic] = usage.get(topic, 0) + 1
                z1.append(topic)
                previous_topic = topic
                previous_category = category
        # second pass: emit words from the assigned topics
        tokens = [int(rng.choice(config.vocab_size, p=pool.rows[t])) for t in z1]
        sentences = []
        cursor = 0
        for length in sentence_lengths:
            sentences.append(tuple(tokens[cursor:cursor + length]))
            cursor += length
        transcripts.append(Transcript(g, tuple(sentences)))
        z1_all.append(np.asarray(z1, dtype=np.int64))
        z2_all.append(z2)
        cps_all.append(changepoints_from_sizes(sizes))
        sizes_all.append(sizes)
        blocked_all.append(blocked)

    corpus = GroupedCorpus(config.vocab_size, tuple(transcripts))
    truth = LatentState(z1_all, z2_all, cps_all, sizes_all, blocked_all, config.seed)
    gold = _gold_from_truth(truth, corpus, config.num_categories)
    return SyntheticCorpus(corpus, truth, pool.matrix(usage), gold, config,
                           truncation_residual)


def _draw_masked_topic(
    stick: _CategorySticks,
    blocked: set[int],
    pool: _TopicPool,
    category: int,
    rng: np.random.Generator,
) -> int:
    while True:
        available = [i for i, t in enumerate(stick.topic_ids) if t not in blocked]
        mass = sum(stick.weights[i] for i in available)
        total = mass + stick.residual
        if total <= 0.0:
            raise InfeasibleError(f"no topic mass left for category {category}")
        draw = rng.random() * total
        if draw < mass:
            for i in available:
                draw -= stick.weights[i]
                if draw < 0.0:
                    return stick.topic_ids[i]
            return stick.topic_ids[available[-1]]
        # extend the stick: the residual mass belongs to not-yet-drawn topics
        stick.append(pool.create(category))


def _gold_from_truth(truth: LatentState, corpus: GroupedCorpus,
                     num_categories: int) -> GoldSegmentation:
    level1, level2 = [], []
    for g in range(corpus.num_transcripts):
        z1 = truth.z1[g]
        level1.append(tuple(int(i) for i in (np.flatnonzero(np.diff(z1) != 0) + 1)))
        level2.append(tuple(int(i) for i in truth.changepoints[g]))
    labels = tuple(tuple(range(1, num_categories + 1)) for _ in range(corpus.num_transcripts))
    return GoldSegmentation(tuple(level1), tuple(level2), labels)


# ---------------------------------------------------------------------------
# recovery modes


def _flat_state(z1_all, transcripts) -> LatentState:
    z2 = [np.ones(t.num_sentences, dtype=np.int64) for t in transcripts]
    cps = [np.empty(0, dtype=np.int64) for _ in transcripts]
    sizes = [np.asarray([t.num_sentences], dtype=np.int64) for t in transcripts]
    blocked = [set(int(v) for v in np.unique(z1)) for z1 in z1_all]
    return LatentState(list(z1_all), z2, cps, sizes, blocked)


def _emit_and_pack(config, rng, pool, z1_per_transcript, sentence_lengths_per_transcript,
                   usage, doc_clusters=None) -> SyntheticCorpus:
    transcripts = []
    for g, (z1, lengths) in enumerate(zip(z1_per_transcript, sentence_lengths_per_transcript)):
        tokens = [int(rng.choice(config.vocab_size, p=pool.rows[t])) for t in z1]
        sentences, cursor = [], 0
        for length in lengths:
            sentences.append(tuple(tokens[cursor:cursor + length]))
            cursor += length
        transcripts.append(Transcript(g, tuple(sentences)))
    corpus = GroupedCorpus(config.vocab_size, tuple(transcripts))
    z1_arrays = [np.asarray(z, dtype=np.int64) for z in z1_per_transcript]
    truth = _flat_state(z1_arrays, transcripts)
    truth.seed = config.seed
    gold = _gold_from_truth(truth, corpus, 1)
    return SyntheticCorpus(corpus, truth, pool.matrix(usage), gold, config,
                           doc_clusters=doc_clusters)


def _shape_lengths(config, rng):
    lengths = []
    for _ in range(config.num_transcripts):
        num_sentences = _draw_size(config.sentences_per_transcript, rng)
        lengths.append([
            _draw_size(config.tokens_per_sentence, rng) for _ in range(num_sentences)
        ])
    return lengths


def sample_dpmm(config: GenerativeConfig) -> SyntheticCorpus:
    """Exchangeable mixture: every token seats by the urn rule, no mask,
    no sequential conditioning.  Counts are shared across transcripts."""
    if config.mode is not Mode.DPMM:
        raise ConfigError(f"sample_dpmm needs dpmm mode, got {config.mode.value}")
    rng = np.random.default_rng(config.seed)
    pool = _TopicPool(config, rng)
    lengths = _shape_lengths(config, rng)
    counts: dict[int, int] = {}
    z1_per_transcript = []
    for transcript_lengths in lengths:
        z1 = []
        for _ in range(sum(transcript_lengths)):
            topics = sorted(counts)
            weights = [counts[t] for t in topics]
            weights.append(config.alpha)
            probs = np.asarray(weights) / sum(weights)
            choice = int(rng.choice(len(probs), p=probs))
            topic = topics[choice] if choice < len(topics) else pool.create()
            counts[topic] = counts.get(topic, 0) + 1
            z1.append(topic)
        z1_per_transcript.append(z1)
    return _emit_and_pack(config, rng, pool, z1_per_transcript, lengths, counts)


def sample_sticky_hmm(config: GenerativeConfig) -> SyntheticCorpus:
    """Sequential mixture: each token repeats its predecessor with probability
    ``rho``, otherwise seats by the urn rule with no mask."""
    if config.mode is not Mode.STICKY_HMM:
        raise ConfigError(f"sample_sticky_hmm needs sticky-hmm mode, got {config.mode.value}")
    rng = np.random.default_rng(config.seed)
    pool = _TopicPool(config, rng)
    lengths = _shape_lengths(config, rng)
    counts: dict[int, int] = {}
    z1_per_transcript = []
    for transcript_lengths in lengths:
        z1: list[int] = []
        previous: Optional[int] = None
        for _ in range(sum(transcript_lengths)):
            if previous is not None and rng.random() < config.rho:
                topic = previous
            else:
                topics = sorted(counts)
                weights = [counts[t] for t in topics]
                weights.append(config.alpha)
                probs = np.asarray(weights) / sum(weights)
                choice = int(rng.choice(len(probs), p=probs))
                topic = topics[choice] if choice < len(topics) else pool.create()
                counts[topic] = counts.get(topic, 0) + 1
            z1.append(topic)
            previous = topic
        z1_per_transcript.append(z1)
    return _emit_and_pack(config, rng, pool, z1_per_transcript, lengths, counts)


def sample_finite_lda(config: GenerativeConfig) -> SyntheticCorpus:
    """Finite bag-of-words model: per-transcript topic proportions from a
    symmetric Dirichlet, tokens drawn independently."""
    if config.mode is not Mode.FINITE_LDA:
        raise ConfigError(f"sample_finite_lda needs lda mode, got {config.mode.value}")
    rng = np.random.default_rng(config.seed)
    pool = _TopicPool(config, rng)
    for _ in range(config.num_topics):
        pool.create()
    lengths = _shape_lengths(config, rng)
    seeds = np.random.SeedSequence(config.seed).spawn(config.num_transcripts)
    usage: dict[int, int] = {}
    z1_per_transcript = []
    for g, transcript_lengths in enumerate(lengths):
        transcript_rng = np.random.default_rng(seeds[g])
        theta = transcript_rng.dirichlet(np.full(config.num_topics, config.alpha))
        z1 = [int(t) for t in
              transcript_rng.choice(config.num_topics, size=sum(transcript_lengths), p=theta)]
        for t in z1:
            usage[t] = usage.get(t, 0) + 1
        z1_per_transcript.append(z1)
    return _emit_and_pack(config, rng, pool, z1_per_transcript, lengths, usage)


def sample_ndp_mask(config: GenerativeConfig) -> SyntheticCorpus:
    """Nested mixture: transcripts cluster by an urn at the document level, and
    the token-level mask zeroes every topic already used under a different
    document cluster, so cluster topic sets stay disjoint."""
    if config.mode is not Mode.NDP_MASK:
        raise ConfigError(f"sample_ndp_mask needs ndp-mask mode, got {config.mode.value}")
    rng = np.random.default_rng(config.seed)
    pool = _TopicPool(config, rng)
    alpha2 = config.alpha2 if config.alpha2 is not None else config.alpha
    lengths = _shape_lengths(config, rng)
    cluster_counts: dict[int, int] = {}
    doc_clusters = []
    for _ in range(config.num_transcripts):
        clusters = sorted(cluster_counts)
        weights = [cluster_counts[c] for c in clusters]
        weights.append(alpha2)
        probs = np.asarray(weights) / sum(weights)
        choice = int(rng.choice(len(probs), p=probs))
        cluster = clusters[choice] if choice < len(clusters) else len(clusters)
        cluster_counts[cluster] = cluster_counts.get(cluster, 0) + 1
        doc_clusters.append(cluster)
    counts: dict[int, int] = {}
    topic_cluster: dict[int, int] = {}
    z1_per_transcript = []
    for g, transcript_lengths in enumerate(lengths):
        cluster = doc_clusters[g]
        z1 = []
        for _ in range(sum(transcript_lengths)):
            # mask: topics seated under another document cluster are blocked
            topics = [t for t in sorted(counts) if topic_cluster[t] == cluster]
            weights = [counts[t] for t in topics]
            weights.append(config.alpha)
            probs = np.asarray(weights) / sum(weights)
            choice = int(rng.choice(len(probs), p=probs))
            if choice < len(topics):
                topic = topics[choice]
            else:
                topic = pool.create()
                topic_cluster[topic] = cluster
            counts[topic] = counts.get(topic, 0) + 1
            z1.append(topic)
        z1_per_transcript.append(z1)
    return _emit_and_pack(config, rng, pool, z1_per_transcript, lengths, counts,
                          doc_clusters=tuple(doc_clusters))


_SAMPLERS = {
    Mode.NEWS_TRANSCRIPT: sample_news,
    Mode.DPMM: sample_dpmm,
    Mode.STICKY_HMM: sample_sticky_hmm,
    Mode.FINITE_LDA: sample_finite_lda,
    Mode.NDP_MASK: sample_ndp_mask,
}


def generate(config: GenerativeConfig) -> SyntheticCorpus:
    """Run the sampler selected by ``config.mode``."""
    return _SAMPLERS[config.mode](config)
