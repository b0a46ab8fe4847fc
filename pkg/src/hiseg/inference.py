"""Blocked Gibbs inference for two-level segmentation with masked sticky topics.

The sampler alternates three kinds of update until the iteration budget runs
out: move each category changepoint among the sentence positions between its
neighbors, re-walk each segment's token-topic assignment left to right, and
re-estimate the topic-word point estimates once per sweep.  Topic priors are
collapsed to seating counts per category; the per-transcript mask blocks a
topic after its first entry, so stories stay contiguous.

Changepoint candidates are scored with the existing assignment where tokens
keep their segment, and with a deterministic greedy completion (argmax of the
per-token conditional, ties to the lowest topic id) for tokens whose segment
membership would change; the block re-walk immediately afterwards refreshes
those tokens stochastically.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.stats import dirichlet as _dirichlet

from .corpus import (
    GoldSegmentation,
    GroupedCorpus,
    LatentState,
    changepoints_from_sizes,
    sizes_from_changepoints,
    z2_from_changepoints,
)
from .errors import ConfigError, ExhaustionError, InfeasibleError, ShapeError
from .generative import discretize_sizes
from .topics import CountTables, TopicMatrix, estimate_phi

__all__ = [
    "InferenceParams",
    "TraceEntry",
    "InferenceResult",
    "initialize",
    "segment_log_likelihood",
    "run",
    "baseline_markov",
    "joint_log_likelihood",
]

_FRESH = -1  # placeholder id for a not-yet-created topic during a walk


@dataclass(frozen=True)
class InferenceParams:
    """Sampler hyperparameters and schedule.

    ``gamma`` may be a scalar (symmetric) or one value per category.  When
    ``allow_new_topics`` is false the sampler is restricted to topics that
    already have point-estimate rows, which makes tiny instances exactly
    enumerable (and makes topic exhaustion reachable).  ``update_topics``
    turns the per-sweep posterior-mean re-estimation of the topic rows on or
    off; with it off the provided estimates stay fixed for the whole run, so
    the chain targets one unchanging conditional.  ``epsilon`` only matters
    with ``stop_on_convergence``: sweeps stop early once the relative joint
    log-likelihood change over a 5-sweep window drops below it.
    """

    num_categories: int
    alpha: float = 1.0
    beta: float = 0.01
    gamma: Union[float, tuple[float, ...]] = 5.0
    rho: float = 0.95
    iterations: int = 100
    burn_in: int = 0
    candidate_window: Optional[int] = None
    seed: int = 0
    epsilon: float = 1e-4
    stop_on_convergence: bool = False
    allow_new_topics: bool = True
    update_topics: bool = True

    def __post_init__(self) -> None:
        if self.num_categories < 1:
            raise ConfigError("num_categories must be at least 1")
        if self.alpha <= 0 or self.beta <= 0 or self.epsilon <= 0:
            raise ConfigError("alpha, beta, and epsilon must be positive")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError("rho must lie in [0, 1]")
        if self.iterations < 0 or not 0 <= self.burn_in <= self.iterations:
            raise ConfigError("need 0 <= burn_in <= iterations")
        gamma = self.gamma_vector()
        if np.any(gamma <= 0):
            raise ConfigError("gamma must be positive")

    def gamma_vector(self) -> np.ndarray:
        if isinstance(self.gamma, (int, float)):
            return np.full(self.num_categories, float(self.gamma))
        gamma = np.asarray(self.gamma, dtype=np.float64)
        if len(gamma) != self.num_categories:
            raise ConfigError("gamma must be scalar or one value per category")
        return gamma


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    joint_log_likelihood: float
    changepoints: tuple[tuple[int, ...], ...]


@dataclass
class InferenceResult:
    """Final state, topic estimates, trace, and posterior changepoint counts."""

    state: LatentState
    phi: TopicMatrix
    trace: list[TraceEntry]
    changepoint_counts: list[list[Counter]]
    kept: int
    params: InferenceParams

    def posterior_mode_changepoints(self) -> list[list[int]]:
        """Most frequent post-burn-in position per changepoint slot (ties to
        the smaller sentence index); falls back to the final state when no
        samples were kept."""
        modes = []
        for g, slots in enumerate(self.changepoint_counts):
            positions = []
            for slot, counts in enumerate(slots):
                if counts:
                    best = min(counts, key=lambda pos: (-counts[pos], pos))
                    positions.append(int(best))
                else:
                    positions.append(int(self.state.changepoints[g][slot]))
            modes.append(positions)
        return modes

    def predicted_segmentation(self, corpus: GroupedCorpus) -> GoldSegmentation:
        """Level-1 changepoints of the final state, level-2 posterior modes.

        Per-slot modes are not guaranteed to be jointly increasing; a
        non-increasing combination falls back to the final state.
        """
        level1 = []
        for g in range(corpus.num_transcripts):
            z1 = self.state.z1[g]
            level1.append(tuple(int(i) for i in (np.flatnonzero(np.diff(z1) != 0) + 1)))
        level2 = []
        for g, positions in enumerate(self.posterior_mode_changepoints()):
            if all(a < b for a, b in zip(positions, positions[1:])):
                level2.append(tuple(positions))
            else:
                level2.append(tuple(int(i) for i in self.state.changepoints[g]))
        return GoldSegmentation(tuple(level1), tuple(level2))


# ---------------------------------------------------------------------------
# walk machinery


class _Walk:
    """Sequential token walk over one category span with local count deltas.

    Reads the engine's tables but never mutates them; seating counts, word
    counts of rowless topics, the blocked set, and the unused-topic pool are
    walk-local, so candidate scoring can run without commits.
    """

    def __init__(self, engine: "_Engine", category: int, blocked: set[int],
                 prev_topic: Optional[int] = None,
                 placeholder_base: int = _FRESH) -> None:
        self.engine = engine
        self.category = category
        self.blocked = set(blocked)
        self.word_delta: dict[int, Counter] = {}
        self.created: list[int] = []
        self.placeholder_base = placeholder_base
        self.prev_topic = prev_topic
        self.log_prob = 0.0
        self.last_logq = 0.0
        tables = engine.tables
        self.use_counts: dict[int, int] = {
            t: c
            for t, c in tables.category_use[category].items()
            if c > 0 and tables.category_of.get(t) in (None, category)
        }
        self.pool: set[int] = {
            t for t in engine.phi_rows
            if t not in self.blocked
            and tables.total_use(t) == 0
            and tables.category_of.get(t) in (None, category)
        }
        self._stale = True
        self._share = 0.0
        self._ids: list[int] = []
        self._id_index: dict[int, int] = {}
        self._rowless: list[tuple[int, float]] = []
        self._prior_vec = np.empty(0)
        self._row_vec = np.empty(0, dtype=np.intp)

    # -- emission ----------------------------------------------------------

    def _emission(self, topic: int, word: int) -> float:
        row = self.engine.phi_rows.get(topic)
        if row is not None:
            return float(row[word])
        tables = self.engine.tables
        base = tables.topic_word[topic][word] if topic in tables.topic_word else 0
        total = tables.topic_tokens.get(topic, 0)
        delta = self.word_delta.get(topic)
        if delta is not None:
            base += delta[word]
            total += sum(delta.values())
        beta = self.engine.params.beta
        return (base + beta) / (total + tables.vocab_size * beta)

    # -- candidate enumeration ----------------------------------------------

    # -- candidate cache ------------------------------------------------------

    def _rebuild(self) -> None:
        # rebuilt only when seats, mask, or pool change (entry events);
        # between entries the candidate structure is constant and per-token
        # work reduces to one emission-column gather
        params = self.engine.params
        used = [t for t in sorted(self.use_counts)
                if self.use_counts[t] > 0 and t not in self.blocked]
        denominator = sum(self.use_counts[t] for t in used) + params.alpha
        pool_ids = sorted(self.pool)
        option_count = len(pool_ids) + (1 if params.allow_new_topics else 0)
        self._share = (params.alpha / denominator / option_count
                       if option_count else 0.0)
        phi_index = self.engine.phi_index
        ids: list[int] = []
        priors: list[float] = []
        rows: list[int] = []
        rowless: list[tuple[int, float]] = []
        for t in used:
            prior = self.use_counts[t] / denominator
            idx = phi_index.get(t)
            if idx is None:
                rowless.append((t, prior))
            else:
                ids.append(t)
                priors.append(prior)
                rows.append(idx)
        for t in pool_ids:
            ids.append(t)
            priors.append(self._share)
            rows.append(phi_index[t])
        self._prior_vec = np.asarray(priors)
        self._row_vec = np.asarray(rows, dtype=np.intp)
        self._ids = ids
        self._id_index = {t: i for i, t in enumerate(ids)}
        self._rowless = rowless
        self._stale = False

    def _token_state(self, word: int, reset: bool):
        """Merged candidate weights for one token.

        Returns (prior array, emission array over the cached rowed candidates,
        extras) where extras are (topic, prior, emission) triples for rowless
        topics, the fresh placeholder, and a sticky predecessor that is not a
        seating candidate.  The sticky prior of a predecessor that is also a
        seating candidate (unmasked walks) folds into its array slot.
        """
        if self._stale:
            self._rebuild()
        params = self.engine.params
        effective_rho = 0.0 if reset else params.rho
        scale = 1.0 - effective_rho
        priors = scale * self._prior_vec
        emissions = self.engine.phi_matrix[self._row_vec, word]
        extras: list[tuple[int, float, float]] = []
        if effective_rho > 0.0 and self.prev_topic is not None:
            index = self._id_index.get(self.prev_topic)
            if index is not None:
                priors[index] += effective_rho
            else:
                emission = self._emission(self.prev_topic, word)
                if emission > 0.0:
                    extras.append((self.prev_topic, effective_rho, emission))
        if scale > 0.0:
            for t, prior in self._rowless:
                emission = self._emission(t, word)
                if emission > 0.0:
                    extras.append((t, scale * prior, emission))
            if params.allow_new_topics and self._share > 0.0:
                extras.append((self.placeholder_base - len(self.created),
                               scale * self._share,
                               1.0 / self.engine.tables.vocab_size))
        return priors, emissions, extras

    # -- stepping -----------------------------------------------------------

    def _apply(self, topic: int, word: int, prior: float, emission: float,
               normalizer: float) -> None:
        weight = prior * emission
        self.log_prob += math.log(weight)
        self.last_logq = math.log(weight) - math.log(normalizer)
        if topic != self.prev_topic:
            if topic <= _FRESH:
                self.created.append(topic)
            if self.engine.masked:
                self.blocked.add(topic)
            self.pool.discard(topic)
            self.use_counts[topic] = self.use_counts.get(topic, 0) + 1
            self._stale = True
        if topic not in self.engine.phi_rows:
            self.word_delta.setdefault(topic, Counter())[word] += 1
        self.prev_topic = topic

    def step_sample(self, word: int, reset: bool, rng: np.random.Generator,
                    raise_on_dead_end: bool = True) -> Optional[int]:
        priors, emissions, extras = self._token_state(word, reset)
        weights = priors * emissions
        extra_weights = [p * e for _, p, e in extras]
        total = float(weights.sum()) + sum(extra_weights)
        if total <= 0.0:
            if raise_on_dead_end:
                raise ExhaustionError(
                    f"no topic available under category {self.category}: all "
                    "candidates masked and new topics disallowed")
            self.log_prob = -math.inf
            return None
        draw = rng.random() * total
        for (topic, prior, emission), weight in zip(extras, extra_weights):
            if draw < weight:
                self._apply(topic, word, prior, emission, total)
                return topic
            draw -= weight
        cumulative = np.cumsum(weights)
        index = min(int(np.searchsorted(cumulative, draw, side="right")),
                    len(weights) - 1)
        topic = self._ids[index]
        self._apply(topic, word, priors[index], float(emissions[index]), total)
        return topic

    def step_map(self, word: int, reset: bool) -> Optional[int]:
        """Greedy completion step; None when no topic is admissible."""
        priors, emissions, extras = self._token_state(word, reset)
        weights = priors * emissions
        extra_weights = [p * e for _, p, e in extras]
        best_array = float(weights.max()) if len(weights) else 0.0
        best_extra = max(extra_weights, default=0.0)
        total = float(weights.sum()) + sum(extra_weights)
        if max(best_array, best_extra) <= 0.0:
            self.log_prob = -math.inf
            return None
        if best_extra > best_array:
            topic, prior, emission = extras[extra_weights.index(best_extra)]
        else:
            index = int(np.argmax(weights))
            topic, prior, emission = (self._ids[index], priors[index],
                                      float(emissions[index]))
        self._apply(topic, word, prior, emission, total)
        return topic

    def step_evaluate(self, topic: int, word: int, reset: bool) -> bool:
        """Accumulate the log factor of a given topic; False when impossible."""
        priors, emissions, extras = self._token_state(word, reset)
        total = float((priors * emissions).sum()) + sum(p * e for _, p, e in extras)
        index = self._id_index.get(topic)
        if index is not None and priors[index] * emissions[index] > 0.0:
            self._apply(topic, word, priors[index], float(emissions[index]), total)
            return True
        for candidate, prior, emission in extras:
            if candidate == topic:
                self._apply(topic, word, prior, emission, total)
                return True
        # a known-by-id but never-seen topic can only arrive as a fresh draw
        if (self.engine.params.allow_new_topics and topic >= 0
                and topic not in self.blocked
                and topic not in self.engine.phi_rows
                and self.engine.tables.total_use(topic) == 0
                and self.engine.tables.category_of.get(topic) in (None, self.category)):
            for candidate, prior, emission in extras:
                if candidate <= _FRESH:
                    self._apply(topic, word, prior, self._emission(topic, word),
                                total)
                    return True
        self.log_prob = -math.inf
        return False


@dataclass(frozen=True)
class _Span:
    """One contiguous same-category token range of a walk."""

    category: int
    token_lo: int
    token_hi: int
    reset: bool = True
    prev_topic: Optional[int] = None


class _Engine:
    """Shared mutable state of one sampling run."""

    def __init__(self, corpus: GroupedCorpus, params: InferenceParams,
                 topics: Optional[TopicMatrix], rng: np.random.Generator,
                 masked: bool = True) -> None:
        if corpus.num_transcripts == 0:
            raise ShapeError("corpus has no transcripts")
        self.corpus = corpus
        self.params = params
        self.rng = rng
        self.masked = masked
        self.tables = CountTables(corpus.vocab_size, params.num_categories)
        self.phi_rows: dict[int, np.ndarray] = {}
        if topics is not None:
            if topics.vocab_size != corpus.vocab_size:
                raise ShapeError("topic matrix vocabulary does not match corpus")
            for k in range(topics.num_topics):
                self.tables.ensure_topic(k)
                if not topics.active[k]:
                    continue
                self.phi_rows[k] = topics.probs[k].copy()
                if topics.category[k] != 0:
                    self.tables.assign_category(k, int(topics.category[k]))
        self.tokens = [t.tokens() for t in corpus.transcripts]
        self.sentence_starts = [t.sentence_token_start() for t in corpus.transcripts]
        self.num_sentences = [t.num_sentences for t in corpus.transcripts]
        self.state: Optional[LatentState] = None
        self.sync_phi()

    def sync_phi(self) -> None:
        """Rebuild the row-indexed view of the point estimates; must run after
        any change to ``phi_rows``."""
        ids = sorted(self.phi_rows)
        self.phi_index = {t: i for i, t in enumerate(ids)}
        self.phi_matrix = (np.stack([self.phi_rows[t] for t in ids]) if ids
                           else np.zeros((0, self.corpus.vocab_size)))

    # -- geometry ------------------------------------------------------------

    def segment_bounds(self, g: int) -> list[int]:
        return [0, *[int(c) for c in self.state.changepoints[g]], self.num_sentences[g]]

    def token_start(self, g: int, sentence: int) -> int:
        if sentence >= self.num_sentences[g]:
            return len(self.tokens[g])
        return int(self.sentence_starts[g][sentence])

    def token_range(self, g: int, sentence_lo: int, sentence_hi: int) -> tuple[int, int]:
        return self.token_start(g, sentence_lo), self.token_start(g, sentence_hi)

    def category_spans(self, g: int, bounds: Sequence[int]):
        """(category, sentence_lo, sentence_hi) per segment under ``bounds``."""
        return [(s + 1, bounds[s], bounds[s + 1]) for s in range(len(bounds) - 1)]

    def token_categories(self, g: int, bounds: Sequence[int]) -> np.ndarray:
        z2 = z2_from_changepoints([int(b) for b in bounds[1:-1]], self.num_sentences[g])
        return np.repeat(z2, [len(s) for s in self.corpus.transcripts[g].sentences])

    # -- table bookkeeping ----------------------------------------------------

    def blocked_outside(self, g: int, token_lo: int, token_hi: int) -> set[int]:
        if not self.masked:
            return set()
        z1 = self.state.z1[g]
        outside = np.concatenate([z1[:token_lo], z1[token_hi:]])
        return set(int(t) for t in np.unique(outside))

    def _is_entry(self, z1: np.ndarray, i: int) -> bool:
        return i == 0 or z1[i] != z1[i - 1]

    def remove_span(self, g: int, token_lo: int, token_hi: int,
                    categories: np.ndarray) -> None:
        z1 = self.state.z1[g]
        words = self.tokens[g]
        for i in range(token_lo, token_hi):
            self.tables.remove_token(int(z1[i]), int(words[i]))
            if self._is_entry(z1, i):
                self.tables.remove_use(int(categories[i]), int(z1[i]))

    def add_span(self, g: int, token_lo: int, token_hi: int,
                 categories: np.ndarray) -> None:
        z1 = self.state.z1[g]
        words = self.tokens[g]
        for i in range(token_lo, token_hi):
            self.tables.add_token(int(z1[i]), int(words[i]))
            if self._is_entry(z1, i):
                self.tables.add_use(int(categories[i]), int(z1[i]))

    def refresh_blocked(self, g: int) -> None:
        self.state.blocked[g] = set(int(t) for t in np.unique(self.state.z1[g]))

    # -- phi updates ---------------------------------------------------------

    def refresh_phi(self) -> None:
        """Posterior-mean rows for every topic carrying counts; rows of unused
        topics (the standby story pool) keep their previous estimates."""
        estimate = estimate_phi(self.tables, self.params.beta)
        for k in range(estimate.num_topics):
            if estimate.active[k] and self.tables.topic_tokens.get(k, 0) > 0:
                self.phi_rows[k] = estimate.probs[k]
        self.sync_phi()

    def snapshot_phi(self) -> TopicMatrix:
        size = max(self.phi_rows, default=-1) + 1
        probs = np.full((size, self.corpus.vocab_size), 1.0 / self.corpus.vocab_size)
        category = np.zeros(size, dtype=np.int64)
        usage = np.zeros(size, dtype=np.int64)
        active = np.zeros(size, dtype=bool)
        for k, row in self.phi_rows.items():
            probs[k] = row
            category[k] = self.tables.category_of.get(k, 0)
            usage[k] = self.tables.topic_tokens.get(k, 0)
            active[k] = True
        return TopicMatrix(probs, category, usage, active, self.params.num_categories)

    # -- fresh-topic realization ----------------------------------------------

    def realize(self, assignment: np.ndarray, category_per_token: np.ndarray) -> np.ndarray:
        """Replace fresh-topic placeholders with newly allocated ids.

        Placeholders are keyed together with the token's category, since
        scoring walks restart placeholder numbering per category span.
        """
        realized = assignment.copy()
        mapping: dict[tuple[int, int], int] = {}
        for i, topic in enumerate(assignment):
            topic = int(topic)
            if topic <= _FRESH:
                key = (topic, int(category_per_token[i]))
                if key not in mapping:
                    new_id = self.tables.new_topic_id()
                    self.tables.assign_category(new_id, key[1])
                    mapping[key] = new_id
                realized[i] = mapping[key]
        return realized

    # -- segment walks ---------------------------------------------------------

    def walk_sample(self, g: int, category: int, token_lo: int, token_hi: int,
                    blocked: set[int]) -> np.ndarray:
        walk = _Walk(self, category, blocked)
        words = self.tokens[g]
        assignment = np.empty(token_hi - token_lo, dtype=np.int64)
        for i in range(token_lo, token_hi):
            assignment[i - token_lo] = walk.step_sample(
                int(words[i]), reset=(i == token_lo), rng=self.rng)
        return assignment

    def walk_score(self, g: int, spans: Sequence[_Span], fixed: np.ndarray,
                   moved: np.ndarray, blocked: set[int], token_lo: int,
                   moved_mode: str = "map",
                   rng: Optional[np.random.Generator] = None,
                   ) -> tuple[float, np.ndarray, float]:
        """Walk a multi-span extent: kept tokens are evaluated in place, moved
        tokens are completed greedily (``map``), drawn from the local
        conditional (``sample``), or evaluated too (``evaluate``).

        ``fixed``/``moved`` are extent-relative starting at ``token_lo``.
        Returns (extent log probability, completed assignment, log proposal
        probability of the moved tokens); an impossible configuration returns
        ``-inf`` in both log slots.
        """
        words = self.tokens[g]
        completed = fixed.copy()
        log_prob = 0.0
        moved_logq = 0.0
        shared_blocked = set(blocked)
        placeholder_base = _FRESH
        for span in spans:
            walk = _Walk(self, span.category, shared_blocked,
                         prev_topic=span.prev_topic,
                         placeholder_base=placeholder_base)
            for i in range(span.token_lo, span.token_hi):
                index = i - token_lo
                reset = span.reset and i == span.token_lo
                if moved[index]:
                    if moved_mode == "map":
                        topic = walk.step_map(int(words[i]), reset)
                    elif moved_mode == "sample":
                        topic = walk.step_sample(int(words[i]), reset, rng,
                                                 raise_on_dead_end=False)
                    else:
                        ok = walk.step_evaluate(int(completed[index]),
                                                int(words[i]), reset)
                        topic = int(completed[index]) if ok else None
                    if topic is None:
                        return -math.inf, completed, -math.inf
                    completed[index] = topic
                    moved_logq += walk.last_logq
                else:
                    ok = walk.step_evaluate(int(completed[index]), int(words[i]), reset)
                    if not ok:
                        return -math.inf, completed, -math.inf
            log_prob += walk.log_prob
            shared_blocked = walk.blocked
            placeholder_base -= len(walk.created)
        return log_prob, completed, moved_logq


# ---------------------------------------------------------------------------
# public operations


def initialize(
    corpus: GroupedCorpus,
    params: InferenceParams,
    topics: Optional[TopicMatrix] = None,
) -> LatentState:
    """Draw a starting state: Dirichlet segment sizes per transcript, then a
    left-to-right token walk guided by the provided topic estimates (or by
    the bare seating prior when none are given)."""
    rng = np.random.default_rng(params.seed)
    engine = _Engine(corpus, params, topics, rng)
    _initialize_engine(engine)
    return engine.state


def _initialize_engine(engine: _Engine) -> None:
    params = engine.params
    corpus = engine.corpus
    gamma = params.gamma_vector()
    z1_all, z2_all, cps_all, sizes_all, blocked_all = [], [], [], [], []
    for transcript in corpus.transcripts:
        if transcript.num_sentences < params.num_categories:
            raise InfeasibleError(
                f"transcript {transcript.id} has {transcript.num_sentences} sentences, "
                f"fewer than {params.num_categories} categories"
            )
        fractions = engine.rng.dirichlet(gamma)
        sizes = discretize_sizes(fractions, transcript.num_sentences)
        cps = changepoints_from_sizes(sizes)
        z2_all.append(z2_from_changepoints(cps, transcript.num_sentences))
        cps_all.append(cps)
        sizes_all.append(sizes)
        z1_all.append(np.empty(transcript.num_tokens, dtype=np.int64))
        blocked_all.append(set())
    engine.state = LatentState(z1_all, z2_all, cps_all, sizes_all, blocked_all,
                               params.seed)
    for g in range(corpus.num_transcripts):
        bounds = engine.segment_bounds(g)
        categories = engine.token_categories(g, bounds)
        blocked: set[int] = set()
        for category, lo, hi in engine.category_spans(g, bounds):
            token_lo, token_hi = engine.token_range(g, lo, hi)
            if token_hi == token_lo:
                continue
            assignment = engine.walk_sample(
                g, category if engine.masked else 1, token_lo, token_hi,
                blocked if engine.masked else set())
            assignment = engine.realize(assignment, categories[token_lo:token_hi])
            engine.state.z1[g][token_lo:token_hi] = assignment
            engine.add_span(g, token_lo, token_hi, categories)
            blocked |= set(int(t) for t in np.unique(assignment))
        engine.refresh_blocked(g)


def segment_log_likelihood(
    corpus: GroupedCorpus,
    state: LatentState,
    topics: TopicMatrix,
    params: InferenceParams,
    g: int,
    sentence_lo: int,
    sentence_hi: int,
) -> float:
    """Log emission plus log assignment mass of one contiguous sentence extent.

    The extent must stay within one category segment.  Conditioning follows
    the move semantics: the extent's own seating and word counts are removed
    before the walk, topics used elsewhere in the transcript stay blocked,
    and an extent starting mid-segment continues from the previous token's
    topic instead of resetting the sticky channel.
    """
    engine = _Engine(corpus, params, topics, np.random.default_rng(0))
    engine.state = state.copy()
    for h in range(corpus.num_transcripts):
        bounds = engine.segment_bounds(h)
        engine.add_span(h, 0, len(engine.tokens[h]), engine.token_categories(h, bounds))
    token_lo, token_hi = engine.token_range(g, sentence_lo, sentence_hi)
    if token_hi == token_lo:
        return 0.0
    bounds = engine.segment_bounds(g)
    categories = engine.token_categories(g, bounds)
    if np.unique(categories[token_lo:token_hi]).size != 1:
        raise ShapeError("extent crosses a category boundary")
    category = int(categories[token_lo])
    engine.remove_span(g, token_lo, token_hi, categories)
    blocked = engine.blocked_outside(g, token_lo, token_hi)
    reset = token_lo == 0 or categories[token_lo] != categories[token_lo - 1]
    prev = None if reset else int(state.z1[g][token_lo - 1])
    span = _Span(category, token_lo, token_hi, reset=reset, prev_topic=prev)
    fixed = state.z1[g][token_lo:token_hi].copy()
    moved = np.zeros(token_hi - token_lo, dtype=bool)
    log_prob, _, _ = engine.walk_score(g, [span], fixed, moved, blocked, token_lo)
    return log_prob


def _size_prior_terms(sizes: Sequence[int], total: int, gamma: np.ndarray,
                      slots: Sequence[int]) -> float:
    # only the candidate-dependent part of the Dirichlet log density
    return float(sum((gamma[s] - 1.0) * math.log(sizes[s] / total) for s in slots))


def _resample_changepoint(engine: _Engine, g: int, s: int) -> None:
    """Move changepoint s of transcript g (1-based, s < num_categories).

    Candidate positions between the neighbors are scored with the existing
    assignment plus a greedy completion for tokens changing segment; those
    scores act as the proposal over positions.  The committed completion is
    drawn from the per-token conditional walk, and the whole (position,
    completion) proposal is accepted by a Metropolis ratio so the move leaves
    the joint invariant instead of over-committing to greedy completions.
    """
    params = engine.params
    bounds = engine.segment_bounds(g)
    low, current, high = bounds[s - 1], bounds[s], bounds[s + 1]
    candidates = list(range(low + 1, high))
    if params.candidate_window is not None:
        candidates = [x for x in candidates
                      if abs(x - current) <= params.candidate_window]
    token_lo, token_hi = engine.token_range(g, low, high)
    categories_now = engine.token_categories(g, bounds)
    engine.remove_span(g, token_lo, token_hi, categories_now)
    blocked = engine.blocked_outside(g, token_lo, token_hi)
    gamma = params.gamma_vector()
    total_sentences = engine.num_sentences[g]
    current_cut = engine.token_start(g, current)
    z1_extent = engine.state.z1[g][token_lo:token_hi].copy()
    extent_len = token_hi - token_lo

    def extent_spans(cut: int) -> list[_Span]:
        spans = [_Span(s, token_lo, cut), _Span(s + 1, cut, token_hi)]
        return [span for span in spans if span.token_hi > span.token_lo]

    def size_terms(x: int) -> float:
        trial_sizes = list(engine.state.sizes[g])
        trial_sizes[s - 1] = x - low
        trial_sizes[s] = high - x
        return _size_prior_terms(trial_sizes, total_sentences, gamma, [s - 1, s])

    # candidate scores redraw the whole extent greedily, so they depend only
    # on the context outside the extent and stay symmetric across the move
    redraw_all = np.ones(extent_len, dtype=bool)
    scores = np.empty(len(candidates))
    for index, x in enumerate(candidates):
        cut = engine.token_start(g, x)
        log_prob, _, _ = engine.walk_score(
            g, extent_spans(cut), z1_extent, redraw_all, blocked, token_lo)
        scores[index] = log_prob + size_terms(x)

    log_select = scores - scores.max()
    log_select -= math.log(np.exp(log_select).sum())
    choice = int(engine.rng.choice(len(candidates), p=np.exp(log_select)))
    x = candidates[choice]
    current_index = candidates.index(current)

    accepted_assignment = z1_extent
    if x != current:
        cut = engine.token_start(g, x)
        moved_lo, moved_hi = sorted((cut, current_cut))
        mask = np.zeros(extent_len, dtype=bool)
        mask[moved_lo - token_lo:moved_hi - token_lo] = True
        pi_new, proposal, q_new = engine.walk_score(
            g, extent_spans(cut), z1_extent, mask, blocked, token_lo,
            moved_mode="sample", rng=engine.rng)
        pi_new += size_terms(x)
        pi_old, _, q_old = engine.walk_score(
            g, extent_spans(current_cut), z1_extent, mask, blocked, token_lo,
            moved_mode="evaluate")
        pi_old += size_terms(current)
        log_ratio = -math.inf
        if pi_new > -math.inf:
            log_ratio = (pi_new + log_select[current_index] + q_old) \
                - (pi_old + log_select[choice] + q_new)
        if math.log(engine.rng.random()) < log_ratio:
            accepted_assignment = proposal
            new_cps = engine.state.changepoints[g].copy()
            new_cps[s - 1] = x
            engine.state.changepoints[g] = new_cps
            engine.state.sizes[g] = sizes_from_changepoints(new_cps, total_sentences)
            engine.state.z2[g] = z2_from_changepoints(new_cps, total_sentences)

    categories_new = engine.token_categories(g, engine.segment_bounds(g))
    realized = engine.realize(accepted_assignment,
                              categories_new[token_lo:token_hi])
    engine.state.z1[g][token_lo:token_hi] = realized
    engine.add_span(g, token_lo, token_hi, categories_new)
    engine.refresh_blocked(g)


def _block_resample_segment(engine: _Engine, g: int, s: int) -> None:
    """Re-walk segment s of transcript g, drawing each token's topic from the
    product of its seating prior and emission.

    The forward walk is the proposal; a Metropolis ratio (the normalizer
    product of the new walk against the old path's) corrects the difference
    between per-token conditionals and the segment's exact block conditional.
    """
    bounds = engine.segment_bounds(g)
    lo, hi = bounds[s - 1], bounds[s]
    token_lo, token_hi = engine.token_range(g, lo, hi)
    if token_hi == token_lo:
        return
    categories = engine.token_categories(g, bounds)
    engine.remove_span(g, token_lo, token_hi, categories)
    blocked = engine.blocked_outside(g, token_lo, token_hi)
    span = _Span(s if engine.masked else 1, token_lo, token_hi)
    old = engine.state.z1[g][token_lo:token_hi].copy()
    everything = np.ones(token_hi - token_lo, dtype=bool)
    pi_old, _, q_old = engine.walk_score(
        g, [span], old, everything, blocked, token_lo, moved_mode="evaluate")
    pi_new, proposal, q_new = engine.walk_score(
        g, [span], old, everything, blocked, token_lo,
        moved_mode="sample", rng=engine.rng)
    accept = (pi_new > -math.inf
              and math.log(engine.rng.random()) < (pi_new + q_old) - (pi_old + q_new))
    if accept:
        realized = engine.realize(proposal, categories[token_lo:token_hi])
        engine.state.z1[g][token_lo:token_hi] = realized
    engine.add_span(g, token_lo, token_hi, categories)
    engine.refresh_blocked(g)


def run(
    corpus: GroupedCorpus,
    topics: Optional[TopicMatrix],
    params: InferenceParams,
) -> InferenceResult:
    """Full sampling run: initialize, then sweep changepoint moves, segment
    re-walks, and per-sweep topic re-estimation; collects the joint trace and
    post-burn-in changepoint counts."""
    rng = np.random.default_rng(params.seed)
    engine = _Engine(corpus, params, topics, rng)
    _initialize_engine(engine)
    if topics is None:
        engine.refresh_phi()
    trace: list[TraceEntry] = []
    counts = [[Counter() for _ in range(params.num_categories - 1)]
              for _ in range(corpus.num_transcripts)]
    kept = 0
    for iteration in range(params.iterations):
        for g in range(corpus.num_transcripts):
            for s in range(1, params.num_categories + 1):
                if s < params.num_categories:
                    _resample_changepoint(engine, g, s)
                _block_resample_segment(engine, g, s)
        if params.update_topics:
            engine.refresh_phi()
        joint = _joint_from_engine(engine)
        cps = tuple(tuple(int(c) for c in engine.state.changepoints[g])
                    for g in range(corpus.num_transcripts))
        trace.append(TraceEntry(iteration, joint, cps))
        if iteration >= params.burn_in:
            kept += 1
            for g in range(corpus.num_transcripts):
                for slot, position in enumerate(cps[g]):
                    counts[g][slot][position] += 1
        if params.stop_on_convergence and len(trace) > 5:
            previous = trace[-6].joint_log_likelihood
            change = abs(joint - previous) / max(1.0, abs(previous))
            if change < params.epsilon:
                break
    return InferenceResult(engine.state, engine.snapshot_phi(), trace,
                           counts, kept, params)


def baseline_markov(
    corpus: GroupedCorpus,
    topics: Optional[TopicMatrix],
    params: InferenceParams,
) -> list[list[int]]:
    """Sticky sequential baseline without masks or segment structure: each
    transcript is one unmasked block re-walked every sweep.  Returns level-1
    changepoints per transcript."""
    flat = InferenceParams(
        num_categories=1, alpha=params.alpha, beta=params.beta, gamma=1.0,
        rho=params.rho, iterations=params.iterations, burn_in=params.burn_in,
        seed=params.seed, allow_new_topics=params.allow_new_topics,
        update_topics=params.update_topics,
    )
    rng = np.random.default_rng(flat.seed)
    engine = _Engine(corpus, flat, topics, rng, masked=False)
    _initialize_engine(engine)
    if topics is None:
        engine.refresh_phi()
    for _ in range(flat.iterations):
        for g in range(corpus.num_transcripts):
            _block_resample_segment(engine, g, 1)
        if flat.update_topics:
            engine.refresh_phi()
    changepoints = []
    for g in range(corpus.num_transcripts):
        z1 = engine.state.z1[g]
        changepoints.append([int(i) for i in (np.flatnonzero(np.diff(z1) != 0) + 1)])
    return changepoints


def _joint_from_engine(engine: _Engine) -> float:
    return _joint_log_likelihood_core(
        engine.corpus, engine.state, engine.phi_rows,
        dict(engine.tables.category_of), engine.params, engine.masked)


def joint_log_likelihood(
    corpus: GroupedCorpus,
    state: LatentState,
    topics: TopicMatrix,
    params: InferenceParams,
) -> float:
    """Joint log density of state and data, up to assignment-independent
    constants: Dirichlet segment-size terms, seating and stickiness terms of
    the token walk, and emission terms under the topic estimates.  Additive
    over transcripts given the shared seating counts; finite for every valid
    state."""
    return _joint_log_likelihood_core(
        corpus, state, topics.rows_by_id(), topics.categories_by_id(), params, True)


def _joint_log_likelihood_core(
    corpus: GroupedCorpus,
    state: LatentState,
    phi_rows: dict[int, np.ndarray],
    category_of: dict[int, int],
    params: InferenceParams,
    masked: bool,
) -> float:
    gamma = params.gamma_vector()
    total = 0.0
    replay = _Engine(corpus, params, None, np.random.default_rng(0), masked=masked)
    replay.phi_rows = {k: np.asarray(v) for k, v in phi_rows.items()}
    replay.sync_phi()
    for topic in phi_rows:
        replay.tables.ensure_topic(topic)
    for topic, category in category_of.items():
        replay.tables.ensure_topic(topic)
        replay.tables.assign_category(topic, category)
    replay.state = state
    for g in range(corpus.num_transcripts):
        sizes = np.asarray(state.sizes[g], dtype=np.float64)
        if len(sizes) != params.num_categories:
            raise ShapeError(f"transcript {g} has {len(sizes)} segments, "
                             f"expected {params.num_categories}")
        if params.num_categories > 1:
            total += float(_dirichlet.logpdf(sizes / sizes.sum(), gamma))
        bounds = replay.segment_bounds(g)
        categories = replay.token_categories(g, bounds)
        blocked: set[int] = set()
        for category, lo, hi in replay.category_spans(g, bounds):
            token_lo, token_hi = replay.token_range(g, lo, hi)
            if token_hi == token_lo:
                continue
            fixed = state.z1[g][token_lo:token_hi].copy()
            moved = np.zeros(token_hi - token_lo, dtype=bool)
            span = _Span(category if masked else 1, token_lo, token_hi)
            log_prob, _, _ = replay.walk_score(
                g, [span], fixed, moved, blocked if masked else set(), token_lo)
            if log_prob == -math.inf:
                return -math.inf
            total += log_prob
            replay.add_span(g, token_lo, token_hi, categories)
            if masked:
                blocked |= set(int(t) for t in np.unique(fixed))
    return total
