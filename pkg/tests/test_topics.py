"""Count-table correctness against conjugate oracles, and topic initialization."""

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import beta as beta_dist

from hiseg.corpus import make_corpus
from hiseg.errors import ConfigError, RangeError
from hiseg.generative import GenerativeConfig, Mode, sample_news
from hiseg.topics import (
    CountTables,
    TopicMatrix,
    crp_topic_weights,
    estimate_phi,
    init_topics,
    load_topics,
    predictive_word_prob,
    save_topics,
)


def posterior_mean_by_quadrature(counts, beta, v):
    """E[theta_v | counts] via the 1-D marginal: theta_v ~ Beta(a_v, a_rest)."""
    a_v = counts[v] + beta
    a_rest = counts.sum() - counts[v] + (len(counts) - 1) * beta
    value, _ = integrate.quad(
        lambda x: x * beta_dist.pdf(x, a_v, a_rest), 0.0, 1.0, epsabs=1e-13)
    return value


def tables_with_counts(counts_by_topic, vocab_size, num_categories=1):
    tables = CountTables(vocab_size, num_categories)
    for topic, counts in counts_by_topic.items():
        tables.ensure_topic(topic)
        for word, count in enumerate(counts):
            for _ in range(int(count)):
                tables.add_token(topic, word)
    return tables


class TestPredictive:
    def test_empty_counts_symmetric(self):
        tables = CountTables(5, 1)
        for v in range(5):
            assert predictive_word_prob(tables, 0, v, 0.3) == pytest.approx(1 / 5)

    def test_hand_case(self):
        tables = tables_with_counts({0: [3, 0]}, vocab_size=2)
        assert predictive_word_prob(tables, 0, 0, 1.0) == pytest.approx(4 / 5)
        assert predictive_word_prob(tables, 0, 1, 1.0) == pytest.approx(1 / 5)

    def test_sums_to_one(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            vocab = int(rng.integers(2, 7))
            tables = tables_with_counts(
                {0: rng.integers(0, 6, size=vocab)}, vocab_size=vocab)
            total = sum(predictive_word_prob(tables, 0, v, 0.7) for v in range(vocab))
            assert total == pytest.approx(1.0, abs=1e-12)

    def test_matches_quadrature_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            vocab = int(rng.integers(2, 6))
            beta = float(rng.uniform(0.05, 3.0))
            counts = rng.integers(0, 8, size=vocab)
            tables = tables_with_counts({0: counts}, vocab_size=vocab)
            v = int(rng.integers(vocab))
            expected = posterior_mean_by_quadrature(counts.astype(float), beta, v)
            assert predictive_word_prob(tables, 0, v, beta) == pytest.approx(
                expected, abs=1e-10)

    def test_word_out_of_range(self):
        tables = CountTables(3, 1)
        with pytest.raises(RangeError):
            predictive_word_prob(tables, 0, 3, 1.0)


class TestEstimatePhi:
    def test_all_zero_counts_uniform(self):
        tables = CountTables(4, 1)
        tables.ensure_topic(0)
        matrix = estimate_phi(tables, 0.5)
        assert np.allclose(matrix.probs[0], 1 / 4)

    def test_hand_case(self):
        tables = tables_with_counts({0: [0, 0, 1]}, vocab_size=3)
        matrix = estimate_phi(tables, 1.0)
        assert np.allclose(matrix.probs[0], [1 / 4, 1 / 4, 1 / 2])

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            vocab = int(rng.integers(2, 8))
            tables = tables_with_counts(
                {k: rng.integers(0, 9, size=vocab) for k in range(3)},
                vocab_size=vocab)
            matrix = estimate_phi(tables, 0.2)
            assert np.allclose(matrix.probs.sum(axis=1), 1.0, atol=1e-9)

    def test_fixed_point_of_predictive(self):
        rng = np.random.default_rng(2)
        tables = tables_with_counts(
            {k: rng.integers(0, 9, size=5) for k in range(2)}, vocab_size=5)
        matrix = estimate_phi(tables, 0.8)
        for k in range(2):
            for v in range(5):
                assert matrix.probs[k][v] == pytest.approx(
                    predictive_word_prob(tables, k, v, 0.8), abs=1e-12)

    def test_matches_quadrature_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            vocab = int(rng.integers(2, 5))
            beta = float(rng.uniform(0.1, 2.0))
            counts = rng.integers(0, 7, size=vocab)
            tables = tables_with_counts({0: counts}, vocab_size=vocab)
            matrix = estimate_phi(tables, beta)
            v = int(rng.integers(vocab))
            expected = posterior_mean_by_quadrature(counts.astype(float), beta, v)
            assert matrix.probs[0][v] == pytest.approx(expected, abs=1e-10)


class TestIncrementDecrement:
    def test_add_remove_returns_exact_zero(self):
        rng = np.random.default_rng(5)
        tables = CountTables(6, 2)
        operations = []
        for _ in range(300):
            topic = int(rng.integers(3))
            word = int(rng.integers(6))
            tables.add_token(topic, word)
            operations.append((topic, word))
        for _ in range(50):
            category = int(rng.integers(1, 3))
            topic = int(rng.integers(3))
            tables.add_use(category, topic)
            operations.append((category, topic, "use"))
        rng.shuffle(operations)
        for op in operations:
            if len(op) == 3:
                tables.remove_use(op[0], op[1])
            else:
                tables.remove_token(op[0], op[1])
        assert tables.is_empty()
        assert tables.total_tokens() == 0

    def test_remove_absent_count_raises(self):
        tables = CountTables(3, 1)
        with pytest.raises(RangeError):
            tables.remove_token(0, 1)
        tables.add_token(0, 1)
        with pytest.raises(RangeError):
            tables.remove_token(0, 2)
        with pytest.raises(RangeError):
            tables.remove_use(1, 0)


class TestCrpWeights:
    def test_empty_category(self):
        tables = CountTables(4, 2)
        weights, new_weight = crp_topic_weights(tables, 1, set(), alpha=0.7)
        assert weights == {} and new_weight == pytest.approx(0.7)

    def test_mask_zeroes_topic(self):
        tables = CountTables(4, 1)
        for _ in range(2):
            tables.add_use(1, 10)
        tables.add_use(1, 11)
        weights, new_weight = crp_topic_weights(tables, 1, {10}, alpha=1.0)
        assert weights == {11: 1.0} and new_weight == 1.0

    def test_seating_probabilities(self):
        tables = CountTables(4, 1)
        for _ in range(2):
            tables.add_use(1, 0)
        tables.add_use(1, 1)
        weights, new_weight = crp_topic_weights(tables, 1, set(), alpha=1.0)
        total = sum(weights.values()) + new_weight
        assert weights[0] / total == pytest.approx(1 / 2)
        assert weights[1] / total == pytest.approx(1 / 4)
        assert new_weight / total == pytest.approx(1 / 4)

    def test_cross_category_topic_excluded(self):
        tables = CountTables(4, 2)
        tables.add_use(1, 5)
        tables.assign_category(5, 1)
        tables.add_use(2, 6)
        # topic 5 belongs to category 1; category 2 must not see it even if
        # cross-listed counts existed
        weights, _ = crp_topic_weights(tables, 2, set(), alpha=1.0)
        assert 5 not in weights and 6 in weights

    def test_never_positive_weight_for_masked(self):
        rng = np.random.default_rng(9)
        tables = CountTables(4, 3)
        for _ in range(100):
            tables.add_use(int(rng.integers(1, 4)), int(rng.integers(8)))
        blocked = {0, 3, 5}
        for category in (1, 2, 3):
            weights, _ = crp_topic_weights(tables, category, blocked, alpha=0.5)
            assert not blocked & set(weights)


class TestInitTopics:
    def test_identical_segments_merge(self):
        corpus = make_corpus(
            [[[0, 0, 1], [0, 1, 0]], [[0, 0, 1], [1, 0, 0]]], vocab_size=2)
        matrix = init_topics(corpus, [[3], [3]], alpha=0.1, beta=0.01,
                             iters=80, seed=0)
        assert matrix.num_topics == 1

    def test_zero_iters_one_topic_per_segment(self):
        corpus = make_corpus([[[0, 1], [2, 3]], [[1, 1], [3, 0]]], vocab_size=4)
        matrix = init_topics(corpus, [[2], [2]], iters=0, seed=0)
        assert matrix.num_topics == 4
        assert matrix.usage.tolist() == [1, 1, 1, 1]

    def test_empty_segments_rejected(self):
        corpus = make_corpus([[[0, 1]]], vocab_size=2)
        with pytest.raises(ConfigError):
            init_topics(make_corpus([[[]]], vocab_size=2), [[]])

    def test_recovers_well_separated_topics(self):
        # three topics with pairwise total variation above 0.9: each puts
        # 19/20 of its mass on its own disjoint third of the vocabulary
        vocab = 30
        rows = np.full((3, vocab), 0.05 / (vocab - 10))
        for t in range(3):
            rows[t, t * 10:(t + 1) * 10] = 0.95 / 10
        tv = 0.5 * np.abs(rows[0] - rows[1]).sum()
        assert tv >= 0.9
        rng = np.random.default_rng(13)
        truth_labels = rng.integers(0, 3, size=50)
        sentences = [[list(rng.choice(vocab, size=20, p=rows[t]))]
                     for t in truth_labels]
        corpus = make_corpus([[s[0]] for s in sentences], vocab_size=vocab)
        changepoints = [[] for _ in range(50)]  # one segment per transcript
        matrix = init_topics(corpus, changepoints, alpha=1.0, beta=0.1,
                             iters=60, seed=1)
        assert 3 <= matrix.num_topics <= 6
        log_phi = np.log(matrix.probs)
        learnt = []
        for s in sentences:
            counts = np.bincount(np.asarray(s[0]), minlength=vocab)
            learnt.append(int(np.argmax(log_phi @ counts)))
        assert _cluster_purity(learnt, truth_labels.tolist()) >= 0.9


def _cluster_purity(predicted, truth):
    from collections import Counter, defaultdict
    members = defaultdict(list)
    for p, t in zip(predicted, truth):
        members[p].append(t)
    pure = sum(Counter(ts).most_common(1)[0][1] for ts in members.values())
    return pure / len(truth)


class TestTopicFile:
    def test_roundtrip_lossless(self, tmp_path):
        rng = np.random.default_rng(4)
        probs = rng.dirichlet(np.full(7, 0.3), size=5)
        matrix = TopicMatrix(probs, np.asarray([1, 2, 0, 1, 3]),
                             np.asarray([4, 0, 2, 9, 1]),
                             np.ones(5, dtype=bool), num_categories=3)
        path = tmp_path / "test.topics"
        save_topics(matrix, path)
        loaded = load_topics(path)
        assert np.array_equal(loaded.probs, matrix.probs)  # exact, not approx
        assert np.array_equal(loaded.category, matrix.category)
        assert np.array_equal(loaded.usage, matrix.usage)
        assert loaded.num_categories == 3
