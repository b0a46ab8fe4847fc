"""Corpus data model, state invariants, and file round-trips."""

import numpy as np
import pytest

from hiseg.corpus import (
    GoldSegmentation,
    GroupedCorpus,
    LatentState,
    Transcript,
    changepoints_from_sizes,
    changepoints_from_z2,
    load_corpus,
    load_gold,
    load_state,
    make_corpus,
    save_corpus,
    save_gold,
    save_state,
    segments_from_state,
    sizes_from_changepoints,
    validate_state,
    z2_from_changepoints,
)
from hiseg.errors import RangeError, ShapeError


def small_corpus():
    return make_corpus([[[0, 1], [1, 2]]], vocab_size=3)


def state_for(corpus, z1_lists, z2_lists):
    z1 = [np.asarray(z, dtype=np.int64) for z in z1_lists]
    z2 = [np.asarray(z, dtype=np.int64) for z in z2_lists]
    cps = [changepoints_from_z2(z) for z in z2]
    sizes = [sizes_from_changepoints(c, len(z)) for c, z in zip(cps, z2)]
    blocked = [set(int(t) for t in np.unique(z)) for z in z1]
    return LatentState(z1, z2, cps, sizes, blocked)


class TestConstruction:
    def test_direct_construction(self):
        corpus = small_corpus()
        assert corpus.num_tokens == 4
        transcript = corpus.transcripts[0]
        tokens = transcript.tokens()
        # prev of token 2 (first of sentence 1) is token 1, across the boundary
        assert tokens[2] == 1 and tokens[1] == 1
        assert transcript.sentence_of_token().tolist() == [0, 0, 1, 1]
        assert transcript.sentence_token_start().tolist() == [0, 2]

    def test_token_out_of_range(self):
        with pytest.raises(RangeError):
            make_corpus([[[0, 7]]], vocab_size=3)

    def test_prev_next_bijection(self):
        transcript = Transcript(0, ((0, 1, 2), (0, 1), (2,)))
        n = transcript.num_tokens
        interior = list(range(1, n))
        for i in interior:
            assert (i - 1) + 1 == i  # prev/next are plain order neighbors


class TestConversions:
    def test_z2_changepoints_sizes_bijection(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            k = int(rng.integers(1, 6))
            total = int(rng.integers(k, 30))
            cuts = np.sort(rng.choice(np.arange(1, total), size=k - 1, replace=False))
            sizes = sizes_from_changepoints(cuts, total)
            assert sizes.sum() == total and np.all(sizes >= 1)
            assert changepoints_from_sizes(sizes).tolist() == cuts.tolist()
            z2 = z2_from_changepoints(cuts, total)
            assert changepoints_from_z2(z2).tolist() == cuts.tolist()
            assert np.array_equal(np.bincount(z2)[1:], sizes)

    def test_empty_segment_rejected(self):
        with pytest.raises(ShapeError):
            sizes_from_changepoints([2, 2], 5)


class TestSegmentsFromState:
    def test_level1_definition(self):
        corpus = make_corpus([[[0, 0, 0], [0, 0]]], vocab_size=1)
        state = state_for(corpus, [[5, 5, 5, 9, 9]], [[1, 2]])
        level1, level2 = segments_from_state(state, corpus)
        assert level1 == [[3]]
        assert level2 == [[1]]

    def test_level2_definition(self):
        corpus = make_corpus([[[0]] * 5], vocab_size=1)
        state = state_for(corpus, [[1, 1, 1, 1, 1]], [[1, 1, 2, 2, 2]])
        _, level2 = segments_from_state(state, corpus)
        assert level2 == [[2]]

    def test_constant_z1(self):
        corpus = make_corpus([[[0, 0], [0]]], vocab_size=1)
        state = state_for(corpus, [[4, 4, 4]], [[1, 1]])
        level1, _ = segments_from_state(state, corpus)
        assert level1 == [[]]

    def test_shape_mismatch(self):
        corpus = small_corpus()
        state = state_for(corpus, [[1, 1]], [[1, 1]])
        with pytest.raises(ShapeError):
            segments_from_state(state, corpus)


class TestValidateState:
    def test_valid_state(self):
        corpus = make_corpus([[[0, 1], [1, 2], [2, 0]]], vocab_size=3)
        state = state_for(corpus, [[3, 3, 4, 4, 5, 5]], [[1, 1, 2]])
        categories = {3: 1, 4: 1, 5: 2}
        assert validate_state(state, corpus, 2, categories) == []

    def test_non_contiguous_topic(self):
        corpus = make_corpus([[[0, 1], [1, 2]]], vocab_size=3)
        state = state_for(corpus, [[3, 3, 4, 3]], [[1, 2]])
        violations = validate_state(state, corpus, 2)
        assert any("non-contiguous" in v for v in violations)

    def test_decreasing_z2(self):
        corpus = make_corpus([[[0, 1], [1, 2]]], vocab_size=3)
        state = state_for(corpus, [[3, 3, 4, 4]], [[1, 1]])
        state.z2[0] = np.asarray([2, 1])
        violations = validate_state(state, corpus, 2)
        assert any("nondecreasing" in v for v in violations)

    def test_missing_category(self):
        corpus = make_corpus([[[0, 1], [1, 2]]], vocab_size=3)
        state = state_for(corpus, [[3, 3, 4, 4]], [[1, 1]])
        violations = validate_state(state, corpus, 2)
        assert any("expected 1..2" in v for v in violations)

    def test_category_mismatch(self):
        corpus = make_corpus([[[0, 1], [1, 2]]], vocab_size=3)
        state = state_for(corpus, [[3, 3, 4, 4]], [[1, 2]])
        violations = validate_state(state, corpus, 2, {3: 1, 4: 1})
        assert any("category" in v for v in violations)

    def test_contiguity_check_optional(self):
        corpus = make_corpus([[[0, 1], [1, 2]]], vocab_size=3)
        state = state_for(corpus, [[3, 4, 3, 4]], [[1, 2]])
        with_check = validate_state(state, corpus, 2)
        without = validate_state(state, corpus, 2, require_contiguous_topics=False)
        assert with_check and not without


class TestFileRoundTrips:
    def test_corpus_roundtrip(self, tmp_path):
        corpus = make_corpus(
            [[[0, 1], [1, 2]], [[2, 2, 0]]], vocab_size=3, vocab=["a", "b", "c"]
        )
        path = tmp_path / "corpus.jsonl"
        save_corpus(corpus, path)
        loaded = load_corpus(path)
        assert loaded == corpus
        # byte-identical canonical serialization
        save_corpus(loaded, tmp_path / "again.jsonl")
        assert (tmp_path / "again.jsonl").read_bytes() == path.read_bytes()

    def test_corpus_range_error(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"id": 0, "sentences": [[7]]}\n')
        (tmp_path / "corpus.vocab").write_text("a\nb\nc\n")
        with pytest.raises(RangeError):
            load_corpus(path)

    def test_corpus_format_error(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"id": 0}\n')
        (tmp_path / "corpus.vocab").write_text("a\n")
        from hiseg.errors import FormatError
        with pytest.raises(FormatError):
            load_corpus(path)

    def test_gold_roundtrip(self, tmp_path):
        gold = GoldSegmentation(((3, 8), ()), ((1,), (2,)), ((1, 2), (1, 2)))
        path = tmp_path / "gold.jsonl"
        save_gold(gold, path)
        assert load_gold(path) == gold

    def test_state_roundtrip(self, tmp_path):
        corpus = make_corpus([[[0, 1], [1, 2], [2, 0]]], vocab_size=3)
        state = state_for(corpus, [[3, 3, 4, 4, 5, 5]], [[1, 1, 2]])
        path = tmp_path / "state.jsonl"
        save_state(state, corpus, path)
        loaded = load_state(path, corpus)
        assert np.array_equal(loaded.z1[0], state.z1[0])
        assert np.array_equal(loaded.z2[0], state.z2[0])
        assert np.array_equal(loaded.changepoints[0], state.changepoints[0])
