import numpy as np
import pytest

from consearch.oracle import (
    DatasetBuildError,
    HardVariant,
    LabeledDataset,
    LookupOracle,
    NkLandscape,
    SpaceTooLargeError,
    build_clustered_dataset,
    build_percentile_dataset,
    enumerate_space,
    enumerate_tokens,
    evaluate,
    pick_percentile_seed,
    random_pool,
)
from consearch.seqcore import Sequence, Vocabulary, hamming

DNA = Vocabulary.dna()


def seq(text: str) -> Sequence:
    return Sequence.from_string(text, DNA)


class TestLookupOracle:
    def test_direct_read(self):
        o = LookupOracle({seq("ACGTACGT"): 0.75}, DNA)
        assert evaluate(o, seq("ACGTACGT")) == 0.75

    def test_missing_without_default(self):
        o = LookupOracle({seq("AAAA"): 0.2}, DNA)
        with pytest.raises(KeyError):
            o.score(seq("CCCC"))

    def test_missing_with_default(self):
        o = LookupOracle({seq("AAAA"): 0.2}, DNA, default=0.0)
        assert o.score(seq("CCCC")) == 0.0

    def test_csv_roundtrip(self, tmp_path):
        path = tmp_path / "table.csv"
        path.write_text("sequence,score\nACGT,0.5\nTTTT,0.25\n")
        o = LookupOracle.from_csv(path, DNA)
        assert o.score(seq("ACGT")) == 0.5
        assert o.score(seq("TTTT")) == 0.25


class TestHardVariant:
    def test_below_threshold_zeroed(self):
        o = HardVariant(LookupOracle({seq("AAAA"): 0.25}, DNA), threshold=0.3)
        assert evaluate(o, seq("AAAA")) == 0.0

    def test_at_or_above_threshold_passes(self):
        o = HardVariant(LookupOracle({seq("AAAA"): 0.3, seq("CCCC"): 0.9}, DNA), threshold=0.3)
        assert o.score(seq("AAAA")) == 0.3
        assert o.score(seq("CCCC")) == 0.9

    def test_output_zero_or_above_threshold(self):
        inner = NkLandscape(length=6, vocab_size=4, k=2, seed=3)
        hard = HardVariant(inner, threshold=0.5)
        _, ys = enumerate_tokens(hard)
        assert np.all((ys == 0.0) | (ys >= 0.5))

    def test_idempotent_double_wrap(self):
        inner = NkLandscape(length=5, vocab_size=3, k=1, seed=4)
        once = HardVariant(inner, threshold=0.4)
        twice = HardVariant(once, threshold=0.4)
        _, y1 = enumerate_tokens(once)
        _, y2 = enumerate_tokens(twice)
        np.testing.assert_array_equal(y1, y2)


class TestNkLandscape:
    def test_deterministic_for_seed(self):
        a = NkLandscape(length=8, vocab_size=4, k=3, seed=11)
        b = NkLandscape(length=8, vocab_size=4, k=3, seed=11)
        rng = np.random.default_rng(0)
        tokens = rng.integers(0, 4, size=(64, 8))
        np.testing.assert_array_equal(a.score_tokens(tokens), b.score_tokens(tokens))

    def test_scores_in_unit_interval(self):
        o = NkLandscape(length=7, vocab_size=4, k=4, seed=5)
        rng = np.random.default_rng(1)
        ys = o.score_tokens(rng.integers(0, 4, size=(256, 7)))
        assert np.all(ys >= 0.0) and np.all(ys <= 1.0)

    def test_k0_equals_per_site_table_mean(self):
        o = NkLandscape(length=6, vocab_size=4, k=0, seed=9)
        rng = np.random.default_rng(2)
        tokens = rng.integers(0, 4, size=(32, 6))
        expected = np.array(
            [np.mean([o.tables[i, row[i]] for i in range(6)]) for row in tokens]
        )
        np.testing.assert_allclose(o.score_tokens(tokens), expected, atol=1e-12)

    def test_invalid_k(self):
        with pytest.raises(ValueError):
            NkLandscape(length=4, vocab_size=4, k=4, seed=0)


class TestEnumerateSpace:
    def test_row_count_dna8(self):
        o = NkLandscape(length=8, vocab_size=4, k=1, seed=0)
        count = sum(1 for _ in enumerate_space(o))
        assert count == 4**8

    def test_lexicographic_small(self):
        o = NkLandscape(length=3, vocab_size=2, k=0, seed=0)
        seqs = [s.to_string(o.vocab) for s, _ in enumerate_space(o)]
        assert seqs[0] == "AAA"
        assert seqs[-1] == "BBB"
        assert len(seqs) == 8
        assert seqs == sorted(seqs)

    def test_counts_match_for_random_configs(self):
        rng = np.random.default_rng(3)
        for _ in range(3):
            length = int(rng.integers(2, 5))
            v = int(rng.integers(2, 4))
            o = NkLandscape(length=length, vocab_size=v, k=0, seed=1)
            assert sum(1 for _ in enumerate_space(o)) == v**length

    def test_guard_on_large_space(self):
        o = NkLandscape(length=14, vocab_size=4, k=1, seed=0)
        with pytest.raises(SpaceTooLargeError):
            list(enumerate_space(o))

    def test_enumerate_tokens_agrees_with_stream(self):
        o = NkLandscape(length=4, vocab_size=3, k=2, seed=7)
        tokens, ys = enumerate_tokens(o)
        streamed = list(enumerate_space(o))
        assert tokens.shape == (81, 4)
        for row, y, (s, sy) in zip(tokens, ys, streamed):
            assert tuple(row) == s.tokens
            assert y == pytest.approx(sy)


class TestClusteredDataset:
    def setup_method(self):
        self.oracle = NkLandscape(length=8, vocab_size=4, k=2, seed=21)
        self.seed_seq = pick_percentile_seed(self.oracle, 70.0)

    def test_constraints_hold_exhaustively(self):
        rng = np.random.default_rng(0)
        ds = build_clustered_dataset(self.oracle, self.seed_seq, size=200, max_radius=3, rng=rng)
        assert len(ds) == 200
        seed_score = self.oracle.score(self.seed_seq)
        for s, y in ds:
            assert hamming(s, self.seed_seq) <= 3
            assert y <= seed_score
            assert y == pytest.approx(self.oracle.score(s))

    def test_unique_sequences(self):
        rng = np.random.default_rng(1)
        ds = build_clustered_dataset(self.oracle, self.seed_seq, size=150, max_radius=3, rng=rng)
        assert len(set(s for s, _ in ds)) == 150

    def test_globally_minimal_seed_fails(self):
        tokens, ys = enumerate_tokens(self.oracle)
        worst = Sequence.from_array(tokens[np.argmin(ys)])
        rng = np.random.default_rng(2)
        with pytest.raises(DatasetBuildError):
            build_clustered_dataset(self.oracle, worst, size=50, max_radius=2, rng=rng, max_attempts=20_000)


class TestPercentileDataset:
    def test_full_pool_at_100(self):
        o = NkLandscape(length=6, vocab_size=4, k=1, seed=2)
        pool = random_pool(o, 100, np.random.default_rng(0))
        ds = build_percentile_dataset(o, pool, 100.0)
        assert len(ds) == 100

    def test_decile_pool_keeps_bottom_half(self):
        vocab = Vocabulary.generic(10)
        table = {Sequence((i, 0, 0)): (i + 1) / 10.0 for i in range(10)}
        o = LookupOracle(table, vocab)
        pool = list(table.keys())
        ds = build_percentile_dataset(o, pool, 50.0)
        assert len(ds) == 5
        assert max(y for _, y in ds) == pytest.approx(0.5)

    def test_bad_percentile(self):
        o = NkLandscape(length=4, vocab_size=4, k=0, seed=0)
        pool = random_pool(o, 10, np.random.default_rng(1))
        with pytest.raises(ValueError):
            build_percentile_dataset(o, pool, 0.0)


class TestLabeledDataset:
    def test_rejects_duplicates(self):
        ds = LabeledDataset()
        ds.add(seq("ACGT"), 0.5, 0)
        with pytest.raises(ValueError):
            ds.add(seq("ACGT"), 0.5, 0)

    def test_rejects_decreasing_round(self):
        ds = LabeledDataset()
        ds.add(seq("ACGT"), 0.5, 1)
        with pytest.raises(ValueError):
            ds.add(seq("TTTT"), 0.5, 0)

    def test_csv_roundtrip_exact(self, tmp_path):
        ds = LabeledDataset()
        rng = np.random.default_rng(4)
        for i in range(20):
            ds.add(Sequence(tuple(rng.integers(0, 4, size=6))), float(rng.random()), 0)
        path = tmp_path / "snap.csv"
        ds.to_csv(path, DNA)
        back = LabeledDataset.from_csv(path, DNA)
        assert back.sequences == ds.sequences
        assert back.scores == ds.scores
        assert back.rounds == ds.rounds
