import numpy as np
import pytest

from consearch.oracle import LabeledDataset, NkLandscape
from consearch.proxy import (
    AcquisitionConfig,
    EnsembleProxy,
    ProxyConfig,
    acquire,
    acquire_values,
    one_hot_tokens,
)
from consearch.seqcore import Sequence, Vocabulary

DNA = Vocabulary.dna()


def dataset_from(tokens: np.ndarray, targets: np.ndarray) -> LabeledDataset:
    ds = LabeledDataset()
    for row, y in zip(tokens, targets):
        ds.add(Sequence.from_array(row), float(y), 0)
    return ds


def random_dataset(n: int, length: int, seed: int, target_fn=None) -> LabeledDataset:
    rng = np.random.default_rng(seed)
    ds = LabeledDataset()
    while len(ds) < n:
        seq = Sequence(tuple(rng.integers(0, 4, size=length)))
        if seq not in ds:
            y = target_fn(seq) if target_fn else float(rng.random())
            ds.add(seq, y, 0)
    return ds


FAST = ProxyConfig(hidden=32, learning_rate=1e-2, batch_size=32, max_updates=400, min_split_size=64)


class TestTraining:
    def test_constant_target_fits_to_small_mse(self):
        ds = random_dataset(16, 6, seed=0, target_fn=lambda s: 0.5)
        proxy = EnsembleProxy(DNA, 6, FAST, seed=1)
        report = proxy.train(ds)
        mu, _ = proxy.predict_tokens(ds.tokens_array())
        assert np.mean((mu - 0.5) ** 2) <= 1e-4
        assert report.rows[-1][2] <= 1e-4

    def test_memorization_loss_decreases_in_moving_average(self):
        ds = random_dataset(32, 6, seed=2)
        proxy = EnsembleProxy(DNA, 6, FAST, seed=3)
        report = proxy.train(ds)
        losses = np.array([r[2] for r in report.rows if r[0] == 0])
        window = 25
        ma = np.convolve(losses, np.ones(window) / window, mode="valid")
        drops = ma[::window]
        assert all(b <= a + 1e-6 for a, b in zip(drops, drops[1:]))
        assert ma[-1] < ma[0]

    def test_early_stopping_respects_budget(self):
        ds = random_dataset(64, 6, seed=4)
        cfg = ProxyConfig(hidden=16, learning_rate=1e-2, batch_size=16, max_updates=200, patience=3)
        proxy = EnsembleProxy(DNA, 6, cfg, seed=5)
        report = proxy.train(ds)
        per_member = {m: [r for r in report.rows if r[0] == m] for m in range(3)}
        for rows in per_member.values():
            assert 1 <= len(rows) <= 200

    def test_retrain_with_same_seed_reproduces_parameters(self):
        ds = random_dataset(40, 5, seed=6)
        first = EnsembleProxy(DNA, 5, FAST, seed=7)
        first.train(ds)
        second = EnsembleProxy(DNA, 5, FAST, seed=7)
        second.train(ds)
        for a, b in zip(first.members, second.members):
            for pa, pb in zip(a.parameters(), b.parameters()):
                np.testing.assert_array_equal(pa.data, pb.data)

    def test_report_csv_schema(self, tmp_path):
        ds = random_dataset(24, 4, seed=8)
        cfg = ProxyConfig(hidden=8, learning_rate=1e-2, batch_size=8, max_updates=20, min_split_size=64)
        proxy = EnsembleProxy(DNA, 4, cfg, seed=9)
        report = proxy.train(ds)
        path = tmp_path / "report.csv"
        report.to_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "member,step,train_mse,val_mse"

    def test_rank_reweighted_flag_trains(self):
        ds = random_dataset(30, 4, seed=10)
        cfg = ProxyConfig(hidden=8, learning_rate=1e-2, batch_size=8, max_updates=30,
                          min_split_size=64, rank_reweighted=True)
        proxy = EnsembleProxy(DNA, 4, cfg, seed=11)
        proxy.train(ds)
        assert proxy.trained

    def test_cnn_architecture_trains(self):
        ds = random_dataset(24, 6, seed=12, target_fn=lambda s: 0.25)
        cfg = ProxyConfig(arch="cnn", conv_channels=8, conv_width=3, learning_rate=1e-2,
                          batch_size=8, max_updates=300, min_split_size=64)
        proxy = EnsembleProxy(DNA, 6, cfg, seed=13)
        proxy.train(ds)
        mu, _ = proxy.predict_tokens(ds.tokens_array())
        assert np.mean((mu - 0.25) ** 2) <= 1e-3


class _FixedMember:
    def __init__(self, value: float):
        self.value = value

    def forward_np(self, encoded: np.ndarray) -> np.ndarray:
        return np.full(encoded.shape[0], self.value)


class TestPrediction:
    def test_untrained_proxy_rejected(self):
        proxy = EnsembleProxy(DNA, 4, FAST, seed=0)
        with pytest.raises(RuntimeError):
            proxy.predict(Sequence((0, 1, 2, 3)))

    def test_identical_members_give_zero_sigma(self):
        proxy = EnsembleProxy(DNA, 4, FAST, seed=1)
        proxy.members = [_FixedMember(0.7)] * 3
        proxy.trained = True
        mu, sigma = proxy.predict(Sequence((0, 1, 2, 3)))
        assert mu == pytest.approx(0.7)
        assert sigma == 0.0

    def test_population_std_arithmetic(self):
        proxy = EnsembleProxy(DNA, 4, FAST, seed=2)
        proxy.members = [_FixedMember(v) for v in (1.0, 2.0, 3.0)]
        proxy.trained = True
        mu, sigma = proxy.predict(Sequence((0, 0, 0, 0)))
        assert mu == pytest.approx(2.0)
        assert sigma == pytest.approx(np.sqrt(2.0 / 3.0))

    def test_perfect_member_has_zero_mse(self):
        oracle = NkLandscape(length=5, vocab_size=4, k=1, seed=3)
        ds = random_dataset(25, 5, seed=4, target_fn=lambda s: oracle.score(s))

        class OracleMember:
            def forward_np(self, encoded):
                tokens = encoded.argmax(axis=-1)
                return oracle.score_tokens(tokens)

        proxy = EnsembleProxy(oracle.vocab, 5, FAST, seed=5)
        proxy.members[0] = OracleMember()
        proxy.trained = True
        preds = proxy.member_predictions(ds.tokens_array())
        assert np.mean((preds[0] - ds.scores_array()) ** 2) == 0.0

    def test_stats_match_independent_recomputation(self):
        ds = random_dataset(100, 5, seed=6)
        proxy = EnsembleProxy(DNA, 5, FAST, seed=7)
        proxy.train(ds)
        tokens = ds.tokens_array()
        mu, sigma = proxy.predict_tokens(tokens)
        raw = proxy.member_predictions(tokens)
        np.testing.assert_allclose(mu, np.mean(raw, axis=0), atol=1e-12)
        np.testing.assert_allclose(sigma, np.std(raw, axis=0, ddof=0), atol=1e-12)


class TestAcquisition:
    def test_kappa_zero_equals_mean(self):
        out = acquire_values(np.array([0.5]), np.array([0.3]), AcquisitionConfig(kind="ucb", kappa=0.0))
        assert out[0] == pytest.approx(0.5)

    def test_ucb_arithmetic(self):
        out = acquire_values(np.array([0.5]), np.array([0.1]), AcquisitionConfig(kind="ucb", kappa=1.0))
        assert out[0] == pytest.approx(0.6)

    def test_floor_clamp(self):
        out = acquire_values(np.array([-1.0]), np.array([0.0]), AcquisitionConfig(kind="raw"))
        assert out[0] == 1e-6

    def test_monotone_in_kappa(self):
        mu, sigma = np.array([0.2]), np.array([0.05])
        values = [
            acquire_values(mu, sigma, AcquisitionConfig(kind="ucb", kappa=k))[0]
            for k in np.linspace(0.0, 5.0, 20)
        ]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_acquire_on_sequence(self):
        proxy = EnsembleProxy(DNA, 4, FAST, seed=8)
        proxy.members = [_FixedMember(v) for v in (1.0, 2.0, 3.0)]
        proxy.trained = True
        got = acquire(proxy, Sequence((0, 1, 2, 3)), AcquisitionConfig(kind="ucb", kappa=1.0))
        assert got == pytest.approx(2.0 + np.sqrt(2.0 / 3.0))


class TestEncoding:
    def test_one_hot_layout(self):
        out = one_hot_tokens(np.array([[0, 3]]), 4)
        assert out.shape == (1, 2, 4)
        np.testing.assert_array_equal(out[0, 0], [1, 0, 0, 0])
        np.testing.assert_array_equal(out[0, 1], [0, 0, 0, 1])
