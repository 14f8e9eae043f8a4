"""Ensemble surrogate: regression on oracle labels plus an uncertainty signal.

A fixed number of independently initialized regressors are trained on
the same data with member-specific shuffling. The prediction is the
member mean; the spread across members serves as the uncertainty
estimate feeding both the acquisition bonus and the adaptive masking
rate.

Members hold disjoint parameters, so they could be fitted on separate
threads; prediction after training is read-only and thread-safe.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ndgrad as ng
from .deltacs import rank_weights
from .ndgrad import Adam, Conv1d, Linear, Tensor
from .oracle import LabeledDataset
from .seqcore import Sequence, Vocabulary, seqs_to_array


@dataclass(frozen=True)
class AcquisitionConfig:
    """Reward rule applied to proxy predictions."""

    kind: str = "ucb"  # "raw" | "ucb"
    kappa: float = 0.1
    floor: float = 1e-6

    def __post_init__(self) -> None:
        if self.kind not in ("raw", "ucb"):
            raise ValueError(f"unknown acquisition kind {self.kind!r}")
        if self.kappa < 0.0:
            raise ValueError(f"kappa must be nonnegative, got {self.kappa}")
        if self.floor <= 0.0:
            raise ValueError(f"reward floor must be positive, got {self.floor}")


@dataclass(frozen=True)
class ProxyConfig:
    arch: str = "mlp"  # "mlp" | "cnn"
    hidden: int = 256
    conv_channels: int = 64
    conv_width: int = 4
    members: int = 3
    learning_rate: float = 1e-5
    batch_size: int = 256
    max_updates: int = 3000
    patience: int = 5
    val_fraction: float = 0.1
    min_split_size: int = 20
    rank_reweighted: bool = False

    def __post_init__(self) -> None:
        if self.arch not in ("mlp", "cnn"):
            raise ValueError(f"unknown proxy architecture {self.arch!r}")
        if self.members < 1:
            raise ValueError("ensemble needs at least one member")


def one_hot_tokens(tokens: np.ndarray, vocab_size: int) -> np.ndarray:
    """(N, L) ids -> (N, L, V) float64 one-hot."""
    out = np.zeros(tokens.shape + (vocab_size,), dtype=np.float64)
    np.put_along_axis(out, tokens[..., None], 1.0, axis=-1)
    return out


class _MlpRegressor:
    """One-hot input flattened through two dense hidden layers."""

    def __init__(self, length: int, vocab_size: int, hidden: int, rng: np.random.Generator):
        self.vocab_size = vocab_size
        n_in = length * vocab_size
        self.lin1 = Linear(n_in, hidden, rng, name="lin1")
        self.lin2 = Linear(hidden, hidden, rng, name="lin2")
        self.out = Linear(hidden, 1, rng, name="out")

    def parameters(self):
        return self.lin1.parameters() + self.lin2.parameters() + self.out.parameters()

    def forward(self, encoded: np.ndarray) -> Tensor:
        x = Tensor(encoded.reshape(encoded.shape[0], -1))
        h = ng.relu(self.lin1(x))
        h = ng.relu(self.lin2(h))
        return self.out(h)

    def forward_np(self, encoded: np.ndarray) -> np.ndarray:
        x = encoded.reshape(encoded.shape[0], -1)
        h = np.maximum(self.lin1.forward_np(x), 0.0)
        h = np.maximum(self.lin2.forward_np(h), 0.0)
        return self.out.forward_np(h)[:, 0]


class _CnnRegressor:
    """Single 1-D convolution over positions, pooled into a dense head."""

    def __init__(self, length: int, vocab_size: int, channels: int, width: int, rng: np.random.Generator):
        self.vocab_size = vocab_size
        self.conv = Conv1d(vocab_size, channels, min(width, length), rng, name="conv")
        self.out = Linear(channels, 1, rng, name="out")

    def parameters(self):
        return self.conv.parameters() + self.out.parameters()

    def forward(self, encoded: np.ndarray) -> Tensor:
        h = ng.relu(self.conv(Tensor(encoded)))
        pooled = ng.mean(h, axis=1)
        return self.out(pooled)

    def forward_np(self, encoded: np.ndarray) -> np.ndarray:
        h = np.maximum(self.conv.forward_np(encoded), 0.0)
        return self.out.forward_np(h.mean(axis=1))[:, 0]


@dataclass
class ProxyTrainReport:
    """Per-update training log; val_mse is filled at evaluation points."""

    rows: list[tuple[int, int, float, float | None]] = field(default_factory=list)
    final_val_mse: list[float] = field(default_factory=list)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["member", "step", "train_mse", "val_mse"])
            for member, step, train_mse, val_mse in self.rows:
                writer.writerow(
                    [member, step, repr(train_mse), "" if val_mse is None else repr(val_mse)]
                )


class EnsembleProxy:
    """M independent regressors sharing one architecture."""

    def __init__(self, vocab: Vocabulary, length: int, config: ProxyConfig = ProxyConfig(), seed: int = 0):
        self.vocab = vocab
        self.length = length
        self.config = config
        self.seed = seed
        self.members = [self._build_member(i) for i in range(config.members)]
        self.trained = False

    def _build_member(self, index: int):
        rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(index,)))
        if self.config.arch == "mlp":
            return _MlpRegressor(self.length, self.vocab.size, self.config.hidden, rng)
        return _CnnRegressor(
            self.length, self.vocab.size, self.config.conv_channels, self.config.conv_width, rng
        )

    def _encode(self, tokens: np.ndarray) -> np.ndarray:
        return one_hot_tokens(tokens, self.vocab.size)

    def train(self, dataset: LabeledDataset) -> ProxyTrainReport:
        """Minibatch MSE with early stopping on a held-out split.

        Small datasets skip the split and run the full update budget.
        """
        cfg = self.config
        tokens = dataset.tokens_array()
        targets = dataset.scores_array()
        encoded = self._encode(tokens)
        n = len(dataset)
        if n == 0:
            raise ValueError("cannot train on an empty dataset")

        split_rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(10_000,)))
        use_split = n >= cfg.min_split_size
        if use_split:
            perm = split_rng.permutation(n)
            n_val = max(1, int(round(n * cfg.val_fraction)))
            val_idx, train_idx = perm[n - n_val :], perm[: n - n_val]
        else:
            val_idx, train_idx = np.empty(0, dtype=np.int64), np.arange(n)

        weights = None
        if cfg.rank_reweighted:
            weights = rank_weights(targets[train_idx])

        report = ProxyTrainReport()
        for m_idx, member in enumerate(self.members):
            rng = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(m_idx, 1)))
            opt = Adam([(member.parameters(), cfg.learning_rate)])
            best_val = np.inf
            stale = 0
            updates = 0
            batches_per_epoch = max(1, -(-train_idx.size // cfg.batch_size))
            while updates < cfg.max_updates:
                if weights is None:
                    order = rng.permutation(train_idx)
                    epoch_batches = [
                        order[s : s + cfg.batch_size] for s in range(0, order.size, cfg.batch_size)
                    ]
                else:
                    epoch_batches = [
                        train_idx[rng.choice(train_idx.size, size=min(cfg.batch_size, train_idx.size), p=weights)]
                        for _ in range(batches_per_epoch)
                    ]
                for batch in epoch_batches:
                    if updates >= cfg.max_updates:
                        break
                    pred = member.forward(encoded[batch])
                    resid = ng.sub(pred, Tensor(targets[batch][:, None]))
                    loss = ng.mean(ng.square(resid))
                    opt.zero_grad()
                    ng.backward(loss)
                    opt.step()
                    updates += 1
                    report.rows.append((m_idx, updates, float(loss.data), None))
                if use_split:
                    val_pred = member.forward_np(encoded[val_idx])
                    val_mse = float(np.mean((val_pred - targets[val_idx]) ** 2))
                    member_rows = report.rows[-1]
                    report.rows[-1] = member_rows[:3] + (val_mse,)
                    if val_mse < best_val - 1e-12:
                        best_val = val_mse
                        stale = 0
                    else:
                        stale += 1
                        if stale >= cfg.patience:
                            break
            report.final_val_mse.append(best_val if use_split else float("nan"))
        self.trained = True
        return report

    def member_predictions(self, tokens: np.ndarray) -> np.ndarray:
        """(M, N) raw member outputs."""
        if not self.trained:
            raise RuntimeError("proxy has not been trained")
        encoded = self._encode(tokens)
        return np.stack([m.forward_np(encoded) for m in self.members])

    def predict_tokens(self, tokens: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Mean and population standard deviation across members.

        Computed relative to the first member so identical members give
        exactly zero spread.
        """
        preds = self.member_predictions(tokens)
        shifted = preds - preds[0]
        return preds[0] + shifted.mean(axis=0), shifted.std(axis=0)

    def predict(self, x: Sequence) -> tuple[float, float]:
        mu, sigma = self.predict_tokens(np.asarray([x.tokens], dtype=np.int64))
        return float(mu[0]), float(sigma[0])


def acquire_values(mu: np.ndarray, sigma: np.ndarray, cfg: AcquisitionConfig) -> np.ndarray:
    """Reward from prediction statistics, clamped below at the floor."""
    if cfg.kind == "raw":
        raw = mu
    else:
        raw = mu + cfg.kappa * sigma
    return np.maximum(raw, cfg.floor)


def acquire_tokens(proxy: EnsembleProxy, tokens: np.ndarray, cfg: AcquisitionConfig) -> np.ndarray:
    mu, sigma = proxy.predict_tokens(tokens)
    return acquire_values(mu, sigma, cfg)


def acquire(proxy: EnsembleProxy, x: Sequence, cfg: AcquisitionConfig) -> float:
    """Reward for one sequence under the configured acquisition rule."""
    return float(acquire_tokens(proxy, np.asarray([x.tokens], dtype=np.int64), cfg)[0])


def acquire_batch(proxy: EnsembleProxy, seqs: list[Sequence], cfg: AcquisitionConfig) -> np.ndarray:
    return acquire_tokens(proxy, seqs_to_array(seqs), cfg)
