"""Autoregressive sequence policy and its flow-matching training objectives.

The policy builds sequences token by token with a stacked recurrent
network; the probability of a finished sequence factorizes over the
per-step softmax choices. Because prefixes extend in exactly one way,
each sequence corresponds to a single trajectory, and training can score
arbitrary sequences (sampled or replayed from a dataset) directly.

Two objectives are provided: the squared log-ratio loss with a learned
log-partition scalar, and a partition-free variant that penalizes the
batch variance of the log reward-to-probability ratio.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence as PySeq

import numpy as np

from . import ndgrad as ng
from .deltacs import RankPrior
from .ndgrad import Adam, Embedding, GRUCell, Linear, Tensor
from .oracle import LabeledDataset
from .proxy import AcquisitionConfig, EnsembleProxy, acquire_tokens
from .seqcore import Sequence, Vocabulary, seqs_to_array


@dataclass(frozen=True)
class Trajectory:
    """A finished left-to-right build with its per-step log-probabilities."""

    sequence: Sequence
    step_logprobs: tuple[float, ...]
    logprob: float

    def __post_init__(self) -> None:
        if len(self.step_logprobs) != len(self.sequence):
            raise ValueError("trajectory needs one step per sequence position")
        if abs(sum(self.step_logprobs) - self.logprob) > 1e-9:
            raise ValueError("trajectory log-probability does not match its steps")


class PolicyModel:
    """Token embedding, stacked recurrent core, and a logits head.

    Also owns the learned log-partition scalar, which trains under its
    own learning rate.
    """

    def __init__(
        self,
        vocab: Vocabulary,
        length: int,
        emb_dim: int = 64,
        hidden: int = 512,
        layers: int = 2,
        seed: int = 0,
    ):
        self.vocab = vocab
        self.length = length
        self.hidden = hidden
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
        # one extra embedding row acts as the start-of-sequence input
        self.start_id = vocab.size
        self.embedding = Embedding(vocab.size + 1, emb_dim, rng, name="embed")
        self.cells = [
            GRUCell(emb_dim if i == 0 else hidden, hidden, rng, name=f"gru{i}")
            for i in range(layers)
        ]
        self.head = Linear(hidden, vocab.size, rng, name="head")
        self.logz = Tensor(0.0, requires_grad=True)

    # -- parameters ---------------------------------------------------------

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        named = list(self.embedding.named_parameters())
        for cell in self.cells:
            named.extend(cell.named_parameters())
        named.extend(self.head.named_parameters())
        named.append(("logz", self.logz))
        return named

    def policy_parameters(self) -> list[Tensor]:
        return [t for name, t in self.named_parameters() if name != "logz"]

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.named_parameters()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, t in self.named_parameters():
            t.data = np.array(arrays[name], dtype=np.float64, copy=True).reshape(t.data.shape)

    def save(self, path: str | Path) -> None:
        ng.save_arrays(path, self.state_arrays())

    def load(self, path: str | Path) -> None:
        self.load_state_arrays(ng.load_arrays(path))

    # -- sampling (plain numpy, no graph) ------------------------------------

    def _step_np(self, prev_ids: np.ndarray, states: list[np.ndarray]) -> np.ndarray:
        x = self.embedding.forward_np(prev_ids)
        for i, cell in enumerate(self.cells):
            states[i] = cell.forward_np(x, states[i])
            x = states[i]
        return self.head.forward_np(x)

    def rollout(
        self,
        n: int | None = None,
        forced: np.ndarray | None = None,
        rng: np.random.Generator | None = None,
        temperature: float = 1.0,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Generate sequences, honoring forced slots where given.

        `forced` is (B, L) with negative entries marking positions to
        sample; a None row count defaults to the forced batch size.
        Returns (tokens, per-step log-probabilities). Recorded
        log-probabilities are always the model's own (temperature 1), so
        they re-score exactly via log_prob.
        """
        if forced is None:
            if n is None:
                raise ValueError("need n or forced")
            forced = np.full((n, self.length), -1, dtype=np.int64)
        else:
            forced = np.asarray(forced, dtype=np.int64)
            if forced.ndim != 2 or forced.shape[1] != self.length:
                raise ValueError(f"forced must be (B, {self.length}), got {forced.shape}")
        if temperature < 0.0:
            raise ValueError("temperature must be nonnegative")
        batch = forced.shape[0]
        needs_rng = bool((forced < 0).any()) and temperature > 0.0
        if needs_rng and rng is None:
            raise ValueError("sampling requires an rng")

        states = [np.zeros((batch, self.hidden)) for _ in self.cells]
        prev = np.full(batch, self.start_id, dtype=np.int64)
        tokens = np.empty((batch, self.length), dtype=np.int64)
        logps = np.empty((batch, self.length), dtype=np.float64)
        for t in range(self.length):
            logits = self._step_np(prev, states)
            logp = ng.log_softmax_np(logits)
            free = forced[:, t] < 0
            if temperature == 0.0:
                chosen = logits.argmax(axis=1)
            else:
                if temperature == 1.0:
                    probs = np.exp(logp)
                else:
                    probs = np.exp(ng.log_softmax_np(logits / temperature))
                cdf = probs.cumsum(axis=1)
                cdf[:, -1] = 1.0
                u = rng.random(batch) if needs_rng else np.zeros(batch)
                chosen = (u[:, None] < cdf).argmax(axis=1)
            step = np.where(free, chosen, forced[:, t])
            tokens[:, t] = step
            logps[:, t] = logp[np.arange(batch), step]
            prev = step
        return tokens, logps

    def sample_trajectories(
        self, n: int, rng: np.random.Generator, temperature: float = 1.0
    ) -> list[Trajectory]:
        tokens, logps = self.rollout(n=n, rng=rng, temperature=temperature)
        return [
            Trajectory(Sequence.from_array(row), tuple(steps), float(steps.sum()))
            for row, steps in zip(tokens, logps)
        ]

    def sample_trajectory(self, rng: np.random.Generator, temperature: float = 1.0) -> Trajectory:
        return self.sample_trajectories(1, rng, temperature)[0]

    def log_prob_tokens(self, tokens: np.ndarray) -> np.ndarray:
        """Exact log-probability of each row's unique build trajectory."""
        tokens = np.asarray(tokens, dtype=np.int64)
        batch = tokens.shape[0]
        states = [np.zeros((batch, self.hidden)) for _ in self.cells]
        prev = np.full(batch, self.start_id, dtype=np.int64)
        logps = np.empty((batch, self.length), dtype=np.float64)
        for t in range(self.length):
            logits = self._step_np(prev, states)
            logp = ng.log_softmax_np(logits)
            logps[:, t] = logp[np.arange(batch), tokens[:, t]]
            prev = tokens[:, t]
        return logps.sum(axis=1)

    def log_prob(self, x: Sequence) -> float:
        return float(self.log_prob_tokens(np.asarray([x.tokens], dtype=np.int64))[0])

    # -- training (graph-building) -------------------------------------------

    def log_prob_tensor(self, tokens: np.ndarray) -> Tensor:
        """Differentiable total log-probability per row, shape (B,)."""
        tokens = np.asarray(tokens, dtype=np.int64)
        batch = tokens.shape[0]
        states = [Tensor(np.zeros((batch, self.hidden))) for _ in self.cells]
        prev = np.full(batch, self.start_id, dtype=np.int64)
        total: Tensor | None = None
        for t in range(self.length):
            x = self.embedding(prev)
            for i, cell in enumerate(self.cells):
                states[i] = cell(x, states[i])
                x = states[i]
            logits = self.head(x)
            step = ng.gather(ng.log_softmax(logits), tokens[:, t])
            total = step if total is None else ng.add(total, step)
            prev = tokens[:, t]
        return total


def _unpack_batch(batch: Iterable) -> tuple[list[Sequence], np.ndarray]:
    seqs: list[Sequence] = []
    rewards: list[float] = []
    for item, reward in batch:
        seqs.append(item.sequence if isinstance(item, Trajectory) else item)
        rewards.append(float(reward))
    arr = np.asarray(rewards, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise ValueError("rewards must be finite")
    if (arr <= 0.0).any():
        raise ValueError("rewards must be positive; clamp at the acquisition floor first")
    return seqs, arr


def tb_loss(policy: PolicyModel, batch: PySeq[tuple]) -> Tensor:
    """Mean squared log-ratio over the batch.

    Each term is (logZ + log P(x) - log R(x))^2; gradients reach both the
    network parameters and the log-partition scalar.
    """
    seqs, rewards = _unpack_batch(batch)
    logp = policy.log_prob_tensor(seqs_to_array(seqs))
    resid = ng.add(policy.logz, ng.sub(logp, Tensor(np.log(rewards))))
    return ng.mean(ng.square(resid))


def vargrad_loss(policy: PolicyModel, batch: PySeq[tuple]) -> Tensor:
    """Batch variance of log R(x) - log P(x); no partition parameter.

    A perfectly trained policy makes the ratio constant across the batch,
    at which point the variance (and loss) is zero.
    """
    if len(batch) < 2:
        raise ValueError(f"variance objective needs a batch of at least 2, got {len(batch)}")
    seqs, rewards = _unpack_batch(batch)
    logp = policy.log_prob_tensor(seqs_to_array(seqs))
    resid = ng.sub(Tensor(np.log(rewards)), logp)
    centered = ng.sub(resid, ng.mean(resid))
    return ng.mean(ng.square(centered))


@dataclass(frozen=True)
class PolicyTrainConfig:
    steps: int = 5000
    half_batch: int = 128
    learning_rate: float = 5e-4
    logz_learning_rate: float = 1e-3
    objective: str = "tb"  # "tb" | "vargrad"
    offline_rewards: str = "acquisition"  # "acquisition" | "label"
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)

    def __post_init__(self) -> None:
        if self.objective not in ("tb", "vargrad"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.offline_rewards not in ("acquisition", "label"):
            raise ValueError(f"unknown offline reward source {self.offline_rewards!r}")


@dataclass
class PolicyTrainReport:
    rows: list[tuple[int, float, float]] = field(default_factory=list)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "tb_loss", "logZ"])
            for step, loss, logz in self.rows:
                writer.writerow([step, repr(loss), repr(logz)])


def train_policy_round(
    policy: PolicyModel,
    proxy: EnsembleProxy,
    dataset: LabeledDataset,
    sampler,
    config: PolicyTrainConfig,
    rng: np.random.Generator,
) -> PolicyTrainReport:
    """One round of policy updates mixing searched and replayed sequences.

    Every step draws half the batch from the conservative sampler and
    half from the dataset under the rank prior, scores both halves with
    the acquisition rule, and applies one optimizer update.
    """
    report = PolicyTrainReport()
    if config.steps == 0:
        return report
    opt = Adam(
        [
            (policy.policy_parameters(), config.learning_rate),
            ([policy.logz], config.logz_learning_rate),
        ]
    )
    prior = RankPrior(dataset)
    for step in range(1, config.steps + 1):
        searched = sampler.sample_batch(config.half_batch, rng)
        offline_idx = prior.sample_indices(config.half_batch, rng)
        offline = [dataset.sequences[i] for i in offline_idx]
        seqs = searched + offline
        rewards = acquire_tokens(proxy, seqs_to_array(seqs), config.acquisition)
        if config.offline_rewards == "label":
            labels = dataset.scores_array()[offline_idx]
            rewards[config.half_batch :] = np.maximum(labels, config.acquisition.floor)
        batch = list(zip(seqs, rewards))
        loss = tb_loss(policy, batch) if config.objective == "tb" else vargrad_loss(policy, batch)
        opt.zero_grad()
        ng.backward(loss)
        opt.step()
        report.rows.append((step, float(loss.data), float(policy.logz.data)))
    return report
