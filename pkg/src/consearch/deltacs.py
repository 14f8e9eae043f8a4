"""Conservative off-policy search: rank prior, masking, and denoising.

The pipeline turns a labeled dataset into fresh candidate sequences:
draw a reference with rank-weighted probability, mask each token
independently with probability delta, then let the autoregressive policy
fill the masked slots left to right. Small delta keeps candidates close
to observed data; delta = 1 reduces to unconstrained policy sampling.

All functions are pure given (dataset snapshot, policy parameters, rng),
so batches may be produced concurrently with independent generators.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .oracle import LabeledDataset
from .seqcore import MASK, MaskedSequence, Sequence, array_to_seqs

#: Weight-shifting factor of the rank-based prior.
DEFAULT_RANK_SHIFT = 0.01


class SequencePolicy(Protocol):
    """What the denoiser needs from a policy: batched constrained rollout."""

    length: int

    def rollout(
        self, n: int | None = None, forced: np.ndarray | None = None,
        rng: np.random.Generator | None = None, temperature: float = 1.0,
    ) -> tuple[np.ndarray, np.ndarray]: ...


def rank_weights(scores: np.ndarray, k: float = DEFAULT_RANK_SHIFT) -> np.ndarray:
    """Normalized weights 1/(kN + rank) with rank 1 for the best score.

    Ties keep insertion order (stable sort), so reweighting is
    deterministic for a fixed dataset.
    """
    n = scores.size
    if n == 0:
        raise ValueError("cannot rank an empty score list")
    order = np.argsort(-scores, kind="stable")
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = np.arange(1, n + 1)
    w = 1.0 / (k * n + ranks)
    return w / w.sum()


class RankPrior:
    """Rank-weighted sampling distribution over a dataset snapshot.

    Weights are cached at construction; build a new prior after the
    dataset grows.
    """

    def __init__(self, dataset: LabeledDataset, k: float = DEFAULT_RANK_SHIFT):
        if len(dataset) == 0:
            raise ValueError("rank prior needs a nonempty dataset")
        self.dataset = dataset
        self.k = k
        self.weights = rank_weights(dataset.scores_array(), k)

    def sample_indices(self, m: int, rng: np.random.Generator) -> np.ndarray:
        return rng.choice(len(self.dataset), size=m, replace=True, p=self.weights)

    def sample_many(self, m: int, rng: np.random.Generator) -> list[Sequence]:
        return [self.dataset.sequences[i] for i in self.sample_indices(m, rng)]


def sample_reference(prior: RankPrior, rng: np.random.Generator) -> Sequence:
    """One reference sequence drawn with the rank weights."""
    return prior.sample_many(1, rng)[0]


def inject_noise(x: Sequence, delta: float, rng: np.random.Generator) -> MaskedSequence:
    """Mask each position independently with probability delta."""
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must be in [0, 1], got {delta}")
    mask = rng.random(len(x)) < delta
    return MaskedSequence(tuple(MASK if m else t for t, m in zip(x.tokens, mask)))


def denoise(
    masked: MaskedSequence,
    policy: SequencePolicy,
    rng: np.random.Generator,
    temperature: float = 1.0,
) -> Sequence:
    """Fill masked slots left to right with the policy; copy the rest verbatim.

    Each fill is conditioned only on the (partially copied, partially
    sampled) prefix already produced, never on future unmasked tokens.
    """
    forced = np.asarray(masked.slots, dtype=np.int64)[None, :]
    tokens, _ = policy.rollout(forced=forced, rng=rng, temperature=temperature)
    return Sequence.from_array(tokens[0])


@dataclass(frozen=True)
class DeltaSchedule:
    """Masking-rate rule: a constant, or one shrunk by proxy uncertainty."""

    delta_const: float = 0.5
    lam: float = 0.0
    mode: str = "constant"  # "constant" | "adaptive"

    def __post_init__(self) -> None:
        if not 0.0 <= self.delta_const <= 1.0:
            raise ValueError(f"delta_const must be in [0, 1], got {self.delta_const}")
        if self.lam < 0.0:
            raise ValueError(f"scaling factor must be nonnegative, got {self.lam}")
        if self.mode not in ("constant", "adaptive"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")


def compute_delta(sched: DeltaSchedule, sigma_x: float) -> float:
    """Masking rate for one sample, clamped to [0, 1].

    Adaptive mode lowers delta where the proxy is uncertain, so the
    search stays closer to observed data exactly where predictions are
    least trustworthy.
    """
    if sigma_x < 0.0:
        raise ValueError(f"uncertainty must be nonnegative, got {sigma_x}")
    if sched.mode == "constant":
        return min(max(sched.delta_const, 0.0), 1.0)
    return min(max(sched.delta_const - sched.lam * sigma_x, 0.0), 1.0)


class DeltaCSSampler:
    """Bound pipeline: reference draw, adaptive masking, policy denoising.

    Holds the rank prior for one dataset snapshot; the policy is read
    live, so training steps between calls are picked up automatically.
    """

    def __init__(
        self,
        dataset: LabeledDataset,
        policy: SequencePolicy,
        proxy=None,
        sched: DeltaSchedule = DeltaSchedule(),
        k: float = DEFAULT_RANK_SHIFT,
    ):
        if sched.mode == "adaptive" and proxy is None:
            raise ValueError("adaptive schedule requires a proxy for uncertainty estimates")
        self.prior = RankPrior(dataset, k)
        self.policy = policy
        self.proxy = proxy
        self.sched = sched

    def sample_batch(self, m: int, rng: np.random.Generator) -> list[Sequence]:
        if m == 0:
            return []
        idx = self.prior.sample_indices(m, rng)
        refs = self.prior.dataset.tokens_array()[idx]
        if self.sched.mode == "adaptive":
            _, sigma = self.proxy.predict_tokens(refs)
            deltas = np.array([compute_delta(self.sched, s) for s in sigma])
        else:
            deltas = np.full(m, compute_delta(self.sched, 0.0))
        mask = rng.random(refs.shape) < deltas[:, None]
        forced = np.where(mask, MASK, refs)
        tokens, _ = self.policy.rollout(forced=forced, rng=rng)
        return array_to_seqs(tokens)


def delta_cs_batch(
    dataset: LabeledDataset,
    policy: SequencePolicy,
    proxy,
    sched: DeltaSchedule,
    m: int,
    rng: np.random.Generator,
    k: float = DEFAULT_RANK_SHIFT,
) -> list[Sequence]:
    """M candidates from the reference -> mask -> denoise pipeline."""
    return DeltaCSSampler(dataset, policy, proxy, sched, k).sample_batch(m, rng)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


class SuffixSampler:
    """Comparison sampler that always destroys a contiguous suffix.

    Masks exactly round(delta * L) trailing positions of each reference
    and lets the policy rebuild them; the flexible-masking pipeline above
    is the method under study, this is the fixed-suffix alternative.
    """

    def __init__(
        self,
        dataset: LabeledDataset,
        policy: SequencePolicy,
        delta: float,
        k: float = DEFAULT_RANK_SHIFT,
    ):
        if not 0.0 <= delta <= 1.0:
            raise ValueError(f"delta must be in [0, 1], got {delta}")
        self.prior = RankPrior(dataset, k)
        self.policy = policy
        self.delta = delta

    def sample_batch(self, m: int, rng: np.random.Generator) -> list[Sequence]:
        if m == 0:
            return []
        idx = self.prior.sample_indices(m, rng)
        refs = self.prior.dataset.tokens_array()[idx]
        length = refs.shape[1]
        back = min(round_half_up(self.delta * length), length)
        forced = refs.copy()
        if back > 0:
            forced[:, length - back :] = MASK
        tokens, _ = self.policy.rollout(forced=forced, rng=rng)
        return array_to_seqs(tokens)


def suffix_backtrack_batch(
    dataset: LabeledDataset,
    policy: SequencePolicy,
    delta: float,
    m: int,
    rng: np.random.Generator,
    k: float = DEFAULT_RANK_SHIFT,
) -> list[Sequence]:
    """M candidates rebuilt from suffix-masked references."""
    return SuffixSampler(dataset, policy, delta, k).sample_batch(m, rng)
