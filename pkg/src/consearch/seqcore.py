"""Vocabularies, fixed-length token sequences, and set-level metrics.

Everything here is immutable and side-effect free, so any number of
threads may share these objects.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple

import numpy as np

#: Sentinel slot value marking a masked position.
MASK = -1

_GENERIC_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"


@dataclass(frozen=True)
class Vocabulary:
    """An ordered alphabet of display characters, one per token id."""

    symbols: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.symbols) < 2:
            raise ValueError(f"vocabulary needs at least 2 symbols, got {len(self.symbols)}")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("vocabulary symbols must be unique")
        for s in self.symbols:
            if len(s) != 1:
                raise ValueError(f"symbols must be single characters, got {s!r}")

    @property
    def size(self) -> int:
        return len(self.symbols)

    def index(self, char: str) -> int:
        try:
            return self.symbols.index(char)
        except ValueError:
            raise ValueError(f"character {char!r} not in vocabulary") from None

    def char(self, token: int) -> str:
        if not 0 <= token < self.size:
            raise ValueError(f"token id {token} out of range for |V|={self.size}")
        return self.symbols[token]

    @classmethod
    def dna(cls) -> "Vocabulary":
        return cls(tuple("ACGT"))

    @classmethod
    def generic(cls, size: int) -> "Vocabulary":
        """Alphabet of the first `size` characters from A-Z0-9."""
        if size > len(_GENERIC_ALPHABET):
            raise ValueError(f"generic vocabulary supports at most {len(_GENERIC_ALPHABET)} symbols")
        return cls(tuple(_GENERIC_ALPHABET[:size]))


@dataclass(frozen=True)
class Sequence:
    """A fixed-length string of token ids."""

    tokens: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.tokens)

    def to_string(self, vocab: Vocabulary) -> str:
        return "".join(vocab.char(t) for t in self.tokens)

    @classmethod
    def from_string(cls, text: str, vocab: Vocabulary) -> "Sequence":
        return cls(tuple(vocab.index(c) for c in text))

    @classmethod
    def from_array(cls, row: np.ndarray) -> "Sequence":
        return cls(tuple(int(t) for t in row))


@dataclass(frozen=True)
class MaskedSequence:
    """A sequence where some slots are replaced by the MASK sentinel."""

    slots: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.slots)

    @property
    def masked_positions(self) -> tuple[int, ...]:
        return tuple(i for i, s in enumerate(self.slots) if s == MASK)

    @property
    def n_masked(self) -> int:
        return sum(1 for s in self.slots if s == MASK)

    @classmethod
    def from_sequence(cls, seq: Sequence, mask_at: Iterable[int]) -> "MaskedSequence":
        mask_set = set(mask_at)
        return cls(tuple(MASK if i in mask_set else t for i, t in enumerate(seq.tokens)))


class TopKStats(NamedTuple):
    max: float
    median: float
    mean: float


@dataclass(frozen=True)
class MetricsRecord:
    """Summary of a sequence set: top-k score stats plus spread measures."""

    max: float
    median: float
    mean: float
    diversity: float
    novelty: float


def seqs_to_array(seqs: Iterable[Sequence]) -> np.ndarray:
    """Stack sequences into an (n, L) int64 token matrix."""
    return np.array([s.tokens for s in seqs], dtype=np.int64)


def array_to_seqs(tokens: np.ndarray) -> list[Sequence]:
    return [Sequence.from_array(row) for row in tokens]


def enumerate_sequences(vocab: Vocabulary, length: int) -> Iterator[Sequence]:
    """All sequences of the given length in lexicographic token order."""
    for combo in itertools.product(range(vocab.size), repeat=length):
        yield Sequence(combo)


def hamming(a: Sequence, b: Sequence) -> int:
    """Number of positions where two equal-length sequences differ."""
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    return sum(1 for x, y in zip(a.tokens, b.tokens) if x != y)


def min_distances(tokens: np.ndarray, reference: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Per-row minimum Hamming distance from `tokens` to any row of `reference`.

    Both arguments are (n, L) token matrices; computed in chunks to bound
    memory at chunk * len(reference) * L bytes.
    """
    if reference.shape[0] == 0:
        raise ValueError("reference set is empty")
    out = np.empty(tokens.shape[0], dtype=np.int64)
    ref = reference[None, :, :]
    for start in range(0, tokens.shape[0], chunk):
        block = tokens[start : start + chunk]
        dists = (block[:, None, :] != ref).sum(axis=2)
        out[start : start + chunk] = dists.min(axis=1)
    return out


def top_k_stats(scores: Iterable[float], k: int) -> TopKStats:
    """Max, median, and mean over the k largest scores.

    If k exceeds the number of scores, the full list is used and a
    warning is emitted.
    """
    arr = np.asarray(list(scores), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("scores must be nonempty")
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    if k > arr.size:
        warnings.warn(f"k={k} exceeds {arr.size} scores; using the full list", stacklevel=2)
        k = arr.size
    top = np.sort(arr)[-k:]
    return TopKStats(float(top.max()), float(np.median(top)), float(top.mean()))


def diversity(seqs: list[Sequence]) -> float:
    """Mean pairwise Hamming distance over all unordered pairs."""
    if len(seqs) < 2:
        raise ValueError(f"diversity needs at least 2 sequences, got {len(seqs)}")
    tokens = seqs_to_array(seqs)
    n = tokens.shape[0]
    total = 0
    for i in range(n - 1):
        total += int((tokens[i + 1 :] != tokens[i]).sum(axis=1).sum())
    return total / (n * (n - 1) / 2)


def novelty(seqs: list[Sequence], reference_tokens: np.ndarray) -> float:
    """Mean over `seqs` of the minimum Hamming distance to the reference set."""
    if len(seqs) == 0:
        raise ValueError("sequence set is empty")
    tokens = seqs_to_array(seqs)
    return float(min_distances(tokens, reference_tokens).mean())


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties assigned the mean of their ordinal ranks."""
    order = np.argsort(values, kind="stable")
    ordinal = np.empty(values.size, dtype=np.float64)
    ordinal[order] = np.arange(1, values.size + 1)
    uniq, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    sums = np.zeros(uniq.size, dtype=np.float64)
    np.add.at(sums, inverse, ordinal)
    return sums[inverse] / counts[inverse]


def spearman(a: Iterable[float], b: Iterable[float]) -> float:
    """Spearman rank correlation with average ranks for ties.

    Raises ValueError when either input has zero rank variance, where the
    correlation is undefined.
    """
    x = np.asarray(list(a), dtype=np.float64)
    y = np.asarray(list(b), dtype=np.float64)
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError("need at least 2 observations")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    vx = float(rx @ rx)
    vy = float(ry @ ry)
    if vx == 0.0 or vy == 0.0:
        raise ValueError("rank correlation undefined: zero variance in a ranking")
    return float((rx @ ry) / np.sqrt(vx * vy))
