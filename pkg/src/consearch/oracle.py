"""Ground-truth score functions and initial-dataset builders.

Oracles are immutable once constructed and safe to call from multiple
threads. Scores are deterministic functions of the sequence.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .seqcore import Sequence, Vocabulary, enumerate_sequences, seqs_to_array

#: Refuse to enumerate spaces larger than this (|V|^L).
ENUMERATION_LIMIT = 2**24


class SpaceTooLargeError(ValueError):
    pass


class DatasetBuildError(RuntimeError):
    pass


class Oracle:
    """Interface shared by all score functions."""

    vocab: Vocabulary
    length: int

    def score(self, x: Sequence) -> float:
        return float(self.score_tokens(np.asarray([x.tokens], dtype=np.int64))[0])

    def score_tokens(self, tokens: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def score_batch(self, seqs: list[Sequence]) -> np.ndarray:
        return self.score_tokens(seqs_to_array(seqs))

    def space_size(self) -> int:
        return self.vocab.size**self.length


class LookupOracle(Oracle):
    """Table-backed oracle for tasks where the full space has been measured."""

    def __init__(self, table: dict[Sequence, float], vocab: Vocabulary, default: float | None = None):
        if not table:
            raise ValueError("lookup table is empty")
        lengths = {len(s) for s in table}
        if len(lengths) != 1:
            raise ValueError(f"all table keys must share one length, got {sorted(lengths)}")
        for s, y in table.items():
            if not np.isfinite(y):
                raise ValueError(f"non-finite score for {s.tokens}")
        self.table = dict(table)
        self.vocab = vocab
        self.length = lengths.pop()
        self.default = default

    def score(self, x: Sequence) -> float:
        if x in self.table:
            return float(self.table[x])
        if self.default is None:
            raise KeyError(f"sequence not in lookup table and no default set: {x.tokens}")
        return float(self.default)

    def score_tokens(self, tokens: np.ndarray) -> np.ndarray:
        return np.array([self.score(Sequence.from_array(row)) for row in tokens], dtype=np.float64)

    @classmethod
    def from_csv(cls, path: str | Path, vocab: Vocabulary, default: float | None = None) -> "LookupOracle":
        """Read a `sequence,score` CSV (header required)."""
        table: dict[Sequence, float] = {}
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "sequence" not in reader.fieldnames or "score" not in reader.fieldnames:
                raise ValueError(f"expected header 'sequence,score' in {path}")
            for row in reader:
                table[Sequence.from_string(row["sequence"], vocab)] = float(row["score"])
        return cls(table, vocab, default=default)


class NkLandscape(Oracle):
    """Synthetic rugged fitness landscape with tunable epistasis.

    Each site contributes a value read from a random table indexed by its
    own token and the tokens of k fixed neighbor sites; the score is the
    mean site contribution, so it always falls in [0, 1]. Higher k makes
    the landscape more rugged.
    """

    def __init__(self, length: int, vocab_size: int, k: int, seed: int):
        if not 0 <= k < length:
            raise ValueError(f"epistasis degree must satisfy 0 <= k < L, got k={k}, L={length}")
        self.vocab = Vocabulary.generic(vocab_size)
        self.length = length
        self.k = k
        self.seed = seed
        rng = np.random.default_rng(seed)
        neighbors = np.empty((length, k), dtype=np.int64)
        for i in range(length):
            others = np.array([j for j in range(length) if j != i])
            neighbors[i] = rng.choice(others, size=k, replace=False) if k else []
        self.neighbors = neighbors
        self.tables = rng.uniform(0.0, 1.0, size=(length, vocab_size ** (k + 1)))

    def score_tokens(self, tokens: np.ndarray) -> np.ndarray:
        v = self.vocab.size
        total = np.zeros(tokens.shape[0], dtype=np.float64)
        for i in range(self.length):
            idx = tokens[:, i].astype(np.int64)
            for j in self.neighbors[i]:
                idx = idx * v + tokens[:, j]
            total += self.tables[i, idx]
        return total / self.length


class HardVariant(Oracle):
    """Zeroes every score below a threshold, keeping the rest unchanged."""

    def __init__(self, inner: Oracle, threshold: float = 0.3):
        self.inner = inner
        self.threshold = float(threshold)
        self.vocab = inner.vocab
        self.length = inner.length

    def score_tokens(self, tokens: np.ndarray) -> np.ndarray:
        y = self.inner.score_tokens(tokens)
        return np.where(y >= self.threshold, y, 0.0)


class LabeledDataset:
    """Ordered collection of (sequence, score) pairs with round provenance.

    Sequences are unique; the round index records when each entry was
    added and never decreases.
    """

    def __init__(self) -> None:
        self.sequences: list[Sequence] = []
        self.scores: list[float] = []
        self.rounds: list[int] = []
        self._members: set[Sequence] = set()

    def __len__(self) -> int:
        return len(self.sequences)

    def __contains__(self, seq: Sequence) -> bool:
        return seq in self._members

    def __iter__(self) -> Iterator[tuple[Sequence, float]]:
        return iter(zip(self.sequences, self.scores))

    def add(self, seq: Sequence, score: float, round_index: int) -> None:
        if seq in self._members:
            raise ValueError(f"duplicate sequence: {seq.tokens}")
        if self.rounds and round_index < self.rounds[-1]:
            raise ValueError(f"round index {round_index} decreases below {self.rounds[-1]}")
        if not np.isfinite(score):
            raise ValueError("score must be finite")
        self.sequences.append(seq)
        self.scores.append(float(score))
        self.rounds.append(int(round_index))
        self._members.add(seq)

    def add_batch(self, seqs: list[Sequence], scores: np.ndarray, round_index: int) -> None:
        for s, y in zip(seqs, scores):
            self.add(s, float(y), round_index)

    def scores_array(self) -> np.ndarray:
        return np.asarray(self.scores, dtype=np.float64)

    def tokens_array(self) -> np.ndarray:
        return seqs_to_array(self.sequences)

    def initial_tokens(self) -> np.ndarray:
        """Token matrix of the round-0 entries only."""
        rows = [s.tokens for s, r in zip(self.sequences, self.rounds) if r == 0]
        return np.asarray(rows, dtype=np.int64)

    def to_csv(self, path: str | Path, vocab: Vocabulary) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sequence", "score", "round"])
            for seq, score, rnd in zip(self.sequences, self.scores, self.rounds):
                writer.writerow([seq.to_string(vocab), repr(score), rnd])

    @classmethod
    def from_csv(cls, path: str | Path, vocab: Vocabulary) -> "LabeledDataset":
        ds = cls()
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                ds.add(Sequence.from_string(row["sequence"], vocab), float(row["score"]), int(row["round"]))
        return ds


def evaluate(oracle: Oracle, x: Sequence) -> float:
    """Score one sequence; thresholding wrappers apply their rule."""
    if len(x) != oracle.length:
        raise ValueError(f"sequence length {len(x)} does not match oracle length {oracle.length}")
    return oracle.score(x)


def enumerate_space(oracle: Oracle, limit: int = ENUMERATION_LIMIT) -> Iterator[tuple[Sequence, float]]:
    """Every (sequence, score) pair in lexicographic order.

    Guarded: raises SpaceTooLargeError when |V|^L exceeds `limit`.
    """
    size = oracle.space_size()
    if size > limit:
        raise SpaceTooLargeError(f"space size {size} exceeds enumeration limit {limit}")
    chunk: list[Sequence] = []
    for seq in enumerate_sequences(oracle.vocab, oracle.length):
        chunk.append(seq)
        if len(chunk) == 8192:
            for s, y in zip(chunk, oracle.score_batch(chunk)):
                yield s, float(y)
            chunk = []
    if chunk:
        for s, y in zip(chunk, oracle.score_batch(chunk)):
            yield s, float(y)


def enumerate_tokens(oracle: Oracle, limit: int = ENUMERATION_LIMIT) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized enumeration: (tokens (N, L), scores (N,)) in lexicographic order."""
    size = oracle.space_size()
    if size > limit:
        raise SpaceTooLargeError(f"space size {size} exceeds enumeration limit {limit}")
    v, length = oracle.vocab.size, oracle.length
    idx = np.arange(size, dtype=np.int64)
    tokens = np.empty((size, length), dtype=np.int64)
    for pos in range(length - 1, -1, -1):
        tokens[:, pos] = idx % v
        idx //= v
    return tokens, oracle.score_tokens(tokens)


def pick_percentile_seed(oracle: Oracle, percentile: float) -> Sequence:
    """The enumerated sequence whose score sits at the given percentile rank."""
    tokens, scores = enumerate_tokens(oracle)
    order = np.argsort(scores, kind="stable")
    pos = min(int(len(order) * percentile / 100.0), len(order) - 1)
    return Sequence.from_array(tokens[order[pos]])


def build_clustered_dataset(
    oracle: Oracle,
    seed_sequence: Sequence,
    size: int,
    max_radius: int,
    rng: np.random.Generator,
    max_attempts: int = 1_000_000,
) -> LabeledDataset:
    """Collect `size` unique sequences near a seed, none scoring above it.

    Candidates are drawn by mutating 1..max_radius random positions of the
    seed to different tokens and rejecting any that score higher than the
    seed. Raises DatasetBuildError when the attempt budget runs out.
    """
    length = oracle.length
    v = oracle.vocab.size
    if not 1 <= max_radius <= length:
        raise ValueError(f"max_radius must be in [1, {length}], got {max_radius}")
    seed_tokens = np.asarray(seed_sequence.tokens, dtype=np.int64)
    seed_score = evaluate(oracle, seed_sequence)

    found: dict[Sequence, float] = {}
    attempts = 0
    chunk = 4096
    while len(found) < size:
        if attempts >= max_attempts:
            raise DatasetBuildError(
                f"could not collect {size} qualifying sequences within "
                f"{max_attempts} attempts (found {len(found)})"
            )
        n = min(chunk, max_attempts - attempts)
        attempts += n
        cand = np.tile(seed_tokens, (n, 1))
        n_mut = rng.integers(1, max_radius + 1, size=n)
        for i in range(n):
            pos = rng.choice(length, size=n_mut[i], replace=False)
            # shift by 1..v-1 mod v guarantees a different token
            cand[i, pos] = (cand[i, pos] + rng.integers(1, v, size=n_mut[i])) % v
        ys = oracle.score_tokens(cand)
        for row, y in zip(cand, ys):
            if y <= seed_score:
                seq = Sequence.from_array(row)
                if seq not in found:
                    found[seq] = float(y)
                    if len(found) == size:
                        break

    ds = LabeledDataset()
    for seq, y in found.items():
        ds.add(seq, y, round_index=0)
    return ds


def build_percentile_dataset(oracle: Oracle, pool: list[Sequence], percentile: float) -> LabeledDataset:
    """Label a pool and keep entries at or below the given score percentile."""
    if not pool:
        raise ValueError("pool is empty")
    if not 0.0 < percentile <= 100.0:
        raise ValueError(f"percentile must be in (0, 100], got {percentile}")
    unique: list[Sequence] = []
    seen: set[Sequence] = set()
    for s in pool:
        if s not in seen:
            seen.add(s)
            unique.append(s)
    ys = oracle.score_batch(unique)
    cutoff = np.percentile(ys, percentile)
    ds = LabeledDataset()
    for s, y in zip(unique, ys):
        if y <= cutoff:
            ds.add(s, float(y), round_index=0)
    if len(ds) == 0:
        raise DatasetBuildError("percentile truncation left no entries")
    return ds


def random_pool(oracle: Oracle, size: int, rng: np.random.Generator) -> list[Sequence]:
    """Unique uniformly drawn sequences, for percentile-truncated datasets."""
    if size > oracle.space_size():
        raise ValueError(f"pool size {size} exceeds space size {oracle.space_size()}")
    seen: set[Sequence] = set()
    out: list[Sequence] = []
    while len(out) < size:
        tokens = rng.integers(0, oracle.vocab.size, size=(size - len(out), oracle.length))
        for row in tokens:
            seq = Sequence.from_array(row)
            if seq not in seen:
                seen.add(seq)
                out.append(seq)
    return out
