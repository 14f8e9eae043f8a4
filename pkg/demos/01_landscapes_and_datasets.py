#!/usr/bin/env python3
"""Tour of the score oracles and initial-dataset builders.

Builds a rugged synthetic landscape, applies the hard-floor wrapper that
zeroes low scores, and assembles the two kinds of starting datasets used
by the benchmarks: a cluster around a mediocre seed sequence, and a
percentile truncation of a random pool.
"""
import numpy as np

from consearch.oracle import (
    HardVariant,
    NkLandscape,
    build_clustered_dataset,
    build_percentile_dataset,
    enumerate_tokens,
    pick_percentile_seed,
    random_pool,
)
from consearch.seqcore import hamming

rng = np.random.default_rng(0)

# A length-8 landscape over a 4-letter alphabet. Each site's contribution
# depends on its own token plus k=4 neighbors, so single-token changes can
# swing the score: the higher k, the more rugged the landscape.
inner = NkLandscape(length=8, vocab_size=4, k=4, seed=7)
tokens, scores = enumerate_tokens(inner)
print(f"full space: {len(scores)} sequences")
print(f"raw scores: mean={scores.mean():.3f} std={scores.std():.3f} max={scores.max():.3f}")

# The hard variant zeroes everything below a floor, mimicking assays where
# weak binders simply read out as inactive.
hard = HardVariant(inner, threshold=0.45)
_, hard_scores = enumerate_tokens(hard)
print(f"hard variant: {100 * (hard_scores == 0).mean():.1f}% of the space scores zero")

# Clustered start: pick a sequence at the 70th percentile and collect 1,024
# unique neighbors within Hamming radius 3 that score no better than it.
seed_seq = pick_percentile_seed(hard, 70.0)
print(f"\nseed sequence {seed_seq.to_string(hard.vocab)} scores {hard.score(seed_seq):.3f}")
clustered = build_clustered_dataset(hard, seed_seq, size=1024, max_radius=3, rng=rng)
dists = [hamming(s, seed_seq) for s, _ in clustered]
ys = clustered.scores_array()
print(f"clustered dataset: {len(clustered)} entries, "
      f"distances 1..{max(dists)}, max score {ys.max():.3f}, {100 * (ys == 0).mean():.0f}% zeros")

# Percentile start: label a random pool and keep only the bottom half.
pool = random_pool(hard, size=4096, rng=rng)
bottom = build_percentile_dataset(hard, pool, percentile=50.0)
print(f"\nbottom-50% dataset: {len(bottom)} of {len(pool)} pool entries, "
      f"max score {bottom.scores_array().max():.3f}")

# Both constructions leave plenty of headroom above the starting data,
# which is what makes the search problem interesting.
print(f"\nheadroom: global max {hard_scores.max():.3f} "
      f"vs clustered-start max {ys.max():.3f}")
