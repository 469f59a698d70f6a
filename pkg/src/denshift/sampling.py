"""Density-parameterized batch sampling.

Class j is drawn with probability n_j^q / sum_c n_c^q, then an instance
uniformly within the class, with replacement. q=1 reproduces regular
random sampling (instance-uniform), q=0 class-balanced sampling. A
SamplerState pairs one regular stream with one balanced stream so the
decoupled trainer gets both batches per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ValidationError


@dataclass(frozen=True)
class SamplerConfig:
    q: float
    batch_size: int
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValidationError(f"q must be in [0, 1], got {self.q}")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")


@dataclass
class BatchPair:
    """One step's worth of data: a regular-sampled batch and a balanced one."""

    regular: tuple[np.ndarray, np.ndarray]
    balanced: tuple[np.ndarray, np.ndarray]
    regular_idx: np.ndarray
    balanced_idx: np.ndarray


def class_probs(class_counts, q: float) -> np.ndarray:
    """Per-class sampling probabilities n_j^q / sum_c n_c^q."""
    counts = np.asarray(class_counts, dtype=np.float64)
    if counts.size == 0:
        raise ValidationError("empty class count vector")
    if (counts <= 0).any():
        raise ValidationError("class counts must be positive")
    if not 0.0 <= q <= 1.0:
        raise ValidationError(f"q must be in [0, 1], got {q}")
    weights = counts**q
    return weights / weights.sum()


class SamplerState:
    """Owns the random stream for one training loop; not safe for concurrent mutation."""

    @classmethod
    def from_configs(cls, ds: Dataset, regular: SamplerConfig, balanced: SamplerConfig) -> "SamplerState":
        """Pair two stream configs; they must agree on batch size, the regular seed is used."""
        if regular.batch_size != balanced.batch_size:
            raise ValidationError("paired streams must share one batch size")
        return cls(ds, regular.batch_size, seed=regular.seed,
                   q_regular=regular.q, q_balanced=balanced.q)

    def __init__(
        self,
        ds: Dataset,
        batch_size: int,
        seed: int = 0,
        q_regular: float = 1.0,
        q_balanced: float = 0.0,
    ):
        if batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if (ds.class_counts == 0).any():
            missing = [ds.class_names[c] for c in np.flatnonzero(ds.class_counts == 0)]
            raise ValidationError(f"training split is missing classes: {missing}")
        self.n = ds.n
        self.batch_size = batch_size
        self.probs_regular = class_probs(ds.class_counts, q_regular)
        self.probs_balanced = class_probs(ds.class_counts, q_balanced)
        self.class_indices = [np.flatnonzero(ds.labels == c) for c in range(ds.n_classes)]
        self.counts = ds.class_counts.copy()
        self.rng = np.random.default_rng(seed)

    def _draw(self, probs: np.ndarray) -> np.ndarray:
        classes = self.rng.choice(len(self.counts), size=self.batch_size, p=probs)
        within = self.rng.integers(0, self.counts[classes])
        return np.array(
            [self.class_indices[c][w] for c, w in zip(classes, within)], dtype=np.int64
        )


def next_batch_pair(sampler: SamplerState, ds: Dataset) -> BatchPair:
    """Draw one regular batch and one balanced batch, with replacement."""
    if ds.n != sampler.n:
        raise ValidationError("sampler is bound to a different split")
    reg_idx = sampler._draw(sampler.probs_regular)
    bal_idx = sampler._draw(sampler.probs_balanced)
    return BatchPair(
        regular=(ds.features[reg_idx], ds.labels[reg_idx]),
        balanced=(ds.features[bal_idx], ds.labels[bal_idx]),
        regular_idx=reg_idx,
        balanced_idx=bal_idx,
    )


def epoch_batches(sampler: SamplerState, ds: Dataset):
    """Yield ceil(N / batch_size) batch pairs, one epoch of regular draws."""
    for _ in range(math.ceil(sampler.n / sampler.batch_size)):
        yield next_batch_pair(sampler, ds)
