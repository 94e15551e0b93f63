"""Region-aware batch sampling with a quadratic profile over slice position.

Cardiac slices are weighted by ``1 + (ratio - 1) * (2x - 1)**2`` where ``x``
is the slice's normalised position inside its stack's cardiac range, so the
extreme slices are drawn ``ratio`` times as often as the central one.
Non-cardiac slices keep their uniform probability ``1/N``.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import CmrError, DatasetIndex, IndexRecord, InvalidParams, Region, Split


class NotCardiac(CmrError):
    pass


class EmptyIndex(CmrError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    ratio: float = 20.0
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if not self.ratio >= 1:
            raise InvalidParams(f"ratio must be >= 1, got {self.ratio}")
        if self.batch_size < 1:
            raise InvalidParams(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class SamplerWeights:
    records: tuple[IndexRecord, ...]
    probabilities: np.ndarray
    positions: np.ndarray  # NaN for non-cardiac records
    config: SamplerConfig

    def __len__(self) -> int:
        return len(self.records)


def normalized_position(slice_index: int, cardiac_range: tuple[int, int]) -> float:
    first, last = cardiac_range
    if not first <= slice_index <= last:
        raise NotCardiac(f"slice {slice_index} outside cardiac range {cardiac_range}")
    n = last - first + 1
    if n == 1:
        return 0.5
    return (slice_index - first) / (n - 1)


def cardiac_weight(x, ratio: float):
    return 1.0 + (ratio - 1.0) * (2.0 * np.asarray(x, dtype=np.float64) - 1.0) ** 2


def cardiac_ranges(records) -> dict[tuple, tuple[int, int]]:
    """First and last cardiac slice per (stack_id, phase), from region labels."""
    idx = defaultdict(list)
    for r in records:
        if r.region != Region.NON_CARDIAC:
            idx[(r.stack_id, r.phase)].append(r.slice_index)
    return {k: (min(v), max(v)) for k, v in idx.items()}


def build_weights(index: DatasetIndex, config: SamplerConfig,
                  split: Optional[Split] = Split.TRAIN) -> SamplerWeights:
    records = tuple(index.records if split is None else index.by_split(split))
    n = len(records)
    if n == 0:
        raise EmptyIndex("no training records to sample from")
    ranges = cardiac_ranges(records)
    positions = np.full(n, np.nan)
    for i, r in enumerate(records):
        if r.region != Region.NON_CARDIAC:
            positions[i] = normalized_position(r.slice_index, ranges[(r.stack_id, r.phase)])
    cardiac = ~np.isnan(positions)

    if config.ratio == 1:
        probs = np.full(n, 1.0 / n)
    else:
        probs = np.full(n, 1.0 / n)
        if cardiac.any():
            w = cardiac_weight(positions[cardiac], config.ratio)
            mass = cardiac.sum() / n
            probs[cardiac] = mass * w / w.sum()
    probs.setflags(write=False)
    positions.setflags(write=False)
    return SamplerWeights(records, probs, positions, config)


def sample_batch(weights: SamplerWeights, rng: np.random.Generator,
                 size: Optional[int] = None) -> list[int]:
    """Draw record ids (positions in ``weights.records``) i.i.d. with replacement."""
    size = weights.config.batch_size if size is None else size
    cdf = np.cumsum(weights.probabilities)
    cdf /= cdf[-1]
    u = rng.random(size)
    ids = np.searchsorted(cdf, u, side="right")
    return np.minimum(ids, len(cdf) - 1).tolist()
