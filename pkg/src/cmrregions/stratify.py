"""Region assignment from ground-truth masks (20% base, 60% middle, 20% apex)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .core import CmrStack, InvalidCount, MissingMasks, Region

QUOTAS = (Fraction(1, 5), Fraction(3, 5), Fraction(1, 5))  # base, middle, apex
# leftover seats on equal remainders go Middle, then Base, then Apex
_TIE_PRIORITY = (1, 0, 2)


@dataclass(frozen=True)
class RegionCounts:
    base: int
    middle: int
    apex: int

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.base, self.middle, self.apex)


def split_counts(n_cardiac: int) -> RegionCounts:
    """Largest-remainder apportionment of ``n_cardiac`` slices over base/middle/apex."""
    if not isinstance(n_cardiac, int) or n_cardiac < 1:
        raise InvalidCount(f"need at least one cardiac slice, got {n_cardiac!r}")
    # exact rational arithmetic keeps the remainders free of float ties
    quotas = [q * n_cardiac for q in QUOTAS]
    seats = [math.floor(q) for q in quotas]
    remainders = [q - s for q, s in zip(quotas, seats)]
    leftover = n_cardiac - sum(seats)
    ranked = sorted(range(3), key=lambda i: (-remainders[i], _TIE_PRIORITY.index(i)))
    for i in ranked[:leftover]:
        seats[i] += 1
    return RegionCounts(*seats)


def _require_masks(stack: CmrStack):
    if stack.gt_masks is None:
        raise MissingMasks(f"stack {stack.key} has no ground-truth masks")
    return stack.gt_masks


def cardiac_slice_range(stack: CmrStack) -> Optional[tuple[int, int]]:
    masks = _require_masks(stack)
    nonempty = [i for i, m in enumerate(masks) if m.labels.any()]
    if not nonempty:
        return None
    return nonempty[0], nonempty[-1]


def assign_regions(stack: CmrStack) -> list[Region]:
    masks = _require_masks(stack)
    regions = [Region.NON_CARDIAC] * len(masks)
    cardiac = [i for i, m in enumerate(masks) if m.labels.any()]
    if not cardiac:
        return regions
    counts = split_counts(len(cardiac))
    labels = (
        [Region.BASE] * counts.base
        + [Region.MIDDLE] * counts.middle
        + [Region.APEX] * counts.apex
    )
    for i, region in zip(cardiac, labels):
        regions[i] = region
    return regions
