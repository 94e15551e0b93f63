"""Domain types shared across the package.

Slices are ordered base-first. Label codes are fixed: 0 background,
1 LV blood pool, 2 LV myocardium, 3 RV blood pool.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Optional, Sequence

import numpy as np


class CmrError(Exception):
    """Base class for all package errors."""


class InvalidParams(CmrError):
    pass


class MissingMasks(CmrError):
    pass


class InvalidCount(CmrError):
    pass


class Phase(str, Enum):
    ED = "ED"
    ES = "ES"


class Label(IntEnum):
    BACKGROUND = 0
    LVBP = 1
    LVM = 2
    RVBP = 3


FOREGROUND_LABELS = (Label.LVBP, Label.LVM, Label.RVBP)
VALID_CODES = frozenset(int(c) for c in Label)


class Region(str, Enum):
    # declaration order doubles as the classifier's tie-break order
    NON_CARDIAC = "NonCardiac"
    BASE = "Base"
    MIDDLE = "Middle"
    APEX = "Apex"

    @property
    def code(self) -> int:
        return REGION_ORDER.index(self)

    @classmethod
    def from_code(cls, code: int) -> "Region":
        return REGION_ORDER[code]


REGION_ORDER = (Region.NON_CARDIAC, Region.BASE, Region.MIDDLE, Region.APEX)
CARDIAC_REGIONS = (Region.BASE, Region.MIDDLE, Region.APEX)


class Split(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SliceImage:
    pixels: np.ndarray
    spacing_mm: tuple[float, float] = (1.0, 1.0)
    stack_id: str = ""
    slice_index: int = 0
    phase: Phase = Phase.ED

    def __post_init__(self):
        object.__setattr__(self, "pixels", _frozen_array(self.pixels, np.float32))
        object.__setattr__(self, "phase", Phase(self.phase))
        object.__setattr__(self, "spacing_mm", tuple(float(s) for s in self.spacing_mm))

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.pixels.shape)

    def __eq__(self, other):
        if not isinstance(other, SliceImage):
            return NotImplemented
        return (
            self.stack_id == other.stack_id
            and self.slice_index == other.slice_index
            and self.phase == other.phase
            and self.spacing_mm == other.spacing_mm
            and self.pixels.shape == other.pixels.shape
            and self.pixels.tobytes() == other.pixels.tobytes()
        )


@dataclass(frozen=True, eq=False)
class LabelMask:
    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", _frozen_array(self.labels, np.uint8))

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.labels.shape)

    def __eq__(self, other):
        if not isinstance(other, LabelMask):
            return NotImplemented
        return self.labels.shape == other.labels.shape and np.array_equal(
            self.labels, other.labels
        )


@dataclass(frozen=True)
class CmrStack:
    stack_id: str
    phase: Phase
    slices: tuple[SliceImage, ...]
    gt_masks: Optional[tuple[LabelMask, ...]] = None
    gt_regions: Optional[tuple[Region, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "phase", Phase(self.phase))
        object.__setattr__(self, "slices", tuple(self.slices))
        if self.gt_masks is not None:
            object.__setattr__(self, "gt_masks", tuple(self.gt_masks))
        if self.gt_regions is not None:
            object.__setattr__(
                self, "gt_regions", tuple(Region(r) for r in self.gt_regions)
            )

    def __len__(self) -> int:
        return len(self.slices)

    @property
    def key(self) -> str:
        return f"{self.stack_id}_{self.phase.value}"

    def with_regions(self, regions: Optional[Sequence[Region]]) -> "CmrStack":
        regions = None if regions is None else tuple(regions)
        return CmrStack(self.stack_id, self.phase, self.slices, self.gt_masks, regions)


@dataclass(frozen=True)
class IndexRecord:
    stack_id: str
    phase: Phase
    slice_index: int
    region: Region
    split: Split


@dataclass
class DatasetIndex:
    records: list[IndexRecord] = field(default_factory=list)
    source_dir: str = ""

    def by_split(self, split: Split | str) -> list[IndexRecord]:
        split = Split(split)
        return [r for r in self.records if r.split == split]

    def stack_ids(self, split: Split | str | None = None) -> list[str]:
        recs = self.records if split is None else self.by_split(split)
        return sorted({r.stack_id for r in recs})

    def stack_keys(self, split: Split | str | None = None) -> list[tuple[str, Phase]]:
        recs = self.records if split is None else self.by_split(split)
        return sorted({(r.stack_id, r.phase) for r in recs}, key=lambda k: (k[0], k[1].value))

    def to_json(self) -> dict:
        return {
            "source_dir": self.source_dir,
            "records": [
                [r.stack_id, r.phase.value, r.slice_index, r.region.value, r.split.value]
                for r in self.records
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "DatasetIndex":
        records = [
            IndexRecord(s, Phase(p), int(i), Region(reg), Split(sp))
            for s, p, i, reg, sp in data["records"]
        ]
        return cls(records=records, source_dir=data.get("source_dir", ""))


def region_blocks_ok(regions: Sequence[Region]) -> bool:
    """True when the cardiac labels read as one Base run, one Middle run, one Apex run."""
    cardiac = [i for i, r in enumerate(regions) if r != Region.NON_CARDIAC]
    if not cardiac:
        return True
    # interior all-background slices are tolerated; the cardiac order must be monotone
    order = [CARDIAC_REGIONS.index(regions[i]) for i in cardiac]
    return all(a <= b for a, b in zip(order, order[1:]))


def validate_stack(stack: CmrStack) -> list[str]:
    problems: list[str] = []
    n = len(stack.slices)
    for i, s in enumerate(stack.slices):
        if s.slice_index != i:
            problems.append(f"slice {i}: slice_index is {s.slice_index}, expected {i}")
        if s.pixels.ndim != 2:
            problems.append(f"slice {i}: pixels must be 2-D, got {s.pixels.ndim}-D")
            continue
        h, w = s.pixels.shape
        if h < 8 or w < 8:
            problems.append(f"slice {i}: image {h}x{w} smaller than 8x8")
        if not np.all(np.isfinite(s.pixels)):
            problems.append(f"slice {i}: non-finite pixel values")
        if len(s.spacing_mm) != 2 or any(not sp > 0 for sp in s.spacing_mm):
            problems.append(f"slice {i}: spacing {s.spacing_mm} must be two positive values")
        if s.phase != stack.phase:
            problems.append(f"slice {i}: phase {s.phase.value} differs from stack phase")
        if s.stack_id != stack.stack_id:
            problems.append(f"slice {i}: stack_id {s.stack_id!r} differs from stack")

    if stack.gt_masks is not None:
        if len(stack.gt_masks) != n:
            problems.append(f"gt_masks has {len(stack.gt_masks)} entries for {n} slices")
        for i, (m, s) in enumerate(zip(stack.gt_masks, stack.slices)):
            if m.shape != s.pixels.shape:
                problems.append(f"mask {i}: shape {m.shape} differs from image {s.pixels.shape}")
            bad = sorted(set(np.unique(m.labels).tolist()) - VALID_CODES)
            if bad:
                problems.append(f"mask {i}: invalid label codes {bad}")

    if stack.gt_regions is not None:
        if len(stack.gt_regions) != n:
            problems.append(f"gt_regions has {len(stack.gt_regions)} entries for {n} slices")
        if not region_blocks_ok(stack.gt_regions):
            seq = ", ".join(r.value for r in stack.gt_regions)
            problems.append(f"gt_regions not contiguous Base/Middle/Apex blocks: {seq}")
    return problems
