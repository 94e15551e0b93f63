"""Dice similarity coefficient and slice-level DSC tables."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from ..core import FOREGROUND_LABELS, CmrError, CmrStack, Label, LabelMask, Phase, Region


class ShapeMismatch(CmrError):
    pass


class MissingPrediction(CmrError):
    pass


def _labels(mask) -> np.ndarray:
    return mask.labels if isinstance(mask, LabelMask) else np.asarray(mask)


def dice(gt, pred, label_code: int) -> Optional[float]:
    """2|A∩B| / (|A|+|B|); ``None`` when neither mask contains the label."""
    g, p = _labels(gt), _labels(pred)
    if g.shape != p.shape:
        raise ShapeMismatch(f"ground truth {g.shape} vs prediction {p.shape}")
    a = g == label_code
    b = p == label_code
    size_a = int(np.count_nonzero(a))
    size_b = int(np.count_nonzero(b))
    if size_a + size_b == 0:
        return None
    inter = int(np.count_nonzero(a & b))
    return 2 * inter / (size_a + size_b)


@dataclass(frozen=True)
class DscRow:
    stack_id: str
    phase: Phase
    slice_index: int
    region: Region
    label: Label
    dsc: Optional[float]  # absent when both masks lack the label

    @property
    def key(self) -> tuple:
        return (self.stack_id, self.phase, self.slice_index, self.label)


CSV_HEADER = ("stack_id", "phase", "slice_index", "region", "label", "dsc")


@dataclass
class DscTable:
    rows: list[DscRow]

    def values(self, region: Region, label: Label) -> list[float]:
        return [r.dsc for r in self.rows
                if r.region == region and r.label == label and r.dsc is not None]

    def by_key(self) -> dict[tuple, DscRow]:
        return {r.key: r for r in self.rows}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([r.stack_id, r.phase.value, r.slice_index, r.region.value,
                        r.label.name, "" if r.dsc is None else repr(r.dsc)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DscTable":
        reader = csv.DictReader(io.StringIO(text))
        return cls([
            DscRow(r["stack_id"], Phase(r["phase"]), int(r["slice_index"]),
                   Region(r["region"]), Label[r["label"]],
                   float(r["dsc"]) if r["dsc"] else None)
            for r in reader
        ])


def stack_dsc_rows(gt: CmrStack, preds: Sequence[LabelMask],
                   regions: Optional[Sequence[Region]] = None) -> list[DscRow]:
    regions = regions if regions is not None else gt.gt_regions
    if gt.gt_masks is None or regions is None:
        raise MissingPrediction(f"stack {gt.key} lacks ground-truth masks or regions")
    if len(preds) != len(gt.gt_masks):
        raise MissingPrediction(
            f"stack {gt.key}: {len(preds)} predictions for {len(gt.gt_masks)} slices"
        )
    # absent rows are kept so every arm yields the same (slice, label) keys
    return [
        DscRow(gt.stack_id, gt.phase, i, Region(regions[i]), label, dice(g, p, label))
        for i, (g, p) in enumerate(zip(gt.gt_masks, preds))
        for label in FOREGROUND_LABELS
    ]


def dsc_table(gt_stacks: Sequence[CmrStack], pred_store, regions: Optional[Mapping] = None) -> DscTable:
    """Slice-by-label DSC rows.

    ``pred_store`` is either a mapping from stack key (``<stack_id>_<phase>``)
    to predicted masks, or a predictions directory written by the pipeline.
    ``regions`` optionally overrides each stack's ground-truth regions, keyed
    the same way.
    """
    if isinstance(pred_store, (str, Path)):
        from ..dataio import load_masks

        root = Path(pred_store)

        def lookup(key):
            if not (root / key).is_dir():
                return None
            return load_masks(root / key)
    else:
        def lookup(key):
            return pred_store.get(key)

    rows: list[DscRow] = []
    for stack in gt_stacks:
        preds = lookup(stack.key)
        if preds is None:
            raise MissingPrediction(f"no predictions for stack {stack.key}")
        override = None if regions is None else regions.get(stack.key)
        rows.extend(stack_dsc_rows(stack, preds, override))
    return DscTable(rows)
