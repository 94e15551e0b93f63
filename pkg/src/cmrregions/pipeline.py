"""Inference arms: single-model, classifier-routed and ground-truth-routed segmentation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from .core import CmrError, CmrStack, DatasetIndex, LabelMask, Region, Split
from .dataio import FORMAT_VERSION, MANIFEST_FILE, MASKS_FILE, StackManifest, load_dataset_stack, write_dir_atomic
from .models.checkpoint import Checkpoint
from .models.training import predict_masks, predict_regions

ROUTING_LOG = "routing.jsonl"


class MissingModel(CmrError):
    pass


class MissingGtRegions(CmrError):
    pass


class Arm(str, Enum):
    BASELINE = "baseline"
    SAMPLED = "sampled"
    CLASSIFIED = "classified"
    ORACLE = "oracle"


@dataclass
class ModelBundle:
    baseline: Checkpoint
    base_model: Optional[Checkpoint] = None
    middle_model: Optional[Checkpoint] = None
    apex_model: Optional[Checkpoint] = None
    classifier: Optional[Checkpoint] = None
    sampler_model: Optional[Checkpoint] = None

    def region_model(self, region: Region) -> Checkpoint:
        return {
            Region.BASE: self.base_model,
            Region.MIDDLE: self.middle_model,
            Region.APEX: self.apex_model,
        }[region]

    def check(self, arm: Arm) -> None:
        missing = []
        if self.baseline is None:
            missing.append("baseline")
        if arm == Arm.SAMPLED and self.sampler_model is None:
            missing.append("sampler_model")
        if arm in (Arm.CLASSIFIED, Arm.ORACLE):
            missing += [n for n in ("base_model", "middle_model", "apex_model")
                        if getattr(self, n) is None]
        if arm == Arm.CLASSIFIED and self.classifier is None:
            missing.append("classifier")
        if missing:
            raise MissingModel(f"arm {arm.value!r} needs: {', '.join(missing)}")


@dataclass(frozen=True)
class RoutingRecord:
    stack_id: str
    phase: str
    slice_index: int
    predicted_region: Optional[Region]
    model_used: str  # baseline, sampled, base, middle or apex
    gt_region: Optional[Region]

    def to_json(self) -> str:
        return json.dumps({
            "stack_id": self.stack_id,
            "phase": self.phase,
            "slice_index": self.slice_index,
            "predicted_region": None if self.predicted_region is None else self.predicted_region.value,
            "model_used": self.model_used,
            "gt_region": None if self.gt_region is None else self.gt_region.value,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "RoutingRecord":
        d = json.loads(line)
        return cls(
            d["stack_id"], d["phase"], d["slice_index"],
            None if d["predicted_region"] is None else Region(d["predicted_region"]),
            d["model_used"],
            None if d["gt_region"] is None else Region(d["gt_region"]),
        )


def _route(arm: Arm, bundle: ModelBundle, stack: CmrStack) -> list[tuple[Optional[Region], str]]:
    n = len(stack)
    if arm == Arm.BASELINE:
        return [(None, "baseline")] * n
    if arm == Arm.SAMPLED:
        return [(None, "sampled")] * n
    if arm == Arm.ORACLE:
        if stack.gt_regions is None:
            raise MissingGtRegions(f"stack {stack.key} has no ground-truth regions")
        regions = list(stack.gt_regions)
    else:
        regions = [r for r, _ in predict_regions(bundle.classifier, stack.slices)]
    return [
        (r, "baseline" if r == Region.NON_CARDIAC else r.value.lower())
        for r in regions
    ]


def run_arm(arm: Arm | str, bundle: ModelBundle,
            stack: CmrStack) -> tuple[list[LabelMask], list[RoutingRecord]]:
    arm = Arm(arm)
    bundle.check(arm)
    routes = _route(arm, bundle, stack)
    models = {
        "baseline": bundle.baseline,
        "sampled": bundle.sampler_model,
        "base": bundle.base_model,
        "middle": bundle.middle_model,
        "apex": bundle.apex_model,
    }
    masks: list[Optional[LabelMask]] = [None] * len(stack)
    for name in sorted({m for _, m in routes}):
        ids = [i for i, (_, m) in enumerate(routes) if m == name]
        preds = predict_masks(models[name], [stack.slices[i] for i in ids])
        for i, p in zip(ids, preds):
            masks[i] = p
    gt = stack.gt_regions
    records = [
        RoutingRecord(stack.stack_id, stack.phase.value, i, region, used,
                      None if gt is None else gt[i])
        for i, (region, used) in enumerate(routes)
    ]
    return masks, records


def _write_prediction(directory: Path, stack: CmrStack, masks: list[LabelMask]) -> None:
    arr = np.stack([m.labels for m in masks]).astype("<u1")
    manifest = StackManifest(
        stack_id=stack.stack_id, phase=stack.phase.value, n_slices=arr.shape[0],
        height=arr.shape[1], width=arr.shape[2], spacing_mm=list(stack.slices[0].spacing_mm),
        has_masks=True, region_labels=None, format_version=FORMAT_VERSION,
    )
    directory.mkdir()
    (directory / MASKS_FILE).write_bytes(arr.tobytes())
    (directory / MANIFEST_FILE).write_text(manifest.to_json(), encoding="utf-8")


def run_dataset(arm: Arm | str, bundle: ModelBundle, index: DatasetIndex, out_dir: str | Path,
                split: Split = Split.TEST) -> Path:
    """Predict every stack of ``split`` into ``out_dir`` (replaced as a whole)."""
    arm = Arm(arm)
    bundle.check(arm)
    results = []
    for stack_id, phase in index.stack_keys(split):
        try:
            stack = load_dataset_stack(index, stack_id, phase)
            masks, records = run_arm(arm, bundle, stack)
        except CmrError as exc:
            raise type(exc)(f"stack {stack_id} {phase.value}: {exc}") from exc
        results.append((stack, masks, records))

    def fill(tmp: Path) -> None:
        lines = []
        for stack, masks, records in results:
            _write_prediction(tmp / stack.key, stack, masks)
            lines.extend(records)
        lines.sort(key=lambda r: (r.stack_id, r.phase, r.slice_index))
        (tmp / ROUTING_LOG).write_text("".join(r.to_json() + "\n" for r in lines), encoding="utf-8")

    out_dir = Path(out_dir)
    write_dir_atomic(out_dir, fill)
    return out_dir


def read_routing_log(store: str | Path) -> list[RoutingRecord]:
    text = (Path(store) / ROUTING_LOG).read_text(encoding="utf-8")
    return [RoutingRecord.from_json(line) for line in text.splitlines() if line]
