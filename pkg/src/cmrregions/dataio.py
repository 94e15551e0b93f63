"""On-disk dataset format, dataset indexing and external volume import.

A stack directory holds ``manifest.json``, ``images.f32`` (little-endian
float32, slice-major then row-major) and, when masks exist, ``masks.u8``.
"""

from __future__ import annotations

import json
import math
import os
import shutil
import tempfile
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .core import (
    CmrError,
    CmrStack,
    DatasetIndex,
    IndexRecord,
    InvalidParams,
    LabelMask,
    MissingMasks,
    Phase,
    Region,
    SliceImage,
    Split,
    VALID_CODES,
    validate_stack,
)
from .stratify import assign_regions

FORMAT_VERSION = 1
MANIFEST_FILE = "manifest.json"
IMAGES_FILE = "images.f32"
MASKS_FILE = "masks.u8"
INDEX_FILE = "index.json"


class IoFailure(CmrError):
    pass


class CorruptData(CmrError):
    pass


class UnsupportedVersion(CmrError):
    pass


class UnreadableSource(CmrError):
    pass


class RemapIncomplete(CmrError):
    pass


class EmptyDataset(CmrError):
    pass


class Orientation(str, Enum):
    BASE_FIRST = "base_first"
    APEX_FIRST = "apex_first"


@dataclass(frozen=True)
class StackManifest:
    stack_id: str
    phase: str
    n_slices: int
    height: int
    width: int
    spacing_mm: list
    has_masks: bool
    region_labels: Optional[list]
    format_version: int = FORMAT_VERSION

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def dump_json(obj, path: Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_dir_atomic(target: Path, fill: Callable[[Path], None]) -> None:
    """Populate a temp sibling directory, then swap it into place."""
    target = Path(target)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(prefix=f".{target.name}.", dir=target.parent))
    except OSError as exc:
        raise IoFailure(f"cannot write under {target.parent}: {exc}") from exc
    try:
        fill(tmp)
        if target.exists():
            trash = target.with_name(f".{target.name}.old-{os.getpid()}")
            os.replace(target, trash)
            os.replace(tmp, target)
            shutil.rmtree(trash, ignore_errors=True)
        else:
            os.replace(tmp, target)
    except OSError as exc:
        shutil.rmtree(tmp, ignore_errors=True)
        raise IoFailure(f"failed writing {target}: {exc}") from exc
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def _stack_arrays(stack: CmrStack) -> tuple[np.ndarray, Optional[np.ndarray]]:
    shapes = {s.pixels.shape for s in stack.slices}
    if len(shapes) != 1:
        raise InvalidParams(f"stack {stack.key}: slices differ in shape {sorted(shapes)}")
    images = np.stack([s.pixels for s in stack.slices]).astype("<f4")
    masks = None
    if stack.gt_masks is not None:
        masks = np.stack([m.labels for m in stack.gt_masks]).astype("<u1")
    return images, masks


def save_stack(stack: CmrStack, directory: str | Path) -> StackManifest:
    images, masks = _stack_arrays(stack)
    n, h, w = images.shape
    manifest = StackManifest(
        stack_id=stack.stack_id,
        phase=stack.phase.value,
        n_slices=n,
        height=h,
        width=w,
        spacing_mm=list(stack.slices[0].spacing_mm),
        has_masks=masks is not None,
        region_labels=None if stack.gt_regions is None else [r.value for r in stack.gt_regions],
    )

    def fill(tmp: Path) -> None:
        (tmp / IMAGES_FILE).write_bytes(images.tobytes())
        if masks is not None:
            (tmp / MASKS_FILE).write_bytes(masks.tobytes())
        (tmp / MANIFEST_FILE).write_text(manifest.to_json(), encoding="utf-8")

    write_dir_atomic(Path(directory), fill)
    return manifest


def read_manifest(directory: str | Path) -> StackManifest:
    path = Path(directory) / MANIFEST_FILE
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CorruptData(f"{path} is not valid JSON: {exc}") from exc
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"{path}: format_version {version!r} (supported: {FORMAT_VERSION})")
    try:
        return StackManifest(**data)
    except TypeError as exc:
        raise CorruptData(f"{path}: unexpected manifest keys: {exc}") from exc


def _read_payload(path: Path, dtype: str, shape: tuple[int, int, int]) -> np.ndarray:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    expected = math.prod(shape) * np.dtype(dtype).itemsize
    if len(raw) != expected:
        raise CorruptData(f"{path}: {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw, dtype=dtype).reshape(shape)


def load_masks(directory: str | Path, manifest: Optional[StackManifest] = None) -> list[LabelMask]:
    directory = Path(directory)
    manifest = manifest or read_manifest(directory)
    shape = (manifest.n_slices, manifest.height, manifest.width)
    masks = _read_payload(directory / MASKS_FILE, "<u1", shape)
    bad = sorted(set(np.unique(masks).tolist()) - VALID_CODES)
    if bad:
        raise CorruptData(f"{directory / MASKS_FILE}: invalid label codes {bad}")
    return [LabelMask(m) for m in masks]


def load_stack(directory: str | Path) -> CmrStack:
    directory = Path(directory)
    m = read_manifest(directory)
    shape = (m.n_slices, m.height, m.width)
    images = _read_payload(directory / IMAGES_FILE, "<f4", shape)
    phase = Phase(m.phase)
    slices = [
        SliceImage(images[i], tuple(m.spacing_mm), m.stack_id, i, phase)
        for i in range(m.n_slices)
    ]
    masks = load_masks(directory, m) if m.has_masks else None
    regions = None
    if m.region_labels is not None:
        try:
            regions = [Region(r) for r in m.region_labels]
        except ValueError as exc:
            raise CorruptData(f"{directory}: {exc}") from exc
    stack = CmrStack(m.stack_id, phase, slices, masks, regions)
    problems = validate_stack(stack)
    if problems:
        raise CorruptData(f"{directory}: " + "; ".join(problems))
    return stack


def stack_dirs(root: str | Path) -> list[Path]:
    root = Path(root)
    if not root.is_dir():
        return []
    return sorted(p for p in root.iterdir() if p.is_dir() and (p / MANIFEST_FILE).is_file())


# --- splitting -------------------------------------------------------------

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & _MASK64
    return h


def stack_hash(stack_id: str, seed: int) -> int:
    return splitmix64(fnv1a64(stack_id.encode("utf-8")) ^ (seed & _MASK64))


def split_sizes(n: int, fractions: tuple[float, float, float]) -> tuple[int, int, int]:
    """Floor for val and test, remainder to train."""
    n_val = math.floor(fractions[1] * n + 1e-9)
    n_test = math.floor(fractions[2] * n + 1e-9)
    return n - n_val - n_test, n_val, n_test


def assign_splits(stack_ids, seed: int, fractions) -> dict[str, Split]:
    ids = sorted(set(stack_ids))
    _, n_val, n_test = split_sizes(len(ids), fractions)
    ranked = sorted(ids, key=lambda s: (stack_hash(s, seed), s))
    out = {}
    for rank, sid in enumerate(ranked):
        if rank < n_test:
            out[sid] = Split.TEST
        elif rank < n_test + n_val:
            out[sid] = Split.VAL
        else:
            out[sid] = Split.TRAIN
    return out


def _check_fractions(fractions) -> tuple[float, float, float]:
    fr = tuple(float(f) for f in fractions)
    if len(fr) != 3 or any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise InvalidParams(f"split fractions must be three non-negative values summing to 1: {fractions}")
    return fr


def stack_regions(directory: Path, manifest: StackManifest) -> list[Region]:
    if manifest.region_labels is not None:
        return [Region(r) for r in manifest.region_labels]
    if not manifest.has_masks:
        raise MissingMasks(f"{directory}: neither region labels nor masks to derive them")
    masks = load_masks(directory, manifest)
    phase = Phase(manifest.phase)
    slices = [
        SliceImage(np.zeros((manifest.height, manifest.width), np.float32), (1, 1), manifest.stack_id, i, phase)
        for i in range(manifest.n_slices)
    ]
    return assign_regions(CmrStack(manifest.stack_id, phase, slices, masks))


def build_index(root: str | Path, split_seed: int,
                fractions=(0.7, 0.15, 0.15)) -> DatasetIndex:
    fractions = _check_fractions(fractions)
    dirs = stack_dirs(root)
    if not dirs:
        raise EmptyDataset(f"no stack directories under {root}")
    entries = []
    for d in dirs:
        m = read_manifest(d)
        entries.append((m.stack_id, Phase(m.phase), stack_regions(d, m)))
    splits = assign_splits([e[0] for e in entries], split_seed, fractions)
    records = []
    seen = set()
    for stack_id, phase, regions in sorted(entries, key=lambda e: (e[0], e[1].value)):
        if (stack_id, phase) in seen:
            raise CorruptData(f"duplicate stack {stack_id} {phase.value} under {root}")
        seen.add((stack_id, phase))
        for i, region in enumerate(regions):
            records.append(IndexRecord(stack_id, phase, i, region, splits[stack_id]))
    return DatasetIndex(records, str(root))


def save_index(index: DatasetIndex, path: str | Path) -> None:
    data = index.to_json()
    # keep the file relocatable: the root is wherever the file lives
    data["source_dir"] = ""
    dump_json(data, Path(path))


def load_index(path: str | Path) -> DatasetIndex:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    index = DatasetIndex.from_json(data)
    index.source_dir = str(path.parent)
    return index


def load_dataset_stack(index: DatasetIndex, stack_id: str, phase: Phase | str) -> CmrStack:
    return load_stack(Path(index.source_dir) / f"{stack_id}_{Phase(phase).value}")


# --- external import -------------------------------------------------------

@dataclass(frozen=True)
class LabelRemap:
    mapping: dict

    def __post_init__(self):
        mapping = {int(k): int(v) for k, v in dict(self.mapping).items()}
        bad = {k: v for k, v in mapping.items() if v not in VALID_CODES}
        if bad:
            raise InvalidParams(f"remap targets must be internal codes 0..3: {bad}")
        targets = [v for k, v in mapping.items() if v != 0]
        if len(targets) != len(set(targets)):
            raise InvalidParams(f"remap is not injective on foreground codes: {mapping}")
        object.__setattr__(self, "mapping", mapping)

    def inverse(self) -> "LabelRemap":
        return LabelRemap({v: k for k, v in self.mapping.items()})

    def apply(self, labels: np.ndarray) -> np.ndarray:
        codes = set(np.unique(labels).tolist())
        missing = sorted(c for c in codes if c != 0 and c not in self.mapping)
        if missing:
            raise RemapIncomplete(f"source label codes {missing} have no mapping")
        lut = {0: 0, **self.mapping}
        out = np.zeros(labels.shape, dtype=np.uint8)
        for src in codes:
            out[labels == src] = lut[src]
        return out


def _read_nifti(path: Path) -> tuple[np.ndarray, tuple[float, float]]:
    import nibabel as nib

    img = nib.load(str(path))
    data = np.asanyarray(img.dataobj)
    zooms = img.header.get_zooms()
    return data, (float(zooms[0]), float(zooms[1]))


# suffix -> reader(path) -> (3-D array with slices on the last axis, in-plane spacing)
VOLUME_READERS: dict[str, Callable[[Path], tuple[np.ndarray, tuple[float, float]]]] = {
    ".nii": _read_nifti,
    ".nii.gz": _read_nifti,
}


def read_volume(path: str | Path) -> tuple[np.ndarray, tuple[float, float]]:
    path = Path(path)
    name = path.name.lower()
    reader = next((r for sfx, r in sorted(VOLUME_READERS.items(), key=lambda kv: -len(kv[0]))
                   if name.endswith(sfx)), None)
    if reader is None:
        raise UnreadableSource(f"no volume reader for {path.name}")
    try:
        data, spacing = reader(path)
    except Exception as exc:
        raise UnreadableSource(f"cannot read {path}: {exc}") from exc
    data = np.asarray(data)
    if data.ndim == 4 and data.shape[3] == 1:
        data = data[..., 0]
    if data.ndim != 3:
        raise UnreadableSource(f"{path}: expected a 3-D volume, got shape {data.shape}")
    return data, spacing


def import_volume(source: str | Path, remap: LabelRemap,
                  orientation: Orientation | str, out_dir: str | Path,
                  labels: str | Path | None = None, phase: Phase | str = Phase.ED,
                  stack_id: Optional[str] = None) -> StackManifest:
    """Convert an external volume (plus optional label volume) to the internal format."""
    orientation = Orientation(orientation)
    phase = Phase(phase)
    source = Path(source)
    image, spacing = read_volume(source)
    if not np.all(np.isfinite(image)):
        raise UnreadableSource(f"{source}: non-finite intensities")
    mask_vol = None
    if labels is not None:
        lab, _ = read_volume(labels)
        if lab.shape != image.shape:
            raise UnreadableSource(f"label volume shape {lab.shape} differs from image {image.shape}")
        if not np.allclose(lab, np.round(lab)):
            raise UnreadableSource(f"{labels}: label volume is not integer-valued")
        mask_vol = remap.apply(np.round(lab).astype(np.int64))

    order = range(image.shape[2])
    if orientation == Orientation.APEX_FIRST:
        order = reversed(order)
    order = list(order)
    stack_id = stack_id or source.name.split(".")[0]
    slices = [
        SliceImage(image[:, :, k].astype(np.float32), spacing, stack_id, i, phase)
        for i, k in enumerate(order)
    ]
    masks = None
    if mask_vol is not None:
        masks = [LabelMask(mask_vol[:, :, k]) for k in order]
    stack = CmrStack(stack_id, phase, slices, masks)
    if masks is not None:
        stack = stack.with_regions(assign_regions(stack))
    problems = validate_stack(stack)
    if problems:
        raise UnreadableSource(f"{source}: " + "; ".join(problems))
    return save_stack(stack, out_dir)
