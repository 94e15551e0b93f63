"""Deterministic training loops and inference for the segmenter and classifier."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from ..core import (
    FOREGROUND_LABELS,
    REGION_ORDER,
    CmrError,
    DatasetIndex,
    IndexRecord,
    LabelMask,
    Region,
    SliceImage,
    Split,
)
from ..dataio import load_dataset_stack
from ..metrics.dice import dice
from ..sampler import SamplerWeights, sample_batch
from .checkpoint import Checkpoint, ModelKind, Scope, from_network
from .config import ClassifierConfig, SegmenterConfig, poly_lr
from .losses import compound_loss
from .networks import RegionClassifier, UNet2D

log = logging.getLogger(__name__)

SCOPE_REGION = {Scope.BASE: Region.BASE, Scope.MIDDLE: Region.MIDDLE, Scope.APEX: Region.APEX}
MAX_ROTATION_DEG = 10.0


class EmptyScope(CmrError):
    pass


class DivergedTraining(CmrError):
    pass


class MissingClass(CmrError):
    pass


# --- preprocessing ----------------------------------------------------------

def normalize(pixels: np.ndarray) -> np.ndarray:
    p = np.asarray(pixels, dtype=np.float64)
    sd = p.std()
    return ((p - p.mean()) / max(sd, 1e-6)).astype(np.float32)


def padded_shape(shapes, multiple: int) -> tuple[int, int]:
    h = max(s[0] for s in shapes)
    w = max(s[1] for s in shapes)
    return (-(-h // multiple) * multiple, -(-w // multiple) * multiple)


def pad_center(arr: np.ndarray, shape: tuple[int, int]) -> tuple[np.ndarray, tuple[int, int]]:
    top = (shape[0] - arr.shape[0]) // 2
    left = (shape[1] - arr.shape[1]) // 2
    out = np.zeros(shape, dtype=arr.dtype)
    out[top:top + arr.shape[0], left:left + arr.shape[1]] = arr
    return out, (top, left)


def resize_for_classifier(pixels: np.ndarray, size: int = RegionClassifier.input_size) -> torch.Tensor:
    x = torch.from_numpy(normalize(pixels))[None, None]
    if x.shape[-2:] != (size, size):
        x = F.interpolate(x, size=(size, size), mode="bilinear", align_corners=False)
    return x[0]


class SliceBank:
    """In-memory slices for a list of index records, in record order."""

    def __init__(self, index: DatasetIndex, records: Sequence[IndexRecord]):
        self.records = list(records)
        cache = {}
        images, masks = [], []
        for r in self.records:
            key = (r.stack_id, r.phase)
            if key not in cache:
                cache[key] = load_dataset_stack(index, r.stack_id, r.phase)
            stack = cache[key]
            images.append(stack.slices[r.slice_index].pixels)
            masks.append(None if stack.gt_masks is None else stack.gt_masks[r.slice_index].labels)
        self.images = images
        self.masks = masks
        self.regions = np.array([r.region.code for r in self.records], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.records)

    def segmentation_tensors(self, multiple: int) -> tuple[torch.Tensor, torch.Tensor]:
        if any(m is None for m in self.masks):
            raise EmptyScope("segmenter training needs ground-truth masks on every slice")
        shape = padded_shape([im.shape for im in self.images], multiple)
        x = np.stack([pad_center(normalize(im), shape)[0] for im in self.images])
        y = np.stack([pad_center(m, shape)[0] for m in self.masks]).astype(np.int64)
        return torch.from_numpy(x)[:, None], torch.from_numpy(y)

    def classifier_tensor(self) -> torch.Tensor:
        return torch.stack([resize_for_classifier(im) for im in self.images])


def augment(x: torch.Tensor, y: Optional[torch.Tensor], gen: torch.Generator):
    """Random flips on both axes and a rotation within +-10 degrees, per sample."""
    b = x.shape[0]
    flips = torch.rand(b, 2, generator=gen) < 0.5
    angles = (torch.rand(b, generator=gen) * 2 - 1) * math.radians(MAX_ROTATION_DEG)
    cos, sin = torch.cos(angles), torch.sin(angles)
    sx = torch.where(flips[:, 1], -1.0, 1.0)
    sy = torch.where(flips[:, 0], -1.0, 1.0)
    theta = torch.zeros(b, 2, 3)
    theta[:, 0, 0] = cos * sx
    theta[:, 0, 1] = -sin * sy
    theta[:, 1, 0] = sin * sx
    theta[:, 1, 1] = cos * sy
    theta = theta.to(x.dtype)
    grid = F.affine_grid(theta, list(x.shape), align_corners=False)
    x_out = F.grid_sample(x, grid, mode="bilinear", padding_mode="zeros", align_corners=False)
    if y is None:
        return x_out, None
    y_out = F.grid_sample(y[:, None].to(x.dtype), grid, mode="nearest",
                          padding_mode="zeros", align_corners=False)
    return x_out, y_out[:, 0].round().long()


def _init_network(factory, seed: int) -> torch.nn.Module:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return factory()


# --- segmentation ------------------------------------------------------------

def scope_records(index: DatasetIndex, scope: Scope, split: Split) -> list[IndexRecord]:
    recs = index.by_split(split)
    if scope == Scope.ALL:
        return recs
    return [r for r in recs if r.region == SCOPE_REGION[scope]]


@torch.no_grad()
def _segment_batch(net: torch.nn.Module, images: Sequence[np.ndarray], multiple: int,
                   batch: int = 32) -> list[np.ndarray]:
    out = []
    for start in range(0, len(images), batch):
        chunk = images[start:start + batch]
        shape = padded_shape([im.shape for im in chunk], multiple)
        padded, offsets = zip(*(pad_center(normalize(im), shape) for im in chunk))
        x = torch.from_numpy(np.stack(padded))[:, None]
        labels = net(x).argmax(dim=1).numpy().astype(np.uint8)
        for lab, (top, left), im in zip(labels, offsets, chunk):
            out.append(lab[top:top + im.shape[0], left:left + im.shape[1]].copy())
    return out


def _mean_foreground_dsc(gts, preds) -> float:
    vals = [d for g, p in zip(gts, preds) for lab in FOREGROUND_LABELS
            if (d := dice(g, p, lab)) is not None]
    return float(np.mean(vals)) if vals else float("nan")


def train_segmenter(index: DatasetIndex, scope: Scope | str = Scope.ALL,
                    sampler: Optional[SamplerWeights] = None,
                    config: SegmenterConfig = SegmenterConfig()) -> Checkpoint:
    scope = Scope(scope)
    if sampler is not None and scope != Scope.ALL:
        raise ValueError("a sampler can only be combined with scope 'all'")
    records = list(sampler.records) if sampler is not None else scope_records(index, scope, Split.TRAIN)
    if not records:
        raise EmptyScope(f"no training slices for scope {scope.value!r}")

    net = _init_network(lambda: UNet2D(config.depth, config.base_channels), config.seed)
    bank = SliceBank(index, records)
    x_all, y_all = bank.segmentation_tensors(net.size_multiple)

    val_records = scope_records(index, scope, Split.VAL)
    if len(val_records) > config.max_val_slices:
        step = len(val_records) / config.max_val_slices
        val_records = [val_records[int(i * step)] for i in range(config.max_val_slices)]
    val_bank = SliceBank(index, val_records) if val_records else None

    opt = torch.optim.SGD(net.parameters(), lr=config.lr0, momentum=config.momentum,
                          nesterov=True, weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed)
    gen = torch.Generator().manual_seed(config.seed)
    history = []
    for epoch in range(config.epochs):
        lr = poly_lr(config.lr0, epoch, config.epochs, config.poly_power)
        for group in opt.param_groups:
            group["lr"] = lr
        net.train()
        losses = []
        for _ in range(config.batches_per_epoch):
            if sampler is not None:
                ids = sample_batch(sampler, rng, config.batch_size)
            else:
                ids = rng.integers(0, len(bank), config.batch_size).tolist()
            x, y = x_all[ids], y_all[ids]
            if config.augment:
                x, y = augment(x, y, gen)
            loss = compound_loss(net(x), y)
            if not torch.isfinite(loss):
                raise DivergedTraining(f"non-finite loss at epoch {epoch}")
            opt.zero_grad(set_to_none=True)
            loss.backward()
            torch.nn.utils.clip_grad_norm_(net.parameters(), config.grad_clip)
            opt.step()
            losses.append(loss.item())
        net.eval()
        val = float("nan")
        if val_bank is not None:
            preds = _segment_batch(net, val_bank.images, net.size_multiple)
            val = _mean_foreground_dsc(val_bank.masks, preds)
        row = {"epoch": epoch, "lr": lr, "train_loss": float(np.mean(losses)), "val_dsc": val}
        history.append(row)
        log.info("segmenter[%s] epoch %d loss %.4f val_dsc %.4f", scope.value, epoch,
                 row["train_loss"], val)

    snapshot = {
        "model": config.to_dict(),
        "sampler": None if sampler is None else asdict(sampler.config),
        "n_train_slices": len(records),
    }
    return from_network(net, ModelKind.SEGMENTER, scope, snapshot, history)


def predict_masks(ckpt: Checkpoint, slices: Sequence[SliceImage]) -> list[LabelMask]:
    ckpt.require(ModelKind.SEGMENTER)
    net = ckpt.model()
    labels = _segment_batch(net, [s.pixels for s in slices], net.size_multiple)
    return [LabelMask(lab) for lab in labels]


def predict_segmentation(ckpt: Checkpoint, slice_: SliceImage) -> LabelMask:
    return predict_masks(ckpt, [slice_])[0]


# --- classification ----------------------------------------------------------

def _class_weights(codes: np.ndarray) -> torch.Tensor:
    counts = np.bincount(codes, minlength=len(REGION_ORDER)).astype(np.float64)
    return torch.tensor(counts.sum() / (len(counts) * counts), dtype=torch.float32)


@torch.no_grad()
def _classify(net: torch.nn.Module, x: torch.Tensor, batch: int = 64) -> torch.Tensor:
    return torch.cat([net(x[i:i + batch]) for i in range(0, len(x), batch)])


def train_classifier(index: DatasetIndex, config: ClassifierConfig = ClassifierConfig()) -> Checkpoint:
    records = index.by_split(Split.TRAIN)
    present = {r.region for r in records}
    missing = [r.value for r in REGION_ORDER if r not in present]
    if missing:
        raise MissingClass(f"training split lacks regions: {', '.join(missing)}")

    net = _init_network(lambda: RegionClassifier(config.conv_blocks, config.channels), config.seed)
    bank = SliceBank(index, records)
    x_all = bank.classifier_tensor()
    y_all = torch.from_numpy(bank.regions)
    weight = _class_weights(bank.regions) if config.loss == "weighted_cross_entropy" else None

    val_records = index.by_split(Split.VAL)
    val_x = val_y = None
    if val_records:
        vb = SliceBank(index, val_records)
        val_x, val_y = vb.classifier_tensor(), torch.from_numpy(vb.regions)

    opt = torch.optim.Adam(net.parameters(), lr=config.lr0)
    rng = np.random.default_rng(config.seed)
    gen = torch.Generator().manual_seed(config.seed)
    history = []
    for epoch in range(config.epochs):
        net.train()
        order = rng.permutation(len(bank))
        losses = []
        for start in range(0, len(order), config.batch_size):
            ids = order[start:start + config.batch_size].tolist()
            x, y = x_all[ids], y_all[ids]
            if config.augment:
                x, _ = augment(x, None, gen)
            loss = F.cross_entropy(net(x), y, weight=weight)
            if not torch.isfinite(loss):
                raise DivergedTraining(f"non-finite loss at epoch {epoch}")
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            losses.append(loss.item())
        net.eval()
        acc = float("nan")
        if val_x is not None:
            acc = float((_classify(net, val_x).argmax(1) == val_y).double().mean())
        history.append({"epoch": epoch, "lr": config.lr0,
                        "train_loss": float(np.mean(losses)), "val_accuracy": acc})
        log.info("classifier epoch %d loss %.4f val_acc %.4f", epoch, history[-1]["train_loss"], acc)

    snapshot = {"model": config.to_dict(), "n_train_slices": len(records)}
    return from_network(net, ModelKind.CLASSIFIER, Scope.ALL, snapshot, history)


def region_from_logits(logits) -> tuple[Region, np.ndarray]:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    probs = np.exp(z)
    probs /= probs.sum()
    # argmax returns the first maximum, i.e. the lower-ordered region on ties
    return Region.from_code(int(np.argmax(z))), probs


def predict_regions(ckpt: Checkpoint, slices: Sequence[SliceImage]) -> list[tuple[Region, np.ndarray]]:
    ckpt.require(ModelKind.CLASSIFIER)
    if not slices:
        return []
    x = torch.stack([resize_for_classifier(s.pixels) for s in slices])
    logits = _classify(ckpt.model(), x).double().numpy()
    return [region_from_logits(row) for row in logits]


def predict_region(ckpt: Checkpoint, slice_: SliceImage) -> tuple[Region, np.ndarray]:
    return predict_regions(ckpt, [slice_])[0]
