"""Checkpoint container and its on-disk form.

A checkpoint directory holds ``manifest.json`` (kind, scope, config, tensor
table, training log, content hash), ``params.f32`` (little-endian float32
tensors concatenated in the manifest's tensor order) and ``train_log.csv``.
The content hash is SHA-256 over the parameter bytes followed by the
canonical JSON of the config.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from ..core import CmrError
from ..dataio import IoFailure, write_dir_atomic
from .config import ClassifierConfig, SegmenterConfig
from .networks import RegionClassifier, UNet2D

CHECKPOINT_VERSION = 1
MANIFEST_FILE = "manifest.json"
PARAMS_FILE = "params.f32"
LOG_FILE = "train_log.csv"


class KindMismatch(CmrError):
    pass


class CorruptCheckpoint(CmrError):
    pass


class ModelKind(str, Enum):
    SEGMENTER = "segmenter"
    CLASSIFIER = "classifier"


class Scope(str, Enum):
    ALL = "all"
    BASE = "base"
    MIDDLE = "middle"
    APEX = "apex"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def content_hash(params: bytes, config: dict) -> str:
    h = hashlib.sha256()
    h.update(params)
    h.update(canonical_json(config).encode("utf-8"))
    return h.hexdigest()


@dataclass(eq=False)
class Checkpoint:
    model_kind: ModelKind
    region_scope: Scope
    config: dict
    tensors: list  # [name, shape] in blob order
    params: bytes
    log: list = field(default_factory=list)
    hash: str = ""
    _model: Optional[torch.nn.Module] = field(default=None, repr=False)

    def __post_init__(self):
        self.model_kind = ModelKind(self.model_kind)
        self.region_scope = Scope(self.region_scope)
        if not self.hash:
            self.hash = content_hash(self.params, self.config)

    def verify(self) -> None:
        if content_hash(self.params, self.config) != self.hash:
            raise CorruptCheckpoint("content hash does not match parameters and config")

    def require(self, kind: ModelKind) -> None:
        if self.model_kind != kind:
            raise KindMismatch(f"expected a {kind.value} checkpoint, got {self.model_kind.value}")

    def model(self) -> torch.nn.Module:
        if self._model is None:
            net = build_network(self.model_kind, self.config)
            load_params(net, self.params, self.tensors)
            net.eval()
            self._model = net
        return self._model


def build_network(kind: ModelKind, config: dict) -> torch.nn.Module:
    if ModelKind(kind) == ModelKind.SEGMENTER:
        cfg = SegmenterConfig.from_dict(config["model"])
        return UNet2D(cfg.depth, cfg.base_channels)
    cfg = ClassifierConfig.from_dict(config["model"])
    return RegionClassifier(cfg.conv_blocks, cfg.channels)


def dump_params(net: torch.nn.Module) -> tuple[list, bytes]:
    table, chunks = [], []
    for name, tensor in net.state_dict().items():
        arr = tensor.detach().cpu().numpy().astype("<f4")
        table.append([name, list(arr.shape)])
        chunks.append(arr.tobytes())
    return table, b"".join(chunks)


def load_params(net: torch.nn.Module, params: bytes, table: list) -> None:
    state = {}
    offset = 0
    for name, shape in table:
        count = int(np.prod(shape)) if shape else 1
        nbytes = 4 * count
        if offset + nbytes > len(params):
            raise CorruptCheckpoint(f"parameter blob too short at tensor {name}")
        arr = np.frombuffer(params, dtype="<f4", count=count, offset=offset).reshape(shape)
        state[name] = torch.from_numpy(arr.astype(np.float32))
        offset += nbytes
    if offset != len(params):
        raise CorruptCheckpoint(f"{len(params) - offset} trailing bytes in parameter blob")
    try:
        net.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise CorruptCheckpoint(str(exc)) from exc


def from_network(net: torch.nn.Module, kind: ModelKind, scope: Scope, config: dict,
                 log: list) -> Checkpoint:
    table, blob = dump_params(net)
    return Checkpoint(kind, scope, config, table, blob, log)


def log_csv(log: list) -> str:
    buf = io.StringIO()
    if log:
        keys = list(log[0].keys())
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(keys)
        for row in log:
            w.writerow([repr(row[k]) if isinstance(row[k], float) else row[k] for k in keys])
    return buf.getvalue()


def save_checkpoint(ckpt: Checkpoint, directory: str | Path) -> Path:
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "model_kind": ckpt.model_kind.value,
        "region_scope": ckpt.region_scope.value,
        "config": ckpt.config,
        "tensors": ckpt.tensors,
        "param_dtype": "<f4",
        "log": ckpt.log,
        "content_hash": ckpt.hash,
    }

    def fill(tmp: Path) -> None:
        (tmp / PARAMS_FILE).write_bytes(ckpt.params)
        (tmp / MANIFEST_FILE).write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        (tmp / LOG_FILE).write_text(log_csv(ckpt.log), encoding="utf-8")

    directory = Path(directory)
    write_dir_atomic(directory, fill)
    return directory


def load_checkpoint(directory: str | Path) -> Checkpoint:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / MANIFEST_FILE).read_text(encoding="utf-8"))
        params = (directory / PARAMS_FILE).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read checkpoint {directory}: {exc}") from exc
    if manifest.get("format_version") != CHECKPOINT_VERSION:
        raise CorruptCheckpoint(f"{directory}: unsupported format {manifest.get('format_version')!r}")
    ckpt = Checkpoint(
        manifest["model_kind"], manifest["region_scope"], manifest["config"],
        manifest["tensors"], params, manifest.get("log", []), manifest["content_hash"],
    )
    ckpt.verify()
    return ckpt
