from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from ..core import InvalidParams


@dataclass(frozen=True)
class SegmenterConfig:
    depth: int = 4
    base_channels: int = 16
    loss: str = "dice_plus_ce"
    lr0: float = 0.01
    momentum: float = 0.99
    weight_decay: float = 3e-5
    poly_power: float = 0.9
    grad_clip: float = 12.0
    epochs: int = 20
    batches_per_epoch: int = 50
    batch_size: int = 8
    augment: bool = True
    max_val_slices: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.depth < 2:
            raise InvalidParams("depth must be >= 2")
        if self.batch_size < 1 or self.epochs < 1 or self.batches_per_epoch < 1:
            raise InvalidParams("epochs, batches_per_epoch and batch_size must be >= 1")
        if self.loss != "dice_plus_ce":
            raise InvalidParams(f"unsupported segmentation loss {self.loss!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SegmenterConfig":
        return cls(**{f.name: data[f.name] for f in fields(cls) if f.name in data})


@dataclass(frozen=True)
class ClassifierConfig:
    conv_blocks: int = 4
    channels: int = 16
    loss: str = "cross_entropy"
    lr0: float = 5e-4
    epochs: int = 20
    batch_size: int = 16
    augment: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.conv_blocks < 2:
            raise InvalidParams("conv_blocks must be >= 2")
        if self.batch_size < 1 or self.epochs < 1:
            raise InvalidParams("epochs and batch_size must be >= 1")
        if self.loss not in ("cross_entropy", "weighted_cross_entropy"):
            raise InvalidParams(f"unsupported classifier loss {self.loss!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ClassifierConfig":
        return cls(**{f.name: data[f.name] for f in fields(cls) if f.name in data})


def poly_lr(lr0: float, epoch: int, epochs: int, power: float = 0.9) -> float:
    return lr0 * (1.0 - epoch / epochs) ** power
