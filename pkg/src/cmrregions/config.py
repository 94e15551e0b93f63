"""Run configuration: named training profiles plus a JSON file and flag overrides."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .core import InvalidParams
from .models.checkpoint import canonical_json
from .models.config import ClassifierConfig, SegmenterConfig

PROFILES: dict[str, tuple[SegmenterConfig, ClassifierConfig]] = {
    # minutes on a laptop CPU with 64x64 phantoms
    "desk": (
        SegmenterConfig(epochs=20, batches_per_epoch=50, batch_size=8),
        ClassifierConfig(epochs=20, batch_size=16),
    ),
    # published schedule: 1000 epochs of 250 batches of 32; Adam 5e-4 for the classifier
    "paper": (
        SegmenterConfig(epochs=1000, batches_per_epoch=250, batch_size=32),
        ClassifierConfig(epochs=1000, batch_size=32),
    ),
}

ALL_ARMS = ("baseline", "sampled", "classified", "oracle")


@dataclass(frozen=True)
class RunConfig:
    data: Optional[str] = None
    out: Optional[str] = None
    models: Optional[str] = None
    split_seed: int = 0
    fractions: tuple = (0.7, 0.15, 0.15)
    arms: tuple = ("baseline",)
    sampler_ratio: float = 20.0
    profile: str = "desk"
    seed: int = 0
    dataset_name: str = "phantom"
    segmenter: Optional[dict] = None
    classifier: Optional[dict] = None

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise InvalidParams(f"unknown profile {self.profile!r}; choose from {sorted(PROFILES)}")
        bad = [a for a in self.arms if a not in ALL_ARMS]
        if bad:
            raise InvalidParams(f"unknown arms {bad}; choose from {list(ALL_ARMS)}")
        if self.sampler_ratio < 1:
            raise InvalidParams("sampler_ratio must be >= 1")
        for name, cls in (("segmenter", SegmenterConfig), ("classifier", ClassifierConfig)):
            given = getattr(self, name)
            if given is None:
                continue
            expected = {f.name for f in fields(cls)}
            missing, extra = expected - set(given), set(given) - expected
            if missing or extra:
                raise InvalidParams(
                    f"{name} config must be a complete set (missing {sorted(missing)}, "
                    f"unknown {sorted(extra)})"
                )
        object.__setattr__(self, "arms", tuple(self.arms))
        object.__setattr__(self, "fractions", tuple(float(f) for f in self.fractions))

    def segmenter_config(self) -> SegmenterConfig:
        if self.segmenter is not None:
            return replace(SegmenterConfig(**self.segmenter), seed=self.seed)
        return replace(PROFILES[self.profile][0], seed=self.seed)

    def classifier_config(self) -> ClassifierConfig:
        if self.classifier is not None:
            return replace(ClassifierConfig(**self.classifier), seed=self.seed)
        return replace(PROFILES[self.profile][1], seed=self.seed)

    def resolved(self) -> dict:
        d = asdict(self)
        d["segmenter"] = self.segmenter_config().to_dict()
        d["classifier"] = self.classifier_config().to_dict()
        # output locations do not change results
        for key in ("data", "out", "models"):
            d.pop(key)
        return d

    def hash(self) -> str:
        return hashlib.sha256(canonical_json(self.resolved()).encode("utf-8")).hexdigest()

    def check_paths(self, *names: str) -> None:
        for name in names:
            value = getattr(self, name)
            if value is None:
                raise InvalidParams(f"--{name} is required")
            if not Path(value).exists():
                raise InvalidParams(f"{name} path does not exist: {value}")


def load_run_config(path: Optional[str], overrides: dict) -> RunConfig:
    data: dict = {}
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidParams(f"cannot read config {path}: {exc}") from exc
        known = {f.name for f in fields(RunConfig)}
        unknown = set(data) - known
        if unknown:
            raise InvalidParams(f"unknown config keys: {sorted(unknown)}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**data)
