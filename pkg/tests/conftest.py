from __future__ import annotations

import json

import numpy as np
import pytest

from cmrregions.core import CmrStack, LabelMask, Phase, SliceImage
from cmrregions.phantom import PhantomParams, generate_dataset

ACCEPTANCE_LINES: list[str] = []

TINY_SEGMENTER = {
    "depth": 2, "base_channels": 4, "loss": "dice_plus_ce", "lr0": 0.01, "momentum": 0.99,
    "weight_decay": 3e-5, "poly_power": 0.9, "grad_clip": 12.0, "epochs": 2,
    "batches_per_epoch": 3, "batch_size": 4, "augment": True, "max_val_slices": 8, "seed": 0,
}
TINY_CLASSIFIER = {
    "conv_blocks": 2, "channels": 4, "loss": "cross_entropy", "lr0": 5e-4, "epochs": 2,
    "batch_size": 16, "augment": True, "seed": 0,
}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_stack(n=10, size=16, masks=None, regions=None, stack_id="s0", phase=Phase.ED):
    rng = np.random.default_rng(0)
    slices = [SliceImage(rng.random((size, size)), (1.0, 1.0), stack_id, i, phase) for i in range(n)]
    if masks is not None:
        masks = [LabelMask(m) for m in masks]
    return CmrStack(stack_id, phase, slices, masks, regions)


def blob_masks(n, size, cardiac):
    """Masks with a small LVBP square on the given slice indices, empty elsewhere."""
    out = []
    for i in range(n):
        m = np.zeros((size, size), dtype=np.uint8)
        if i in cardiac:
            m[4:8, 4:8] = 1
            m[3, 3:9] = 2
        out.append(m)
    return out


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("phantom10")
    index = generate_dataset(10, PhantomParams(), 3, root)
    return root, index


@pytest.fixture
def tiny_config_file(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps({"segmenter": TINY_SEGMENTER, "classifier": TINY_CLASSIFIER}))
    return path
