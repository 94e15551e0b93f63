import hashlib

import pytest
import torch

from cmrregions.core import DatasetIndex, Region, Split
from cmrregions.dataio import load_dataset_stack, load_masks
from cmrregions.models import ClassifierConfig, Scope, SegmenterConfig, train_segmenter
from cmrregions.models.checkpoint import ModelKind, from_network
from cmrregions.models.networks import RegionClassifier
from cmrregions.pipeline import (
    Arm,
    MissingGtRegions,
    MissingModel,
    ModelBundle,
    read_routing_log,
    run_arm,
    run_dataset,
)
from cmrregions.models.training import predict_masks

from conftest import TINY_CLASSIFIER, TINY_SEGMENTER


def constant_classifier(region: Region):
    cfg = ClassifierConfig(**{**TINY_CLASSIFIER, "conv_blocks": 2, "channels": 2})
    net = RegionClassifier(cfg.conv_blocks, cfg.channels)
    with torch.no_grad():
        for p in net.parameters():
            p.zero_()
        net.head.bias[region.code] = 1.0
    return from_network(net, ModelKind.CLASSIFIER, Scope.ALL, {"model": cfg.to_dict()}, [])


@pytest.fixture(scope="module")
def models(small_dataset):
    _, index = small_dataset
    cfg = SegmenterConfig(**TINY_SEGMENTER)
    out = {}
    for i, scope in enumerate(("all", "base", "middle", "apex")):
        out[scope] = train_segmenter(index, scope, None, SegmenterConfig(**{**cfg.to_dict(), "seed": i}))
    return out


@pytest.fixture(scope="module")
def bundle(models):
    return ModelBundle(models["all"], models["base"], models["middle"], models["apex"],
                       constant_classifier(Region.MIDDLE), models["all"])


@pytest.fixture(scope="module")
def test_stack(small_dataset):
    _, index = small_dataset
    sid, phase = index.stack_keys(Split.TEST)[0]
    return load_dataset_stack(index, sid, phase)


def test_oracle_routing_matches_gt(bundle, test_stack):
    masks, records = run_arm(Arm.ORACLE, bundle, test_stack)
    assert len(masks) == len(records) == len(test_stack)
    for rec, gt in zip(records, test_stack.gt_regions):
        expected = "baseline" if gt == Region.NON_CARDIAC else gt.value.lower()
        assert rec.model_used == expected
        assert rec.predicted_region == gt == rec.gt_region


def test_stub_classifier_routes_everything_to_middle(bundle, test_stack):
    masks, records = run_arm(Arm.CLASSIFIED, bundle, test_stack)
    assert {r.model_used for r in records} == {"middle"}
    assert {r.predicted_region for r in records} == {Region.MIDDLE}
    assert masks == predict_masks(bundle.middle_model, test_stack.slices)


def test_noncardiac_prediction_goes_to_baseline(bundle, test_stack):
    b = ModelBundle(bundle.baseline, bundle.base_model, bundle.middle_model, bundle.apex_model,
                    constant_classifier(Region.NON_CARDIAC))
    masks, records = run_arm(Arm.CLASSIFIED, b, test_stack)
    assert {r.model_used for r in records} == {"baseline"}
    assert masks == predict_masks(bundle.baseline, test_stack.slices)


def test_arm_equivalence(models, test_stack):
    same = models["all"]
    b = ModelBundle(same, same, same, same, constant_classifier(Region.APEX))
    ref, _ = run_arm(Arm.BASELINE, b, test_stack)
    assert run_arm(Arm.CLASSIFIED, b, test_stack)[0] == ref
    assert run_arm(Arm.ORACLE, b, test_stack)[0] == ref


def test_sampled_arm_uses_sampler_model(bundle, test_stack):
    _, records = run_arm(Arm.SAMPLED, bundle, test_stack)
    assert {r.model_used for r in records} == {"sampled"}
    assert {r.predicted_region for r in records} == {None}


def test_missing_models(models, test_stack):
    with pytest.raises(MissingModel):
        run_arm(Arm.ORACLE, ModelBundle(models["all"]), test_stack)
    b = ModelBundle(models["all"], models["base"], models["middle"], models["apex"])
    with pytest.raises(MissingModel):
        run_arm(Arm.CLASSIFIED, b, test_stack)
    with pytest.raises(MissingModel):
        run_arm(Arm.SAMPLED, b, test_stack)


def test_oracle_requires_gt(bundle, test_stack):
    with pytest.raises(MissingGtRegions):
        run_arm(Arm.ORACLE, bundle, test_stack.with_regions(None))


def _digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def test_run_dataset_accounting_and_idempotence(bundle, small_dataset, tmp_path):
    _, index = small_dataset
    store = run_dataset(Arm.ORACLE, bundle, index, tmp_path / "pred")
    keys = index.stack_keys(Split.TEST)
    dirs = sorted(p.name for p in store.iterdir() if p.is_dir())
    assert dirs == sorted(f"{s}_{ph.value}" for s, ph in keys)
    log = read_routing_log(store)
    n_slices = len(index.by_split(Split.TEST))
    assert len(log) == n_slices
    assert len({(r.stack_id, r.phase, r.slice_index) for r in log}) == n_slices
    assert len(load_masks(store / dirs[0])) == 12
    first = _digest(store)
    run_dataset(Arm.ORACLE, bundle, index, tmp_path / "pred")
    assert _digest(store) == first
    assert sorted(p.name for p in tmp_path.iterdir()) == ["pred"]


def test_run_dataset_empty_split(bundle, small_dataset, tmp_path):
    _, index = small_dataset
    only_train = DatasetIndex([r for r in index.records if r.split == Split.TRAIN], index.source_dir)
    store = run_dataset(Arm.BASELINE, bundle, only_train, tmp_path / "pred")
    assert [p.name for p in store.iterdir()] == ["routing.jsonl"]
    assert read_routing_log(store) == []


def test_run_dataset_annotates_stack(bundle, small_dataset, tmp_path):
    _, index = small_dataset
    stripped = ModelBundle(bundle.baseline, bundle.base_model, bundle.middle_model, bundle.apex_model)
    with pytest.raises(MissingModel):
        run_dataset(Arm.CLASSIFIED, stripped, index, tmp_path / "p")
    broken = DatasetIndex(index.records, str(tmp_path / "missing"))
    with pytest.raises(Exception, match="stack "):
        run_dataset(Arm.BASELINE, bundle, broken, tmp_path / "p")
