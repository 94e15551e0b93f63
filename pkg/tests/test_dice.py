import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from cmrregions.core import Label, LabelMask, Phase, Region
from cmrregions.metrics.dice import (
    DscTable,
    MissingPrediction,
    ShapeMismatch,
    dice,
    dsc_table,
)
from cmrregions.phantom import PhantomParams, generate_stack


def brute_dice(g, p, code):
    a = {(i, j) for i in range(g.shape[0]) for j in range(g.shape[1]) if g[i, j] == code}
    b = {(i, j) for i in range(p.shape[0]) for j in range(p.shape[1]) if p[i, j] == code}
    if not a and not b:
        return None
    return 2 * len(a & b) / (len(a) + len(b))


def test_examples():
    m = np.zeros((4, 4), np.uint8)
    m[0, :] = 1
    assert dice(m, m, 1) == 1.0
    other = np.zeros((4, 4), np.uint8)
    other[3, :] = 1
    assert dice(m, other, 1) == 0.0
    half = np.zeros((4, 4), np.uint8)
    half[0, :2] = 1
    half[1, :2] = 1
    assert dice(m, half, 1) == 0.5
    assert dice(m, m, 2) is None
    assert dice(m, np.zeros_like(m), 1) == 0.0


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        dice(np.zeros((4, 4)), np.zeros((4, 5)), 1)


def test_random_pairs_match_brute_force():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        g = rng.integers(0, 4, (16, 16)) * (rng.random((16, 16)) < rng.random())
        p = rng.integers(0, 4, (16, 16)) * (rng.random((16, 16)) < rng.random())
        for code in (1, 2, 3):
            assert dice(g, p, code) == brute_dice(g, p, code)


masks = arrays(np.uint8, (6, 6), elements=st.integers(0, 3))


@given(masks, masks, st.sampled_from([1, 2, 3]))
def test_dice_properties(g, p, code):
    d = dice(g, p, code)
    assert d == dice(p, g, code)
    a, b = g == code, p == code
    if d is None:
        assert not a.any() and not b.any()
        return
    assert 0.0 <= d <= 1.0
    assert (d == 1.0) == (np.array_equal(a, b) and a.any())
    assert (d == 0.0) == (not (a & b).any())


@pytest.fixture(scope="module")
def stack():
    return generate_stack(PhantomParams(seed=9))


def test_perfect_predictions(stack):
    table = dsc_table([stack], {stack.key: stack.gt_masks})
    assert len(table.rows) == 3 * len(stack)
    defined = [r for r in table.rows if r.dsc is not None]
    assert defined and all(r.dsc == 1.0 for r in defined)
    # defined exactly where the label occurs
    expected = sum(int((m.labels == c).any()) for m in stack.gt_masks for c in (1, 2, 3))
    assert len(defined) == expected
    assert {r.region for r in defined} <= {Region.BASE, Region.MIDDLE, Region.APEX}
    assert all(r.dsc is None for r in table.rows if r.region == Region.NON_CARDIAC)


def test_background_predictions(stack):
    empty = [LabelMask(np.zeros_like(m.labels)) for m in stack.gt_masks]
    table = dsc_table([stack], {stack.key: empty})
    assert {r.dsc for r in table.rows} == {0.0, None}


def test_missing_prediction(stack):
    with pytest.raises(MissingPrediction):
        dsc_table([stack], {})
    with pytest.raises(MissingPrediction):
        dsc_table([stack], {stack.key: stack.gt_masks[:3]})


def test_region_override(stack):
    regions = {stack.key: [Region.MIDDLE] * len(stack)}
    table = dsc_table([stack], {stack.key: stack.gt_masks}, regions)
    assert {r.region for r in table.rows} == {Region.MIDDLE}


def test_csv_round_trip(stack):
    rng = np.random.default_rng(0)
    preds = [LabelMask(np.where(rng.random(m.labels.shape) < 0.1, 0, m.labels)) for m in stack.gt_masks]
    table = dsc_table([stack], {stack.key: preds})
    text = table.to_csv()
    assert text.splitlines()[0] == "stack_id,phase,slice_index,region,label,dsc"
    assert any(r.dsc is None for r in table.rows)
    back = DscTable.from_csv(text)
    assert back.rows == table.rows
    assert back.rows[0].phase == Phase.ED and back.rows[0].label in Label


def test_arms_share_keys_when_absence_differs(stack):
    # a prediction on a non-cardiac slice turns an absent DSC into 0 for one arm only
    nc = stack.gt_regions.index(Region.NON_CARDIAC)
    stray = stack.gt_masks[nc].labels.copy()
    stray[0, 0] = 1
    preds = list(stack.gt_masks)
    preds[nc] = LabelMask(stray)
    a = dsc_table([stack], {stack.key: stack.gt_masks})
    b = dsc_table([stack], {stack.key: preds})
    assert a.by_key().keys() == b.by_key().keys()
    key = (stack.stack_id, stack.phase, nc, Label.LVBP)
    assert a.by_key()[key].dsc is None and b.by_key()[key].dsc == 0.0
