import numpy as np
import pytest

from cmrregions.core import (
    CmrStack,
    DatasetIndex,
    IndexRecord,
    LabelMask,
    Phase,
    Region,
    SliceImage,
    Split,
    region_blocks_ok,
    validate_stack,
)

from conftest import blob_masks, make_stack

B, M, A, NC = Region.BASE, Region.MIDDLE, Region.APEX, Region.NON_CARDIAC


def test_well_formed_stack_is_valid():
    regions = [NC, B, B, M, M, M, M, A, A, NC]
    stack = make_stack(10, masks=blob_masks(10, 16, range(1, 9)), regions=regions)
    assert validate_stack(stack) == []


def test_non_contiguous_regions_reported_once():
    stack = make_stack(4, regions=[B, M, B, A])
    problems = validate_stack(stack)
    assert len(problems) == 1
    assert "contiguous" in problems[0]


def test_invalid_mask_code_reported():
    masks = blob_masks(3, 16, {1})
    masks[1][0, 0] = 4
    problems = validate_stack(make_stack(3, masks=masks))
    assert len(problems) == 1
    assert "[4]" in problems[0]


def test_small_and_non_finite_images():
    px = np.zeros((6, 6))
    bad = np.zeros((16, 16))
    bad[0, 0] = np.nan
    stack = CmrStack("s", Phase.ED, [SliceImage(px, (1, 1), "s", 0), SliceImage(bad, (1, 1), "s", 1)])
    problems = validate_stack(stack)
    assert any("smaller than 8x8" in p for p in problems)
    assert any("non-finite" in p for p in problems)


def test_bad_spacing_and_index_order():
    s0 = SliceImage(np.zeros((8, 8)), (0.0, 1.0), "s", 1)
    problems = validate_stack(CmrStack("s", Phase.ED, [s0]))
    assert any("spacing" in p for p in problems)
    assert any("slice_index" in p for p in problems)


def test_mask_shape_mismatch():
    stack = make_stack(2, masks=[np.zeros((16, 16)), np.zeros((8, 8))])
    assert any("shape" in p for p in validate_stack(stack))


def test_validate_is_pure():
    stack = make_stack(4, regions=[B, M, B, A])
    assert validate_stack(stack) == validate_stack(stack)


@pytest.mark.parametrize(
    "seq, ok",
    [
        ([NC, B, M, A, NC], True),
        ([M], True),
        ([NC, NC], True),
        ([B, NC, M, A], True),  # annotation gap inside the cardiac range
        ([M, B], False),
        ([A, M], False),
        ([B, M, A, M], False),
    ],
)
def test_region_blocks(seq, ok):
    assert region_blocks_ok(seq) is ok


def test_types_are_immutable():
    s = SliceImage(np.zeros((8, 8)))
    with pytest.raises(ValueError):
        s.pixels[0, 0] = 1
    m = LabelMask(np.zeros((8, 8)))
    with pytest.raises(ValueError):
        m.labels[0, 0] = 1


def test_region_code_order():
    assert [r.code for r in (NC, B, M, A)] == [0, 1, 2, 3]
    assert Region.from_code(2) == M


def test_index_json_round_trip():
    idx = DatasetIndex([IndexRecord("a", Phase.ES, 3, A, Split.VAL)], "/x")
    back = DatasetIndex.from_json(idx.to_json())
    assert back.records == idx.records
