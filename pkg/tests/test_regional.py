import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cmrregions.core import Label, Phase, Region
from cmrregions.metrics.dice import DscRow, DscTable
from cmrregions.metrics.regional import (
    EmptyInput,
    KeyMismatch,
    aggregate_profiles,
    cell_stats,
    delta_table,
    interpolate_profile,
    region_stats,
    table_profiles,
)

B, M, A, NC = Region.BASE, Region.MIDDLE, Region.APEX, Region.NON_CARDIAC
LV, MYO, RV = Label.LVBP, Label.LVM, Label.RVBP


def test_profile_examples():
    g = interpolate_profile([(0, 0.8), (0.5, 0.9), (1, 1.0)])
    assert len(g) == 101
    assert g[0] == 0.8 and g[50] == 0.9 and g[100] == 1.0
    assert np.all(interpolate_profile([(0.5, 0.7)]) == 0.7)
    lin = interpolate_profile([(0, 1.0), (1, 0.0)])
    assert np.allclose(lin, 1 - np.arange(101) / 100, atol=1e-15)


def test_profile_clamps_outside_hull():
    g = interpolate_profile([(0.2, 0.4), (0.6, 0.8)])
    assert np.all(g[:21] == 0.4) and np.all(g[60:] == 0.8)


def test_profile_errors():
    with pytest.raises(EmptyInput):
        interpolate_profile([])
    with pytest.raises(ValueError):
        interpolate_profile([(0.5, 1), (0.5, 1)])


@given(st.floats(-5, 5), st.floats(-5, 5), st.sets(st.integers(0, 100), min_size=2, max_size=20))
def test_profile_reproduces_affine(a, b, ks):
    xs = sorted(k / 100 for k in ks)
    xs[0], xs[-1] = 0.0, 1.0
    xs = sorted(set(xs))
    if len(xs) < 2:
        return
    g = interpolate_profile([(x, a + b * x) for x in xs])
    assert np.allclose(g, a + b * np.arange(101) / 100, atol=1e-12)


def test_aggregate():
    p = np.linspace(0, 1, 101)
    assert np.array_equal(aggregate_profiles([p], LV).values, p)
    agg = aggregate_profiles([np.full(101, 0.8), np.full(101, 1.0)], LV)
    assert np.allclose(agg.values, 0.9, atol=1e-15) and agg.n_stacks == 2
    with pytest.raises(EmptyInput):
        aggregate_profiles([], LV)


@given(st.lists(st.lists(st.floats(0, 1), min_size=101, max_size=101), min_size=1, max_size=6),
       st.randoms())
def test_aggregate_order_invariant(profiles, rnd):
    shuffled = list(profiles)
    rnd.shuffle(shuffled)
    a = aggregate_profiles([np.array(p) for p in profiles], LV).values
    b = aggregate_profiles([np.array(p) for p in shuffled], LV).values
    assert np.array_equal(a, b)


def rows_for(stack, values, region, label=LV, start=0, phase=Phase.ED):
    return [DscRow(stack, phase, start + i, region, label, v) for i, v in enumerate(values)]


def test_region_stats_two_point():
    table = DscTable(rows_for("s", [0.9, 0.95], B))
    st_ = region_stats(table)
    cell = st_[(B, LV)]
    assert cell.mean == pytest.approx(92.5, abs=1e-12)
    assert cell.sd == pytest.approx(3.5355339059327378, abs=1e-12)
    assert st_[(A, LV)].n == 0 and st_[(A, LV)].mean is None
    assert set(st_) == {(r, lab) for r in (B, M, A) for lab in (LV, MYO, RV)}


def test_cell_stats_single_value():
    c = cell_stats([0.5])
    assert c.mean == 50.0 and c.sd is None and c.n == 1


@given(st.lists(st.tuples(st.sampled_from([B, M, A, NC]), st.sampled_from([LV, MYO, RV]),
                          st.floats(0, 1)), max_size=40))
def test_region_stats_totals(entries):
    rows = [DscRow("s", Phase.ED, i, r, lab, v) for i, (r, lab, v) in enumerate(entries)]
    stats = region_stats(DscTable(rows))
    for lab in (LV, MYO, RV):
        total = sum(stats[(r, lab)].n for r in (B, M, A))
        assert total == sum(1 for r in rows if r.label == lab and r.region != NC)


def _table(base_vals, apex_vals, stack="s"):
    rows = rows_for(stack, base_vals, B) + rows_for(stack, apex_vals, A, start=len(base_vals))
    return DscTable(rows)


def test_delta_identity():
    rng = np.random.default_rng(1)
    t = _table(rng.random(12).tolist(), rng.random(5).tolist())
    for cell in delta_table(t, t).values():
        assert cell.delta_mean in (0.0, None)
        assert not cell.significant


def test_delta_shift_is_significant():
    rng = np.random.default_rng(2)
    base = (0.8 + 0.1 * rng.random(12)).tolist()
    apex = (0.7 + 0.1 * rng.random(12)).tolist()
    baseline = _table(base, apex)
    noise = 0.002 * rng.standard_normal(12)
    other = _table([v + 0.05 + e for v, e in zip(base, noise)], apex)
    d = delta_table(baseline, other)
    assert d[(LV, B)].delta_mean == pytest.approx(5.0 + 100 * noise.mean(), abs=1e-9)
    assert d[(LV, B)].significant
    assert d[(LV, A)].delta_mean == 0.0 and not d[(LV, A)].significant
    assert d[(LV, B)].n_pairs == 12


def test_delta_constant_shift():
    base = [0.5, 0.6, 0.7]
    d = delta_table(_table(base, []), _table([v + 0.1 for v in base], []))
    assert d[(LV, B)].delta_mean == pytest.approx(10.0)
    assert d[(LV, B)].delta_sd == pytest.approx(0.0, abs=1e-12)


@given(st.lists(st.floats(0, 0.9), min_size=3, max_size=10), st.integers(0, 9), st.floats(0.001, 0.1))
def test_delta_monotone_in_other(vals, k, bump):
    k %= len(vals)
    other = list(vals)
    better = list(vals)
    better[k] += bump
    d1 = delta_table(_table(vals, []), _table(other, []))[(LV, B)]
    d2 = delta_table(_table(vals, []), _table(better, []))[(LV, B)]
    assert d2.delta_mean > d1.delta_mean


def test_delta_key_mismatch():
    with pytest.raises(KeyMismatch):
        delta_table(_table([0.5, 0.6], []), _table([0.5], []))


def test_delta_skips_pairs_absent_in_either_arm():
    keys = [("s", Phase.ED, i, B, LV) for i in range(4)]
    base = DscTable([DscRow(*k, v) for k, v in zip(keys, [0.5, 0.6, None, 0.7])])
    other = DscTable([DscRow(*k, v) for k, v in zip(keys, [0.6, None, 0.0, 0.8])])
    cell = delta_table(base, other)[(LV, B)]
    assert cell.n_pairs == 2
    assert abs(cell.delta_mean - 10.0) < 1e-9


def test_table_profiles_per_stack_mean():
    rows = []
    for sid, val in (("a", 0.6), ("b", 1.0)):
        rows += [DscRow(sid, Phase.ED, i, r, LV, val) for i, r in enumerate([B, M, M, A], start=1)]
        rows.append(DscRow(sid, Phase.ED, 0, NC, LV, 0.0))
    prof = table_profiles(DscTable(rows))
    assert np.allclose(prof[LV].values, 0.8)
    assert prof[LV].n_stacks == 2
    assert prof[RV] is None


def test_table_profiles_positions():
    rows = [DscRow("a", Phase.ED, i, r, LV, v)
            for i, (r, v) in enumerate([(B, 0.0), (M, 0.5), (A, 1.0)], start=2)]
    random.Random(0).shuffle(rows)
    g = table_profiles(DscTable(rows))[LV].values
    assert np.allclose(g, np.arange(101) / 100, atol=1e-12)
