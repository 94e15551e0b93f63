"""Base-to-apex DSC profiles, per-region statistics and arm-vs-baseline deltas."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..core import CARDIAC_REGIONS, FOREGROUND_LABELS, CmrError, Label, Region
from ..sampler import normalized_position
from .dice import DscTable
from .stats import TTestResult, ZeroVariance, paired_ttest, welch_ttest

GRID_N = 101


class EmptyInput(CmrError):
    pass


class KeyMismatch(CmrError):
    pass


def interpolate_profile(points: Sequence[tuple[float, float]], grid_n: int = GRID_N) -> np.ndarray:
    """Piecewise-linear resampling onto ``k/(grid_n-1)``; flat beyond the end points."""
    if len(points) == 0:
        raise EmptyInput("profile needs at least one point")
    xs = np.array([p[0] for p in points], dtype=np.float64)
    ys = np.array([p[1] for p in points], dtype=np.float64)
    if np.any(xs < 0) or np.any(xs > 1):
        raise ValueError("positions must lie in [0, 1]")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("positions must be strictly increasing")
    grid = np.arange(grid_n) / (grid_n - 1)
    if len(xs) == 1:
        return np.full(grid_n, ys[0])
    return np.interp(grid, xs, ys)


@dataclass(frozen=True)
class DscProfile:
    label: Label
    values: np.ndarray
    n_stacks: int


def aggregate_profiles(profiles: Sequence[np.ndarray], label: Label) -> DscProfile:
    if len(profiles) == 0:
        raise EmptyInput(f"no profiles to aggregate for {Label(label).name}")
    stacked = np.vstack([np.asarray(p, dtype=np.float64) for p in profiles])
    # sorted summation keeps the mean independent of input order
    stacked.sort(axis=0)
    return DscProfile(Label(label), stacked.sum(axis=0) / len(profiles), len(profiles))


def stack_profiles(table: DscTable) -> dict[Label, list[np.ndarray]]:
    """One interpolated profile per (stack, phase, label) over the cardiac slices."""
    by_stack = defaultdict(list)
    for r in table.rows:
        if r.region != Region.NON_CARDIAC:
            by_stack[(r.stack_id, r.phase)].append(r)
    out: dict[Label, list[np.ndarray]] = {label: [] for label in FOREGROUND_LABELS}
    for key in sorted(by_stack, key=lambda k: (k[0], k[1].value)):
        rows = by_stack[key]
        idx = [r.slice_index for r in rows]
        cardiac_range = (min(idx), max(idx))
        for label in FOREGROUND_LABELS:
            pts = sorted(
                (normalized_position(r.slice_index, cardiac_range), r.dsc)
                for r in rows if r.label == label and r.dsc is not None
            )
            if pts:
                out[label].append(interpolate_profile(pts))
    return out


def table_profiles(table: DscTable) -> dict[Label, Optional[DscProfile]]:
    per_stack = stack_profiles(table)
    return {
        label: aggregate_profiles(profs, label) if profs else None
        for label, profs in per_stack.items()
    }


@dataclass(frozen=True)
class CellStats:
    mean: Optional[float]  # percent
    sd: Optional[float]  # percent, n-1 denominator
    n: int


def cell_stats(values: Sequence[float]) -> CellStats:
    n = len(values)
    if n == 0:
        return CellStats(None, None, 0)
    pct = [100.0 * v for v in values]
    mean = math.fsum(pct) / n
    sd = math.sqrt(math.fsum((v - mean) ** 2 for v in pct) / (n - 1)) if n >= 2 else None
    return CellStats(mean, sd, n)


RegionStats = dict  # (Region, Label) -> CellStats


def region_stats(table: DscTable) -> RegionStats:
    return {
        (region, label): cell_stats(table.values(region, label))
        for label in FOREGROUND_LABELS
        for region in CARDIAC_REGIONS
    }


def region_gap_tests(table: DscTable) -> dict[tuple[Region, Label], Optional[TTestResult]]:
    """Welch test of Base and Apex against Middle, per label."""
    out = {}
    for label in FOREGROUND_LABELS:
        middle = table.values(Region.MIDDLE, label)
        for region in (Region.BASE, Region.APEX):
            try:
                out[(region, label)] = welch_ttest(table.values(region, label), middle)
            except CmrError:
                out[(region, label)] = None
    return out


@dataclass(frozen=True)
class DeltaCell:
    delta_mean: Optional[float]  # percent; positive = other arm better
    delta_sd: Optional[float]  # percent; baseline_sd - other_sd
    p_value: Optional[float]
    n_pairs: int

    @property
    def significant(self) -> bool:
        return self.p_value is not None and self.p_value < 0.01


def _paired_p(diffs: list[float]) -> Optional[float]:
    if len(diffs) < 2:
        return None
    try:
        return paired_ttest(diffs).p_two_sided
    except ZeroVariance:
        # constant non-zero shift: infinite t statistic
        return 1.0 if diffs[0] == 0 else 0.0


def delta_table(baseline: DscTable, other: DscTable) -> dict[tuple[Label, Region], DeltaCell]:
    base_rows, other_rows = baseline.by_key(), other.by_key()
    if base_rows.keys() != other_rows.keys():
        n = len(base_rows.keys() ^ other_rows.keys())
        raise KeyMismatch(f"tables cover different (slice, label) keys ({n} not shared)")
    # pairs only where both arms define a DSC
    shared = sorted(
        (k for k in base_rows if base_rows[k].dsc is not None and other_rows[k].dsc is not None),
        key=lambda k: (k[0], k[1].value, k[2], int(k[3])),
    )
    out = {}
    for label in FOREGROUND_LABELS:
        for region in (Region.BASE, Region.APEX):
            keys = [k for k in shared if k[3] == label and base_rows[k].region == region]
            a = [base_rows[k].dsc for k in keys]
            b = [other_rows[k].dsc for k in keys]
            sa, sb = cell_stats(a), cell_stats(b)
            dm = None if sa.mean is None else sb.mean - sa.mean
            dsd = None if sa.sd is None else sa.sd - sb.sd
            diffs = [y - x for x, y in zip(a, b)]
            out[(label, region)] = DeltaCell(dm, dsd, _paired_p(diffs), len(keys))
    return out
