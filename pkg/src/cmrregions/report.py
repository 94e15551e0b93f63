"""CSV reports shaped like the published tables, and base-to-apex profile plots."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import CARDIAC_REGIONS, FOREGROUND_LABELS, Label, Region
from .metrics.classification import ClassifierMetrics
from .metrics.dice import DscTable
from .metrics.regional import (
    GRID_N,
    DeltaCell,
    DscProfile,
    region_gap_tests,
    region_stats,
)

APPROACH_NAMES = {
    "sampled": "Batch sampling",
    "classified": "Classification + segmentation",
    "oracle": "Ground-truth regions + segmentation",
}
ARM_COLOURS = {"baseline": "tab:blue", "sampled": "tab:orange",
               "classified": "tab:green", "oracle": "tab:red"}


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.2f}"


def _cell(mean: Optional[float], sd: Optional[float], star: bool) -> str:
    if mean is None:
        return ""
    text = f"{mean:.2f}{'*' if star else ''}"
    return f"{text} ({sd:.2f})" if sd is not None else text


def _csv(rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


def region_stats_csv(table: DscTable, dataset: str) -> str:
    """Rows dataset x label; Base/Middle/Apex cells read ``mean* (sd)`` in percent.

    The asterisk marks a Welch test against Middle with p < 0.01.
    """
    stats = region_stats(table)
    tests = region_gap_tests(table)
    header = ["dataset", "label"] + [r.value for r in CARDIAC_REGIONS]
    header += [f"{r.value}_n" for r in CARDIAC_REGIONS] + ["Base_p", "Apex_p"]
    rows = [header]
    for label in FOREGROUND_LABELS:
        cells, ns = [], []
        for region in CARDIAC_REGIONS:
            s = stats[(region, label)]
            t = tests.get((region, label))
            star = t is not None and t.significant_at_0_01
            cells.append(_cell(s.mean, s.sd, star))
            ns.append(s.n)
        ps = []
        for region in (Region.BASE, Region.APEX):
            t = tests[(region, label)]
            ps.append("" if t is None else f"{t.p_two_sided:.3e}")
        rows.append([dataset, label.name, *cells, *ns, *ps])
    return _csv(rows)


def classifier_metrics_csv(results: Mapping[str, ClassifierMetrics]) -> str:
    names = list(results)
    rows = [["metric", *names]]
    rows.append(["Precision [%]", *(f"{100 * results[n].weighted_precision:.2f}" for n in names)])
    rows.append(["Recall [%]", *(f"{100 * results[n].weighted_recall:.2f}" for n in names)])
    return _csv(rows)


def delta_table_csv(deltas: Mapping[str, Mapping[tuple[Label, Region], DeltaCell]], dataset: str) -> str:
    """Rows dataset x approach; one ``dmean* (dsd)`` cell per label and Base/Apex."""
    cols = [(label, region) for label in FOREGROUND_LABELS for region in (Region.BASE, Region.APEX)]
    header = ["dataset", "approach"] + [f"{l.name}_{r.value}" for l, r in cols]
    header += [f"{l.name}_{r.value}_p" for l, r in cols]
    rows = [header]
    for arm, cells in deltas.items():
        row = [dataset, APPROACH_NAMES.get(arm, arm)]
        row += [_cell(cells[c].delta_mean, cells[c].delta_sd, cells[c].significant) for c in cols]
        row += ["" if cells[c].p_value is None else f"{cells[c].p_value:.3e}" for c in cols]
        rows.append(row)
    return _csv(rows)


def profiles_csv(profiles: Mapping[str, Mapping[Label, Optional[DscProfile]]]) -> str:
    arms = list(profiles)
    header = ["position"] + [f"{label.name}_{arm}" for label in FOREGROUND_LABELS for arm in arms]
    rows = [header]
    for k in range(GRID_N):
        row = [f"{k / (GRID_N - 1):.2f}"]
        for label in FOREGROUND_LABELS:
            for arm in arms:
                prof = profiles[arm][label]
                row.append("" if prof is None else repr(float(prof.values[k])))
        rows.append(row)
    return _csv(rows)


def plot_profiles(profiles: Mapping[str, Mapping[Label, Optional[DscProfile]]], label: Label,
                  path: Path) -> tuple[tuple[float, float], tuple[float, float]]:
    """One curve per arm; returns the (x, y) axis limits of the saved figure."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    grid = np.arange(GRID_N)
    for arm, by_label in profiles.items():
        prof = by_label[label]
        if prof is not None:
            ax.plot(grid, prof.values, label=arm, color=ARM_COLOURS.get(arm))
    ax.set_xlim(0, GRID_N - 1)
    ax.set_ylim(0.0, 1.0)
    ax.set_xlabel("Base → Apex (%)")
    ax.set_ylabel("DSC")
    ax.set_title(label.name)
    ax.legend(loc="lower left", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    limits = (ax.get_xlim(), ax.get_ylim())
    plt.close(fig)
    return limits
