import csv
import io

import numpy as np

from cmrregions.core import Label, Phase, Region
from cmrregions.metrics.classification import ConfusionMatrix, classifier_metrics
from cmrregions.metrics.dice import DscRow, DscTable
from cmrregions.metrics.regional import delta_table, table_profiles
from cmrregions.report import (
    classifier_metrics_csv,
    delta_table_csv,
    plot_profiles,
    profiles_csv,
    region_stats_csv,
)


def _rows(text):
    return list(csv.reader(io.StringIO(text)))


def _table(shift=0.0):
    rng = np.random.default_rng(0)
    rows = []
    for sid in ("a", "b", "c", "d"):
        for i, region in enumerate([Region.BASE, Region.BASE, Region.MIDDLE, Region.MIDDLE,
                                    Region.MIDDLE, Region.APEX]):
            for label in (Label.LVBP, Label.LVM):
                v = 0.6 + 0.1 * rng.random() if region != Region.MIDDLE else 0.95 + 0.01 * rng.random()
                if region == Region.BASE:
                    v += shift
                rows.append(DscRow(sid, Phase.ED, i, region, label, v))
    return DscTable(rows)


def test_region_stats_layout():
    rows = _rows(region_stats_csv(DscTable([
        DscRow("s", Phase.ED, 0, Region.BASE, Label.LVBP, 0.9),
        DscRow("s", Phase.ED, 1, Region.BASE, Label.LVBP, 0.95),
    ]), "phantom"))
    assert rows[0] == ["dataset", "label", "Base", "Middle", "Apex", "Base_n", "Middle_n",
                       "Apex_n", "Base_p", "Apex_p"]
    assert [r[1] for r in rows[1:]] == ["LVBP", "LVM", "RVBP"]
    assert rows[1][2] == "92.50 (3.54)"
    assert rows[1][3] == "" and rows[1][6] == "0"


def test_region_stats_marks_significant_gap():
    rows = _rows(region_stats_csv(_table(), "phantom"))
    assert rows[1][2].split(" ")[0].endswith("*")


def test_delta_layout():
    deltas = {"classified": delta_table(_table(), _table(0.05))}
    rows = _rows(delta_table_csv(deltas, "phantom"))
    assert rows[0][:4] == ["dataset", "approach", "LVBP_Base", "LVBP_Apex"]
    assert rows[1][1] == "Classification + segmentation"
    assert rows[1][2].startswith("5.00*")


def test_classifier_metrics_layout():
    c = np.zeros((4, 4), int)
    c[:2, :2] = [[5, 0], [1, 4]]
    rows = _rows(classifier_metrics_csv({"small_cnn": classifier_metrics(ConfusionMatrix(c))}))
    assert rows == [["metric", "small_cnn"], ["Precision [%]", "91.67"], ["Recall [%]", "90.00"]]


def test_profiles_and_plot(tmp_path):
    profs = {"baseline": table_profiles(_table()), "oracle": table_profiles(_table(0.05))}
    rows = _rows(profiles_csv(profs))
    assert len(rows) == 102
    assert rows[0] == ["position", "LVBP_baseline", "LVBP_oracle", "LVM_baseline", "LVM_oracle",
                       "RVBP_baseline", "RVBP_oracle"]
    assert rows[1][0] == "0.00" and rows[-1][0] == "1.00"
    assert rows[1][5] == ""
    xlim, ylim = plot_profiles(profs, Label.LVBP, tmp_path / "p.png")
    assert xlim == (0.0, 100.0) and ylim == (0.0, 1.0)
    assert (tmp_path / "p.png").read_bytes()[:4] == b"\x89PNG"
