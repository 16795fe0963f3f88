import re

import numpy as np
import pytest

from cascademl.errors import ValidationError
from cascademl.neuralnet import TrainingHistory
from cascademl.report import (
    PlotSpec,
    best_epoch_index,
    confusion_matrix,
    plot_history_curves,
    render_confusion,
    render_history,
)


def test_confusion_tally():
    cm = confusion_matrix([0, 0, 1, 2], [0, 1, 1, 2], ["a", "b", "c"])
    assert cm.counts.tolist() == [[1, 1, 0], [0, 1, 0], [0, 0, 1]]
    assert cm.total == 4 and cm.accuracy == 0.75


def test_confusion_perfect_and_flipped():
    y = np.array([0, 1, 1, 0, 1])
    assert np.count_nonzero(confusion_matrix(y, y, ["n", "p"]).counts - np.diag([2, 3])) == 0
    assert confusion_matrix(y, 1 - y, ["n", "p"]).counts.tolist() == [[0, 2], [3, 0]]


def test_confusion_errors():
    with pytest.raises(ValidationError, match="length mismatch"):
        confusion_matrix([0, 1], [0], ["a", "b"])
    with pytest.raises(ValidationError, match="out of range"):
        confusion_matrix([0, 2], [0, 1], ["a", "b"])


def test_render_confusion_percentages():
    cm = confusion_matrix([0] * 5 + [1] * 5, [0] * 5 + [1] * 5, ["x", "y"])
    svg, text = render_confusion(cm, "Validation Data")
    assert svg.count("5 (100.0%)") == 2 and text.count("5 (100.0%)") == 2
    assert "Validation Data" in svg and "Validation Data" in text


def test_render_confusion_absent_class_row():
    cm = confusion_matrix([0, 0], [0, 1], ["x", "y"])
    svg, text = render_confusion(cm)
    assert "0 (—)" in text and "0 (—)" in svg
    assert "nan" not in svg.lower() and "nan" not in text.lower()


def test_render_confusion_single_class():
    svg, text = render_confusion(confusion_matrix([0, 0], [0, 0], ["only"]))
    assert svg.startswith("<?xml") and "2 (100.0%)" in text


def _hist(val_loss, acc=None):
    recs = []
    for i, v in enumerate(val_loss):
        r = {"loss": v + 0.1, "val_loss": v}
        if acc is not None:
            r["accuracy"] = acc[i]
            r["val_accuracy"] = acc[i]
        recs.append(r)
    return TrainingHistory(recs, best_epoch=0)


def _markers(svg):
    return re.findall(r'class="marker" data-series="([^"]+)" data-epoch="(\d+)"', svg)


def test_history_min_marker():
    svg = render_history(_hist([0.9, 0.4, 0.6], [0.5, 0.8, 0.8]), PlotSpec(True, "accuracy"))
    assert ("val_loss", "1") in _markers(svg)
    assert ("val_accuracy", "1") in _markers(svg)  # first occurrence of the tie
    assert svg.count("<polyline") == 4


def test_history_single_epoch_and_single_panel():
    svg = render_history(_hist([0.3]), PlotSpec(True, None))
    assert _markers(svg) == [("val_loss", "0")]
    assert svg.count("<polyline") == 2
    assert render_history(_hist([0.3]), PlotSpec(False)).count('class="marker"') == 0


def test_history_errors_and_determinism(tmp_path):
    h = _hist([0.5, 0.4])
    with pytest.raises(ValidationError, match="unknown user_metric"):
        render_history(h, PlotSpec(True, "auc"))
    with pytest.raises(ValidationError):
        render_history(TrainingHistory(), PlotSpec())
    a = plot_history_curves(h, path=tmp_path / "h.svg")
    assert a == render_history(h) == (tmp_path / "h.svg").read_text()


def test_best_epoch_index_first_occurrence():
    assert best_epoch_index([3, 1, 1, 2], "min") == 1
    assert best_epoch_index([3, 5, 5], "max") == 1
