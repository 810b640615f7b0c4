import csv
import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rfimap.errors import LengthMismatch, WindowOutOfRange
from rfimap.evaluate import (
    RFI_LABELS,
    SPOOF_LABELS,
    TABLE_COLUMNS,
    ConfusionMatrix,
    EvaluationReport,
    as_label,
    percent,
    score_detection,
    window_slice,
)
from rfimap.regions import Label

J, S, N, B = Label.JAMMING, Label.SPOOFING, Label.NOMINAL, Label.BLOCKED


def from_counts(tp, fp, fn, tn, pos=J, neg=N):
    pred = [pos] * tp + [pos] * fp + [neg] * fn + [neg] * tn
    truth = [pos] * tp + [neg] * fp + [pos] * fn + [neg] * tn
    return pred, truth


def test_step_row_from_label_streams():
    rep = score_detection(*from_counts(3592, 19, 8, 3582))
    assert rep.matrix == ConfusionMatrix(3592, 19, 8, 3582)
    assert [percent(r) for r in (rep.sensitivity, rep.specificity, rep.accuracy)] == ["99.8", "99.5", "99.6"]


def test_all_negative_has_no_sensitivity():
    rep = score_detection([N] * 50, [N] * 50)
    assert rep.matrix == ConfusionMatrix(0, 0, 0, 50)
    assert rep.accuracy == 1.0 and rep.sensitivity is None
    assert rep.row()["sensitivity_pct"] is None


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        score_detection([N], [N, N])


def test_percent_half_up():
    assert percent(0.9985) == "99.9"
    assert percent(0.99849) == "99.8"
    assert percent(1.0) == "100.0"
    assert percent(None) is None


def test_label_parsing():
    assert as_label("SignalLoss/Jamming") is J
    assert as_label("SignalLoss/Blocked") is B
    assert as_label("Spoofing") is S
    with pytest.raises(ValueError):
        as_label("Bogus")


def test_signal_loss_pools_into_rfi():
    rep = score_detection(["SignalLoss/Jamming", "SignalLoss/Blocked"], [J, B])
    assert rep.matrix == ConfusionMatrix(1, 0, 0, 1)


def test_spoofing_characterization_counts():
    rep = score_detection([S, J, N], [S, S, N], SPOOF_LABELS)
    assert rep.matrix == ConfusionMatrix(1, 0, 1, 1)


labels = st.sampled_from(list(Label))
pairs = st.lists(st.tuples(labels, labels), max_size=200)


@given(pairs=pairs, pos=st.sets(st.sampled_from([J, S, B, N]), min_size=1, max_size=3))
def test_complement_swaps_counts(pairs, pos):
    pred = [p for p, _ in pairs]
    truth = [t for _, t in pairs]
    a = score_detection(pred, truth, pos).matrix
    b = score_detection(pred, truth, set(Label) - pos).matrix
    assert (a.tp, a.fp, a.fn, a.tn) == (b.tn, b.fn, b.fp, b.tp)


@given(pairs=pairs, cut=st.floats(0, 1))
def test_counts_additive_over_windows(pairs, cut):
    n = len(pairs)
    times = list(range(n))
    pred = [p for p, _ in pairs]
    truth = [t for _, t in pairs]
    split = cut * n
    sl = window_slice(times, pred, truth, [(0, split, "a"), (split, n, "b")], epoch=1.0)
    total = score_detection(pred, truth).matrix
    parts = score_detection(*sl["a"]).matrix + score_detection(*sl["b"]).matrix
    assert parts == total


def test_window_identity_and_empty():
    times = [0.0, 1.0, 2.0]
    pred, truth = [J, N, N], [J, J, N]
    sl = window_slice(times, pred, truth, [(0.0, 3.0, "all"), (1.5, 1.5, "empty")])
    assert sl["all"] == (pred, truth)
    assert sl["empty"] == ([], [])


def test_window_out_of_range():
    with pytest.raises(WindowOutOfRange):
        window_slice([0.0, 1.0], [N, N], [N, N], [(-5.0, 1.0, "early")])
    with pytest.raises(WindowOutOfRange):
        window_slice([0.0, 1.0], [N, N], [N, N], [(0.0, 10.0, "late")])


def test_report_csv_column_order():
    rep = EvaluationReport([score_detection(*from_counts(894, 0, 109, 1038), name="Ramp RFI"),
                            score_detection([N] * 7000, [N] * 7000, name="No RFI")])
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert tuple(rows[0]) == TABLE_COLUMNS
    assert rows[1] == ["Ramp RFI", "894", "0", "109", "1038", "89.1%", "100.0%", "94.7%"]
    assert rows[2][5] == "-"
    d = rep.to_dict()
    assert d["windows"][0]["positive_set"] == sorted(l.value for l in RFI_LABELS)
