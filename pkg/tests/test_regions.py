import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from conftest import circle_regions, make_model
from rfimap.calibration import MetricPoint
from rfimap.errors import EllipseExcludesMean
from rfimap.nominal import SiteOffset, recenter
from rfimap.regions import (
    Label,
    RegionConfig,
    RegionMap,
    ThresholdEllipse,
    build_regions,
    classify,
    classify_arrays,
    classify_stream,
    ellipse_area,
)

R2 = 3 / math.sqrt(2)
finite_x = st.floats(-260, -120, allow_nan=False)
finite_y = st.floats(0, 65, allow_nan=False)


def pt(x, y):
    return MetricPoint(0.0, "S131", x, y, 46.0)


def label(regions, x, y):
    return classify(pt(x, y), regions).label


def test_anchor_and_noise_floor(circle):
    assert circle.anchor == pytest.approx((-200 + R2, 45 + R2), abs=1e-9)
    assert circle.anchor == pytest.approx((-197.88, 47.12), abs=5e-3)
    assert circle.noise_floor == pytest.approx(-203.0, abs=1e-12)


def test_boundary_meets_floor(circle):
    expected = -200 + R2 + (45 + R2 - 27)
    assert circle.floor_rx == pytest.approx(expected, abs=1e-9)
    assert circle.floor_rx == pytest.approx(-177.76, abs=1e-2)
    assert float(circle.spoof_boundary(circle.floor_rx)) == pytest.approx(27.0)


def test_ellipse_excluding_mean():
    with pytest.raises(EllipseExcludesMean):
        build_regions(make_model(), ThresholdEllipse((-190.0, 45.0), (1.0, 1.0)))


@pytest.mark.parametrize("x,y,expected", [
    (-200, 45, Label.NOMINAL),
    (-185, 44, Label.SPOOFING),
    (-185, 30, Label.JAMMING),
    (-200, 20, Label.BLOCKED),
    (-210, 45, Label.UNREALISTIC),
    (-170, 20, Label.JAMMING),
    (-170, 28, Label.SPOOFING),
])
def test_classify_examples(circle, x, y, expected):
    assert label(circle, x, y) is expected


def test_spoof_boundary_value_at_minus_185(circle):
    assert float(circle.spoof_boundary(-185.0)) == pytest.approx(47.12 - (-185 + 197.88), abs=1e-2)


def test_signal_loss_causes(circle):
    inside = classify(pt(-200.0, None), circle)
    outside = classify(pt(-185.0, None), circle)
    assert inside.label is Label.SIGNAL_LOSS and inside.cause is Label.BLOCKED
    assert outside.cause is Label.JAMMING and outside.label_text == "SignalLoss/Jamming"
    assert outside.resolved is Label.JAMMING
    assert classify(pt(-210.0, None), circle).label is Label.UNREALISTIC


def test_empty_and_single_streams(circle):
    empty = classify_stream([], circle)
    assert len(empty) == 0 and set(empty.counts.values()) == {0}
    one = classify_stream([pt(-200.0, 45.0)], circle)
    assert one.counts[Label.NOMINAL] == 1 and sum(one.counts.values()) == 1


def test_stream_preserves_order(circle):
    pts = [pt(-200, 45), pt(-210, 45), pt(-185, 44), pt(-200, 20)]
    res = classify_stream(pts, circle)
    assert [it.point for it in res] == pts
    assert [it.label for it in res] == [Label.NOMINAL, Label.UNREALISTIC, Label.SPOOFING, Label.BLOCKED]


def test_margin_examples(circle):
    # nearest primitive from the centre is the band edge through the anchor
    assert classify(pt(-200.0, 45.0), circle).margin == pytest.approx(R2, abs=1e-9)
    assert classify(pt(-200.0, 50.0), circle).margin == pytest.approx(2.0, abs=1e-9)
    assert classify(pt(-185.0, 30.0), circle).margin == pytest.approx(3.0, abs=1e-9)


@given(x=finite_x, y=finite_y, phi=st.floats(0, 2 * math.pi))
def test_margin_is_a_safe_radius(x, y, phi):
    regions = circle_regions()
    c = classify(pt(x, y), regions)
    assume(c.margin > 1e-6)
    r = 0.999 * c.margin
    moved = classify(pt(x + r * math.cos(phi), y + r * math.sin(phi)), regions)
    assert moved.label is c.label


def test_blocked_upper_option():
    wide = circle_regions(blocked_upper="ellipse")
    assert wide.band_upper == pytest.approx(-197.0)
    assert label(wide, -197.5, 40.0) is Label.BLOCKED
    assert label(circle_regions(), -197.5, 40.0) is Label.JAMMING


def test_region_round_trip(circle):
    again = RegionMap.from_dict(circle.to_dict())
    assert again == circle


def test_ellipse_area_and_rotation():
    assert ellipse_area(ThresholdEllipse((0, 0), (1, 1))) == pytest.approx(math.pi)
    assert ellipse_area(ThresholdEllipse((0, 0), (2, 3))) == pytest.approx(6 * math.pi)
    assert ellipse_area(ThresholdEllipse((0, 0), (2, 3), 1.0)) == pytest.approx(6 * math.pi)
    assert ThresholdEllipse((0, 0), (2, 1), math.pi / 2).rotation == pytest.approx(-math.pi / 2)
    with pytest.raises(ValueError):
        ThresholdEllipse((0, 0), (0.0, 1.0))


@given(cx=st.floats(-210, -190), cy=st.floats(35, 50), a=st.floats(0.3, 5), b=st.floats(0.3, 5),
       th=st.floats(-1.5, 1.5))
def test_anchor_maximises_sum(cx, cy, a, b, th):
    e = ThresholdEllipse((cx, cy), (a, b), th)
    ax, ay = e.support_point((1.0, 1.0))
    t = np.linspace(0, 2 * np.pi, 4000)
    c, s = np.cos(th), np.sin(th)
    xs = cx + a * np.cos(t) * c - b * np.sin(t) * s
    ys = cy + a * np.cos(t) * s + b * np.sin(t) * c
    assert ax + ay >= np.max(xs + ys) - 1e-6
    assert e.quad_form(ax, ay) == pytest.approx(1.0, abs=1e-9)


# -- properties ----------------------------------------------------------------------


@given(x=st.lists(finite_x, min_size=1, max_size=200), y=st.lists(finite_y, min_size=1, max_size=200))
def test_exactly_one_label(x, y):
    n = min(len(x), len(y))
    labels, causes, margins = classify_arrays(circle_regions(), x[:n], y[:n])
    assert labels.shape == (n,)
    assert set(labels.tolist()) <= set(range(len(Label)))
    assert np.all(margins >= 0)


@given(t=st.floats(1e-6, 1.0))
def test_jamming_path_closure(t):
    regions = circle_regions()
    ax, ay = regions.anchor
    L = t * (regions.floor_rx - ax)
    x, y = ax + L, ay - L
    assert label(regions, x, y) is Label.JAMMING


@given(x=st.floats(-203, -197.8787), y=finite_y)
def test_no_spoofing_in_nominal_band(x, y):
    assert label(circle_regions(), x, y) is not Label.SPOOFING


@given(x=finite_x, y=finite_y, dx=st.floats(-10, 10), dy=st.floats(-10, 10))
def test_translation_equivariance(x, y, dx, dy):
    model = make_model()
    regions = circle_regions()
    before = classify(pt(x, y), regions)
    assume(before.margin > 1e-6)
    local = [pt(-200.0 + dx, 45.0 + dy)] * 100
    moved_model, off = recenter(model, local)
    moved = regions.shifted(off, moved_model.content_hash())
    if off.d_cn0 != 0:
        # The 27 dB-Hz floor is physical and does not move; compare away from it.
        assume(x < min(regions.floor_rx, moved.floor_rx - off.d_rx_power) - 1e-6)
        assume(y > 27.0 + abs(off.d_cn0) + 1e-6 and y + off.d_cn0 > 27.0 + 1e-6)
    after = classify(pt(x + off.d_rx_power, y + off.d_cn0), moved)
    assert after.label is before.label


def test_totality_vectorised():
    rng = np.random.default_rng(7)
    x = rng.uniform(-300, -100, 200_000)
    y = rng.uniform(-10, 80, 200_000)
    y[rng.random(x.size) < 0.05] = np.nan
    labels, causes, _ = classify_arrays(circle_regions(), x, y, with_margin=False)
    counts = np.bincount(labels, minlength=len(Label))
    assert counts.sum() == x.size
    lost = np.isnan(y) & (x >= -203)
    assert np.all(labels[lost] == list(Label).index(Label.SIGNAL_LOSS))
    assert np.all(causes[lost] >= 0)


def test_quantized_map_uses_cell_centres():
    q = circle_regions(quantize=True)
    # (-197.1, 46.0) is outside the radius-3 circle but its cell centre (-197.5, 46.5) is inside
    assert label(circle_regions(), -197.1, 46.0) is not Label.NOMINAL
    assert label(q, -197.1, 46.0) is Label.NOMINAL
