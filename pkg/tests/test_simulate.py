import itertools
import json
import math

import numpy as np
import pytest

from conftest import circle_regions
from rfimap.calibration import CalibrationConfig, UnitCurve, calibrate_stream
from rfimap.errors import NoRamp
from rfimap.regions import Label, classify_stream
from rfimap.simulate import (
    Baseline,
    Event,
    EventKind,
    ScenarioScript,
    noiseless,
    ramp_crossing_instant,
    ramp_crossing_time,
    render,
    scenario_windows,
    step_jam_script,
    stream_to_records,
)
from rfimap.ubx import read_epoch_stream

QUIET = Baseline(-200.0, 45.0, 0.0, 0.0)
DB3 = 10 * math.log10(2)


def script(*events, duration=100.0, baseline=QUIET, **kw):
    return ScenarioScript(duration, baseline=baseline, events=tuple(events), **kw)


def test_equal_power_jammer_adds_3db():
    s = script(Event(EventKind.STEP_JAM, 10, 20, power_db=0.0))
    stream = render(s)
    p = stream.points[15]
    assert p.rx_power == pytest.approx(-200 + DB3, abs=1e-12)
    assert p.cn0 == pytest.approx(45 - DB3, abs=1e-12)


def test_step_20db_drop():
    s = script(Event(EventKind.STEP_JAM, 10, 20, power_db=20.0), baseline=Baseline(-200.0, 50.0, 0.0, 0.0))
    p = render(s).points[12]
    drop = 10 * math.log10(101)
    assert 50 - p.cn0 == pytest.approx(drop, abs=1e-12)
    assert drop == pytest.approx(20.043, abs=1e-3)


def test_no_events_matches_baseline_statistics():
    base = Baseline()
    stream = render(ScenarioScript(10_000, baseline=base), seed=4)
    xy = np.array([(p.rx_power, p.cn0) for p in stream.points])
    n = len(xy)
    assert abs(xy[:, 0].mean() - base.rx_power) < 3 * base.sigma_rx / math.sqrt(n)
    assert abs(xy[:, 1].mean() - base.cn0) < 3 * base.sigma_cn0 / math.sqrt(n)
    assert set(stream.truth) == {Label.NOMINAL}


def test_noiseless_jamming_lies_on_slope_minus_one():
    s = script(Event(EventKind.RAMP_JAM, 0, 100, ramp_rate=0.3))
    for p in render(s).points:
        if p.cn0 is None:
            continue
        assert (p.rx_power + 200.0) + (p.cn0 - 45.0) == pytest.approx(0.0, abs=1e-9)


def test_truth_is_nominal_outside_events_and_lag_delays_effect():
    s = script(Event(EventKind.STEP_JAM, 30, 40, power_db=10.0, lag_s=2.0))
    stream = render(s)
    for k, (p, t) in enumerate(zip(stream.points, stream.truth)):
        assert t is (Label.JAMMING if 30 <= k < 40 else Label.NOMINAL)
        jammed = 32 <= k < 42
        assert (p.rx_power > -199.0) is jammed


def test_render_reproducible():
    s = step_jam_script(hours=0.5, n_events=2, on_s=120, lead_s=60)
    a, b = render(s, seed=9), render(s, seed=9)
    assert a.points == b.points and a.truth == b.truth
    assert render(s, seed=10).points != a.points


def test_tracking_hysteresis():
    s = script(
        Event(EventKind.BLOCK, 10, 20, attenuation_db=21.0),   # 24 dB-Hz: lost
        Event(EventKind.BLOCK, 20, 30, attenuation_db=19.0),   # 26 dB-Hz: still lost
        Event(EventKind.BLOCK, 30, 40, attenuation_db=18.0),   # 27 dB-Hz: reacquired
        Event(EventKind.BLOCK, 50, 60, attenuation_db=19.0),   # 26 from tracking: kept
    )
    pts = render(s).points
    assert pts[15].cn0 is None and pts[25].cn0 is None
    assert pts[35].cn0 == pytest.approx(27.0)
    assert pts[55].cn0 == pytest.approx(26.0)


def test_full_blockage_is_signal_loss_at_nominal_power():
    pts = render(script(Event(EventKind.BLOCK, 10, 20))).points
    assert pts[12].cn0 is None and pts[12].rx_power == -200.0


def test_spoof_capture_rule():
    strong = Event(EventKind.SPOOF, 10, 20, power_db=10.0, spoof_power_db=16.0, spoof_cn0=50.0)
    weak = Event(EventKind.SPOOF, 30, 40, power_db=10.0, spoof_power_db=7.0, spoof_cn0=50.0)
    s = script(strong, weak)
    rx, cn0, truth = noiseless(s, 12.0)
    assert cn0 == 50.0 and truth is Label.SPOOFING
    assert rx == pytest.approx(-200 + 10 * math.log10(1 + 10 + 10 ** 1.6))
    rx, cn0, truth = noiseless(s, 32.0)
    assert cn0 == pytest.approx(45 - (rx + 200)) and truth is Label.SPOOFING


def test_script_validation():
    with pytest.raises(ValueError):
        script(Event(EventKind.STEP_JAM, 10, 20, power_db=1.0), Event(EventKind.STEP_JAM, 15, 25, power_db=1.0))
    with pytest.raises(ValueError):
        script(Event(EventKind.STEP_JAM, 90, 120, power_db=1.0))
    with pytest.raises(ValueError):
        Event(EventKind.STEP_JAM, 10, 20, power_db=-1.0)
    with pytest.raises(ValueError):
        Event(EventKind.STEP_JAM, 20, 10, power_db=1.0)
    with pytest.raises(ValueError):
        ScenarioScript(0.0)


def test_script_round_trip(tmp_path):
    s = script(Event(EventKind.RAMP_JAM, 10, 50, ramp_rate=0.5, lag_s=1.0),
               Event(EventKind.SPOOF, 60, 70, spoof_power_db=3.0, spoof_cn0=48.0), t0=1.7e9)
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(s.to_dict()))
    assert ScenarioScript.from_file(path) == s


def test_scenario_windows_partition():
    s = script(Event(EventKind.STEP_JAM, 10, 20, power_db=1.0), Event(EventKind.BLOCK, 40, 50), t0=100.0)
    w = scenario_windows(s)
    assert w[0][0] == 100.0 and w[-1][1] == 200.0
    assert all(a[1] == b[0] for a, b in zip(w, w[1:]))


# -- ramp crossing -----------------------------------------------------------------------

def brute_force_crossing(s, regions):
    for tau in s.epoch_offsets():
        rx, cn0, _ = noiseless(s, float(tau))
        if cn0 is None or not regions.ellipse.contains(rx, cn0):
            if tau >= s.events[0].t_start:
                return s.t0 + float(tau)
    return None


@pytest.mark.parametrize("rate", [0.1, 0.25, 1.0, 0.05, 0.037])
def test_ramp_crossing_matches_brute_force(rate):
    regions = circle_regions()
    s = script(Event(EventKind.RAMP_JAM, 50, 900, ramp_rate=rate), duration=1000.0)
    assert ramp_crossing_time(s, regions) == brute_force_crossing(s, regions)


def test_ramp_closed_form_geometry():
    regions = circle_regions()
    s = script(Event(EventKind.RAMP_JAM, 0, 900, ramp_rate=0.1), duration=1000.0)
    # slope -1 path leaves a radius-3 circle after 3/sqrt(2) dB on each axis
    t_star = 3 / math.sqrt(2) / 0.1
    assert ramp_crossing_instant(s, regions) == pytest.approx(t_star, abs=1e-9)
    assert ramp_crossing_time(s, regions) == math.ceil(t_star) == 22


def test_instant_ramp_crosses_at_start():
    regions = circle_regions()
    s = script(Event(EventKind.RAMP_JAM, 40, 90, ramp_rate=1e9))
    assert ramp_crossing_instant(s, regions) == pytest.approx(40.0, abs=1e-6)
    # at t_start itself the ramp has not yet added any power
    assert ramp_crossing_time(s, regions) == 41.0


def test_weak_ramp_never_crosses():
    regions = circle_regions()
    s = script(Event(EventKind.RAMP_JAM, 40, 90, ramp_rate=0.01))
    assert ramp_crossing_time(s, regions) is None


def test_no_ramp_or_two_ramps():
    regions = circle_regions()
    with pytest.raises(NoRamp):
        ramp_crossing_time(script(), regions)
    two = script(Event(EventKind.RAMP_JAM, 0, 10, ramp_rate=1.0), Event(EventKind.RAMP_JAM, 20, 30, ramp_rate=1.0))
    with pytest.raises(NoRamp):
        ramp_crossing_time(two, regions)


def test_ramp_labels_are_monotone():
    regions = circle_regions()
    s = script(Event(EventKind.RAMP_JAM, 10, 500, ramp_rate=0.1), duration=500.0)
    labels = [it.label_text for it in classify_stream(render(s).points, regions)]
    runs = [k for k, _ in itertools.groupby(labels)]
    assert runs == ["Nominal", "Jamming", "SignalLoss/Jamming"]


# -- JSONL export ---------------------------------------------------------------------------

@pytest.mark.parametrize("pga,temp", [(0.0, 300.0), (3.0, 320.0), (7.5, 260.0)])
def test_records_calibrate_back(pga, temp):
    cfg = CalibrationConfig(temp_curve=(0.0, -0.05, 2e-4), unit_curve=UnitCurve(1.01, -99.0, -200.0, 50.0))
    stream = render(step_jam_script(hours=0.1, n_events=2, on_s=60, lead_s=30), seed=2)
    lines = [json.dumps(r) for r in stream_to_records(stream, cfg, pga_level=pga, temp_k=temp)]
    res = read_epoch_stream(lines)
    assert not res.errors
    rep = calibrate_stream(res.records, cfg)
    assert len(rep.points) == len(stream.points)
    for a, b in zip(rep.points, stream.points):
        assert a.rx_power == pytest.approx(b.rx_power, abs=1e-9)
        assert a.cn0 == b.cn0
