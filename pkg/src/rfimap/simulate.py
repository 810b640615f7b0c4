"""Ground-truth-labelled synthetic streams for desk-scale validation.

Interference adds to the baseline noise density in the linear domain, and
C/N0 drops one dB for every dB the received power rises above the baseline.
Tracking is lost when C/N0 falls below ``tracking_floor - hysteresis`` and is
regained once it is back at ``tracking_floor``.

Event times are seconds from the start of the stream.  A per-event ``lag_s``
delays the observable effect (both edges) relative to the truth window,
mimicking receiver response and recovery time.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .calibration import CalibrationConfig, MetricPoint, WeightTable
from .errors import NoRamp
from .regions import Label, RegionMap


class EventKind(str, Enum):
    STEP_JAM = "StepJam"
    RAMP_JAM = "RampJam"
    SPOOF = "Spoof"
    BLOCK = "Block"


TRUTH = {
    EventKind.STEP_JAM: Label.JAMMING,
    EventKind.RAMP_JAM: Label.JAMMING,
    EventKind.SPOOF: Label.SPOOFING,
    EventKind.BLOCK: Label.BLOCKED,
}


@dataclass(frozen=True)
class Event:
    """One scripted disturbance.

    ``power_db`` is the jammer level in dB above the baseline noise density
    (the concurrent jammer for Spoof events).  A ramp raises the received
    power above baseline by ``ramp_rate`` dB/s from its start, so C/N0 falls
    at the same rate along the jamming path.  Block events attenuate
    C/N0 by ``attenuation_db``; ``None`` means complete loss.
    """

    kind: EventKind
    t_start: float
    t_end: float
    power_db: float | None = None
    ramp_rate: float | None = None
    spoof_cn0: float | None = None
    spoof_power_db: float | None = None
    attenuation_db: float | None = None
    lag_s: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", EventKind(self.kind))
        if not self.t_start < self.t_end:
            raise ValueError("event needs t_start < t_end")
        if self.power_db is not None and self.power_db < 0:
            raise ValueError("power_db must be >= 0")
        if self.lag_s < 0:
            raise ValueError("lag_s must be >= 0")
        if self.kind is EventKind.STEP_JAM and self.power_db is None:
            raise ValueError("StepJam needs power_db")
        if self.kind is EventKind.RAMP_JAM and not (self.ramp_rate and self.ramp_rate > 0):
            raise ValueError("RampJam needs a positive ramp_rate")
        if self.kind is EventKind.SPOOF and (self.spoof_cn0 is None or self.spoof_power_db is None):
            raise ValueError("Spoof needs spoof_cn0 and spoof_power_db")

    def ramp_excess_db(self, tau: float) -> float:
        """Added received power of a ramp at time offset ``tau``."""
        return max(0.0, self.ramp_rate * (tau - self.t_start - self.lag_s))

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if v is not None}
        d["kind"] = self.kind.value
        return d


@dataclass(frozen=True)
class Baseline:
    rx_power: float = -200.0
    cn0: float = 45.0
    sigma_rx: float = 0.3
    sigma_cn0: float = 0.7


@dataclass(frozen=True)
class ScenarioScript:
    duration: float
    epoch_rate: float = 1.0
    baseline: Baseline = field(default_factory=Baseline)
    events: tuple = ()
    t0: float = 0.0
    sat_id: str = "S131"
    elevation_deg: float = 46.0
    tracking_floor: float = 27.0
    hysteresis: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(sorted(self.events, key=lambda e: e.t_start)))
        if not self.duration > 0 or not self.epoch_rate > 0:
            raise ValueError("duration and epoch_rate must be positive")
        for ev in self.events:
            if ev.t_end > self.duration:
                raise ValueError(f"event {ev.kind.value} ends after the scenario")
        for a, b in zip(self.events, self.events[1:]):
            if b.t_start < a.t_end:
                raise ValueError("events overlap in time")

    @property
    def n_epochs(self) -> int:
        return int(round(self.duration * self.epoch_rate))

    def epoch_offsets(self) -> np.ndarray:
        return np.arange(self.n_epochs) / self.epoch_rate

    def to_dict(self) -> dict:
        return {
            "duration": self.duration,
            "epoch_rate": self.epoch_rate,
            "t0": self.t0,
            "sat_id": self.sat_id,
            "elevation_deg": self.elevation_deg,
            "tracking_floor": self.tracking_floor,
            "hysteresis": self.hysteresis,
            "baseline": asdict(self.baseline),
            "events": [e.to_dict() for e in self.events],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioScript":
        return cls(
            duration=float(d["duration"]),
            epoch_rate=float(d.get("epoch_rate", 1.0)),
            baseline=Baseline(**d.get("baseline", {})),
            events=tuple(Event(**e) for e in d.get("events", [])),
            t0=float(d.get("t0", 0.0)),
            sat_id=d.get("sat_id", "S131"),
            elevation_deg=float(d.get("elevation_deg", 46.0)),
            tracking_floor=float(d.get("tracking_floor", 27.0)),
            hysteresis=float(d.get("hysteresis", 2.0)),
        )

    @classmethod
    def from_file(cls, path) -> "ScenarioScript":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class LabeledStream:
    points: list
    truth: list

    def __post_init__(self):
        if len(self.points) != len(self.truth):
            raise ValueError("points and truth must align 1:1")

    def __len__(self):
        return len(self.points)


def _excess_db(*levels_db) -> float:
    """Rise of the total density over the baseline noise, each level in dB re noise."""
    k = math.log(10.0) / 10.0
    terms = [0.0] + [k * lv for lv in levels_db if lv is not None]
    return float(logsumexp(terms)) / k


def noiseless(script: ScenarioScript, tau: float) -> tuple:
    """``(rx_power, cn0_or_None, truth_label)`` at time offset ``tau``."""
    b = script.baseline
    truth = Label.NOMINAL
    effect = None
    for ev in script.events:
        if ev.t_start <= tau < ev.t_end:
            truth = TRUTH[ev.kind]
        if ev.t_start + ev.lag_s <= tau < ev.t_end + ev.lag_s and effect is None:
            effect = ev
    if effect is None:
        return b.rx_power, b.cn0, truth
    ev = effect
    if ev.kind is EventKind.BLOCK:
        cn0 = None if ev.attenuation_db is None else b.cn0 - ev.attenuation_db
        return b.rx_power, cn0, truth
    if ev.kind is EventKind.SPOOF:
        excess = _excess_db(ev.power_db, ev.spoof_power_db)
        captured = ev.power_db is None or ev.spoof_power_db >= ev.power_db + 3.0
        cn0 = ev.spoof_cn0 if captured else b.cn0 - excess
        return b.rx_power + excess, cn0, truth
    if ev.kind is EventKind.RAMP_JAM:
        excess = ev.ramp_excess_db(tau)
    else:
        excess = _excess_db(ev.power_db)
    return b.rx_power + excess, b.cn0 - excess, truth


def render(script: ScenarioScript, seed: int = 0) -> LabeledStream:
    rng = np.random.default_rng(seed)
    b = script.baseline
    offsets = script.epoch_offsets()
    noise = rng.standard_normal((offsets.size, 2))
    points = []
    truth = []
    tracking = True
    lose_below = script.tracking_floor - script.hysteresis
    for tau, (n_rx, n_cn0) in zip(offsets, noise):
        rx, cn0, label = noiseless(script, float(tau))
        rx += b.sigma_rx * n_rx
        if cn0 is not None:
            cn0 += b.sigma_cn0 * n_cn0
            if tracking and cn0 < lose_below:
                tracking = False
            elif not tracking and cn0 >= script.tracking_floor:
                tracking = True
        else:
            tracking = False
        reported = min(max(cn0, 0.0), 65.0) if (tracking and cn0 is not None) else None
        points.append(MetricPoint(script.t0 + float(tau), script.sat_id, float(rx), reported,
                                  script.elevation_deg))
        truth.append(label)
    return LabeledStream(points, truth)


def _single_ramp(script: ScenarioScript) -> Event:
    ramps = [e for e in script.events if e.kind is EventKind.RAMP_JAM]
    if len(ramps) != 1:
        raise NoRamp(f"expected exactly one RampJam event, found {len(ramps)}")
    return ramps[0]


def ramp_crossing_instant(script: ScenarioScript, regions: RegionMap) -> float:
    """Continuous time offset at which the noiseless ramp reaches the ellipse boundary.

    The slope -1 jamming path from the baseline point is intersected with the
    ellipse in closed form; the ramp reaches that excess power after
    ``excess / ramp_rate`` seconds.
    """
    ev = _single_ramp(script)
    b = script.baseline
    ell = regions.ellipse
    A = ell.shape_matrix()
    d0 = np.array([b.rx_power - ell.center[0], b.cn0 - ell.center[1]])
    u = np.array([1.0, -1.0])
    alpha = float(u @ A @ u)
    beta = float(u @ A @ d0)
    gamma = float(d0 @ A @ d0)
    start = ev.t_start + ev.lag_s
    if gamma > 1.0:
        return start
    e_star = (-beta + math.sqrt(beta * beta - alpha * (gamma - 1.0))) / alpha
    return start + max(e_star, 0.0) / ev.ramp_rate


def ramp_crossing_time(script: ScenarioScript, regions: RegionMap) -> float | None:
    """Timestamp of the first epoch whose noiseless ramp trajectory leaves the ellipse.

    Returns ``None`` when the ramp never leaves the ellipse within its event
    window.
    """
    ev = _single_ramp(script)
    t_cross = ramp_crossing_instant(script, regions)
    offsets = script.epoch_offsets()
    end = min(ev.t_end + ev.lag_s, script.duration)
    for tau in offsets[(offsets >= t_cross - 1e-9) & (offsets < end)]:
        rx, cn0, _ = noiseless(script, float(tau))
        if cn0 is None or not bool(regions.ellipse.contains(rx, cn0)):
            return script.t0 + float(tau)
    return None


# -- export ------------------------------------------------------------------------

def stream_to_records(stream: LabeledStream, cfg: CalibrationConfig, weights: WeightTable | None = None,
                      pga_level: float = 0.0, temp_k: float | None = None) -> list:
    """Canonical JSONL dicts (one spectrum + one epoch per point) that calibrate back to each rx power.

    Spectra are flat across the weight-table bins; the AGC and temperature
    terms the calibration removes are added back in.
    """
    weights = weights or cfg.weight_table
    temp = cfg.ref_temp if temp_k is None else temp_k
    u = cfg.unit_curve
    log_sum = 10.0 * math.log10(weights.total)
    extra = cfg.agc_factor * pga_level + cfg.temp_offset(temp) - cfg.temp_offset(cfg.ref_temp)
    f0 = weights.bin_center_freqs[0]
    nbins = len(weights.bin_center_freqs)
    out = []
    for p in stream.points:
        span = (p.rx_power + cfg.chain_gain - u.b) / u.a
        level = span - log_sum + extra
        out.append({"t": p.timestamp, "kind": "spectrum", "f0_hz": f0, "df_hz": 500000.0,
                    "bins": [level] * nbins, "pga": pga_level, "temp_k": temp})
        ep = {"t": p.timestamp, "kind": "epoch", "sat": p.sat_id}
        if p.cn0 is not None:
            ep["cn0"] = p.cn0
        ep["elev"] = p.elevation_deg
        out.append(ep)
    return out


def step_jam_script(hours: float = 8.0, n_events: int | None = None, power_db: float = 20.0,
                    on_s: float | None = None, lead_s: float | None = None, lag_s: float = 0.0,
                    baseline: Baseline | None = None) -> ScenarioScript:
    """Evenly spaced step-jamming events after a quiet lead-in.

    Defaults scale with the duration: two events per hour, a 600 s lead-in and
    900 s on-time, both shortened when the run is too short for them.
    """
    duration = hours * 3600.0
    n = n_events if n_events is not None else max(1, round(2 * hours))
    lead = lead_s if lead_s is not None else min(600.0, 0.1 * duration)
    period = (duration - lead) / n
    on = on_s if on_s is not None else min(900.0, 0.6 * period)
    events = [Event(EventKind.STEP_JAM, lead + k * period, lead + k * period + on,
                    power_db=power_db, lag_s=lag_s) for k in range(n)]
    return ScenarioScript(duration, baseline=baseline or Baseline(), events=tuple(events))


def scenario_windows(script: ScenarioScript) -> list:
    """``(t0, t1, name)`` for every event and every quiet gap, absolute time."""
    out = []
    cursor = 0.0
    for k, ev in enumerate(script.events):
        if ev.t_start > cursor:
            out.append((script.t0 + cursor, script.t0 + ev.t_start, f"quiet-{k}"))
        out.append((script.t0 + ev.t_start, script.t0 + ev.t_end, f"{ev.kind.value}-{k}"))
        cursor = ev.t_end
    if cursor < script.duration:
        out.append((script.t0 + cursor, script.t0 + script.duration, f"quiet-{len(script.events)}"))
    return out


def points_from_xy(xy: Sequence, t0: float = 0.0, sat_id: str = "S131", elevation: float = 46.0) -> list:
    return [MetricPoint(t0 + k, sat_id, float(x), float(y), elevation) for k, (x, y) in enumerate(xy)]
