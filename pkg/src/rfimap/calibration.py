"""Spectrum calibration: raw SPAN-style bins to a received-power density.

Four steps, in order:

1. ``adjust_agc``       remove the receiver's internal gain (agc_factor x PGA level)
2. ``apply_temp_cal``   reference the reading to ``ref_temp`` with a fitted curve
3. ``aggregate_power``  weight the 500 kHz bins by the signal's PSD and sum
4. ``to_dbw_hz``        map device units to dBW/Hz and remove antenna/cable gain

``pair_metric`` then attaches the resulting power to each C/N0 epoch.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate

from .errors import (
    AlreadyAdjusted,
    BandNotCovered,
    BinMisalignment,
    DegenerateTemps,
    Saturated,
    TempOutOfRange,
    Underdetermined,
)
from .ubx import ReceiverEpoch, SpectrumRecord

GPS_L1CA_FREQ_HZ = 1575.42e6
GPS_L1CA_CHIP_RATE = 1.023e6
ALIGN_TOL_HZ = 1e3

# Published GPS L1 C/A power fractions for the ten 500 kHz bins 1573.0-1577.5 MHz.
L1CA_TABLE_CENTERS_HZ = tuple(1573.0e6 + 0.5e6 * i for i in range(10))
L1CA_TABLE_FRACTIONS = (0.007, 0.005, 0.020, 0.020, 0.268, 0.492, 0.158, 0.009, 0.019, 0.003)


# -- PSD and weights -----------------------------------------------------------

@dataclass(frozen=True)
class SignalPsd:
    """Unit-power spectrum of a signal over ``[band_lo, band_hi]`` Hz.

    Either ``density`` (a callable, 1/Hz) or ``lines`` (discrete
    ``(freq_hz, power)`` pairs) is given.  The interference spectrum is
    taken as flat, so the bin weights depend only on the signal PSD.
    """

    name: str
    band_lo: float
    band_hi: float
    density: Callable[[float], float] | None = None
    lines: tuple = ()
    breakpoints: tuple = ()

    def __post_init__(self):
        if not self.band_hi > self.band_lo:
            raise ValueError("band_hi must exceed band_lo")
        if (self.density is None) == (not self.lines):
            raise ValueError("give exactly one of density or lines")
        total = self.integral(self.band_lo, self.band_hi)
        if abs(total - 1.0) > 1e-3:
            raise ValueError(f"PSD integrates to {total:.6f} over its band, expected 1")

    def integral(self, lo: float, hi: float) -> float:
        lo = max(lo, self.band_lo)
        hi = min(hi, self.band_hi)
        if hi <= lo:
            return 0.0
        if self.density is None:
            return float(sum(p for f, p in self.lines if lo <= f < hi))
        pts = [p for p in self.breakpoints if lo < p < hi]
        val, _ = integrate.quad(self.density, lo, hi, points=pts or None, limit=200,
                                epsabs=1e-12, epsrel=1e-10)
        return float(val)


def sinc2_density(center_hz: float, chip_rate: float) -> Callable[[float], float]:
    """BPSK(1) power spectrum, unit power over the whole real line."""
    tc = 1.0 / chip_rate

    def g(f):
        return tc * np.sinc((f - center_hz) * tc) ** 2

    return g


def gps_l1ca_psd(band_lo: float = 1572.75e6, band_hi: float = 1577.75e6) -> SignalPsd:
    """GPS L1 C/A sinc^2 PSD renormalised to unit power over the given band.

    The default band is the span covered by the ten published 500 kHz bins.
    """
    raw = sinc2_density(GPS_L1CA_FREQ_HZ, GPS_L1CA_CHIP_RATE)
    brk = (GPS_L1CA_FREQ_HZ,) + tuple(GPS_L1CA_FREQ_HZ + k * GPS_L1CA_CHIP_RATE for k in (-2, -1, 1, 2))
    pts = [p for p in brk if band_lo < p < band_hi]
    norm, _ = integrate.quad(raw, band_lo, band_hi, points=pts, limit=200, epsabs=1e-14, epsrel=1e-12)

    def g(f):
        return raw(f) / norm

    return SignalPsd("GPS_L1CA", band_lo, band_hi, density=g, breakpoints=brk)


def flat_psd(band_lo: float, band_hi: float, name: str = "flat") -> SignalPsd:
    width = band_hi - band_lo
    return SignalPsd(name, band_lo, band_hi, density=lambda f: 1.0 / width)


def impulse_psd(freq_hz: float, name: str = "impulse") -> SignalPsd:
    return SignalPsd(name, freq_hz - 1.0, freq_hz + 1.0, lines=((freq_hz, 1.0),))


@dataclass(frozen=True)
class WeightTable:
    bin_center_freqs: tuple
    fractions: tuple

    def __post_init__(self):
        object.__setattr__(self, "bin_center_freqs", tuple(float(f) for f in self.bin_center_freqs))
        object.__setattr__(self, "fractions", tuple(float(w) for w in self.fractions))
        if len(self.bin_center_freqs) != len(self.fractions) or not self.fractions:
            raise ValueError("fractions and bin_center_freqs must have equal non-zero length")
        if any(w < 0 for w in self.fractions):
            raise ValueError("fractions must be non-negative")
        s = sum(self.fractions)
        if not 0.98 <= s <= 1.02:
            raise ValueError(f"fractions sum to {s:.4f}, outside [0.98, 1.02]")

    @property
    def total(self) -> float:
        return math.fsum(self.fractions)

    def to_dict(self) -> dict:
        return {"centers_hz": list(self.bin_center_freqs), "fractions": list(self.fractions)}

    @classmethod
    def from_dict(cls, d: dict) -> "WeightTable":
        return cls(d["centers_hz"], d["fractions"])


L1CA_TABLE = WeightTable(L1CA_TABLE_CENTERS_HZ, L1CA_TABLE_FRACTIONS)


def compute_weights(psd: SignalPsd, bin_centers: Sequence[float], bin_width: float = 500e3) -> WeightTable:
    """Integrate the signal PSD over each bin ``[c - w/2, c + w/2)``."""
    centers = [float(c) for c in bin_centers]
    if not centers:
        raise BandNotCovered("no bins given")
    lo_edge = min(centers) - bin_width / 2
    hi_edge = max(centers) + bin_width / 2
    if lo_edge > psd.band_lo + 1e-6 or hi_edge < psd.band_hi - 1e-6:
        raise BandNotCovered(
            f"bins span [{lo_edge:.0f}, {hi_edge:.0f}] Hz; signal band is [{psd.band_lo:.0f}, {psd.band_hi:.0f}] Hz"
        )
    fractions = [psd.integral(c - bin_width / 2, c + bin_width / 2) for c in centers]
    return WeightTable(centers, fractions)


# -- configuration ----------------------------------------------------------------

@dataclass(frozen=True)
class UnitCurve:
    """Affine device-unit to dBW/Hz map with saturation bounds on the input."""

    a: float = 1.0
    b: float = -100.0
    lo: float = -150.0
    hi: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("unit_curve.a must be positive")
        if not self.hi > self.lo:
            raise ValueError("unit_curve.hi must exceed unit_curve.lo")


@dataclass(frozen=True)
class CalibrationConfig:
    """Calibration constants.

    ``temp_curve`` holds polynomial coefficients in ascending powers of
    ``(T - ref_temp)`` with T in kelvin; the curve returns a dB offset.
    """

    agc_factor: float = 3.7
    ref_temp: float = 300.0
    temp_curve: tuple = (0.0,)
    unit_curve: UnitCurve = field(default_factory=UnitCurve)
    chain_gain: float = 24.9
    temp_range: tuple = (200.0, 350.0)
    signal: str = "GPS_L1CA"
    weights: dict = field(default_factory=lambda: {"GPS_L1CA": L1CA_TABLE})

    def __post_init__(self):
        object.__setattr__(self, "temp_curve", tuple(float(c) for c in self.temp_curve))
        if not self.agc_factor > 0:
            raise ValueError("agc_factor must be positive")
        if not 250.0 <= self.ref_temp <= 330.0:
            raise ValueError("ref_temp must lie in [250, 330] K")
        if self.signal not in self.weights:
            raise ValueError(f"no weight table for signal {self.signal!r}")

    @property
    def weight_table(self) -> WeightTable:
        return self.weights[self.signal]

    def temp_offset(self, temp_k: float) -> float:
        x = temp_k - self.ref_temp
        return float(sum(c * x ** k for k, c in enumerate(self.temp_curve)))

    def to_dict(self) -> dict:
        u = self.unit_curve
        return {
            "agc_factor": self.agc_factor,
            "ref_temp_k": self.ref_temp,
            "temp_curve": list(self.temp_curve),
            "temp_range_k": list(self.temp_range),
            "unit_curve": {"a": u.a, "b": u.b, "lo": u.lo, "hi": u.hi},
            "chain_gain_db": self.chain_gain,
            "signal": self.signal,
            "weights": {k: w.to_dict() for k, w in self.weights.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationConfig":
        base = cls()
        weights = dict(base.weights)
        for name, table in d.get("weights", {}).items():
            weights[name] = WeightTable.from_dict(table)
        u = d.get("unit_curve", {})
        bu = base.unit_curve
        return cls(
            agc_factor=float(d.get("agc_factor", base.agc_factor)),
            ref_temp=float(d.get("ref_temp_k", base.ref_temp)),
            temp_curve=tuple(d.get("temp_curve", base.temp_curve)),
            unit_curve=UnitCurve(float(u.get("a", bu.a)), float(u.get("b", bu.b)),
                                 float(u.get("lo", bu.lo)), float(u.get("hi", bu.hi))),
            chain_gain=float(d.get("chain_gain_db", base.chain_gain)),
            temp_range=tuple(d.get("temp_range_k", base.temp_range)),
            signal=d.get("signal", base.signal),
            weights=weights,
        )

    @classmethod
    def from_file(cls, path) -> "CalibrationConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


# -- the four steps -------------------------------------------------------------

def adjust_agc(record: SpectrumRecord, cfg: CalibrationConfig) -> SpectrumRecord:
    if record.agc_adjusted:
        raise AlreadyAdjusted("PGA level already removed from this record")
    offset = cfg.agc_factor * record.pga_level
    return replace(
        record,
        bin_powers=tuple(p - offset for p in record.bin_powers),
        pga_level=0.0,
        agc_adjusted=True,
    )


@dataclass(frozen=True)
class TempCurveFit:
    coefficients: tuple  # ascending powers of (T - ref_temp)
    residual_rms: float


def fit_temp_curve(samples: Iterable[tuple], degree: int = 2, ref_temp: float = 300.0) -> TempCurveFit:
    """Least-squares polynomial for the temperature offset in dB."""
    arr = np.asarray(list(samples), dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
        raise Underdetermined("need (kelvin, dB) pairs")
    temps, vals = arr[:, 0], arr[:, 1]
    distinct = np.unique(temps).size
    if distinct < 2 and degree >= 1:
        raise DegenerateTemps("all samples share one temperature")
    if distinct < degree + 1:
        raise Underdetermined(f"degree {degree} needs {degree + 1} distinct temperatures, got {distinct}")
    x = temps - ref_temp
    scale = max(float(np.max(np.abs(x))), 1.0)
    vander = np.vander(x / scale, degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(vander, vals, rcond=None)
    coef = coef / scale ** np.arange(degree + 1)
    resid = vals - np.vander(x, degree + 1, increasing=True) @ coef
    return TempCurveFit(tuple(float(c) for c in coef), float(np.sqrt(np.mean(resid ** 2))))


def apply_temp_cal(record: SpectrumRecord, cfg: CalibrationConfig) -> SpectrumRecord:
    lo, hi = cfg.temp_range
    if not lo <= record.temperature <= hi:
        raise TempOutOfRange(f"temperature {record.temperature} K outside [{lo}, {hi}] K")
    shift = cfg.temp_offset(cfg.ref_temp) - cfg.temp_offset(record.temperature)
    return replace(record, bin_powers=tuple(p + shift for p in record.bin_powers))


def aggregate_power(record: SpectrumRecord, weights: WeightTable) -> float:
    """``10 log10(sum_i 10^(P_i/10) f_i)``; bins at -inf are allowed."""
    if len(record.bin_center_freqs) != len(weights.bin_center_freqs):
        raise BinMisalignment(
            f"record has {len(record.bin_center_freqs)} bins, weight table {len(weights.bin_center_freqs)}"
        )
    fr = np.asarray(record.bin_center_freqs)
    fw = np.asarray(weights.bin_center_freqs)
    if np.max(np.abs(fr - fw)) > ALIGN_TOL_HZ:
        raise BinMisalignment("record bin centers differ from weight-table centers by more than 1 kHz")
    p = np.asarray(record.bin_powers, dtype=float)
    lin = np.power(10.0, p / 10.0) * np.asarray(weights.fractions)
    total = math.fsum(lin.tolist())
    if total <= 0.0:
        return -math.inf
    return 10.0 * math.log10(total)


def to_dbw_hz(span_value: float, cfg: CalibrationConfig) -> float:
    """Device-unit dB to environment-referenced dBW/Hz.

    Raises :class:`Saturated` outside the unit-curve bounds; the exception
    carries the clamped result in ``clamped``.
    """
    u = cfg.unit_curve
    clipped = min(max(span_value, u.lo), u.hi)
    out = u.a * clipped + u.b - cfg.chain_gain
    if clipped != span_value:
        raise Saturated(f"SPAN value {span_value} outside [{u.lo}, {u.hi}]", out)
    return out


def calibrate_record(record: SpectrumRecord, cfg: CalibrationConfig, weights: WeightTable | None = None) -> float:
    """All four steps.  Records wider than the weight table are cut to it first."""
    weights = weights or cfg.weight_table
    if len(record.bin_center_freqs) != len(weights.bin_center_freqs):
        record = record.slice_band(weights.bin_center_freqs[0], weights.bin_center_freqs[-1])
    rec = adjust_agc(record, cfg) if not record.agc_adjusted else record
    rec = apply_temp_cal(rec, cfg)
    return to_dbw_hz(aggregate_power(rec, weights), cfg)


# -- pairing ------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricPoint:
    timestamp: float
    sat_id: str
    rx_power: float
    cn0: float | None
    elevation_deg: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.rx_power):
            raise ValueError("rx_power must be finite")


@dataclass
class PairResult:
    points: list
    dropped: int

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)


def pair_metric(epochs: Sequence[ReceiverEpoch], powers: Sequence[tuple], window: float = 1.0) -> PairResult:
    """Attach the nearest power sample (within ``window`` s) to each epoch.

    Ties go to the earlier sample.  Epochs with no sample in range are dropped
    and counted.
    """
    times = [float(t) for t, _ in powers]
    values = [float(p) for _, p in powers]
    points = []
    dropped = 0
    for ep in epochs:
        k = bisect.bisect_left(times, ep.timestamp)
        best = None
        for j in (k - 1, k):
            if 0 <= j < len(times):
                d = abs(times[j] - ep.timestamp)
                if d <= window and (best is None or d < best[0]):
                    best = (d, j)
        if best is None or not math.isfinite(values[best[1]]):
            dropped += 1
            continue
        points.append(MetricPoint(ep.timestamp, ep.sat_id, values[best[1]], ep.cn0, ep.elevation_deg))
    return PairResult(points, dropped)


@dataclass
class CalibrationReport:
    points: list
    dropped: int = 0
    saturated: int = 0
    rejected: list = field(default_factory=list)


def calibrate_stream(records: Iterable, cfg: CalibrationConfig, window: float = 1.0) -> CalibrationReport:
    """Calibrate every spectrum record and pair the result with the epochs."""
    epochs = []
    powers = []
    saturated = 0
    rejected = []
    for rec in records:
        if isinstance(rec, ReceiverEpoch):
            epochs.append(rec)
            continue
        try:
            powers.append((rec.timestamp, calibrate_record(rec, cfg)))
        except Saturated as exc:
            saturated += 1
            powers.append((rec.timestamp, exc.clamped))
        except (TempOutOfRange, BinMisalignment, ValueError) as exc:
            rejected.append(f"t={rec.timestamp}: {exc}")
    epochs.sort(key=lambda e: e.timestamp)
    powers.sort(key=lambda p: p[0])
    paired = pair_metric(epochs, powers, window)
    return CalibrationReport(paired.points, paired.dropped, saturated, rejected)
