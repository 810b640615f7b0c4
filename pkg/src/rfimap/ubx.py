"""Receiver-side ingestion: UBX-style binary frames and the canonical JSONL stream.

The binary path is an adapter.  Byte layouts of the vendor spectrum message are
not fixed here; a :class:`DecodeLayout` describes where the bins and the PGA
level live inside a payload.  The canonical JSONL stream is the reference
input format for the rest of the toolkit::

    {"t": 1725868800.0, "kind": "spectrum", "f0_hz": 1573.0e6, "df_hz": 500000,
     "bins": [-75.1, ...], "pga": 4, "temp_k": 301.5}
    {"t": 1725868800.0, "kind": "epoch", "sat": "S131", "cn0": 45.0, "elev": 46.0}

An epoch without a ``cn0`` key means the satellite was not tracked.
"""

from __future__ import annotations

import json
import logging
import math
import os
import struct
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Union

from .errors import (
    BadChecksum,
    BadSync,
    LayoutMismatch,
    PayloadTooShort,
    SchemaViolation,
    Truncated,
    Unreadable,
)

log = logging.getLogger(__name__)

SYNC1 = 0xB5
SYNC2 = 0x62
SYNC = bytes([SYNC1, SYNC2])
HEADER_LEN = 6  # sync(2) + class + id + length(2)
BIN_SPACING_HZ = 500_000.0
CN0_RANGE = (0.0, 65.0)
ELEV_RANGE = (0.0, 90.0)
TEMP_RANGE_K = (200.0, 350.0)


def checksum(data: bytes) -> bytes:
    """8-bit Fletcher checksum (CK_A, CK_B) over ``data``."""
    ck_a = 0
    ck_b = 0
    for b in data:
        ck_a = (ck_a + b) & 0xFF
        ck_b = (ck_b + ck_a) & 0xFF
    return bytes([ck_a, ck_b])


@dataclass(frozen=True)
class RawFrame:
    msg_class: int
    msg_id: int
    payload: bytes = b""

    def __post_init__(self):
        if not 0 <= self.msg_class <= 0xFF or not 0 <= self.msg_id <= 0xFF:
            raise ValueError("msg_class and msg_id must be 8-bit unsigned")
        if len(self.payload) > 0xFFFF:
            raise ValueError("payload longer than a 16-bit length field allows")

    @property
    def size(self) -> int:
        """Bytes occupied on the wire."""
        return HEADER_LEN + len(self.payload) + 2


def encode_frame(frame: RawFrame) -> bytes:
    body = struct.pack("<BBH", frame.msg_class, frame.msg_id, len(frame.payload)) + bytes(frame.payload)
    return SYNC + body + checksum(body)


def parse_frame(data: bytes) -> RawFrame:
    """Parse one frame starting at ``data[0]``.

    Trailing bytes after the frame are ignored; use :attr:`RawFrame.size` to
    advance through a buffer.
    """
    data = bytes(data)
    if len(data) < 2 or data[0] != SYNC1 or data[1] != SYNC2:
        raise BadSync("input does not start with 0xB5 0x62")
    if len(data) < HEADER_LEN:
        raise Truncated(f"header needs {HEADER_LEN} bytes, got {len(data)}")
    msg_class, msg_id, length = struct.unpack_from("<BBH", data, 2)
    end = HEADER_LEN + length
    if len(data) < end + 2:
        raise Truncated(f"frame declares {length} payload bytes; only {max(len(data) - HEADER_LEN, 0)} available")
    stored = data[end:end + 2]
    computed = checksum(data[2:end])
    if stored != computed:
        raise BadChecksum(f"stored {stored.hex()} != computed {computed.hex()}")
    return RawFrame(msg_class, msg_id, data[HEADER_LEN:end])


def iter_frames(buf: bytes) -> Iterator[RawFrame]:
    """Yield every valid frame in ``buf``, resynchronising after garbage or bad checksums."""
    buf = bytes(buf)
    pos = 0
    while True:
        start = buf.find(SYNC, pos)
        if start < 0:
            return
        try:
            frame = parse_frame(buf[start:])
        except Truncated:
            return
        except BadChecksum:
            log.debug("bad checksum at offset %d", start)
            pos = start + 1
            continue
        yield frame
        pos = start + frame.size


# -- records -----------------------------------------------------------------

@dataclass(frozen=True)
class SpectrumRecord:
    """One FFT snapshot in device units.

    ``temperature`` is not range-checked here; the stream reader and the
    temperature calibration step enforce the valid range.
    """

    timestamp: float
    bin_center_freqs: tuple
    bin_powers: tuple
    pga_level: float = 0.0
    temperature: float = 300.0
    agc_adjusted: bool = False

    def __post_init__(self):
        object.__setattr__(self, "bin_center_freqs", tuple(float(f) for f in self.bin_center_freqs))
        object.__setattr__(self, "bin_powers", tuple(float(p) for p in self.bin_powers))
        n = len(self.bin_center_freqs)
        if n < 1 or n != len(self.bin_powers):
            raise ValueError("bin_center_freqs and bin_powers need equal length >= 1")
        for lo, hi in zip(self.bin_center_freqs, self.bin_center_freqs[1:]):
            if abs((hi - lo) - BIN_SPACING_HZ) > 1.0:
                raise ValueError("bin centers must be uniformly spaced by 500 kHz")

    def slice_band(self, lo_hz: float, hi_hz: float) -> "SpectrumRecord":
        """Keep bins whose centers fall in ``[lo_hz, hi_hz]`` (1 kHz slack)."""
        keep = [i for i, f in enumerate(self.bin_center_freqs) if lo_hz - 1e3 <= f <= hi_hz + 1e3]
        if not keep:
            raise ValueError("no bins inside the requested band")
        return SpectrumRecord(
            self.timestamp,
            [self.bin_center_freqs[i] for i in keep],
            [self.bin_powers[i] for i in keep],
            self.pga_level,
            self.temperature,
            self.agc_adjusted,
        )


@dataclass(frozen=True)
class ReceiverEpoch:
    timestamp: float
    sat_id: str
    cn0: float | None
    elevation_deg: float

    def __post_init__(self):
        if self.cn0 is not None and not (CN0_RANGE[0] <= self.cn0 <= CN0_RANGE[1]):
            raise ValueError(f"cn0 {self.cn0} outside [{CN0_RANGE[0]}, {CN0_RANGE[1]}] dB-Hz")
        if not (ELEV_RANGE[0] <= self.elevation_deg <= ELEV_RANGE[1]):
            raise ValueError(f"elevation {self.elevation_deg} outside [0, 90] deg")


# -- binary spectrum adapter --------------------------------------------------

@dataclass(frozen=True)
class DecodeLayout:
    """Where a spectrum payload keeps its bins.

    Bin ``i`` is centred at ``center_freq_hz + spacing * (i - bin_count // 2)``
    with ``spacing = span_hz / bin_count``.  Each bin is one unsigned byte,
    ``power = byte * power_scale + zero_offset``.
    """

    bin_count: int
    center_freq_hz: float
    span_hz: float
    msg_class: int = 0x0A
    msg_id: int = 0x31
    bins_offset: int = 0
    power_scale: float = 0.25
    zero_offset: float = 0.0
    pga_offset: int | None = None

    def __post_init__(self):
        if self.bin_count < 1:
            raise ValueError("bin_count must be >= 1")
        if abs(self.span_hz / self.bin_count - BIN_SPACING_HZ) > 1.0:
            raise ValueError("layout must describe 500 kHz bins")

    @property
    def spacing(self) -> float:
        return self.span_hz / self.bin_count

    def bin_centers(self) -> list:
        half = self.bin_count // 2
        return [self.center_freq_hz + self.spacing * (i - half) for i in range(self.bin_count)]

    @property
    def min_payload(self) -> int:
        need = self.bins_offset + self.bin_count
        if self.pga_offset is not None:
            need = max(need, self.pga_offset + 1)
        return need


def decode_spectrum(frame: RawFrame, layout: DecodeLayout, timestamp: float = 0.0,
                    temperature: float = 300.0) -> SpectrumRecord:
    if (frame.msg_class, frame.msg_id) != (layout.msg_class, layout.msg_id):
        raise LayoutMismatch(
            f"frame {frame.msg_class:#04x}/{frame.msg_id:#04x} does not match layout "
            f"{layout.msg_class:#04x}/{layout.msg_id:#04x}"
        )
    if len(frame.payload) < layout.min_payload:
        raise PayloadTooShort(f"payload has {len(frame.payload)} bytes, layout needs {layout.min_payload}")
    raw = frame.payload[layout.bins_offset:layout.bins_offset + layout.bin_count]
    powers = [b * layout.power_scale + layout.zero_offset for b in raw]
    pga = float(frame.payload[layout.pga_offset]) if layout.pga_offset is not None else 0.0
    return SpectrumRecord(timestamp, layout.bin_centers(), powers, pga, temperature)


# -- canonical JSONL ------------------------------------------------------------

Record = Union[SpectrumRecord, ReceiverEpoch]


@dataclass
class StreamResult:
    records: list = field(default_factory=list)
    errors: list = field(default_factory=list)  # SchemaViolation, one per bad line
    warnings: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    @property
    def epochs(self) -> list:
        return [r for r in self.records if isinstance(r, ReceiverEpoch)]

    @property
    def spectra(self) -> list:
        return [r for r in self.records if isinstance(r, SpectrumRecord)]


def _number(obj, key, lineno, *, required=True):
    if key not in obj:
        if required:
            raise SchemaViolation(lineno, f"missing key {key!r}")
        return None
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise SchemaViolation(lineno, f"{key!r} must be a number")
    return float(val)


def parse_record(obj: dict, lineno: int = 0) -> Record:
    """Validate one decoded JSON object against the canonical schema."""
    if not isinstance(obj, dict):
        raise SchemaViolation(lineno, "record is not a JSON object")
    t = _number(obj, "t", lineno)
    if not math.isfinite(t):
        raise SchemaViolation(lineno, "'t' must be finite")
    kind = obj.get("kind")
    if kind == "epoch":
        sat = obj.get("sat")
        if not isinstance(sat, str) or not sat:
            raise SchemaViolation(lineno, "'sat' must be a non-empty string")
        cn0 = _number(obj, "cn0", lineno, required=False)
        elev = _number(obj, "elev", lineno)
        try:
            return ReceiverEpoch(t, sat, cn0, elev)
        except ValueError as exc:
            raise SchemaViolation(lineno, str(exc)) from None
    if kind == "spectrum":
        f0 = _number(obj, "f0_hz", lineno)
        df = _number(obj, "df_hz", lineno)
        if abs(df - BIN_SPACING_HZ) > 1.0:
            raise SchemaViolation(lineno, f"df_hz must be {BIN_SPACING_HZ:.0f}")
        bins = obj.get("bins")
        if not isinstance(bins, list) or not bins:
            raise SchemaViolation(lineno, "'bins' must be a non-empty list")
        if any(isinstance(b, bool) or not isinstance(b, (int, float)) for b in bins):
            raise SchemaViolation(lineno, "'bins' must hold numbers")
        pga = _number(obj, "pga", lineno)
        temp = _number(obj, "temp_k", lineno)
        if not TEMP_RANGE_K[0] <= temp <= TEMP_RANGE_K[1]:
            raise SchemaViolation(lineno, f"temp_k {temp} outside {TEMP_RANGE_K}")
        freqs = [f0 + i * df for i in range(len(bins))]
        return SpectrumRecord(t, freqs, bins, pga, temp)
    raise SchemaViolation(lineno, f"unknown kind {kind!r}")


def _lines(source) -> Iterable[str]:
    if isinstance(source, (str, bytes, os.PathLike)):
        try:
            with open(source, encoding="utf-8") as fh:
                yield from fh
        except OSError as exc:
            raise Unreadable(f"cannot read {os.fspath(source)!s}: {exc.strerror or exc}") from exc
    else:
        yield from source


def read_epoch_stream(source) -> StreamResult:
    """Read canonical JSONL from a path or an iterable of lines.

    Bad lines are collected in ``result.errors`` and reading continues.
    Non-monotone timestamps are reported in ``result.warnings``.
    """
    result = StreamResult()
    last_t = -math.inf
    for lineno, line in enumerate(_lines(source), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            result.errors.append(SchemaViolation(lineno, f"invalid JSON ({exc.msg})"))
            continue
        try:
            rec = parse_record(obj, lineno)
        except SchemaViolation as exc:
            result.errors.append(exc)
            continue
        if rec.timestamp < last_t:
            result.warnings.append(f"line {lineno}: timestamp {rec.timestamp} earlier than {last_t}")
        last_t = max(last_t, rec.timestamp)
        result.records.append(rec)
    return result


def record_to_json(rec: Record) -> dict:
    """Inverse of :func:`parse_record`."""
    if isinstance(rec, ReceiverEpoch):
        out = {"t": rec.timestamp, "kind": "epoch", "sat": rec.sat_id}
        if rec.cn0 is not None:
            out["cn0"] = rec.cn0
        out["elev"] = rec.elevation_deg
        return out
    return {
        "t": rec.timestamp,
        "kind": "spectrum",
        "f0_hz": rec.bin_center_freqs[0],
        "df_hz": BIN_SPACING_HZ,
        "bins": list(rec.bin_powers),
        "pga": rec.pga_level,
        "temp_k": rec.temperature,
    }
