import json
import struct

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import fletcher_oracle
from rfimap.calibration import L1CA_TABLE_CENTERS_HZ
from rfimap.errors import BadChecksum, BadSync, LayoutMismatch, PayloadTooShort, SchemaViolation, Truncated, Unreadable
from rfimap.ubx import (
    DecodeLayout,
    RawFrame,
    ReceiverEpoch,
    SpectrumRecord,
    checksum,
    decode_spectrum,
    encode_frame,
    iter_frames,
    parse_frame,
    parse_record,
    read_epoch_stream,
    record_to_json,
)


def oracle_accepts(data: bytes) -> bool:
    if len(data) < 8 or data[:2] != b"\xb5\x62":
        return False
    (length,) = struct.unpack_from("<H", data, 4)
    end = 6 + length
    if len(data) < end + 2:
        return False
    return fletcher_oracle(data[2:end]) == data[end:end + 2]


def test_empty_frame_matches_oracle():
    body = bytes([0x0A, 0x31, 0x00, 0x00])
    wire = b"\xb5\x62" + body + fletcher_oracle(body)
    assert parse_frame(wire) == RawFrame(0x0A, 0x31, b"")
    assert checksum(body) == fletcher_oracle(body)


def test_flipped_checksum_byte():
    wire = bytearray(encode_frame(RawFrame(0x0A, 0x31, b"")))
    wire[-1] ^= 0xFF
    with pytest.raises(BadChecksum):
        parse_frame(bytes(wire))


def test_empty_input_is_bad_sync():
    with pytest.raises(BadSync):
        parse_frame(b"")


def test_truncated_payload():
    wire = encode_frame(RawFrame(0x0A, 0x31, b"\x01\x02\x03"))
    with pytest.raises(Truncated):
        parse_frame(wire[:-3])


def test_trailing_bytes_ignored_and_size_consumed():
    f = RawFrame(1, 2, b"abc")
    wire = encode_frame(f) + b"\xff\xff"
    assert parse_frame(wire) == f
    assert f.size == len(encode_frame(f))


def test_iter_frames_resyncs_after_garbage():
    a, b = RawFrame(1, 2, b"x"), RawFrame(3, 4, b"yz")
    bad = bytearray(encode_frame(RawFrame(5, 6, b"q")))
    bad[-2] ^= 1
    buf = b"\x00garbage" + encode_frame(a) + bytes(bad) + encode_frame(b)
    assert list(iter_frames(buf)) == [a, b]


@given(cls=st.integers(0, 255), mid=st.integers(0, 255), payload=st.binary(max_size=4096))
def test_round_trip(cls, mid, payload):
    wire = encode_frame(RawFrame(cls, mid, payload))
    assert encode_frame(parse_frame(wire)) == wire


@given(data=st.binary(min_size=0, max_size=64))
def test_acceptance_agrees_with_oracle_on_random_bytes(data):
    data = b"\xb5\x62" + data
    try:
        parse_frame(data)
        accepted = True
    except (BadChecksum, Truncated, BadSync):
        accepted = False
    assert accepted == oracle_accepts(data)


# -- spectrum decoding ----------------------------------------------------------------

TABLE_LAYOUT = DecodeLayout(bin_count=10, center_freq_hz=1575.5e6, span_hz=5e6, zero_offset=-120.0)


def test_layout_reproduces_table_centers():
    frame = RawFrame(0x0A, 0x31, bytes(10))
    rec = decode_spectrum(frame, TABLE_LAYOUT)
    assert rec.bin_center_freqs == pytest.approx(L1CA_TABLE_CENTERS_HZ)


def test_all_zero_payload_gives_zero_offset():
    rec = decode_spectrum(RawFrame(0x0A, 0x31, bytes(10)), TABLE_LAYOUT)
    assert set(rec.bin_powers) == {-120.0}


def test_short_payload_and_wrong_ids():
    with pytest.raises(PayloadTooShort):
        decode_spectrum(RawFrame(0x0A, 0x31, bytes(9)), TABLE_LAYOUT)
    with pytest.raises(LayoutMismatch):
        decode_spectrum(RawFrame(0x0A, 0x32, bytes(10)), TABLE_LAYOUT)


def test_pga_offset_and_scale():
    layout = DecodeLayout(4, 1575e6, 2e6, bins_offset=1, pga_offset=0, power_scale=0.5)
    rec = decode_spectrum(RawFrame(0x0A, 0x31, bytes([7, 2, 4, 6, 8])), layout)
    assert rec.pga_level == 7
    assert rec.bin_powers == (1.0, 2.0, 3.0, 4.0)


@given(n=st.integers(1, 256), payload=st.binary(min_size=256, max_size=300))
def test_decoded_spacing_is_uniform(n, payload):
    layout = DecodeLayout(n, 1575.42e6, n * 500e3)
    rec = decode_spectrum(RawFrame(0x0A, 0x31, payload), layout)
    gaps = [b - a for a, b in zip(rec.bin_center_freqs, rec.bin_center_freqs[1:])]
    assert all(abs(g - 500e3) < 1e-3 for g in gaps)


def test_spectrum_record_rejects_uneven_bins():
    with pytest.raises(ValueError):
        SpectrumRecord(0, [1e9, 1.0005e9, 1.002e9], [0, 0, 0])
    with pytest.raises(ValueError):
        SpectrumRecord(0, [], [])


# -- JSONL ----------------------------------------------------------------------------

SPEC_LINE = {"t": 1.0, "kind": "spectrum", "f0_hz": 1573.0e6, "df_hz": 500000,
             "bins": [-75.0] * 10, "pga": 4, "temp_k": 301.5}


def _lines(*objs):
    return [json.dumps(o) + "\n" for o in objs]


def test_three_line_stream_in_order():
    res = read_epoch_stream(_lines(
        {"t": 1.0, "kind": "epoch", "sat": "S131", "cn0": 45.0, "elev": 46.0},
        SPEC_LINE,
        {"t": 2.0, "kind": "epoch", "sat": "S131", "elev": 46.0},
    ))
    assert [type(r) for r in res] == [ReceiverEpoch, SpectrumRecord, ReceiverEpoch]
    assert res.records[2].cn0 is None
    assert not res.errors


def test_cn0_out_of_range_is_reported_with_line():
    res = read_epoch_stream(_lines(
        {"t": 1.0, "kind": "epoch", "sat": "S131", "cn0": 45.0, "elev": 46.0},
        {"t": 2.0, "kind": "epoch", "sat": "S131", "cn0": 99, "elev": 46.0},
    ))
    assert len(res) == 1
    assert len(res.errors) == 1 and res.errors[0].line == 2


def test_empty_stream():
    res = read_epoch_stream([])
    assert len(res) == 0 and not res.errors


def test_malformed_lines_are_collected():
    res = read_epoch_stream(["{not json\n", '{"t": 1, "kind": "weird"}\n', "[1, 2]\n", json.dumps(SPEC_LINE)])
    assert len(res) == 1
    assert [e.line for e in res.errors] == [1, 2, 3]
    assert all(isinstance(e, SchemaViolation) for e in res.errors)


def test_non_monotone_time_is_a_warning():
    res = read_epoch_stream(_lines(SPEC_LINE | {"t": 5.0}, SPEC_LINE | {"t": 4.0}))
    assert len(res) == 2 and len(res.warnings) == 1


def test_temperature_range_enforced_on_read():
    res = read_epoch_stream(_lines(SPEC_LINE | {"temp_k": 150.0}))
    assert len(res.errors) == 1


def test_unreadable_path(tmp_path):
    with pytest.raises(Unreadable):
        read_epoch_stream(tmp_path / "missing.jsonl")


def test_record_json_round_trip():
    for obj in (SPEC_LINE, {"t": 3.0, "kind": "epoch", "sat": "G05", "cn0": 40.5, "elev": 10.0},
                {"t": 3.0, "kind": "epoch", "sat": "G05", "elev": 10.0}):
        rec = parse_record(obj)
        assert parse_record(record_to_json(rec)) == rec
