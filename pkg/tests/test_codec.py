"""Wire codec tests: golden vectors, round-trips, decoder totality, size ratio."""

import json
import math
import random
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stgen.codec import (
    DatetimeMs,
    DecodeError,
    EncodeError,
    Int64,
    canonical_json,
    decode_document,
    encode_document,
    json_size_ratio,
)
from stgen.packets import (
    MsgKind,
    ack_packet,
    data_packet,
    decode_packet,
    encode_packet,
    subscribe_packet,
)


# --- independent reference encoder -----------------------------------------
#
# Minimal re-statement of the public BSON layout, used as an oracle for the
# production encoder. Deliberately naive (pure concatenation, no shared code).

def ref_encode(doc):
    body = b""
    for name, value in doc.items():
        body += ref_element(name, value)
    return struct.pack("<i", 4 + len(body) + 1) + body + b"\x00"


def ref_element(name, value):
    n = name.encode("utf-8") + b"\x00"
    if isinstance(value, bool):
        return b"\x08" + n + (b"\x01" if value else b"\x00")
    if isinstance(value, DatetimeMs):
        return b"\x09" + n + struct.pack("<q", value)
    if isinstance(value, Int64):
        return b"\x12" + n + struct.pack("<q", value)
    if isinstance(value, int):
        if -(2**31) <= value < 2**31:
            return b"\x10" + n + struct.pack("<i", value)
        return b"\x12" + n + struct.pack("<q", value)
    if isinstance(value, float):
        return b"\x01" + n + struct.pack("<d", value)
    if isinstance(value, str):
        s = value.encode("utf-8")
        return b"\x02" + n + struct.pack("<i", len(s) + 1) + s + b"\x00"
    if isinstance(value, bytes):
        return b"\x05" + n + struct.pack("<i", len(value)) + b"\x00" + value
    if isinstance(value, dict):
        return b"\x03" + n + ref_encode(value)
    raise TypeError(type(value))


def assert_identical(a, b):
    """Structural equality: same order, names, exact types, exact values."""
    assert list(a.keys()) == list(b.keys())
    for k in a:
        va, vb = a[k], b[k]
        assert type(va) is type(vb), f"{k}: {type(va)} != {type(vb)}"
        if isinstance(va, dict):
            assert_identical(va, vb)
        elif isinstance(va, float):
            assert struct.pack("<d", va) == struct.pack("<d", vb), k
        else:
            assert va == vb, k


# --- golden vectors ---------------------------------------------------------

def test_empty_document_is_five_bytes():
    assert encode_document({}) == bytes.fromhex("0500000000")
    assert ref_encode({}) == bytes.fromhex("0500000000")


def test_single_int32_golden_bytes():
    expected = bytes.fromhex("0C0000001061000100000000")
    assert ref_encode({"a": 1}) == expected
    assert encode_document({"a": 1}) == expected


def test_float_round_trip():
    doc = {"t": 25.5}
    assert_identical(decode_document(encode_document(doc)), doc)


def test_encoder_matches_reference_on_mixed_document():
    doc = {
        "f": 3.25,
        "s": "hello",
        "sub": {"x": Int64(7), "flag": True},
        "blob": b"\x00\x01\xff",
        "ts": DatetimeMs(1700000000123),
        "n": -42,
        "big": 2**40,
    }
    assert encode_document(doc) == ref_encode(doc)


def test_length_prefix_equals_actual_length():
    for doc in ({}, {"a": 1}, {"x": "y" * 300, "d": {"q": False}}):
        data = encode_document(doc)
        assert struct.unpack_from("<i", data)[0] == len(data)


# --- encode errors ----------------------------------------------------------

def test_name_with_nul_rejected():
    with pytest.raises(EncodeError):
        encode_document({"a\x00b": 1})


def test_empty_name_rejected():
    with pytest.raises(EncodeError):
        encode_document({"": 1})


def test_depth_limit_enforced():
    doc = {}
    for _ in range(40):
        doc = {"d": doc}
    with pytest.raises(EncodeError):
        encode_document(doc)


def test_unsupported_type_rejected():
    with pytest.raises(EncodeError):
        encode_document({"a": [1, 2]})


def test_int_out_of_64bit_range_rejected():
    with pytest.raises(EncodeError):
        encode_document({"a": 2**70})


# --- decode errors and totality ---------------------------------------------

def test_short_input_is_malformed():
    with pytest.raises(DecodeError) as e:
        decode_document(bytes.fromhex("00000000"))
    assert e.value.reason == "truncated"


def test_length_prefix_mismatch():
    good = encode_document({"a": 1})
    with pytest.raises(DecodeError) as e:
        decode_document(good + b"\x00")
    assert e.value.reason == "length_mismatch"


def test_unknown_tag():
    # hand-built document with tag 0x7f
    body = b"\x7fa\x00\x01"
    raw = struct.pack("<i", 4 + len(body) + 1) + body + b"\x00"
    with pytest.raises(DecodeError) as e:
        decode_document(raw)
    assert e.value.reason == "unknown_tag"


def test_name_overrun():
    body = b"\x10abc"  # name never terminated
    raw = struct.pack("<i", 4 + len(body) + 1) + body + b"\x00"
    with pytest.raises(DecodeError) as e:
        decode_document(raw)
    assert e.value.reason in ("name_overrun", "truncated")


def test_deeply_nested_input_does_not_crash():
    doc = {}
    for _ in range(33):
        doc = {"d": doc}
    # encode without the guard by building bytes via the reference encoder
    raw = ref_encode(doc)
    with pytest.raises(DecodeError) as e:
        decode_document(raw)
    assert e.value.reason == "depth"


def test_random_fuzz_never_crashes():
    rng = random.Random(61919)
    for _ in range(2000):
        blob = rng.randbytes(rng.randint(0, 64))
        try:
            decode_document(blob)
        except DecodeError:
            pass


def test_truncation_fuzz_never_crashes():
    data = encode_document({"a": 1, "s": "abcdef", "d": {"x": 1.5}, "b": b"xyz"})
    for cut in range(len(data)):
        try:
            decode_document(data[:cut])
        except DecodeError:
            pass


# --- round-trip properties ---------------------------------------------------

names = st.text(
    alphabet=st.characters(blacklist_characters="\x00", blacklist_categories=("Cs",)),
    min_size=1,
    max_size=8,
)

scalars = st.one_of(
    st.floats(allow_nan=False),
    st.text(st.characters(blacklist_categories=("Cs",)), max_size=20),
    st.binary(max_size=40),
    st.booleans(),
    st.integers(min_value=-(2**31), max_value=2**31 - 1),
    st.builds(Int64, st.integers(min_value=-(2**63), max_value=2**63 - 1)),
    st.builds(DatetimeMs, st.integers(min_value=0, max_value=2**48)),
)

documents = st.recursive(
    st.dictionaries(names, scalars, max_size=6),
    lambda children: st.dictionaries(names, st.one_of(scalars, children), max_size=4),
    max_leaves=20,
)


@settings(max_examples=300, deadline=None)
@given(documents)
def test_round_trip_identity(doc):
    assert_identical(decode_document(encode_document(doc)), doc)


@settings(max_examples=300, deadline=None)
@given(documents)
def test_encoder_agrees_with_reference(doc):
    assert encode_document(doc) == ref_encode(doc)


# --- packets ------------------------------------------------------------------

def test_packet_round_trip_all_kinds():
    pkts = [
        data_packet("temp_1", "temp", 3, 1700000000000, {"temperature_c": 21.5}),
        subscribe_packet("temp_1"),
        ack_packet("temp_1"),
    ]
    for pkt in pkts:
        out = decode_packet(encode_packet(pkt))
        assert out == pkt


def test_subscribe_packet_carries_only_sensor_id():
    doc = decode_document(encode_packet(subscribe_packet("gps_4")))
    assert list(doc.keys()) == ["k", "id"]
    assert doc["k"] == int(MsgKind.SUBSCRIBE)


def test_oversized_packet_rejected():
    pkt = data_packet("camera_1", "camera", 1, 0, {"data": b"\x00" * 70000})
    with pytest.raises(EncodeError):
        encode_packet(pkt)


def test_data_packet_requires_payload_fields():
    raw = encode_document({"k": 0, "id": "temp_1"})
    with pytest.raises(DecodeError):
        decode_packet(raw)


def test_packet_garbage_is_decode_error():
    with pytest.raises(DecodeError):
        decode_packet(b"\x10\x20\x30")


# --- size ratio ----------------------------------------------------------------

def test_empty_document_ratio_is_2_5():
    assert json_size_ratio([{}]) == 2.5
    assert canonical_json({}) == "{}"


def test_tiny_document_ratio_above_one():
    # {"a":1} is 12 bytes binary, 7 bytes JSON
    ratio = json_size_ratio([{"a": 1}])
    assert ratio == pytest.approx(12 / 7)
    assert ratio > 1.0


def test_camera_corpus_ratio_near_three_quarters():
    rng = random.Random(7)
    docs = []
    for i in range(20):
        payload = {"data": rng.randbytes(4096), "width": 640, "height": 480}
        docs.append(
            data_packet(f"camera_{i+1}", "camera", i, 1700000000000 + i, payload).to_document()
        )
    assert json_size_ratio(docs) == pytest.approx(0.76, abs=0.15)


def test_ratio_empty_corpus_rejected():
    with pytest.raises(ValueError):
        json_size_ratio([])


def test_canonical_json_is_compact_and_parseable():
    doc = {"b": b"\x01\x02", "t": DatetimeMs(5), "q": Int64(9), "s": "é"}
    text = canonical_json(doc)
    assert " " not in text
    parsed = json.loads(text)
    assert parsed["t"] == 5 and parsed["q"] == 9 and parsed["s"] == "é"


def test_nan_round_trips_bitwise():
    data = encode_document({"x": math.nan})
    out = decode_document(data)
    assert math.isnan(out["x"])
