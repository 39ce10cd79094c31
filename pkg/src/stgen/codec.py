"""Binary document codec used for every datagram on the wire.

Documents are encoded as a strict subset of the public BSON format so
that off-the-shelf tools can decode archives. Layout (little-endian
throughout):

    document := int32 total_size | element* | 0x00
    element  := tag (1B) | name cstring | value
    string   := int32 byte_count_incl_nul | utf8 bytes | 0x00
    binary   := int32 byte_count | subtype (1B, we write 0x00) | bytes

Supported element tags:

    0x01 float64      0x02 utf8 string    0x03 embedded document
    0x05 binary       0x08 boolean        0x09 datetime (int64 epoch ms)
    0x10 int32        0x12 int64

A document is an ordered mapping of non-empty names to values. Plain
Python ints travel as int32 when they fit and widen to int64 otherwise;
the Int64 and DatetimeMs wrappers pin the 64-bit tags so that a decoded
document re-encodes bit-identically.

The decoder is total: any byte string either decodes to a document or
raises DecodeError with a reason code. It never allocates beyond the
input size and bounds nesting depth.
"""

from __future__ import annotations

import base64
import json
import struct

TAG_FLOAT64 = 0x01
TAG_STRING = 0x02
TAG_DOCUMENT = 0x03
TAG_BINARY = 0x05
TAG_BOOL = 0x08
TAG_DATETIME = 0x09
TAG_INT32 = 0x10
TAG_INT64 = 0x12

MAX_DEPTH = 32

INT32_MIN = -(2**31)
INT32_MAX = 2**31 - 1
INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

_F64 = struct.Struct("<d")
_I32 = struct.Struct("<i")
_I64 = struct.Struct("<q")


class Int64(int):
    """Marker for values that must travel as int64 regardless of magnitude."""

    def __repr__(self):
        return f"Int64({int(self)})"


class DatetimeMs(int):
    """Timestamp as integer milliseconds since the Unix epoch (datetime tag)."""

    def __repr__(self):
        return f"DatetimeMs({int(self)})"


# A document value: float | str | bytes | bool | DatetimeMs | Int64 | int | dict
Document = dict


class EncodeError(ValueError):
    """Document violates an encoding constraint (bad name, depth, size, type)."""


class DecodeError(ValueError):
    """Input bytes are not a well-formed document.

    `reason` is a stable machine-readable code: truncated, length_mismatch,
    unknown_tag, name_overrun, bad_name, bad_bool, duplicate_name, depth,
    bad_utf8.
    """

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


def encode_document(doc: Document) -> bytes:
    """Encode a document to its binary form. Raises EncodeError on bad input."""
    out = bytearray()
    _encode_into(out, doc, depth=0)
    return bytes(out)


def _encode_into(out: bytearray, doc: Document, depth: int) -> None:
    if depth > MAX_DEPTH:
        raise EncodeError(f"nesting depth exceeds {MAX_DEPTH}")
    start = len(out)
    out += b"\x00\x00\x00\x00"  # length backpatched below
    for name, value in doc.items():
        _encode_element(out, name, value, depth)
    out.append(0x00)
    _I32.pack_into(out, start, len(out) - start)


def _encode_element(out: bytearray, name, value, depth: int) -> None:
    if not isinstance(name, str) or not name:
        raise EncodeError(f"element name must be a non-empty string, got {name!r}")
    if "\x00" in name:
        raise EncodeError(f"element name contains NUL: {name!r}")
    name_bytes = name.encode("utf-8") + b"\x00"

    # bool subclasses int and the int64/datetime wrappers subclass int,
    # so dispatch most-specific first.
    if isinstance(value, bool):
        out.append(TAG_BOOL)
        out += name_bytes
        out.append(1 if value else 0)
    elif isinstance(value, DatetimeMs):
        out.append(TAG_DATETIME)
        out += name_bytes
        out += _I64.pack(value)
    elif isinstance(value, Int64):
        out.append(TAG_INT64)
        out += name_bytes
        out += _I64.pack(value)
    elif isinstance(value, int):
        if INT32_MIN <= value <= INT32_MAX:
            out.append(TAG_INT32)
            out += name_bytes
            out += _I32.pack(value)
        elif INT64_MIN <= value <= INT64_MAX:
            out.append(TAG_INT64)
            out += name_bytes
            out += _I64.pack(value)
        else:
            raise EncodeError(f"integer out of 64-bit range: {name!r}")
    elif isinstance(value, float):
        out.append(TAG_FLOAT64)
        out += name_bytes
        out += _F64.pack(value)
    elif isinstance(value, str):
        out.append(TAG_STRING)
        out += name_bytes
        encoded = value.encode("utf-8")
        out += _I32.pack(len(encoded) + 1)
        out += encoded
        out.append(0x00)
    elif isinstance(value, (bytes, bytearray)):
        out.append(TAG_BINARY)
        out += name_bytes
        out += _I32.pack(len(value))
        out.append(0x00)  # generic subtype
        out += value
    elif isinstance(value, dict):
        out.append(TAG_DOCUMENT)
        out += name_bytes
        _encode_into(out, value, depth + 1)
    else:
        raise EncodeError(f"unsupported value type for {name!r}: {type(value).__name__}")


def decode_document(data: bytes) -> Document:
    """Decode binary data into a document. Raises DecodeError on any malformed input."""
    if len(data) < 5:
        raise DecodeError("truncated", f"need at least 5 bytes, got {len(data)}")
    declared = _I32.unpack_from(data, 0)[0]
    if declared != len(data):
        raise DecodeError("length_mismatch", f"prefix says {declared}, have {len(data)}")
    doc, end = _decode_doc(data, 0, len(data), depth=0)
    if end != len(data):
        raise DecodeError("length_mismatch", "trailing bytes after document")
    return doc


def _decode_doc(data: bytes, start: int, limit: int, depth: int) -> tuple[Document, int]:
    """Decode one document at `start`; returns (document, offset past it)."""
    if depth > MAX_DEPTH:
        raise DecodeError("depth", f"nesting deeper than {MAX_DEPTH}")
    if limit - start < 5:
        raise DecodeError("truncated", "document shorter than 5 bytes")
    size = _I32.unpack_from(data, start)[0]
    if size < 5 or start + size > limit:
        raise DecodeError("truncated", f"document size {size} overruns buffer")
    end = start + size
    pos = start + 4
    doc: Document = {}
    while True:
        if pos >= end:
            raise DecodeError("truncated", "missing document terminator")
        tag = data[pos]
        pos += 1
        if tag == 0x00:
            if pos != end:
                raise DecodeError("length_mismatch", "terminator before declared end")
            return doc, end
        name, pos = _decode_name(data, pos, end)
        if name in doc:
            raise DecodeError("duplicate_name", name)
        value, pos = _decode_value(data, pos, end, tag, depth)
        doc[name] = value


def _decode_name(data: bytes, pos: int, end: int) -> tuple[str, int]:
    nul = data.find(b"\x00", pos, end)
    if nul < 0:
        raise DecodeError("name_overrun", "element name not terminated")
    if nul == pos:
        raise DecodeError("bad_name", "empty element name")
    try:
        name = data[pos:nul].decode("utf-8")
    except UnicodeDecodeError:
        raise DecodeError("bad_utf8", "element name not valid UTF-8") from None
    return name, nul + 1


def _decode_value(data: bytes, pos: int, end: int, tag: int, depth: int):
    if tag == TAG_FLOAT64:
        _need(pos, 8, end)
        return _F64.unpack_from(data, pos)[0], pos + 8
    if tag == TAG_INT32:
        _need(pos, 4, end)
        return _I32.unpack_from(data, pos)[0], pos + 4
    if tag == TAG_INT64:
        _need(pos, 8, end)
        return Int64(_I64.unpack_from(data, pos)[0]), pos + 8
    if tag == TAG_DATETIME:
        _need(pos, 8, end)
        return DatetimeMs(_I64.unpack_from(data, pos)[0]), pos + 8
    if tag == TAG_BOOL:
        _need(pos, 1, end)
        b = data[pos]
        if b > 1:
            raise DecodeError("bad_bool", f"boolean byte {b:#04x}")
        return b == 1, pos + 1
    if tag == TAG_STRING:
        _need(pos, 4, end)
        n = _I32.unpack_from(data, pos)[0]
        pos += 4
        if n < 1:
            raise DecodeError("truncated", f"string length {n} below minimum")
        _need(pos, n, end)
        if data[pos + n - 1] != 0x00:
            raise DecodeError("truncated", "string not NUL-terminated")
        try:
            return data[pos : pos + n - 1].decode("utf-8"), pos + n
        except UnicodeDecodeError:
            raise DecodeError("bad_utf8", "string not valid UTF-8") from None
    if tag == TAG_BINARY:
        _need(pos, 5, end)
        n = _I32.unpack_from(data, pos)[0]
        pos += 5  # length + subtype byte (subtype ignored on decode)
        if n < 0:
            raise DecodeError("truncated", f"negative binary length {n}")
        _need(pos, n, end)
        return data[pos : pos + n], pos + n
    if tag == TAG_DOCUMENT:
        return _decode_doc(data, pos, end, depth + 1)
    raise DecodeError("unknown_tag", f"{tag:#04x}")


def _need(pos: int, count: int, end: int) -> None:
    if pos + count > end:
        raise DecodeError("truncated", f"need {count} bytes at offset {pos}")


def canonical_json(doc: Document) -> str:
    """Render the pinned text form of a document for size comparisons.

    UTF-8, no insignificant whitespace, byte values as base64 strings,
    timestamps as integer milliseconds, field order preserved.
    """
    return json.dumps(doc, default=_json_default, separators=(",", ":"), ensure_ascii=False)


def _json_default(value):
    if isinstance(value, (bytes, bytearray)):
        return base64.b64encode(value).decode("ascii")
    raise TypeError(f"not JSON-encodable: {type(value).__name__}")


def json_size_ratio(docs: list[Document]) -> float:
    """Return total binary bytes / total canonical-JSON UTF-8 bytes for a corpus."""
    if not docs:
        raise ValueError("json_size_ratio needs a non-empty corpus")
    binary = sum(len(encode_document(d)) for d in docs)
    text = sum(len(canonical_json(d).encode("utf-8")) for d in docs)
    return binary / text
