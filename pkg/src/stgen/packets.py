"""Packet schemas carried in every UDP datagram.

Each datagram holds exactly one top-level document with reserved field
names:

    k   msg kind as int32 (0=data, 1=subscribe, 2=ack)
    id  sensor id, e.g. "temp_1"
    st  sensor type string          (data only)
    q   sequence number, int64      (data only)
    ts  sent-at epoch millis        (data only)
    p   reading payload sub-document (data only)

Data packets carry a payload; subscribe and ack packets carry only the
sensor id. One packet per datagram, no fragmentation, and any encoded
packet must fit comfortably inside a single UDP datagram.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

from .codec import (
    DatetimeMs,
    DecodeError,
    Document,
    EncodeError,
    Int64,
    decode_document,
    encode_document,
)

MAX_PACKET_BYTES = 60000


class MsgKind(IntEnum):
    DATA = 0
    SUBSCRIBE = 1
    ACK = 2


@dataclass
class DataPacket:
    kind: MsgKind
    sensor_id: str
    sensor_type: str = ""
    seq: int = 0
    sent_at_ms: int = 0
    payload: Document | None = None

    def to_document(self) -> Document:
        doc: Document = {"k": int(self.kind), "id": self.sensor_id}
        if self.kind == MsgKind.DATA:
            doc["st"] = self.sensor_type
            doc["q"] = Int64(self.seq)
            doc["ts"] = DatetimeMs(self.sent_at_ms)
            doc["p"] = self.payload if self.payload is not None else {}
        return doc


def data_packet(sensor_id: str, sensor_type: str, seq: int, sent_at_ms: int,
                payload: Document) -> DataPacket:
    return DataPacket(MsgKind.DATA, sensor_id, sensor_type, seq, sent_at_ms, payload)


def subscribe_packet(sensor_id: str) -> DataPacket:
    return DataPacket(MsgKind.SUBSCRIBE, sensor_id)


def ack_packet(sensor_id: str) -> DataPacket:
    return DataPacket(MsgKind.ACK, sensor_id)


def encode_packet(packet: DataPacket) -> bytes:
    """Encode a packet to wire bytes; rejects anything over the datagram cap."""
    data = encode_document(packet.to_document())
    if len(data) > MAX_PACKET_BYTES:
        raise EncodeError(f"packet of {len(data)} bytes exceeds {MAX_PACKET_BYTES}")
    return data


def decode_packet(data: bytes) -> DataPacket:
    """Decode wire bytes into a packet. Raises DecodeError on malformed input."""
    doc = decode_document(data)
    kind_raw = doc.get("k")
    if not isinstance(kind_raw, int) or isinstance(kind_raw, bool):
        raise DecodeError("bad_packet", "missing or non-integer msg kind")
    try:
        kind = MsgKind(int(kind_raw))
    except ValueError:
        raise DecodeError("bad_packet", f"unknown msg kind {kind_raw}") from None
    sensor_id = doc.get("id")
    if not isinstance(sensor_id, str) or not sensor_id:
        raise DecodeError("bad_packet", "missing sensor id")
    if kind != MsgKind.DATA:
        return DataPacket(kind, sensor_id)

    sensor_type = doc.get("st")
    seq = doc.get("q")
    ts = doc.get("ts")
    payload = doc.get("p")
    if not isinstance(sensor_type, str):
        raise DecodeError("bad_packet", "data packet missing sensor type")
    if not isinstance(seq, int) or isinstance(seq, bool) or seq < 0:
        raise DecodeError("bad_packet", "data packet missing sequence number")
    if not isinstance(ts, int) or isinstance(ts, bool):
        raise DecodeError("bad_packet", "data packet missing timestamp")
    if not isinstance(payload, dict):
        raise DecodeError("bad_packet", "data packet missing payload")
    return DataPacket(kind, sensor_id, sensor_type, int(seq), int(ts), payload)
