#!/usr/bin/env python3
"""A tour of the binary wire format.

Every datagram in the testbed carries one binary-encoded document. This
script encodes a few documents by hand, prints the raw bytes, and shows
the size comparison against the equivalent compact JSON text.
"""

from stgen.codec import DatetimeMs, canonical_json, decode_document, encode_document, json_size_ratio
from stgen.packets import data_packet, encode_packet
from stgen.sensors import SensorType, make_generator


def show(label, doc):
    data = encode_document(doc)
    text = canonical_json(doc)
    print(f"{label}:")
    print(f"  document : {doc}")
    print(f"  binary   : {data.hex(' ')}  ({len(data)} bytes)")
    print(f"  json     : {text}  ({len(text.encode())} bytes)")
    print()


# The empty document is just a length prefix and a terminator.
show("empty", {})

# One int32 element: tag 0x10, name 'a', little-endian value.
show("single int", {"a": 1})

# A sensor reading as it travels: nested payload, millisecond timestamp.
show("temperature reading", {
    "k": 0, "id": "temp_1", "st": "temp", "q": 12,
    "ts": DatetimeMs(1_700_000_000_000), "p": {"temperature_c": 21.84},
})

# Round-trip: decode(encode(x)) gives back the same structure.
doc = {"lat": 23.7286, "lon": 90.3854, "fix": True}
assert decode_document(encode_document(doc)) == doc
print("round-trip ok:", doc)
print()

# The binary encoding pays off on binary-heavy payloads: JSON must
# base64 camera frames while the wire format carries them raw.
camera = make_generator(SensorType.CAMERA, seed=1)
packets = [
    data_packet("camera_1", "camera", i + 1, 1_700_000_000_000 + i,
                camera.next_payload()).to_document()
    for i in range(10)
]
print(f"camera packet corpus: binary/JSON size ratio = "
      f"{json_size_ratio(packets):.3f}")

tiny = [{"a": 1}] * 10
print(f"tiny document corpus: ratio = {json_size_ratio(tiny):.3f} "
      f"(binary overhead dominates, ratio above 1 is expected)")

full_packet = encode_packet(data_packet("temp_1", "temp", 1,
                                        1_700_000_000_000,
                                        {"temperature_c": 20.5}))
print(f"\na full temperature data packet is {len(full_packet)} bytes on the wire")
