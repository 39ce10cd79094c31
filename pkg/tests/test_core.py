"""Core node: registry, archiving, relay fan-out, sink flushing, capture."""

import json
import random

import pytest

from stgen.core import CoreNode, NodeKind, Registry
from stgen.packets import (
    ack_packet,
    data_packet,
    decode_packet,
    encode_packet,
    subscribe_packet,
)

SENSOR_ADDR = ("127.0.0.1", 40001)
CLIENT_A = ("127.0.0.1", 50001)
CLIENT_B = ("127.0.0.1", 50002)


class ListSink:
    def __init__(self):
        self.batches = []
        self.fail = False

    def write_many(self, records):
        if self.fail:
            raise IOError("sink down")
        self.batches.append(list(records))


def make_core(tmp_path, **kwargs):
    sent = []
    core = CoreNode("127.0.0.1", 0, 0, sim_time=60, archive_dir=tmp_path,
                    sink=kwargs.pop("sink", ListSink()),
                    client_send=lambda data, addr: sent.append((data, addr)),
                    **kwargs)
    return core, sent


def temp_bytes(seq=1, sensor_id="temp_1", sent_at=1_700_000_000_000):
    return encode_packet(data_packet(sensor_id, "temp", seq, sent_at,
                                     {"temperature_c": 20.0 + seq}))


# --- sensor datagrams -----------------------------------------------------------

def test_first_packet_registers_sensor(tmp_path):
    core, _ = make_core(tmp_path)
    core.handle_sensor_datagram(temp_bytes(), SENSOR_ADDR, now=100.0)
    entry = core.registry.entries["temp_1"]
    assert entry.kind == NodeKind.SENSOR
    assert entry.packets == 1
    assert entry.subscriptions == set()
    assert entry.first_seen == entry.last_seen == 100.0


def test_fan_out_to_two_subscribers(tmp_path):
    core, sent = make_core(tmp_path)
    core.handle_client_request(encode_packet(subscribe_packet("temp_1")), CLIENT_A, 1.0)
    core.handle_client_request(encode_packet(subscribe_packet("temp_1")), CLIENT_B, 1.0)
    sent.clear()  # two acks
    core.handle_sensor_datagram(temp_bytes(), SENSOR_ADDR, 2.0)
    assert sorted(addr for _, addr in sent) == sorted([CLIENT_A, CLIENT_B])
    assert core.relayed == 2


def test_relay_preserves_bytes(tmp_path):
    core, sent = make_core(tmp_path)
    core.handle_client_request(encode_packet(subscribe_packet("temp_1")), CLIENT_A, 1.0)
    sent.clear()
    raw = temp_bytes(seq=9)
    core.handle_sensor_datagram(raw, SENSOR_ADDR, 2.0)
    assert sent == [(raw, CLIENT_A)]
    relayed = decode_packet(sent[0][0])
    assert relayed.seq == 9 and relayed.payload == {"temperature_c": 29.0}


def test_garbage_increments_malformed_only(tmp_path):
    core, _ = make_core(tmp_path)
    rng = random.Random(17)
    before = dict(core.registry.entries)
    core.handle_sensor_datagram(rng.randbytes(64), SENSOR_ADDR, 1.0)
    assert core.malformed == 1
    assert core.registry.entries == before
    assert core.packets_archived == 0


def test_malformed_flood_never_raises(tmp_path):
    core, _ = make_core(tmp_path)
    rng = random.Random(99)
    for _ in range(100_000):
        core.handle_sensor_datagram(rng.randbytes(rng.randint(0, 80)),
                                    SENSOR_ADDR, 1.0)
        core.handle_client_request(rng.randbytes(rng.randint(0, 40)), CLIENT_A, 1.0)
    assert core.packets_archived == 0
    assert all(e.kind == NodeKind.SENSOR for e in core.registry.entries.values()) \
        or core.registry.entries == {}


def test_subscribe_packet_on_sensor_port_is_rejected(tmp_path):
    core, _ = make_core(tmp_path)
    core.handle_sensor_datagram(encode_packet(subscribe_packet("temp_1")),
                                SENSOR_ADDR, 1.0)
    assert core.malformed == 1


# --- client requests --------------------------------------------------------------

def test_subscribe_registers_and_acks(tmp_path):
    core, sent = make_core(tmp_path)
    core.handle_client_request(encode_packet(subscribe_packet("temp_1")), CLIENT_A, 5.0)
    entry = core.registry.entries[f"client_{CLIENT_A[0]}:{CLIENT_A[1]}"]
    assert entry.kind == NodeKind.CLIENT
    assert entry.subscriptions == {"temp_1"}
    assert len(sent) == 1
    ack = decode_packet(sent[0][0])
    assert ack == ack_packet("temp_1")


def test_duplicate_subscribe_is_idempotent_but_acked(tmp_path):
    core, sent = make_core(tmp_path)
    for _ in range(2):
        core.handle_client_request(encode_packet(subscribe_packet("temp_1")),
                                   CLIENT_A, 5.0)
    entry = core.registry.entries[f"client_{CLIENT_A[0]}:{CLIENT_A[1]}"]
    assert entry.subscriptions == {"temp_1"}
    assert len(sent) == 2  # both acked
    assert len(core.registry.subscriber_addrs("temp_1")) == 1


def test_subscribe_to_unknown_sensor_acked_no_data(tmp_path):
    core, sent = make_core(tmp_path)
    core.handle_client_request(encode_packet(subscribe_packet("temp_999")),
                               CLIENT_A, 5.0)
    assert decode_packet(sent[0][0]).sensor_id == "temp_999"
    core.handle_sensor_datagram(temp_bytes(), SENSOR_ADDR, 6.0)
    assert core.relayed == 0


def test_ack_on_client_port_is_malformed(tmp_path):
    core, _ = make_core(tmp_path)
    core.handle_client_request(encode_packet(ack_packet("x")), CLIENT_A, 1.0)
    assert core.malformed == 1


# --- registry expiry ----------------------------------------------------------------

def test_expire_threshold():
    reg = Registry()
    reg.upsert_sensor("temp_1", SENSOR_ADDR, now=0.0)
    assert reg.expire_stale(now=59.0, ttl=60.0) == []
    assert reg.expire_stale(now=61.0, ttl=60.0) == ["temp_1"]
    assert reg.entries == {}


def test_expire_keeps_sensor_with_live_subscriber():
    reg = Registry()
    reg.upsert_sensor("temp_1", SENSOR_ADDR, now=0.0)
    client = reg.upsert_client(CLIENT_A, now=55.0)
    reg.subscribe(client, "temp_1")
    # sensor idle 61s but client is fresh
    assert reg.expire_stale(now=61.0, ttl=60.0) == []
    assert "temp_1" in reg.entries


def test_expire_client_clears_subscriptions():
    reg = Registry()
    client = reg.upsert_client(CLIENT_A, now=0.0)
    reg.subscribe(client, "temp_1")
    removed = reg.expire_stale(now=120.0, ttl=60.0)
    assert removed == [client.node_id]
    assert reg.subscriber_addrs("temp_1") == []


def test_expire_empty_registry():
    assert Registry().expire_stale(now=10.0) == []


# --- document sink ---------------------------------------------------------------------

def test_flush_drains_buffer(tmp_path):
    sink = ListSink()
    core, _ = make_core(tmp_path, sink=sink)
    for i in range(3):
        core.handle_sensor_datagram(temp_bytes(seq=i + 1), SENSOR_ADDR, 1.0)
    assert core.flush_sink(now=100.0) == 3
    assert len(sink.batches[0]) == 3
    assert core.flush_sink(now=200.0) == 0  # buffer now empty


def test_sink_failure_retains_records_and_backs_off(tmp_path):
    sink = ListSink()
    sink.fail = True
    core, _ = make_core(tmp_path, sink=sink)
    core.handle_sensor_datagram(temp_bytes(), SENSOR_ADDR, 1.0)
    assert core.flush_sink(now=0.0) == 0
    assert len(core._sink_buffer) == 1
    # still backing off: no write attempt
    assert core.flush_sink(now=0.5) == 0
    sink.fail = False
    assert core.flush_sink(now=1.5) == 1
    assert core.sink_written == 1


def test_sink_overflow_drops_oldest(tmp_path):
    from stgen import core as core_mod
    sink = ListSink()
    sink.fail = True
    core, _ = make_core(tmp_path, sink=sink)
    cap = core_mod.SINK_BUFFER_CAP
    for i in range(cap + 1):
        core._sink_enqueue({"seq": i})
    assert core.sink_dropped == 1
    assert len(core._sink_buffer) == cap
    assert core._sink_buffer[0] == {"seq": 1}  # record 0 was dropped


# --- archive and capture ------------------------------------------------------------------

def test_archive_and_capture_lines(tmp_path):
    core, _ = make_core(tmp_path)
    core.open_outputs()
    core.handle_sensor_datagram(temp_bytes(seq=1), SENSOR_ADDR, now=10.0)
    core.handle_sensor_datagram(temp_bytes(seq=2), SENSOR_ADDR, now=10.012)
    core.close_outputs()

    archive = [json.loads(l) for l in open(core.archive_path)]
    assert len(archive) == 2
    assert archive[0]["sensor_id"] == "temp_1" and archive[0]["seq"] == 1
    assert archive[0]["payload"] == {"temperature_c": 21.0}
    assert archive[0]["source_addr"] == "127.0.0.1:40001"

    capture = [json.loads(l) for l in open(core.capture_path)]
    assert "frame_time_delta" not in capture[0]
    assert capture[1]["frame_time_delta"] == pytest.approx(0.012)
    assert capture[0]["bytes_on_wire"] == len(temp_bytes(seq=1))
    assert core.per_sensor["temp_1"] == 2 == len(archive)


def test_capture_delta_tracked_per_stream(tmp_path):
    core, _ = make_core(tmp_path)
    core.open_outputs()
    core.handle_sensor_datagram(temp_bytes(seq=1, sensor_id="temp_1"), SENSOR_ADDR, 1.0)
    core.handle_sensor_datagram(temp_bytes(seq=1, sensor_id="temp_2"), SENSOR_ADDR, 1.5)
    core.handle_sensor_datagram(temp_bytes(seq=2, sensor_id="temp_1"), SENSOR_ADDR, 2.0)
    core.close_outputs()
    capture = [json.loads(l) for l in open(core.capture_path)]
    assert "frame_time_delta" not in capture[0]
    assert "frame_time_delta" not in capture[1]  # first of temp_2's stream
    assert capture[2]["frame_time_delta"] == pytest.approx(1.0)
