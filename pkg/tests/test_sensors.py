"""Fleet spec parsing, reading generators, and timed sensor loops."""

import asyncio
import socket

import pytest

from stgen.packets import decode_packet
from stgen.sensors import (
    Fleet,
    SensorNode,
    SensorSpec,
    SensorType,
    SpecError,
    adjusted_interval,
    assign_ids,
    derive_seed,
    make_generator,
    parse_sensor_spec,
    run_fleet,
)


# --- spec parsing -------------------------------------------------------------

def test_parse_full_spec():
    assert parse_sensor_spec("temp:30:1") == SensorSpec(SensorType.TEMP, 30, 1)


def test_parse_defaults_rate_to_100():
    assert parse_sensor_spec("gps:10") == SensorSpec(SensorType.GPS, 10, 100)


@pytest.mark.parametrize("token", [
    "camera:0", "temp:-3", "foo:5", "temp", "temp:abc", "temp:5:0",
    "temp:5:101", "temp:5:xx", "temp:5:1:9",
])
def test_parse_rejects_bad_tokens(token):
    with pytest.raises(SpecError) as e:
        parse_sensor_spec(token)
    assert token.split(":")[0] in str(e.value) or token in str(e.value)


def test_parse_error_names_offending_token():
    with pytest.raises(SpecError, match="camera:0"):
        parse_sensor_spec("camera:0")


# --- rate adjustment ----------------------------------------------------------

def test_adjusted_interval_identity():
    assert adjusted_interval(1.0, 100) == 1.0


def test_adjusted_interval_half_rate():
    assert adjusted_interval(1.0, 50) == 2.0


def test_adjusted_interval_one_percent():
    assert adjusted_interval(0.5, 1) == 50.0


def test_adjusted_interval_guards():
    with pytest.raises(ValueError):
        adjusted_interval(1.0, 0)
    with pytest.raises(ValueError):
        adjusted_interval(0.0, 50)


# --- generators -----------------------------------------------------------------

def test_switch_with_zero_toggle_prob_never_changes():
    from stgen.sensors import SwitchGenerator
    gen = SwitchGenerator(seed=5, toggle_prob=0.0, start=True)
    assert all(gen.next_payload()["on"] for _ in range(1000))


def test_temp_step_bound_from_known_start():
    from stgen.sensors import TempGenerator
    for seed in range(20):
        gen = TempGenerator(seed=seed, start=25.0)
        assert 24.5 <= gen.next_payload()["temperature_c"] <= 25.5


def test_same_seed_same_readings():
    for sensor_type in SensorType:
        a = make_generator(sensor_type, seed=99)
        b = make_generator(sensor_type, seed=99)
        for _ in range(50):
            assert a.next_payload() == b.next_payload()


@pytest.mark.parametrize("sensor_type,check", [
    (SensorType.TEMP, lambda p: -10 <= p["temperature_c"] <= 45),
    (SensorType.HUMIDITY, lambda p: 0 <= p["humidity_pct"] <= 100),
    (SensorType.GPS, lambda p: -90 <= p["lat"] <= 90 and -180 <= p["lon"] <= 180),
    (SensorType.SWITCH, lambda p: isinstance(p["on"], bool)),
])
def test_readings_stay_in_range(sensor_type, check):
    gen = make_generator(sensor_type, seed=3)
    assert all(check(gen.next_payload()) for _ in range(10_000))


def test_camera_payload_shape():
    gen = make_generator(SensorType.CAMERA, seed=1, camera_bytes=128)
    payload = gen.next_payload()
    assert len(payload["data"]) == 128
    assert payload["width"] == 640 and payload["height"] == 480


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(1, "temp_1") == derive_seed(1, "temp_1")
    assert derive_seed(1, "temp_1") != derive_seed(1, "temp_2")
    assert derive_seed(1, "temp_1") != derive_seed(2, "temp_1")


# --- sensor loop -----------------------------------------------------------------

class UdpCounter:
    """Tiny loopback receiver collecting datagrams for assertions."""

    def __init__(self):
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind(("127.0.0.1", 0))
        self.sock.setblocking(False)
        self.addr = self.sock.getsockname()
        self.datagrams = []

    def drain(self):
        while True:
            try:
                self.datagrams.append(self.sock.recvfrom(65535)[0])
            except BlockingIOError:
                return self.datagrams

    def close(self):
        self.sock.close()


def run_node(interval, sim_time, **kwargs):
    async def main():
        rx = UdpCounter()
        node = SensorNode("temp_1", SensorType.TEMP, rx.addr, interval=interval,
                          sim_time=sim_time, seed=7, **kwargs)
        report = await node.run()
        await asyncio.sleep(0.05)
        rx.drain()
        rx.close()
        return report, rx.datagrams
    return asyncio.run(main())


def test_fixed_step_schedule_packet_count():
    # sends at t=0..0.9 in 0.1 steps, none at t=1.0
    report, datagrams = run_node(interval=0.1, sim_time=1.0)
    assert report.packets_sent == 10
    assert len(datagrams) == 10


def test_zero_sim_time_sends_nothing():
    report, datagrams = run_node(interval=0.1, sim_time=0.0)
    assert report.packets_sent == 0
    assert datagrams == []
    assert report.duration < 0.1


def test_runtime_equals_sim_time_regardless_of_rate():
    # interval exceeding sim_time: one packet at t=0, loop still runs full S
    report, datagrams = run_node(interval=5.0, sim_time=0.8)
    assert report.packets_sent == 1
    assert report.duration == pytest.approx(0.8, abs=0.2)


def test_seq_strictly_increments():
    _, datagrams = run_node(interval=0.05, sim_time=0.5)
    seqs = [decode_packet(d).seq for d in datagrams]
    assert seqs == list(range(1, len(seqs) + 1))


# --- fleet -------------------------------------------------------------------------

def test_id_assignment_per_type():
    ids = [i for i, _ in assign_ids([SensorSpec(SensorType.TEMP, 2),
                                     SensorSpec(SensorType.GPS, 1)])]
    assert ids == ["temp_1", "temp_2", "gps_1"]


def test_duplicate_type_tokens_concatenate():
    ids = [i for i, _ in assign_ids([SensorSpec(SensorType.TEMP, 2),
                                     SensorSpec(SensorType.TEMP, 3)])]
    assert ids == ["temp_1", "temp_2", "temp_3", "temp_4", "temp_5"]


def test_fleet_runs_and_reports():
    async def main():
        rx = UdpCounter()
        fleet_report, reports = await run_fleet(
            [SensorSpec(SensorType.TEMP, 3)], rx.addr, sim_time=0.6,
            seed=1, intervals={SensorType.TEMP: 0.2},
        )
        await asyncio.sleep(0.05)
        rx.drain()
        rx.close()
        return fleet_report, reports, rx.datagrams

    fleet_report, reports, datagrams = asyncio.run(main())
    assert fleet_report.node_count == 3
    assert sorted(fleet_report.node_ids) == ["temp_1", "temp_2", "temp_3"]
    assert fleet_report.startup_duration < 1.0
    assert sum(r.packets_sent for r in reports) == 9  # 3 sensors x 3 sends
    assert len(datagrams) == 9


def test_fleet_requires_a_sensor():
    with pytest.raises(SpecError):
        Fleet([], ("127.0.0.1", 9), sim_time=1.0)


def test_fleet_rate_percent_halves_packets():
    async def main():
        rx = UdpCounter()
        _, reports = await run_fleet(
            [SensorSpec(SensorType.TEMP, 1, rate_percent=50)], rx.addr,
            sim_time=1.0, seed=1, intervals={SensorType.TEMP: 0.1},
        )
        rx.close()
        return reports

    reports = asyncio.run(main())
    # I' = 0.2 s, sends at t=0,0.2,...,0.8
    assert reports[0].packets_sent == 5
