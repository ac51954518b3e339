import math

import numpy as np
import pytest

from floodbed.traffic import (HEADER_SIZE, Device, DeviceProfile, GroundTruthLog, Kind, PacketRecord,
                              WireError, attack_initiations, attack_schedule, decode, encode,
                              flood_times, merge_intervals, read_temperature)


def make(dev_id=1, seed=0, **kw):
    return Device(DeviceProfile(dev_id, **kw), np.random.default_rng(seed))


def test_benign_packet_at_clock():
    p = make().benign_next(5.0)
    assert p.kind is Kind.TELEMETRY
    assert p.emit_time == 5.0
    assert p.seq == 0
    assert 30.0 <= read_temperature(p) <= 80.0


def test_benign_same_seed_same_payload():
    a, b = make(seed=7), make(seed=7)
    assert [a.benign_next(t).payload for t in range(5)] == [b.benign_next(t).payload for t in range(5)]


def test_sixty_ticks_give_sixty_packets():
    d = make()
    pkts = list(d.stream(60.0))
    assert len(pkts) == 60
    assert [p.seq for p in pkts] == list(range(60))
    assert [p.emit_time for p in pkts] == [float(k) for k in range(60)]


def test_telemetry_respects_phase():
    d = make(phase=0.25)
    assert [p.emit_time for p in d.stream(3.0)] == [0.25, 1.25, 2.25]


def test_temperature_stays_in_range():
    d = make(seed=3)
    temps = [read_temperature(d.benign_next(float(t))) for t in range(5000)]
    assert min(temps) >= 30.0 and max(temps) <= 80.0


def test_flood_count_and_size():
    d = make(compromised=True)
    pkts = list(d.flood_burst(0.0, 10.0))
    assert len(pkts) == 10000
    assert {p.payload_len for p in pkts} == {1032}
    assert {len(p.payload) for p in pkts} == {1032}
    assert all(p.kind is Kind.FLOOD for p in pkts)


def test_flood_zero_duration_is_empty():
    assert list(make(compromised=True).flood_burst(3.0, 0.0)) == []


def test_flood_spacing_at_100_per_second():
    prof = DeviceProfile(1, compromised=True, attack_rate=100.0)
    times = list(flood_times(prof, 2.0, 60.0))
    assert len(times) == 6000
    gaps = np.diff(times)
    assert np.allclose(gaps, 0.01)


def test_zero_probability_no_attacks():
    prof = DeviceProfile(2, compromised=True, attack_probability=0.0)
    assert attack_schedule(prof, 1000.0, np.random.default_rng(0)) == []


def test_certain_attack_merges_into_one_interval():
    prof = DeviceProfile(2, compromised=True, attack_probability=1.0, attack_duration=10.0)
    # ticks 0..9 each start 10 s; merged [0, 19) clipped to the 10 s horizon
    assert attack_schedule(prof, 10.0, np.random.default_rng(0)) == [(0.0, 10.0)]
    assert attack_schedule(prof, 100.0, np.random.default_rng(0)) == [(0.0, 100.0)]


def test_initiation_count_is_binomial():
    # 30 seeds x 1000 ticks; each seed within 3 sigma of Binomial(1000, 0.1)
    prof = DeviceProfile(2, compromised=True, attack_probability=0.1)
    n, p = 1000, 0.1
    mean, sigma = n * p, math.sqrt(n * p * (1 - p))
    counts = [len(attack_initiations(prof, 1000.0, np.random.default_rng(s))) for s in range(30)]
    assert all(abs(c - mean) <= 3 * sigma for c in counts), counts
    # pooled mean is far tighter
    assert abs(np.mean(counts) - mean) <= 3 * sigma / math.sqrt(30)


def test_schedule_requires_compromised_device():
    with pytest.raises(ValueError):
        attack_schedule(DeviceProfile(1), 10.0, np.random.default_rng(0))


@pytest.mark.parametrize("kw", [dict(attack_probability=1.5), dict(attack_probability=-0.1),
                                dict(telemetry_period=0.0), dict(attack_payload_size=4),
                                dict(compromised=True, attack_rate=0.0)])
def test_invalid_profiles(kw):
    with pytest.raises(ValueError):
        DeviceProfile(1, **kw)


def test_merge_intervals():
    assert merge_intervals([(5, 8), (0, 3), (2, 4)]) == [(0, 4), (5, 8)]
    # touching intervals are separate floods
    assert merge_intervals([(0, 1), (1, 2)]) == [(0, 1), (1, 2)]


def test_stream_interleaves_with_increasing_seq():
    d = make(2, compromised=True, attack_rate=4.0)
    pkts = list(d.stream(5.0, [(1.5, 2.0)]))
    assert [p.seq for p in pkts] == list(range(len(pkts)))
    times = [p.emit_time for p in pkts]
    assert times == sorted(times)
    kinds = [p.kind for p in pkts]
    assert kinds.count(Kind.TELEMETRY) == 5
    assert kinds.count(Kind.FLOOD) == 8


def test_stream_clips_flood_at_horizon():
    d = make(2, compromised=True)
    pkts = list(d.stream(300.5, [(300.0, 10.0)]))
    floods = [p for p in pkts if p.kind is Kind.FLOOD]
    assert len(floods) == 500
    assert max(p.emit_time for p in floods) < 300.5


def test_wire_roundtrip_and_kind_ignored():
    d = make(4, compromised=True)
    pkt = d.flood_packet(1.25)
    raw = encode(pkt)
    back = decode(raw)
    assert back.key == pkt.key and back.emit_time == pkt.emit_time and back.body == pkt.body
    assert back.kind is None
    # flipping the kind byte changes nothing the server can see
    flipped = raw[:3] + bytes([0]) + raw[4:]
    assert decode(flipped) == back
    hdr = decode(raw, keep_body=False)
    assert hdr.payload_len == 1032 and hdr.body == b""


def test_telemetry_datagram_size():
    p = make().benign_next(0.0)
    assert p.payload_len == HEADER_SIZE + 4 == len(p.payload)


def test_decode_rejects_bad_datagrams():
    with pytest.raises(WireError):
        decode(b"FB\x01")
    with pytest.raises(WireError):
        decode(b"XX" + bytes(30))


def test_stripped_hides_kind():
    p = PacketRecord(1, 2, 0.5, Kind.FLOOD, b"abc")
    s = p.stripped()
    assert s.kind is None and s.key == p.key and s.body == p.body


def test_ground_truth_rejects_duplicates():
    g = GroundTruthLog()
    g.add(1, 0, Kind.TELEMETRY, 0.0)
    with pytest.raises(ValueError):
        g.add(1, 0, Kind.FLOOD, 1.0)
    assert g.kinds() == {(1, 0): Kind.TELEMETRY}
