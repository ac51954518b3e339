"""Benign telemetry and UDP-flood traffic sources.

Every packet carries a small fixed header followed by a kind-specific body:

    magic 'FB' | version u8 | kind u8 | device_id u32 | seq u32 | emit_time_us u64

all little-endian.  Telemetry bodies are one f32 temperature reading, flood
bodies are pseudorandom padding up to the configured datagram size.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

MAGIC = b"FB"
WIRE_VERSION = 1
HEADER = struct.Struct("<2sBBIIQ")
HEADER_SIZE = HEADER.size  # 20
TELEMETRY_BODY = struct.Struct("<f")

TEMP_MIN, TEMP_MAX = 30.0, 80.0


class Kind(enum.IntEnum):
    TELEMETRY = 0
    FLOOD = 1


class WireError(ValueError):
    pass


@dataclass
class DeviceProfile:
    device_id: int
    telemetry_period: float = 1.0
    compromised: bool = False
    attack_probability: float = 0.10
    attack_duration: float = 10.0
    attack_rate: float = 1000.0
    attack_payload_size: int = 1032
    # offset of the first telemetry tick inside the period
    phase: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.attack_probability <= 1.0:
            raise ValueError(f"attack_probability must be in [0, 1], got {self.attack_probability}")
        if self.telemetry_period <= 0:
            raise ValueError("telemetry_period must be positive")
        if self.compromised and self.attack_rate <= 0:
            raise ValueError("attack_rate must be positive for a compromised device")
        if self.attack_payload_size < HEADER_SIZE:
            raise ValueError(f"attack_payload_size must be >= {HEADER_SIZE}")
        if self.attack_duration < 0:
            raise ValueError("attack_duration must be >= 0")


@dataclass(slots=True)
class PacketRecord:
    """One datagram.

    ``kind`` is ground truth.  Records handed to the server side are stripped
    (``kind=None``) so nothing downstream of the transport can look at it.
    """

    source: int
    seq: int
    emit_time: float
    kind: Optional[Kind]
    body: bytes = b""
    # header-only records reconstructed from the wire keep the received length
    wire_len: Optional[int] = None

    @property
    def payload_len(self) -> int:
        if self.wire_len is not None:
            return self.wire_len
        return HEADER_SIZE + len(self.body)

    @property
    def payload(self) -> bytes:
        return encode(self)

    def stripped(self) -> "PacketRecord":
        return PacketRecord(self.source, self.seq, self.emit_time, None, self.body, self.wire_len)

    @property
    def key(self) -> tuple[int, int]:
        return (self.source, self.seq)


def encode(packet: PacketRecord) -> bytes:
    kind = 0 if packet.kind is None else int(packet.kind)
    micros = int(round(packet.emit_time * 1_000_000))
    return HEADER.pack(MAGIC, WIRE_VERSION, kind, packet.source, packet.seq, micros) + packet.body


def decode(datagram: bytes, keep_body: bool = True) -> PacketRecord:
    """Server-side decode.  The kind byte is deliberately not read."""
    if len(datagram) < HEADER_SIZE:
        raise WireError(f"truncated datagram ({len(datagram)} bytes)")
    magic, version, _kind, device_id, seq, micros = HEADER.unpack_from(datagram)
    if magic != MAGIC or version != WIRE_VERSION:
        raise WireError("bad magic or version")
    if keep_body:
        return PacketRecord(device_id, seq, micros / 1_000_000, None, bytes(datagram[HEADER_SIZE:]))
    return PacketRecord(device_id, seq, micros / 1_000_000, None, b"", len(datagram))


def read_temperature(packet: PacketRecord) -> float:
    return TELEMETRY_BODY.unpack_from(packet.body)[0]


@dataclass
class GroundTruthLog:
    entries: list[tuple[int, int, Kind, float]] = field(default_factory=list)
    _keys: set = field(default_factory=set, repr=False)

    def add(self, source: int, seq: int, kind: Kind, emit_time: float) -> None:
        key = (source, seq)
        if key in self._keys:
            raise ValueError(f"duplicate ground-truth key {key}")
        self._keys.add(key)
        self.entries.append((source, seq, kind, emit_time))

    def record(self, packet: PacketRecord) -> None:
        self.add(packet.source, packet.seq, packet.kind, packet.emit_time)

    def extend(self, other: "GroundTruthLog") -> None:
        for entry in other.entries:
            self.add(*entry)

    def kinds(self) -> dict[tuple[int, int], Kind]:
        return {(s, q): k for s, q, k, _ in self.entries}

    def __len__(self) -> int:
        return len(self.entries)


def merge_intervals(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Merge overlapping [start, end) intervals; touching ones stay separate."""
    merged: list[list[float]] = []
    for start, end in sorted(intervals):
        if merged and start < merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])
    return [(s, e) for s, e in merged]


class Device:
    """A telemetry device, optionally compromised.

    Owns its sequence counter, temperature state and random generator; two
    devices never share state, so they can run on separate threads.
    """

    def __init__(self, profile: DeviceProfile, rng: np.random.Generator):
        self.profile = profile
        self.rng = rng
        self._next_seq = 0
        self.temperature = float(rng.uniform(40.0, 60.0))

    def _take_seq(self) -> int:
        seq = self._next_seq
        self._next_seq += 1
        return seq

    def benign_next(self, clock: float) -> PacketRecord:
        # bounded random walk, reflected at the limits
        t = self.temperature + float(self.rng.normal(0.0, 0.5))
        if t < TEMP_MIN:
            t = 2 * TEMP_MIN - t
        elif t > TEMP_MAX:
            t = 2 * TEMP_MAX - t
        self.temperature = t
        body = TELEMETRY_BODY.pack(t)
        return PacketRecord(self.profile.device_id, self._take_seq(), clock, Kind.TELEMETRY, body)

    def flood_packet(self, clock: float) -> PacketRecord:
        pad = self.profile.attack_payload_size - HEADER_SIZE
        return PacketRecord(self.profile.device_id, self._take_seq(), clock, Kind.FLOOD, self.rng.bytes(pad))

    def flood_burst(self, start: float, duration: Optional[float] = None) -> Iterator[PacketRecord]:
        for t in flood_times(self.profile, start, duration):
            yield self.flood_packet(t)

    def attack_schedule(self, horizon: float, start: float = 0.0) -> list[tuple[float, float]]:
        return attack_schedule(self.profile, horizon, self.rng, start=start)

    def telemetry_times(self, horizon: float, start: float = 0.0) -> Iterator[float]:
        period = self.profile.telemetry_period
        k = 0
        while True:
            t = start + self.profile.phase + k * period
            if t >= horizon:
                return
            yield t
            k += 1

    def stream(self, horizon: float, schedule: list[tuple[float, float]] = ()) -> Iterator[PacketRecord]:
        """All packets of this device up to ``horizon`` in emission order.

        Telemetry keeps flowing during a flood.  Sequence numbers are taken at
        emission, so they increase with emit time across both kinds.
        """
        flood = (t for start, dur in schedule for t in flood_times(self.profile, start, dur) if t < horizon)
        benign = self.telemetry_times(horizon)
        nb, nf = next(benign, None), next(flood, None)
        while nb is not None or nf is not None:
            if nf is None or (nb is not None and nb <= nf):
                yield self.benign_next(nb)
                nb = next(benign, None)
            else:
                yield self.flood_packet(nf)
                nf = next(flood, None)


def flood_times(profile: DeviceProfile, start: float, duration: Optional[float] = None) -> Iterator[float]:
    duration = profile.attack_duration if duration is None else duration
    n = int(round(duration * profile.attack_rate))
    gap = 1.0 / profile.attack_rate
    for i in range(n):
        yield start + i * gap


def attack_initiations(profile: DeviceProfile, horizon: float, rng: np.random.Generator,
                       start: float = 0.0) -> list[float]:
    """Tick times in [start, horizon) at which a flood is initiated."""
    n_ticks = max(0, int(np.ceil((horizon - start) / profile.telemetry_period - 1e-9)))
    fires = rng.random(n_ticks) < profile.attack_probability
    return [start + int(k) * profile.telemetry_period for k in np.flatnonzero(fires)]


def attack_schedule(profile: DeviceProfile, horizon: float, rng: np.random.Generator,
                    start: float = 0.0) -> list[tuple[float, float]]:
    """Per telemetry tick in [start, horizon), start a flood with probability
    ``attack_probability``.  Returns merged (start_time, duration) pairs,
    clipped to the horizon."""
    if not profile.compromised:
        raise ValueError("attack_schedule needs a compromised device")
    intervals = [(t0, min(t0 + profile.attack_duration, horizon))
                 for t0 in attack_initiations(profile, horizon, rng, start)]
    return [(s, e - s) for s, e in merge_intervals(intervals) if e > s]
