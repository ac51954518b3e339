"""Datagram carriers between the generators and the server.

Two backends with the same surface:

* ``SimTransport``: a priority queue keyed on virtual delivery time
  (integer microseconds), deterministic, cannot fail.
* ``LiveTransport``: real UDP sockets on the loopback interface with a
  receiver thread feeding a ``queue.SimpleQueue`` handoff.

Both deliver stripped records (no ground-truth kind) and honour a drop policy
that discards arrivals before they reach the server's input buffer.
"""

from __future__ import annotations

import heapq
import logging
import queue
import socket
import threading
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .traffic import HEADER_SIZE, PacketRecord, WireError, decode, encode

log = logging.getLogger(__name__)

DEFAULT_PORT = 5555
DEFAULT_LATENCY_US = 200


class TransportError(RuntimeError):
    pass


@dataclass(slots=True)
class DatagramEvent:
    deliver_time: float
    packet: PacketRecord


def to_micros(t: float) -> int:
    return int(round(t * 1_000_000))


class SimTransport:
    """Virtual-clock datagram fabric.

    Deliveries come out in nondecreasing delivery time, ties broken by
    (source, seq).
    """

    def __init__(self, latency_us: int = DEFAULT_LATENCY_US, jitter_us: int = 0,
                 rng: Optional[np.random.Generator] = None):
        if latency_us < 0 or jitter_us < 0:
            raise ValueError("latency and jitter must be >= 0")
        if jitter_us and rng is None:
            raise ValueError("jitter needs a seeded rng")
        self.latency_us = latency_us
        self.jitter_us = jitter_us
        self.rng = rng
        self._heap: list = []
        self.now_us = 0
        self.dropping = False
        self.sent = 0
        self.delivered = 0
        self.dropped = 0
        self.dropped_keys: list[tuple[int, int, float]] = []

    def send(self, packet: PacketRecord) -> None:
        deliver = to_micros(packet.emit_time) + self.latency_us
        if self.jitter_us:
            deliver += int(self.rng.integers(0, self.jitter_us + 1))
        heapq.heappush(self._heap, (deliver, packet.source, packet.seq, packet))
        self.sent += 1

    def peek_us(self) -> Optional[int]:
        return self._heap[0][0] if self._heap else None

    def pending(self) -> int:
        return len(self._heap)

    def recv(self) -> Optional[DatagramEvent]:
        """Pop the next delivery.  Returns None when it was discarded by the
        drop policy; raises LookupError when nothing is in flight."""
        if not self._heap:
            raise LookupError("no datagram in flight")
        deliver_us, _, _, packet = heapq.heappop(self._heap)
        if deliver_us < self.now_us:
            raise AssertionError("virtual clock ran backward")
        self.now_us = deliver_us
        t = deliver_us / 1_000_000
        if self.dropping:
            self.dropped += 1
            self.dropped_keys.append((packet.source, packet.seq, t))
            return None
        self.delivered += 1
        return DatagramEvent(t, packet.stripped())

    def drop_policy(self, enabled: bool) -> None:
        self.dropping = bool(enabled)


class LiveSender:
    """One UDP socket per generator."""

    def __init__(self, host: str, port: int):
        self.addr = (host, port)
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sent = 0
        self.errors = 0

    def send(self, packet: PacketRecord) -> None:
        try:
            self.sock.sendto(encode(packet), self.addr)
            self.sent += 1
        except BlockingIOError:
            # local send buffer full; counted as loss
            self.errors += 1
        except OSError as exc:
            raise TransportError(f"send to {self.addr} failed: {exc}") from exc

    def close(self) -> None:
        self.sock.close()


class LiveTransport:
    """Loopback UDP server endpoint.

    Time is reported in virtual seconds: wall seconds since ``start()``
    multiplied by ``time_scale``, so a scaled run exercises the same
    detector and mitigation constants as the simulator.
    """

    def __init__(self, port: int = DEFAULT_PORT, host: str = "127.0.0.1",
                 rcvbuf: Optional[int] = None, time_scale: float = 1.0):
        self.host = host
        self.port = port
        self.rcvbuf = rcvbuf
        self.time_scale = time_scale
        self._sock: Optional[socket.socket] = None
        self._handoff: queue.SimpleQueue = queue.SimpleQueue()
        self._thread: Optional[threading.Thread] = None
        self._stop = threading.Event()
        self._t0 = 0.0
        # plain attribute: single store/load is atomic under the GIL
        self.dropping = False
        self.received = 0
        self.truncated = 0
        self.malformed = 0
        self.dropped = 0
        self.dropped_keys: list[tuple[int, int, float]] = []
        self.effective_rcvbuf: Optional[int] = None

    def clock(self) -> float:
        return (time.monotonic() - self._t0) * self.time_scale

    def wall_of(self, virtual: float) -> float:
        """Monotonic wall time at which virtual time ``virtual`` occurs."""
        return self._t0 + virtual / self.time_scale

    def start(self) -> None:
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        if self.rcvbuf:
            sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, self.rcvbuf)
        try:
            sock.bind((self.host, self.port))
        except OSError as exc:
            sock.close()
            raise TransportError(f"cannot bind {self.host}:{self.port}: {exc}") from exc
        self.port = sock.getsockname()[1]
        self.effective_rcvbuf = sock.getsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF)
        sock.settimeout(0.05)
        self._sock = sock
        self._t0 = time.monotonic()
        self._thread = threading.Thread(target=self._receive_loop, name="udp-recv", daemon=True)
        self._thread.start()

    def open_sender(self) -> LiveSender:
        return LiveSender(self.host, self.port)

    def send(self, packet: PacketRecord) -> None:
        if not hasattr(self, "_default_sender"):
            self._default_sender = self.open_sender()
        self._default_sender.send(packet)

    def _receive_loop(self) -> None:
        sock = self._sock
        put = self._handoff.put
        while not self._stop.is_set():
            try:
                data = sock.recv(65536)
            except socket.timeout:
                continue
            except OSError:
                if self._stop.is_set():
                    return
                raise
            now = self.clock()
            if len(data) < HEADER_SIZE:
                self.truncated += 1
                continue
            try:
                packet = decode(data, keep_body=False)
            except WireError:
                self.malformed += 1
                continue
            self.received += 1
            if self.dropping:
                self.dropped += 1
                self.dropped_keys.append((packet.source, packet.seq, now))
                continue
            put(DatagramEvent(now, packet))

    def recv(self, timeout: Optional[float] = None) -> Optional[DatagramEvent]:
        """Next arrival in socket order, or None on timeout."""
        try:
            return self._handoff.get(timeout=timeout)
        except queue.Empty:
            return None

    def drain(self) -> list[DatagramEvent]:
        """Take everything already handed off but not yet consumed."""
        out = []
        while True:
            try:
                out.append(self._handoff.get_nowait())
            except queue.Empty:
                return out

    def drop_policy(self, enabled: bool) -> None:
        self.dropping = bool(enabled)

    def close(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
        if self._sock is not None:
            self._sock.close()
        if hasattr(self, "_default_sender"):
            self._default_sender.close()
