"""Server-side buffering and instrumentation in front of the IDS."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional

from .traffic import PacketRecord
from .transport import to_micros


@dataclass
class ServiceConfig:
    ids_service_time: float = 0.001
    batch_size: int = 10
    content_processing_time: float = 0.0
    # service-degradation hook: above this queue length each packet costs
    # degrade_factor times more.  None disables it.
    degrade_above: Optional[int] = None
    degrade_factor: float = 2.0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.ids_service_time < 0 or self.content_processing_time < 0:
            raise ValueError("service times must be >= 0")
        if self.degrade_factor < 1:
            raise ValueError("degrade_factor must be >= 1")

    @property
    def service_rate(self) -> float:
        return math.inf if self.ids_service_time == 0 else 1.0 / self.ids_service_time


@dataclass(slots=True)
class QueueSample:
    time: float
    queue_len: int
    processing_rate: float
    mitigation_active: bool
    # mean IDS-entry delay of packets dequeued since the previous sample
    delay_ms: float = math.nan
    enqueued: int = 0
    dequeued: int = 0
    flushed: int = 0
    tail_dropped: int = 0

    def conserved(self) -> bool:
        return self.enqueued == self.dequeued + self.flushed + self.tail_dropped + self.queue_len


class InputBuffer:
    """FIFO of (arrival_time, packet) with optional drop-tail capacity."""

    def __init__(self, capacity: Optional[int] = None):
        self.capacity = capacity
        self._q: deque = deque()
        self.enqueue_count = 0
        self.dequeue_count = 0
        self.flush_count = 0
        self.tail_drop_count = 0

    def __len__(self) -> int:
        return len(self._q)

    def push(self, packet: PacketRecord, now: float) -> bool:
        # every offered packet counts as enqueued; refused ones also as tail drops
        self.enqueue_count += 1
        if self.capacity is not None and len(self._q) >= self.capacity:
            self.tail_drop_count += 1
            return False
        self._q.append((now, packet))
        return True

    def pop(self, n: int) -> list[tuple[float, PacketRecord]]:
        q = self._q
        out = [q.popleft() for _ in range(min(n, len(q)))]
        self.dequeue_count += len(out)
        return out

    def flush(self) -> list[tuple[float, PacketRecord]]:
        out = list(self._q)
        self._q.clear()
        self.flush_count += len(out)
        return out


class ServerPipeline:
    """Buffer manager + IDS service accounting + content processor counters.

    Times are virtual (or scaled wall) seconds.  The pipeline never advances
    time itself; the caller drives it.
    """

    def __init__(self, cfg: Optional[ServiceConfig] = None, capacity: Optional[int] = None,
                 rate_window: float = 1.0):
        self.cfg = cfg or ServiceConfig()
        self.buffer = InputBuffer(capacity)
        self.rate_window_us = to_micros(rate_window)
        self._completions: deque = deque()  # int micros, nondecreasing
        self.processed = 0
        self.processed_normal = 0
        self.content_busy = 0.0
        self.delays: list[tuple[float, float]] = []  # (dequeue time, delay)
        self._delay_mark = 0
        self.max_queue = 0

    def enqueue(self, packet: PacketRecord, now: float) -> bool:
        ok = self.buffer.push(packet, now)
        if len(self.buffer) > self.max_queue:
            self.max_queue = len(self.buffer)
        return ok

    def per_packet_time(self) -> float:
        cfg = self.cfg
        if cfg.degrade_above is not None and len(self.buffer) > cfg.degrade_above:
            return cfg.ids_service_time * cfg.degrade_factor
        return cfg.ids_service_time

    def dequeue_batch(self, now: float) -> tuple[list[tuple[float, PacketRecord]], float]:
        """Take up to batch_size packets in FIFO order.

        Returns the batch and its service duration; completion times are
        booked now so the rate window sees packets finish one at a time.
        """
        per_packet = self.per_packet_time()
        batch = self.buffer.pop(self.cfg.batch_size)
        start_us = to_micros(now)
        step_us = to_micros(per_packet)
        for k, (arrival, _) in enumerate(batch):
            self.delays.append((now, now - arrival))
            self._completions.append(start_us + (k + 1) * step_us)
        self.processed += len(batch)
        return batch, len(batch) * per_packet

    def process_content(self, key: tuple[int, int]) -> None:
        """Hand a packet the IDS ruled normal to the content processor."""
        self.processed_normal += 1
        self.content_busy += self.cfg.content_processing_time

    def flush(self) -> list[tuple[float, PacketRecord]]:
        return self.buffer.flush()

    def processing_rate(self, now: float) -> float:
        now_us = to_micros(now)
        lo = now_us - self.rate_window_us
        comp = self._completions
        while comp and comp[0] <= lo:
            comp.popleft()
        future = 0
        for t in reversed(comp):
            if t <= now_us:
                break
            future += 1
        return (len(comp) - future) * 1_000_000 / self.rate_window_us

    def sample_metrics(self, now: float, mitigation_active: bool = False) -> QueueSample:
        fresh = self.delays[self._delay_mark:]
        self._delay_mark = len(self.delays)
        delay_ms = 1000.0 * sum(d for _, d in fresh) / len(fresh) if fresh else math.nan
        b = self.buffer
        return QueueSample(
            time=now,
            queue_len=len(b),
            processing_rate=self.processing_rate(now),
            mitigation_active=mitigation_active,
            delay_ms=delay_ms,
            enqueued=b.enqueue_count,
            dequeued=b.dequeue_count,
            flushed=b.flush_count,
            tail_dropped=b.tail_drop_count,
        )
