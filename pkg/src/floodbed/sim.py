"""Single-threaded discrete-event run of a scenario on virtual time.

Time is kept in integer microseconds so that simultaneous events are exact.
At equal timestamps events are processed in this order: emission, drop-window
deadline, delivery, end of IDS service, metric sample.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .ids import ContractError, Detector, IdsDecision, Label
from .mitigation import Action, MitigationState, Phase
from .scenario import Scenario
from .server import ServerPipeline
from .timeline import TimelineLog
from .traffic import Device, GroundTruthLog
from .transport import SimTransport, to_micros

log = logging.getLogger(__name__)

EMIT, DEADLINE, DELIVER, DONE, SAMPLE = range(5)
NEVER = float("inf")


@dataclass
class RunResult:
    scenario: Scenario
    log: TimelineLog
    truth: GroundTruthLog
    detector: Detector
    pipeline: ServerPipeline
    mitigation: Optional[MitigationState]


def build_devices(sc: Scenario) -> tuple[list[Device], dict[int, list[tuple[float, float]]]]:
    seeds = np.random.SeedSequence(sc.seed).spawn(len(sc.devices) + 1)
    devices = [Device(p, np.random.default_rng(s)) for p, s in zip(sc.devices, seeds)]
    schedules: dict[int, list[tuple[float, float]]] = {d.profile.device_id: [] for d in devices}
    if sc.attacks.plan == "scheduled":
        for dev, start, dur in sc.attacks.intervals:
            schedules[dev].append((float(start), float(dur)))
        for dev in schedules:
            schedules[dev].sort()
    else:
        for d in devices:
            if d.profile.compromised:
                schedules[d.profile.device_id] = d.attack_schedule(sc.duration, start=sc.attacks.start)
    return devices, schedules


class Server:
    """IDS server logic shared by the simulated and the live runner."""

    def __init__(self, sc: Scenario, transport, log_: TimelineLog):
        self.sc = sc
        self.transport = transport
        self.log = log_
        self.pipeline = ServerPipeline(sc.service, capacity=sc.buffer_capacity)
        self.detector = Detector(
            gamma=sc.ids.gamma, batch_size=sc.service.batch_size, features=sc.ids.features,
            training_size=sc.ids.training_size, seed=sc.seed, layer_dims=sc.ids.layer_dims, reg=sc.ids.reg)
        m = sc.mitigation
        self.mitigation = MitigationState(m.window_size, m.drop_duration) if m.enabled else None

    @property
    def dropping(self) -> bool:
        return self.mitigation is not None and self.mitigation.active

    def arrive(self, packet, now: float) -> None:
        if not self.pipeline.enqueue(packet, now):
            self.log.drops.append((packet.source, packet.seq, now, "tail"))

    def finish_batch(self, batch, now: float, extra_flush=None) -> bool:
        """IDS results for a served batch.  Returns True if mitigation fired."""
        decisions, passed = self.detector.process(batch, now)
        for p in passed:
            self.pipeline.process_content(p.key)
        fired = False
        for d in decisions:
            self.log.decisions.append(d)
            if self.mitigation is not None and not fired and self.mitigation.phase is Phase.MONITORING:
                for _ in d.members:
                    if self.mitigation.observe(d.label, now) is Action.ACTIVATE_DROP:
                        self.activate(now, extra_flush)
                        fired = True
                        break
            if d.label is Label.NORMAL:
                for key in d.members:
                    self.pipeline.process_content(key)
        return fired

    def activate(self, now: float, extra_flush=None) -> None:
        def flush():
            items = self.pipeline.flush()
            for _, p in items:
                self.log.drops.append((p.source, p.seq, now, "flush"))
            if extra_flush is not None:
                # live mode: packets received but not yet handed to the buffer
                for ev in extra_flush():
                    self.log.drops.append((ev.packet.source, ev.packet.seq, now, "flush"))
                    items.append((ev.deliver_time, ev.packet))
            return items
        self.mitigation.on_activate(flush, self.transport, now)
        self.detector.reset_stream()

    def deadline(self, now: float) -> None:
        self.mitigation.on_deadline(now, self.transport)

    def sample(self, now: float) -> None:
        s = self.pipeline.sample_metrics(now, self.dropping)
        if not s.conserved():
            raise ContractError(f"packet conservation violated at t={now}: {s}")
        self.log.append_sample(s)


def run_sim(sc: Scenario) -> RunResult:
    sc = sc.resolved().validate()
    if sc.transport.mode != "sim":
        raise ContractError("run_sim needs transport.mode = 'sim'")
    devices, schedules = build_devices(sc)
    truth = GroundTruthLog()
    tl = TimelineLog(horizon=sc.duration)
    for dev, sched in sorted(schedules.items()):
        tl.attacks.extend((dev, s, s + d) for s, d in sched)
    jitter_rng = np.random.default_rng([sc.seed, 0x717]) if sc.transport.jitter_us else None
    transport = SimTransport(sc.transport.latency_us, sc.transport.jitter_us, jitter_rng)
    server = Server(sc, transport, tl)
    pipeline = server.pipeline

    source = heapq.merge(*(d.stream(sc.duration, schedules[d.profile.device_id]) for d in devices),
                         key=lambda p: (p.emit_time, p.source, p.seq))
    horizon_us = to_micros(sc.duration)
    sample_us = to_micros(sc.sample_period)
    next_pkt = next(source, None)
    next_sample = 0
    done_at = NEVER
    in_service: list = []
    deadline_at = NEVER

    def start_service(now_us: int):
        nonlocal done_at, in_service
        batch, duration = pipeline.dequeue_batch(now_us / 1e6)
        in_service = batch
        done_at = now_us + to_micros(duration)

    while True:
        emit_at = to_micros(next_pkt.emit_time) if next_pkt is not None else NEVER
        deliver_at = transport.peek_us()
        if deliver_at is None:
            deliver_at = NEVER
        t, kind = min((emit_at, EMIT), (deadline_at, DEADLINE), (deliver_at, DELIVER),
                      (done_at, DONE), (next_sample, SAMPLE))
        if t > horizon_us:
            break
        now = t / 1e6
        if kind == EMIT:
            truth.record(next_pkt)
            transport.send(next_pkt)
            next_pkt = next(source, None)
        elif kind == DEADLINE:
            server.deadline(now)
            deadline_at = NEVER
        elif kind == DELIVER:
            ev = transport.recv()
            if ev is None:
                if server.mitigation is not None:
                    server.mitigation.count_drop()
                continue
            server.arrive(ev.packet, now)
            if done_at == NEVER:
                start_service(t)
        elif kind == DONE:
            batch, in_service, done_at = in_service, [], NEVER
            if server.finish_batch(batch, now):
                deadline_at = to_micros(server.mitigation.deadline)
            if len(pipeline.buffer):
                start_service(t)
        else:
            server.sample(now)
            next_sample += sample_us

    tl.drops.extend((s, q, t, "transport") for s, q, t in transport.dropped_keys)
    tl.trained_at = server.detector.trained_at
    tl.stats = {
        "sent": transport.sent,
        "delivered": transport.delivered,
        "transport_dropped": transport.dropped,
        "in_flight_at_end": transport.pending(),
        "in_service_at_end": len(in_service),
        "ids_processed": pipeline.processed,
        "ids_scored": server.detector.scored,
        "processed_normal": pipeline.processed_normal,
        "max_queue": pipeline.max_queue,
        "activations": server.mitigation.activation_count if server.mitigation else 0,
    }
    tl.events = list(server.mitigation.events) if server.mitigation else []
    return RunResult(sc, tl, truth, server.detector, pipeline, server.mitigation)
