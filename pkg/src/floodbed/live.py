"""Scenario run over real loopback UDP sockets.

Each device runs in its own process with its own socket, pacing packets to
the scaled wall clock.  The server consumes the receiver thread's handoff on
the calling thread.  IDS service time is whatever this host needs; the
configured ``ids_service_time`` only feeds the rate accounting.
"""

from __future__ import annotations

import logging
import multiprocessing as mp
import time

from .scenario import Scenario
from .sim import RunResult, Server, build_devices
from .timeline import TimelineLog
from .traffic import Device, GroundTruthLog
from .transport import LiveTransport, TransportError

log = logging.getLogger(__name__)


def _drive(device: Device, schedule, horizon: float, transport: LiveTransport, out: mp.Queue) -> None:
    sender = transport.open_sender()
    entries = []
    try:
        for p in device.stream(horizon, schedule):
            delay = transport.wall_of(p.emit_time) - time.monotonic()
            if delay > 0.0005:
                time.sleep(delay)
            entries.append((p.source, p.seq, p.kind, p.emit_time))
            sender.send(p)
    except TransportError as exc:
        out.put(("error", device.profile.device_id, str(exc)))
        return
    finally:
        sender.close()
    out.put(("done", device.profile.device_id, entries, sender.sent, sender.errors))


def run_live(sc: Scenario, grace: float = 2.0) -> RunResult:
    """Run ``sc`` in real time (scaled by ``transport.time_scale``).

    ``grace`` is extra wall time allowed for late results from the device
    processes after the horizon.
    """
    sc = sc.resolved().validate()
    devices, schedules = build_devices(sc)
    tl = TimelineLog(horizon=sc.duration)
    for dev, sched in sorted(schedules.items()):
        tl.attacks.extend((dev, s, s + d) for s, d in sched)

    transport = LiveTransport(sc.transport.port, rcvbuf=sc.transport.rcvbuf, time_scale=sc.transport.time_scale)
    transport.start()
    ctx = mp.get_context("fork")
    results: mp.Queue = ctx.Queue()
    procs = [ctx.Process(target=_drive, args=(d, schedules[d.profile.device_id], sc.duration, transport, results),
                         daemon=True) for d in devices]
    for p in procs:
        p.start()

    server = Server(sc, transport, tl)
    pipeline = server.pipeline
    sample_period = sc.sample_period
    next_sample = 0.0
    race_drops = 0

    def sync_drops():
        if server.mitigation is not None:
            server.mitigation.dropped_packets = transport.dropped + race_drops

    try:
        while True:
            now = transport.clock()
            if now >= sc.duration:
                break
            first = transport.recv(timeout=0.002 if not len(pipeline.buffer) else 0)
            for ev in ([first] + transport.drain()) if first is not None else ():
                if server.dropping:
                    # raced past the flag flip in the receiver thread
                    race_drops += 1
                    tl.drops.append((ev.packet.source, ev.packet.seq, ev.deliver_time, "transport"))
                else:
                    server.arrive(ev.packet, ev.deliver_time)
            now = transport.clock()
            sync_drops()
            if server.mitigation is not None and server.mitigation.due(now):
                server.deadline(now)
            if len(pipeline.buffer):
                batch, _ = pipeline.dequeue_batch(now)
                server.finish_batch(batch, transport.clock(), extra_flush=transport.drain)
            now = transport.clock()
            while next_sample <= now and next_sample < sc.duration:
                server.sample(next_sample)
                next_sample += sample_period
    finally:
        gathered: dict[int, tuple] = {}
        deadline = time.monotonic() + grace + sc.duration / sc.transport.time_scale
        errors = []
        while len(gathered) + len(errors) < len(procs) and time.monotonic() < deadline:
            try:
                msg = results.get(timeout=0.2)
            except Exception:
                continue
            if msg[0] == "error":
                errors.append(msg)
            else:
                gathered[msg[1]] = msg
        for p in procs:
            p.join(timeout=1.0)
            if p.is_alive():
                p.terminate()
        transport.close()
    if errors:
        raise TransportError(f"device {errors[0][1]}: {errors[0][2]}")

    truth = GroundTruthLog()
    sent = 0
    send_errors = 0
    for dev in sorted(gathered):
        _, _, entries, n_sent, n_err = gathered[dev]
        for e in entries:
            truth.add(*e)
        sent += n_sent
        send_errors += n_err
    tl.complete = len(gathered) == len(procs)
    tl.drops.extend((s, q, t, "transport") for s, q, t in transport.dropped_keys)
    sync_drops()
    tl.trained_at = server.detector.trained_at
    tl.events = list(server.mitigation.events) if server.mitigation else []
    tl.stats = {
        "sent": sent,
        "send_errors": send_errors,
        "received": transport.received,
        "truncated": transport.truncated,
        "malformed": transport.malformed,
        "transport_dropped": transport.dropped,
        "os_lost": sent - transport.received - transport.truncated - transport.malformed,
        "ids_processed": pipeline.processed,
        "ids_scored": server.detector.scored,
        "processed_normal": pipeline.processed_normal,
        "max_queue": pipeline.max_queue,
        "activations": server.mitigation.activation_count if server.mitigation else 0,
        "rcvbuf": transport.effective_rcvbuf,
        "port": transport.port,
    }
    return RunResult(sc, tl, truth, server.detector, pipeline, server.mitigation)
