"""Run logs and their on-disk form.

Floats are written with ``repr`` so reading a run back reproduces the
in-memory values bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .ids import IdsDecision, Label
from .mitigation import MitigationEvent
from .server import QueueSample
from .traffic import GroundTruthLog, Kind

TIMELINE_HEADER = ["time_s", "queue_len", "proc_rate_pps", "delay_ms", "mitigation_active"]
COUNTERS_HEADER = ["time_s", "enqueued", "dequeued", "flushed", "tail_dropped", "queue_len"]
DECISIONS_HEADER = ["batch_id", "decide_time_s", "score", "label", "gamma"]
MEMBERS_HEADER = ["batch_id", "source", "seq"]
EVENTS_HEADER = ["event_time_s", "event", "flushed", "dropped_since_last"]
TRUTH_HEADER = ["source", "seq", "kind", "emit_time_s"]
DROPS_HEADER = ["source", "seq", "time_s", "where"]
ATTACKS_HEADER = ["source", "start_s", "end_s"]


@dataclass
class TimelineLog:
    samples: list[QueueSample] = field(default_factory=list)
    decisions: list[IdsDecision] = field(default_factory=list)
    events: list[MitigationEvent] = field(default_factory=list)
    # (source, seq, time, where) with where in {"transport", "flush", "tail"}
    drops: list[tuple[int, int, float, str]] = field(default_factory=list)
    attacks: list[tuple[int, float, float]] = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    trained_at: Optional[float] = None
    horizon: float = 0.0
    complete: bool = True

    def append_sample(self, sample: QueueSample) -> None:
        if self.samples and sample.time <= self.samples[-1].time:
            raise ValueError("samples must be strictly increasing in time")
        self.samples.append(sample)


def _f(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def _pf(s: str) -> float:
    return math.nan if s == "" else float(s)


def _write(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read(path: Path, header: list[str]) -> list[list[str]]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        got = next(r, None)
        if got != header:
            raise ValueError(f"{path.name}: expected header {header}, got {got}")
        return list(r)


def write_timeline_csv(path, samples: list[QueueSample]) -> None:
    _write(Path(path), TIMELINE_HEADER,
           ([_f(s.time), s.queue_len, _f(s.processing_rate), _f(s.delay_ms), int(s.mitigation_active)]
            for s in samples))


def write_run(out_dir, log: TimelineLog, truth: GroundTruthLog) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_timeline_csv(out / "timeline.csv", log.samples)
    _write(out / "counters.csv", COUNTERS_HEADER,
           ([_f(s.time), s.enqueued, s.dequeued, s.flushed, s.tail_dropped, s.queue_len] for s in log.samples))
    _write(out / "decisions.csv", DECISIONS_HEADER,
           ([d.batch_id, _f(d.decide_time), _f(d.score), d.label.value, _f(d.gamma)] for d in log.decisions))
    _write(out / "batches.csv", MEMBERS_HEADER,
           ([d.batch_id, s, q] for d in log.decisions for s, q in d.members))
    _write(out / "mitigation.csv", EVENTS_HEADER,
           ([_f(e.time), e.event, e.flushed, e.dropped_since_last] for e in log.events))
    _write(out / "ground_truth.csv", TRUTH_HEADER,
           ([s, q, k.name.lower(), _f(t)] for s, q, k, t in truth.entries))
    _write(out / "drops.csv", DROPS_HEADER, ([s, q, _f(t), w] for s, q, t, w in log.drops))
    _write(out / "attacks.csv", ATTACKS_HEADER, ([s, _f(a), _f(b)] for s, a, b in log.attacks))
    meta = {"stats": log.stats, "trained_at": log.trained_at, "horizon": log.horizon, "complete": log.complete}
    (out / "run.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")


def read_run(out_dir) -> tuple[TimelineLog, GroundTruthLog]:
    out = Path(out_dir)
    counters = _read(out / "counters.csv", COUNTERS_HEADER)
    samples = []
    for row, c in zip(_read(out / "timeline.csv", TIMELINE_HEADER), counters, strict=True):
        samples.append(QueueSample(
            time=float(row[0]), queue_len=int(row[1]), processing_rate=_pf(row[2]),
            mitigation_active=row[4] == "1", delay_ms=_pf(row[3]),
            enqueued=int(c[1]), dequeued=int(c[2]), flushed=int(c[3]), tail_dropped=int(c[4])))
    members: dict[int, list] = {}
    for b, s, q in _read(out / "batches.csv", MEMBERS_HEADER):
        members.setdefault(int(b), []).append((int(s), int(q)))
    decisions = [
        IdsDecision(int(b), float(sc), Label(lab), float(g), float(t), tuple(members.get(int(b), ())))
        for b, t, sc, lab, g in _read(out / "decisions.csv", DECISIONS_HEADER)
    ]
    events = [MitigationEvent(float(t), e, int(f), int(d))
              for t, e, f, d in _read(out / "mitigation.csv", EVENTS_HEADER)]
    drops = [(int(s), int(q), float(t), w) for s, q, t, w in _read(out / "drops.csv", DROPS_HEADER)]
    attacks = [(int(s), float(a), float(b)) for s, a, b in _read(out / "attacks.csv", ATTACKS_HEADER)]
    meta = json.loads((out / "run.json").read_text())
    truth = GroundTruthLog()
    for s, q, k, t in _read(out / "ground_truth.csv", TRUTH_HEADER):
        truth.add(int(s), int(q), Kind[k.upper()], float(t))
    log = TimelineLog(samples, decisions, events, drops, attacks, meta["stats"],
                      meta["trained_at"], meta["horizon"], meta["complete"])
    return log, truth
