"""Run summaries, manifests and SVG charts.

Everything here is a pure function of a ``TimelineLog`` and the ground truth,
so a report rebuilt from the persisted CSVs equals the one built in memory.
"""

from __future__ import annotations

import dataclasses
import datetime as _dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional
from xml.sax.saxutils import escape

from . import __version__
from .confusion import ConfusionCounts, EvaluationError
from .ids import evaluate
from .timeline import TimelineLog
from .traffic import GroundTruthLog, Kind

__all__ = ["ConfusionCounts", "RunManifest", "summarize", "render_charts", "drop_windows", "write_report"]

DRAIN_THRESHOLD = 5


@dataclass
class RunManifest:
    scenario: str
    config: dict
    seed: int
    mode: str
    start_time: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat())
    version: str = __version__
    extra: dict = field(default_factory=dict)

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(dataclasses.asdict(self), indent=1, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))


def _clean(x):
    """NaN/inf -> None so the report is strict JSON."""
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def drop_windows(log: TimelineLog) -> list[tuple[float, float]]:
    """(activate, deadline) pairs; an unfinished window ends at the horizon."""
    out, start = [], None
    for e in log.events:
        if e.event == "activate":
            start = e.time
        elif e.event == "deadline" and start is not None:
            out.append((start, e.time))
            start = None
    if start is not None:
        out.append((start, log.horizon))
    return out


def _attack_intervals(log: TimelineLog) -> list[tuple[float, float]]:
    return sorted((a, b) for _, a, b in log.attacks if b > a)


def drain_time(log: TimelineLog, end: float, threshold: int = DRAIN_THRESHOLD) -> Optional[float]:
    for s in log.samples:
        if s.time >= end and s.queue_len < threshold:
            return s.time - end
    return None


def summarize(log: TimelineLog, truth: GroundTruthLog) -> dict:
    complete = bool(log.complete)
    if not log.samples or log.samples[-1].time < log.horizon - 1.0:
        complete = False
    try:
        counts: Optional[ConfusionCounts] = evaluate(log.decisions, truth)
    except EvaluationError:
        counts, complete = None, False

    attacks = _attack_intervals(log)
    peak = max((s.queue_len for s in log.samples), default=0)
    per_attack = []
    for a, b in attacks:
        backlog = next((s.queue_len for s in log.samples if s.time >= b), None)
        first_attack = next((d.decide_time for d in log.decisions if d.is_attack and d.decide_time >= a), None)
        activation = next((e.time for e in log.events if e.event == "activate" and e.time >= a), None)
        per_attack.append({
            "start": a, "end": b,
            "backlog_at_end": backlog,
            "drain_time": drain_time(log, b),
            "first_attack_decision": first_attack,
            "activation": activation,
            "activation_latency": (activation - first_attack
                                   if activation is not None and first_attack is not None else None),
            "alarms_after_end": sum(1 for d in log.decisions if d.is_attack and d.decide_time > b),
        })

    kinds = truth.kinds()
    collateral: dict[str, int] = {}
    dropped_flood = 0
    for s, q, _, where in log.drops:
        kind = kinds.get((s, q))
        if kind == Kind.TELEMETRY:
            collateral[where] = collateral.get(where, 0) + 1
        elif kind == Kind.FLOOD:
            dropped_flood += 1

    delays = [s.delay_ms for s in log.samples if not math.isnan(s.delay_ms)]
    report = {
        "complete": complete,
        "trained_at": log.trained_at,
        "decisions": len(log.decisions),
        "attack_decisions": sum(1 for d in log.decisions if d.is_attack),
        "confusion": counts.as_dict() if counts is not None else None,
        "peak_queue": peak,
        "max_delay_ms": max(delays, default=None),
        "max_rate_pps": max((s.processing_rate for s in log.samples), default=0.0),
        "attacks": per_attack,
        "activations": [e.time for e in log.events if e.event == "activate"],
        "drop_windows": [list(w) for w in drop_windows(log)],
        "benign_collateral": sum(collateral.values()),
        "benign_collateral_by_cause": dict(sorted(collateral.items())),
        "dropped_flood": dropped_flood,
        "conservation_ok": all(s.conserved() for s in log.samples),
        "stats": log.stats,
    }
    return _clean(report)


def write_report(path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=1, sort_keys=True, allow_nan=False) + "\n")


# ---------------------------------------------------------------- SVG charts

W, H = 900, 320
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 30, 45


class _Frame:
    def __init__(self, x_max: float, y_max: float):
        self.x_max = x_max if x_max > 0 else 1.0
        self.y_max = y_max if y_max > 0 else 1.0

    def x(self, t: float) -> float:
        return LEFT + (W - LEFT - RIGHT) * t / self.x_max

    def y(self, v: float) -> float:
        return H - BOTTOM - (H - TOP - BOTTOM) * v / self.y_max


def _nice_ceiling(v: float) -> float:
    if v <= 0:
        return 1.0
    exp = 10 ** math.floor(math.log10(v))
    for m in (1, 2, 2.5, 5, 10):
        if v <= m * exp:
            return m * exp
    return 10 * exp


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    return f"{v:g}"


def _svg(title: str, ylabel: str, frame: _Frame, body: list[str], log: TimelineLog) -> str:
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
        f'font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W / 2:.0f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
    ]
    for start, end in drop_windows(log):
        x0, x1 = frame.x(start), frame.x(end)
        parts.append(
            f'<rect class="drop-window" data-start="{start!r}" data-end="{end!r}" x="{_fmt(x0)}" '
            f'y="{TOP}" width="{_fmt(x1 - x0)}" height="{H - TOP - BOTTOM}" fill="#9ecae1" fill-opacity="0.35"/>')
    x_axis, y_axis = H - BOTTOM, LEFT
    parts.append(f'<line x1="{LEFT}" y1="{x_axis}" x2="{W - RIGHT}" y2="{x_axis}" stroke="black"/>')
    parts.append(f'<line x1="{y_axis}" y1="{TOP}" x2="{y_axis}" y2="{x_axis}" stroke="black"/>')
    for i in range(6):
        tx = frame.x_max * i / 5
        parts.append(f'<text x="{_fmt(frame.x(tx))}" y="{x_axis + 15}" text-anchor="middle">{_tick_label(round(tx, 3))}</text>')
        ty = frame.y_max * i / 5
        parts.append(f'<text x="{y_axis - 6}" y="{_fmt(frame.y(ty) + 4)}" text-anchor="end">{_tick_label(round(ty, 3))}</text>')
    parts.append(f'<text x="{(LEFT + W - RIGHT) / 2:.0f}" y="{H - 8}" text-anchor="middle">time (s)</text>')
    parts.append(f'<text x="14" y="{(TOP + x_axis) / 2:.0f}" text-anchor="middle" '
                 f'transform="rotate(-90 14 {(TOP + x_axis) / 2:.0f})">{escape(ylabel)}</text>')
    parts.extend(body)
    for _, a, b in sorted(log.attacks):
        for t in (a, b):
            parts.append(f'<line class="attack-bound" data-time="{t!r}" x1="{_fmt(frame.x(t))}" y1="{TOP}" '
                         f'x2="{_fmt(frame.x(t))}" y2="{x_axis}" stroke="red" stroke-dasharray="5,4"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _polylines(frame: _Frame, pts: list[tuple[float, float]], color: str) -> list[str]:
    """One polyline per run of finite points."""
    out, run = [], []
    for t, v in pts + [(None, math.nan)]:
        if t is not None and not math.isnan(v):
            run.append(f"{_fmt(frame.x(t))},{_fmt(frame.y(v))}")
        elif run:
            out.append(f'<polyline class="series" fill="none" stroke="{color}" stroke-width="1.2" '
                       f'points="{" ".join(run)}"/>')
            run = []
    return out


def _line_chart(log: TimelineLog, title: str, ylabel: str, pts: list[tuple[float, float]], color: str) -> str:
    finite = [v for _, v in pts if not math.isnan(v)]
    frame = _Frame(log.horizon, _nice_ceiling(max(finite, default=0.0)))
    return _svg(title, ylabel, frame, _polylines(frame, pts, color), log)


def _decision_chart(log: TimelineLog) -> str:
    frame = _Frame(log.horizon, 1.0)
    body = []
    for d in log.decisions:
        v = 1.0 if d.is_attack else 0.0
        x = _fmt(frame.x(d.decide_time))
        color = "#d62728" if d.is_attack else "#2ca02c"
        body.append(f'<line class="decision" x1="{x}" y1="{_fmt(frame.y(v))}" x2="{x}" '
                    f'y2="{_fmt(frame.y(v) + (8 if d.is_attack else -8))}" stroke="{color}"/>')
    return _svg("IDS batch decisions (1 = attack)", "decision", frame, body, log)


def render_charts(log: TimelineLog, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    charts = {
        "queue.svg": _line_chart(log, "IDS input queue length", "packets",
                                 [(s.time, float(s.queue_len)) for s in log.samples], "#1f77b4"),
        "rate.svg": _line_chart(log, "IDS processing rate", "packets/s",
                                [(s.time, s.processing_rate) for s in log.samples], "#2ca02c"),
        "delay.svg": _line_chart(log, "Delay before IDS processing", "ms",
                                 [(s.time, s.delay_ms) for s in log.samples], "#9467bd"),
        "decisions.svg": _decision_chart(log),
    }
    paths = []
    for name, text in charts.items():
        p = out / name
        p.write_text(text)
        paths.append(p)
    return paths


def chart_x(time: float, horizon: float) -> float:
    """x coordinate a chart assigns to ``time``; exposed for cross-checks."""
    return _Frame(horizon, 1.0).x(time)
