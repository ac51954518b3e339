"""Majority-vote drop-window defence.

Monitoring keeps the last ``window_size`` per-packet labels.  When the window
is full and attack labels form a strict majority, the input buffer is flushed
and every arrival is dropped for ``drop_duration`` seconds; then monitoring
restarts with an empty window.
"""

from __future__ import annotations

import enum
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Protocol

from .ids import ContractError, Label

log = logging.getLogger(__name__)


class Phase(enum.Enum):
    MONITORING = "monitoring"
    DROPPING = "dropping"


class Action(enum.Enum):
    NONE = "none"
    ACTIVATE_DROP = "activate"


class DropHook(Protocol):
    def drop_policy(self, enabled: bool) -> None: ...


@dataclass
class MitigationEvent:
    time: float
    event: str          # "activate" | "deadline"
    flushed: int
    dropped_since_last: int


@dataclass
class MitigationState:
    window_size: int = 20
    drop_duration: float = 30.0
    phase: Phase = Phase.MONITORING
    window: deque = field(default_factory=deque)
    attack_count: int = 0
    deadline: Optional[float] = None
    activation_count: int = 0
    dropped_packets: int = 0
    flushed_packets: int = 0
    events: list[MitigationEvent] = field(default_factory=list)
    _dropped_mark: int = 0

    def __post_init__(self):
        if self.window_size < 1 or self.drop_duration < 0:
            raise ValueError("window_size must be >= 1 and drop_duration >= 0")

    @property
    def active(self) -> bool:
        return self.phase is Phase.DROPPING

    @property
    def threshold(self) -> int:
        return self.window_size // 2 + 1

    def observe(self, label: Label, now: float) -> Action:
        if self.phase is not Phase.MONITORING:
            raise ContractError("observe() called while dropping")
        w = self.window
        if len(w) == self.window_size:
            self.attack_count -= w.popleft() is Label.ATTACK
        w.append(label)
        self.attack_count += label is Label.ATTACK
        if len(w) == self.window_size and self.attack_count >= self.threshold:
            w.clear()
            self.attack_count = 0
            self.phase = Phase.DROPPING
            self.deadline = now + self.drop_duration
            self.activation_count += 1
            return Action.ACTIVATE_DROP
        return Action.NONE

    def on_activate(self, flush, transport: Optional[DropHook], now: float) -> int:
        """Flush the buffer (callable returning the flushed items) and switch
        the transport to dropping.  Returns the number flushed."""
        if self.phase is not Phase.DROPPING:
            raise ContractError("on_activate() without a pending activation")
        flushed = len(flush())
        self.flushed_packets += flushed
        if transport is not None:
            transport.drop_policy(True)
        self.events.append(MitigationEvent(now, "activate", flushed, self._take_dropped()))
        log.info("mitigation activated at t=%.4f, flushed %d", now, flushed)
        return flushed

    def due(self, now: float) -> bool:
        return self.phase is Phase.DROPPING and now >= self.deadline

    def on_deadline(self, now: float, transport: Optional[DropHook] = None) -> None:
        if not self.due(now):
            raise ContractError("on_deadline() before the drop window ended")
        if transport is not None:
            transport.drop_policy(False)
        self.phase = Phase.MONITORING
        self.deadline = None
        self.window.clear()
        self.attack_count = 0
        self.events.append(MitigationEvent(now, "deadline", 0, self._take_dropped()))

    def count_drop(self, n: int = 1) -> None:
        self.dropped_packets += n

    def _take_dropped(self) -> int:
        d = self.dropped_packets - self._dropped_mark
        self._dropped_mark = self.dropped_packets
        return d
