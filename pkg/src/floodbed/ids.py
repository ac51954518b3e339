"""Auto-associative random-neural-network anomaly detector.

Pipeline per packet: traffic features -> min-max normalise with constants
frozen at training (clipped to [0, 1]) -> dense layers of rate-normalised RNN neurons -> nonnegative linear
read-out -> denormalise.  The per-packet score is the mean absolute
reconstruction error, and batches of consecutive scores are averaged and
thresholded.
"""

from __future__ import annotations

import enum
import json
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import nnls

from .confusion import ConfusionCounts, batch_is_attack, confusion
from .traffic import Kind, PacketRecord

log = logging.getLogger(__name__)

GAMMA_DEFAULT = 0.3
GAMMA_PRESETS = {"default": 0.3, "paper-best": 0.3787}
TRAINING_SIZE = 500
MODEL_FORMAT = 1


class ContractError(RuntimeError):
    """Raised when an operation's precondition is violated."""


class Label(enum.Enum):
    NORMAL = "normal"
    ATTACK = "attack"


@dataclass(frozen=True, slots=True)
class MetricVector:
    x1: float
    x2: float
    x3: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.x3])

    @classmethod
    def of(cls, values) -> "MetricVector":
        a, b, c = (min(1.0, max(0.0, float(v))) for v in values)
        return cls(a, b, c)


@dataclass(frozen=True)
class FeatureConfig:
    window: int = 10          # packets for the size and spacing features
    max_len: float = 1500.0   # bytes
    t_ref: float = 1.0        # seconds
    c_ref: float = 200.0      # packets per rate window
    rate_window: float = 1.0  # seconds


def _clamp01(v: float) -> float:
    return 0.0 if v < 0.0 else 1.0 if v > 1.0 else v


def extract_metrics(recent: Sequence[tuple[float, int]], cfg: FeatureConfig = FeatureConfig(),
                    now: Optional[float] = None) -> MetricVector:
    """Features of the window ending at the last of ``recent``.

    ``recent`` holds (arrival_time, payload_len) in arrival order and must
    reach back at least ``cfg.rate_window`` seconds for the rate feature to be
    exact.  ``now`` defaults to the last arrival.

    x1: mean length of the last ``window`` packets over ``max_len``
    x2: 1 - mean inter-arrival over those packets / ``t_ref`` (0 for one packet)
    x3: packets in (now - rate_window, now] over ``c_ref``
    """
    if not recent:
        raise ValueError("empty window")
    last = list(recent[-cfg.window:])
    x1 = _clamp01(sum(n for _, n in last) / len(last) / cfg.max_len)
    if len(last) > 1:
        mean_gap = (last[-1][0] - last[0][0]) / (len(last) - 1)
        x2 = 1.0 - _clamp01(mean_gap / cfg.t_ref)
    else:
        x2 = 0.0
    now = recent[-1][0] if now is None else now
    count = sum(1 for t, _ in recent if now - cfg.rate_window < t <= now)
    x3 = _clamp01(count / cfg.c_ref)
    return MetricVector(x1, x2, x3)


class FeatureExtractor:
    """Incremental form of ``extract_metrics`` over a packet stream."""

    def __init__(self, cfg: FeatureConfig = FeatureConfig()):
        self.cfg = cfg
        self._last: deque = deque(maxlen=cfg.window)
        self._recent: deque = deque()
        self._len_sum = 0

    def reset(self) -> None:
        self._last.clear()
        self._recent.clear()
        self._len_sum = 0

    def push(self, arrival: float, length: int) -> MetricVector:
        cfg = self.cfg
        last = self._last
        if len(last) == last.maxlen:
            self._len_sum -= last[0][1]
        last.append((arrival, length))
        self._len_sum += length
        recent = self._recent
        recent.append(arrival)
        lo = arrival - cfg.rate_window
        while recent and recent[0] <= lo:
            recent.popleft()
        x1 = _clamp01(self._len_sum / len(last) / cfg.max_len)
        if len(last) > 1:
            x2 = 1.0 - _clamp01((arrival - last[0][0]) / (len(last) - 1) / cfg.t_ref)
        else:
            x2 = 0.0
        x3 = _clamp01(len(recent) / cfg.c_ref)
        return MetricVector(x1, x2, x3)


def zeta(v_plus: np.ndarray, r: float = 1.0, v_minus: float = 0.0) -> np.ndarray:
    """Rate-normalised RNN neuron excitation, in [0, 1) for v_plus >= 0."""
    return v_plus / (r + v_minus + v_plus)


@dataclass
class AadrnnModel:
    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]
    x_min: np.ndarray
    span: np.ndarray
    seed: Optional[int] = None
    rate: float = 1.0
    inhibition: float = 0.0
    reg: float = 1e-3
    residual: float = float("nan")
    trained: bool = True

    def _check(self) -> None:
        if not self.trained:
            raise ContractError("model is not trained")

    def hidden(self, z: np.ndarray, layers: Optional[Sequence[np.ndarray]] = None) -> np.ndarray:
        """Last hidden layer's activations; ``layers`` defaults to all but the read-out."""
        a = z
        for w in (self.weights[:-1] if layers is None else layers):
            a = zeta(a @ w, self.rate, self.inhibition)
        return a

    def forward_batch(self, X: np.ndarray) -> np.ndarray:
        self._check()
        X = np.atleast_2d(np.asarray(X, dtype=float))
        # inputs outside the training envelope are clipped to it
        with np.errstate(over="ignore"):
            z = np.clip((X - self.x_min) / self.span, 0.0, 1.0)
        zhat = self.hidden(z) @ self.weights[-1]
        return np.clip(self.x_min + zhat * self.span, 0.0, 1.0)

    def forward(self, x: MetricVector) -> MetricVector:
        return MetricVector(*self.forward_batch(x.as_array())[0])

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "layer_dims": list(self.layer_dims),
            "weights": [w.tolist() for w in self.weights],
            "x_min": self.x_min.tolist(),
            "span": self.span.tolist(),
            "seed": self.seed,
            "rate": self.rate,
            "inhibition": self.inhibition,
            "reg": self.reg,
            "residual": self.residual,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "AadrnnModel":
        if d.get("format") != MODEL_FORMAT:
            raise ValueError(f"unsupported model format {d.get('format')!r}")
        return cls(
            layer_dims=tuple(d["layer_dims"]),
            weights=[np.array(w, dtype=float) for w in d["weights"]],
            x_min=np.array(d["x_min"], dtype=float),
            span=np.array(d["span"], dtype=float),
            seed=d["seed"], rate=d["rate"], inhibition=d["inhibition"],
            reg=d["reg"], residual=d["residual"],
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "AadrnnModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def train(vectors, seed: int = 0, layer_dims: Sequence[int] = (3, 12, 12, 3),
          reg: float = 1e-3, rate: float = 1.0) -> AadrnnModel:
    """Fit the auto-associator on benign metric vectors.

    Hidden weights are drawn uniform on [0, 1/fan_in] and frozen; the read-out
    is a ridge-regularised nonnegative least-squares fit mapping the last
    hidden layer back onto the (normalised) inputs.
    """
    X = np.asarray([v.as_array() if isinstance(v, MetricVector) else v for v in vectors], dtype=float)
    if X.ndim != 2 or X.shape[1] != layer_dims[0] or layer_dims[-1] != layer_dims[0]:
        raise ValueError(f"training data shape {X.shape} does not fit layers {tuple(layer_dims)}")
    x_min = X.min(axis=0)
    span = X.max(axis=0) - x_min
    flat = span <= 0
    if flat.any():
        log.warning("zero-variance training features %s; using span 1", np.flatnonzero(flat).tolist())
        span = np.where(flat, 1.0, span)
    Z = (X - x_min) / span

    rng = np.random.default_rng(seed)
    weights = [rng.uniform(0.0, 1.0 / n_in, size=(n_in, n_out))
               for n_in, n_out in zip(layer_dims[:-2], layer_dims[1:-1])]
    model = AadrnnModel(tuple(layer_dims), weights, x_min, span, seed=seed, rate=rate, reg=reg)
    H = model.hidden(Z, weights)
    n_hidden = H.shape[1]
    A = np.vstack([H, np.sqrt(reg) * np.eye(n_hidden)])
    out = np.zeros((n_hidden, Z.shape[1]))
    for j in range(Z.shape[1]):
        out[:, j], _ = nnls(A, np.concatenate([Z[:, j], np.zeros(n_hidden)]))
    model.weights.append(out)
    model.residual = float(np.sqrt(np.mean((H @ out - Z) ** 2)))
    return model


def score(x: MetricVector, xhat: MetricVector) -> float:
    return (abs(x.x1 - xhat.x1) + abs(x.x2 - xhat.x2) + abs(x.x3 - xhat.x3)) / 3.0


def score_batch(X: np.ndarray, Xhat: np.ndarray) -> np.ndarray:
    return np.abs(np.asarray(X) - np.asarray(Xhat)).mean(axis=1)


@dataclass(frozen=True)
class IdsDecision:
    batch_id: int
    score: float
    label: Label
    gamma: float
    decide_time: float
    members: tuple[tuple[int, int], ...] = ()

    @property
    def is_attack(self) -> bool:
        return self.label is Label.ATTACK


def decide(scores: Sequence[float], gamma: float = GAMMA_DEFAULT, batch_id: int = 0,
           decide_time: float = 0.0, members: Iterable[tuple[int, int]] = (),
           batch_size: Optional[int] = 10) -> IdsDecision:
    if batch_size is not None and len(scores) != batch_size:
        raise ContractError(f"expected {batch_size} scores, got {len(scores)}")
    y = float(sum(scores) / len(scores))
    label = Label.ATTACK if y > gamma else Label.NORMAL
    return IdsDecision(batch_id, y, label, gamma, decide_time, tuple(members))


def evaluate(decisions: Iterable[IdsDecision], truth) -> ConfusionCounts:
    """Confusion counts against ground truth joined on (source, seq).

    ``truth`` is a GroundTruthLog or a mapping key -> Kind.
    """
    kinds = truth.kinds() if hasattr(truth, "kinds") else truth
    decisions = list(decisions)
    actual = [batch_is_attack(d.members, kinds) for d in decisions]
    return confusion((d.is_attack for d in decisions), actual)


@dataclass
class TrainingBuffer:
    capacity: int = TRAINING_SIZE
    vectors: list = field(default_factory=list)

    @property
    def full(self) -> bool:
        return len(self.vectors) >= self.capacity

    def add(self, x: MetricVector) -> bool:
        """Store a vector; True exactly once, when the buffer becomes full."""
        if self.full:
            return False
        self.vectors.append(x)
        return self.full


class Detector:
    """Stateful IDS as seen by the server: packets in, batch decisions out.

    The first ``training_size`` packets fill the training buffer and pass
    through unscored.  After that every packet gets a score from the window
    ending at it, and every ``batch_size`` scores become one decision.
    """

    def __init__(self, gamma: float = GAMMA_DEFAULT, batch_size: int = 10,
                 features: FeatureConfig = FeatureConfig(), training_size: int = TRAINING_SIZE,
                 seed: int = 0, layer_dims: Sequence[int] = (3, 12, 12, 3), reg: float = 1e-3,
                 model: Optional[AadrnnModel] = None):
        self.gamma = gamma
        self.batch_size = batch_size
        self.extractor = FeatureExtractor(features)
        self.training = TrainingBuffer(training_size)
        self.seed = seed
        self.layer_dims = tuple(layer_dims)
        self.reg = reg
        self.model = model
        self.trained_at: Optional[float] = None
        self._pending_scores: list[float] = []
        self._pending_keys: list[tuple[int, int]] = []
        self._next_batch = 0
        self.scored = 0
        self.discarded_pending = 0

    @property
    def trained(self) -> bool:
        return self.model is not None

    def process(self, batch: Sequence[tuple[float, PacketRecord]], now: float
                ) -> tuple[list[IdsDecision], list[PacketRecord]]:
        """Run one dequeued batch.  Returns the decisions completed and the
        packets that passed unscored during the training phase."""
        passed: list[PacketRecord] = []
        rows, keys = [], []
        push = self.extractor.push
        for arrival, packet in batch:
            x = push(arrival, packet.payload_len)
            if self.model is None:
                passed.append(packet)
                if self.training.add(x):
                    self.model = train(self.training.vectors, seed=self.seed,
                                       layer_dims=self.layer_dims, reg=self.reg)
                    self.trained_at = now
                    log.info("detector trained at t=%.3f residual=%.4g", now, self.model.residual)
            else:
                rows.append((x.x1, x.x2, x.x3))
                keys.append(packet.key)
        decisions: list[IdsDecision] = []
        if rows:
            X = np.array(rows)
            scores = score_batch(X, self.model.forward_batch(X))
            self.scored += len(rows)
            for s, key in zip(scores.tolist(), keys):
                self._pending_scores.append(s)
                self._pending_keys.append(key)
                if len(self._pending_scores) == self.batch_size:
                    decisions.append(decide(self._pending_scores, self.gamma, self._next_batch, now,
                                            self._pending_keys, self.batch_size))
                    self._next_batch += 1
                    self._pending_scores = []
                    self._pending_keys = []
        return decisions, passed

    def reset_stream(self) -> None:
        """Forget recent-traffic history and any partial batch (after a flush)."""
        self.extractor.reset()
        self.discarded_pending += len(self._pending_scores)
        self._pending_scores = []
        self._pending_keys = []
