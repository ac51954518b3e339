"""Scenario configuration, built-in presets and config-file loading."""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .ids import FeatureConfig, GAMMA_PRESETS
from .server import ServiceConfig
from .traffic import DeviceProfile


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


@dataclass
class TransportConfig:
    mode: str = "sim"
    latency_us: int = 200
    jitter_us: int = 0
    port: int = 5555
    rcvbuf: Optional[int] = None
    # live mode only: virtual seconds per wall second
    time_scale: float = 1.0


@dataclass
class IdsConfig:
    gamma: float = 0.3
    training_size: int = 500
    layer_dims: list = field(default_factory=lambda: [3, 12, 12, 3])
    reg: float = 1e-3
    features: FeatureConfig = field(default_factory=FeatureConfig)


@dataclass
class MitigationConfig:
    enabled: bool = False
    window_size: int = 20
    drop_duration: float = 30.0


@dataclass
class AttackPlan:
    # "scheduled": explicit (device_id, start, duration) intervals
    # "probabilistic": each compromised device draws per telemetry tick from `start`
    plan: str = "scheduled"
    intervals: list = field(default_factory=list)
    start: float = 0.0


@dataclass
class Scenario:
    name: str = "custom"
    seed: int = 0
    duration: float = 600.0
    devices: list = field(default_factory=list)
    attacks: AttackPlan = field(default_factory=AttackPlan)
    service: ServiceConfig = field(default_factory=ServiceConfig)
    ids: IdsConfig = field(default_factory=IdsConfig)
    mitigation: MitigationConfig = field(default_factory=MitigationConfig)
    transport: TransportConfig = field(default_factory=TransportConfig)
    sample_period: float = 0.1
    buffer_capacity: Optional[int] = None

    def validate(self) -> "Scenario":
        if self.duration <= 0:
            raise ConfigError("duration: must be > 0")
        if not self.devices:
            raise ConfigError("devices: at least one device required")
        ids = [d.device_id for d in self.devices]
        if len(set(ids)) != len(ids):
            raise ConfigError("devices: duplicate device_id")
        if self.transport.mode not in ("sim", "live"):
            raise ConfigError(f"transport.mode: expected 'sim' or 'live', got {self.transport.mode!r}")
        if self.transport.latency_us < 0:
            raise ConfigError("transport.latency_us: must be >= 0")
        if not 0 < self.transport.port < 65536 and self.transport.port != 0:
            raise ConfigError("transport.port: out of range")
        if self.transport.time_scale <= 0:
            raise ConfigError("transport.time_scale: must be > 0")
        if self.attacks.plan not in ("scheduled", "probabilistic"):
            raise ConfigError(f"attacks.plan: unknown plan {self.attacks.plan!r}")
        by_id = {d.device_id: d for d in self.devices}
        for i, iv in enumerate(self.attacks.intervals):
            if len(iv) != 3:
                raise ConfigError(f"attacks.intervals[{i}]: expected [device_id, start, duration]")
            dev, start, dur = iv
            if dev not in by_id or not by_id[dev].compromised:
                raise ConfigError(f"attacks.intervals[{i}]: device {dev} is not a compromised device")
            if start < 0 or dur < 0:
                raise ConfigError(f"attacks.intervals[{i}]: start and duration must be >= 0")
        if self.sample_period <= 0:
            raise ConfigError("sample_period: must be > 0")
        if self.ids.layer_dims[0] != 3 or self.ids.layer_dims[-1] != 3:
            raise ConfigError("ids.layer_dims: input and output width must be 3")
        if self.ids.training_size < 1:
            raise ConfigError("ids.training_size: must be >= 1")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def resolved(self) -> "Scenario":
        """Copy with unset device phases drawn from the seed."""
        sc = copy.deepcopy(self)
        rng = np.random.default_rng([self.seed, 0xF10D])
        for d in sc.devices:
            draw = float(rng.uniform(0.0, d.telemetry_period))
            if d.phase is None or d.phase < 0:
                d.phase = round(draw, 6)
        return sc


def _two_devices(attack_rate: float = 1000.0) -> list[DeviceProfile]:
    # phase -1 means "draw from the seed" (see Scenario.resolved)
    return [
        DeviceProfile(device_id=1, phase=-1.0),
        DeviceProfile(device_id=2, compromised=True, attack_rate=attack_rate, phase=-1.0),
    ]


ATTACK_START = 300.0
OVERLOADED = dict(ids_service_time=0.01)  # mu = 100/s, a tenth of the flood rate


def _preset(name: str) -> Scenario:
    if name == "benign-only":
        # 500 packets of training at 2 packets/s, then 120 s of scoring
        return Scenario(name, duration=250.0 + 120.0, devices=_two_devices())
    if name in ("attack10-nomitigation", "attack10-mitigation", "attack60-nomitigation", "attack60-mitigation"):
        length = 10.0 if name.startswith("attack10") else 60.0
        mitigated = name.endswith("-mitigation")
        service = ServiceConfig() if mitigated else ServiceConfig(**OVERLOADED)
        if name == "attack60-nomitigation":
            service = ServiceConfig(**OVERLOADED, degrade_above=5000, degrade_factor=2.0)
        duration = 600.0 if length == 10.0 else 1000.0
        return Scenario(
            name, duration=duration, devices=_two_devices(),
            attacks=AttackPlan("scheduled", [[2, ATTACK_START, length]]),
            service=service, mitigation=MitigationConfig(enabled=mitigated),
        )
    if name == "probabilistic":
        return Scenario(
            name, duration=600.0, devices=_two_devices(),
            attacks=AttackPlan("probabilistic", start=ATTACK_START),
            mitigation=MitigationConfig(enabled=True),
        )
    raise ConfigError(f"scenario: unknown preset {name!r} (choose from {', '.join(PRESETS)})")


PRESETS = (
    "benign-only",
    "attack10-nomitigation",
    "attack10-mitigation",
    "attack60-nomitigation",
    "attack60-mitigation",
    "probabilistic",
)


def preset(name: str, **overrides) -> Scenario:
    sc = _preset(name)
    for k, v in overrides.items():
        setattr(sc, k, v)
    return sc.validate()


_SECTIONS = {
    "service": ServiceConfig,
    "mitigation": MitigationConfig,
    "transport": TransportConfig,
    "attacks": AttackPlan,
}


def _apply(obj, data: dict, path: str) -> None:
    fields = {f.name: f for f in dataclasses.fields(obj)}
    for key, value in data.items():
        where = f"{path}.{key}" if path else key
        if key not in fields:
            raise ConfigError(f"{where}: unknown key")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current) and isinstance(value, dict):
            if isinstance(current, FeatureConfig):
                try:
                    setattr(obj, key, dataclasses.replace(current, **value))
                except TypeError as exc:
                    raise ConfigError(f"{where}: {exc}") from None
            else:
                _apply(current, value, where)
        else:
            setattr(obj, key, value)
    if hasattr(obj, "__post_init__"):
        try:
            obj.__post_init__()
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from None


def _device(d: Any, i: int) -> DeviceProfile:
    if not isinstance(d, dict):
        raise ConfigError(f"devices[{i}]: expected a mapping")
    try:
        return DeviceProfile(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"devices[{i}]: {exc}") from None


def from_dict(data: dict, base: Optional[Scenario] = None) -> Scenario:
    if not isinstance(data, dict):
        raise ConfigError("<root>: expected a mapping")
    data = dict(data)
    if base is None:
        base = _preset(data.pop("scenario")) if "scenario" in data else Scenario()
    else:
        data.pop("scenario", None)
    sc = copy.deepcopy(base)
    if "devices" in data:
        devices = data.pop("devices")
        if not isinstance(devices, list):
            raise ConfigError("devices: expected a list")
        sc.devices = [_device(d, i) for i, d in enumerate(devices)]
    if "ids" in data:
        ids = data.pop("ids")
        if not isinstance(ids, dict):
            raise ConfigError("ids: expected a mapping")
        gamma = ids.get("gamma")
        if isinstance(gamma, str):
            if gamma not in GAMMA_PRESETS:
                raise ConfigError(f"ids.gamma: unknown preset {gamma!r}")
            ids = {**ids, "gamma": GAMMA_PRESETS[gamma]}
        _apply(sc.ids, ids, "ids")
    for key in list(data):
        if key in _SECTIONS and not isinstance(data[key], dict):
            raise ConfigError(f"{key}: expected a mapping")
    _apply(sc, data, "")
    return sc.validate()


def load_config(path) -> Scenario:
    p = Path(path)
    try:
        data = yaml.safe_load(p.read_text())
    except OSError as exc:
        raise ConfigError(f"<file>: cannot read {p}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"<file>: {exc}") from None
    return from_dict(data or {})
