"""Scenario configuration: dataclasses, validation and TOML loading."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

PROTOCOLS = ("AODV", "TAODV", "SDTAODV")
DATA_RATES = (1.0, 2.0, 5.5, 11.0)
CONTROL_CHANNELS = ("ideal", "inband")
LOAD_SCALING = ("none", "size", "interval")


class InvalidConfig(ValueError):
    """Raised with one diagnostic per offending field."""

    def __init__(self, problems: List[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class MobilityConfig:
    speed_min: float = 5.0
    speed_max: float = 15.0
    pause: float = 2.0
    tick: float = 1.0


@dataclass
class TrafficConfig:
    flows: int = 4
    packet_size: int = 512
    interval: float = 0.25
    start: float = 10.0
    # how offered load follows the link rate: grow the packet, shrink the interval, or neither
    load_scaling: str = "interval"


@dataclass
class LinkConfig:
    base_loss: float = 0.01
    rate_loss_slope: float = 0.01
    dist_loss_slope: float = 0.05
    mac_overhead: float = 0.001
    mac_header: int = 34
    backoff_per_frame: float = 0.0002
    collision_coeff: float = 0.0005
    max_retries: int = 3
    overhear_timeout: float = 0.5
    ideal_latency: float = 0.005


@dataclass
class TimerConfig:
    hello_interval: float = 1.0
    hello_jitter: float = 1.0
    allowed_hello_loss: int = 3
    active_route_timeout: float = 6.0
    rrep_lifetime: float = 6.0
    discovery_timeout: float = 1.0
    discovery_retries: int = 2
    rebroadcast_cap: int = 3
    buffer_capacity: int = 64
    flow_idle_timeout: float = 10.0
    controller_hello_interval: float = 1.0
    discovery_period: float = 5.0
    discovery_deadline: float = 2.0
    discovery_hold: float = 0.005


@dataclass
class TrustConfig:
    window: float = 10.0
    buckets: int = 10
    omega1: float = 0.0
    omega2: float = 1.0
    default: float = 0.5
    observation: bool = True


@dataclass
class ScenarioConfig:
    area: Tuple[float, float] = (5000.0, 5000.0)
    node_count: int = 25
    sim_duration: float = 900.0
    protocol: str = "SDTAODV"
    data_rate: float = 1.0
    malicious_fraction: float = 0.2
    p_drop: float = 0.8
    alpha: float = 1.0
    beta: float = 0.0
    max_hops: int = 10
    seed: int = 1
    radio_range: float = 1800.0
    control_channel: str = "inband"
    mobility: MobilityConfig = field(default_factory=MobilityConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    link: LinkConfig = field(default_factory=LinkConfig)
    timers: TimerConfig = field(default_factory=TimerConfig)
    trust: TrustConfig = field(default_factory=TrustConfig)

    def validate(self) -> "ScenarioConfig":
        problems = []

        def check(ok: bool, name: str, msg: str) -> None:
            if not ok:
                problems.append(f"{name}: {msg}")

        check(len(self.area) == 2 and min(self.area) > 0, "area", "needs two positive side lengths")
        check(self.node_count >= 2, "node_count", "must be >= 2")
        check(self.node_count <= 0xFFFE, "node_count", "node ids are 16-bit")
        check(self.sim_duration > 0, "sim_duration", "must be positive")
        check(self.protocol in PROTOCOLS, "protocol", f"must be one of {PROTOCOLS}")
        check(self.data_rate > 0, "data_rate", "must be positive (Mbps)")
        check(0.0 <= self.malicious_fraction <= 1.0, "malicious_fraction", "must lie in [0, 1]")
        check(0.0 <= self.p_drop <= 1.0, "p_drop", "must lie in [0, 1]")
        check(self.alpha >= 0 and self.beta >= 0 and self.alpha + self.beta > 0, "alpha/beta", "need alpha, beta >= 0 with a positive sum")
        check(self.max_hops >= 1, "max_hops", "must be >= 1")
        check(0 <= self.seed < 2**64, "seed", "must fit in u64")
        check(self.radio_range > 0, "radio_range", "must be positive")
        check(self.control_channel in CONTROL_CHANNELS, "control_channel", f"must be one of {CONTROL_CHANNELS}")
        m = self.mobility
        check(0 <= m.speed_min <= m.speed_max, "mobility.speed_min", "need 0 <= speed_min <= speed_max")
        check(m.pause >= 0, "mobility.pause", "must be >= 0")
        check(m.tick > 0, "mobility.tick", "must be positive")
        t = self.traffic
        check(t.flows >= 0, "traffic.flows", "must be >= 0")
        check(t.packet_size > 0, "traffic.packet_size", "must be positive")
        check(t.interval > 0, "traffic.interval", "must be positive")
        check(t.start >= 0, "traffic.start", "must be >= 0")
        check(t.load_scaling in LOAD_SCALING, "traffic.load_scaling", f"must be one of {LOAD_SCALING}")
        check(self.packet_size() <= 60000, "traffic.packet_size", "scaled packet exceeds the 16-bit frame length")
        lk = self.link
        for name in ("base_loss", "rate_loss_slope", "dist_loss_slope", "mac_overhead", "backoff_per_frame", "collision_coeff", "ideal_latency"):
            check(getattr(lk, name) >= 0, f"link.{name}", "must be >= 0")
        check(lk.overhear_timeout > 0, "link.overhear_timeout", "must be positive")
        check(lk.max_retries >= 0, "link.max_retries", "must be >= 0")
        tm = self.timers
        for f in fields(tm):
            v = getattr(tm, f.name)
            if f.name in ("discovery_retries", "hello_jitter"):
                check(v >= 0, f"timers.{f.name}", "must be >= 0")
            else:
                check(v > 0, f"timers.{f.name}", "must be positive")
        tr = self.trust
        check(tr.window > 0 and tr.buckets >= 1, "trust.window", "window and buckets must be positive")
        check(
            tr.omega1 >= 0 and tr.omega2 >= 0 and abs(tr.omega1 + tr.omega2 - 1.0) < 1e-9,
            "trust.omega1/omega2",
            "must be >= 0 and sum to 1",
        )
        check(0.0 <= tr.default <= 1.0, "trust.default", "must lie in [0, 1]")
        n_bad = self.malicious_count()
        check(n_bad < self.node_count / 2, "malicious_fraction", "malicious nodes must be fewer than half the nodes")
        if problems:
            raise InvalidConfig(problems)
        return self

    # -- derived values --------------------------------------------------

    def malicious_count(self) -> int:
        return int(round(self.malicious_fraction * self.node_count))

    def packet_size(self) -> int:
        if self.traffic.load_scaling == "size":
            return int(round(self.traffic.packet_size * self.data_rate))
        return self.traffic.packet_size

    def packet_interval(self) -> float:
        if self.traffic.load_scaling == "interval":
            return self.traffic.interval / self.data_rate
        return self.traffic.interval

    def to_dict(self) -> Dict[str, Any]:
        d = dataclasses.asdict(self)
        d["area"] = list(self.area)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **changes) -> "ScenarioConfig":
        return with_overrides(self, changes)


_SECTIONS = {
    "mobility": MobilityConfig,
    "traffic": TrafficConfig,
    "link": LinkConfig,
    "timers": TimerConfig,
    "trust": TrustConfig,
}


def _coerce(value, default, name: str, problems: List[str]):
    """Return value converted to the default's type, or the default after logging a problem."""
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        problems.append(f"{name}: expected true/false, got {value!r}")
    elif isinstance(default, int):
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        problems.append(f"{name}: expected an integer, got {value!r}")
    elif isinstance(default, float):
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        problems.append(f"{name}: expected a number, got {value!r}")
    elif isinstance(default, tuple):
        if isinstance(value, (list, tuple)) and len(value) == len(default) and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            return tuple(float(v) for v in value)
        problems.append(f"{name}: expected a list of {len(default)} numbers")
    elif isinstance(default, str):
        if isinstance(value, str):
            return value
        problems.append(f"{name}: expected a string, got {value!r}")
    else:
        return value
    return default


def from_dict(data: Dict[str, Any], base: Optional[ScenarioConfig] = None) -> ScenarioConfig:
    """Build a validated config from nested mappings; unknown keys are errors."""
    return with_overrides(base or ScenarioConfig(), data)


def with_overrides(base: ScenarioConfig, data: Dict[str, Any]) -> ScenarioConfig:
    problems: List[str] = []
    top = {}
    subs = {name: dataclasses.asdict(getattr(base, name)) for name in _SECTIONS}
    scalar_names = {f.name for f in fields(ScenarioConfig)} - set(_SECTIONS)
    for key, value in data.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                problems.append(f"{key}: expected a table")
                continue
            defaults = subs[key]
            for k, v in value.items():
                if k not in defaults:
                    problems.append(f"{key}.{k}: unknown field")
                    continue
                defaults[k] = _coerce(v, defaults[k], f"{key}.{k}", problems)
        elif "." in key and key.split(".", 1)[0] in _SECTIONS:
            sec, k = key.split(".", 1)
            if k not in subs[sec]:
                problems.append(f"{key}: unknown field")
                continue
            subs[sec][k] = _coerce(value, subs[sec][k], key, problems)
        elif key in scalar_names:
            if key == "protocol" and isinstance(value, str):
                value = value.upper().replace("-", "")
            top[key] = _coerce(value, getattr(base, key), key, problems)
        else:
            problems.append(f"{key}: unknown field")
    # coercion failures keep the default so validation can still report the rest
    cfg = dataclasses.replace(base, **top, **{k: _SECTIONS[k](**v) for k, v in subs.items()})
    try:
        cfg.validate()
    except InvalidConfig as exc:
        problems.extend(exc.problems)
    if problems:
        raise InvalidConfig(problems)
    return cfg


def load_toml(path: str | Path, base: Optional[ScenarioConfig] = None) -> ScenarioConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise InvalidConfig([f"{path}: {exc.strerror or exc}"]) from exc
    except tomllib.TOMLDecodeError as exc:
        raise InvalidConfig([f"{path}: {exc}"]) from exc
    return from_dict(data, base)
