"""Experiment configuration: YAML schema, defaults and validation.

Defaults reproduce the evaluation setup: alpha=100, capacity
(300, 250, 250, 250), the four request levels, 2000 timeslots.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .admission import RESOURCES, PricingParams, Scheduler
from .credit import CreditPolicy


class ConfigError(ValueError):
    def __init__(self, key: str, message: str) -> None:
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class LevelProfile:
    cpu: tuple[int, int]
    memory: tuple[int, int]
    storage: tuple[int, int]
    bandwidth: tuple[int, int]
    lifetime: tuple[int, int]

    def demand_ranges(self) -> tuple[tuple[int, int], ...]:
        return (self.cpu, self.memory, self.storage, self.bandwidth)

    def max_demand(self) -> tuple[int, ...]:
        return tuple(hi for _, hi in self.demand_ranges())


DEFAULT_PROFILES: dict[int, LevelProfile] = {
    1: LevelProfile((1, 5), (1, 5), (1, 5), (1, 5), (1, 5)),
    2: LevelProfile((10, 15), (5, 10), (5, 10), (1, 10), (1, 5)),
    3: LevelProfile((1, 5), (1, 5), (1, 5), (1, 5), (1, 5)),
    4: LevelProfile((1, 3), (1, 3), (1, 3), (1, 3), (1, 3)),
}

# bytes per timeslot, used only to size activity events
APP_PROFILES: dict[str, float] = {
    "blockchain_tx": 0.54e3,
    "face_recognition": 1.64e6,
    "nlp": 8.12e3,
}


@dataclass(frozen=True)
class RequestsPerSlot:
    distribution: str = "uniform"
    low: int = 5
    high: int = 15

    def draw(self, rng: np.random.Generator) -> int:
        if self.distribution == "constant":
            return self.low
        return int(rng.integers(self.low, self.high + 1))


@dataclass(frozen=True)
class FleetConfig:
    devices_per_level: int = 25
    legacy_devices: int = 10
    initial_coins_cents: int = 20000
    misbehaving_fraction: float = 0.0
    misbehaving_factor: float = 2.0
    network_port: int = 42024
    app_profile: str = "blockchain_tx"


@dataclass(frozen=True)
class ActivityConfig:
    event_prob: float = 0.5
    anomaly_prob: float = 0.01
    learning_window: int = 20
    destinations_per_device: int = 2


@dataclass(frozen=True)
class LedgerConfig:
    difficulty_bits: int = 12
    block_cap: int = 208
    chain_id: str = "edgechain-sim"
    edge_reserve_cents: int = 100_000_000


@dataclass(frozen=True)
class SweepConfig:
    beta_values: tuple[float, ...] = tuple(round(1.0 + 0.05 * i, 2) for i in range(41))
    scales: tuple[float, ...] = (1.0, 0.8, 0.6, 0.4)
    schedulers: tuple[Scheduler, ...] = (Scheduler.PRICING, Scheduler.FCFS, Scheduler.PRIORITY)
    compare_beta: float = 1.35


@dataclass(frozen=True)
class ExperimentConfig:
    seeds: tuple[int, ...] = (1, 2, 3)
    timeslots: int = 2000
    alpha: float = 100.0
    beta: float = 1.35
    capacity: tuple[float, ...] = (300.0, 250.0, 250.0, 250.0)
    resource_scale: float = 1.0
    scheduler: Scheduler = Scheduler.PRICING
    requests_per_slot: RequestsPerSlot = field(default_factory=RequestsPerSlot)
    level_weights: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)
    profiles: dict[int, LevelProfile] = field(default_factory=lambda: dict(DEFAULT_PROFILES))
    fleet: FleetConfig = field(default_factory=FleetConfig)
    activity: ActivityConfig = field(default_factory=ActivityConfig)
    credit: CreditPolicy = field(default_factory=CreditPolicy)
    ledger: LedgerConfig = field(default_factory=LedgerConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    @property
    def seed(self) -> int:
        return self.seeds[0]

    @property
    def pricing(self) -> PricingParams:
        return PricingParams(self.alpha, self.beta)

    @property
    def total(self) -> tuple[float, ...]:
        # rounded so that 0.4 * 300 is exactly 120.0
        return tuple(round(w * self.resource_scale, 9) for w in self.capacity)

    def with_(self, **kw: Any) -> ExperimentConfig:
        return replace(self, **kw)

    def to_dict(self) -> dict[str, Any]:
        return to_document(self)


def _range(value: Any, key: str) -> tuple[int, int]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(key, f"expected [min, max], got {value!r}")
    lo, hi = value
    if not all(isinstance(x, int) and not isinstance(x, bool) for x in (lo, hi)) or lo > hi or lo < 0:
        raise ConfigError(key, f"expected nonnegative integers with min <= max, got {value!r}")
    return int(lo), int(hi)


def _cents(value: Any, key: str) -> int:
    try:
        amount = float(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a coin amount, got {value!r}") from None
    if amount < 0:
        raise ConfigError(key, "must be >= 0")
    return round(amount * 100)


def _number(d: dict, key: str, path: str, default: Any, kind: type = float, *, lo: float | None = None,
            lo_strict: bool = False) -> Any:
    if key not in d:
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (kind is int and not isinstance(v, int)):
        raise ConfigError(f"{path}.{key}" if path else key, f"expected {kind.__name__}, got {v!r}")
    if lo is not None and (v <= lo if lo_strict else v < lo):
        raise ConfigError(f"{path}.{key}" if path else key, f"must be {'>' if lo_strict else '>='} {lo}")
    return kind(v)


def _section(doc: dict, key: str) -> dict:
    v = doc.get(key, {})
    if v is None:
        return {}
    if not isinstance(v, dict):
        raise ConfigError(key, "expected a mapping")
    return v


def _check_keys(d: dict, allowed: set[str], path: str) -> None:
    extra = set(d) - allowed
    if extra:
        name = sorted(extra)[0]
        raise ConfigError(f"{path}.{name}" if path else name, "unknown key")


def parse_beta_values(v: Any) -> tuple[float, ...]:
    if isinstance(v, dict):
        _check_keys(v, {"start", "stop", "step"}, "sweep.beta_values")
        try:
            start, stop, step = float(v["start"]), float(v["stop"]), float(v["step"])
        except KeyError as exc:
            raise ConfigError(f"sweep.beta_values.{exc.args[0]}", "missing") from None
        if step <= 0 or stop < start:
            raise ConfigError("sweep.beta_values", "need step > 0 and stop >= start")
        n = int(round((stop - start) / step))
        return tuple(round(start + step * i, 10) for i in range(n + 1))
    if isinstance(v, (list, tuple)) and v:
        return tuple(float(x) for x in v)
    raise ConfigError("sweep.beta_values", f"expected a list or {{start, stop, step}}, got {v!r}")


def from_document(doc: dict[str, Any], *, require_system: bool = True) -> ExperimentConfig:
    """Build a validated config from a parsed YAML document.

    ``system.alpha`` and ``system.capacity`` must be present in a config
    file; everything else falls back to the defaults.
    """
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a mapping")
    _check_keys(doc, {"seed", "seeds", "timeslots", "scheduler", "system", "pricing", "requests_per_slot",
                      "level_weights", "request_profiles", "fleet", "activity", "credit", "ledger", "sweep"}, "")
    base = ExperimentConfig()

    if "seeds" in doc and "seed" in doc:
        raise ConfigError("seed", "give either seed or seeds, not both")
    seeds = base.seeds
    if "seed" in doc:
        seeds = (_number(doc, "seed", "", 0, int, lo=0),)
    elif "seeds" in doc:
        s = doc["seeds"]
        if not isinstance(s, list) or not s or not all(isinstance(x, int) and x >= 0 for x in s):
            raise ConfigError("seeds", "expected a nonempty list of nonnegative integers")
        seeds = tuple(s)
    timeslots = _number(doc, "timeslots", "", base.timeslots, int, lo=1)
    try:
        scheduler = Scheduler.parse(doc.get("scheduler", base.scheduler.value))
    except ValueError as exc:
        raise ConfigError("scheduler", str(exc)) from None

    system = _section(doc, "system")
    _check_keys(system, {"alpha", "capacity", "resource_scale"}, "system")
    if require_system:
        for k in ("alpha", "capacity"):
            if k not in system:
                raise ConfigError(f"system.{k}", "missing required key")
    alpha = _number(system, "alpha", "system", base.alpha, lo=1, lo_strict=True)
    capacity = system.get("capacity", list(base.capacity))
    if (not isinstance(capacity, list) or len(capacity) != len(RESOURCES)
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) and x > 0 for x in capacity)):
        raise ConfigError("system.capacity", f"expected {len(RESOURCES)} positive numbers {list(RESOURCES)}")
    scale = _number(system, "resource_scale", "system", base.resource_scale, lo=0, lo_strict=True)

    pricing = _section(doc, "pricing")
    _check_keys(pricing, {"beta"}, "pricing")
    beta = _number(pricing, "beta", "pricing", base.beta, lo=1)

    rps_doc = doc.get("requests_per_slot", {})
    if isinstance(rps_doc, int) and not isinstance(rps_doc, bool):
        rps = RequestsPerSlot("constant", rps_doc, rps_doc)
    elif isinstance(rps_doc, dict):
        _check_keys(rps_doc, {"distribution", "low", "high", "value"}, "requests_per_slot")
        dist = rps_doc.get("distribution", "uniform")
        if dist == "constant":
            v = _number(rps_doc, "value", "requests_per_slot", 0, int, lo=0)
            rps = RequestsPerSlot("constant", v, v)
        elif dist == "uniform":
            lo = _number(rps_doc, "low", "requests_per_slot", 5, int, lo=0)
            hi = _number(rps_doc, "high", "requests_per_slot", 15, int, lo=0)
            if hi < lo:
                raise ConfigError("requests_per_slot.high", "must be >= low")
            rps = RequestsPerSlot("uniform", lo, hi)
        else:
            raise ConfigError("requests_per_slot.distribution", f"unknown distribution {dist!r}")
    else:
        raise ConfigError("requests_per_slot", "expected an integer or a mapping")

    weights = doc.get("level_weights", list(base.level_weights))
    if (not isinstance(weights, list) or len(weights) != 4
            or not all(isinstance(w, (int, float)) and w >= 0 for w in weights) or sum(weights) <= 0):
        raise ConfigError("level_weights", "expected 4 nonnegative weights with positive sum")

    profiles = dict(DEFAULT_PROFILES)
    prof_doc = _section(doc, "request_profiles")
    for lvl, p in prof_doc.items():
        key = f"request_profiles.{lvl}"
        if lvl not in (1, 2, 3, 4) or not isinstance(p, dict):
            raise ConfigError(key, "levels are 1..4, each a mapping")
        _check_keys(p, {*RESOURCES, "lifetime"}, key)
        cur = asdict(profiles[lvl])
        for name in (*RESOURCES, "lifetime"):
            if name in p:
                cur[name] = _range(p[name], f"{key}.{name}")
        if cur["lifetime"][0] < 1:
            raise ConfigError(f"{key}.lifetime", "lifetime must be >= 1")
        profiles[lvl] = LevelProfile(**{k: tuple(v) for k, v in cur.items()})

    f = _section(doc, "fleet")
    _check_keys(f, {"devices_per_level", "legacy_devices", "initial_coins", "misbehaving_fraction",
                    "misbehaving_factor", "network_port", "app_profile"}, "fleet")
    app = f.get("app_profile", base.fleet.app_profile)
    if app not in APP_PROFILES:
        raise ConfigError("fleet.app_profile", f"expected one of {sorted(APP_PROFILES)}")
    frac = _number(f, "misbehaving_fraction", "fleet", base.fleet.misbehaving_fraction, lo=0)
    if frac > 1:
        raise ConfigError("fleet.misbehaving_fraction", "must be <= 1")
    fleet = FleetConfig(
        devices_per_level=_number(f, "devices_per_level", "fleet", base.fleet.devices_per_level, int, lo=1),
        legacy_devices=_number(f, "legacy_devices", "fleet", base.fleet.legacy_devices, int, lo=0),
        initial_coins_cents=_cents(f["initial_coins"], "fleet.initial_coins") if "initial_coins" in f
        else base.fleet.initial_coins_cents,
        misbehaving_fraction=frac,
        misbehaving_factor=_number(f, "misbehaving_factor", "fleet", base.fleet.misbehaving_factor, lo=1),
        network_port=_number(f, "network_port", "fleet", base.fleet.network_port, int, lo=1),
        app_profile=app,
    )

    a = _section(doc, "activity")
    _check_keys(a, {"event_prob", "anomaly_prob", "learning_window", "destinations_per_device"}, "activity")
    activity = ActivityConfig(
        event_prob=_number(a, "event_prob", "activity", base.activity.event_prob, lo=0),
        anomaly_prob=_number(a, "anomaly_prob", "activity", base.activity.anomaly_prob, lo=0),
        learning_window=_number(a, "learning_window", "activity", base.activity.learning_window, int, lo=0),
        destinations_per_device=_number(a, "destinations_per_device", "activity",
                                        base.activity.destinations_per_device, int, lo=1),
    )
    for k in ("event_prob", "anomaly_prob"):
        if getattr(activity, k) > 1:
            raise ConfigError(f"activity.{k}", "must be a probability")

    c = _section(doc, "credit")
    _check_keys(c, {"initial_credit", "max_credit", "eta", "price_threshold_factor", "freq_limit",
                    "freq_window", "delta_good", "delta_bad", "refund_cap_multiple"}, "credit")
    bp = base.credit
    try:
        credit = CreditPolicy(
            initial_credit=_number(c, "initial_credit", "credit", bp.initial_credit, int, lo=0),
            max_credit=_number(c, "max_credit", "credit", bp.max_credit, int, lo=0),
            eta=_number(c, "eta", "credit", bp.eta, lo=0),
            price_threshold_factor=_number(c, "price_threshold_factor", "credit", bp.price_threshold_factor,
                                           lo=0, lo_strict=True),
            freq_limit=_number(c, "freq_limit", "credit", bp.freq_limit, int, lo=1),
            freq_window=_number(c, "freq_window", "credit", bp.freq_window, int, lo=1),
            delta_good=_number(c, "delta_good", "credit", bp.delta_good, int, lo=0),
            delta_bad=_number(c, "delta_bad", "credit", bp.delta_bad, int),
            refund_cap_multiple=_number(c, "refund_cap_multiple", "credit", bp.refund_cap_multiple, lo=0),
        )
    except ValueError as exc:
        raise ConfigError("credit", str(exc)) from None

    lg = _section(doc, "ledger")
    _check_keys(lg, {"difficulty_bits", "block_cap", "chain_id", "edge_reserve"}, "ledger")
    bits = _number(lg, "difficulty_bits", "ledger", base.ledger.difficulty_bits, int, lo=0)
    if bits > 32:
        raise ConfigError("ledger.difficulty_bits", "must be <= 32")
    chain_id = lg.get("chain_id", base.ledger.chain_id)
    if not isinstance(chain_id, str) or not chain_id:
        raise ConfigError("ledger.chain_id", "expected a nonempty string")
    ledger = LedgerConfig(
        difficulty_bits=bits,
        block_cap=_number(lg, "block_cap", "ledger", base.ledger.block_cap, int, lo=1),
        chain_id=chain_id,
        edge_reserve_cents=_cents(lg["edge_reserve"], "ledger.edge_reserve") if "edge_reserve" in lg
        else base.ledger.edge_reserve_cents,
    )

    sw = _section(doc, "sweep")
    _check_keys(sw, {"beta_values", "scales", "schedulers", "compare_beta"}, "sweep")
    betas = parse_beta_values(sw["beta_values"]) if "beta_values" in sw else base.sweep.beta_values
    if any(b < 1 for b in betas):
        raise ConfigError("sweep.beta_values", "every beta must be >= 1")
    scales = sw.get("scales", list(base.sweep.scales))
    if not isinstance(scales, list) or not scales or not all(isinstance(x, (int, float)) and x > 0 for x in scales):
        raise ConfigError("sweep.scales", "expected a nonempty list of positive fractions")
    try:
        scheds = tuple(Scheduler.parse(s) for s in sw.get("schedulers", [s.value for s in base.sweep.schedulers]))
    except ValueError as exc:
        raise ConfigError("sweep.schedulers", str(exc)) from None
    sweep = SweepConfig(betas, tuple(float(x) for x in scales), scheds,
                        _number(sw, "compare_beta", "sweep", base.sweep.compare_beta, lo=1))

    return ExperimentConfig(
        seeds=seeds, timeslots=timeslots, alpha=alpha, beta=beta,
        capacity=tuple(float(x) for x in capacity), resource_scale=scale, scheduler=scheduler,
        requests_per_slot=rps, level_weights=tuple(float(w) for w in weights), profiles=profiles,
        fleet=fleet, activity=activity, credit=credit, ledger=ledger, sweep=sweep,
    )


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"invalid YAML: {exc}") from None
    return from_document(doc if doc is not None else {})


def to_document(cfg: ExperimentConfig) -> dict[str, Any]:
    """Inverse of ``from_document``; round-trips exactly."""
    return {
        "seeds": list(cfg.seeds),
        "timeslots": cfg.timeslots,
        "scheduler": cfg.scheduler.value,
        "system": {"alpha": cfg.alpha, "capacity": list(cfg.capacity), "resource_scale": cfg.resource_scale},
        "pricing": {"beta": cfg.beta},
        "requests_per_slot": {"distribution": cfg.requests_per_slot.distribution,
                              **({"value": cfg.requests_per_slot.low}
                                 if cfg.requests_per_slot.distribution == "constant"
                                 else {"low": cfg.requests_per_slot.low, "high": cfg.requests_per_slot.high})},
        "level_weights": list(cfg.level_weights),
        "request_profiles": {lvl: {k: list(v) for k, v in asdict(p).items()} for lvl, p in cfg.profiles.items()},
        "fleet": {
            "devices_per_level": cfg.fleet.devices_per_level,
            "legacy_devices": cfg.fleet.legacy_devices,
            "initial_coins": cfg.fleet.initial_coins_cents / 100,
            "misbehaving_fraction": cfg.fleet.misbehaving_fraction,
            "misbehaving_factor": cfg.fleet.misbehaving_factor,
            "network_port": cfg.fleet.network_port,
            "app_profile": cfg.fleet.app_profile,
        },
        "activity": asdict(cfg.activity),
        "credit": asdict(cfg.credit),
        "ledger": {
            "difficulty_bits": cfg.ledger.difficulty_bits,
            "block_cap": cfg.ledger.block_cap,
            "chain_id": cfg.ledger.chain_id,
            "edge_reserve": cfg.ledger.edge_reserve_cents / 100,
        },
        "sweep": {
            "beta_values": list(cfg.sweep.beta_values),
            "scales": list(cfg.sweep.scales),
            "schedulers": [s.value for s in cfg.sweep.schedulers],
            "compare_beta": cfg.sweep.compare_beta,
        },
    }


def dump_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(copy.deepcopy(to_document(cfg)), sort_keys=False))
